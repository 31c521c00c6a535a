use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Detectors, LabelScore, LabelSet, TaskName, TrainedClassifier};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureVector, Featurizer};
use crate::hashing::sha256_hex;
use crate::judge::SentenceJudge;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub task: TaskName,
    pub file: String,
    pub threshold: f64,
    pub data_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub feature_config: FeatureConfig,
    pub tasks: Vec<BundleEntry>,
}

fn score(head: &TrainedClassifier, features: &FeatureVector) -> Result<Option<f64>> {
    let s = head.score_features(features)?;
    Ok(head.decide(s).then_some(s))
}

/// Runs the severe head first and returns early when it fires; otherwise
/// evaluates every concern, state and empathy head present.
pub fn detect_all(
    heads: &BTreeMap<TaskName, TrainedClassifier>,
    featurizer: &Featurizer,
    text: &str,
) -> Result<LabelSet> {
    let severe = heads
        .get(&TaskName::Severe)
        .ok_or_else(|| Error::InvalidInput("bundle has no severe head; the safety gate is mandatory".into()))?;
    severe.check_featurizer(featurizer)?;
    let features = featurizer.featurize(text)?;
    let severe_score = severe.score_features(&features)?;
    if severe.decide(severe_score) {
        return Ok(LabelSet::severe(severe_score));
    }
    let mut positives = Vec::new();
    for task in TaskName::STATES.iter().chain(TaskName::CONCERNS.iter()) {
        if let Some(head) = heads.get(task) {
            head.check_featurizer(featurizer)?;
            if let Some(s) = score(head, &features)? {
                positives.push((*task, s));
            }
        }
    }
    let mut set = LabelSet::from_positives(severe_score, positives);
    if let Some(head) = heads.get(&TaskName::Empathy) {
        head.check_featurizer(featurizer)?;
        let s = head.score_features(&features)?;
        if head.decide(s) {
            set.empathy = Some(LabelScore {
                task: TaskName::Empathy,
                score: s,
            });
        }
    }
    Ok(set)
}

/// A directory of per-task models sharing one featurizer.
pub struct ClassifierBundle {
    featurizer: Arc<Featurizer>,
    heads: BTreeMap<TaskName, TrainedClassifier>,
    manifest_hash: String,
}

impl ClassifierBundle {
    pub fn new(featurizer: Arc<Featurizer>, heads: Vec<TrainedClassifier>) -> Result<Self> {
        let config = featurizer.config();
        let mut map = BTreeMap::new();
        for h in heads {
            h.check_featurizer(&featurizer)?;
            if map.insert(h.task, h).is_some() {
                return Err(Error::InvalidInput("duplicate task in bundle".into()));
            }
        }
        if !map.contains_key(&TaskName::Severe) {
            return Err(Error::InvalidInput("bundle has no severe head; the safety gate is mandatory".into()));
        }
        let manifest = Self::manifest_for(&config, &map);
        let manifest_hash = sha256_hex(serde_json::to_string_pretty(&manifest)?.as_bytes());
        Ok(Self {
            featurizer,
            heads: map,
            manifest_hash,
        })
    }

    fn manifest_for(config: &FeatureConfig, heads: &BTreeMap<TaskName, TrainedClassifier>) -> BundleManifest {
        BundleManifest {
            feature_config: config.clone(),
            tasks: heads
                .values()
                .map(|h| BundleEntry {
                    task: h.task,
                    file: format!("{}.json", h.task.file_stem()),
                    threshold: h.threshold,
                    data_hash: h.data_hash.clone(),
                })
                .collect(),
        }
    }

    pub fn manifest(&self) -> BundleManifest {
        Self::manifest_for(&self.featurizer.config(), &self.heads)
    }

    pub fn manifest_hash(&self) -> &str {
        &self.manifest_hash
    }

    pub fn featurizer(&self) -> &Arc<Featurizer> {
        &self.featurizer
    }

    pub fn head(&self, task: TaskName) -> Option<&TrainedClassifier> {
        self.heads.get(&task)
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskName> + '_ {
        self.heads.keys().copied()
    }

    /// A per-sentence judge backed by one head of this bundle.
    pub fn judge(&self, task: TaskName) -> Option<ClassifierJudge> {
        self.heads
            .get(&task)
            .map(|h| ClassifierJudge::new(Arc::new(h.clone()), self.featurizer.clone()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        for (entry, head) in manifest.tasks.iter().zip(self.heads.values()) {
            fs::write(dir.join(&entry.file), serde_json::to_vec(head)?)?;
        }
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Loads a saved bundle. `featurizer` must reproduce the manifest's
    /// feature configuration.
    pub fn load(dir: &Path, featurizer: Arc<Featurizer>) -> Result<Self> {
        let raw = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: BundleManifest = serde_json::from_str(&raw)?;
        let actual = featurizer.config();
        if manifest.feature_config != actual {
            return Err(Error::FeatureMismatch {
                expected: manifest.feature_config.to_string(),
                actual: actual.to_string(),
            });
        }
        let mut heads = Vec::with_capacity(manifest.tasks.len());
        for entry in &manifest.tasks {
            let head: TrainedClassifier = serde_json::from_slice(&fs::read(dir.join(&entry.file))?)?;
            if head.task != entry.task {
                return Err(Error::InvalidInput(format!("{} holds task {} (manifest says {})", entry.file, head.task, entry.task)));
            }
            heads.push(head);
        }
        let bundle = Self::new(featurizer, heads)?;
        if bundle.manifest_hash != sha256_hex(raw.as_bytes()) {
            tracing::warn!(dir = %dir.display(), "manifest was edited after saving; hash recomputed");
        }
        Ok(bundle)
    }
}

impl Detectors for ClassifierBundle {
    fn detect(&self, text: &str) -> Result<LabelSet> {
        detect_all(&self.heads, &self.featurizer, text)
    }

    fn fingerprint(&self) -> String {
        self.manifest_hash.clone()
    }
}

pub struct ClassifierJudge {
    classifier: Arc<TrainedClassifier>,
    featurizer: Arc<Featurizer>,
    name: String,
}

impl ClassifierJudge {
    pub fn new(classifier: Arc<TrainedClassifier>, featurizer: Arc<Featurizer>) -> Self {
        let name = format!("classifier:{}", classifier.task);
        Self {
            classifier,
            featurizer,
            name,
        }
    }
}

impl SentenceJudge for ClassifierJudge {
    fn name(&self) -> &str {
        &self.name
    }

    fn judge(&self, sentence: &str) -> Result<bool> {
        Ok(super::predict(&self.classifier, &self.featurizer, sentence)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{train_task, ForestConfig, LabeledExample, TrainConfig};
    use crate::features::{IdentityTranslator, KeywordEncoder, Lexicon};

    fn featurizer() -> Arc<Featurizer> {
        let lex = Lexicon::from_json_str(r#"{"x":["zzz"]}"#).unwrap();
        Arc::new(Featurizer::new(
            Arc::new(KeywordEncoder::new(&["ending", "money", "worried", "fine"])),
            Arc::new(lex),
        ))
    }

    fn head(task: TaskName, marker: &str, f: &Featurizer) -> TrainedClassifier {
        let mut ex = Vec::new();
        for i in 0..12 {
            ex.push(LabeledExample::new(format!("{marker} {i}"), true));
            ex.push(LabeledExample::new(format!("fine {i}"), false));
        }
        let cfg = TrainConfig {
            forest: ForestConfig {
                n_trees: 15,
                ..ForestConfig::default()
            },
            ..TrainConfig::default()
        };
        train_task(task, &ex, f, &cfg, &IdentityTranslator).unwrap().0
    }

    fn bundle() -> ClassifierBundle {
        let f = featurizer();
        let heads = vec![
            head(TaskName::Severe, "ending", &f),
            head(TaskName::LifestressFinance, "money", &f),
            head(TaskName::Anxiety, "worried", &f),
        ];
        ClassifierBundle::new(f, heads).unwrap()
    }

    #[test]
    fn detects_finance_and_anxiety() {
        let set = bundle().detect("worried about money").unwrap();
        assert!(!set.severe);
        let tasks: Vec<TaskName> = set.labels().map(|l| l.task).collect();
        assert_eq!(tasks, vec![TaskName::Anxiety, TaskName::LifestressFinance]);
    }

    #[test]
    fn severe_short_circuits() {
        let set = bundle().detect("ending it, worried about money").unwrap();
        assert!(set.severe);
        assert!(set.is_empty());
    }

    #[test]
    fn nothing_detected_is_empty() {
        let set = bundle().detect("all fine").unwrap();
        assert!(!set.severe && set.is_empty());
    }

    #[test]
    fn missing_severe_head_is_error() {
        let f = featurizer();
        let h = head(TaskName::Anxiety, "worried", &f);
        assert!(ClassifierBundle::new(f.clone(), vec![h.clone()]).is_err());
        let heads: BTreeMap<TaskName, TrainedClassifier> = [(TaskName::Anxiety, h)].into();
        assert!(detect_all(&heads, &f, "worried").is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let b = bundle();
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let back = ClassifierBundle::load(dir.path(), featurizer()).unwrap();
        assert_eq!(back.manifest_hash(), b.manifest_hash());
        assert_eq!(back.detect("worried").unwrap(), b.detect("worried").unwrap());
        let other = Arc::new(Featurizer::new(Arc::new(KeywordEncoder::new(&["a"])), Arc::new(Lexicon::demo())));
        assert!(ClassifierBundle::load(dir.path(), other).is_err());
    }
}
