use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::{ForestConfig, RandomForest};
use super::metrics::{Confusion, FoldMetrics, Metrics};
use super::{LabeledExample, TaskName};
use crate::error::{Error, Result};
use crate::features::{balance_dataset, FeatureConfig, FeatureVector, Featurizer, RoundTripTranslator};
use crate::hashing::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Fixed { threshold: f64 },
    MaxF1,
    /// Highest recall whose precision is at least `floor`; falls back to
    /// `MaxF1` when no threshold reaches the floor.
    MaxRecallAtPrecision { floor: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::MaxRecallAtPrecision { floor: 0.5 }
    }
}

impl ThresholdPolicy {
    /// Picks a decision threshold from held-out `(score, label)` pairs.
    /// The threshold sits halfway between the chosen score and the next
    /// lower observed score.
    pub fn choose(&self, scored: &[(f64, bool)]) -> f64 {
        let floor = match *self {
            ThresholdPolicy::Fixed { threshold } => return threshold,
            ThresholdPolicy::MaxF1 => None,
            ThresholdPolicy::MaxRecallAtPrecision { floor } => Some(floor),
        };
        let mut distinct: Vec<f64> = scored.iter().map(|s| s.0).collect();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        if distinct.is_empty() {
            return 0.5;
        }
        let stats: Vec<(f64, f64, f64)> = distinct
            .iter()
            .map(|&t| {
                let mut c = Confusion::default();
                for &(s, y) in scored {
                    c.record(s >= t, y);
                }
                (c.precision(), c.recall(), c.f1())
            })
            .collect();
        // Candidates are in descending threshold order, so strict `>` keeps
        // the highest threshold among ties.
        let pick = |key: &dyn Fn(usize) -> Option<f64>| -> Option<usize> {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..distinct.len() {
                if let Some(k) = key(i) {
                    if best.is_none_or(|(_, b)| k > b) {
                        best = Some((i, k));
                    }
                }
            }
            best.map(|b| b.0)
        };
        let chosen = floor
            .and_then(|fl| pick(&|i| (stats[i].0 >= fl && stats[i].1 > 0.0).then_some(stats[i].1)))
            .or_else(|| pick(&|i| (stats[i].2 > 0.0).then_some(stats[i].2)));
        let Some(i) = chosen else {
            return 0.5;
        };
        let lower = distinct.get(i + 1).copied().unwrap_or(0.0);
        ((distinct[i] + lower) / 2.0).clamp(1e-6, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub folds: usize,
    pub seed: u64,
    pub balance: bool,
    pub balance_ratio: f64,
    pub pivots: Vec<String>,
    pub threshold_policy: ThresholdPolicy,
    pub forest: ForestConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            folds: 3,
            seed: 0,
            balance: false,
            balance_ratio: 1.0,
            pivots: ["de", "fr", "es", "ru"].iter().map(|s| s.to_string()).collect(),
            threshold_policy: ThresholdPolicy::default(),
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub task: TaskName,
    pub threshold: f64,
    pub feature_config: FeatureConfig,
    pub forest_config: ForestConfig,
    pub data_hash: String,
    pub model: RandomForest,
}

impl TrainedClassifier {
    pub fn score_features(&self, features: &FeatureVector) -> Result<f64> {
        self.model.predict_proba(&features.combined())
    }

    /// Positive iff `score >= threshold`.
    pub fn decide(&self, score: f64) -> bool {
        score >= self.threshold
    }

    pub fn check_featurizer(&self, featurizer: &Featurizer) -> Result<()> {
        let actual = featurizer.config();
        if actual != self.feature_config {
            return Err(Error::FeatureMismatch {
                expected: self.feature_config.to_string(),
                actual: actual.to_string(),
            });
        }
        Ok(())
    }
}

/// Scores `text` with `classifier`. The featurizer must describe exactly the
/// feature space the classifier was trained in.
pub fn predict(classifier: &TrainedClassifier, featurizer: &Featurizer, text: &str) -> Result<(bool, f64)> {
    classifier.check_featurizer(featurizer)?;
    let score = classifier.score_features(&featurizer.featurize(text)?)?;
    Ok((classifier.decide(score), score))
}

pub fn evaluate_classifier(
    classifier: &TrainedClassifier,
    featurizer: &Featurizer,
    test: &[LabeledExample],
) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    classifier.check_featurizer(featurizer)?;
    let texts: Vec<&str> = test.iter().map(|e| e.text.as_str()).collect();
    let feats = featurizer.featurize_batch(&texts)?;
    let mut c = Confusion::default();
    for (f, e) in feats.iter().zip(test) {
        c.record(classifier.decide(classifier.score_features(f)?), e.positive);
    }
    Ok(Metrics::from_confusion(c))
}

/// Assigns each example to one of `k` folds so that every fold receives
/// `floor` or `ceil` of its share of each class.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < k || neg.len() < k {
        return Err(Error::InsufficientData(format!(
            "{k}-fold stratification needs {k} examples of each class (have {} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![0usize; labels.len()];
    for (j, &i) in pos.iter().chain(neg.iter()).enumerate() {
        folds[i] = j % k;
    }
    Ok(folds)
}

fn data_hash(examples: &[LabeledExample]) -> String {
    let mut buf = String::new();
    for e in examples {
        buf.push(if e.positive { '1' } else { '0' });
        buf.push('\t');
        buf.push_str(&e.text);
        buf.push('\n');
    }
    sha256_hex(buf.as_bytes())
}

struct FeatureCache<'a> {
    featurizer: &'a Featurizer,
    rows: HashMap<String, Vec<f32>>,
}

impl FeatureCache<'_> {
    fn rows(&mut self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let missing: Vec<&str> = texts.iter().copied().filter(|t| !self.rows.contains_key(*t)).collect();
        if !missing.is_empty() {
            let mut uniq = missing.clone();
            uniq.sort_unstable();
            uniq.dedup();
            for (t, f) in uniq.iter().zip(self.featurizer.featurize_batch(&uniq)?) {
                self.rows.insert(t.to_string(), f.combined());
            }
        }
        Ok(texts.iter().map(|t| self.rows[*t].clone()).collect())
    }
}

struct Fitted {
    model: RandomForest,
    threshold: f64,
}

fn fit_split(
    train: &[&LabeledExample],
    cache: &mut FeatureCache<'_>,
    config: &TrainConfig,
    translator: &dyn RoundTripTranslator,
    seed: u64,
) -> Result<Fitted> {
    let mut pairs: Vec<(String, bool)> = train.iter().map(|e| (e.text.clone(), e.positive)).collect();
    if config.balance {
        let pivots: Vec<&str> = config.pivots.iter().map(String::as_str).collect();
        pairs = balance_dataset(&pairs, config.balance_ratio, translator, &pivots, seed)?.examples;
    }
    let texts: Vec<&str> = pairs.iter().map(|p| p.0.as_str()).collect();
    let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
    let x = cache.rows(&texts)?;
    let fit = RandomForest::fit(&x, &labels, &config.forest, seed)?;
    // Threshold from out-of-bag scores of original rows only, so augmented
    // paraphrases do not vouch for their own sources.
    let scored: Vec<(f64, bool)> = fit
        .oob
        .iter()
        .zip(&labels)
        .take(train.len())
        .filter_map(|(s, &y)| s.map(|s| (s, y)))
        .collect();
    Ok(Fitted {
        threshold: config.threshold_policy.choose(&scored),
        model: fit.forest,
    })
}

/// Stratified k-fold cross-validation followed by a final fit on all data.
/// Balancing, when enabled, is applied inside each training split only.
pub fn train_task(
    task: TaskName,
    examples: &[LabeledExample],
    featurizer: &Featurizer,
    config: &TrainConfig,
    translator: &dyn RoundTripTranslator,
) -> Result<(TrainedClassifier, Metrics)> {
    if let Some(i) = examples.iter().position(|e| e.text.trim().is_empty()) {
        return Err(Error::InvalidInput(format!("example {i} has empty text")));
    }
    let labels: Vec<bool> = examples.iter().map(|e| e.positive).collect();
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::InsufficientData(format!("task {task}: only one class present")));
    }
    let folds = stratified_folds(&labels, config.folds, config.seed)?;
    let mut cache = FeatureCache {
        featurizer,
        rows: HashMap::new(),
    };

    let mut fold_metrics = Vec::with_capacity(config.folds);
    for k in 0..config.folds {
        let train: Vec<&LabeledExample> = examples.iter().zip(&folds).filter(|(_, &f)| f != k).map(|p| p.0).collect();
        let test: Vec<&LabeledExample> = examples.iter().zip(&folds).filter(|(_, &f)| f == k).map(|p| p.0).collect();
        let fold_seed = config.seed.wrapping_add(1 + k as u64);
        let fitted = fit_split(&train, &mut cache, config, translator, fold_seed)?;
        let texts: Vec<&str> = test.iter().map(|e| e.text.as_str()).collect();
        let mut c = Confusion::default();
        for (row, e) in cache.rows(&texts)?.iter().zip(&test) {
            c.record(fitted.model.predict_proba(row)? >= fitted.threshold, e.positive);
        }
        tracing::debug!(%task, fold = k, f1 = c.f1(), "fold evaluated");
        fold_metrics.push(FoldMetrics {
            fold: k,
            evaluated: c.total(),
            threshold: fitted.threshold,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            confusion: c,
        });
    }

    let all: Vec<&LabeledExample> = examples.iter().collect();
    let fitted = fit_split(&all, &mut cache, config, translator, config.seed)?;
    let classifier = TrainedClassifier {
        task,
        threshold: fitted.threshold,
        feature_config: featurizer.config(),
        forest_config: config.forest.clone(),
        data_hash: data_hash(examples),
        model: fitted.model,
    };
    Ok((classifier, Metrics::from_folds(fold_metrics)))
}
