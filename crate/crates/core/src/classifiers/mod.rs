//! One-vs-rest detectors: severe symptoms, 13 concerns, 2 psychological
//! states and empathy, each a random forest over [`FeatureVector`]s.
//!
//! [`FeatureVector`]: crate::features::FeatureVector

mod bundle;
mod forest;
mod keyword;
mod metrics;
mod training;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use bundle::{detect_all, BundleManifest, ClassifierBundle, ClassifierJudge};
pub use forest::{FitOutcome, ForestConfig, RandomForest};
pub use keyword::KeywordDetectors;
pub use metrics::{write_confusion_csv, write_metrics_table, Confusion, FoldMean, FoldMetrics, Metrics};
pub use training::{
    evaluate_classifier, predict, stratified_folds, train_task, ThresholdPolicy, TrainConfig, TrainedClassifier,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskName {
    Severe,
    Empathy,
    DepressiveMood,
    Anxiety,
    InterpersonalPartner,
    InterpersonalFamily,
    BabyBreastfeeding,
    BabyCry,
    BabySleep,
    LifestressCovid,
    LifestressFinance,
    TransitionLifestyle,
    TransitionTime,
    TransitionConfidence,
    TransitionPrenatal,
    LacksupportPersonal,
    LacksupportProf,
}

impl TaskName {
    pub const ALL: [TaskName; 17] = [
        TaskName::Severe,
        TaskName::Empathy,
        TaskName::DepressiveMood,
        TaskName::Anxiety,
        TaskName::InterpersonalPartner,
        TaskName::InterpersonalFamily,
        TaskName::BabyBreastfeeding,
        TaskName::BabyCry,
        TaskName::BabySleep,
        TaskName::LifestressCovid,
        TaskName::LifestressFinance,
        TaskName::TransitionLifestyle,
        TaskName::TransitionTime,
        TaskName::TransitionConfidence,
        TaskName::TransitionPrenatal,
        TaskName::LacksupportPersonal,
        TaskName::LacksupportProf,
    ];

    pub const STATES: [TaskName; 2] = [TaskName::DepressiveMood, TaskName::Anxiety];

    pub const CONCERNS: [TaskName; 13] = [
        TaskName::InterpersonalPartner,
        TaskName::InterpersonalFamily,
        TaskName::BabyBreastfeeding,
        TaskName::BabyCry,
        TaskName::BabySleep,
        TaskName::LifestressCovid,
        TaskName::LifestressFinance,
        TaskName::TransitionLifestyle,
        TaskName::TransitionTime,
        TaskName::TransitionConfidence,
        TaskName::TransitionPrenatal,
        TaskName::LacksupportPersonal,
        TaskName::LacksupportProf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskName::Severe => "severe",
            TaskName::Empathy => "empathy",
            TaskName::DepressiveMood => "state:depressive_mood",
            TaskName::Anxiety => "state:anxiety",
            TaskName::InterpersonalPartner => "concern:interpersonal_partner",
            TaskName::InterpersonalFamily => "concern:interpersonal_family",
            TaskName::BabyBreastfeeding => "concern:baby_breastfeeding",
            TaskName::BabyCry => "concern:baby_cry",
            TaskName::BabySleep => "concern:baby_sleep",
            TaskName::LifestressCovid => "concern:lifestress_covid",
            TaskName::LifestressFinance => "concern:lifestress_finance",
            TaskName::TransitionLifestyle => "concern:transition_lifestyle",
            TaskName::TransitionTime => "concern:transition_time",
            TaskName::TransitionConfidence => "concern:transition_confidence",
            TaskName::TransitionPrenatal => "concern:transition_prenatal",
            TaskName::LacksupportPersonal => "concern:lacksupport_personal",
            TaskName::LacksupportProf => "concern:lacksupport_prof",
        }
    }

    pub fn is_state(&self) -> bool {
        Self::STATES.contains(self)
    }

    pub fn is_concern(&self) -> bool {
        Self::CONCERNS.contains(self)
    }

    /// File-system friendly form, e.g. `concern-baby_cry`.
    pub fn file_stem(&self) -> String {
        self.as_str().replace(':', "-")
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown task `{s}`")))
    }
}

impl Serialize for TaskName {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TaskName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub positive: bool,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, positive: bool) -> Self {
        Self {
            text: text.into(),
            positive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub task: TaskName,
    pub score: f64,
}

/// Detector output for one message. `states` and `concerns` hold only
/// labels at or above their thresholds, each sorted by descending score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub severe: bool,
    pub severe_score: f64,
    pub states: Vec<LabelScore>,
    pub concerns: Vec<LabelScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empathy: Option<LabelScore>,
}

impl LabelSet {
    pub fn severe(score: f64) -> Self {
        Self {
            severe: true,
            severe_score: score,
            ..Self::default()
        }
    }

    /// Builds a label set from positive `(task, score)` pairs, routing each
    /// to states or concerns and sorting by score. Ties keep task order.
    pub fn from_positives(severe_score: f64, positives: impl IntoIterator<Item = (TaskName, f64)>) -> Self {
        let mut set = Self {
            severe_score,
            ..Self::default()
        };
        for (task, score) in positives {
            let entry = LabelScore { task, score };
            if task.is_state() {
                set.states.push(entry);
            } else if task.is_concern() {
                set.concerns.push(entry);
            }
        }
        let by_score = |a: &LabelScore, b: &LabelScore| b.score.total_cmp(&a.score).then(a.task.cmp(&b.task));
        set.states.sort_by(by_score);
        set.concerns.sort_by(by_score);
        set
    }

    /// True when no concern or state was detected.
    pub fn is_empty(&self) -> bool {
        self.states.is_empty() && self.concerns.is_empty()
    }

    /// States first, then concerns.
    pub fn labels(&self) -> impl Iterator<Item = &LabelScore> {
        self.states.iter().chain(self.concerns.iter())
    }

    pub fn len(&self) -> usize {
        self.states.len() + self.concerns.len()
    }
}

/// Anything that turns a user message into a [`LabelSet`]: a trained bundle,
/// keyword rules, or a test stub.
pub trait Detectors: Send + Sync {
    fn detect(&self, text: &str) -> Result<LabelSet>;

    /// Identifies the deployed models, e.g. a bundle manifest hash.
    fn fingerprint(&self) -> String {
        "unversioned".to_string()
    }
}

impl<T: Detectors + ?Sized> Detectors for std::sync::Arc<T> {
    fn detect(&self, text: &str) -> Result<LabelSet> {
        (**self).detect(text)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_distinct_names() {
        let mut names: Vec<&str> = TaskName::ALL.iter().map(|t| t.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 17);
        assert_eq!(TaskName::STATES.len() + TaskName::CONCERNS.len() + 2, 17);
    }

    #[test]
    fn names_round_trip() {
        for t in TaskName::ALL {
            assert_eq!(t.as_str().parse::<TaskName>().unwrap(), t);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<TaskName>(&json).unwrap(), t);
        }
        assert!("concern:weather".parse::<TaskName>().is_err());
    }

    #[test]
    fn label_set_orders_states_first_by_score() {
        let set = LabelSet::from_positives(
            0.1,
            [
                (TaskName::LifestressFinance, 0.9),
                (TaskName::Anxiety, 0.6),
                (TaskName::BabyCry, 0.95),
                (TaskName::DepressiveMood, 0.7),
            ],
        );
        let order: Vec<TaskName> = set.labels().map(|l| l.task).collect();
        assert_eq!(
            order,
            vec![TaskName::DepressiveMood, TaskName::Anxiety, TaskName::BabyCry, TaskName::LifestressFinance]
        );
    }
}
