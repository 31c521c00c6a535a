//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use warmline_core::classifiers::{train_task, ClassifierBundle, TrainConfig};
use warmline_core::features::{HashingEncoder, IdentityTranslator};
use warmline_core::{synth, Featurizer, Lexicon, TaskName};

pub const MESSAGE: &str = "I have been so anxious since the baby came, the naps are short and the bills keep piling up.";

pub fn featurizer(dim: usize) -> Arc<Featurizer> {
    Arc::new(Featurizer::new(Arc::new(HashingEncoder::new(dim)), Arc::new(Lexicon::demo())))
}

/// A small bundle (severe plus two concerns) trained on synthetic data.
pub fn bundle(trees: usize) -> ClassifierBundle {
    let f = featurizer(128);
    let mut config = TrainConfig {
        folds: 2,
        ..TrainConfig::default()
    };
    config.forest.n_trees = trees;
    let heads = [TaskName::Severe, TaskName::BabySleep, TaskName::LifestressFinance]
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let examples = synth::labeled_examples(t, 120, 0.3, i as u64);
            train_task(t, &examples, &f, &config, &IdentityTranslator).expect("train").0
        })
        .collect();
    ClassifierBundle::new(f, heads).expect("bundle")
}
