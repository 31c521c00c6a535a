use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lm::{CausalLm, TinyLm};
use super::{prepare_training_pairs, TrainingSequence};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::text::lm_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1Full,
    Stage2Filtered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub base_model: String,
    pub epochs: usize,
    pub learning_rate: f32,
    pub seed: u64,
    /// Sequences longer than this many tokens keep their tail.
    pub max_seq_len: usize,
    pub stage: Stage,
    pub heldout_fraction: f64,
}

impl FineTuneConfig {
    pub fn new(stage: Stage) -> Self {
        Self {
            base_model: "tiny-lm".into(),
            epochs: 3,
            learning_rate: 0.05,
            seed: 0,
            max_seq_len: 96,
            stage,
            heldout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// `None` for epoch 0, which is measured before any update.
    pub train_loss: Option<f64>,
    pub heldout_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub train_sequences: usize,
    pub heldout_sequences: usize,
    pub heldout_loss_epoch0: f64,
    pub final_heldout_loss: f64,
    pub epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub stage: Stage,
    pub model: String,
    pub model_hash: String,
    pub base_checkpoint_hash: Option<String>,
    pub data_hash: String,
    pub config: FineTuneConfig,
    pub metrics: TrainingMetrics,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub model: TinyLm,
}

impl Checkpoint {
    pub fn hash(&self) -> &str {
        &self.manifest.model_hash
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("model.json"), serde_json::to_vec(&self.model)?)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(())
    }

    /// Loads a checkpoint and verifies the model against its manifest hash.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        let raw = fs::read_to_string(dir.join("model.json"))?;
        if sha256_hex(raw.as_bytes()) != manifest.model_hash {
            return Err(Error::InvalidInput(format!("{}: model does not match manifest hash", dir.display())));
        }
        Ok(Self {
            model: TinyLm::from_json(&raw)?,
            manifest,
        })
    }
}

/// Starting point of a fine-tuning run.
pub enum Base<'a> {
    Pretrained(TinyLm),
    Checkpoint(&'a Checkpoint),
}

fn truncate(text: &str, max: usize) -> String {
    let toks = lm_tokens(text);
    if toks.len() <= max {
        return text.to_string();
    }
    toks[toks.len() - max..].join(" ")
}

fn mean_loss<M: CausalLm>(model: &M, texts: &[&String]) -> Result<f64> {
    let (mut sum, mut n) = (0f64, 0usize);
    for t in texts {
        let (s, c) = model.sequence_loss(t)?;
        sum += s;
        n += c;
    }
    if n == 0 {
        return Err(Error::InsufficientData("no scorable target tokens".into()));
    }
    Ok(sum / n as f64)
}

fn run_epochs<M: CausalLm>(
    model: &mut M,
    train: &[&String],
    held: &[&String],
    config: &FineTuneConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochLog>> {
    let epoch0 = mean_loss(model, held)?;
    tracing::info!(stage = ?config.stage, epoch = 0, heldout_loss = epoch0, "held-out loss before training");
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: None,
        heldout_loss: epoch0,
    }];
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let (mut sum, mut n) = (0f64, 0usize);
        for &i in &order {
            let (s, c) = model.train_sequence(train[i], config.learning_rate)?;
            sum += s;
            n += c;
        }
        let train_loss = sum / n.max(1) as f64;
        let heldout = mean_loss(model, held)?;
        if !train_loss.is_finite() || !heldout.is_finite() {
            tracing::error!(epoch, train_loss, heldout, "loss is not finite; aborting");
            return Err(Error::Diverged(format!("epoch {epoch}: train {train_loss}, held-out {heldout}")));
        }
        tracing::info!(stage = ?config.stage, epoch, train_loss, heldout_loss = heldout, "epoch finished");
        log.push(EpochLog {
            epoch,
            train_loss: Some(train_loss),
            heldout_loss: heldout,
        });
    }
    Ok(log)
}

/// Fine-tunes `base` on `data`. A seeded fraction of the data is held out
/// and scored before the first epoch and after every epoch. Stage-2 runs
/// must start from a stage-1 checkpoint.
pub fn fine_tune(base: Base<'_>, data: &[TrainingSequence], config: &FineTuneConfig) -> Result<Checkpoint> {
    let (mut model, base_hash) = match (config.stage, base) {
        (Stage::Stage2Filtered, Base::Checkpoint(c)) if c.manifest.stage == Stage::Stage1Full => {
            (c.model.clone(), Some(c.hash().to_string()))
        }
        (Stage::Stage2Filtered, Base::Checkpoint(c)) => {
            return Err(Error::MissingStage1(format!("base checkpoint {} is {:?}", c.hash(), c.manifest.stage)))
        }
        (Stage::Stage2Filtered, Base::Pretrained(_)) => {
            return Err(Error::MissingStage1(
                "direct fine-tuning on the filtered corpus is not supported; run stage 1 first".into(),
            ))
        }
        (Stage::Stage1Full, Base::Pretrained(m)) => (m, None),
        (Stage::Stage1Full, Base::Checkpoint(c)) => (c.model.clone(), Some(c.hash().to_string())),
    };
    if data.is_empty() {
        return Err(Error::InvalidInput("no training sequences".into()));
    }
    if data.len() < 2 {
        return Err(Error::InsufficientData("need at least two sequences to hold one out".into()));
    }
    if !(config.heldout_fraction > 0.0 && config.heldout_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("heldout_fraction {} not in (0, 1)", config.heldout_fraction)));
    }
    let texts: Vec<String> = data.iter().map(|s| truncate(&s.to_text(), config.max_seq_len)).collect();
    let data_hash = sha256_hex(texts.join("\n").as_bytes());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut idx: Vec<usize> = (0..texts.len()).collect();
    idx.shuffle(&mut rng);
    let n_held = ((texts.len() as f64 * config.heldout_fraction).round() as usize).clamp(1, texts.len() - 1);
    let held: Vec<&String> = idx[..n_held].iter().map(|&i| &texts[i]).collect();
    let train: Vec<&String> = idx[n_held..].iter().map(|&i| &texts[i]).collect();

    let epochs = run_epochs(&mut model, &train, &held, config, &mut rng)?;
    let model_hash = sha256_hex(&serde_json::to_vec(&model)?);
    Ok(Checkpoint {
        manifest: CheckpointManifest {
            stage: config.stage,
            model: model.name(),
            model_hash,
            base_checkpoint_hash: base_hash,
            data_hash,
            config: config.clone(),
            metrics: TrainingMetrics {
                train_sequences: train.len(),
                heldout_sequences: held.len(),
                heldout_loss_epoch0: epochs[0].heldout_loss,
                final_heldout_loss: epochs.last().map(|e| e.heldout_loss).unwrap_or(f64::NAN),
                epochs,
            },
        },
        model,
    })
}

pub struct TwoStageOutcome {
    pub stage1: Checkpoint,
    pub stage2: Checkpoint,
}

/// Stage 1 on the full corpus, then stage 2 from the stage-1 checkpoint on
/// the filtered corpus.
pub fn two_stage_pipeline(
    base: TinyLm,
    full: &Corpus,
    filtered: &Corpus,
    stage1: &FineTuneConfig,
    stage2: &FineTuneConfig,
    max_context_turns: usize,
) -> Result<TwoStageOutcome> {
    if stage1.stage != Stage::Stage1Full || stage2.stage != Stage::Stage2Filtered {
        return Err(Error::InvalidInput("pipeline configs must be tagged stage1_full then stage2_filtered".into()));
    }
    let s1 = fine_tune(Base::Pretrained(base), &prepare_training_pairs(full, max_context_turns), stage1)?;
    let s2 = fine_tune(Base::Checkpoint(&s1), &prepare_training_pairs(filtered, max_context_turns), stage2)?;
    Ok(TwoStageOutcome { stage1: s1, stage2: s2 })
}
