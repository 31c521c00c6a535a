//! Machine-based evaluation: token-embedding similarity against reference
//! replies, Empathy%, and per-engine report rows.

mod report;
mod similarity;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{EvaluationReport, PairScore, ReportRow, RowKind, ScoreMode};
pub use similarity::{
    cosine, f1_of, greedy_match, rescale, token_similarity, HashedContextEmbedder, SimilarityScore,
    StaticTokenEmbedder, TokenEmbedder,
};

use crate::corpus::ReferenceSet;
use crate::dialogue::{respond, DialogueContext, Engine, SentenceKind, Session, SessionState};
use crate::error::{Error, Result};
use crate::judge::SentenceJudge;
use crate::text::split_sentences;

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpathyPercent {
    pub mean: f64,
    pub std: f64,
    /// `None` for replies without any sentence.
    pub ratios: Vec<Option<f64>>,
}

impl EmpathyPercent {
    pub fn stat(&self) -> Stat {
        Stat {
            mean: self.mean,
            std: self.std,
        }
    }
}

/// Share of a reply's sentences the judge marks empathetic, or `None` if
/// the reply has no sentences.
pub fn empathy_ratio(reply: &str, judge: &dyn SentenceJudge) -> Result<Option<f64>> {
    let sentences = split_sentences(reply);
    if sentences.is_empty() {
        return Ok(None);
    }
    let mut hits = 0usize;
    for s in &sentences {
        if judge.judge(s)? {
            hits += 1;
        }
    }
    Ok(Some(hits as f64 / sentences.len() as f64))
}

pub fn empathy_percent<S: AsRef<str>>(replies: &[S], judge: &dyn SentenceJudge) -> Result<EmpathyPercent> {
    if replies.is_empty() {
        return Err(Error::InvalidInput("no replies to score".into()));
    }
    let ratios = replies
        .iter()
        .map(|r| empathy_ratio(r.as_ref(), judge))
        .collect::<Result<Vec<_>>>()?;
    let scored: Vec<f64> = ratios.iter().flatten().copied().collect();
    let excluded = ratios.len() - scored.len();
    if excluded > 0 {
        tracing::warn!(excluded, "replies without sentences excluded from Empathy%");
    }
    let stat = Stat::of(&scored)
        .ok_or_else(|| Error::InsufficientData("every reply was empty; Empathy% undefined".into()))?;
    Ok(EmpathyPercent {
        mean: stat.mean,
        std: stat.std,
        ratios,
    })
}

/// Anything that answers a reference input as a fresh single-turn
/// conversation.
pub trait ReplySource: Sync {
    fn label(&self) -> String;
    fn reply(&self, index: usize, input: &str) -> Result<String>;
}

/// Runs a dialogue engine on a new session per input. The disclaimer is
/// dropped before scoring; a fail-safe reply counts as a failure.
pub struct DialogueSource<'a> {
    pub engine: Engine,
    pub ctx: DialogueContext<'a>,
    pub seed: u64,
}

impl ReplySource for DialogueSource<'_> {
    fn label(&self) -> String {
        self.engine.as_str().to_string()
    }

    fn reply(&self, index: usize, input: &str) -> Result<String> {
        let mut session = Session::new(
            format!("eval-{index}"),
            self.engine,
            self.seed.wrapping_add(index as u64),
            String::new(),
        );
        let reply = respond(&mut session, input, &self.ctx)?;
        if session.flagged && session.state != SessionState::Escalated {
            return Err(Error::adapter(self.label(), "engine fell back to the fail-safe reply"));
        }
        Ok(reply.text_without(&[SentenceKind::Disclaimer]))
    }
}

impl<F> ReplySource for (String, F)
where
    F: Fn(usize, &str) -> Result<String> + Sync,
{
    fn label(&self) -> String {
        self.0.clone()
    }

    fn reply(&self, index: usize, input: &str) -> Result<String> {
        (self.1)(index, input)
    }
}

pub struct EvalJudges<'a> {
    pub empathy: &'a dyn SentenceJudge,
    pub embedder: &'a dyn TokenEmbedder,
    /// Baseline for rescaled similarity; raw scores when `None`.
    pub rescale_baseline: Option<f64>,
}

impl EvalJudges<'_> {
    pub fn mode(&self) -> ScoreMode {
        match self.rescale_baseline {
            Some(baseline) => ScoreMode::Rescaled { baseline },
            None => ScoreMode::Raw,
        }
    }
}

fn score_pair(index: usize, source: &dyn ReplySource, input: &str, reference: &str, judges: &EvalJudges<'_>) -> PairScore {
    let attempt = || -> Result<(String, SimilarityScore, Option<f64>)> {
        let reply = source.reply(index, input)?;
        let mut sim = token_similarity(&reply, reference, judges.embedder)?;
        if let Some(b) = judges.rescale_baseline {
            sim = rescale(&sim, b)?;
        }
        let empathy = empathy_ratio(&reply, judges.empathy)?;
        Ok((reply, sim, empathy))
    };
    match attempt() {
        Ok((reply, sim, empathy)) => PairScore {
            index,
            input: input.to_string(),
            reply: Some(reply),
            precision: Some(sim.precision),
            recall: Some(sim.recall),
            f1: Some(sim.f1),
            empathy,
            error: None,
        },
        Err(e) => {
            tracing::warn!(pair = index, error = %e, "evaluation pair failed");
            PairScore {
                index,
                input: input.to_string(),
                reply: None,
                precision: None,
                recall: None,
                f1: None,
                empathy: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Scores every pair of `reference` concurrently and aggregates one row.
/// Failed pairs are kept in the per-pair list and counted, not averaged.
pub fn evaluate_engine(
    source: &dyn ReplySource,
    reference: &ReferenceSet,
    judges: &EvalJudges<'_>,
) -> Result<(ReportRow, Vec<PairScore>)> {
    if reference.is_empty() {
        return Err(Error::InvalidInput("reference set is empty".into()));
    }
    let pairs: Vec<PairScore> = reference
        .pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| score_pair(i, source, &p.input, &p.reference, judges))
        .collect();
    let row = ReportRow::from_pairs(source.label(), RowKind::Engine, &pairs);
    Ok((row, pairs))
}

/// Empathy% of the reference replies themselves.
pub fn reference_row(reference: &ReferenceSet, empathy: &dyn SentenceJudge) -> Result<ReportRow> {
    let replies: Vec<&str> = reference.pairs.iter().map(|p| p.reference.as_str()).collect();
    let e = empathy_percent(&replies, empathy)?;
    Ok(ReportRow {
        name: reference.kind.to_string(),
        kind: RowKind::Reference,
        pairs: replies.len(),
        failed: 0,
        precision: None,
        recall: None,
        f1: None,
        empathy: Some(e.stat()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ReferenceKind, ReferencePair};

    fn marks_nice(s: &str) -> Result<bool> {
        Ok(s.contains("nice"))
    }

    #[test]
    fn ratio_arithmetic() {
        let r = empathy_percent(&["nice one. nice two. nice three. plain four."], &marks_nice).unwrap();
        assert_eq!(r.ratios, vec![Some(0.75)]);
        let none = empathy_percent(&["plain. text."], &marks_nice).unwrap();
        assert_eq!(none.mean, 0.0);
    }

    #[test]
    fn empty_replies_are_excluded() {
        let r = empathy_percent(&["nice.", "", "plain."], &marks_nice).unwrap();
        assert_eq!(r.ratios, vec![Some(1.0), None, Some(0.0)]);
        assert_eq!(r.mean, 0.5);
        assert_eq!(r.std, 0.5);
        assert!(empathy_percent::<&str>(&[], &marks_nice).is_err());
        assert!(empathy_percent(&["", " "], &marks_nice).is_err());
    }

    #[test]
    fn population_stdev() {
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    fn refset(n: usize) -> ReferenceSet {
        ReferenceSet {
            pairs: (0..n)
                .map(|i| ReferencePair {
                    input: format!("my baby cried {i} times today"),
                    reference: format!("my baby cried {i} times today"),
                })
                .collect(),
            kind: ReferenceKind::Gold,
            seed: 0,
        }
    }

    #[test]
    fn echo_scores_one() {
        let echo = ("echo".to_string(), |_: usize, s: &str| Ok(s.to_string()));
        let emb = HashedContextEmbedder::new(16);
        let judges = EvalJudges {
            empathy: &marks_nice,
            embedder: &emb,
            rescale_baseline: None,
        };
        let (row, pairs) = evaluate_engine(&echo, &refset(10), &judges).unwrap();
        assert_eq!(pairs.len(), 10);
        assert!((row.f1.unwrap().mean - 1.0).abs() < 1e-6);
        assert_eq!(row.failed, 0);
    }

    #[test]
    fn failures_are_counted_not_averaged() {
        let flaky = ("flaky".to_string(), |i: usize, s: &str| {
            if i % 2 == 0 {
                Err(Error::adapter("flaky", "down"))
            } else {
                Ok(s.to_string())
            }
        });
        let emb = StaticTokenEmbedder::new(8);
        let judges = EvalJudges {
            empathy: &marks_nice,
            embedder: &emb,
            rescale_baseline: None,
        };
        let (row, _) = evaluate_engine(&flaky, &refset(6), &judges).unwrap();
        assert_eq!(row.failed, 3);
        assert_eq!(row.pairs, 6);
        assert!((row.precision.unwrap().mean - 1.0).abs() < 1e-6);
    }
}
