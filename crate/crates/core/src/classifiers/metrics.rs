use std::io::Write;

use serde::{Deserialize, Serialize};

use super::TaskName;
use crate::error::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            c.record(p, a);
        }
        c
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Zero when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub evaluated: usize,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMean {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Headline precision/recall/F1 come from `confusion`, which is the sum of
/// the per-fold matrices for cross-validated metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    #[serde(default)]
    pub folds: Vec<FoldMetrics>,
    #[serde(default)]
    pub fold_mean: Option<FoldMean>,
}

impl Metrics {
    pub fn from_confusion(confusion: Confusion) -> Self {
        Self {
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            confusion,
            folds: Vec::new(),
            fold_mean: None,
        }
    }

    pub fn from_folds(folds: Vec<FoldMetrics>) -> Self {
        let mut pooled = Confusion::default();
        folds.iter().for_each(|f| pooled.add(&f.confusion));
        let k = folds.len().max(1) as f64;
        let mean = FoldMean {
            precision: folds.iter().map(|f| f.precision).sum::<f64>() / k,
            recall: folds.iter().map(|f| f.recall).sum::<f64>() / k,
            f1: folds.iter().map(|f| f.f1).sum::<f64>() / k,
        };
        Self {
            fold_mean: Some(mean),
            folds,
            ..Self::from_confusion(pooled)
        }
    }
}

/// Plot-ready long-format confusion matrices: one row per task and cell.
pub fn write_confusion_csv<W: Write>(mut w: W, rows: &[(TaskName, &Metrics)]) -> Result<()> {
    writeln!(w, "task,actual,predicted,count")?;
    for (task, m) in rows {
        let c = &m.confusion;
        for (actual, predicted, n) in [
            ("positive", "positive", c.tp),
            ("positive", "negative", c.fn_),
            ("negative", "positive", c.fp),
            ("negative", "negative", c.tn),
        ] {
            writeln!(w, "{task},{actual},{predicted},{n}")?;
        }
    }
    Ok(())
}

/// Per-task precision/recall/F1 table.
pub fn write_metrics_table<W: Write>(mut w: W, rows: &[(TaskName, &Metrics)]) -> Result<()> {
    let width = rows.iter().map(|(t, _)| t.as_str().len()).max().unwrap_or(4).max(4);
    writeln!(w, "{:<width$}  {:>9}  {:>6}  {:>8}", "task", "precision", "recall", "f1")?;
    for (task, m) in rows {
        writeln!(
            w,
            "{:<width$}  {:>9.3}  {:>6.3}  {:>8.3}",
            task.as_str(),
            m.precision,
            m.recall,
            m.f1
        )?;
    }
    Ok(())
}
