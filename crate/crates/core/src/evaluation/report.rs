use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Stat;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ScoreMode {
    Raw,
    Rescaled { baseline: f64 },
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoreMode::Raw => f.write_str("raw"),
            ScoreMode::Rescaled { baseline } => write!(f, "rescaled (baseline {baseline})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Reference,
    Engine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub index: usize,
    pub input: String,
    pub reply: Option<String>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub empathy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub kind: RowKind,
    pub pairs: usize,
    pub failed: usize,
    pub precision: Option<Stat>,
    pub recall: Option<Stat>,
    pub f1: Option<Stat>,
    pub empathy: Option<Stat>,
}

impl ReportRow {
    pub fn from_pairs(name: impl Into<String>, kind: RowKind, pairs: &[PairScore]) -> Self {
        let ok: Vec<&PairScore> = pairs.iter().filter(|p| p.error.is_none()).collect();
        let col = |f: fn(&PairScore) -> Option<f64>| Stat::of(&ok.iter().filter_map(|p| f(p)).collect::<Vec<_>>());
        ReportRow {
            name: name.into(),
            kind,
            pairs: pairs.len(),
            failed: pairs.len() - ok.len(),
            precision: col(|p| p.precision),
            recall: col(|p| p.recall),
            f1: col(|p| p.f1),
            empathy: col(|p| p.empathy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineDetail {
    pub name: String,
    pub pairs: Vec<PairScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub score_mode: ScoreMode,
    pub embedder: String,
    pub reference: String,
    pub rows: Vec<ReportRow>,
    pub details: Vec<EngineDetail>,
}

fn cell(stat: Option<Stat>) -> String {
    match stat {
        Some(s) => format!("{:.3} (±{:.3})", s.mean, s.std),
        None => "-".to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl EvaluationReport {
    pub fn new(score_mode: ScoreMode, embedder: impl Into<String>, reference: impl Into<String>) -> Self {
        Self {
            score_mode,
            embedder: embedder.into(),
            reference: reference.into(),
            rows: Vec::new(),
            details: Vec::new(),
        }
    }

    pub fn push_reference(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn push_engine(&mut self, row: ReportRow, pairs: Vec<PairScore>) {
        self.details.push(EngineDetail {
            name: row.name.clone(),
            pairs,
        });
        self.rows.push(row);
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned text table: one row per reference set and engine, with
    /// mean (±std) cells.
    pub fn to_table(&self) -> String {
        let header = ["Model", "Precision", "Recall", "F1", "Empathy%", "Failed"];
        let body: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    cell(r.precision),
                    cell(r.recall),
                    cell(r.f1),
                    cell(r.empathy),
                    match r.kind {
                        RowKind::Reference => "-".to_string(),
                        RowKind::Engine => format!("{}/{}", r.failed, r.pairs),
                    },
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..6)
            .map(|c| {
                body.iter()
                    .map(|r| r[c].chars().count())
                    .chain([header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "similarity: {} | embedder: {} | reference: {}",
            self.score_mode, self.embedder, self.reference
        );
        let line = |cells: Vec<&str>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let _ = writeln!(out, "{}", line(header.to_vec()));
        let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        for r in &body {
            let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
        }
        out
    }

    /// One line per engine and pair.
    pub fn write_pairs_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "engine,pair,precision,recall,f1,empathy,failed,input,reply")?;
        for d in &self.details {
            for p in &d.pairs {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    csv_field(&d.name),
                    p.index,
                    opt(p.precision),
                    opt(p.recall),
                    opt(p.f1),
                    opt(p.empathy),
                    p.error.is_some(),
                    csv_field(&p.input),
                    csv_field(p.reply.as_deref().unwrap_or("")),
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(i: usize, f1: Option<f64>) -> PairScore {
        PairScore {
            index: i,
            input: "hi, there".into(),
            reply: f1.map(|_| "ok".into()),
            precision: f1,
            recall: f1,
            f1,
            empathy: f1,
            error: if f1.is_none() { Some("boom".into()) } else { None },
        }
    }

    #[test]
    fn table_layout() {
        let mut rep = EvaluationReport::new(ScoreMode::Raw, "stub", "gold");
        rep.push_reference(ReportRow {
            name: "gold".into(),
            kind: RowKind::Reference,
            pairs: 3,
            failed: 0,
            precision: None,
            recall: None,
            f1: None,
            empathy: Stat::of(&[1.0, 0.5]),
        });
        let pairs = vec![pair(0, Some(0.2)), pair(1, None), pair(2, Some(0.4))];
        let row = ReportRow::from_pairs("baseline", RowKind::Engine, &pairs);
        assert_eq!(row.failed, 1);
        rep.push_engine(row, pairs);
        let t = rep.to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].starts_with("Model"));
        assert!(lines[3].starts_with("gold"));
        assert!(lines[3].contains("0.750 (±0.250)"));
        assert!(lines[4].contains("0.300 (±0.100)"));
        assert!(lines[4].ends_with("1/3"));
        let mut csv = Vec::new();
        rep.write_pairs_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("\"hi, there\""));
        let back: EvaluationReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
    }
}
