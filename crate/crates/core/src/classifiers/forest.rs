//! CART random forest over dense feature vectors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features examined per split; `None` means `ceil(sqrt(width))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 32,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
enum Node {
    Leaf { p: f32 },
    Split { f: u32, v: f32, l: u32, r: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f32]) -> f32 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { p } => return p,
                Node::Split { f, v, l, r } => i = if x[f as usize] <= v { l as usize } else { r as usize },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    width: usize,
    trees: Vec<Tree>,
}

/// A fitted forest plus the out-of-bag positive-class score of every
/// training row (`None` for rows that were in every bootstrap sample).
pub struct FitOutcome {
    pub forest: RandomForest,
    pub oob: Vec<Option<f64>>,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f32>], y: &[bool], config: &ForestConfig, seed: u64) -> Result<FitOutcome> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidInput(format!("{} rows but {} labels", x.len(), y.len())));
        }
        if config.n_trees == 0 {
            return Err(Error::InvalidInput("forest needs at least one tree".into()));
        }
        let width = x[0].len();
        if let Some(bad) = x.iter().position(|r| r.len() != width) {
            return Err(Error::InvalidInput(format!("row {bad} has width {} (expected {width})", x[bad].len())));
        }
        let mtry = config
            .max_features
            .unwrap_or_else(|| (width as f64).sqrt().ceil() as usize)
            .clamp(1, width.max(1));
        let n = x.len();

        let grown: Vec<(Tree, Vec<bool>)> = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let mut in_bag = vec![false; n];
                let rows: Vec<usize> = if config.bootstrap {
                    (0..n)
                        .map(|_| {
                            let i = rng.random_range(0..n);
                            in_bag[i] = true;
                            i
                        })
                        .collect()
                } else {
                    in_bag.iter_mut().for_each(|b| *b = true);
                    (0..n).collect()
                };
                let mut builder = Builder {
                    x,
                    y,
                    config,
                    mtry,
                    width,
                    rng,
                    nodes: Vec::new(),
                };
                builder.grow(rows, 0);
                (Tree { nodes: builder.nodes }, in_bag)
            })
            .collect();

        let mut sums = vec![0f64; n];
        let mut counts = vec![0u32; n];
        for (tree, in_bag) in &grown {
            for i in 0..n {
                if !in_bag[i] {
                    sums[i] += f64::from(tree.predict(&x[i]));
                    counts[i] += 1;
                }
            }
        }
        let oob = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| (c > 0).then(|| s / f64::from(c)))
            .collect();
        Ok(FitOutcome {
            forest: RandomForest {
                width,
                trees: grown.into_iter().map(|(t, _)| t).collect(),
            },
            oob,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean leaf probability of the positive class.
    pub fn predict_proba(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.width {
            return Err(Error::FeatureMismatch {
                expected: format!("width {}", self.width),
                actual: format!("width {}", x.len()),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| f64::from(t.predict(x))).sum();
        Ok((sum / self.trees.len() as f64).clamp(0.0, 1.0))
    }
}

struct Builder<'a> {
    x: &'a [Vec<f32>],
    y: &'a [bool],
    config: &'a ForestConfig,
    mtry: usize,
    width: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

fn gini(pos: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let pos = rows.iter().filter(|&&i| self.y[i]).count();
        let p = pos as f32 / rows.len() as f32;
        self.nodes.push(Node::Leaf { p });
        if pos == 0 || pos == rows.len() || rows.len() < self.config.min_samples_split || depth >= self.config.max_depth
        {
            return id;
        }
        let Some((f, v)) = self.best_split(&rows, pos) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.x[i][f] <= v);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id as usize] = Node::Split { f: f as u32, v, l, r };
        id
    }

    /// Examines features in random order until `mtry` non-constant ones
    /// have been scored.
    fn best_split(&mut self, rows: &[usize], pos: usize) -> Option<(usize, f32)> {
        let mut features: Vec<usize> = (0..self.width).collect();
        features.shuffle(&mut self.rng);
        let n = rows.len() as f64;
        let total_pos = pos as f64;
        let parent = gini(total_pos, n);
        let mut best: Option<(f64, usize, f32)> = None;
        let mut scored = 0usize;
        let mut column: Vec<(f32, bool)> = Vec::with_capacity(rows.len());
        for f in features {
            if scored >= self.mtry {
                break;
            }
            column.clear();
            column.extend(rows.iter().map(|&i| (self.x[i][f], self.y[i])));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            if column[0].0 == column[column.len() - 1].0 {
                continue;
            }
            scored += 1;
            let mut left_n = 0f64;
            let mut left_pos = 0f64;
            for k in 0..column.len() - 1 {
                left_n += 1.0;
                if column[k].1 {
                    left_pos += 1.0;
                }
                if column[k].0 == column[k + 1].0 {
                    continue;
                }
                let right_n = n - left_n;
                let impurity =
                    (left_n * gini(left_pos, left_n) + right_n * gini(total_pos - left_pos, right_n)) / n;
                if impurity < parent - 1e-12 && best.is_none_or(|(b, _, _)| impurity < b) {
                    let v = column[k].0 + (column[k + 1].0 - column[k].0) / 2.0;
                    best = Some((impurity, f, v));
                }
            }
        }
        best.map(|(_, f, v)| (f, v))
    }
}
