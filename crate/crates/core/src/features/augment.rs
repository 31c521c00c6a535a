use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hashing::fnv1a;

/// Translates text to a pivot language and back.
pub trait RoundTripTranslator: Send + Sync {
    fn name(&self) -> &str;
    fn round_trip(&self, text: &str, pivot: &str) -> Result<String>;
}

/// Paraphrases `text` through `pivot`. The output is assumed to keep the
/// label of the input and may equal it.
pub fn back_translate(text: &str, translator: &dyn RoundTripTranslator, pivot: &str) -> Result<String> {
    let out = translator.round_trip(text, pivot)?;
    let out = out.trim();
    if out.is_empty() {
        return Err(Error::adapter(translator.name(), format!("empty round trip through `{pivot}`")));
    }
    Ok(out.to_string())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl RoundTripTranslator for IdentityTranslator {
    fn name(&self) -> &str {
        "identity"
    }

    fn round_trip(&self, text: &str, _pivot: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

/// Offline stand-in for a neural round trip: each pivot deterministically
/// picks synonyms from a small table, so different pivots yield different
/// paraphrases of the same sentence.
#[derive(Debug, Clone)]
pub struct LexicalParaphraser {
    groups: Vec<Vec<&'static str>>,
}

const SYNONYM_GROUPS: &[&[&str]] = &[
    &["hard", "difficult", "tough", "rough"],
    &["tired", "exhausted", "worn out", "drained"],
    &["sad", "unhappy", "down", "low"],
    &["worried", "anxious", "nervous", "uneasy"],
    &["baby", "infant", "little one", "newborn"],
    &["husband", "partner", "spouse"],
    &["really", "truly", "very", "so"],
    &["feel", "am feeling"],
    &["scared", "afraid", "frightened"],
    &["alone", "lonely", "isolated"],
    &["money", "finances", "funds"],
    &["help", "support", "assistance"],
    &["cry", "weep", "sob"],
    &["sleep", "rest"],
    &["happy", "glad", "pleased"],
    &["great", "wonderful", "amazing"],
];

impl Default for LexicalParaphraser {
    fn default() -> Self {
        Self {
            groups: SYNONYM_GROUPS.iter().map(|g| g.to_vec()).collect(),
        }
    }
}

impl RoundTripTranslator for LexicalParaphraser {
    fn name(&self) -> &str {
        "lexical-paraphraser"
    }

    fn round_trip(&self, text: &str, pivot: &str) -> Result<String> {
        let mut out = text.to_string();
        for group in &self.groups {
            for (i, word) in group.iter().enumerate() {
                let pattern = format!(r"(?i)\b{}\b", regex::escape(word));
                let re = regex::Regex::new(&pattern).expect("escaped pattern");
                if re.is_match(&out) {
                    let pick = (fnv1a(format!("{pivot}:{word}").as_bytes()) % group.len() as u64) as usize;
                    let replacement = if pick == i { group[(i + 1) % group.len()] } else { group[pick] };
                    out = re.replace_all(&out, replacement).into_owned();
                    break;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct BalanceOutcome<L> {
    /// Originals in input order, followed by augmentations in generation order.
    pub examples: Vec<(String, L)>,
    pub augmented: usize,
    pub warnings: Vec<String>,
}

/// Grows every minority class with back-translations of its own members
/// until `minority / majority >= target_ratio` or the translator stops
/// producing novel strings. Originals are always kept and labels are never
/// changed. Member and pivot order are shuffled with `seed`.
pub fn balance_dataset<L>(
    examples: &[(String, L)],
    target_ratio: f64,
    translator: &dyn RoundTripTranslator,
    pivots: &[&str],
    seed: u64,
) -> Result<BalanceOutcome<L>>
where
    L: Clone + Ord + Hash,
{
    if !(target_ratio > 0.0 && target_ratio <= 1.0) {
        return Err(Error::InvalidInput(format!("target_ratio {target_ratio} not in (0, 1]")));
    }
    if pivots.is_empty() {
        return Err(Error::InvalidInput("no pivot languages".into()));
    }
    let mut by_class: BTreeMap<L, Vec<&str>> = BTreeMap::new();
    for (text, label) in examples {
        by_class.entry(label.clone()).or_default().push(text);
    }
    if by_class.len() < 2 {
        return Err(Error::InvalidInput("balancing needs at least two classes".into()));
    }
    let majority = by_class.values().map(Vec::len).max().unwrap_or(0);
    let target = (target_ratio * majority as f64).ceil() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(String, L)> = examples.to_vec();
    let mut warnings = Vec::new();
    let mut augmented = 0usize;

    for (label, texts) in &by_class {
        if texts.len() >= target {
            continue;
        }
        let mut members: Vec<String> = texts.iter().map(|t| t.to_string()).collect();
        members.shuffle(&mut rng);
        let mut pivot_order: Vec<&str> = pivots.to_vec();
        pivot_order.shuffle(&mut rng);

        let mut seen: HashSet<String> = members.iter().cloned().collect();
        let mut next_pivot = vec![0usize; members.len()];
        let mut count = members.len();

        'outer: loop {
            let mut progress = false;
            let snapshot = members.len();
            for i in 0..snapshot {
                while next_pivot[i] < pivot_order.len() {
                    let pivot = pivot_order[next_pivot[i]];
                    next_pivot[i] += 1;
                    let para = back_translate(&members[i], translator, pivot)?;
                    if seen.insert(para.clone()) {
                        members.push(para.clone());
                        next_pivot.push(0);
                        out.push((para, label.clone()));
                        augmented += 1;
                        count += 1;
                        progress = true;
                        break;
                    }
                }
                if count >= target {
                    break 'outer;
                }
            }
            if !progress {
                break;
            }
        }
        if count < target {
            let msg = format!(
                "class reached {count} of {target} examples; translator `{}` produced no further novel paraphrases",
                translator.name()
            );
            tracing::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(BalanceOutcome {
        examples: out,
        augmented,
        warnings,
    })
}
