use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::text::word_tokens;

/// Default category count of the production lexicon.
pub const DEFAULT_CATEGORY_COUNT: usize = 69;

#[derive(Debug, Clone, PartialEq)]
pub struct Category {
    pub name: String,
    exact: HashSet<String>,
    stems: Vec<String>,
}

impl Category {
    fn matches(&self, token: &str) -> bool {
        self.exact.contains(token) || self.stems.iter().any(|s| token.starts_with(s.as_str()))
    }
}

/// Ordered word-category lexicon. Entries ending in `*` match any token with
/// that prefix; all other entries match whole tokens. Matching is
/// case-insensitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    categories: Vec<Category>,
    hash: String,
}

impl Lexicon {
    pub fn new(categories: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut names = HashSet::new();
        let mut canonical = String::new();
        let mut cats = Vec::with_capacity(categories.len());
        for (name, entries) in categories {
            if name.trim().is_empty() {
                return Err(Error::InvalidInput("empty lexicon category name".into()));
            }
            if !names.insert(name.clone()) {
                return Err(Error::InvalidInput(format!("duplicate lexicon category `{name}`")));
            }
            let mut exact = HashSet::new();
            let mut stems = Vec::new();
            let mut sorted: Vec<String> = entries.iter().map(|e| e.trim().to_lowercase()).collect();
            sorted.sort();
            sorted.dedup();
            for e in &sorted {
                match e.strip_suffix('*') {
                    Some(stem) if !stem.is_empty() => stems.push(stem.to_string()),
                    Some(_) => return Err(Error::InvalidInput(format!("bare `*` entry in `{name}`"))),
                    None if e.is_empty() => {}
                    None => {
                        exact.insert(e.clone());
                    }
                }
            }
            canonical.push_str(&name);
            canonical.push('\u{1f}');
            canonical.push_str(&sorted.join("\u{1e}"));
            canonical.push('\n');
            cats.push(Category { name, exact, stems });
        }
        Ok(Self {
            categories: cats,
            hash: sha256_hex(canonical.as_bytes()),
        })
    }

    /// Parses the lexicon file format: a JSON object mapping category names
    /// to entry lists, in category order.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let OrderedCategories(cats) = serde_json::from_str(s)?;
        Self::new(cats)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// The bundled open demonstration lexicon.
    pub fn demo() -> Self {
        Self::from_json_str(include_str!("../../assets/lexicon_demo.json")).expect("bundled lexicon is valid")
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn category_names(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.name.as_str())
    }

    /// Content hash over category order and entries.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Bit `k` is 1 iff some token of `text` matches category `k`.
    pub fn features(&self, text: &str) -> Vec<u8> {
        let tokens = word_tokens(text);
        self.categories
            .iter()
            .map(|c| u8::from(tokens.iter().any(|t| c.matches(t))))
            .collect()
    }
}

struct OrderedCategories(Vec<(String, Vec<String>)>);

impl<'de> Deserialize<'de> for OrderedCategories {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedCategories;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object of category name to entry list")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Vec<String>>()? {
                    out.push((k, v));
                }
                Ok(OrderedCategories(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> Lexicon {
        Lexicon::from_json_str(
            r#"{"zero":["alpha"],"one":["beta"],"two":["gamma"],"three":["delta"],"four":["epsil*"],"five":["zeta"]}"#,
        )
        .unwrap()
    }

    #[test]
    fn keeps_file_order() {
        let lex = lex();
        let names: Vec<&str> = lex.category_names().collect();
        assert_eq!(names, vec!["zero", "one", "two", "three", "four", "five"]);
    }

    #[test]
    fn no_match_is_all_zero() {
        assert_eq!(lex().features("nothing to see"), vec![0; 6]);
    }

    #[test]
    fn single_category_word_sets_one_bit() {
        assert_eq!(lex().features("a Delta here"), vec![0, 0, 0, 1, 0, 0]);
    }

    #[test]
    fn two_categories() {
        let f = lex().features("beta and zeta");
        assert_eq!(f, vec![0, 1, 0, 0, 0, 1]);
        assert_eq!(f.iter().filter(|b| **b == 1).count(), 2);
    }

    #[test]
    fn stem_prefix_matches() {
        assert_eq!(lex().features("EPSILON")[4], 1);
        assert_eq!(lex().features("eps")[4], 0);
    }

    #[test]
    fn duplicate_category_rejected() {
        assert!(Lexicon::from_json_str(r#"{"a":["x"],"a":["y"]}"#).is_err());
    }

    #[test]
    fn hash_depends_on_order() {
        let a = Lexicon::from_json_str(r#"{"a":["x"],"b":["y"]}"#).unwrap();
        let b = Lexicon::from_json_str(r#"{"b":["y"],"a":["x"]}"#).unwrap();
        assert_ne!(a.hash(), b.hash());
        let a2 = Lexicon::from_json_str(r#"{"a":["x"],"b":["y"]}"#).unwrap();
        assert_eq!(a.hash(), a2.hash());
    }

    #[test]
    fn demo_lexicon_has_default_width() {
        assert_eq!(Lexicon::demo().len(), DEFAULT_CATEGORY_COUNT);
    }
}
