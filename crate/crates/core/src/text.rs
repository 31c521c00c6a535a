//! Sentence segmentation and tokenization shared by the corpus filters,
//! lexicon features, the language model and the evaluation metrics.

use unicode_segmentation::UnicodeSegmentation;

/// Lower-cased abbreviations (without the trailing period) that never end a
/// sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "mx", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e", "approx",
    "appt", "dept", "no", "a.m", "p.m", "mt", "ft", "jan", "feb", "mar", "apr", "jun", "jul",
    "aug", "sep", "sept", "oct", "nov", "dec",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’')
}

/// Splits `text` into sentences on terminal punctuation (`.`, `!`, `?`)
/// followed by whitespace or end of text, and on newlines.
///
/// A period that ends a word listed in [`ABBREVIATIONS`] does not close a
/// sentence. Returned sentences are trimmed and never empty.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        split_line(line, &mut out);
    }
    out
}

fn split_line(line: &str, out: &mut Vec<String>) {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        // consume a run of terminals and closing quotes: "?!", "...", ".)"
        let mut j = i;
        while j + 1 < chars.len() && (is_terminal(chars[j + 1].1) || is_closing(chars[j + 1].1)) {
            j += 1;
        }
        let at_boundary = j + 1 >= chars.len() || chars[j + 1].1.is_whitespace();
        if at_boundary && !(c == '.' && j == i && ends_with_abbreviation(&line[start..chars[i].0])) {
            let end = if j + 1 < chars.len() { chars[j + 1].0 } else { line.len() };
            push_trimmed(&line[start..end], out);
            start = end;
        }
        i = j + 1;
    }
    push_trimmed(&line[start..], out);
}

fn ends_with_abbreviation(before_period: &str) -> bool {
    let word = before_period
        .rsplit(|c: char| c.is_whitespace() || c == '(' || c == '"')
        .next()
        .unwrap_or("");
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

fn push_trimmed(s: &str, out: &mut Vec<String>) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// Whitespace-delimited words; the unit of the corpus length filter.
pub fn whitespace_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Unicode words (UAX #29), case-folded. Punctuation is dropped.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

/// Word and punctuation tokens with original casing, whitespace dropped.
///
/// Special markers of the form `<|name|>` are kept as single tokens.
pub fn lm_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("<|") {
        let Some(close_rel) = rest[open..].find("|>") else {
            break;
        };
        let close = open + close_rel + 2;
        push_bounds(&rest[..open], &mut out);
        out.push(rest[open..close].to_string());
        rest = &rest[close..];
    }
    push_bounds(rest, &mut out);
    out
}

fn push_bounds(text: &str, out: &mut Vec<String>) {
    for piece in text.split_word_bounds() {
        if !piece.trim().is_empty() {
            out.push(piece.to_string());
        }
    }
}

/// Inverse of [`lm_tokens`] up to whitespace normalisation.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        let attach = tok.chars().all(|c| matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | ')'))
            || tok.starts_with('\'')
            || tok.starts_with('’');
        if !out.is_empty() && !attach && !out.ends_with('(') {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}
