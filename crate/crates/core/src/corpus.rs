//! Helpline conversation model and the data-preparation procedures applied
//! to it: ingestion, de-identification, length filtering, logistics
//! stripping and reference-set curation.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judge::{PatternJudge, SentenceJudge};
use crate::text::{split_sentences, whitespace_words};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Seeker,
    Responder,
}

impl Speaker {
    pub fn as_str(&self) -> &'static str {
        match self {
            Speaker::Seeker => "seeker",
            Speaker::Responder => "responder",
        }
    }
}

impl FromStr for Speaker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seeker" => Ok(Speaker::Seeker),
            "responder" => Ok(Speaker::Responder),
            other => Err(Error::InvalidInput(format!("unknown speaker `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
    /// Ordinal within the conversation.
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    /// Responder identity, used only by gold-standard curation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responder_id: Option<String>,
}

/// A maximal run of consecutive messages by one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn<'a> {
    pub speaker: Speaker,
    pub messages: &'a [Message],
}

impl Turn<'_> {
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.trim())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub messages: Vec<Message>,
}

impl Conversation {
    pub fn turn_ranges(&self) -> Vec<(Speaker, Range<usize>)> {
        let mut out: Vec<(Speaker, Range<usize>)> = Vec::new();
        for (i, m) in self.messages.iter().enumerate() {
            match out.last_mut() {
                Some((speaker, range)) if *speaker == m.speaker => range.end = i + 1,
                _ => out.push((m.speaker, i..i + 1)),
            }
        }
        out
    }

    pub fn turns(&self) -> Vec<Turn<'_>> {
        self.turn_ranges()
            .into_iter()
            .map(|(speaker, r)| Turn {
                speaker,
                messages: &self.messages[r],
            })
            .collect()
    }

    pub fn turn_count(&self) -> usize {
        self.turn_ranges().len()
    }

    pub fn word_count(&self) -> usize {
        self.messages.iter().map(|m| whitespace_words(&m.text)).sum()
    }

    fn reindexed(id: String, messages: Vec<Message>) -> Self {
        let messages = messages
            .into_iter()
            .enumerate()
            .map(|(i, m)| Message { index: i, ..m })
            .collect();
        Conversation { id, messages }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub conversations: Vec<Conversation>,
    pub provenance: String,
}

impl Corpus {
    pub fn new(conversations: Vec<Conversation>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &conversations {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate conversation id `{}`", c.id)));
            }
        }
        Ok(Corpus {
            conversations,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.conversations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conversations.is_empty()
    }

    pub fn turn_count(&self) -> usize {
        self.conversations.iter().map(Conversation::turn_count).sum()
    }

    /// Writes the corpus as line-delimited JSON records.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for c in &self.conversations {
            for m in &c.messages {
                let rec = RecordOut {
                    conversation_id: &c.id,
                    speaker: m.speaker,
                    text: &m.text,
                    timestamp: m.timestamp.as_deref(),
                    responder_id: m.responder_id.as_deref(),
                };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct RecordOut<'a> {
    conversation_id: &'a str,
    speaker: Speaker,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    responder_id: Option<&'a str>,
}

#[derive(Deserialize)]
struct RecordIn {
    conversation_id: Option<serde_json::Value>,
    speaker: Option<String>,
    text: Option<String>,
    timestamp: Option<String>,
    responder_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub corpus: Corpus,
    pub rejects: Vec<Reject>,
}

impl ParseOutcome {
    /// Plain-text rejects report, one line per rejected record.
    pub fn rejects_report(&self) -> String {
        self.rejects
            .iter()
            .map(|r| format!("line {}: {}\n", r.line, r.reason))
            .collect()
    }
}

/// Reads line-delimited JSON records into a corpus. Messages are grouped by
/// `conversation_id` in order of first appearance; malformed records are
/// reported, never dropped silently. Blank lines are not records.
pub fn parse_corpus<R: BufRead>(reader: R, provenance: impl Into<String>) -> Result<ParseOutcome> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<Message>> = HashMap::new();
    let mut rejects = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordIn = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                rejects.push(Reject {
                    line: lineno,
                    reason: format!("malformed JSON: {e}"),
                });
                continue;
            }
        };
        let id = match rec.conversation_id {
            Some(serde_json::Value::String(s)) if !s.is_empty() => s,
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => {
                rejects.push(Reject {
                    line: lineno,
                    reason: "missing conversation_id".into(),
                });
                continue;
            }
        };
        let speaker = match rec.speaker.as_deref().map(Speaker::from_str) {
            Some(Ok(s)) => s,
            Some(Err(e)) => {
                rejects.push(Reject {
                    line: lineno,
                    reason: e.to_string(),
                });
                continue;
            }
            None => {
                rejects.push(Reject {
                    line: lineno,
                    reason: "missing speaker".into(),
                });
                continue;
            }
        };
        let text = match rec.text {
            Some(t) if !t.trim().is_empty() => t,
            Some(_) => {
                rejects.push(Reject {
                    line: lineno,
                    reason: "empty text".into(),
                });
                continue;
            }
            None => {
                rejects.push(Reject {
                    line: lineno,
                    reason: "missing text".into(),
                });
                continue;
            }
        };
        let msgs = grouped.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        msgs.push(Message {
            speaker,
            text,
            index: msgs.len(),
            timestamp: rec.timestamp,
            responder_id: rec.responder_id,
        });
    }

    let conversations = order
        .into_iter()
        .map(|id| {
            let messages = grouped.remove(&id).unwrap_or_default();
            Conversation { id, messages }
        })
        .collect();
    Ok(ParseOutcome {
        corpus: Corpus {
            conversations,
            provenance: provenance.into(),
        },
        rejects,
    })
}

pub fn read_corpus_file(path: &Path) -> Result<ParseOutcome> {
    let f = std::fs::File::open(path)?;
    parse_corpus(std::io::BufReader::new(f), path.display().to_string())
}

// ---------------------------------------------------------------------------
// De-identification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Person,
    Place,
    Phone,
    Url,
    Org,
}

impl EntityKind {
    pub fn placeholder(&self) -> &'static str {
        match self {
            EntityKind::Person => "PSI_PERSON",
            EntityKind::Place => "PSI_PLACE",
            EntityKind::Phone => "PSI_PHONE",
            EntityKind::Url => "PSI_URL",
            EntityKind::Org => "PSI_ORG",
        }
    }
}

/// Byte span `[start, end)` of a tagged entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub kind: EntityKind,
}

/// Named-entity adapter used by [`deidentify`].
pub trait EntityTagger: Send + Sync {
    fn name(&self) -> &str;
    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>>;
}

fn placeholder_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"PSI_(PERSON|PLACE|PHONE|URL|ORG)").expect("static regex"))
}

/// Replaces every tagged span with its standard placeholder. Spans that
/// touch an existing placeholder are ignored, which makes the operation
/// idempotent. Overlapping spans keep the earliest (then longest) one.
pub fn deidentify(text: &str, tagger: &dyn EntityTagger) -> Result<String> {
    let mut spans = tagger.tag(text)?;
    for s in &spans {
        if s.start >= s.end
            || s.end > text.len()
            || !text.is_char_boundary(s.start)
            || !text.is_char_boundary(s.end)
        {
            return Err(Error::adapter(
                tagger.name(),
                format!("invalid span {}..{} for text of length {}", s.start, s.end, text.len()),
            ));
        }
    }
    let protected: Vec<Range<usize>> = placeholder_regex().find_iter(text).map(|m| m.range()).collect();
    spans.retain(|s| !protected.iter().any(|p| s.start < p.end && p.start < s.end));
    spans.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));

    let mut out = String::with_capacity(text.len());
    let mut cursor = 0usize;
    for s in spans {
        if s.start < cursor {
            continue;
        }
        out.push_str(&text[cursor..s.start]);
        out.push_str(s.kind.placeholder());
        cursor = s.end;
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}

/// Offline tagger: regular expressions for phones and URLs plus gazetteers
/// of person, place and organisation names matched on word boundaries.
#[derive(Debug, Clone)]
pub struct PatternTagger {
    rules: Vec<(Regex, EntityKind)>,
}

impl PatternTagger {
    pub fn new(persons: &[String], places: &[String], orgs: &[String]) -> Result<Self> {
        let mut rules = vec![
            (
                Regex::new(r"(?i)\b(?:https?://|www\.)[^\s]+").expect("static regex"),
                EntityKind::Url,
            ),
            (
                Regex::new(r"(?:\+?1[\s.-]?)?\(?\b\d{3}\)?[\s.-]?\d{3}[\s.-]?\d{4}\b").expect("static regex"),
                EntityKind::Phone,
            ),
        ];
        for (names, kind) in [(persons, EntityKind::Person), (places, EntityKind::Place), (orgs, EntityKind::Org)] {
            let names: Vec<String> = names
                .iter()
                .map(|n| n.trim())
                .filter(|n| !n.is_empty())
                .map(regex::escape)
                .collect();
            if names.is_empty() {
                continue;
            }
            let re = Regex::new(&format!(r"\b(?:{})\b", names.join("|")))
                .map_err(|e| Error::InvalidInput(format!("gazetteer: {e}")))?;
            rules.push((re, kind));
        }
        Ok(Self { rules })
    }
}

impl EntityTagger for PatternTagger {
    fn name(&self) -> &str {
        "pattern-tagger"
    }

    fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
        let mut spans = Vec::new();
        for (re, kind) in &self.rules {
            for m in re.find_iter(text) {
                spans.push(EntitySpan {
                    start: m.start(),
                    end: m.end(),
                    kind: *kind,
                });
            }
        }
        Ok(spans)
    }
}

/// Applies [`deidentify`] to every message.
pub fn deidentify_corpus(corpus: &Corpus, tagger: &dyn EntityTagger) -> Result<Corpus> {
    let conversations = corpus
        .conversations
        .iter()
        .map(|c| {
            let messages = c
                .messages
                .iter()
                .map(|m| {
                    Ok(Message {
                        text: deidentify(&m.text, tagger)?,
                        ..m.clone()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Conversation {
                id: c.id.clone(),
                messages,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        conversations,
        provenance: corpus.provenance.clone(),
    })
}

// ---------------------------------------------------------------------------
// Filters

/// Keeps conversations with at least `min_turns` turns and `min_words`
/// whitespace-delimited words in total.
pub fn filter_by_length(corpus: &Corpus, min_turns: usize, min_words: usize) -> Result<Corpus> {
    if min_turns == 0 || min_words == 0 {
        return Err(Error::InvalidInput("length thresholds must be >= 1".into()));
    }
    Ok(Corpus {
        conversations: corpus
            .conversations
            .iter()
            .filter(|c| c.turn_count() >= min_turns && c.word_count() >= min_words)
            .cloned()
            .collect(),
        provenance: corpus.provenance.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct StripOutcome {
    pub corpus: Corpus,
    pub turns_before: usize,
    /// Original turns that kept at least one message.
    pub turns_retained: usize,
    /// `turns_retained / turns_before`, 1.0 for an empty corpus.
    pub retention_ratio: f64,
    /// Sentences kept because the filter failed on them.
    pub filter_failures: usize,
}

/// Removes responder sentences the filter labels as logistics and seeker
/// messages matching the coordination patterns. Responder messages left
/// without sentences are dropped; retained sentences are copied verbatim.
pub fn strip_logistics(
    corpus: &Corpus,
    sentence_filter: &dyn SentenceJudge,
    coordination: &PatternJudge,
) -> Result<StripOutcome> {
    let mut turns_before = 0usize;
    let mut turns_retained = 0usize;
    let mut filter_failures = 0usize;
    let mut conversations = Vec::with_capacity(corpus.len());

    for conv in &corpus.conversations {
        let mut kept: Vec<Message> = Vec::new();
        for (speaker, range) in conv.turn_ranges() {
            turns_before += 1;
            let mut kept_in_turn = 0usize;
            for m in &conv.messages[range] {
                let text = match speaker {
                    Speaker::Seeker => (!coordination.is_match(&m.text)).then(|| m.text.clone()),
                    Speaker::Responder => {
                        let mut keep = Vec::new();
                        for s in split_sentences(&m.text) {
                            match sentence_filter.judge(&s) {
                                Ok(true) => {}
                                Ok(false) => keep.push(s),
                                Err(e) => {
                                    tracing::warn!(conversation = %conv.id, error = %e, "sentence filter failed; keeping sentence");
                                    filter_failures += 1;
                                    keep.push(s);
                                }
                            }
                        }
                        (!keep.is_empty()).then(|| keep.join(" "))
                    }
                };
                if let Some(text) = text {
                    kept_in_turn += 1;
                    kept.push(Message { text, ..m.clone() });
                }
            }
            if kept_in_turn > 0 {
                turns_retained += 1;
            }
        }
        if !kept.is_empty() {
            conversations.push(Conversation::reindexed(conv.id.clone(), kept));
        }
    }

    let retention_ratio = if turns_before == 0 {
        1.0
    } else {
        turns_retained as f64 / turns_before as f64
    };
    Ok(StripOutcome {
        corpus: Corpus {
            conversations,
            provenance: corpus.provenance.clone(),
        },
        turns_before,
        turns_retained,
        retention_ratio,
        filter_failures,
    })
}

// ---------------------------------------------------------------------------
// Reference sets

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Gold,
    Average,
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceKind::Gold => "gold",
            ReferenceKind::Average => "average",
        })
    }
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gold" => Ok(ReferenceKind::Gold),
            "average" => Ok(ReferenceKind::Average),
            other => Err(Error::InvalidInput(format!("unknown reference kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub input: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSet {
    pub pairs: Vec<ReferencePair>,
    pub kind: ReferenceKind,
    pub seed: u64,
}

impl ReferenceSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.pairs)?)
    }

    pub fn from_json(s: &str, kind: ReferenceKind, seed: u64) -> Result<Self> {
        let pairs: Vec<ReferencePair> = serde_json::from_str(s)?;
        Ok(Self { pairs, kind, seed })
    }

    pub fn read(path: &Path, kind: ReferenceKind) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, kind, 0)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub struct CurationJudges<'a> {
    pub empathy: &'a dyn SentenceJudge,
    pub severe: &'a dyn SentenceJudge,
    pub logistics: &'a dyn SentenceJudge,
    /// Advice/resource phrasing, checked alongside the logistics filter.
    pub advice: &'a PatternJudge,
}

#[derive(Debug, Clone)]
pub struct CurationConfig {
    pub n: usize,
    pub kind: ReferenceKind,
    pub seed: u64,
    /// Responder ids eligible for the gold standard.
    pub gold_responders: HashSet<String>,
}

/// Samples `n` adjacent (seeker turn, responder turn) pairs whose output
/// contains empathy and no logistics/advice, and whose input shows no
/// severe symptoms. Gold sets also require every message of the output to
/// come from an allow-listed responder.
pub fn curate_reference_set(
    corpus: &Corpus,
    config: &CurationConfig,
    judges: &CurationJudges<'_>,
) -> Result<ReferenceSet> {
    if config.kind == ReferenceKind::Gold && config.gold_responders.is_empty() {
        return Err(Error::InvalidInput("gold reference set needs a responder allow-list".into()));
    }
    let mut eligible = Vec::new();
    for conv in &corpus.conversations {
        let turns = conv.turns();
        for w in turns.windows(2) {
            let (input, output) = (&w[0], &w[1]);
            if input.speaker != Speaker::Seeker || output.speaker != Speaker::Responder {
                continue;
            }
            if config.kind == ReferenceKind::Gold
                && !output.messages.iter().all(|m| {
                    m.responder_id
                        .as_ref()
                        .is_some_and(|id| config.gold_responders.contains(id))
                })
            {
                continue;
            }
            let input_text = input.text();
            let output_text = output.text();
            if pair_is_eligible(&input_text, &output_text, judges)? {
                eligible.push(ReferencePair {
                    input: input_text,
                    reference: output_text,
                });
            }
        }
    }
    if eligible.len() < config.n {
        return Err(Error::InsufficientData(format!(
            "requested {} reference pairs but only {} eligible",
            config.n,
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(config.n);
    Ok(ReferenceSet {
        pairs: eligible,
        kind: config.kind,
        seed: config.seed,
    })
}

fn pair_is_eligible(input: &str, output: &str, judges: &CurationJudges<'_>) -> Result<bool> {
    for s in split_sentences(input) {
        if judges.severe.judge(&s)? {
            return Ok(false);
        }
    }
    let mut has_empathy = false;
    for s in split_sentences(output) {
        if judges.logistics.judge(&s)? || judges.advice.is_match(&s) {
            return Ok(false);
        }
        has_empathy |= judges.empathy.judge(&s)?;
    }
    Ok(has_empathy)
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub conversations: usize,
    pub messages: usize,
    pub seeker_messages: usize,
    pub seeker_fraction: f64,
    pub turns: usize,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let messages: usize = corpus.conversations.iter().map(|c| c.messages.len()).sum();
    let seeker_messages = corpus
        .conversations
        .iter()
        .flat_map(|c| &c.messages)
        .filter(|m| m.speaker == Speaker::Seeker)
        .count();
    CorpusStats {
        conversations: corpus.len(),
        messages,
        seeker_messages,
        seeker_fraction: if messages == 0 {
            0.0
        } else {
            seeker_messages as f64 / messages as f64
        },
        turns: corpus.turn_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn conv(id: &str, msgs: &[(Speaker, &str)]) -> Conversation {
        Conversation {
            id: id.into(),
            messages: msgs
                .iter()
                .enumerate()
                .map(|(i, (s, t))| Message {
                    speaker: *s,
                    text: (*t).into(),
                    index: i,
                    timestamp: None,
                    responder_id: None,
                })
                .collect(),
        }
    }

    use Speaker::{Responder as R, Seeker as S};

    #[test]
    fn parses_and_groups_records() {
        let input = r#"{"conversation_id":"a","speaker":"seeker","text":"hi"}
{"conversation_id":"b","speaker":"seeker","text":"hello"}
{"conversation_id":"a","speaker":"responder","text":"hi there"}
{"conversation_id":"b","speaker":"responder","text":"welcome","timestamp":"2020-01-01T00:00:00Z"}
"#;
        let out = parse_corpus(input.as_bytes(), "test").unwrap();
        assert!(out.rejects.is_empty());
        assert_eq!(out.corpus.len(), 2);
        assert_eq!(out.corpus.conversations[0].id, "a");
        assert!(out.corpus.conversations.iter().all(|c| c.messages.len() == 2));
        assert_eq!(out.corpus.conversations[1].messages[1].index, 1);
    }

    #[test]
    fn empty_stream_is_empty_corpus() {
        let out = parse_corpus("".as_bytes(), "empty").unwrap();
        assert!(out.corpus.is_empty());
        assert!(out.rejects.is_empty());
    }

    #[test]
    fn missing_text_is_rejected_with_line_number() {
        let input = "{\"conversation_id\":\"a\",\"speaker\":\"seeker\",\"text\":\"hi\"}\n{\"conversation_id\":\"a\",\"speaker\":\"responder\"}\nnot json\n";
        let out = parse_corpus(input.as_bytes(), "t").unwrap();
        assert_eq!(out.corpus.conversations[0].messages.len(), 1);
        assert_eq!(out.rejects.len(), 2);
        assert_eq!(out.rejects[0].line, 2);
        assert!(out.rejects[0].reason.contains("missing text"));
        assert!(out.rejects_report().starts_with("line 2: missing text\n"));
    }

    #[test]
    fn unknown_speaker_is_rejected() {
        let input = "{\"conversation_id\":\"a\",\"speaker\":\"bot\",\"text\":\"hi\"}\n";
        let out = parse_corpus(input.as_bytes(), "t").unwrap();
        assert_eq!(out.rejects.len(), 1);
    }

    #[test]
    fn jsonl_round_trip() {
        let c = Corpus::new(vec![conv("x", &[(S, "one two"), (R, "three")])], "p").unwrap();
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        let back = parse_corpus(buf.as_slice(), "p").unwrap();
        assert_eq!(back.corpus, c);
    }

    struct FixedTagger(Vec<(&'static str, EntityKind)>);

    impl EntityTagger for FixedTagger {
        fn name(&self) -> &str {
            "fixed"
        }
        fn tag(&self, text: &str) -> Result<Vec<EntitySpan>> {
            let mut out = Vec::new();
            for (needle, kind) in &self.0 {
                for (i, _) in text.match_indices(needle) {
                    out.push(EntitySpan {
                        start: i,
                        end: i + needle.len(),
                        kind: *kind,
                    });
                }
            }
            Ok(out)
        }
    }

    struct FailingTagger;

    impl EntityTagger for FailingTagger {
        fn name(&self) -> &str {
            "failing"
        }
        fn tag(&self, _: &str) -> Result<Vec<EntitySpan>> {
            Err(Error::adapter("failing", "model not loaded"))
        }
    }

    #[test]
    fn deidentify_replaces_tagged_spans() {
        let t = FixedTagger(vec![("Ada", EntityKind::Person), ("Austin", EntityKind::Place)]);
        assert_eq!(
            deidentify("my name is Ada, I live in Austin", &t).unwrap(),
            "my name is PSI_PERSON, I live in PSI_PLACE"
        );
    }

    #[test]
    fn deidentify_leaves_placeholders_alone() {
        // a tagger that would tag the placeholder itself
        let t = FixedTagger(vec![("PSI_PHONE", EntityKind::Phone), ("PHONE", EntityKind::Org)]);
        assert_eq!(deidentify("call PSI_PHONE", &t).unwrap(), "call PSI_PHONE");
    }

    #[test]
    fn deidentify_without_entities_is_identity() {
        let t = FixedTagger(vec![]);
        assert_eq!(deidentify("nothing here", &t).unwrap(), "nothing here");
    }

    #[test]
    fn deidentify_surfaces_tagger_failure() {
        assert!(deidentify("Ada", &FailingTagger).is_err());
    }

    #[test]
    fn deidentify_rejects_out_of_bounds_span() {
        struct Bad;
        impl EntityTagger for Bad {
            fn name(&self) -> &str {
                "bad"
            }
            fn tag(&self, _: &str) -> Result<Vec<EntitySpan>> {
                Ok(vec![EntitySpan {
                    start: 0,
                    end: 99,
                    kind: EntityKind::Person,
                }])
            }
        }
        assert!(deidentify("short", &Bad).is_err());
    }

    #[test]
    fn pattern_tagger_finds_phones_urls_and_names() {
        let t = PatternTagger::new(&["Ada".into()], &["Austin".into()], &["Acme Clinic".into()]).unwrap();
        let out = deidentify(
            "Ada from Austin said call 512-555-0199 or see https://example.org/x at Acme Clinic",
            &t,
        )
        .unwrap();
        assert_eq!(
            out,
            "PSI_PERSON from PSI_PLACE said call PSI_PHONE or see PSI_URL at PSI_ORG"
        );
        assert_eq!(deidentify(&out, &t).unwrap(), out);
    }

    #[test]
    fn turns_are_maximal_speaker_runs() {
        let c = conv("t", &[(S, "a"), (S, "b"), (R, "c"), (S, "d")]);
        assert_eq!(c.turn_count(), 3);
        assert_eq!(c.turns()[0].text(), "a b");
    }

    fn words(n: usize) -> String {
        vec!["w"; n].join(" ")
    }

    #[test]
    fn two_turn_conversation_is_removed_even_when_long() {
        let long = words(100);
        let c = Corpus::new(vec![conv("a", &[(S, &long), (R, &long)])], "").unwrap();
        assert!(filter_by_length(&c, 3, 50).unwrap().is_empty());
    }

    #[test]
    fn three_turns_fifty_words_is_retained() {
        let c = Corpus::new(vec![conv("a", &[(S, &words(20)), (R, &words(20)), (S, &words(10))])], "").unwrap();
        assert_eq!(c.conversations[0].word_count(), 50);
        assert_eq!(filter_by_length(&c, 3, 50).unwrap().len(), 1);
        assert!(filter_by_length(&c, 3, 51).unwrap().is_empty());
    }

    #[test]
    fn filter_on_empty_corpus_and_bad_thresholds() {
        assert!(filter_by_length(&Corpus::default(), 3, 50).unwrap().is_empty());
        assert!(filter_by_length(&Corpus::default(), 0, 50).is_err());
    }

    #[test]
    fn strip_removes_logistics_turn() {
        let c = Corpus::new(
            vec![conv(
                "a",
                &[
                    (S, "I feel overwhelmed."),
                    (R, "I have reached out to our coordinator."),
                    (S, "I cry every night."),
                    (R, "You are doing the best you can."),
                ],
            )],
            "",
        )
        .unwrap();
        let out = strip_logistics(&c, &PatternJudge::logistics(), &PatternJudge::coordination()).unwrap();
        let texts: Vec<&str> = out.corpus.conversations[0].messages.iter().map(|m| m.text.as_str()).collect();
        assert_eq!(
            texts,
            vec!["I feel overwhelmed.", "I cry every night.", "You are doing the best you can."]
        );
        assert_eq!(out.turns_before, 4);
        assert_eq!(out.turns_retained, 3);
    }

    #[test]
    fn strip_with_all_emotional_keeps_everything() {
        let c = Corpus::new(vec![conv("a", &[(S, "I feel low."), (R, "That is hard. You matter.")])], "").unwrap();
        let never = |_: &str| -> Result<bool> { Ok(false) };
        let out = strip_logistics(&c, &never, &PatternJudge::coordination()).unwrap();
        assert_eq!(out.retention_ratio, 1.0);
        assert_eq!(out.corpus, c);
    }

    #[test]
    fn strip_fails_open_on_filter_error() {
        let c = Corpus::new(vec![conv("a", &[(S, "I feel low."), (R, "Hang in there.")])], "").unwrap();
        let broken = |_: &str| -> Result<bool> { Err(Error::adapter("x", "down")) };
        let out = strip_logistics(&c, &broken, &PatternJudge::coordination()).unwrap();
        assert_eq!(out.filter_failures, 1);
        assert_eq!(out.corpus, c);
    }

    fn curation_corpus() -> Corpus {
        let mut convs = Vec::new();
        for i in 0..5 {
            convs.push(conv(
                &format!("c{i}"),
                &[(S, &format!("I am struggling {i}.")), (R, "That sounds so hard. You are not alone.")],
            ));
        }
        convs.push(conv("logi", &[(S, "I am tired."), (R, "You are not alone. I reached out to our coordinator.")]));
        convs.push(conv("sev", &[(S, "I want to end my life."), (R, "You are not alone.")]));
        Corpus::new(convs, "").unwrap()
    }

    fn empathy(s: &str) -> Result<bool> {
        Ok(s.contains("not alone") || s.contains("so hard"))
    }

    fn severe(s: &str) -> Result<bool> {
        Ok(s.contains("end my life"))
    }

    #[test]
    fn curation_is_seed_reproducible_and_excludes_ineligible() {
        let c = curation_corpus();
        let logistics = PatternJudge::logistics();
        let advice = PatternJudge::advice();
        let judges = CurationJudges {
            empathy: &empathy,
            severe: &severe,
            logistics: &logistics,
            advice: &advice,
        };
        let cfg = CurationConfig {
            n: 3,
            kind: ReferenceKind::Average,
            seed: 11,
            gold_responders: HashSet::new(),
        };
        let a = curate_reference_set(&c, &cfg, &judges).unwrap();
        let b = curate_reference_set(&c, &cfg, &judges).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.pairs.iter().all(|p| p.input.starts_with("I am struggling")));

        let too_many = CurationConfig { n: 6, ..cfg };
        let err = curate_reference_set(&c, &too_many, &judges).unwrap_err();
        assert!(err.to_string().contains("only 5 eligible"));
    }

    #[test]
    fn curation_with_no_empathy_reports_zero_eligible() {
        let c = curation_corpus();
        let none = |_: &str| -> Result<bool> { Ok(false) };
        let logistics = PatternJudge::logistics();
        let advice = PatternJudge::advice();
        let judges = CurationJudges {
            empathy: &none,
            severe: &severe,
            logistics: &logistics,
            advice: &advice,
        };
        let cfg = CurationConfig {
            n: 1,
            kind: ReferenceKind::Average,
            seed: 0,
            gold_responders: HashSet::new(),
        };
        let err = curate_reference_set(&c, &cfg, &judges).unwrap_err();
        assert!(err.to_string().contains("only 0 eligible"), "{err}");
    }

    #[test]
    fn gold_requires_allow_listed_responders() {
        let mut c = curation_corpus();
        c.conversations[0].messages[1].responder_id = Some("best".into());
        let logistics = PatternJudge::logistics();
        let advice = PatternJudge::advice();
        let judges = CurationJudges {
            empathy: &empathy,
            severe: &severe,
            logistics: &logistics,
            advice: &advice,
        };
        let cfg = CurationConfig {
            n: 1,
            kind: ReferenceKind::Gold,
            seed: 0,
            gold_responders: ["best".to_string()].into_iter().collect(),
        };
        let set = curate_reference_set(&c, &cfg, &judges).unwrap();
        assert_eq!(set.pairs[0].input, "I am struggling 0.");
        assert!(curate_reference_set(&c, &CurationConfig { n: 2, ..cfg }, &judges).is_err());
    }

    #[test]
    fn reference_file_round_trip() {
        let set = ReferenceSet {
            pairs: vec![ReferencePair {
                input: "a".into(),
                reference: "b".into(),
            }],
            kind: ReferenceKind::Gold,
            seed: 0,
        };
        let json = set.to_json().unwrap();
        assert!(json.contains("\"reference\""));
        assert_eq!(ReferenceSet::from_json(&json, ReferenceKind::Gold, 0).unwrap(), set);
    }

    #[test]
    fn stats_count_seekers() {
        let c = Corpus::new(
            vec![
                conv("a", &[(S, "x"), (R, "y"), (S, "z"), (R, "w"), (R, "v")]),
                conv("b", &[(S, "x"), (R, "y"), (S, "z"), (R, "w"), (R, "v")]),
            ],
            "",
        )
        .unwrap();
        let s = corpus_stats(&c);
        assert_eq!(s.messages, 10);
        assert_eq!(s.seeker_messages, 4);
        assert!((s.seeker_fraction - 0.4).abs() < 1e-12);
        assert_eq!(s.turns, 8);
        assert_eq!(corpus_stats(&Corpus::default()), CorpusStats::default());
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Corpus::new(vec![conv("a", &[(S, "x")]), conv("a", &[(S, "y")])], "").is_err());
    }
}
