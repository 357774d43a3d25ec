//! The five-way othering label space.
//!
//! A [`LabelVector`] carries four category flags plus `None`. `None` is
//! derived: it is set exactly when no category is set. Machine replies that
//! violate this are repaired toward the category flags and the repair is
//! reported.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::error::{Error, Result};

/// One of the five label keys. The first four are othering categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    CultureIdentity,
    SurvivalSecurity,
    Vilification,
    Dehumanization,
    None,
}

impl Key {
    pub const ALL: [Key; 5] = [
        Key::CultureIdentity,
        Key::SurvivalSecurity,
        Key::Vilification,
        Key::Dehumanization,
        Key::None,
    ];

    pub const CATEGORIES: [Key; 4] = [
        Key::CultureIdentity,
        Key::SurvivalSecurity,
        Key::Vilification,
        Key::Dehumanization,
    ];

    /// The display name used in prompts, replies and CSV headers.
    pub fn name(self) -> &'static str {
        match self {
            Key::CultureIdentity => "Threats to Culture or Identity",
            Key::SurvivalSecurity => "Threats to Survival or Physical Security",
            Key::Vilification => "Vilification/Villainization",
            Key::Dehumanization => "Explicit Dehumanization",
            Key::None => "None",
        }
    }

    pub fn from_name(name: &str) -> Option<Key> {
        let collapsed = name.split_whitespace().collect::<Vec<_>>().join(" ");
        Key::ALL.into_iter().find(|k| k.name() == collapsed)
    }

    pub fn is_category(self) -> bool {
        self != Key::None
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl Serialize for Key {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Key {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Key::from_name(&name)
            .ok_or_else(|| de::Error::custom(format!("unknown label key {name:?}")))
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Four category flags plus the derived `None` flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelVector {
    pub culture_identity: bool,
    pub survival_security: bool,
    pub vilification: bool,
    pub dehumanization: bool,
    pub none: bool,
}

impl LabelVector {
    /// Builds a consistent vector from the four category flags.
    pub fn from_categories(flags: [bool; 4]) -> Self {
        let mut v = LabelVector {
            culture_identity: flags[0],
            survival_security: flags[1],
            vilification: flags[2],
            dehumanization: flags[3],
            none: false,
        };
        v.none = !v.any_category();
        v
    }

    pub fn none_only() -> Self {
        Self::from_categories([false; 4])
    }

    pub fn get(&self, key: Key) -> bool {
        match key {
            Key::CultureIdentity => self.culture_identity,
            Key::SurvivalSecurity => self.survival_security,
            Key::Vilification => self.vilification,
            Key::Dehumanization => self.dehumanization,
            Key::None => self.none,
        }
    }

    pub fn set(&mut self, key: Key, value: bool) {
        match key {
            Key::CultureIdentity => self.culture_identity = value,
            Key::SurvivalSecurity => self.survival_security = value,
            Key::Vilification => self.vilification = value,
            Key::Dehumanization => self.dehumanization = value,
            Key::None => self.none = value,
        }
    }

    pub fn categories(&self) -> [bool; 4] {
        [
            self.culture_identity,
            self.survival_security,
            self.vilification,
            self.dehumanization,
        ]
    }

    pub fn any_category(&self) -> bool {
        self.categories().iter().any(|&f| f)
    }

    pub fn is_consistent(&self) -> bool {
        self.none != self.any_category()
    }

    /// Forces `none` to agree with the category flags. Returns whether a
    /// change was made.
    pub fn repair(&mut self) -> bool {
        let derived = !self.any_category();
        let changed = self.none != derived;
        self.none = derived;
        changed
    }

    /// Renders the mapping in the reply format annotators are asked to emit.
    pub fn to_reply_mapping(&self) -> String {
        let body = Key::ALL
            .iter()
            .map(|k| format!("'{}': {}", k.name(), u8::from(self.get(*k))))
            .collect::<Vec<_>>()
            .join(", ");
        format!("{{{body}}}")
    }
}

impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(5))?;
        for key in Key::ALL {
            map.serialize_entry(key.name(), &u8::from(self.get(key)))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct LabelVisitor;

        impl<'de> Visitor<'de> for LabelVisitor {
            type Value = LabelVector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a mapping of the five label keys to 0 or 1")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<LabelVector, A::Error> {
                let mut seen = BTreeSet::new();
                let mut v = LabelVector::default();
                while let Some((name, value)) = access.next_entry::<String, serde_json::Value>()? {
                    let key = Key::from_name(&name)
                        .ok_or_else(|| de::Error::custom(format!("unknown label key {name:?}")))?;
                    let flag = match value {
                        serde_json::Value::Bool(b) => b,
                        serde_json::Value::Number(n) if n.as_u64() == Some(0) => false,
                        serde_json::Value::Number(n) if n.as_u64() == Some(1) => true,
                        other => {
                            return Err(de::Error::custom(format!(
                                "label {name:?} must be 0 or 1, got {other}"
                            )))
                        }
                    };
                    v.set(key, flag);
                    seen.insert(key);
                }
                if seen.len() != 5 {
                    let missing: Vec<_> = Key::ALL
                        .iter()
                        .filter(|k| !seen.contains(k))
                        .map(|k| k.name())
                        .collect();
                    return Err(de::Error::custom(format!("missing label keys {missing:?}")));
                }
                Ok(v)
            }
        }

        deserializer.deserialize_map(LabelVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelParseError {
    #[error("no parseable label mapping in reply")]
    ParseFailure,
    #[error("label mapping does not match the schema: {offending:?}")]
    SchemaMismatch { offending: Vec<String> },
}

/// Result of parsing a machine reply.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLabels {
    pub labels: LabelVector,
    pub explanation: String,
    /// The reply's `None` flag disagreed with the categories and was fixed.
    pub repaired: bool,
    /// Byte ranges of each key's value within the raw reply, in [`Key::ALL`] order.
    pub value_spans: [Range<usize>; 5],
}

/// Extracts the label mapping and explanation from a model reply.
///
/// The first brace-delimited mapping whose keys are exactly the five label
/// names wins. Quote style and key order do not matter. If no mapping has the
/// right keys but some mapping parsed, the first one is reported as a schema
/// mismatch.
pub fn parse_machine_labels(raw: &str) -> Result<ParsedLabels, LabelParseError> {
    let mut first_mismatch: Option<Vec<String>> = None;
    let mut search_from = 0;
    while let Some(rel) = raw[search_from..].find('{') {
        let open = search_from + rel;
        let Some(close_rel) = raw[open..].find('}') else {
            break;
        };
        let close = open + close_rel;
        match parse_mapping(raw, open + 1, close) {
            Some(Ok((labels, spans))) => {
                let mut labels = labels;
                let repaired = labels.repair();
                let explanation = format!("{} {}", raw[..open].trim(), raw[close + 1..].trim())
                    .trim()
                    .to_string();
                return Ok(ParsedLabels {
                    labels,
                    explanation,
                    repaired,
                    value_spans: spans,
                });
            }
            Some(Err(offending)) => {
                first_mismatch.get_or_insert(offending);
            }
            None => {}
        }
        search_from = open + 1;
    }
    match first_mismatch {
        Some(offending) => Err(LabelParseError::SchemaMismatch { offending }),
        None => Err(LabelParseError::ParseFailure),
    }
}

type MappingOutcome = std::result::Result<(LabelVector, [Range<usize>; 5]), Vec<String>>;

/// Parses `'key': value, ...` between `start` and `end`. `None` when the text
/// is not a mapping at all; `Err` with offending keys when it is one but does
/// not fit the schema.
fn parse_mapping(raw: &str, start: usize, end: usize) -> Option<MappingOutcome> {
    let body = &raw[start..end];
    if body.trim().is_empty() {
        return None;
    }
    let mut entries: Vec<(String, &str, Range<usize>)> = Vec::new();
    let mut pos = 0;
    let bytes = body.as_bytes();
    loop {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b',') {
            pos += 1;
        }
        if pos >= bytes.len() {
            break;
        }
        let quote = bytes[pos];
        if quote != b'\'' && quote != b'"' {
            return None;
        }
        let key_start = pos + 1;
        let key_len = body[key_start..].find(quote as char)?;
        let key = body[key_start..key_start + key_len].to_string();
        pos = key_start + key_len + 1;
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() || bytes[pos] != b':' {
            return None;
        }
        pos += 1;
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let value_start = pos;
        while pos < bytes.len() && bytes[pos] != b',' {
            pos += 1;
        }
        let value = body[value_start..pos].trim_end();
        if value.is_empty() {
            return None;
        }
        let span = start + value_start..start + value_start + value.len();
        entries.push((key, value, span));
    }
    if entries.is_empty() {
        return None;
    }

    let mut offending = Vec::new();
    let mut labels = LabelVector::default();
    let mut spans: [Option<Range<usize>>; 5] = Default::default();
    for (name, value, span) in entries {
        let Some(key) = Key::from_name(&name) else {
            offending.push(name);
            continue;
        };
        if spans[key.index()].is_some() {
            offending.push(format!("{name} (duplicate)"));
            continue;
        }
        let value = value.trim_matches(|c| c == '\'' || c == '"');
        match value {
            "0" => labels.set(key, false),
            "1" => labels.set(key, true),
            _ => {
                offending.push(format!("{name}={value}"));
                continue;
            }
        }
        spans[key.index()] = Some(span);
    }
    for key in Key::ALL {
        if spans[key.index()].is_none() && !offending.iter().any(|o| o.starts_with(key.name())) {
            offending.push(format!("{} (missing)", key.name()));
        }
    }
    if !offending.is_empty() {
        return Some(Err(offending));
    }
    let spans = spans.map(|s| s.expect("all keys present"));
    Some(Ok((labels, spans)))
}

/// Who produced an annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorKind {
    Human,
    HqLlm,
    OsLlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub annotator_id: String,
    pub kind: AnnotatorKind,
    pub labels: LabelVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// All annotations collected for a single post.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    post_id: String,
    entries: Vec<AnnotationEntry>,
}

impl AnnotationSet {
    pub fn new(post_id: impl Into<String>, entries: Vec<AnnotationEntry>) -> Result<Self> {
        let post_id = post_id.into();
        if entries.is_empty() {
            return Err(Error::invalid(format!("post {post_id}: no annotations")));
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.annotator_id.as_str()) {
                return Err(Error::invalid(format!(
                    "post {post_id}: annotator {} appears twice",
                    e.annotator_id
                )));
            }
        }
        Ok(AnnotationSet { post_id, entries })
    }

    pub fn post_id(&self) -> &str {
        &self.post_id
    }

    pub fn entries(&self) -> &[AnnotationEntry] {
        &self.entries
    }

    pub fn entry(&self, annotator_id: &str) -> Option<&AnnotationEntry> {
        self.entries.iter().find(|e| e.annotator_id == annotator_id)
    }
}

/// Per-flag strict majority over the eligible annotators. Exact ties are
/// negative. `None` is derived afterwards.
pub fn majority_vote(set: &AnnotationSet, eligible: &[AnnotatorKind]) -> Result<LabelVector> {
    let votes: Vec<&LabelVector> = set
        .entries
        .iter()
        .filter(|e| eligible.contains(&e.kind))
        .map(|e| &e.labels)
        .collect();
    if votes.is_empty() {
        return Err(Error::invalid(format!(
            "post {}: no eligible annotators",
            set.post_id
        )));
    }
    let mut flags = [false; 4];
    for (i, key) in Key::CATEGORIES.iter().enumerate() {
        let yes = votes.iter().filter(|v| v.get(*key)).count();
        flags[i] = 2 * yes > votes.len();
    }
    Ok(LabelVector::from_categories(flags))
}

/// One line of a gold-set file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub post_id: String,
    pub annotator_id: String,
    pub kind: AnnotatorKind,
    pub labels: LabelVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// Reads a gold-set JSONL file and groups it per post (ordered by post id).
pub fn read_gold_set(path: &Path) -> Result<Vec<AnnotationSet>> {
    let records = read_gold_records(path)?;
    group_gold_records(records)
}

pub fn read_gold_records(path: &Path) -> Result<Vec<GoldRecord>> {
    let file = File::open(path).map_err(|e| Error::file(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GoldRecord = serde_json::from_str(&line)
            .map_err(|e| Error::file(path, format!("line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

pub fn group_gold_records(records: Vec<GoldRecord>) -> Result<Vec<AnnotationSet>> {
    let mut grouped: BTreeMap<String, Vec<AnnotationEntry>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.post_id).or_default().push(AnnotationEntry {
            annotator_id: r.annotator_id,
            kind: r.kind,
            labels: r.labels,
            explanation: r.explanation,
        });
    }
    grouped
        .into_iter()
        .map(|(post_id, entries)| AnnotationSet::new(post_id, entries))
        .collect()
}

pub fn append_gold_record(out: &mut impl Write, record: &GoldRecord) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Majority-vote gold labels for every post, keyed by post id.
pub fn gold_labels(
    sets: &[AnnotationSet],
    eligible: &[AnnotatorKind],
) -> Result<BTreeMap<String, LabelVector>> {
    sets.iter()
        .map(|s| Ok((s.post_id.clone(), majority_vote(s, eligible)?)))
        .collect()
}
