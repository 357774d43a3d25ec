//! Post corpora: ingestion, validation, sampling and splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SubsecRound, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Fraction of rejected lines above which ingestion fails outright.
pub const MAX_REJECT_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefKind {
    Forward,
    Mention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub target: String,
    pub kind: RefKind,
}

/// The six moral-device tags produced by an external tagger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoralVector {
    pub purity: bool,
    pub authority: bool,
    pub equality: bool,
    pub loyalty: bool,
    pub care: bool,
    pub proportionality: bool,
}

impl MoralVector {
    pub fn any(&self) -> bool {
        self.purity
            || self.authority
            || self.equality
            || self.loyalty
            || self.care
            || self.proportionality
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    ProRussia,
    ProUkraine,
    Other,
}

impl Stance {
    pub fn as_str(self) -> &'static str {
        match self {
            Stance::ProRussia => "pro_russia",
            Stance::ProUkraine => "pro_ukraine",
            Stance::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Stance> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "pro_russia" => Some(Stance::ProRussia),
            "pro_ukraine" => Some(Stance::ProUkraine),
            "other" => Some(Stance::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub id: String,
    pub declared_stance: Option<Stance>,
    pub bio: Option<String>,
}

impl Channel {
    pub fn bare(id: impl Into<String>) -> Self {
        Channel {
            id: id.into(),
            declared_stance: None,
            bio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub channel_id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub views: Option<u64>,
    pub refs: Vec<Reference>,
    pub moral: Option<MoralVector>,
    pub toxicity: Option<f64>,
    pub fear_speech: Option<bool>,
    pub hate_speech: Option<bool>,
}

impl Post {
    /// A post with only the required fields set.
    pub fn new(
        id: impl Into<String>,
        channel_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        text: impl Into<String>,
    ) -> Self {
        Post {
            id: id.into(),
            channel_id: channel_id.into(),
            timestamp,
            text: text.into(),
            views: None,
            refs: Vec::new(),
            moral: None,
            toxicity: None,
            fear_speech: None,
            hate_speech: None,
        }
    }
}

/// Posts ordered by `(timestamp, id)` plus the channels they belong to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    posts: Vec<Post>,
    channels: BTreeMap<String, Channel>,
}

impl Corpus {
    /// Builds a corpus, creating bare channels for any unknown `channel_id`.
    pub fn new(mut posts: Vec<Post>, mut channels: BTreeMap<String, Channel>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for p in &posts {
            if p.id.is_empty() {
                return Err(Error::invalid("post with empty id"));
            }
            if !ids.insert(p.id.as_str()) {
                return Err(Error::invalid(format!("duplicate post id {}", p.id)));
            }
            if let Some(t) = p.toxicity {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::invalid(format!("post {}: toxicity {t}", p.id)));
                }
            }
        }
        for p in &posts {
            channels
                .entry(p.channel_id.clone())
                .or_insert_with(|| Channel::bare(&p.channel_id));
        }
        posts.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
        Ok(Corpus { posts, channels })
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn channels(&self) -> &BTreeMap<String, Channel> {
        &self.channels
    }

    pub fn post(&self, id: &str) -> Option<&Post> {
        self.posts.iter().find(|p| p.id == id)
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Replaces channel metadata (stance, bio) for known or new channels.
    pub fn attach_channels(&mut self, channels: impl IntoIterator<Item = Channel>) {
        for c in channels {
            self.channels.insert(c.id.clone(), c);
        }
    }

    /// Writes the corpus in the telegram JSONL schema.
    pub fn write_jsonl(&self, out: impl Write) -> Result<()> {
        let mut out = BufWriter::new(out);
        for p in &self.posts {
            serde_json::to_writer(&mut out, &TelegramRecord::from(p))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::file(path, e.to_string()))?;
        self.write_jsonl(file)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    Telegram,
    Gab,
}

impl std::str::FromStr for Schema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "telegram" => Ok(Schema::Telegram),
            "gab" => Ok(Schema::Gab),
            other => Err(Error::invalid(format!("unknown schema {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Duplicate {
    pub id: String,
    pub line: usize,
    pub first_line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub lines_read: usize,
    pub loaded: usize,
    pub rejected: Vec<RecordError>,
    pub duplicates: Vec<Duplicate>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TelegramRecord {
    id: String,
    channel_id: String,
    ts: String,
    text: String,
    #[serde(default)]
    views: Option<i64>,
    #[serde(default)]
    refs: Vec<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    moral: Option<MoralVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    toxicity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fear_speech: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hate_speech: Option<bool>,
}

impl From<&Post> for TelegramRecord {
    fn from(p: &Post) -> Self {
        TelegramRecord {
            id: p.id.clone(),
            channel_id: p.channel_id.clone(),
            ts: p.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            text: p.text.clone(),
            views: p.views.map(|v| v as i64),
            refs: p.refs.clone(),
            moral: p.moral,
            toxicity: p.toxicity,
            fear_speech: p.fear_speech,
            hate_speech: p.hate_speech,
        }
    }
}

#[derive(Debug, Deserialize)]
struct GabRecord {
    id: String,
    text: String,
    fear_speech: bool,
    hate_speech: bool,
    #[allow(dead_code)]
    normal: bool,
    #[serde(default)]
    channel_id: Option<String>,
    #[serde(default)]
    ts: Option<String>,
}

/// Channel id given to Gab posts that carry none.
pub const GAB_CHANNEL: &str = "gab";

/// Parses an ISO-8601 instant. Inputs without a zone are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc).trunc_subsecs(0));
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc().trunc_subsecs(0));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|n| n.and_utc())
}

fn parse_line(line: &str, schema: Schema) -> std::result::Result<Post, String> {
    match schema {
        Schema::Telegram => {
            let r: TelegramRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
            if r.id.is_empty() {
                return Err("empty id".into());
            }
            let timestamp = parse_timestamp(&r.ts)
                .ok_or_else(|| format!("unparseable timestamp {:?}", r.ts))?;
            let views = match r.views {
                Some(v) if v < 0 => return Err("views < 0".into()),
                Some(v) => Some(v as u64),
                None => None,
            };
            if let Some(t) = r.toxicity {
                if !(0.0..=1.0).contains(&t) {
                    return Err(format!("toxicity {t} outside [0,1]"));
                }
            }
            Ok(Post {
                id: r.id,
                channel_id: r.channel_id,
                timestamp,
                text: r.text,
                views,
                refs: r.refs,
                moral: r.moral,
                toxicity: r.toxicity,
                fear_speech: r.fear_speech,
                hate_speech: r.hate_speech,
            })
        }
        Schema::Gab => {
            let r: GabRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
            if r.id.is_empty() {
                return Err("empty id".into());
            }
            let timestamp = match r.ts {
                Some(ts) => {
                    parse_timestamp(&ts).ok_or_else(|| format!("unparseable timestamp {ts:?}"))?
                }
                None => DateTime::<Utc>::UNIX_EPOCH,
            };
            Ok(Post {
                id: r.id,
                channel_id: r.channel_id.unwrap_or_else(|| GAB_CHANNEL.to_string()),
                timestamp,
                text: r.text,
                views: None,
                refs: Vec::new(),
                moral: None,
                toxicity: None,
                fear_speech: Some(r.fear_speech),
                hate_speech: Some(r.hate_speech),
            })
        }
    }
}

/// Reads a JSONL corpus from any reader.
///
/// Malformed records are collected in the report with their line number.
/// Duplicate ids keep the first occurrence. More than 10% rejected lines is
/// fatal.
pub fn ingest_reader(reader: impl BufRead, schema: Schema) -> Result<(Corpus, LoadReport)> {
    let mut report = LoadReport::default();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    let mut posts = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.lines_read += 1;
        match parse_line(&line, schema) {
            Ok(post) => {
                if let Some(&first_line) = first_seen.get(&post.id) {
                    report.duplicates.push(Duplicate {
                        id: post.id,
                        line: line_no,
                        first_line,
                    });
                } else {
                    first_seen.insert(post.id.clone(), line_no);
                    posts.push(post);
                }
            }
            Err(reason) => report.rejected.push(RecordError {
                line: line_no,
                reason,
            }),
        }
    }
    if report.rejected.len() as f64 > MAX_REJECT_FRACTION * report.lines_read as f64 {
        return Err(Error::TooManyRejects {
            rejected: report.rejected.len(),
            read: report.lines_read,
        });
    }
    report.loaded = posts.len();
    let corpus = Corpus::new(posts, BTreeMap::new())?;
    Ok((corpus, report))
}

pub fn ingest_jsonl(path: &Path, schema: Schema) -> Result<(Corpus, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::file(path, e.to_string()))?;
    ingest_reader(BufReader::new(file), schema)
}

/// Reads channel metadata from a CSV with columns `id, stance, bio`.
pub fn read_channels_csv(path: &Path) -> Result<Vec<Channel>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        #[serde(default)]
        stance: Option<String>,
        #[serde(default)]
        bio: Option<String>,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::file(path, e.to_string()))?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        let declared_stance = match row.stance.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(Stance::parse(s).ok_or_else(|| {
                Error::file(path, format!("channel {}: unknown stance {s:?}", row.id))
            })?),
        };
        out.push(Channel {
            id: row.id,
            declared_stance,
            bio: row.bio.filter(|b| !b.is_empty()),
        });
    }
    Ok(out)
}

pub fn write_channels_csv(channels: &BTreeMap<String, Channel>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "stance", "bio"])?;
    for c in channels.values() {
        w.write_record([
            c.id.as_str(),
            c.declared_stance.map(Stance::as_str).unwrap_or(""),
            c.bio.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn normalize_for_match(s: &str) -> String {
    s.nfc().collect::<String>().to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSample {
    /// Keyword stratum first, then the random stratum.
    pub posts: Vec<Post>,
    pub keyword_count: usize,
    pub warnings: Vec<String>,
}

/// Random posts plus keyword-upsampled posts, with no overlap between strata.
pub fn sample_for_annotation(
    corpus: &Corpus,
    n_random: usize,
    keywords: &[String],
    n_keyword: usize,
    seed: u64,
) -> Result<AnnotationSample> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if n_random + n_keyword > corpus.len() {
        return Err(Error::invalid(format!(
            "requested {} posts from a corpus of {}",
            n_random + n_keyword,
            corpus.len()
        )));
    }
    if n_keyword > 0 && keywords.is_empty() {
        return Err(Error::invalid("keyword sample requested without keywords"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let needles: Vec<String> = keywords.iter().map(|k| normalize_for_match(k)).collect();
    let mut matching: Vec<usize> = corpus
        .posts
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let hay = normalize_for_match(&p.text);
            needles.iter().any(|n| hay.contains(n.as_str()))
        })
        .map(|(i, _)| i)
        .collect();
    let mut warnings = Vec::new();
    matching.shuffle(&mut rng);
    if matching.len() < n_keyword {
        warnings.push(format!(
            "only {} posts match the keywords ({} requested)",
            matching.len(),
            n_keyword
        ));
    }
    matching.truncate(n_keyword);
    let taken: BTreeSet<usize> = matching.iter().copied().collect();
    let mut rest: Vec<usize> = (0..corpus.len()).filter(|i| !taken.contains(i)).collect();
    rest.shuffle(&mut rng);
    rest.truncate(n_random);

    let keyword_count = matching.len();
    let posts = matching
        .into_iter()
        .chain(rest)
        .map(|i| corpus.posts[i].clone())
        .collect();
    Ok(AnnotationSample {
        posts,
        keyword_count,
        warnings,
    })
}

/// Part sizes for [`split`]: floor each share, then hand out the remainder
/// one item at a time in descending-ratio order (ties: train, val, test).
pub fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<[usize; 3]> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(0.0..=1.0).contains(&x) || x.is_nan()) {
        return Err(Error::invalid(format!("ratios {r:?} must lie in [0,1]")));
    }
    if ((r[0] + r[1] + r[2]) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("ratios {r:?} must sum to 1")));
    }
    let nonzero = r.iter().filter(|&&x| x > 0.0).count();
    if n < nonzero {
        return Err(Error::invalid(format!(
            "{n} items cannot fill {nonzero} nonzero parts"
        )));
    }
    let mut sizes = r.map(|x| (n as f64 * x + 1e-9).floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| r[b].partial_cmp(&r[a]).unwrap().then(a.cmp(&b)));
    let mut remainder = n - sizes.iter().sum::<usize>();
    let mut i = 0;
    while remainder > 0 {
        let part = order[i % 3];
        if r[part] > 0.0 {
            sizes[part] += 1;
            remainder -= 1;
        }
        i += 1;
    }
    Ok(sizes)
}

/// Seeded shuffle followed by a train/val/test cut.
pub fn split<T: Clone>(
    items: &[T],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let [train, val, _] = split_sizes(items.len(), ratios)?;
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |r: std::ops::Range<usize>| idx[r].iter().map(|&i| items[i].clone()).collect();
    Ok((
        pick(0..train),
        pick(train..train + val),
        pick(train + val..items.len()),
    ))
}
