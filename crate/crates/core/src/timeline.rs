//! Daily othering proportions and comparisons around key events.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::agreement::fmt_metric;
use crate::attention::{summarize, AttentionReport, Observation};
use crate::corpus::{Corpus, Stance};
use crate::error::{Error, Result};
use crate::labels::{Key, LabelVector};
use crate::network::{centrality_vs_othering, ChannelGraph};
use crate::stats::{StatRow, ZScores};

/// Length of the window following each event.
pub const CRISIS_DAYS: i64 = 7;

const DEFAULT_EVENTS: &str = include_str!("../data/events.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Community {
    Russian,
    Ukrainian,
    /// Events relevant to both communities.
    Shared,
}

impl Community {
    pub fn as_str(self) -> &'static str {
        match self {
            Community::Russian => "russian",
            Community::Ukrainian => "ukrainian",
            Community::Shared => "shared",
        }
    }

    pub fn of_stance(stance: Stance) -> Option<Community> {
        match stance {
            Stance::ProRussia => Some(Community::Russian),
            Stance::ProUkraine => Some(Community::Ukrainian),
            Stance::Other => None,
        }
    }
}

impl fmt::Display for Community {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Community {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "russian" => Ok(Community::Russian),
            "ukrainian" => Ok(Community::Ukrainian),
            "shared" => Ok(Community::Shared),
            other => Err(Error::invalid(format!("unknown community {other:?}"))),
        }
    }
}

/// Channel id -> community, from channel stances. `Other` channels are left
/// out.
pub fn communities_from_stances(stances: &BTreeMap<String, Stance>) -> BTreeMap<String, Community> {
    stances
        .iter()
        .filter_map(|(id, s)| Community::of_stance(*s).map(|c| (id.clone(), c)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub date: NaiveDate,
    pub description: String,
    #[serde(default, deserialize_with = "empty_key")]
    pub key: Option<String>,
    pub community: Community,
}

fn empty_key<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<String>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && s != "-"))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventRegistry {
    events: Vec<Event>,
}

impl EventRegistry {
    pub fn new(mut events: Vec<Event>) -> Result<Self> {
        let mut keys = BTreeSet::new();
        for e in &events {
            if let Some(k) = &e.key {
                if !keys.insert(k.clone()) {
                    return Err(Error::invalid(format!("duplicate event key {k}")));
                }
            }
        }
        events.sort_by_key(|a| (a.date, a.community));
        Ok(EventRegistry { events })
    }

    /// The key events shipped with the crate.
    pub fn default_registry() -> Self {
        EventRegistry::from_csv(DEFAULT_EVENTS.as_bytes()).expect("bundled registry is valid")
    }

    /// CSV with columns date, description, key, community.
    pub fn from_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let events = r
            .deserialize()
            .collect::<std::result::Result<Vec<Event>, _>>()?;
        EventRegistry::new(events)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e.to_string()))?;
        EventRegistry::from_csv(file).map_err(|e| Error::file(path, e.to_string()))
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "description", "key", "community"])?;
        for e in &self.events {
            w.write_record([
                e.date.to_string().as_str(),
                &e.description,
                e.key.as_deref().unwrap_or(""),
                e.community.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Events of `community` plus shared ones.
    pub fn for_community(&self, community: Community) -> impl Iterator<Item = &Event> {
        self.events
            .iter()
            .filter(move |e| e.community == community || e.community == Community::Shared)
    }
}

/// Half-open UTC interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Window {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

/// `[event day, event day + 7 days)` per event, overlapping windows merged.
pub fn crisis_windows(registry: &EventRegistry, community: Community) -> Result<Vec<Window>> {
    let mut windows: Vec<Window> = registry
        .for_community(community)
        .map(|e| {
            let start = e.date.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
            Window {
                start,
                end: start + Duration::days(CRISIS_DAYS),
            }
        })
        .collect();
    if windows.is_empty() {
        return Err(Error::invalid(format!(
            "no events registered for {community}"
        )));
    }
    windows.sort();
    let mut merged: Vec<Window> = Vec::with_capacity(windows.len());
    for w in windows {
        match merged.last_mut() {
            Some(last) if w.start <= last.end => last.end = last.end.max(w.end),
            _ => merged.push(w),
        }
    }
    Ok(merged)
}

pub fn in_windows(windows: &[Window], t: DateTime<Utc>) -> bool {
    let i = windows.partition_point(|w| w.end <= t);
    windows.get(i).is_some_and(|w| w.contains(t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayRow {
    pub date: NaiveDate,
    /// Classified posts that day.
    pub count: usize,
    /// Flagged posts per category.
    pub flagged: [usize; 4],
    /// `None` on days without posts.
    pub raw: [Option<f64>; 4],
    pub smoothed: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategorySeries {
    pub smooth_window: usize,
    /// Every day from the first to the last classified post.
    pub days: Vec<DayRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Raw,
    Smoothed,
}

impl CategorySeries {
    /// Header is `date` followed by the four category names; empty cells
    /// mark days without posts.
    pub fn write_csv(&self, kind: SeriesKind, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date"];
        header.extend(Key::CATEGORIES.iter().map(|k| k.name()));
        w.write_record(&header)?;
        for d in &self.days {
            let values = match kind {
                SeriesKind::Raw => &d.raw,
                SeriesKind::Smoothed => &d.smoothed,
            };
            let mut rec = vec![d.date.to_string()];
            rec.extend(values.iter().map(|v| v.map(fmt_metric).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns: date, count.
    pub fn write_counts_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "count"])?;
        for d in &self.days {
            w.write_record([d.date.to_string(), d.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Daily share of classified posts flagged with each category, with a
/// centered rolling mean over `smooth_window` days (odd) that averages the
/// days with posts inside the window. Posts without labels are not counted.
pub fn proportions_over_time(
    corpus: &Corpus,
    labels: &BTreeMap<String, LabelVector>,
    smooth_window: usize,
) -> Result<CategorySeries> {
    if smooth_window == 0 || smooth_window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "smoothing window {smooth_window} must be odd"
        )));
    }
    let mut by_day: BTreeMap<NaiveDate, (usize, [usize; 4])> = BTreeMap::new();
    for p in corpus.posts() {
        let Some(l) = labels.get(&p.id) else { continue };
        let entry = by_day.entry(p.timestamp.date_naive()).or_default();
        entry.0 += 1;
        for (slot, flag) in entry.1.iter_mut().zip(l.categories()) {
            *slot += usize::from(flag);
        }
    }
    let (Some(&first), Some(&last)) = (by_day.keys().next(), by_day.keys().next_back()) else {
        return Err(Error::Empty("labeled corpus"));
    };
    let mut days = Vec::new();
    let mut d = first;
    while d <= last {
        let (count, flagged) = by_day.get(&d).copied().unwrap_or_default();
        let raw = if count == 0 {
            [None; 4]
        } else {
            flagged.map(|f| Some(f as f64 / count as f64))
        };
        days.push(DayRow {
            date: d,
            count,
            flagged,
            raw,
            smoothed: [None; 4],
        });
        d = d.succ_opt().expect("date in range");
    }
    let half = smooth_window / 2;
    for i in 0..days.len() {
        if days[i].count == 0 {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(days.len() - 1);
        for c in 0..4 {
            let vals: Vec<f64> = days[lo..=hi].iter().filter_map(|d| d.raw[c]).collect();
            days[i].smoothed[c] = Some(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    Ok(CategorySeries {
        smooth_window,
        days,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowProportion {
    pub community: Community,
    /// `in` or `out` of the crisis windows.
    pub window: String,
    pub othering: usize,
    pub n: usize,
    pub proportion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrisisReport {
    pub proportions: Vec<WindowProportion>,
    pub views: AttentionReport,
    /// Centrality-vs-othering correlations over all posts and over in-window
    /// posts only, with the relative change.
    pub centrality: Vec<StatRow>,
    pub flags: Vec<String>,
}

impl CrisisReport {
    pub fn proportion(&self, community: Community, window: &str) -> Option<&WindowProportion> {
        self.proportions
            .iter()
            .find(|p| p.community == community && p.window == window)
    }

    /// Columns: community, window, othering, n, proportion.
    pub fn write_proportions_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["community", "window", "othering", "n", "proportion"])?;
        for p in &self.proportions {
            w.write_record([
                p.community.as_str().to_string(),
                p.window.clone(),
                p.othering.to_string(),
                p.n.to_string(),
                p.proportion.map(fmt_metric).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn stat_rows(&self) -> Vec<StatRow> {
        let mut rows = self.views.tests.clone();
        rows.extend(self.centrality.iter().cloned());
        rows
    }
}

fn channel_proportions<'a>(
    corpus: &'a Corpus,
    labels: &BTreeMap<String, LabelVector>,
    keep: impl Fn(&crate::corpus::Post) -> bool,
) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<&'a str, (usize, usize)> = BTreeMap::new();
    for p in corpus.posts() {
        if let Some(l) = labels.get(&p.id) {
            if keep(p) {
                let c = counts.entry(&p.channel_id).or_default();
                c.0 += usize::from(l.any_category());
                c.1 += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(ch, (o, n))| (ch.to_string(), o as f64 / n as f64))
        .collect()
}

/// Compares posts inside and outside each community's crisis windows:
/// othering proportions, normalized views by othering status, and (when a
/// graph is given) the centrality correlations recomputed on in-window posts.
pub fn crisis_comparison(
    corpus: &Corpus,
    labels: &BTreeMap<String, LabelVector>,
    registry: &EventRegistry,
    communities: &BTreeMap<String, Community>,
    views: &ZScores<String>,
    graph: Option<&ChannelGraph>,
) -> Result<CrisisReport> {
    let present: BTreeSet<Community> = communities.values().copied().collect();
    let mut windows = BTreeMap::new();
    for c in &present {
        windows.insert(*c, crisis_windows(registry, *c)?);
    }
    let window_of = |p: &crate::corpus::Post| -> Option<(Community, bool)> {
        let c = *communities.get(&p.channel_id)?;
        Some((c, in_windows(&windows[&c], p.timestamp)))
    };

    let mut tallies: BTreeMap<(Community, bool), (usize, usize)> = BTreeMap::new();
    let mut obs = Vec::new();
    for p in corpus.posts() {
        let (Some(l), Some((c, inside))) = (labels.get(&p.id), window_of(p)) else {
            continue;
        };
        let t = tallies.entry((c, inside)).or_default();
        t.0 += usize::from(l.any_category());
        t.1 += 1;
        if let Some(z) = views.scores.get(&p.id) {
            obs.push(Observation {
                community: c.as_str().to_string(),
                window: if inside { "in" } else { "out" }.to_string(),
                othering: l.any_category(),
                z: *z,
            });
        }
    }

    let mut flags = Vec::new();
    let mut proportions = Vec::new();
    for c in &present {
        for inside in [true, false] {
            let (o, n) = tallies.get(&(*c, inside)).copied().unwrap_or_default();
            let window = if inside { "in" } else { "out" };
            if n == 0 {
                flags.push(format!("{c}: no posts {window} crisis windows"));
            }
            proportions.push(WindowProportion {
                community: *c,
                window: window.to_string(),
                othering: o,
                n,
                proportion: (n > 0).then(|| o as f64 / n as f64),
            });
        }
    }

    let mut centrality = Vec::new();
    if let Some(g) = graph {
        for c in &present {
            let member = |p: &crate::corpus::Post| communities.get(&p.channel_id) == Some(c);
            let all = channel_proportions(corpus, labels, member);
            let inside = channel_proportions(corpus, labels, |p| {
                member(p) && window_of(p).is_some_and(|w| w.1)
            });
            let before = centrality_vs_othering(g, &all);
            let after = centrality_vs_othering(g, &inside);
            let (before, after) = match (before, after) {
                (Ok(b), Ok(a)) => (b, a),
                (b, a) => {
                    for e in [b.err(), a.err()].into_iter().flatten() {
                        flags.push(format!("{c}: {e}"));
                    }
                    continue;
                }
            };
            for (b, a) in before.into_iter().zip(after) {
                let delta = match (b.value, a.value) {
                    (Some(x), Some(y)) if x != 0.0 => Some((y - x) / x.abs() * 100.0),
                    _ => None,
                };
                let name = b.statistic.clone();
                centrality.push(StatRow {
                    statistic: format!("{name}[{c},all]"),
                    ..b
                });
                centrality.push(StatRow {
                    statistic: format!("{name}[{c},in]"),
                    ..a
                });
                centrality.push(StatRow::new(format!("{name}[{c},change_pct]"), delta, None));
            }
        }
    }

    Ok(CrisisReport {
        proportions,
        views: summarize(&obs),
        centrality,
        flags,
    })
}
