//! Views received by othering and non-othering posts, normalized by each
//! channel's typical viewership.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::Result;
use crate::labels::LabelVector;
use crate::stats::{
    group_mean_with_se, mann_whitney_u, write_stat_rows, zscore_by_group, StatRow, ZScores,
};
use crate::timeline::Community;

/// Group label used when posts are not split by community.
pub const ALL: &str = "all";

/// Per-channel z-scores of post views; posts without a view count are left
/// out, channels with fewer than two posts or constant views are excluded.
pub fn normalized_views(corpus: &Corpus) -> ZScores<String> {
    let mut values = BTreeMap::new();
    let mut groups = BTreeMap::new();
    for p in corpus.posts() {
        if let Some(v) = p.views {
            values.insert(p.id.clone(), v as f64);
            groups.insert(p.id.clone(), p.channel_id.clone());
        }
    }
    zscore_by_group(&values, &groups)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewGroup {
    pub community: String,
    pub window: String,
    pub othering: bool,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AttentionReport {
    pub groups: Vec<ViewGroup>,
    pub tests: Vec<StatRow>,
}

impl AttentionReport {
    pub fn group(&self, community: &str, window: &str, othering: bool) -> Option<&ViewGroup> {
        self.groups
            .iter()
            .find(|g| g.community == community && g.window == window && g.othering == othering)
    }

    /// Columns: community, window, othering, mean, se, n.
    pub fn write_groups_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["community", "window", "othering", "mean", "se", "n"])?;
        let fmt = |v: Option<f64>| v.map(crate::agreement::fmt_metric).unwrap_or_default();
        for g in &self.groups {
            w.write_record([
                g.community.clone(),
                g.window.clone(),
                u8::from(g.othering).to_string(),
                fmt(g.mean),
                fmt(g.se),
                g.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_tests_csv(&self, out: impl Write) -> Result<()> {
        write_stat_rows(&self.tests, out)
    }
}

/// One normalized view observation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Observation {
    pub community: String,
    pub window: String,
    pub othering: bool,
    pub z: f64,
}

/// Mean and standard error per (community, window, othering) cell, and a
/// Mann-Whitney test of othering against non-othering views per
/// (community, window).
pub(crate) fn summarize(observations: &[Observation]) -> AttentionReport {
    let mut cells: BTreeMap<(&str, &str), [Vec<f64>; 2]> = BTreeMap::new();
    for o in observations {
        cells.entry((&o.community, &o.window)).or_default()[usize::from(o.othering)].push(o.z);
    }
    let mut report = AttentionReport::default();
    for ((community, window), [plain, othering]) in &cells {
        for (flag, values) in [(true, othering), (false, plain)] {
            let stats = group_mean_with_se(values).ok();
            report.groups.push(ViewGroup {
                community: community.to_string(),
                window: window.to_string(),
                othering: flag,
                mean: stats.map(|s| s.mean),
                se: stats.and_then(|s| s.se),
                n: values.len(),
            });
        }
        let tag = format!("[{community},{window}]");
        if othering.is_empty() || plain.is_empty() {
            report
                .tests
                .push(StatRow::new(format!("view_gap{tag}"), None, None).flag("empty_group"));
            continue;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let gap = mean(othering) - mean(plain);
        match mann_whitney_u(othering, plain) {
            Ok(m) => report.tests.push(
                StatRow::new(format!("view_gap{tag}"), Some(gap), Some(m.p))
                    .method(format!("mann_whitney_{}", m.method.as_str()))
                    .flag(format!("u={}", m.u))
                    .flag(format!("n={}/{}", othering.len(), plain.len())),
            ),
            Err(e) => report
                .tests
                .push(StatRow::new(format!("view_gap{tag}"), Some(gap), None).flag(e.to_string())),
        }
    }
    report
}

/// Compares normalized views of posts with and without any othering
/// category. With `communities`, posts are split by their channel's
/// community and channels without one are skipped; otherwise everything is
/// pooled under [`ALL`].
pub fn attention_report(
    corpus: &Corpus,
    labels: &BTreeMap<String, LabelVector>,
    communities: Option<&BTreeMap<String, Community>>,
    views: &ZScores<String>,
) -> AttentionReport {
    let mut obs = Vec::new();
    for p in corpus.posts() {
        let (Some(l), Some(z)) = (labels.get(&p.id), views.scores.get(&p.id)) else {
            continue;
        };
        let community = match communities {
            Some(map) => match map.get(&p.channel_id) {
                Some(c) => c.as_str().to_string(),
                None => continue,
            },
            None => ALL.to_string(),
        };
        obs.push(Observation {
            community,
            window: ALL.to_string(),
            othering: l.any_category(),
            z: *z,
        });
    }
    summarize(&obs)
}
