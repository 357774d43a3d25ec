//! Statistical tests used across the analyses.
//!
//! Every p-value is two-sided. Special functions live in [`special`] and are
//! implemented from closed forms.

pub mod special;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use special::{chi2_df1_sf, normal_sf, student_t_two_sided};

/// Rows: condition present / absent. Columns: outcome present / absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable2x2 { a, b, c, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    /// Tallies one observation.
    pub fn add(&mut self, condition: bool, outcome: bool) {
        match (condition, outcome) {
            (true, true) => self.a += 1,
            (true, false) => self.b += 1,
            (false, true) => self.c += 1,
            (false, false) => self.d += 1,
        }
    }

    /// Same table with the outcome columns swapped.
    pub fn swap_columns(&self) -> Self {
        ContingencyTable2x2::new(self.b, self.a, self.d, self.c)
    }

    pub fn swap_rows(&self) -> Self {
        ContingencyTable2x2::new(self.c, self.d, self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub p: f64,
    pub df: u32,
}

/// Pearson chi-squared on a 2x2 table, optionally with Yates' correction.
pub fn chi_squared(t: &ContingencyTable2x2, yates: bool) -> Result<ChiSquared> {
    let n = t.total() as f64;
    let rows = [(t.a + t.b) as f64, (t.c + t.d) as f64];
    let cols = [(t.a + t.c) as f64, (t.b + t.d) as f64];
    if rows.contains(&0.0) || cols.contains(&0.0) {
        return Err(Error::invalid(format!("zero marginal in table {t:?}")));
    }
    let observed = [[t.a as f64, t.b as f64], [t.c as f64, t.d as f64]];
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = rows[i] * cols[j] / n;
            let mut dev = (observed[i][j] - expected).abs();
            if yates {
                dev = (dev - 0.5).max(0.0);
            }
            stat += dev * dev / expected;
        }
    }
    Ok(ChiSquared {
        statistic: stat,
        p: chi2_df1_sf(stat),
        df: 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogOdds {
    pub lor: f64,
    pub se: f64,
    /// At least one raw cell was zero before smoothing.
    pub zero_cells: bool,
}

impl LogOdds {
    /// Wald z and two-sided p.
    pub fn wald(&self) -> (f64, f64) {
        let z = self.lor / self.se;
        (z, 2.0 * normal_sf(z.abs()))
    }
}

/// Log odds ratio with +0.5 added to every cell.
pub fn log_odds_ratio(t: &ContingencyTable2x2) -> LogOdds {
    let [a, b, c, d] = [t.a, t.b, t.c, t.d].map(|x| x as f64 + 0.5);
    LogOdds {
        lor: (a / b).ln() - (c / d).ln(),
        se: (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt(),
        zero_cells: [t.a, t.b, t.c, t.d].contains(&0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZTest {
    pub z: f64,
    pub p: f64,
}

/// Pooled two-proportion z-test of `x1/n1` against `x2/n2`.
pub fn two_proportion_z(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<ZTest> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(Error::invalid(format!(
            "invalid proportions {x1}/{n1}, {x2}/{n2}"
        )));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    if pooled == 0.0 || pooled == 1.0 {
        return Err(Error::DegenerateMarginals);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (x1 as f64 / n1f - x2 as f64 / n2f) / se;
    Ok(ZTest {
        z,
        p: (2.0 * normal_sf(z.abs())).min(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MwuMethod {
    Exact,
    Normal,
}

impl MwuMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MwuMethod::Exact => "exact",
            MwuMethod::Normal => "normal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p: f64,
    pub method: MwuMethod,
}

/// Largest group size for which the exact null distribution is used.
pub const MWU_EXACT_MAX: usize = 8;

/// Mid-ranks (1-based) of the values, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Sum of `t^3 - t` over tie groups.
fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        let t = (end - start) as f64;
        total += t * t * t - t;
        start = end;
    }
    total
}

/// Number of arrangements giving each value of U for sizes `n`, `m` (no ties).
fn exact_u_counts(n: usize, m: usize) -> Vec<f64> {
    // counts[i][j][u]: arrangements of i x-values and j y-values with U = u
    let max_u = n * m;
    let mut prev: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; m + 1];
    for row in prev.iter_mut() {
        row[0] = 1.0;
    }
    for i in 1..=n {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; m + 1];
        cur[0][0] = 1.0;
        for j in 1..=m {
            for u in 0..=i * j {
                // largest element is an x (beats all j ys) or a y
                let from_x = if u >= j { prev[j][u - j] } else { 0.0 };
                let from_y = cur[j - 1][u];
                cur[j][u] = from_x + from_y;
            }
        }
        prev = cur;
    }
    prev[m].clone()
}

/// Mann-Whitney U test. Exact when both groups have at most
/// [`MWU_EXACT_MAX`] values and there are no ties; otherwise the normal
/// approximation with tie and continuity correction.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("mann-whitney sample"));
    }
    let (n, m) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_x: f64 = ranks[..n].iter().sum();
    let u = rank_sum_x - (n * (n + 1)) as f64 / 2.0;
    let ties = tie_term(&pooled);

    if n.max(m) <= MWU_EXACT_MAX && ties == 0.0 {
        let counts = exact_u_counts(n, m);
        let total: f64 = counts.iter().sum();
        let k = u.round() as usize;
        let lower: f64 = counts[..=k].iter().sum::<f64>() / total;
        let upper: f64 = counts[k..].iter().sum::<f64>() / total;
        return Ok(MannWhitney {
            u,
            p: (2.0 * lower.min(upper)).min(1.0),
            method: MwuMethod::Exact,
        });
    }

    let (nf, mf) = (n as f64, m as f64);
    let big_n = nf + mf;
    let mean = nf * mf / 2.0;
    let var = nf * mf / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * normal_sf(z)).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p,
        method: MwuMethod::Normal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson on mid-ranks) with a t-approximation
/// p-value on `n - 2` degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::invalid(format!(
            "spearman needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    let rho = pearson(&midranks(x), &midranks(y)).ok_or(Error::DegenerateMarginals)?;
    let df = (x.len() - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        student_t_two_sided(t.abs(), df)
    };
    Ok(Correlation { rho, p })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZScores<K: Ord> {
    pub scores: BTreeMap<K, f64>,
    /// Items in groups with fewer than two values or zero spread.
    pub excluded: BTreeSet<K>,
}

/// Per-group standardization with the sample standard deviation.
pub fn zscore_by_group<K, G>(values: &BTreeMap<K, f64>, groups: &BTreeMap<K, G>) -> ZScores<K>
where
    K: Ord + Clone,
    G: Ord + Clone,
{
    let mut members: BTreeMap<G, Vec<&K>> = BTreeMap::new();
    for (k, g) in groups {
        if values.contains_key(k) {
            members.entry(g.clone()).or_default().push(k);
        }
    }
    let mut out = ZScores {
        scores: BTreeMap::new(),
        excluded: BTreeSet::new(),
    };
    for keys in members.values() {
        let vals: Vec<f64> = keys.iter().map(|k| values[*k]).collect();
        match mean_and_sd(&vals) {
            Some((mean, sd)) if sd > 0.0 => {
                for (k, v) in keys.iter().zip(&vals) {
                    out.scores.insert((*k).clone(), (v - mean) / sd);
                }
            }
            _ => out.excluded.extend(keys.iter().map(|k| (*k).clone())),
        }
    }
    out
}

/// Mean and sample standard deviation; `None` below two values.
fn mean_and_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    /// `None` when only one value is available.
    pub se: Option<f64>,
    pub n: usize,
}

pub fn group_mean_with_se(values: &[f64]) -> Result<MeanSe> {
    if values.is_empty() {
        return Err(Error::Empty("group values"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = mean_and_sd(values).map(|(_, sd)| sd / (n as f64).sqrt());
    Ok(MeanSe { mean, se, n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VennRegion {
    /// Membership pattern, aligned with the input set order.
    pub membership: Vec<bool>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conditional {
    pub a: String,
    pub given: String,
    /// `P(a | given)`; `None` when `given` is empty.
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub names: Vec<String>,
    pub sizes: Vec<usize>,
    pub regions: Vec<VennRegion>,
    pub conditionals: Vec<Conditional>,
}

/// Exact Venn region counts and all pairwise conditional probabilities.
pub fn overlap_report(sets: &[(String, BTreeSet<String>)]) -> OverlapReport {
    let k = sets.len();
    let universe: BTreeSet<&String> = sets.iter().flat_map(|(_, s)| s.iter()).collect();
    let mut counts: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
    for item in universe {
        let membership: Vec<bool> = sets.iter().map(|(_, s)| s.contains(item)).collect();
        *counts.entry(membership).or_default() += 1;
    }
    let mut regions = Vec::new();
    for mask in 1..(1usize << k) {
        let membership: Vec<bool> = (0..k).map(|i| mask & (1 << i) != 0).collect();
        let count = counts.get(&membership).copied().unwrap_or(0);
        regions.push(VennRegion { membership, count });
    }
    let mut conditionals = Vec::new();
    for (i, (name_a, a)) in sets.iter().enumerate() {
        for (j, (name_b, b)) in sets.iter().enumerate() {
            if i == j {
                continue;
            }
            let probability = if b.is_empty() {
                None
            } else {
                Some(a.intersection(b).count() as f64 / b.len() as f64)
            };
            conditionals.push(Conditional {
                a: name_a.clone(),
                given: name_b.clone(),
                probability,
            });
        }
    }
    OverlapReport {
        names: sets.iter().map(|(n, _)| n.clone()).collect(),
        sizes: sets.iter().map(|(_, s)| s.len()).collect(),
        regions,
        conditionals,
    }
}

/// Toxicity score above which a post counts as toxic.
pub const TOXIC_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToxicityGroup {
    pub group: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    /// Share of scores above [`TOXIC_THRESHOLD`].
    pub share_toxic: Option<f64>,
}

/// Mean toxicity and toxic share for each named group of scores.
pub fn toxicity_summary(groups: &[(String, Vec<f64>)]) -> Vec<ToxicityGroup> {
    groups
        .iter()
        .map(|(name, scores)| {
            let ms = group_mean_with_se(scores).ok();
            let toxic = scores.iter().filter(|&&t| t > TOXIC_THRESHOLD).count();
            ToxicityGroup {
                group: name.clone(),
                n: scores.len(),
                mean: ms.as_ref().map(|m| m.mean),
                se: ms.and_then(|m| m.se),
                share_toxic: (!scores.is_empty()).then(|| toxic as f64 / scores.len() as f64),
            }
        })
        .collect()
}

/// Columns: group, n, mean, se, share_toxic.
pub fn write_toxicity_csv(rows: &[ToxicityGroup], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "n", "mean", "se", "share_toxic"])?;
    let fmt = |v: Option<f64>| v.map(crate::agreement::fmt_metric).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.n.to_string(),
            fmt(r.mean),
            fmt(r.se),
            fmt(r.share_toxic),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One line of a statistics report CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatRow {
    pub statistic: String,
    pub value: Option<f64>,
    pub p: Option<f64>,
    pub method: String,
    pub flags: String,
}

impl StatRow {
    pub fn new(statistic: impl Into<String>, value: Option<f64>, p: Option<f64>) -> Self {
        StatRow {
            statistic: statistic.into(),
            value,
            p,
            method: String::new(),
            flags: String::new(),
        }
    }

    pub fn method(mut self, method: impl Into<String>) -> Self {
        self.method = method.into();
        self
    }

    pub fn flag(mut self, flag: impl AsRef<str>) -> Self {
        if !self.flags.is_empty() {
            self.flags.push(';');
        }
        self.flags.push_str(flag.as_ref());
        self
    }
}

pub fn write_stat_rows(rows: &[StatRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
