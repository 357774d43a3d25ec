//! Inter-annotator agreement and per-category classification metrics.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::labels::{Key, LabelVector};

/// Cohen's kappa for two binary raters.
///
/// Returns 1.0 when chance agreement is 1 and the sequences agree, and
/// [`Error::DegenerateMarginals`] when chance agreement is 1 otherwise.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("kappa sequences"));
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let expected = pa * pb + (1.0 - pa) * (1.0 - pb);
    if expected >= 1.0 {
        return if a == b {
            Ok(1.0)
        } else {
            Err(Error::DegenerateMarginals)
        };
    }
    Ok((observed - expected) / (1.0 - expected))
}

/// Items x annotators grid of binary ratings for one category.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    rows: Vec<Vec<Option<bool>>>,
    annotators: usize,
}

impl RatingsMatrix {
    pub fn new(rows: Vec<Vec<Option<bool>>>) -> Result<Self> {
        let annotators = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() {
            return Err(Error::Empty("ratings matrix"));
        }
        if annotators < 2 {
            return Err(Error::invalid("ratings matrix needs at least 2 annotators"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != annotators {
                return Err(Error::invalid(format!(
                    "item {i} has {} ratings, expected {annotators}",
                    r.len()
                )));
            }
            if r.iter().all(Option::is_none) {
                return Err(Error::invalid(format!("item {i} has no ratings")));
            }
        }
        Ok(RatingsMatrix { rows, annotators })
    }

    /// Complete matrix from per-item rating vectors.
    pub fn complete(rows: &[Vec<bool>]) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|r| r.iter().map(|&v| Some(v)).collect())
                .collect(),
        )
    }

    pub fn rows(&self) -> &[Vec<Option<bool>>] {
        &self.rows
    }

    pub fn annotators(&self) -> usize {
        self.annotators
    }
}

/// Fleiss' kappa over two nominal categories. Requires a complete matrix.
pub fn fleiss_kappa(m: &RatingsMatrix) -> Result<f64> {
    if m.rows.iter().flatten().any(Option::is_none) {
        return Err(Error::invalid(
            "fleiss_kappa needs every item rated by every annotator; use krippendorff_alpha for missing ratings",
        ));
    }
    let r = m.annotators as f64;
    let n_items = m.rows.len() as f64;
    let mut p_bar = 0.0;
    let mut ones_total = 0.0;
    for row in &m.rows {
        let ones = row.iter().filter(|v| **v == Some(true)).count() as f64;
        let zeros = r - ones;
        p_bar += (ones * (ones - 1.0) + zeros * (zeros - 1.0)) / (r * (r - 1.0));
        ones_total += ones;
    }
    p_bar /= n_items;
    let p1 = ones_total / (n_items * r);
    let p_e = p1 * p1 + (1.0 - p1) * (1.0 - p1);
    if p_e >= 1.0 {
        return Err(Error::DegenerateMarginals);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Krippendorff's alpha with the nominal difference function, computed from
/// the coincidence matrix. Items with fewer than two ratings are skipped.
pub fn krippendorff_alpha(m: &RatingsMatrix) -> Result<f64> {
    // coincidences[c][k]
    let mut o = [[0.0f64; 2]; 2];
    for row in &m.rows {
        let values: Vec<usize> = row.iter().flatten().map(|&v| usize::from(v)).collect();
        let mu = values.len();
        if mu < 2 {
            continue;
        }
        let mut counts = [0.0f64; 2];
        for &v in &values {
            counts[v] += 1.0;
        }
        let w = 1.0 / (mu as f64 - 1.0);
        for c in 0..2 {
            for k in 0..2 {
                let pairs = if c == k {
                    counts[c] * (counts[c] - 1.0)
                } else {
                    counts[c] * counts[k]
                };
                o[c][k] += pairs * w;
            }
        }
    }
    let n_c = [o[0][0] + o[0][1], o[1][0] + o[1][1]];
    let n = n_c[0] + n_c[1];
    if n < 2.0 {
        return Err(Error::invalid("no pairable ratings"));
    }
    let d_o = (o[0][1] + o[1][0]) / n;
    let d_e = 2.0 * n_c[0] * n_c[1] / (n * (n - 1.0));
    if d_e == 0.0 {
        return Err(Error::DegenerateMarginals);
    }
    Ok(1.0 - d_o / d_e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn tally(pred: &[bool], gold: &[bool]) -> Confusion {
        let mut c = Confusion::default();
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: Confusion,
    /// Zero denominator: no predicted positives.
    pub precision_undefined: bool,
    /// Zero denominator: no gold positives.
    pub recall_undefined: bool,
}

impl ClassMetrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let accuracy = if c.total() == 0 {
            0.0
        } else {
            (c.tp + c.tn) as f64 / c.total() as f64
        };
        if c.tp + c.fp + c.fn_ == 0 {
            // no positives anywhere: prediction equals gold on this category
            return ClassMetrics {
                accuracy,
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                support: c,
                precision_undefined: true,
                recall_undefined: true,
            };
        }
        let precision_undefined = c.tp + c.fp == 0;
        let recall_undefined = c.tp + c.fn_ == 0;
        let precision = if precision_undefined {
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fp) as f64
        };
        let recall = if recall_undefined {
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            accuracy,
            precision,
            recall,
            f1,
            support: c,
            precision_undefined,
            recall_undefined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub per_key: Vec<(Key, ClassMetrics)>,
    pub macro_avg: MacroMetrics,
}

impl MetricsReport {
    pub fn get(&self, key: Key) -> &ClassMetrics {
        &self.per_key[key.index()].1
    }

    /// Rows are label keys, columns are metrics.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "category",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "tp",
            "fp",
            "fn",
            "tn",
            "flags",
        ])?;
        for (key, m) in &self.per_key {
            let mut flags = Vec::new();
            if m.precision_undefined {
                flags.push("precision_undefined");
            }
            if m.recall_undefined {
                flags.push("recall_undefined");
            }
            w.write_record([
                key.name().to_string(),
                fmt_metric(m.accuracy),
                fmt_metric(m.precision),
                fmt_metric(m.recall),
                fmt_metric(m.f1),
                m.support.tp.to_string(),
                m.support.fp.to_string(),
                m.support.fn_.to_string(),
                m.support.tn.to_string(),
                flags.join(";"),
            ])?;
        }
        let a = &self.macro_avg;
        w.write_record([
            "macro".to_string(),
            fmt_metric(a.accuracy),
            fmt_metric(a.precision),
            fmt_metric(a.recall),
            fmt_metric(a.f1),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

/// Per-key metrics with 1 as the positive class, plus unweighted macro
/// averages over all five keys.
pub fn class_metrics(pred: &[LabelVector], gold: &[LabelVector]) -> Result<MetricsReport> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    let per_key: Vec<(Key, ClassMetrics)> = Key::ALL
        .iter()
        .map(|&k| {
            let p: Vec<bool> = pred.iter().map(|v| v.get(k)).collect();
            let g: Vec<bool> = gold.iter().map(|v| v.get(k)).collect();
            (k, ClassMetrics::from_confusion(Confusion::tally(&p, &g)))
        })
        .collect();
    let n = per_key.len() as f64;
    let avg = |f: fn(&ClassMetrics) -> f64| per_key.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
    let macro_avg = MacroMetrics {
        accuracy: avg(|m| m.accuracy),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
    };
    Ok(MetricsReport { per_key, macro_avg })
}

/// Per-category ratings matrix built from several annotators' label vectors.
/// `labels[item][annotator]`.
pub fn ratings_for(labels: &[Vec<Option<LabelVector>>], key: Key) -> Result<RatingsMatrix> {
    RatingsMatrix::new(
        labels
            .iter()
            .map(|row| row.iter().map(|v| v.map(|l| l.get(key))).collect())
            .collect(),
    )
}
