//! Rapid domain adaptation: per-category confidence thresholds tuned on a
//! small labeled sample, and the prompting-mode benchmark.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::agreement::{class_metrics, fmt_metric};
use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::gateway::{
    annotate_batch, BatchOptions, ConfidenceVector, DomainProfile, Endpoint, PromptMode,
};
use crate::labels::{Key, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    F1,
    Accuracy,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::F1 => "f1",
            Objective::Accuracy => "accuracy",
        }
    }

    /// Score of a binary prediction from its confusion counts.
    pub fn score(self, tp: usize, fp: usize, fn_: usize, tn: usize) -> f64 {
        match self {
            Objective::F1 => {
                let denom = 2 * tp + fp + fn_;
                if denom == 0 {
                    1.0
                } else {
                    (2 * tp) as f64 / denom as f64
                }
            }
            Objective::Accuracy => (tp + tn) as f64 / (tp + fp + fn_ + tn).max(1) as f64,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(Objective::F1),
            "accuracy" => Ok(Objective::Accuracy),
            _ => Err(Error::invalid(format!("unknown objective {s:?}"))),
        }
    }
}

/// Threshold grid `0, 1/n, ..., 1` with `n = 1 / step`.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!(
            "grid step {step} must lie in (0, 1]"
        )));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "grid step {step} does not divide 1"
        )));
    }
    let n = n as usize;
    Ok((0..=n).map(|k| k as f64 / n as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryThreshold {
    pub key: Key,
    pub threshold: f64,
    /// Objective reached at `threshold` on the tuning data.
    pub objective: f64,
    /// The tuning data lacked positives or negatives; 0.5 was used.
    pub fallback: bool,
    /// Positives scored lower than negatives on average.
    pub inverted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    pub objective: Objective,
    pub grid_step: f64,
    /// In [`Key::CATEGORIES`] order.
    pub categories: [CategoryThreshold; 4],
}

impl ThresholdProfile {
    /// Every category at the same threshold.
    pub fn uniform(threshold: f64) -> Self {
        ThresholdProfile {
            objective: Objective::F1,
            grid_step: 0.01,
            categories: Key::CATEGORIES.map(|key| CategoryThreshold {
                key,
                threshold,
                objective: f64::NAN,
                fallback: false,
                inverted: false,
            }),
        }
    }

    pub fn threshold(&self, key: Key) -> f64 {
        self.categories[key.index()].threshold
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.categories {
            if c.fallback {
                out.push(format!(
                    "{}: tuning data lacks positives or negatives, threshold 0.5",
                    c.key
                ));
            }
            if c.inverted {
                out.push(format!(
                    "{}: positives score below negatives on average",
                    c.key
                ));
            }
        }
        out
    }

    pub fn save(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn load(input: impl std::io::Read) -> Result<Self> {
        let p: ThresholdProfile = serde_json::from_reader(input)?;
        for (c, key) in p.categories.iter().zip(Key::CATEGORIES) {
            if c.key != key || !(0.0..=1.0).contains(&c.threshold) {
                return Err(Error::invalid(format!("bad threshold entry for {key}")));
            }
        }
        Ok(p)
    }
}

/// Objective at every grid threshold for one category.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveCurve {
    pub key: Key,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tuning {
    pub profile: ThresholdProfile,
    pub curves: Vec<ObjectiveCurve>,
}

impl Tuning {
    /// Columns: category, threshold, objective.
    pub fn write_curves_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["category", "threshold", "objective"])?;
        for c in &self.curves {
            for (t, v) in &c.points {
                w.write_record([c.key.name(), &t.to_string(), &fmt_metric(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn tune_category(
    key: Key,
    conf: &[f64],
    gold: &[bool],
    grid: &[f64],
    objective: Objective,
) -> (CategoryThreshold, ObjectiveCurve) {
    let points: Vec<(f64, f64)> = grid
        .iter()
        .map(|&t| {
            let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
            for (&c, &g) in conf.iter().zip(gold) {
                match (c >= t, g) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            (t, objective.score(tp, fp, fn_, tn))
        })
        .collect();
    let pos: Vec<f64> = conf
        .iter()
        .zip(gold)
        .filter(|(_, &g)| g)
        .map(|(&c, _)| c)
        .collect();
    let neg: Vec<f64> = conf
        .iter()
        .zip(gold)
        .filter(|(_, &g)| !g)
        .map(|(&c, _)| c)
        .collect();
    let curve = ObjectiveCurve { key, points };
    if pos.is_empty() || neg.is_empty() {
        let at_half = curve
            .points
            .iter()
            .find(|(t, _)| *t >= 0.5)
            .map(|p| p.1)
            .unwrap_or(f64::NAN);
        let entry = CategoryThreshold {
            key,
            threshold: 0.5,
            objective: at_half,
            fallback: true,
            inverted: false,
        };
        return (entry, curve);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let best = curve
        .points
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let maximizers: Vec<f64> = curve
        .points
        .iter()
        .filter(|p| p.1 == best)
        .map(|p| p.0)
        .collect();
    let threshold = maximizers[(maximizers.len() - 1) / 2];
    let entry = CategoryThreshold {
        key,
        threshold,
        objective: best,
        fallback: false,
        inverted: mean(&pos) < mean(&neg),
    };
    (entry, curve)
}

/// Sweeps the threshold grid independently for each category and keeps the
/// lower median of the thresholds reaching the best objective.
pub fn tune_thresholds(
    confs: &[ConfidenceVector],
    gold: &[LabelVector],
    objective: Objective,
    grid_step: f64,
) -> Result<Tuning> {
    if confs.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: confs.len(),
            right: gold.len(),
        });
    }
    if confs.is_empty() {
        return Err(Error::Empty("tuning data"));
    }
    let grid = threshold_grid(grid_step)?;
    let results: Vec<(CategoryThreshold, ObjectiveCurve)> = thread::scope(|s| {
        let handles: Vec<_> = Key::CATEGORIES
            .iter()
            .map(|&key| {
                let grid = &grid;
                s.spawn(move || {
                    let c: Vec<f64> = confs.iter().map(|v| v.get(key)).collect();
                    let g: Vec<bool> = gold.iter().map(|l| l.get(key)).collect();
                    tune_category(key, &c, &g, grid, objective)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tuning thread"))
            .collect()
    });
    let mut categories = Vec::with_capacity(4);
    let mut curves = Vec::with_capacity(4);
    for (c, curve) in results {
        categories.push(c);
        curves.push(curve);
    }
    Ok(Tuning {
        profile: ThresholdProfile {
            objective,
            grid_step,
            categories: categories.try_into().expect("four categories"),
        },
        curves,
    })
}

/// Flags every category whose confidence reaches its threshold.
pub fn classify(confs: &ConfidenceVector, profile: &ThresholdProfile) -> LabelVector {
    let mut flags = [false; 4];
    for key in Key::CATEGORIES {
        flags[key.index()] = confs.get(key) >= profile.threshold(key);
    }
    LabelVector::from_categories(flags)
}

/// A post with its human gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPost {
    pub post: Post,
    pub gold: LabelVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub mode: String,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Posts scored.
    pub n: usize,
    /// Posts the model failed to annotate; excluded from the row.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Benchmark {
    pub rows: Vec<BenchmarkRow>,
    pub profile: ThresholdProfile,
}

impl Benchmark {
    pub fn row(&self, mode: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "mode",
            "accuracy",
            "f1",
            "precision",
            "recall",
            "n",
            "failures",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.mode.clone(),
                fmt_metric(r.accuracy),
                fmt_metric(r.f1),
                fmt_metric(r.precision),
                fmt_metric(r.recall),
                r.n.to_string(),
                r.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub objective: Objective,
    pub grid_step: f64,
    pub batch: BatchOptions,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            objective: Objective::F1,
            grid_step: 0.01,
            batch: BatchOptions::default(),
        }
    }
}

fn row(
    mode: &str,
    pred: &[LabelVector],
    gold: &[LabelVector],
    failures: usize,
) -> Result<BenchmarkRow> {
    let m = class_metrics(pred, gold)?;
    Ok(BenchmarkRow {
        mode: mode.to_string(),
        accuracy: m.macro_avg.accuracy,
        f1: m.macro_avg.f1,
        precision: m.macro_avg.precision,
        recall: m.macro_avg.recall,
        n: pred.len(),
        failures,
    })
}

/// Scores the three prompting modes with the model's hard labels, plus the
/// steering prompt with thresholds tuned on `tuning`. Metrics are macro
/// averages over the five keys.
pub fn benchmark_modes(
    tuning: &[LabeledPost],
    eval: &[LabeledPost],
    endpoint: &dyn Endpoint,
    profile: &DomainProfile,
    opts: &BenchmarkOptions,
) -> Result<Benchmark> {
    let tuning_ids: BTreeSet<&str> = tuning.iter().map(|p| p.post.id.as_str()).collect();
    let overlap = eval
        .iter()
        .filter(|p| tuning_ids.contains(p.post.id.as_str()))
        .count();
    if overlap > 0 {
        return Err(Error::SplitOverlap(overlap));
    }
    if eval.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let batch = BatchOptions {
        journal: None,
        ..opts.batch.clone()
    };

    let run = |items: &[LabeledPost], mode: PromptMode| {
        let posts: Vec<Post> = items.iter().map(|p| p.post.clone()).collect();
        let outcome = annotate_batch(&posts, mode, profile, endpoint, &batch)?;
        let by_id: std::collections::BTreeMap<&str, &crate::gateway::MachineAnnotation> = outcome
            .annotations
            .iter()
            .map(|a| (a.post_id.as_str(), a))
            .collect();
        let mut hard = Vec::new();
        let mut confs = Vec::new();
        let mut gold = Vec::new();
        for item in items {
            if let Some(a) = by_id.get(item.post.id.as_str()) {
                hard.push(a.labels);
                confs.push(a.confidence);
                gold.push(item.gold);
            }
        }
        Ok::<_, Error>((hard, confs, gold, outcome.failures.len()))
    };

    let mut rows = Vec::new();
    for mode in PromptMode::ALL {
        let (hard, _, gold, failures) = run(eval, mode)?;
        rows.push(row(mode.as_str(), &hard, &gold, failures)?);
    }

    let (_, tune_confs, tune_gold, _) = run(tuning, PromptMode::SystemSteering)?;
    let tuned = tune_thresholds(&tune_confs, &tune_gold, opts.objective, opts.grid_step)?;
    let (_, eval_confs, eval_gold, failures) = run(eval, PromptMode::SystemSteering)?;
    let pred: Vec<LabelVector> = eval_confs
        .iter()
        .map(|c| classify(c, &tuned.profile))
        .collect();
    rows.push(row("rda", &pred, &eval_gold, failures)?);

    Ok(Benchmark {
        rows,
        profile: tuned.profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cv(v: [f64; 4]) -> ConfidenceVector {
        ConfidenceVector::from_values(v)
    }

    fn one_category(conf: &[f64], gold: &[bool]) -> (Vec<ConfidenceVector>, Vec<LabelVector>) {
        let confs = conf.iter().map(|&c| cv([c, 0.5, 0.5, 0.5])).collect();
        let labels = gold
            .iter()
            .map(|&g| LabelVector::from_categories([g, false, false, false]))
            .collect();
        (confs, labels)
    }

    #[test]
    fn plateau_lower_median() {
        let (c, g) = one_category(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]);
        let t = tune_thresholds(&c, &g, Objective::F1, 0.01).unwrap();
        let ct = t.profile.categories[0];
        assert_eq!(ct.threshold, 0.5);
        assert_eq!(ct.objective, 1.0);
        let maximizers: Vec<f64> = t.curves[0]
            .points
            .iter()
            .filter(|p| p.1 == 1.0)
            .map(|p| p.0)
            .collect();
        assert_eq!(maximizers.len(), 60);
        assert_eq!(maximizers[0], 0.21);
        assert_eq!(*maximizers.last().unwrap(), 0.8);
        // categories without positives fall back
        assert!(t.profile.categories[1].fallback);
        assert_eq!(t.profile.categories[1].threshold, 0.5);
    }

    #[test]
    fn inverted_confidences_warn() {
        let (c, g) = one_category(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]);
        let t = tune_thresholds(&c, &g, Objective::F1, 0.01).unwrap();
        let ct = t.profile.categories[0];
        assert!(ct.inverted);
        assert!(ct.objective < 1.0);
        assert!(!t.profile.warnings().is_empty());
    }

    #[test]
    fn constant_confidences() {
        let (c, g) = one_category(&[0.7; 4], &[true, false, true, false]);
        let t = tune_thresholds(&c, &g, Objective::F1, 0.01).unwrap();
        let ct = t.profile.categories[0];
        // t in 0.00..=0.70 predicts all positive: F1 = 2*2/(4+2) = 2/3
        assert!((ct.objective - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ct.threshold, 0.35);
    }

    #[test]
    fn classify_boundaries() {
        let p = ThresholdProfile::uniform(0.5);
        assert_eq!(
            classify(&cv([0.9, 0.1, 0.6, 0.2]), &p),
            LabelVector::from_categories([true, false, true, false])
        );
        assert_eq!(
            classify(&cv([0.1, 0.2, 0.3, 0.4]), &p),
            LabelVector::none_only()
        );
        assert!(classify(&cv([0.5, 0.0, 0.0, 0.0]), &p).culture_identity);
    }

    #[test]
    fn grid_must_divide_one() {
        assert_eq!(
            threshold_grid(0.25).unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert!(threshold_grid(0.3).is_err());
        assert!(threshold_grid(0.0).is_err());
        assert_eq!(threshold_grid(0.01).unwrap().len(), 101);
    }

    #[test]
    fn profile_round_trip() {
        let (c, g) = one_category(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]);
        let t = tune_thresholds(&c, &g, Objective::Accuracy, 0.05).unwrap();
        let mut buf = Vec::new();
        t.profile.save(&mut buf).unwrap();
        assert_eq!(ThresholdProfile::load(buf.as_slice()).unwrap(), t.profile);
    }

    proptest! {
        #[test]
        fn classify_is_monotone(c in 0.0f64..1.0, bump in 0.0f64..0.5, t in 0.0f64..1.0) {
            let p = ThresholdProfile::uniform(t);
            let low = classify(&cv([c; 4]), &p);
            let high = classify(&cv([(c + bump).min(1.0); 4]), &p);
            prop_assert!(!low.culture_identity || high.culture_identity);
            let stricter = ThresholdProfile::uniform((t + bump).min(1.0));
            prop_assert!(classify(&cv([c; 4]), &stricter).culture_identity <= low.culture_identity);
        }

        #[test]
        fn tuned_beats_half(
            items in proptest::collection::vec((0u32..=100, any::<bool>()), 1..40),
        ) {
            let conf: Vec<f64> = items.iter().map(|(c, _)| *c as f64 / 100.0).collect();
            let gold: Vec<bool> = items.iter().map(|(_, g)| *g).collect();
            let (c, g) = one_category(&conf, &gold);
            let t = tune_thresholds(&c, &g, Objective::F1, 0.01).unwrap();
            let at_half = t.curves[0].points[50].1;
            prop_assert!(t.profile.categories[0].objective >= at_half);
        }
    }
}
