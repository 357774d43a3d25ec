//! Alignment gates for machine annotators: agreement with the human majority
//! (principle 1) and parity with a stronger reference model (principle 2).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agreement::{class_metrics, cohen_kappa, fmt_metric, MetricsReport};
use crate::error::{Error, Result};
use crate::labels::{gold_labels, AnnotationSet, AnnotatorKind, Key, LabelVector};

/// Slack applied to every threshold comparison so that values equal up to
/// floating-point rounding count as meeting the threshold.
pub const GATE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatePolicy {
    #[serde(default = "default_min_kappa")]
    pub min_kappa_per_class: f64,
    #[serde(default = "default_min_macro_f1")]
    pub min_macro_f1: f64,
    #[serde(default = "default_max_degradation")]
    pub max_degradation: f64,
}

fn default_min_kappa() -> f64 {
    0.70
}

fn default_min_macro_f1() -> f64 {
    0.80
}

fn default_max_degradation() -> f64 {
    0.05
}

impl Default for GatePolicy {
    fn default() -> Self {
        GatePolicy {
            min_kappa_per_class: default_min_kappa(),
            min_macro_f1: default_min_macro_f1(),
            max_degradation: default_max_degradation(),
        }
    }
}

impl GatePolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("min_kappa_per_class", self.min_kappa_per_class),
            ("min_macro_f1", self.min_macro_f1),
            ("max_degradation", self.max_degradation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "gate policy {name} = {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Human gold labels in a fixed post order.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldSet {
    pub post_ids: Vec<String>,
    pub labels: Vec<LabelVector>,
}

impl GoldSet {
    pub fn from_map(map: BTreeMap<String, LabelVector>) -> Self {
        let (post_ids, labels) = map.into_iter().unzip();
        GoldSet { post_ids, labels }
    }

    /// Majority vote of the eligible annotators for every set.
    pub fn from_sets(sets: &[AnnotationSet], eligible: &[AnnotatorKind]) -> Result<Self> {
        Ok(GoldSet::from_map(gold_labels(sets, eligible)?))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.post_ids.iter().map(String::as_str).collect()
    }

    /// SHA-256 over the ordered `(post id, labels)` pairs.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (id, l) in self.post_ids.iter().zip(&self.labels) {
            h.update(id.as_bytes());
            h.update([0]);
            h.update(l.categories().map(u8::from));
            h.update([u8::from(l.none), b'\n']);
        }
        hex::encode(h.finalize())
    }

    /// Candidate labels in gold order; every gold post must be present.
    pub fn align(&self, candidate: &BTreeMap<String, LabelVector>) -> Result<Vec<LabelVector>> {
        self.post_ids
            .iter()
            .map(|id| {
                candidate.get(id).copied().ok_or_else(|| {
                    Error::invalid(format!("candidate has no labels for gold post {id}"))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub key: Key,
    /// `None` when chance agreement is 1 and the sequences differ.
    pub kappa: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// 1: agreement with humans. 2: parity with the reference model.
    pub principle: u8,
    pub gold_fingerprint: String,
    pub items: usize,
    pub classes: Vec<ClassScore>,
    pub macro_f1: f64,
    /// Macro-F1 of the reference model (principle 2 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_macro_f1: Option<f64>,
    pub passed: bool,
    pub reasons: Vec<String>,
}

fn principle_one_reasons(
    classes: &[ClassScore],
    macro_f1: f64,
    policy: &GatePolicy,
) -> Vec<String> {
    let mut reasons = Vec::new();
    for c in classes {
        match c.kappa {
            None => reasons.push(format!("{}: kappa undefined (degenerate marginals)", c.key)),
            Some(k) if k + GATE_EPS < policy.min_kappa_per_class => reasons.push(format!(
                "{}: kappa {k:.4} < {:.4}",
                c.key, policy.min_kappa_per_class
            )),
            Some(_) => {}
        }
    }
    if macro_f1 + GATE_EPS < policy.min_macro_f1 {
        reasons.push(format!(
            "macro-F1 {macro_f1:.4} < {:.4}",
            policy.min_macro_f1
        ));
    }
    reasons
}

impl AlignmentReport {
    /// Builds a principle-1 report from already-computed per-class scores.
    pub fn from_scores(
        classes: Vec<ClassScore>,
        gold_fingerprint: String,
        items: usize,
        policy: &GatePolicy,
    ) -> Self {
        let macro_f1 = classes.iter().map(|c| c.f1).sum::<f64>() / classes.len().max(1) as f64;
        let reasons = principle_one_reasons(&classes, macro_f1, policy);
        AlignmentReport {
            principle: 1,
            gold_fingerprint,
            items,
            classes,
            macro_f1,
            reference_macro_f1: None,
            passed: reasons.is_empty(),
            reasons,
        }
    }

    pub fn write_json(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// One row per key plus a macro row and a decision row.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["category", "kappa", "accuracy", "precision", "recall", "f1"])?;
        for c in &self.classes {
            w.write_record([
                c.key.name().to_string(),
                c.kappa
                    .map(fmt_metric)
                    .unwrap_or_else(|| "degenerate".into()),
                fmt_metric(c.accuracy),
                fmt_metric(c.precision),
                fmt_metric(c.recall),
                fmt_metric(c.f1),
            ])?;
        }
        w.write_record(["macro", "", "", "", "", &fmt_metric(self.macro_f1)])?;
        let decision = if self.passed {
            "pass".to_string()
        } else {
            format!("fail: {}", self.reasons.join("; "))
        };
        w.write_record(["decision", &decision, "", "", "", ""])?;
        w.flush()?;
        Ok(())
    }
}

/// Principle 1: per-class kappa and macro-F1 of a candidate annotator against
/// the human gold labels.
pub fn evaluate_candidate(
    candidate: &[LabelVector],
    gold: &GoldSet,
    policy: &GatePolicy,
) -> Result<AlignmentReport> {
    policy.validate()?;
    if candidate.is_empty() {
        return Err(Error::Empty("candidate labels"));
    }
    let metrics: MetricsReport = class_metrics(candidate, &gold.labels)?;
    let mut classes = Vec::with_capacity(Key::ALL.len());
    for key in Key::ALL {
        let c: Vec<bool> = candidate.iter().map(|l| l.get(key)).collect();
        let g: Vec<bool> = gold.labels.iter().map(|l| l.get(key)).collect();
        let kappa = match cohen_kappa(&c, &g) {
            Ok(k) => Some(k),
            Err(Error::DegenerateMarginals) => None,
            Err(e) => return Err(e),
        };
        let m = metrics.get(key);
        classes.push(ClassScore {
            key,
            kappa,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        });
    }
    Ok(AlignmentReport::from_scores(
        classes,
        gold.fingerprint(),
        gold.len(),
        policy,
    ))
}

/// Principle 2: the candidate must pass principle 1 and stay within
/// `max_degradation` of the reference model's macro-F1 on the same gold set.
pub fn evaluate_degradation(
    candidate: &AlignmentReport,
    reference: &AlignmentReport,
    policy: &GatePolicy,
) -> Result<AlignmentReport> {
    policy.validate()?;
    if candidate.gold_fingerprint != reference.gold_fingerprint {
        return Err(Error::GoldMismatch {
            left: candidate.gold_fingerprint.clone(),
            right: reference.gold_fingerprint.clone(),
        });
    }
    let mut reasons = principle_one_reasons(&candidate.classes, candidate.macro_f1, policy);
    let floor = reference.macro_f1 - policy.max_degradation;
    if candidate.macro_f1 + GATE_EPS < floor {
        reasons.push(format!(
            "macro-F1 {:.4} < reference {:.4} - {:.4}",
            candidate.macro_f1, reference.macro_f1, policy.max_degradation
        ));
    }
    Ok(AlignmentReport {
        principle: 2,
        gold_fingerprint: candidate.gold_fingerprint.clone(),
        items: candidate.items,
        classes: candidate.classes.clone(),
        macro_f1: candidate.macro_f1,
        reference_macro_f1: Some(reference.macro_f1),
        passed: reasons.is_empty(),
        reasons,
    })
}

/// One machine-labeled post handed to fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub post_id: String,
    pub text: String,
    pub labels: LabelVector,
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExportSummary {
    pub written: usize,
    pub excluded_held_out: usize,
}

/// Writes training records as JSONL, dropping any post in the held-out gold
/// set.
pub fn export_training_set(
    records: &[TrainingRecord],
    held_out: &BTreeSet<&str>,
    mut out: impl Write,
) -> Result<ExportSummary> {
    let mut summary = ExportSummary {
        written: 0,
        excluded_held_out: 0,
    };
    for r in records {
        if held_out.contains(r.post_id.as_str()) {
            summary.excluded_held_out += 1;
            continue;
        }
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
        summary.written += 1;
    }
    out.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lv(bits: [bool; 4]) -> LabelVector {
        LabelVector::from_categories(bits)
    }

    fn gold() -> GoldSet {
        let labels = vec![
            lv([true, false, false, false]),
            lv([false, true, false, false]),
            lv([false, false, true, false]),
            lv([false, false, false, true]),
            lv([false; 4]),
            lv([true, true, true, true]),
        ];
        GoldSet {
            post_ids: (0..labels.len()).map(|i| format!("g{i}")).collect(),
            labels,
        }
    }

    fn score(key: Key, kappa: f64, f1: f64) -> ClassScore {
        ClassScore {
            key,
            kappa: Some(kappa),
            accuracy: f1,
            precision: f1,
            recall: f1,
            f1,
        }
    }

    fn scores(kappas: [f64; 5], f1s: [f64; 5]) -> Vec<ClassScore> {
        Key::ALL
            .iter()
            .zip(kappas.iter().zip(f1s))
            .map(|(&k, (&kappa, f1))| score(k, kappa, f1))
            .collect()
    }

    #[test]
    fn perfect_candidate_passes() {
        let g = gold();
        let r = evaluate_candidate(&g.labels, &g, &GatePolicy::default()).unwrap();
        assert!(r.passed);
        assert!(r.classes.iter().all(|c| c.kappa == Some(1.0)));
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn low_kappa_class_is_listed() {
        let r = AlignmentReport::from_scores(
            scores([0.9, 0.5, 0.9, 0.9, 0.9], [0.9; 5]),
            "x".into(),
            10,
            &GatePolicy::default(),
        );
        assert!(!r.passed);
        assert_eq!(r.reasons.len(), 1);
        assert!(r.reasons[0].starts_with(Key::SurvivalSecurity.name()));
    }

    #[test]
    fn constant_class_gate() {
        let mut g = gold();
        for l in &mut g.labels {
            l.dehumanization = false;
            l.none = !l.any_category();
        }
        let r = evaluate_candidate(&g.labels, &g, &GatePolicy::default()).unwrap();
        assert!(r.passed);
        assert_eq!(r.classes[Key::Dehumanization.index()].kappa, Some(1.0));
        // one stray positive against an all-negative gold column: kappa 0
        let mut cand = g.labels.clone();
        cand[0].dehumanization = true;
        let r = evaluate_candidate(&cand, &g, &GatePolicy::default()).unwrap();
        assert_eq!(r.classes[Key::Dehumanization.index()].kappa, Some(0.0));
        assert!(!r.passed);
        let undefined = ClassScore {
            kappa: None,
            ..r.classes[0]
        };
        let r =
            AlignmentReport::from_scores(vec![undefined], "f".into(), 1, &GatePolicy::default());
        assert!(!r.passed);
    }

    #[test]
    fn degradation_boundaries() {
        let p = GatePolicy::default();
        let hq = AlignmentReport::from_scores(scores([0.9; 5], [0.90; 5]), "fp".into(), 5, &p);
        let os = AlignmentReport::from_scores(scores([0.9; 5], [0.84; 5]), "fp".into(), 5, &p);
        assert!(!evaluate_degradation(&os, &hq, &p).unwrap().passed);
        assert!(evaluate_degradation(&hq, &hq, &p).unwrap().passed);
        let edge = AlignmentReport::from_scores(scores([0.9; 5], [0.85; 5]), "fp".into(), 5, &p);
        assert!(evaluate_degradation(&edge, &hq, &p).unwrap().passed);
        let other =
            AlignmentReport::from_scores(scores([0.9; 5], [0.90; 5]), "other".into(), 5, &p);
        assert!(matches!(
            evaluate_degradation(&os, &other, &p),
            Err(Error::GoldMismatch { .. })
        ));
    }

    #[test]
    fn export_excludes_held_out() {
        let g = gold();
        let records: Vec<TrainingRecord> = ["g0", "t1", "g3", "t2"]
            .iter()
            .map(|id| TrainingRecord {
                post_id: id.to_string(),
                text: format!("text {id}"),
                labels: LabelVector::none_only(),
                explanation: "none".into(),
            })
            .collect();
        let mut buf = Vec::new();
        let s = export_training_set(&records, &g.ids(), &mut buf).unwrap();
        assert_eq!(
            s,
            ExportSummary {
                written: 2,
                excluded_held_out: 2
            }
        );
        let exported: BTreeSet<String> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<TrainingRecord>(l).unwrap().post_id)
            .collect();
        assert!(exported.iter().all(|id| !g.ids().contains(id.as_str())));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let g = gold();
        let mut h = g.clone();
        assert_eq!(g.fingerprint(), h.fingerprint());
        h.labels[0].survival_security = true;
        assert_ne!(g.fingerprint(), h.fingerprint());
    }

    proptest! {
        #[test]
        fn gate_is_monotone(
            kappas in proptest::array::uniform5(0.0f64..1.0),
            f1s in proptest::array::uniform5(0.0f64..1.0),
            which in 0usize..5,
            bump in 0.0f64..0.3,
        ) {
            let p = GatePolicy::default();
            let before = AlignmentReport::from_scores(scores(kappas, f1s), "f".into(), 1, &p);
            let mut k2 = kappas;
            let mut f2 = f1s;
            k2[which] = (k2[which] + bump).min(1.0);
            f2[which] = (f2[which] + bump).min(1.0);
            let after = AlignmentReport::from_scores(scores(k2, f2), "f".into(), 1, &p);
            prop_assert!(!before.passed || after.passed);
        }
    }
}
