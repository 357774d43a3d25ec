// The alignment gate: a candidate annotator is accepted only if every class
// reaches the minimum kappa and its macro F1 clears the floor, and a
// cheaper annotator must stay within the allowed F1 drop of the reference.

use std::collections::BTreeSet;

use othering::alignment::{
    export_training_set, AlignmentReport, ClassScore, GatePolicy, TrainingRecord,
};
use othering::labels::{Key, LabelVector};

pub struct GateSummary {
    pub reference: AlignmentReport,
    pub weakened: AlignmentReport,
    pub degraded_strict: AlignmentReport,
    pub degraded_default: AlignmentReport,
    pub exported: usize,
    pub held_out: usize,
}

pub fn scores(kappa: [f64; 5], f1: [f64; 5]) -> Vec<ClassScore> {
    Key::ALL
        .iter()
        .enumerate()
        .map(|(i, k)| ClassScore {
            key: *k,
            kappa: Some(kappa[i]),
            accuracy: f1[i],
            precision: f1[i],
            recall: f1[i],
            f1: f1[i],
        })
        .collect()
}

pub fn run_example() -> othering::Result<GateSummary> {
    let policy = GatePolicy::default();
    let fp = || "gold-v1".to_string();
    // per-class kappa and F1 of a candidate measured against the gold set
    let candidate = scores(
        [0.84, 0.74, 0.81, 0.84, 0.84],
        [0.86, 0.80, 0.89, 0.88, 0.87],
    );
    let reference = AlignmentReport::from_scores(candidate.clone(), fp(), 150, &policy);

    let mut low = candidate.clone();
    low[1].kappa = Some(0.69);
    let weakened = AlignmentReport::from_scores(low, fp(), 150, &policy);

    // a stronger reference annotator on the same gold set
    let hq = AlignmentReport::from_scores(
        scores([0.9; 5], [0.92, 0.80, 0.90, 0.97, 0.92]),
        fp(),
        150,
        &policy,
    );
    let strict = GatePolicy {
        max_degradation: 0.04,
        ..policy
    };
    let degraded_strict = othering::alignment::evaluate_degradation(&reference, &hq, &strict)?;
    let degraded_default = othering::alignment::evaluate_degradation(&reference, &hq, &policy)?;

    // gold posts never reach the fine-tuning set
    let records: Vec<TrainingRecord> = (0..6)
        .map(|i| TrainingRecord {
            post_id: format!("p{i}"),
            text: format!("post {i}"),
            labels: LabelVector::none_only(),
            explanation: "No othering.".into(),
        })
        .collect();
    let held: BTreeSet<&str> = ["p1", "p4"].into_iter().collect();
    let mut out = Vec::new();
    let summary = export_training_set(&records, &held, &mut out)?;

    Ok(GateSummary {
        reference,
        weakened,
        degraded_strict,
        degraded_default,
        exported: summary.written,
        held_out: summary.excluded_held_out,
    })
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let s = run_example()?;
    let show = |name: &str, r: &AlignmentReport| {
        println!(
            "{name:<28} {} (macro F1 {:.3})",
            if r.passed { "PASS" } else { "FAIL" },
            r.macro_f1
        );
        for reason in &r.reasons {
            println!("    {reason}");
        }
    };
    show("candidate", &s.reference);
    show("candidate, one class < 0.70", &s.weakened);
    show("drop vs reference, max 0.04", &s.degraded_strict);
    show("drop vs reference, max 0.05", &s.degraded_default);
    println!(
        "training export: {} written, {} held out",
        s.exported, s.held_out
    );
    Ok(())
}
