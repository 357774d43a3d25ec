mod common;

use othering::corpus::Stance;
use othering::labels::LabelVector;
use othering::timeline::Community;

mod agreement_example {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/agreement.rs"
    ));
}
mod statistics_example {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/statistics.rs"
    ));
}
mod llm_annotation_example {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/llm_annotation.rs"
    ));
}
mod alignment_gate_example {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/alignment_gate.rs"
    ));
}
mod channel_network_example {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/channel_network.rs"
    ));
}
mod temporal_trends_example {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/temporal_trends.rs"
    ));
}
mod moral_language_example {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/moral_language.rs"
    ));
}
mod attention_example {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/attention.rs"
    ));
}
mod overlap_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/overlap.rs"));
}

#[test]
fn agreement() {
    let s = agreement_example::run_example().unwrap();
    assert!((s.cohen - 0.6154).abs() < 1e-4);
    assert!(s.fleiss > 0.0 && s.fleiss <= 1.0);
    // complete data: alpha = 1 - (1 - kappa) * (nr - 1) / nr with nr = 12
    assert!((s.alpha - (1.0 - (1.0 - s.fleiss) * 11.0 / 12.0)).abs() < 1e-12);
    assert!(s.alpha_with_gaps.is_finite());
    assert_eq!(
        s.majority[0],
        LabelVector::from_categories([true, false, true, false])
    );
    assert_eq!(s.majority[1], LabelVector::none_only());
    assert_eq!(
        s.majority[3],
        LabelVector::from_categories([false, false, false, true])
    );
}

#[test]
fn statistics() {
    let s = statistics_example::run_example().unwrap();
    assert!((s.chi2 - 4.0).abs() < 1e-9);
    assert!((s.chi2_p - 0.0455).abs() < 5e-4);
    assert!((s.log_odds - 1.3161).abs() < 1e-3);
    assert!((s.z - 1.633).abs() < 1e-3);
    assert!((s.mwu_p - 0.1).abs() < 1e-12);
    assert!((s.rho + 0.5).abs() < 1e-12);
    assert_eq!(s.mean_se.0, 1.0);
    assert!((s.mean_se.1.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn llm_annotation() {
    let s = llm_annotation_example::run_example().unwrap();
    assert_eq!(s.annotated, 5);
    assert_eq!(s.failures, vec!["p5".to_string()]);
    // only the failed post is requested again, once plus its parse retries
    let policy = othering::gateway::RetryPolicy::immediate();
    assert_eq!(s.resumed_calls, 1 + policy.parse_retries as usize);
    assert!(s.replay_matches);
    assert!(s.first.labels.get(othering::labels::Key::Dehumanization));
    let c = s
        .first
        .confidence
        .get(othering::labels::Key::Dehumanization);
    assert!(c > 0.5 && c < 1.0);
}

#[test]
fn alignment_gate() {
    let s = alignment_gate_example::run_example().unwrap();
    assert!(s.reference.passed);
    assert!(!s.weakened.passed);
    assert!(!s.degraded_strict.passed);
    assert!(s.degraded_default.passed);
    assert_eq!((s.exported, s.held_out), (4, 2));
}

#[test]
fn channel_network() {
    let s = channel_network_example::run_example().unwrap();
    assert_eq!(s.path.stances["b"], Stance::ProRussia);
    assert_eq!(s.path.stances["c"], Stance::Other);
    assert_eq!(s.path.stances["d"], Stance::ProUkraine);
    let e = &s.p3_eigenvector;
    assert!((e["x"] - 0.5).abs() < 1e-6 && (e["z"] - 0.5).abs() < 1e-6);
    assert!((e["y"] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    assert_eq!(s.synthetic_accuracy, 1.0);
    assert!(s.synthetic.converged);
    assert_eq!(s.correlations.len(), 2);
}

#[test]
fn domain_adaptation() {
    let b = common::domain_example::run_example().unwrap();
    let f1 = |m: &str| b.row(m).unwrap().f1;
    assert!(f1("bare") < f1("in_context"));
    assert!(f1("in_context") < f1("system_steering"));
    assert!(f1("system_steering") <= f1("rda"));
    assert!(b.profile.categories.iter().all(|c| c.threshold < 0.5));
}

#[test]
fn temporal_trends() {
    let s = temporal_trends_example::run_example().unwrap();
    assert_eq!(s.series.smooth_window, 7);
    assert!(s.russian_windows > 0);
    for c in [Community::Russian, Community::Ukrainian] {
        let inside = s.crisis.proportion(c, "in").unwrap().proportion.unwrap();
        let outside = s.crisis.proportion(c, "out").unwrap().proportion.unwrap();
        assert!((inside - s.planted.0).abs() < 0.02, "{inside}");
        assert!((outside - s.planted.1).abs() < 0.02, "{outside}");
    }
}

#[test]
fn moral_language() {
    let s = moral_language_example::run_example().unwrap();
    assert_eq!(s.grid.headline.table.total(), 600);
    for cell in s.grid.cells.values() {
        assert_eq!(cell.table.total(), 600);
    }
    assert!((0.0..=1.0).contains(&s.headline.p));
    assert!(!s.contrast.is_empty());
}

#[test]
fn attention() {
    let s = attention_example::run_example().unwrap();
    let all = othering::attention::ALL;
    let with = s.pooled.group(all, all, true).unwrap().mean.unwrap();
    let without = s.pooled.group(all, all, false).unwrap().mean.unwrap();
    assert!(with > without);
    assert_eq!(s.by_community.tests.len(), 2);
}

#[test]
fn overlap() {
    let s = overlap_example::run_example().unwrap();
    let r = &s.overlap;
    assert_eq!(r.names, ["othering", "fear", "hate"]);
    for (i, size) in r.sizes.iter().enumerate() {
        let from_regions: usize = r
            .regions
            .iter()
            .filter(|g| g.membership[i])
            .map(|g| g.count)
            .sum();
        assert_eq!(from_regions, *size);
    }
    assert_eq!(r.conditionals.len(), 6);
    assert!(r
        .conditionals
        .iter()
        .all(|c| c.probability.is_some_and(|p| (0.0..=1.0).contains(&p))));

    let mean = |g: &str| {
        s.toxicity
            .iter()
            .find(|t| t.group == g)
            .unwrap()
            .mean
            .unwrap()
    };
    let dehum = othering::labels::Key::Dehumanization.name();
    assert!(mean(dehum) > mean("othering"));
    assert!(mean("othering") > mean("othering_without_dehumanization"));
    assert!(mean("othering_without_dehumanization") > mean("None"));
    let none = s.toxicity.iter().find(|t| t.group == "None").unwrap();
    assert_eq!(none.share_toxic, Some(0.0));
}

#[test]
fn pipeline() {
    let summary = common::pipeline_example::run_example().unwrap();
    assert!(!summary.trim().is_empty());
}
