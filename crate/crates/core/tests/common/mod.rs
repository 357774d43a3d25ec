//! Brute-force oracles and the acceptance checks built on them. Shared by
//! the `acceptance` harness and the regular integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use othering::agreement::{cohen_kappa, fleiss_kappa, krippendorff_alpha, RatingsMatrix};
use othering::alignment::{evaluate_degradation, AlignmentReport, ClassScore, GatePolicy};
use othering::attention::{attention_report, normalized_views, ALL};
use othering::corpus::Stance;
use othering::gateway::mock::{lexicon_labels, MockEndpoint, ResponseRule};
use othering::gateway::{
    annotate_batch, BatchOptions, ConfidenceVector, DomainProfile, PromptMode, RetryPolicy,
};
use othering::labels::{group_gold_records, AnnotatorKind, Key, LabelVector};
use othering::network::{
    eigenvector_centrality, propagate_labels, ChannelGraph, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use othering::rda::{classify, tune_thresholds, Objective};
use othering::stats::{
    chi_squared, log_odds_ratio, mann_whitney_u, spearman, two_proportion_z, ContingencyTable2x2,
};
use othering::synth::{generate, SynthConfig};
use othering::timeline::{crisis_comparison, Community};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(t)
}

// ---------------------------------------------------------------- agreement

/// Cohen's kappa with chance agreement taken as the share of agreeing
/// cross pairs `(a_i, b_j)`. When chance agreement is 1, identical
/// sequences score 1.0 and anything else is `None`.
pub fn cohen_oracle(a: &[bool], b: &[bool]) -> Option<f64> {
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut cross = 0usize;
    for x in a {
        for y in b {
            cross += usize::from(x == y);
        }
    }
    let p_e = cross as f64 / (n * n);
    if p_e >= 1.0 {
        return (a == b).then_some(1.0);
    }
    Some((p_o - p_e) / (1.0 - p_e))
}

/// Fleiss' kappa from ordered annotator pairs within items and ordered
/// pairs across the pooled ratings.
pub fn fleiss_oracle(rows: &[Vec<bool>]) -> Option<f64> {
    let r = rows[0].len();
    let mut p_bar = 0.0;
    for row in rows {
        let mut agree = 0usize;
        for j in 0..r {
            for k in 0..r {
                if j != k && row[j] == row[k] {
                    agree += 1;
                }
            }
        }
        p_bar += agree as f64 / (r * (r - 1)) as f64;
    }
    p_bar /= rows.len() as f64;
    let pool: Vec<bool> = rows.iter().flatten().copied().collect();
    let mut same = 0usize;
    for x in &pool {
        for y in &pool {
            same += usize::from(x == y);
        }
    }
    let p_e = same as f64 / (pool.len() * pool.len()) as f64;
    (p_e < 1.0).then(|| (p_bar - p_e) / (1.0 - p_e))
}

/// Nominal Krippendorff's alpha straight from pairable values: observed
/// disagreement over within-unit ordered pairs weighted by `1/(m_u - 1)`,
/// expected disagreement over all ordered pairs of pairable values.
pub fn krippendorff_oracle(rows: &[Vec<Option<bool>>]) -> Option<f64> {
    let units: Vec<Vec<bool>> = rows
        .iter()
        .map(|r| r.iter().flatten().copied().collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let pool: Vec<bool> = units.iter().flatten().copied().collect();
    let n = pool.len() as f64;
    if n < 2.0 {
        return None;
    }
    let mut d_o = 0.0;
    for u in &units {
        let mut mismatches = 0usize;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    mismatches += 1;
                }
            }
        }
        d_o += mismatches as f64 / (u.len() - 1) as f64;
    }
    d_o /= n;
    let mut mismatches = 0usize;
    for i in 0..pool.len() {
        for j in 0..pool.len() {
            if i != j && pool[i] != pool[j] {
                mismatches += 1;
            }
        }
    }
    let d_e = mismatches as f64 / (n * (n - 1.0));
    (d_e > 0.0).then(|| 1.0 - d_o / d_e)
}

fn agree(lib: othering::Result<f64>, oracle: Option<f64>, tol: f64) -> bool {
    match (lib, oracle) {
        (Ok(a), Some(b)) => (a - b).abs() <= tol,
        (Err(othering::Error::DegenerateMarginals), None) => true,
        _ => false,
    }
}

/// Random instances: up to 6 items, 2 to 4 annotators, some ratings
/// missing for Krippendorff.
pub fn agreement_oracle_instances(instances: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..instances {
        let items = rng.random_range(1..=6);
        let raters = rng.random_range(2..=4);
        let complete: Vec<Vec<bool>> = (0..items)
            .map(|_| (0..raters).map(|_| rng.random_bool(0.5)).collect())
            .collect();

        let a: Vec<bool> = complete.iter().map(|r| r[0]).collect();
        let b: Vec<bool> = complete.iter().map(|r| r[1]).collect();
        let lib = cohen_kappa(&a, &b);
        ensure(agree(lib, cohen_oracle(&a, &b), 1e-9), || {
            format!("cohen mismatch on case {case}: {a:?} {b:?}")
        })?;

        let m = RatingsMatrix::complete(&complete).map_err(|e| e.to_string())?;
        ensure(
            agree(fleiss_kappa(&m), fleiss_oracle(&complete), 1e-9),
            || format!("fleiss mismatch on case {case}: {complete:?}"),
        )?;

        let mut gappy: Vec<Vec<Option<bool>>> = complete
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&v| (!rng.random_bool(0.2)).then_some(v))
                    .collect()
            })
            .collect();
        for row in &mut gappy {
            if row.iter().all(Option::is_none) {
                row[0] = Some(rng.random_bool(0.5));
            }
        }
        let m = RatingsMatrix::new(gappy.clone()).map_err(|e| e.to_string())?;
        let oracle = krippendorff_oracle(&gappy);
        let lib = krippendorff_alpha(&m);
        let ok = match (&lib, oracle) {
            (Err(othering::Error::InvalidInput(_)), None) => true,
            _ => agree(lib, oracle, 1e-9),
        };
        ensure(ok, || {
            format!("krippendorff mismatch on case {case}: {gappy:?}")
        })?;
    }
    Ok(instances)
}

pub fn agreement_hand_cases() -> Vec<(&'static str, f64, f64)> {
    let cohen = cohen_kappa(
        &[true, true, false, false, true],
        &[true, false, false, false, true],
    )
    .unwrap();
    let fleiss = fleiss_kappa(
        &RatingsMatrix::complete(&[
            vec![true, true, true],
            vec![true, true, false],
            vec![false, false, false],
        ])
        .unwrap(),
    )
    .unwrap();
    let alpha = krippendorff_alpha(
        &RatingsMatrix::complete(&[
            vec![true, true],
            vec![true, true],
            vec![false, false],
            vec![true, false],
        ])
        .unwrap(),
    )
    .unwrap();
    vec![
        ("cohen", cohen, 0.6154),
        ("fleiss", fleiss, 0.5),
        ("krippendorff", alpha, 0.5333),
    ]
}

pub fn criterion_agreement() -> Check {
    let start = Instant::now();
    let n = agreement_oracle_instances(200, 2024)?;
    let mut bad = Vec::new();
    for (name, got, want) in agreement_hand_cases() {
        if (got - want).abs() > 1e-4 {
            bad.push(format!("{name} hand case {got:.4} != {want}"));
        }
    }
    let t = within_time(start, Duration::from_secs(5))?;
    if bad.is_empty() {
        Ok(format!(
            "{n} random instances within 1e-9, hand cases within 1e-4, {t:.2?}"
        ))
    } else {
        Err(format!("{n} random instances agree; {}", bad.join("; ")))
    }
}

// ------------------------------------------------------------------- tuner

/// Exhaustive sweep over `t = k / 100` using exact rational comparison of
/// the objective. Returns `(threshold, fallback)` per category.
pub fn tuner_oracle(conf: &[f64], gold: &[bool], objective: Objective) -> (f64, bool) {
    let has_pos = gold.iter().any(|&g| g);
    let has_neg = gold.iter().any(|&g| !g);
    if !has_pos || !has_neg {
        return (0.5, true);
    }
    // objective as numerator / denominator
    let score = |t: f64| -> (usize, usize) {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (&c, &g) in conf.iter().zip(gold) {
            match (c >= t, g) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        match objective {
            Objective::F1 if 2 * tp + fp + fn_ == 0 => (1, 1),
            Objective::F1 => (2 * tp, 2 * tp + fp + fn_),
            Objective::Accuracy => (tp + tn, conf.len()),
        }
    };
    let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let scores: Vec<(usize, usize)> = grid.iter().map(|&t| score(t)).collect();
    let better = |a: (usize, usize), b: (usize, usize)| a.0 * b.1 > b.0 * a.1;
    let best = scores
        .iter()
        .copied()
        .fold((0, 1), |acc, s| if better(s, acc) { s } else { acc });
    let ties: Vec<f64> = grid
        .iter()
        .zip(&scores)
        .filter(|(_, s)| s.0 * best.1 == best.0 * s.1)
        .map(|(t, _)| *t)
        .collect();
    (ties[(ties.len() - 1) / 2], false)
}

pub fn tuner_instances(instances: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..instances {
        let n = rng.random_range(1..=50);
        let objective = if rng.random_bool(0.5) {
            Objective::F1
        } else {
            Objective::Accuracy
        };
        // coarse confidences produce plateaus and ties
        let coarse = rng.random_bool(0.5);
        let confs: Vec<[f64; 4]> = (0..n)
            .map(|_| {
                [0; 4].map(|_| {
                    if coarse {
                        rng.random_range(0..=10) as f64 / 10.0
                    } else {
                        rng.random::<f64>()
                    }
                })
            })
            .collect();
        let gold: Vec<LabelVector> = (0..n)
            .map(|_| LabelVector::from_categories([0; 4].map(|_| rng.random_bool(0.3))))
            .collect();
        let cv: Vec<ConfidenceVector> = confs
            .iter()
            .map(|c| ConfidenceVector::from_values(*c))
            .collect();
        let tuned = tune_thresholds(&cv, &gold, objective, 0.01).map_err(|e| e.to_string())?;
        for key in Key::CATEGORIES {
            let i = key as usize;
            let c: Vec<f64> = confs.iter().map(|v| v[i]).collect();
            let g: Vec<bool> = gold.iter().map(|l| l.get(key)).collect();
            let (t, fallback) = tuner_oracle(&c, &g, objective);
            let got = tuned.profile.categories[i];
            ensure(got.threshold == t && got.fallback == fallback, || {
                format!(
                    "case {case} {}: tuner {} vs sweep {t}",
                    key.name(),
                    got.threshold
                )
            })?;
        }
    }
    Ok(instances)
}

pub fn criterion_tuner() -> Check {
    let start = Instant::now();
    let n = tuner_instances(100, 77)?;
    let worked = tune_thresholds(
        &[0.9, 0.8, 0.2, 0.1].map(|c| ConfidenceVector::from_values([c, 0.5, 0.5, 0.5])),
        &[true, true, false, false].map(|g| LabelVector::from_categories([g, false, false, false])),
        Objective::F1,
        0.01,
    )
    .map_err(|e| e.to_string())?;
    let t0 = worked.profile.categories[0].threshold;
    ensure(t0 == 0.5, || {
        format!("worked example chose {t0}, expected 0.50")
    })?;
    let t = within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "{n} instances equal to exhaustive sweep, worked example 0.50, {t:.2?}"
    ))
}

// ------------------------------------------------------------------- stats

pub fn criterion_stats() -> Check {
    let start = Instant::now();
    let e = |x: othering::Error| x.to_string();
    let chi = chi_squared(&ContingencyTable2x2::new(20, 30, 30, 20), false).map_err(e)?;
    ensure((chi.statistic - 4.0).abs() < 1e-9, || {
        format!("chi2 {}", chi.statistic)
    })?;
    ensure((chi.p - 0.0455).abs() < 5e-4, || {
        format!("chi2 p {}", chi.p)
    })?;
    let lor = log_odds_ratio(&ContingencyTable2x2::new(30, 70, 10, 90));
    ensure((lor.lor - 1.3161).abs() < 1e-3, || {
        format!("lor {}", lor.lor)
    })?;
    let z = two_proportion_z(30, 100, 20, 100).map_err(e)?;
    ensure((z.z - 1.633).abs() < 1e-3, || format!("z {}", z.z))?;
    let m = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).map_err(e)?;
    ensure((m.p - 0.1).abs() < 1e-12, || {
        format!("mann-whitney p {}", m.p)
    })?;
    let r = spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).map_err(e)?;
    ensure((r.rho + 0.5).abs() < 1e-12, || {
        format!("spearman {}", r.rho)
    })?;
    let t = within_time(start, Duration::from_secs(1))?;
    Ok(format!(
        "chi2 4.0 (p {:.4}), lor {:.4}, z {:.4}, mwu p 0.1, rho -0.5, {t:.2?}",
        chi.p, lor.lor, z.z
    ))
}

// ------------------------------------------------------------------- graph

pub fn random_graph(rng: &mut ChaCha8Rng) -> (ChannelGraph, BTreeMap<String, Stance>) {
    let n = rng.random_range(1..=50);
    let mut g = ChannelGraph::new();
    for i in 0..n {
        g.add_node(format!("c{i:02}"));
    }
    let p = rng.random_range(0.0..0.2);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(p) {
                g.add_edge(
                    &format!("c{i:02}"),
                    &format!("c{j:02}"),
                    rng.random_range(1..5),
                );
            }
        }
    }
    let mut seeds = BTreeMap::new();
    for i in 0..n {
        if rng.random_bool(0.2) || i == 0 {
            let s = if rng.random_bool(0.5) {
                Stance::ProRussia
            } else {
                Stance::ProUkraine
            };
            seeds.insert(format!("c{i:02}"), s);
        }
    }
    (g, seeds)
}

pub fn criterion_graph() -> Check {
    let mut p3 = ChannelGraph::new();
    p3.add_edge("a", "b", 1);
    p3.add_edge("b", "c", 1);
    let eig =
        eigenvector_centrality(&p3, DEFAULT_TOL, DEFAULT_MAX_ITERS).map_err(|e| e.to_string())?;
    let want = [
        ("a", 0.5),
        ("b", std::f64::consts::FRAC_1_SQRT_2),
        ("c", 0.5),
    ];
    for (id, v) in want {
        ensure((eig[id] - v).abs() < 1e-6, || {
            format!("P3 centrality of {id}: {}", eig[id])
        })?;
    }

    let mut path = ChannelGraph::new();
    path.add_edge("a", "b", 2);
    path.add_edge("b", "c", 1);
    path.add_edge("c", "d", 1);
    let seeds = BTreeMap::from([
        ("a".to_string(), Stance::ProRussia),
        ("d".to_string(), Stance::ProUkraine),
    ]);
    let prop = propagate_labels(&path, &seeds, 10).map_err(|e| e.to_string())?;
    let got: Vec<Stance> = ["a", "b", "c", "d"]
        .iter()
        .map(|id| prop.stances[*id])
        .collect();
    ensure(
        got == [
            Stance::ProRussia,
            Stance::ProRussia,
            Stance::Other,
            Stance::ProUkraine,
        ],
        || format!("path fixture labels {got:?}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let (g, seeds) = random_graph(&mut rng);
        let n = g.node_count();
        let p = propagate_labels(&g, &seeds, n).map_err(|e| e.to_string())?;
        ensure(p.converged && p.passes <= n, || {
            format!(
                "random graph {case}: {} passes on {n} nodes (converged {})",
                p.passes, p.converged
            )
        })?;
    }
    Ok("P3 (0.5, 0.7071, 0.5), path (R, R, other, U), 100 random graphs within |V| passes".into())
}

// --------------------------------------------------------------- pipeline

pub fn criterion_alignment_gate() -> Check {
    let policy = GatePolicy::default();
    let scores = |kappa: [f64; 5], f1: [f64; 5]| -> Vec<ClassScore> {
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
    };
    let kappa = [0.84, 0.74, 0.81, 0.84, 0.84];
    let f1 = [0.86, 0.80, 0.89, 0.88, 0.87];
    let fp = "gold".to_string();
    let base = AlignmentReport::from_scores(scores(kappa, f1), fp.clone(), 150, &policy);
    ensure(base.passed, || {
        format!("reference values rejected: {:?}", base.reasons)
    })?;
    for (i, key) in Key::ALL.iter().enumerate() {
        let mut k = kappa;
        k[i] = 0.69;
        let r = AlignmentReport::from_scores(scores(k, f1), fp.clone(), 150, &policy);
        ensure(
            !r.passed && r.reasons.iter().any(|m| m.contains(key.name())),
            || format!("kappa 0.69 on {} not reported: {:?}", key.name(), r.reasons),
        )?;
    }
    let hq = AlignmentReport::from_scores(
        scores([0.9; 5], [0.92, 0.80, 0.90, 0.97, 0.92]),
        fp,
        150,
        &policy,
    );
    let strict = GatePolicy {
        max_degradation: 0.04,
        ..policy
    };
    let fail = evaluate_degradation(&base, &hq, &strict).map_err(|e| e.to_string())?;
    let pass = evaluate_degradation(&base, &hq, &policy).map_err(|e| e.to_string())?;
    ensure(!fail.passed && pass.passed, || {
        "degradation gate not decided at 0.04 / 0.05".into()
    })?;
    Ok("reference kappa/F1 pass; kappa < 0.70 fails naming each class; drop 0.042 fails at 0.04, passes at 0.05".into())
}

/// Mock annotation, threshold tuning and classification over a generated
/// corpus; returns the classified labels.
pub fn classify_synthetic(
    s: &othering::synth::SyntheticCorpus,
    seed: u64,
) -> othering::Result<BTreeMap<String, LabelVector>> {
    let endpoint = MockEndpoint::new(seed)
        .with_oracle(lexicon_labels)
        .with_default_rule(ResponseRule::new("", 4.0, 0.0, 1.0));
    let opts = BatchOptions {
        concurrency_limit: 8,
        journal: None,
        retry: RetryPolicy::immediate(),
    };
    let outcome = annotate_batch(
        s.corpus.posts(),
        PromptMode::SystemSteering,
        &DomainProfile::war_bloggers(),
        &endpoint,
        &opts,
    )?;
    let sets = group_gold_records(s.gold.clone())?;
    let gold = othering::alignment::GoldSet::from_sets(&sets, &[AnnotatorKind::Human])?;
    let by_id: BTreeMap<&str, &ConfidenceVector> = outcome
        .annotations
        .iter()
        .map(|a| (a.post_id.as_str(), &a.confidence))
        .collect();
    let confs: Vec<ConfidenceVector> = gold.post_ids.iter().map(|id| *by_id[id.as_str()]).collect();
    let tuned = tune_thresholds(&confs, &gold.labels, Objective::F1, 0.01)?;
    Ok(outcome
        .annotations
        .iter()
        .map(|a| (a.post_id.clone(), classify(&a.confidence, &tuned.profile)))
        .collect())
}

pub fn criterion_planted_effects() -> Check {
    let start = Instant::now();
    let cfg = SynthConfig::default();
    let s = generate(&cfg).map_err(|e| e.to_string())?;
    ensure(
        s.corpus.len() == 5000 && s.corpus.channels().len() == 40,
        || "unexpected corpus shape".into(),
    )?;
    let labels = classify_synthetic(&s, 1).map_err(|e| e.to_string())?;
    let views = normalized_views(&s.corpus);
    let attention = attention_report(&s.corpus, &labels, None, &views);
    let gap = attention
        .tests
        .iter()
        .find(|r| r.statistic == format!("view_gap[{ALL},{ALL}]"))
        .ok_or("no pooled view test")?;
    let (value, p) = (gap.value.unwrap_or(f64::NAN), gap.p.unwrap_or(f64::NAN));
    ensure(value > 0.0 && p < 0.01, || {
        format!("view gap {value:.3} with p {p:.3e}")
    })?;
    let crisis = crisis_comparison(
        &s.corpus,
        &labels,
        &s.registry,
        &s.communities,
        &views,
        None,
    )
    .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for c in [Community::Russian, Community::Ukrainian] {
        for (window, planted) in [("in", cfg.rate_in_window), ("out", cfg.rate_out_window)] {
            let got = crisis
                .proportion(c, window)
                .and_then(|p| p.proportion)
                .ok_or_else(|| format!("no {window} proportion for {c}"))?;
            worst = worst.max((got - planted).abs());
            ensure((got - planted).abs() <= 0.03, || {
                format!("{c} {window}-window proportion {got:.4} vs planted {planted}")
            })?;
        }
    }
    let t = within_time(start, Duration::from_secs(120))?;
    Ok(format!(
        "view gap {value:+.3} sd (p {p:.1e}), proportions within {worst:.4} of planted rates, {t:.2?}"
    ))
}

pub mod pipeline_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/pipeline.rs"));
}

pub mod domain_example {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/domain_adaptation.rs"
    ));
}

/// CSV files of a run directory by name.
pub fn csv_outputs(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("run directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

pub fn criterion_determinism() -> Check {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline_example::run_pipeline(a.path(), 11, false).map_err(|e| e.to_string())?;
    pipeline_example::run_pipeline(b.path(), 11, false).map_err(|e| e.to_string())?;
    let (x, y) = (csv_outputs(a.path()), csv_outputs(b.path()));
    ensure(x.len() >= 20, || {
        format!("only {} CSV files written", x.len())
    })?;
    ensure(x.keys().eq(y.keys()), || {
        "runs wrote different CSV files".into()
    })?;
    for (name, bytes) in &x {
        ensure(y[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    let t = within_time(start, Duration::from_secs(60))?;
    Ok(format!(
        "{} CSVs byte-identical across two 5000-post runs, {t:.2?}",
        x.len()
    ))
}

/// Reference fear and hate speech overlaps on the annotated Gab data.
pub const GAB_CONDITIONALS: [(&str, &str, f64); 4] = [
    ("othering", "fear", 0.889),
    ("fear", "othering", 0.242),
    ("othering", "hate", 0.874),
    ("hate", "othering", 0.511),
];

/// Gab posts (JSONL with fear/hate flags) and their othering labels (labels
/// CSV), when both paths are set.
pub fn gab_inputs() -> Option<(std::path::PathBuf, std::path::PathBuf)> {
    let posts = std::env::var_os("OTHERING_GAB_POSTS")?;
    let labels = std::env::var_os("OTHERING_GAB_LABELS")?;
    Some((posts.into(), labels.into()))
}

pub fn gab_overlap(
    posts: &std::path::Path,
    labels: &std::path::Path,
) -> Result<Vec<(String, f64, f64)>, String> {
    use othering::corpus::{ingest_jsonl, Schema};
    use std::collections::BTreeSet;
    let (corpus, _) = ingest_jsonl(posts, Schema::Gab).map_err(|e| e.to_string())?;
    let labels = othering::cli::read_labels_csv(labels).map_err(|e| e.to_string())?;
    let set = |f: &dyn Fn(&othering::corpus::Post) -> bool| -> BTreeSet<String> {
        corpus
            .posts()
            .iter()
            .filter(|p| f(p))
            .map(|p| p.id.clone())
            .collect()
    };
    let report = othering::stats::overlap_report(&[
        (
            "othering".into(),
            set(&|p| labels.get(&p.id).is_some_and(|l| l.any_category())),
        ),
        ("fear".into(), set(&|p| p.fear_speech == Some(true))),
        ("hate".into(), set(&|p| p.hate_speech == Some(true))),
    ]);
    GAB_CONDITIONALS
        .iter()
        .map(|(a, given, want)| {
            let c = report
                .conditionals
                .iter()
                .find(|c| c.a == *a && c.given == *given)
                .ok_or("missing conditional")?;
            Ok((
                format!("P({a}|{given})"),
                c.probability.unwrap_or(f64::NAN),
                *want,
            ))
        })
        .collect()
}

pub fn criterion_conditional_reproduction() -> Check {
    let bench = domain_example::run_example().map_err(|e| e.to_string())?;
    let row = |m: &str| {
        bench
            .rows
            .iter()
            .find(|r| r.mode == m)
            .map(|r| r.f1)
            .ok_or(format!("no {m} row"))
    };
    let (rda, steering) = (row("rda")?, row("system_steering")?);
    ensure(rda >= steering, || {
        format!("rda F1 {rda:.3} below system steering {steering:.3}")
    })?;
    let mono = format!("mock benchmark rda F1 {rda:.3} >= system steering {steering:.3}");
    match gab_inputs() {
        None => Ok(format!(
            "{mono}; Gab overlap not run (OTHERING_GAB_POSTS / OTHERING_GAB_LABELS unset)"
        )),
        Some((posts, labels)) => {
            let mut parts = Vec::new();
            for (name, got, want) in gab_overlap(&posts, &labels)? {
                ensure((got - want).abs() <= 0.005, || {
                    format!("{name} = {got:.4}, expected {want}")
                })?;
                parts.push(format!("{name} {got:.3}"));
            }
            Ok(format!("{mono}; Gab {}", parts.join(", ")))
        }
    }
}
