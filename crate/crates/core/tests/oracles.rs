mod common;

use common::*;
use othering::agreement::{cohen_kappa, fleiss_kappa, krippendorff_alpha, RatingsMatrix};
use othering::gateway::ConfidenceVector;
use othering::labels::{Key, LabelVector};
use othering::rda::{tune_thresholds, Objective};
use proptest::prelude::*;

fn ratings() -> impl Strategy<Value = Vec<Vec<bool>>> {
    (1usize..=6, 2usize..=4).prop_flat_map(|(items, raters)| {
        prop::collection::vec(prop::collection::vec(any::<bool>(), raters), items)
    })
}

proptest! {
    #[test]
    fn cohen_matches_cross_pair_definition(rows in ratings()) {
        let a: Vec<bool> = rows.iter().map(|r| r[0]).collect();
        let b: Vec<bool> = rows.iter().map(|r| r[1]).collect();
        match (cohen_kappa(&a, &b), cohen_oracle(&a, &b)) {
            (Ok(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
            (Err(othering::Error::DegenerateMarginals), None) => {}
            (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
        }
    }

    #[test]
    fn fleiss_matches_pairwise_definition(rows in ratings()) {
        let m = RatingsMatrix::complete(&rows).unwrap();
        match (fleiss_kappa(&m), fleiss_oracle(&rows)) {
            (Ok(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
            (Err(othering::Error::DegenerateMarginals), None) => {}
            (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
        }
    }

    #[test]
    fn krippendorff_matches_pairable_value_definition(
        rows in ratings(),
        holes in prop::collection::vec(any::<bool>(), 24),
    ) {
        let gappy: Vec<Vec<Option<bool>>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .map(|(j, &v)| (j == 0 || !holes[(i * 4 + j) % holes.len()]).then_some(v))
                    .collect()
            })
            .collect();
        let m = RatingsMatrix::new(gappy.clone()).unwrap();
        match (krippendorff_alpha(&m), krippendorff_oracle(&gappy)) {
            (Ok(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
            (Err(_), None) => {}
            (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
        }
    }

    #[test]
    fn krippendorff_equals_fleiss_up_to_small_sample_factor(rows in ratings()) {
        // on complete data alpha = 1 - (1 - kappa) * (nr - 1) / nr
        let m = RatingsMatrix::complete(&rows).unwrap();
        if let (Ok(alpha), Ok(kappa)) = (krippendorff_alpha(&m), fleiss_kappa(&m)) {
            let nr = (rows.len() * rows[0].len()) as f64;
            prop_assert!((alpha - (1.0 - (1.0 - kappa) * (nr - 1.0) / nr)).abs() < 1e-9);
        }
    }

    #[test]
    fn tuner_matches_exhaustive_sweep(
        cases in prop::collection::vec((0u8..=20, any::<bool>()), 1..40),
        accuracy in any::<bool>(),
    ) {
        let objective = if accuracy { Objective::Accuracy } else { Objective::F1 };
        let conf: Vec<f64> = cases.iter().map(|(c, _)| f64::from(*c) / 20.0).collect();
        let gold: Vec<bool> = cases.iter().map(|(_, g)| *g).collect();
        let cv: Vec<ConfidenceVector> = conf.iter().map(|&c| ConfidenceVector::from_values([c, 0.5, 0.5, 0.5])).collect();
        let lv: Vec<LabelVector> = gold.iter().map(|&g| LabelVector::from_categories([g, false, false, false])).collect();
        let tuned = tune_thresholds(&cv, &lv, objective, 0.01).unwrap();
        let (t, fallback) = tuner_oracle(&conf, &gold, objective);
        let got = tuned.profile.categories[Key::CultureIdentity as usize];
        prop_assert_eq!(got.threshold, t);
        prop_assert_eq!(got.fallback, fallback);
    }
}

#[test]
fn hand_cases() {
    let cases = agreement_hand_cases();
    assert!((cases[0].1 - 0.6154).abs() < 1e-4);
    assert!((cases[2].1 - 0.5333).abs() < 1e-4);
    // standard Fleiss: P_bar = 7/9, P_e = (5/9)^2 + (4/9)^2 = 41/81
    let expected = (7.0 / 9.0 - 41.0 / 81.0) / (1.0 - 41.0 / 81.0);
    assert!((cases[1].1 - expected).abs() < 1e-12);
    assert!((cases[1].1 - 0.55).abs() < 1e-12);
}

#[test]
fn seeded_oracle_batches() {
    assert_eq!(agreement_oracle_instances(200, 2024), Ok(200));
    assert_eq!(tuner_instances(100, 77), Ok(100));
}

#[test]
fn statistics_reference_values() {
    criterion_stats().unwrap();
}

#[test]
fn graph_properties() {
    criterion_graph().unwrap();
}

#[test]
fn alignment_gate_cases() {
    criterion_alignment_gate().unwrap();
}
