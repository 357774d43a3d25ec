// Inter-annotator agreement on a toy gold set: Cohen's kappa for a pair,
// Fleiss' kappa and Krippendorff's alpha for the whole panel, and the
// majority-vote gold labels.

use othering::agreement::{
    cohen_kappa, fleiss_kappa, krippendorff_alpha, ratings_for, RatingsMatrix,
};
use othering::labels::{
    majority_vote, AnnotationEntry, AnnotationSet, AnnotatorKind, Key, LabelVector,
};

pub struct AgreementSummary {
    pub cohen: f64,
    pub fleiss: f64,
    pub alpha: f64,
    pub alpha_with_gaps: f64,
    pub majority: Vec<LabelVector>,
}

fn lv(bits: [u8; 4]) -> LabelVector {
    LabelVector::from_categories(bits.map(|b| b == 1))
}

pub fn run_example() -> othering::Result<AgreementSummary> {
    // two annotators, five posts, one category
    let cohen = cohen_kappa(
        &[true, true, false, false, true],
        &[true, false, false, false, true],
    )?;

    // three annotators on four posts
    let panel = [
        [lv([1, 0, 1, 0]), lv([1, 0, 1, 0]), lv([1, 0, 0, 0])],
        [lv([0, 0, 0, 0]), lv([0, 0, 0, 0]), lv([0, 0, 0, 0])],
        [lv([0, 1, 1, 0]), lv([0, 1, 1, 0]), lv([0, 1, 1, 0])],
        [lv([0, 0, 0, 1]), lv([0, 0, 0, 1]), lv([0, 0, 0, 1])],
    ];
    let rows: Vec<Vec<Option<LabelVector>>> = panel
        .iter()
        .map(|r| r.iter().map(|l| Some(*l)).collect())
        .collect();
    let m = ratings_for(&rows, Key::Vilification)?;
    let fleiss = fleiss_kappa(&m)?;
    let alpha = krippendorff_alpha(&m)?;

    // Krippendorff's alpha tolerates missing ratings; Fleiss does not
    let gappy = RatingsMatrix::new(vec![
        vec![Some(true), Some(true), None],
        vec![Some(false), None, Some(false)],
        vec![Some(true), Some(false), Some(true)],
        vec![None, Some(false), Some(false)],
    ])?;
    let alpha_with_gaps = krippendorff_alpha(&gappy)?;
    assert!(fleiss_kappa(&gappy).is_err());

    let mut majority = Vec::new();
    for (i, row) in panel.iter().enumerate() {
        let entries = row
            .iter()
            .enumerate()
            .map(|(a, l)| AnnotationEntry {
                annotator_id: format!("h{a}"),
                kind: AnnotatorKind::Human,
                labels: *l,
                explanation: None,
            })
            .collect();
        let set = AnnotationSet::new(format!("p{i}"), entries)?;
        majority.push(majority_vote(&set, &[AnnotatorKind::Human])?);
    }

    Ok(AgreementSummary {
        cohen,
        fleiss,
        alpha,
        alpha_with_gaps,
        majority,
    })
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let s = run_example()?;
    println!("cohen kappa             {:.4}", s.cohen);
    println!("fleiss kappa (vilif.)   {:.4}", s.fleiss);
    println!("krippendorff alpha      {:.4}", s.alpha);
    println!("alpha, missing ratings  {:.4}", s.alpha_with_gaps);
    for (i, l) in s.majority.iter().enumerate() {
        println!("p{i} gold {}", l.to_reply_mapping());
    }
    Ok(())
}
