// Overlap of othering with fear speech and hate speech: exact Venn region
// counts, every pairwise conditional probability, and how toxic each group
// reads to an off-the-shelf toxicity score.

use std::collections::BTreeSet;

use othering::cli::toxicity_groups;
use othering::stats::{overlap_report, toxicity_summary, OverlapReport, ToxicityGroup};
use othering::synth::{generate, SynthConfig};

pub struct OverlapSummary {
    pub overlap: OverlapReport,
    pub toxicity: Vec<ToxicityGroup>,
}

pub fn run_example() -> othering::Result<OverlapSummary> {
    let s = generate(&SynthConfig::small(9))?;
    let posts = s.corpus.posts();
    let set = |f: &dyn Fn(&othering::corpus::Post) -> bool| -> BTreeSet<String> {
        posts
            .iter()
            .filter(|p| f(p))
            .map(|p| p.id.clone())
            .collect()
    };
    let overlap = overlap_report(&[
        ("othering".into(), set(&|p| s.truth[&p.id].any_category())),
        ("fear".into(), set(&|p| p.fear_speech == Some(true))),
        ("hate".into(), set(&|p| p.hate_speech == Some(true))),
    ]);
    let toxicity = toxicity_summary(&toxicity_groups(&s.corpus, &s.truth));
    Ok(OverlapSummary { overlap, toxicity })
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let OverlapSummary {
        overlap: r,
        toxicity,
    } = run_example()?;
    for (name, size) in r.names.iter().zip(&r.sizes) {
        println!("|{name}| = {size}");
    }
    for region in &r.regions {
        let members: Vec<&str> = r
            .names
            .iter()
            .zip(&region.membership)
            .filter(|(_, m)| **m)
            .map(|(n, _)| n.as_str())
            .collect();
        println!("only {:<24} {}", members.join(" & "), region.count);
    }
    for c in &r.conditionals {
        println!(
            "P({} | {}) = {:.3}",
            c.a,
            c.given,
            c.probability.unwrap_or(f64::NAN)
        );
    }
    othering::stats::write_toxicity_csv(&toxicity, std::io::stdout().lock())?;
    Ok(())
}
