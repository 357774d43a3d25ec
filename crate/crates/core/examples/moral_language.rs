// Moral language and othering: per-cell 2x2 tables of each moral device
// against each othering category, the headline chi-squared test, and a
// comparison of the two communities.

use std::collections::BTreeMap;

use othering::labels::LabelVector;
use othering::moral::{
    group_contrast, moral_othering_grid, paired_posts, ContrastCell, MoralOtheringGrid,
};
use othering::stats::ChiSquared;
use othering::synth::{generate, SynthConfig};
use othering::timeline::Community;

pub struct MoralSummary {
    pub grid: MoralOtheringGrid,
    pub headline: ChiSquared,
    pub contrast: Vec<ContrastCell>,
}

pub fn run_example() -> othering::Result<MoralSummary> {
    let s = generate(&SynthConfig::small(6))?;
    let grid = moral_othering_grid(&paired_posts(&s.corpus, &s.truth))?;
    let headline = grid.headline_test()?;
    let subset = |c: Community| -> BTreeMap<String, LabelVector> {
        s.corpus
            .posts()
            .iter()
            .filter(|p| s.communities[&p.channel_id] == c)
            .map(|p| (p.id.clone(), s.truth[&p.id]))
            .collect()
    };
    let ru = moral_othering_grid(&paired_posts(&s.corpus, &subset(Community::Russian)))?;
    let ua = moral_othering_grid(&paired_posts(&s.corpus, &subset(Community::Ukrainian)))?;
    let contrast = group_contrast(&ru, &ua)?;
    Ok(MoralSummary {
        grid,
        headline,
        contrast,
    })
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let s = run_example()?;
    println!(
        "any othering x any moral device: chi2 {:.3}, p {:.3e}",
        s.headline.statistic, s.headline.p
    );
    s.grid.write_csv(std::io::stdout().lock())?;
    println!("\nrussian vs ukrainian, P(device | category):");
    othering::moral::write_contrast_csv(&s.contrast, std::io::stdout().lock())?;
    Ok(())
}
