// Do othering posts draw more attention? Views are z-scored within each
// channel, then othering and non-othering posts are compared per community.

use othering::attention::{attention_report, normalized_views, AttentionReport, ALL};
use othering::synth::{generate, SynthConfig};

pub struct AttentionSummary {
    pub pooled: AttentionReport,
    pub by_community: AttentionReport,
    pub planted_lift: f64,
}

pub fn run_example() -> othering::Result<AttentionSummary> {
    let cfg = SynthConfig::small(8);
    let s = generate(&cfg)?;
    let views = normalized_views(&s.corpus);
    Ok(AttentionSummary {
        pooled: attention_report(&s.corpus, &s.truth, None, &views),
        by_community: attention_report(&s.corpus, &s.truth, Some(&s.communities), &views),
        planted_lift: cfg.view_lift,
    })
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let s = run_example()?;
    let with = s.pooled.group(ALL, ALL, true).expect("group");
    let without = s.pooled.group(ALL, ALL, false).expect("group");
    println!("planted lift {:+.2} sd", s.planted_lift);
    println!(
        "othering     mean z {:+.3} (se {:.3}, n {})",
        with.mean.unwrap_or(f64::NAN),
        with.se.unwrap_or(f64::NAN),
        with.n
    );
    println!(
        "non-othering mean z {:+.3} (se {:.3}, n {})",
        without.mean.unwrap_or(f64::NAN),
        without.se.unwrap_or(f64::NAN),
        without.n
    );
    s.by_community.write_tests_csv(std::io::stdout().lock())?;
    Ok(())
}
