// Rapid domain adaptation on an out-of-domain corpus. The scripted model is
// under-confident on the new platform, more so without system steering;
// tuning per-category thresholds on a small labeled split recovers most of
// the lost recall.

use chrono::{Duration, TimeZone, Utc};
use othering::corpus::{split, Post};
use othering::gateway::mock::{lexicon_labels, MockEndpoint, ResponseRule};
use othering::gateway::{BatchOptions, Demonstration, DomainProfile, RetryPolicy};
use othering::labels::LabelVector;
use othering::rda::{benchmark_modes, Benchmark, BenchmarkOptions, LabeledPost, Objective};

const OTHERING: [&str; 8] = [
    "Those cockroaches are flooding our towns.",
    "They will exterminate us if we let them in.",
    "Their leaders are war criminals and butchers.",
    "They despise our traditions and our history.",
    "Vermin like that should be sent back.",
    "A dirty bomb is what they are planning.",
    "Pure evil runs that movement.",
    "Our culture is being replaced.",
];

const NEUTRAL: [&str; 6] = [
    "Anyone watching the game tonight?",
    "New episode of the podcast is up.",
    "Gas prices went up again.",
    "Great turnout at the town meeting.",
    "Storm warning for the coast this weekend.",
    "Finished reading a book on local history.",
];

/// Scripted endpoint: bare prompts separate poorly and lean negative,
/// demonstrations help a little, system steering most.
pub fn endpoint(seed: u64) -> MockEndpoint {
    MockEndpoint::new(seed)
        .with_oracle(lexicon_labels)
        .with_rule(ResponseRule::new("Category definitions:", 3.0, -2.0, 1.5))
        .with_rule(ResponseRule::new("Example 1:", 2.0, -2.5, 1.8))
        .with_default_rule(ResponseRule::new("", 1.5, -2.5, 2.0))
}

pub fn corpus(n: usize, seed: u64) -> Vec<LabeledPost> {
    let start = Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).unwrap();
    (0..n)
        .map(|i| {
            let text = if (i as u64 + seed).is_multiple_of(3) {
                format!("{} #{i}", OTHERING[i % OTHERING.len()])
            } else {
                format!("{} #{i}", NEUTRAL[i % NEUTRAL.len()])
            };
            let gold = lexicon_labels(&text);
            LabeledPost {
                post: Post::new(
                    format!("g{i:04}"),
                    "gab",
                    start + Duration::minutes(i as i64),
                    text,
                ),
                gold,
            }
        })
        .collect()
}

pub fn run_example() -> othering::Result<Benchmark> {
    let items = corpus(400, 0);
    let (tuning, _, eval) = split(&items, (0.3, 0.0, 0.7), 11)?;
    let profile = DomainProfile::social_platform().with_demonstrations(vec![
        Demonstration {
            text: "Those people are animals and should be caged.".into(),
            labels: LabelVector::from_categories([false, false, false, true]),
        },
        Demonstration {
            text: "Nice weather for a walk.".into(),
            labels: LabelVector::none_only(),
        },
    ]);
    let opts = BenchmarkOptions {
        objective: Objective::F1,
        grid_step: 0.01,
        batch: BatchOptions {
            concurrency_limit: 4,
            journal: None,
            retry: RetryPolicy::immediate(),
        },
    };
    benchmark_modes(&tuning, &eval, &endpoint(5), &profile, &opts)
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let b = run_example()?;
    println!(
        "{:<16} {:>8} {:>8} {:>8} {:>8}",
        "mode", "acc", "f1", "prec", "recall"
    );
    for r in &b.rows {
        println!(
            "{:<16} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            r.mode, r.accuracy, r.f1, r.precision, r.recall
        );
    }
    for c in &b.profile.categories {
        println!("threshold {:<42} {:.2}", c.key.name(), c.threshold);
    }
    Ok(())
}
