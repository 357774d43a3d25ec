// Annotating posts through the chat-completion gateway. A scripted endpoint
// stands in for the model; swapping in `HttpEndpoint` talks to a real
// OpenAI-compatible server instead.

use chrono::{TimeZone, Utc};
use othering::corpus::Post;
use othering::gateway::mock::{
    lexicon_labels, MockEndpoint, RecordingEndpoint, ReplayEndpoint, ResponseRule,
};
use othering::gateway::{
    annotate, annotate_batch, build_prompt, BatchOptions, DomainProfile, MachineAnnotation,
    PromptMode, RetryPolicy,
};
use othering::labels::Key;

pub struct AnnotationSummary {
    pub first: MachineAnnotation,
    pub annotated: usize,
    pub failures: Vec<String>,
    pub resumed_calls: usize,
    pub replay_matches: bool,
}

pub fn posts() -> Vec<Post> {
    let texts = [
        "The orcs shelled the market again.",
        "Power was restored in two districts.",
        "They want to erase our language and wipe us out.",
        "These war criminals smile for the cameras.",
        "Supply lines look stable this morning.",
        "BROKEN",
    ];
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Post::new(
                format!("p{i}"),
                "ch",
                Utc.with_ymd_and_hms(2022, 3, 1, 12, i as u32, 0).unwrap(),
                *t,
            )
        })
        .collect()
}

pub fn run_example() -> othering::Result<AnnotationSummary> {
    let dir = tempfile::tempdir()?;
    let profile = DomainProfile::war_bloggers();
    let endpoint = MockEndpoint::new(3)
        .with_oracle(lexicon_labels)
        .with_default_rule(ResponseRule::new("", 4.0, 0.0, 1.0))
        .malformed_for("BROKEN");
    let posts = posts();

    let bundle = build_prompt(&posts[0].text, PromptMode::SystemSteering, &profile)?;
    let first = annotate(&posts[0].id, &bundle, &endpoint, &RetryPolicy::immediate())?;

    let opts = BatchOptions {
        concurrency_limit: 3,
        journal: Some(dir.path().join("journal.jsonl")),
        retry: RetryPolicy::immediate(),
    };
    let outcome = annotate_batch(
        &posts,
        PromptMode::SystemSteering,
        &profile,
        &endpoint,
        &opts,
    )?;

    // a second run only revisits the post that failed
    let before = endpoint.calls();
    annotate_batch(
        &posts,
        PromptMode::SystemSteering,
        &profile,
        &endpoint,
        &opts,
    )?;
    let resumed_calls = endpoint.calls() - before;

    // record a transcript, then answer the same requests from it offline
    let transcript = dir.path().join("transcript.jsonl");
    let recorder = RecordingEndpoint::new(
        MockEndpoint::new(3).with_oracle(lexicon_labels),
        &transcript,
    )?;
    let live = annotate(
        "p3",
        &build_prompt(&posts[3].text, PromptMode::Bare, &profile)?,
        &recorder,
        &RetryPolicy::immediate(),
    )?;
    let replay = ReplayEndpoint::load(&transcript)?;
    let replayed = annotate(
        "p3",
        &build_prompt(&posts[3].text, PromptMode::Bare, &profile)?,
        &replay,
        &RetryPolicy::immediate(),
    )?;

    Ok(AnnotationSummary {
        first,
        annotated: outcome.annotations.len(),
        failures: outcome.failures.iter().map(|f| f.post_id.clone()).collect(),
        resumed_calls,
        replay_matches: live == replayed,
    })
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    let s = run_example()?;
    println!("labels      {}", s.first.labels.to_reply_mapping());
    println!("explanation {}", s.first.explanation);
    for key in Key::CATEGORIES {
        println!(
            "  P({} = 1) = {:.3}",
            key.name(),
            s.first.confidence.get(key)
        );
    }
    println!(
        "batch: {} annotated, failures {:?}",
        s.annotated, s.failures
    );
    println!("resume made {} new calls", s.resumed_calls);
    println!("replay identical to live run: {}", s.replay_matches);
    Ok(())
}
