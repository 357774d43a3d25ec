//! Offline endpoints: a deterministic simulated annotator and transcript
//! record/replay.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompt::post_text_of;
use super::wire::{
    ChatRequest, ChatResponse, Choice, ChoiceLogprobs, Endpoint, Message, TokenLogprob, TopLogprob,
    TransportError,
};
use crate::error::{Error, Result};
use crate::labels::{Key, LabelVector};

/// How the simulated annotator separates positives from negatives under a
/// given prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRule {
    /// Applies when this text occurs in the system or user message. Empty
    /// matches everything.
    pub marker: String,
    /// Mean logit gap for true labels (negated for false ones).
    pub separation: f64,
    /// Shift added to every logit gap.
    pub bias: f64,
    /// Standard deviation of the per-category noise.
    pub noise: f64,
}

impl ResponseRule {
    pub fn new(marker: impl Into<String>, separation: f64, bias: f64, noise: f64) -> Self {
        ResponseRule {
            marker: marker.into(),
            separation,
            bias,
            noise,
        }
    }
}

/// Keyword lexicon used to decide a post's true labels.
pub fn default_lexicon() -> Vec<(Key, Vec<&'static str>)> {
    vec![
        (
            Key::CultureIdentity,
            vec![
                "our language",
                "traditions",
                "heritage",
                "our culture",
                "our history",
            ],
        ),
        (
            Key::SurvivalSecurity,
            vec![
                "nuclear",
                "dirty bomb",
                "shelling our",
                "wipe us out",
                "exterminate us",
            ],
        ),
        (
            Key::Vilification,
            vec![
                "ukronazi",
                "criminal regime",
                "war criminals",
                "evil",
                "butchers",
            ],
        ),
        (
            Key::Dehumanization,
            vec!["zombie", "vermin", "non-humans", "cockroaches", "orcs"],
        ),
    ]
}

pub fn lexicon_labels(text: &str) -> LabelVector {
    let lower = text.to_lowercase();
    let mut flags = [false; 4];
    for (key, words) in default_lexicon() {
        flags[key.index()] = words.iter().any(|w| lower.contains(w));
    }
    LabelVector::from_categories(flags)
}

type Oracle = Box<dyn Fn(&str) -> LabelVector + Send + Sync>;

/// Deterministic simulated annotator.
///
/// True labels come from an oracle over the post text (the keyword lexicon by
/// default). For every category the simulated model draws a logit gap
/// `±separation + bias + noise·N(0,1)` seeded by the post text, the category
/// and the matching rule, emits the arg-max value token, and reports
/// log-probabilities for both value tokens.
pub struct MockEndpoint {
    oracle: Oracle,
    rules: Vec<ResponseRule>,
    default_rule: ResponseRule,
    seed: u64,
    logprobs: bool,
    malformed: BTreeSet<String>,
    unreachable: BTreeSet<String>,
    calls: AtomicUsize,
}

impl MockEndpoint {
    pub fn new(seed: u64) -> Self {
        MockEndpoint {
            oracle: Box::new(lexicon_labels),
            rules: Vec::new(),
            default_rule: ResponseRule::new("", 4.0, 0.0, 1.0),
            seed,
            logprobs: true,
            malformed: BTreeSet::new(),
            unreachable: BTreeSet::new(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_oracle(
        mut self,
        oracle: impl Fn(&str) -> LabelVector + Send + Sync + 'static,
    ) -> Self {
        self.oracle = Box::new(oracle);
        self
    }

    /// Oracle backed by a fixed text -> labels table; unknown texts fall back
    /// to the lexicon.
    pub fn with_truth_table(self, table: BTreeMap<String, LabelVector>) -> Self {
        self.with_oracle(move |text| {
            table
                .get(text)
                .copied()
                .unwrap_or_else(|| lexicon_labels(text))
        })
    }

    /// Rules are tried in order; the first whose marker occurs wins.
    pub fn with_rule(mut self, rule: ResponseRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn with_default_rule(mut self, rule: ResponseRule) -> Self {
        self.default_rule = rule;
        self
    }

    pub fn without_logprobs(mut self) -> Self {
        self.logprobs = false;
        self
    }

    /// Replies to this post text without any label mapping.
    pub fn malformed_for(mut self, post_text: impl Into<String>) -> Self {
        self.malformed.insert(post_text.into());
        self
    }

    /// Fails every request for this post text at the transport level.
    pub fn unreachable_for(mut self, post_text: impl Into<String>) -> Self {
        self.unreachable.insert(post_text.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn rule_for(&self, request: &ChatRequest) -> (usize, &ResponseRule) {
        let system = request.system();
        let user = request.user();
        self.rules
            .iter()
            .enumerate()
            .find(|(_, r)| {
                r.marker.is_empty() || system.contains(&r.marker) || user.contains(&r.marker)
            })
            .map(|(i, r)| (i + 1, r))
            .unwrap_or((0, &self.default_rule))
    }

    fn gap(&self, text: &str, key: Key, rule_id: usize, rule: &ResponseRule, truth: bool) -> f64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((rule_id as u64).to_le_bytes());
        h.update([key as u8]);
        h.update(text.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let z: f64 = StandardNormal.sample(&mut rng);
        let sign = if truth { 1.0 } else { -1.0 };
        sign * rule.separation + rule.bias + rule.noise * z
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Assembles a reply and its token stream. Each value digit is a separate
/// token carrying its leading space.
pub fn render_reply(
    labels: &LabelVector,
    gaps: [f64; 4],
    explanation: &str,
    with_logprobs: bool,
) -> ChatResponse {
    let mut content = String::from("{");
    let mut tokens: Vec<TokenLogprob> = Vec::new();
    let mut pending = String::from("{");
    let push_text = |tokens: &mut Vec<TokenLogprob>, text: &mut String| {
        if !text.is_empty() {
            tokens.push(TokenLogprob {
                token: std::mem::take(text),
                logprob: -0.001,
                top_logprobs: vec![],
            });
        }
    };
    for (i, key) in Key::ALL.iter().enumerate() {
        let sep = if i == 0 { "" } else { ", " };
        let prefix = format!("{sep}'{}':", key.name());
        content.push_str(&prefix);
        pending.push_str(&prefix);
        push_text(&mut tokens, &mut pending);
        let value = u8::from(labels.get(*key));
        let tok = format!(" {value}");
        content.push_str(&tok);
        // log-softmax over the two value tokens
        let gap = if key.is_category() {
            gaps[key.index()]
        } else if labels.none {
            6.0
        } else {
            -6.0
        };
        let lp1 = -softplus(-gap);
        let lp0 = -softplus(gap);
        tokens.push(TokenLogprob {
            token: tok,
            logprob: if value == 1 { lp1 } else { lp0 },
            top_logprobs: vec![
                TopLogprob {
                    token: " 1".into(),
                    logprob: lp1,
                },
                TopLogprob {
                    token: " 0".into(),
                    logprob: lp0,
                },
            ],
        });
    }
    let tail = format!("}} {explanation}");
    content.push_str(&tail);
    pending.push_str(&tail);
    push_text(&mut tokens, &mut pending);
    ChatResponse {
        model: "mock".into(),
        choices: vec![Choice {
            index: 0,
            message: Message {
                role: "assistant".into(),
                content,
            },
            logprobs: with_logprobs.then_some(ChoiceLogprobs {
                content: Some(tokens),
            }),
            finish_reason: Some("stop".into()),
        }],
    }
}

impl Endpoint for MockEndpoint {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let user = request.user();
        let text = post_text_of(user).unwrap_or(user);
        if self.unreachable.contains(text) {
            return Err(TransportError::new("connection timed out"));
        }
        if self.malformed.contains(text) {
            return Ok(ChatResponse {
                model: "mock".into(),
                choices: vec![Choice {
                    index: 0,
                    message: Message {
                        role: "assistant".into(),
                        content: "I am unable to classify this post.".into(),
                    },
                    logprobs: None,
                    finish_reason: Some("stop".into()),
                }],
            });
        }
        let truth = (self.oracle)(text);
        let (rule_id, rule) = self.rule_for(request);
        let mut gaps = [0.0; 4];
        for key in Key::CATEGORIES {
            gaps[key.index()] = self.gap(text, key, rule_id, rule, truth.get(key));
        }
        let emitted = LabelVector::from_categories(gaps.map(|g| g >= 0.0));
        let explanation = if emitted.none {
            "The post contains no othering language.".to_string()
        } else {
            let names: Vec<_> = Key::CATEGORIES
                .iter()
                .filter(|k| emitted.get(**k))
                .map(|k| k.name())
                .collect();
            format!("The post shows {}.", names.join(" and "))
        };
        Ok(render_reply(&emitted, gaps, &explanation, self.logprobs))
    }

    fn model(&self) -> &str {
        "mock-annotator"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// Wraps an endpoint and appends every exchange to a JSONL transcript.
pub struct RecordingEndpoint<E> {
    inner: E,
    out: Mutex<File>,
}

impl<E: Endpoint> RecordingEndpoint<E> {
    pub fn new(inner: E, path: &Path) -> Result<Self> {
        let out = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::file(path, e.to_string()))?;
        Ok(RecordingEndpoint {
            inner,
            out: Mutex::new(out),
        })
    }
}

impl<E: Endpoint> Endpoint for RecordingEndpoint<E> {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, TransportError> {
        let response = self.inner.complete(request)?;
        let line = serde_json::to_string(&TranscriptEntry {
            request: request.clone(),
            response: response.clone(),
        })
        .map_err(|e| TransportError::new(e.to_string()))?;
        let mut out = self.out.lock().expect("transcript lock");
        writeln!(out, "{line}").map_err(|e| TransportError::new(e.to_string()))?;
        Ok(response)
    }

    fn model(&self) -> &str {
        self.inner.model()
    }
}

/// Answers requests from a recorded transcript; unknown requests fail.
pub struct ReplayEndpoint {
    entries: Vec<TranscriptEntry>,
    model: String,
    source: PathBuf,
}

impl ReplayEndpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::file(path, e.to_string()))?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                entries.push(serde_json::from_str(&line)?);
            }
        }
        let model = entries
            .first()
            .map(|e: &TranscriptEntry| e.request.model.clone())
            .unwrap_or_default();
        Ok(ReplayEndpoint {
            entries,
            model,
            source: path.to_path_buf(),
        })
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }
}

impl Endpoint for ReplayEndpoint {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, TransportError> {
        self.entries
            .iter()
            .find(|e| &e.request == request)
            .map(|e| e.response.clone())
            .ok_or_else(|| {
                TransportError::new(format!(
                    "request not in transcript {}",
                    self.source.display()
                ))
            })
    }

    fn model(&self) -> &str {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{annotate, build_prompt, DomainProfile, PromptMode, RetryPolicy};

    fn bundle(text: &str) -> crate::gateway::PromptBundle {
        build_prompt(
            text,
            PromptMode::SystemSteering,
            &DomainProfile::war_bloggers(),
        )
        .unwrap()
    }

    #[test]
    fn mock_reply_round_trips_through_annotate() {
        let ep = MockEndpoint::new(1).with_default_rule(ResponseRule::new("", 5.0, 0.0, 0.5));
        let text = "These zombies and the criminal regime";
        let a = annotate("p", &bundle(text), &ep, &RetryPolicy::immediate()).unwrap();
        assert_eq!(a.labels, lexicon_labels(text));
        assert!(!a.logprobs_missing);
        // thresholding at 0.5 reproduces the emitted labels
        for key in Key::CATEGORIES {
            assert_eq!(a.confidence.get(key) >= 0.5, a.labels.get(key));
        }
        let again = annotate("p", &bundle(text), &ep, &RetryPolicy::immediate()).unwrap();
        assert_eq!(a, again);
        assert_eq!(ep.calls(), 2);
    }

    #[test]
    fn rules_select_by_marker() {
        let ep = MockEndpoint::new(1)
            .with_rule(ResponseRule::new("war bloggers", 9.0, 0.0, 0.0))
            .with_default_rule(ResponseRule::new("", 1.0, 0.0, 0.0));
        let steered = annotate("p", &bundle("evil"), &ep, &RetryPolicy::immediate()).unwrap();
        let bare_bundle =
            build_prompt("evil", PromptMode::Bare, &DomainProfile::war_bloggers()).unwrap();
        let bare = annotate("p", &bare_bundle, &ep, &RetryPolicy::immediate()).unwrap();
        assert!(steered.confidence.get(Key::Vilification) > bare.confidence.get(Key::Vilification));
    }

    #[test]
    fn retries_then_transport_error() {
        let ep = MockEndpoint::new(1).unreachable_for("down");
        let err = annotate("p7", &bundle("down"), &ep, &RetryPolicy::immediate()).unwrap_err();
        assert!(matches!(err, Error::Transport { ref post_id, .. } if post_id == "p7"));
        assert_eq!(ep.calls(), 3);
    }

    #[test]
    fn malformed_reply_is_retried_then_reported() {
        let ep = MockEndpoint::new(1).malformed_for("junk");
        let err = annotate("p", &bundle("junk"), &ep, &RetryPolicy::immediate()).unwrap_err();
        assert!(matches!(err, Error::LabelParse(_)));
        assert_eq!(ep.calls(), 3);
    }

    #[test]
    fn record_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transcript.jsonl");
        let rec = RecordingEndpoint::new(MockEndpoint::new(3), &path).unwrap();
        let live = annotate("p", &bundle("orcs"), &rec, &RetryPolicy::immediate()).unwrap();
        let replay = ReplayEndpoint::load(&path).unwrap();
        assert_eq!(replay.entries().len(), 1);
        let replayed = annotate("p", &bundle("orcs"), &replay, &RetryPolicy::immediate()).unwrap();
        assert_eq!(live, replayed);
        assert!(annotate("p", &bundle("other"), &replay, &RetryPolicy::immediate()).is_err());
    }
}
