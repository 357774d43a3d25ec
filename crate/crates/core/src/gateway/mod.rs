//! Prompting, chat-completion calls and per-category confidences read from
//! the classification tokens' log-probabilities.

mod batch;
pub mod mock;
pub mod prompt;
pub mod wire;

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{
    parse_machine_labels, AnnotationEntry, AnnotationSet, AnnotatorKind, Key, LabelParseError,
    LabelVector,
};

pub use batch::{annotate_batch, read_journal, BatchOptions, BatchOutcome, Failure};
pub use prompt::{build_prompt, Demonstration, DomainProfile, PromptBundle, PromptMode};
pub use wire::{
    ChatRequest, ChatResponse, Endpoint, HttpEndpoint, HttpEndpointConfig, TransportError,
};

/// `exp(l1) / (exp(l0) + exp(l1))`, evaluated without overflow.
pub fn two_way_confidence(l0: f64, l1: f64) -> f64 {
    let gap = l1 - l0;
    if gap >= 0.0 {
        1.0 / (1.0 + (-gap).exp())
    } else {
        let e = gap.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryConfidence {
    pub confidence: f64,
    /// Log-probabilities of the "0" and "1" value tokens, when available.
    pub logits: Option<(f64, f64)>,
}

impl CategoryConfidence {
    pub fn from_logits(l0: f64, l1: f64) -> Self {
        CategoryConfidence {
            confidence: two_way_confidence(l0, l1),
            logits: Some((l0, l1)),
        }
    }

    pub fn hard(flag: bool) -> Self {
        CategoryConfidence {
            confidence: if flag { 1.0 } else { 0.0 },
            logits: None,
        }
    }
}

/// Confidence per othering category, in [`Key::CATEGORIES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector {
    pub categories: [CategoryConfidence; 4],
}

impl ConfidenceVector {
    pub fn from_values(values: [f64; 4]) -> Self {
        ConfidenceVector {
            categories: values.map(|c| CategoryConfidence {
                confidence: c,
                logits: None,
            }),
        }
    }

    pub fn hard(labels: &LabelVector) -> Self {
        ConfidenceVector {
            categories: labels.categories().map(CategoryConfidence::hard),
        }
    }

    pub fn get(&self, key: Key) -> f64 {
        assert!(key.is_category(), "None has no confidence");
        self.categories[key.index()].confidence
    }

    pub fn values(&self) -> [f64; 4] {
        self.categories.map(|c| c.confidence)
    }

    /// True when any category fell back to its hard label.
    pub fn fallback(&self) -> bool {
        self.categories.iter().any(|c| c.logits.is_none())
    }
}

fn logsumexp(values: &[f64]) -> Option<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    Some(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Reads each category's value-token log-probabilities from the reply's token
/// stream. Categories whose token cannot be located, or whose alternatives
/// are missing from the top log-probabilities, keep their hard label.
pub fn extract_confidences(
    response: &ChatResponse,
    labels: &LabelVector,
    value_spans: &[std::ops::Range<usize>; 5],
) -> ConfidenceVector {
    let mut out = ConfidenceVector::hard(labels);
    let (Some(content), Some(tokens)) = (response.content(), response.token_logprobs()) else {
        return out;
    };
    let joined: String = tokens.iter().map(|t| t.token.as_str()).collect();
    if joined != content {
        return out;
    }
    let mut offsets = Vec::with_capacity(tokens.len());
    let mut pos = 0;
    for t in tokens {
        offsets.push(pos..pos + t.token.len());
        pos += t.token.len();
    }
    for key in Key::CATEGORIES {
        let span = &value_spans[key.index()];
        let Some(i) = offsets.iter().position(|r| r.contains(&span.start)) else {
            continue;
        };
        if !offsets[i].contains(&(span.end - 1)) || tokens[i].token.trim() != &content[span.clone()]
        {
            continue;
        }
        let mut zeros = Vec::new();
        let mut ones = Vec::new();
        for alt in &tokens[i].top_logprobs {
            match alt.token.trim() {
                "0" => zeros.push(alt.logprob),
                "1" => ones.push(alt.logprob),
                _ => {}
            }
        }
        if let (Some(l0), Some(l1)) = (logsumexp(&zeros), logsumexp(&ones)) {
            out.categories[key.index()] = CategoryConfidence::from_logits(l0, l1);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Transport attempts per request.
    pub attempts: u32,
    pub initial_backoff: Duration,
    /// Extra requests after an unparseable reply.
    pub parse_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
            parse_retries: 2,
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts.
    pub fn immediate() -> Self {
        RetryPolicy {
            initial_backoff: Duration::ZERO,
            ..RetryPolicy::default()
        }
    }
}

/// One post labeled by a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineAnnotation {
    pub post_id: String,
    pub labels: LabelVector,
    pub confidence: ConfidenceVector,
    pub explanation: String,
    /// The reply's `None` flag was repaired.
    pub repaired: bool,
    /// Confidences fell back to hard labels for at least one category.
    pub logprobs_missing: bool,
}

impl MachineAnnotation {
    pub fn to_entry(&self, annotator_id: &str, kind: AnnotatorKind) -> AnnotationEntry {
        AnnotationEntry {
            annotator_id: annotator_id.to_string(),
            kind,
            labels: self.labels,
            explanation: Some(self.explanation.clone()),
        }
    }

    pub fn to_annotation_set(&self, annotator_id: &str, kind: AnnotatorKind) -> AnnotationSet {
        AnnotationSet::new(
            self.post_id.clone(),
            vec![self.to_entry(annotator_id, kind)],
        )
        .expect("single entry is valid")
    }
}

fn send_with_retry(
    endpoint: &dyn Endpoint,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> std::result::Result<ChatResponse, TransportError> {
    let mut backoff = policy.initial_backoff;
    let mut last = TransportError::new("no attempts made");
    for attempt in 0..policy.attempts.max(1) {
        if attempt > 0 && !backoff.is_zero() {
            thread::sleep(backoff);
            backoff *= 2;
        }
        match endpoint.complete(request) {
            Ok(r) => return Ok(r),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Labels one post.
///
/// Transport failures are retried per `policy` and then reported as
/// [`Error::Transport`]. Unparseable replies are re-asked with a format
/// reminder; after `parse_retries` the post is reported as unannotated via
/// [`Error::LabelParse`].
pub fn annotate(
    post_id: &str,
    bundle: &PromptBundle,
    endpoint: &dyn Endpoint,
    policy: &RetryPolicy,
) -> Result<MachineAnnotation> {
    let mut request = ChatRequest::from_bundle(endpoint.model(), bundle, 5);
    let mut last_err = LabelParseError::ParseFailure;
    for attempt in 0..=policy.parse_retries {
        if attempt == 1 {
            let user = request.messages.last_mut().expect("user message");
            user.content = format!("{}\n\n{}", user.content, prompt::FORMAT_REMINDER);
        }
        let response =
            send_with_retry(endpoint, &request, policy).map_err(|e| Error::Transport {
                post_id: post_id.to_string(),
                message: e.message,
            })?;
        let content = response.content().unwrap_or("");
        match parse_machine_labels(content) {
            Ok(parsed) => {
                let confidence =
                    extract_confidences(&response, &parsed.labels, &parsed.value_spans);
                return Ok(MachineAnnotation {
                    post_id: post_id.to_string(),
                    labels: parsed.labels,
                    logprobs_missing: confidence.fallback(),
                    confidence,
                    explanation: parsed.explanation,
                    repaired: parsed.repaired,
                });
            }
            Err(e) => last_err = e,
        }
    }
    Err(Error::LabelParse(last_err))
}
