use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use super::{
    annotate, build_prompt, DomainProfile, Endpoint, MachineAnnotation, PromptMode, RetryPolicy,
};
use crate::corpus::Post;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub concurrency_limit: usize,
    /// Successful annotations are appended here; posts already present are
    /// skipped on the next run.
    pub journal: Option<PathBuf>,
    pub retry: RetryPolicy,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            concurrency_limit: 4,
            journal: None,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub post_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOutcome {
    /// Sorted by post id, including annotations resumed from the journal.
    pub annotations: Vec<MachineAnnotation>,
    pub failures: Vec<Failure>,
}

/// Reads a journal written by [`annotate_batch`]. A truncated final line is
/// ignored.
pub fn read_journal(path: &Path) -> Result<Vec<MachineAnnotation>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::file(path, e.to_string())),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()?;
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(a) => out.push(a),
            Err(_) if i + 1 == lines.len() => {}
            Err(e) => return Err(Error::file(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

/// Annotates posts concurrently.
///
/// Per-post failures are collected; when more than half of the posts fail the
/// batch stops with [`Error::BatchAborted`]. Journaled successes survive an
/// abort so a rerun resumes where it stopped.
pub fn annotate_batch(
    posts: &[Post],
    mode: PromptMode,
    profile: &DomainProfile,
    endpoint: &dyn Endpoint,
    opts: &BatchOptions,
) -> Result<BatchOutcome> {
    let mut done = match &opts.journal {
        Some(p) => read_journal(p)?,
        None => Vec::new(),
    };
    let wanted: BTreeSet<&str> = posts.iter().map(|p| p.id.as_str()).collect();
    done.retain(|a| wanted.contains(a.post_id.as_str()));
    let done_ids: BTreeSet<String> = done.iter().map(|a| a.post_id.clone()).collect();
    let todo: Vec<&Post> = posts.iter().filter(|p| !done_ids.contains(&p.id)).collect();

    let journal = match &opts.journal {
        Some(p) => Some(Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| Error::file(p, e.to_string()))?,
        )),
        None => None,
    };

    let total = posts.len();
    let next = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<MachineAnnotation>> = Mutex::new(Vec::new());
    let failures: Mutex<Vec<Failure>> = Mutex::new(Vec::new());
    let io_error: Mutex<Option<Error>> = Mutex::new(None);

    let workers = opts.concurrency_limit.clamp(1, todo.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(post) = todo.get(i) else { break };
                let outcome = build_prompt(&post.text, mode, profile)
                    .and_then(|b| annotate(&post.id, &b, endpoint, &opts.retry));
                match outcome {
                    Ok(a) => {
                        if let Some(j) = &journal {
                            let line = serde_json::to_string(&a).expect("annotation serializes");
                            let mut f = j.lock().expect("journal lock");
                            if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                                *io_error.lock().expect("error lock") = Some(e.into());
                                abort.store(true, Ordering::SeqCst);
                            }
                        }
                        results.lock().expect("results lock").push(a);
                    }
                    Err(e) => {
                        failures.lock().expect("failures lock").push(Failure {
                            post_id: post.id.clone(),
                            reason: e.to_string(),
                        });
                        if (failed.fetch_add(1, Ordering::SeqCst) + 1) * 2 > total {
                            abort.store(true, Ordering::SeqCst);
                        }
                    }
                }
            });
        }
    });

    if let Some(e) = io_error.into_inner().expect("error lock") {
        return Err(e);
    }
    let failures = failures.into_inner().expect("failures lock");
    if failures.len() * 2 > total {
        return Err(Error::BatchAborted {
            failures: failures.len(),
            total,
        });
    }
    let mut annotations = done;
    annotations.extend(results.into_inner().expect("results lock"));
    annotations.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    let mut failures = failures;
    failures.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    Ok(BatchOutcome {
        annotations,
        failures,
    })
}
