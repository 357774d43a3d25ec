// The full command-line pipeline on a generated corpus, run in-process:
// synth, ingest, LLM annotation through the scripted endpoint, threshold
// tuning, classification and every analysis, ending with the report.

use std::path::{Path, PathBuf};

use othering::cli::run_with_io;

pub const STEPS: [&str; 13] = [
    "ingest",
    "annotate-llm",
    "agreement",
    "align",
    "export-train",
    "tune",
    "classify",
    "network",
    "timeline",
    "moral",
    "attention",
    "overlap",
    "report",
];

/// Runs one subcommand; returns its exit code and captured output.
pub fn othering(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("othering").chain(args.iter().copied());
    let code = run_with_io(argv, &mut std::io::empty(), &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

/// Generates a corpus into `dir`, writes a config next to it and runs every
/// step. Returns the run directory.
pub fn run_pipeline(dir: &Path, seed: u64, small: bool) -> othering::Result<PathBuf> {
    let seed_arg = seed.to_string();
    let d = dir.to_str().expect("utf-8 path");
    let mut synth = vec!["--out", d, "--seed", &seed_arg, "synth"];
    if small {
        synth.push("--small");
    }
    let (code, _, err) = othering(&synth);
    if code != 0 {
        return Err(othering::Error::InvalidInput(format!(
            "synth failed: {err}"
        )));
    }
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "posts = \"posts.jsonl\"\nchannels = \"channels.csv\"\ngold = \"synth_gold.jsonl\"\nout = \".\"\nseed = {seed}\n\n[endpoint]\nkind = \"mock\"\nseed = {seed}\n"
        ),
    )?;
    let config = config.to_str().expect("utf-8 path");
    for step in STEPS {
        let (code, _, err) = othering(&["--config", config, step]);
        if code != 0 {
            return Err(othering::Error::InvalidInput(format!(
                "{step} exited with {code}: {err}"
            )));
        }
    }
    Ok(dir.to_path_buf())
}

pub fn run_example() -> othering::Result<String> {
    let dir = tempfile::tempdir()?;
    let run = run_pipeline(dir.path(), 7, true)?;
    Ok(std::fs::read_to_string(
        run.join(othering::cli::SUMMARY_FILE),
    )?)
}

#[allow(dead_code)]
fn main() -> othering::Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
