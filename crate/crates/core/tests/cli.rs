mod common;

use std::fs;
use std::path::Path;

use common::pipeline_example::{othering, run_pipeline};
use othering::cli::{run_with_io, sha256_file, Manifest, MANIFEST_FILE};

fn synth_run(dir: &Path, extra_config: &str) -> String {
    let d = dir.to_str().unwrap();
    let (code, _, err) = othering(&["--out", d, "--seed", "3", "synth", "--small"]);
    assert_eq!(code, 0, "{err}");
    let config = dir.join("run.toml");
    fs::write(
        &config,
        format!("posts = \"posts.jsonl\"\nchannels = \"channels.csv\"\nout = \"run\"\nseed = 3\n{extra_config}"),
    )
    .unwrap();
    config.to_str().unwrap().to_string()
}

fn with_input(args: &[&str], input: &str) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("othering").chain(args.iter().copied());
    let code = run_with_io(argv, &mut input.as_bytes(), &mut out, &mut err);
    assert!(
        err.is_empty() || code != 0,
        "{}",
        String::from_utf8_lossy(&err)
    );
    (code, String::from_utf8_lossy(&out).into_owned())
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(othering(&["no-such-command"]).0, 1);
    assert_eq!(
        othering(&["--config", "/nonexistent/run.toml", "ingest"]).0,
        1
    );
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = othering(&["--out", dir.path().to_str().unwrap(), "ingest"]);
    assert_eq!(code, 1);
    assert!(err.contains("posts"), "{err}");
}

#[test]
fn help_exits_0() {
    let (code, out, _) = othering(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("annotate-llm") && out.contains("report"));
}

#[test]
fn step_before_its_input_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth_run(dir.path(), "");
    assert_eq!(othering(&["--config", &config, "ingest"]).0, 0);
    let (code, _, err) = othering(&["--config", &config, "tune"]);
    assert_eq!(code, 1);
    assert!(err.contains("run annotate-llm first"), "{err}");
    let (code, _, err) = othering(&["--config", &config, "moral"]);
    assert_eq!(code, 1);
    assert!(err.contains("run classify first"), "{err}");
}

#[test]
fn malformed_posts_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("posts.jsonl"), "{\"id\": \n").unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "posts = \"posts.jsonl\"\nout = \"run\"\n").unwrap();
    let (code, _, err) = othering(&["--config", config.to_str().unwrap(), "ingest"]);
    assert_eq!(code, 2);
    assert!(err.contains("rejected"), "{err}");
}

#[test]
fn unreachable_endpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("transcript.jsonl"), "").unwrap();
    let config = synth_run(
        dir.path(),
        "\n[endpoint]\nkind = \"replay\"\ntranscript = \"transcript.jsonl\"\n",
    );
    assert_eq!(othering(&["--config", &config, "ingest"]).0, 0);
    let (code, _, err) = othering(&["--config", &config, "annotate-llm"]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn human_annotation_appends_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth_run(dir.path(), "");
    assert_eq!(othering(&["--config", &config, "ingest"]).0, 0);
    let (code, _, err) = othering(&[
        "--config",
        &config,
        "sample",
        "--n-random",
        "3",
        "--n-keyword",
        "0",
    ]);
    assert_eq!(code, 0, "{err}");
    let gold = dir.path().join("run/gold.jsonl");

    // two posts answered, then input ends
    let two = "y\nn\nn\nn\nn\nn\nn\nn\nn\ny\n";
    let (code, out) = with_input(
        &["--config", &config, "annotate-human", "--annotator", "h1"],
        two,
    );
    assert_eq!(code, 0);
    assert!(out.contains("3 of 3 posts left for h1"));
    assert!(out.contains("stopped; rerun to resume"));
    assert_eq!(fs::read_to_string(&gold).unwrap().lines().count(), 2);

    // an unclear answer is asked again; a None answer contradicting the
    // categories is repaired
    let last = "maybe\nn\nn\ny\nn\ny\n";
    let (code, out) = with_input(
        &["--config", &config, "annotate-human", "--annotator", "h1"],
        last,
    );
    assert_eq!(code, 0);
    assert!(out.contains("1 of 3 posts left for h1"));
    assert!(out.contains("please answer y or n"));
    assert!(out.contains("note: None set to 0"));
    let lines: Vec<serde_json::Value> = fs::read_to_string(&gold)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l["annotator_id"] == "h1"));

    // a second annotator starts from the beginning
    let (_, out) = with_input(
        &["--config", &config, "annotate-human", "--annotator", "h2"],
        "",
    );
    assert!(out.contains("3 of 3 posts left for h2"));
}

#[test]
fn pipeline_manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(dir.path(), 5, true).unwrap();
    let manifest = Manifest::load(&run.join(MANIFEST_FILE)).unwrap();
    for step in common::pipeline_example::STEPS {
        assert!(
            manifest.steps.contains_key(step),
            "{step} missing from manifest"
        );
    }
    let mut checked = 0;
    for (name, record) in &manifest.steps {
        assert_eq!(record.seed, Some(5), "{name}");
        // the manifest itself and appended files change after they are recorded
        for (path, hash) in record.inputs.iter().chain(&record.outputs) {
            let p = Path::new(path);
            let p = if p.is_relative() {
                run.join(p)
            } else {
                p.to_path_buf()
            };
            if name == "report" || p.file_name().unwrap() == MANIFEST_FILE {
                continue;
            }
            assert_eq!(&sha256_file(&p).unwrap(), hash, "{name}: {path}");
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn annotate_llm_resumes_from_journal() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth_run(dir.path(), "\n[endpoint]\nkind = \"mock\"\nseed = 3\n");
    assert_eq!(othering(&["--config", &config, "ingest"]).0, 0);
    assert_eq!(othering(&["--config", &config, "annotate-llm"]).0, 0);
    let first = fs::read(dir.path().join("run/annotations.jsonl")).unwrap();
    let journal = fs::read(dir.path().join("run/llm_journal.jsonl")).unwrap();
    assert_eq!(othering(&["--config", &config, "annotate-llm"]).0, 0);
    assert_eq!(
        fs::read(dir.path().join("run/annotations.jsonl")).unwrap(),
        first
    );
    assert_eq!(
        fs::read(dir.path().join("run/llm_journal.jsonl")).unwrap(),
        journal
    );
}

#[test]
fn export_train_requires_a_passing_gate() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth_run(
        dir.path(),
        "gold = \"synth_gold.jsonl\"\n\n[endpoint]\nkind = \"mock\"\nseed = 3\n\n[gate]\nmin_kappa_per_class = 0.999\n",
    );
    for step in ["ingest", "annotate-llm"] {
        assert_eq!(othering(&["--config", &config, step]).0, 0, "{step}");
    }
    let (code, _, err) = othering(&["--config", &config, "export-train"]);
    assert_eq!(code, 1);
    assert!(err.contains("run align first"), "{err}");

    let (code, out, _) = othering(&["--config", &config, "align"]);
    assert_eq!(code, 0);
    assert!(out.contains("alignment failed"), "{out}");
    let (code, _, err) = othering(&["--config", &config, "export-train"]);
    assert_eq!(code, 2);
    assert!(err.contains("alignment gate failed"), "{err}");
    assert!(!dir.path().join("run/train.jsonl").exists());
}
