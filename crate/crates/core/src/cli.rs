//! Command-line driver. Every subcommand reads its inputs from the run
//! directory (or the run configuration), writes its outputs there and
//! records input and output hashes in `manifest.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agreement::{class_metrics, cohen_kappa, fleiss_kappa, krippendorff_alpha, ratings_for};
use crate::alignment::{
    evaluate_candidate, evaluate_degradation, export_training_set, AlignmentReport, GatePolicy,
    GoldSet, TrainingRecord,
};
use crate::attention::{attention_report, normalized_views};
use crate::corpus::{
    ingest_jsonl, read_channels_csv, sample_for_annotation, write_channels_csv, Corpus, Schema,
};
use crate::error::Error;
use crate::gateway::mock::{lexicon_labels, MockEndpoint, ReplayEndpoint, ResponseRule};
use crate::gateway::{
    annotate_batch, read_journal, BatchOptions, DomainProfile, Endpoint, HttpEndpoint,
    HttpEndpointConfig, MachineAnnotation, PromptMode, RetryPolicy,
};
use crate::labels::{
    append_gold_record, read_gold_records, AnnotatorKind, GoldRecord, Key, LabelVector,
};
use crate::moral::{group_contrast, moral_othering_grid, paired_posts, write_contrast_csv};
use crate::network::{
    build_graph, centrality_vs_othering, degree_centrality, eigenvector_centrality,
    propagate_labels, ChannelGraph, Propagation, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use crate::rda::{classify, tune_thresholds, Objective, ThresholdProfile};
use crate::stats::{
    overlap_report, toxicity_summary, write_stat_rows, write_toxicity_csv, StatRow,
};
use crate::synth::{generate, SynthConfig};
use crate::timeline::{
    communities_from_stances, crisis_comparison, proportions_over_time, Community, EventRegistry,
    SeriesKind,
};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const CHANNELS_FILE: &str = "channels.csv";
pub const SAMPLE_FILE: &str = "sample.jsonl";
pub const GOLD_FILE: &str = "gold.jsonl";
pub const JOURNAL_FILE: &str = "llm_journal.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const THRESHOLDS_FILE: &str = "thresholds.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Endpoint auth token variable used when the config names none.
pub const TOKEN_ENV: &str = "OTHERING_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    /// 1 usage, 2 data, 3 endpoint.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(Error::MissingArtifact { .. }) => 1,
            CliError::Run(Error::Transport { .. } | Error::BatchAborted { .. }) => 3,
            CliError::Run(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "othering",
    version,
    about = "Othering-language measurement pipeline"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for sampling, synthesis and the mock endpoint.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (posts.jsonl, channels.csv, truth.csv, synth_gold.jsonl).
    Synth {
        #[arg(long)]
        posts: Option<usize>,
        /// Few-hundred-post variant.
        #[arg(long)]
        small: bool,
    },
    /// Validate and normalize posts and channels into the run directory.
    Ingest,
    /// Draw the posts for human annotation.
    Sample {
        #[arg(long)]
        n_random: Option<usize>,
        #[arg(long)]
        n_keyword: Option<usize>,
    },
    /// Label the sampled posts one by one in the terminal.
    AnnotateHuman {
        #[arg(long)]
        annotator: String,
    },
    /// Annotate every post through the configured endpoint.
    AnnotateLlm {
        #[arg(long)]
        mode: Option<PromptMode>,
    },
    /// Agreement among the human annotators, and of the LLM against gold.
    Agreement,
    /// Run the alignment gate for the LLM annotations.
    Align {
        /// Alignment report of a reference annotator on the same gold set.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Write the fine-tuning set, gold posts held out.
    ExportTrain,
    /// Tune per-category confidence thresholds against gold.
    Tune {
        #[arg(long)]
        objective: Option<Objective>,
        #[arg(long)]
        grid_step: Option<f64>,
    },
    /// Apply the thresholds to every annotated post.
    Classify,
    /// Channel graph, stance propagation and centrality.
    Network,
    /// Daily proportions and the crisis-window comparison.
    Timeline {
        #[arg(long)]
        smooth_window: Option<usize>,
    },
    /// Moral devices against othering categories.
    Moral,
    /// Normalized views of othering and non-othering posts.
    Attention,
    /// Overlap of othering with fear and hate speech.
    Overlap,
    /// Index every output and write summary.txt.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest => "ingest",
            Command::Sample { .. } => "sample",
            Command::AnnotateHuman { .. } => "annotate-human",
            Command::AnnotateLlm { .. } => "annotate-llm",
            Command::Agreement => "agreement",
            Command::Align { .. } => "align",
            Command::ExportTrain => "export-train",
            Command::Tune { .. } => "tune",
            Command::Classify => "classify",
            Command::Network => "network",
            Command::Timeline { .. } => "timeline",
            Command::Moral => "moral",
            Command::Attention => "attention",
            Command::Overlap => "overlap",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointConfig {
    /// Scripted endpoint whose labels come from the keyword lexicon.
    Mock {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default)]
        bias: f64,
        #[serde(default = "default_noise")]
        noise: f64,
    },
    Http(HttpEndpointConfig),
    /// Answers from a recorded transcript.
    Replay {
        transcript: PathBuf,
    },
}

fn default_separation() -> f64 {
    4.0
}

fn default_noise() -> f64 {
    1.0
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig::Mock {
            seed: 0,
            separation: default_separation(),
            bias: 0.0,
            noise: default_noise(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub n_random: usize,
    pub n_keyword: usize,
    pub keywords: Vec<String>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            n_random: 100,
            n_keyword: 0,
            keywords: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub posts: Option<PathBuf>,
    pub channels: Option<PathBuf>,
    pub schema: Schema,
    /// Human gold set; `gold.jsonl` in the run directory takes precedence.
    pub gold: Option<PathBuf>,
    pub events: Option<PathBuf>,
    /// Threshold profile used by `classify` instead of the tuned one.
    pub thresholds: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub endpoint: EndpointConfig,
    pub mode: PromptMode,
    /// `war_bloggers` or `social_platform`.
    pub profile: String,
    pub gate: GatePolicy,
    pub sample: SampleConfig,
    pub objective: Objective,
    pub grid_step: f64,
    pub smooth_window: usize,
    pub concurrency: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            posts: None,
            channels: None,
            schema: Schema::Telegram,
            gold: None,
            events: None,
            thresholds: None,
            out: None,
            seed: None,
            endpoint: EndpointConfig::default(),
            mode: PromptMode::SystemSteering,
            profile: "war_bloggers".into(),
            gate: GatePolicy::default(),
            sample: SampleConfig::default(),
            objective: Objective::F1,
            grid_step: 0.01,
            smooth_window: 7,
            concurrency: 4,
        }
    }
}

impl RunConfig {
    /// Parses a TOML config; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut cfg.posts);
        fix(&mut cfg.channels);
        fix(&mut cfg.gold);
        fix(&mut cfg.events);
        fix(&mut cfg.thresholds);
        fix(&mut cfg.out);
        if let EndpointConfig::Replay { transcript } = &mut cfg.endpoint {
            if transcript.is_relative() {
                *transcript = base.join(&*transcript);
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        for p in [
            &self.posts,
            &self.channels,
            &self.gold,
            &self.events,
            &self.thresholds,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(CliError::Usage(format!(
                    "configured path {} does not exist",
                    p.display()
                )));
            }
        }
        if let EndpointConfig::Replay { transcript } = &self.endpoint {
            if !transcript.exists() {
                return Err(CliError::Usage(format!(
                    "transcript {} does not exist",
                    transcript.display()
                )));
            }
        }
        self.gate
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.domain_profile()?;
        Ok(())
    }

    fn domain_profile(&self) -> CliResult<DomainProfile> {
        match self.profile.as_str() {
            "war_bloggers" => Ok(DomainProfile::war_bloggers()),
            "social_platform" => Ok(DomainProfile::social_platform()),
            other => Err(CliError::Usage(format!("unknown domain profile {other:?}"))),
        }
    }

    fn endpoint(&self) -> CliResult<Box<dyn Endpoint>> {
        Ok(match &self.endpoint {
            EndpointConfig::Mock {
                seed,
                separation,
                bias,
                noise,
            } => Box::new(
                MockEndpoint::new(*seed)
                    .with_oracle(lexicon_labels)
                    .with_default_rule(ResponseRule::new("", *separation, *bias, *noise)),
            ),
            EndpointConfig::Http(c) => {
                let mut c = c.clone();
                if c.api_key_env.is_empty() {
                    c.api_key_env = TOKEN_ENV.into();
                }
                Box::new(HttpEndpoint::new(c).map_err(|e| {
                    CliError::Run(Error::Transport {
                        post_id: String::new(),
                        message: e.message,
                    })
                })?)
            }
            EndpointConfig::Replay { transcript } => Box::new(ReplayEndpoint::load(transcript)?),
        })
    }
}

/// Input and output hashes of every subcommand run in a directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub steps: BTreeMap<String, StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepRecord {
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> crate::Result<Self> {
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let file = File::open(path).map_err(|e| Error::File {
            path: path.into(),
            message: e.to_string(),
        })?;
        Ok(serde_json::from_reader(file)?)
    }
}

pub fn sha256_file(path: &Path) -> crate::Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::File {
        path: path.into(),
        message: e.to_string(),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Step<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    seed: Option<u64>,
    inputs: BTreeSet<PathBuf>,
    outputs: BTreeSet<PathBuf>,
}

fn missing(artifact: &str, producer: &'static str) -> CliError {
    CliError::Run(Error::MissingArtifact {
        artifact: artifact.to_string(),
        producer,
    })
}

impl<'a> Step<'a> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// A run-directory artifact that an earlier subcommand must have written.
    fn require(&mut self, name: &str, producer: &'static str) -> CliResult<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(missing(name, producer));
        }
        self.inputs.insert(p.clone());
        Ok(p)
    }

    fn input(&mut self, p: &Path) -> PathBuf {
        self.inputs.insert(p.to_path_buf());
        p.to_path_buf()
    }

    fn seed(&self) -> CliResult<u64> {
        self.seed.ok_or_else(|| {
            CliError::Usage("this subcommand samples; pass --seed or set seed in the config".into())
        })
    }

    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> crate::Result<()>,
    ) -> CliResult<()> {
        let p = self.path(name);
        let file = File::create(&p).map_err(|e| Error::File {
            path: p.clone(),
            message: e.to_string(),
        })?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(Error::from)?;
        self.outputs.insert(p);
        Ok(())
    }

    fn corpus(&mut self) -> CliResult<Corpus> {
        let p = self.require(CORPUS_FILE, "ingest")?;
        let (mut corpus, _) = ingest_jsonl(&p, Schema::Telegram)?;
        if let Ok(ch) = self.require(CHANNELS_FILE, "ingest") {
            corpus.attach_channels(read_channels_csv(&ch)?);
        }
        Ok(corpus)
    }

    fn gold_records(&mut self) -> CliResult<Vec<GoldRecord>> {
        let local = self.path(GOLD_FILE);
        let p = if local.exists() {
            local
        } else if let Some(p) = self.cfg.gold.clone() {
            p
        } else {
            return Err(missing("human gold set", "annotate-human"));
        };
        let p = self.input(&p);
        Ok(read_gold_records(&p)?)
    }

    fn gold(&mut self) -> CliResult<GoldSet> {
        let records: Vec<GoldRecord> = self
            .gold_records()?
            .into_iter()
            .filter(|r| r.kind == AnnotatorKind::Human)
            .collect();
        let sets = crate::labels::group_gold_records(records)?;
        Ok(GoldSet::from_sets(&sets, &[AnnotatorKind::Human])?)
    }

    fn annotations(&mut self) -> CliResult<Vec<MachineAnnotation>> {
        let p = self.require(ANNOTATIONS_FILE, "annotate-llm")?;
        Ok(read_journal(&p)?)
    }

    fn labels(&mut self) -> CliResult<BTreeMap<String, LabelVector>> {
        let p = self.require(LABELS_FILE, "classify")?;
        Ok(read_labels_csv(&p)?)
    }

    fn registry(&mut self) -> CliResult<EventRegistry> {
        match self.cfg.events.clone() {
            Some(p) => {
                let p = self.input(&p);
                Ok(EventRegistry::load(&p)?)
            }
            None => Ok(EventRegistry::default_registry()),
        }
    }

    fn finish(self, command: &str) -> CliResult<()> {
        let manifest_path = self.path(MANIFEST_FILE);
        let mut manifest = Manifest::load(&manifest_path)?;
        manifest.version = env!("CARGO_PKG_VERSION").to_string();
        let hash_all = |paths: &BTreeSet<PathBuf>| -> crate::Result<BTreeMap<String, String>> {
            paths
                .iter()
                .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
                .collect()
        };
        manifest.steps.insert(
            command.to_string(),
            StepRecord {
                config: serde_json::to_value(self.cfg).map_err(Error::from)?,
                seed: self.seed,
                inputs: hash_all(&self.inputs)?,
                outputs: hash_all(&self.outputs)?,
            },
        );
        let file = File::create(&manifest_path).map_err(Error::from)?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest).map_err(Error::from)?;
        Ok(())
    }
}

/// Columns: post_id followed by the five label names, values 0 or 1.
pub fn write_labels_csv(
    labels: &BTreeMap<String, LabelVector>,
    out: impl Write,
) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["post_id"];
    header.extend(Key::ALL.iter().map(|k| k.name()));
    w.write_record(&header)?;
    for (id, l) in labels {
        let mut row = vec![id.clone()];
        row.extend(Key::ALL.iter().map(|k| u8::from(l.get(*k)).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> crate::Result<BTreeMap<String, LabelVector>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let columns: Vec<(usize, Key)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| Key::from_name(h).map(|k| (i, k)))
        .collect();
    if columns.len() != 5 || header.get(0) != Some("post_id") {
        return Err(Error::File {
            path: path.into(),
            message: "expected post_id and the five label columns".into(),
        });
    }
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let mut l = LabelVector::none_only();
        for (i, k) in &columns {
            match rec.get(*i) {
                Some("1") => l.set(*k, true),
                Some("0") => l.set(*k, false),
                other => {
                    return Err(Error::File {
                        path: path.into(),
                        message: format!("bad label value {other:?}"),
                    })
                }
            }
        }
        out.insert(rec.get(0).unwrap_or_default().to_string(), l);
    }
    Ok(out)
}

/// Graph, propagated stances and channel communities. Channels with a
/// declared stance are the seeds.
struct NetworkState {
    graph: ChannelGraph,
    seeds: BTreeMap<String, crate::corpus::Stance>,
    propagation: Option<Propagation>,
    communities: BTreeMap<String, Community>,
}

fn network_state(corpus: &Corpus) -> crate::Result<NetworkState> {
    let (graph, _) = build_graph(corpus);
    let seeds: BTreeMap<_, _> = corpus
        .channels()
        .iter()
        .filter_map(|(id, c)| c.declared_stance.map(|s| (id.clone(), s)))
        .collect();
    let propagation = if seeds.is_empty() {
        None
    } else {
        Some(propagate_labels(&graph, &seeds, graph.node_count().max(1))?)
    };
    let communities = propagation
        .as_ref()
        .map(|p| communities_from_stances(&p.stances))
        .unwrap_or_default();
    Ok(NetworkState {
        graph,
        seeds,
        propagation,
        communities,
    })
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code; diagnostics go to `err`.
pub fn run_with_io(
    args: impl IntoIterator<Item = impl Into<std::ffi::OsString> + Clone>,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 1;
            }
            let _ = write!(output, "{e}");
            return 0;
        }
    };
    match run(cli, input, output) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, input: &mut dyn BufRead, output: &mut dyn Write) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.validate()?;
    let dir = cfg.out.clone().ok_or_else(|| {
        CliError::Usage("no run directory; pass --out or set out in the config".into())
    })?;
    fs::create_dir_all(&dir).map_err(|e| Error::File {
        path: dir.clone(),
        message: e.to_string(),
    })?;
    let mut step = Step {
        cfg: &cfg,
        dir,
        seed: cfg.seed,
        inputs: BTreeSet::new(),
        outputs: BTreeSet::new(),
    };
    let name = cli.command.name();
    match cli.command {
        Command::Synth { posts, small } => cmd_synth(&mut step, posts, small)?,
        Command::Ingest => cmd_ingest(&mut step, output)?,
        Command::Sample {
            n_random,
            n_keyword,
        } => cmd_sample(&mut step, n_random, n_keyword, output)?,
        Command::AnnotateHuman { annotator } => {
            cmd_annotate_human(&mut step, &annotator, input, output)?
        }
        Command::AnnotateLlm { mode } => cmd_annotate_llm(&mut step, mode, output)?,
        Command::Agreement => cmd_agreement(&mut step)?,
        Command::Align { reference } => cmd_align(&mut step, reference.as_deref(), output)?,
        Command::ExportTrain => cmd_export_train(&mut step, output)?,
        Command::Tune {
            objective,
            grid_step,
        } => cmd_tune(&mut step, objective, grid_step, output)?,
        Command::Classify => cmd_classify(&mut step)?,
        Command::Network => cmd_network(&mut step)?,
        Command::Timeline { smooth_window } => cmd_timeline(&mut step, smooth_window)?,
        Command::Moral => cmd_moral(&mut step)?,
        Command::Attention => cmd_attention(&mut step)?,
        Command::Overlap => cmd_overlap(&mut step)?,
        Command::Report => cmd_report(&mut step, output)?,
    }
    step.finish(name)
}

fn cmd_synth(step: &mut Step, posts: Option<usize>, small: bool) -> CliResult<()> {
    let seed = step.seed()?;
    let mut sc = if small {
        SynthConfig::small(seed)
    } else {
        SynthConfig {
            seed,
            ..SynthConfig::default()
        }
    };
    if let Some(n) = posts {
        sc.posts = n;
        sc.gold_posts = sc.gold_posts.min(n);
    }
    let s = generate(&sc)?;
    step.write("posts.jsonl", |w| s.corpus.write_jsonl(w))?;
    step.write(CHANNELS_FILE, |w| {
        write_channels_csv(s.corpus.channels(), w)
    })?;
    step.write("truth.csv", |w| write_labels_csv(&s.truth, w))?;
    step.write("synth_gold.jsonl", |w| {
        for r in &s.gold {
            append_gold_record(w, r)?;
        }
        Ok(())
    })
}

fn cmd_ingest(step: &mut Step, output: &mut dyn Write) -> CliResult<()> {
    let posts = step
        .cfg
        .posts
        .clone()
        .ok_or_else(|| CliError::Usage("ingest needs `posts` in the config".into()))?;
    let posts = step.input(&posts);
    let (mut corpus, report) = ingest_jsonl(&posts, step.cfg.schema)?;
    if let Some(ch) = step.cfg.channels.clone() {
        let ch = step.input(&ch);
        corpus.attach_channels(read_channels_csv(&ch)?);
    }
    step.write(CORPUS_FILE, |w| corpus.write_jsonl(w))?;
    step.write(CHANNELS_FILE, |w| write_channels_csv(corpus.channels(), w))?;
    step.write("ingest_report.json", |w| {
        Ok(serde_json::to_writer_pretty(w, &report)?)
    })?;
    writeln!(
        output,
        "ingested {} posts from {} channels",
        corpus.len(),
        corpus.channels().len()
    )
    .map_err(Error::from)?;
    Ok(())
}

fn cmd_sample(
    step: &mut Step,
    n_random: Option<usize>,
    n_keyword: Option<usize>,
    output: &mut dyn Write,
) -> CliResult<()> {
    let seed = step.seed()?;
    let corpus = step.corpus()?;
    let sc = &step.cfg.sample.clone();
    let sample = sample_for_annotation(
        &corpus,
        n_random.unwrap_or(sc.n_random),
        &sc.keywords,
        n_keyword.unwrap_or(sc.n_keyword),
        seed,
    )?;
    for w in &sample.warnings {
        writeln!(output, "warning: {w}").map_err(Error::from)?;
    }
    let sampled = Corpus::new(sample.posts, BTreeMap::new())?;
    step.write(SAMPLE_FILE, |w| sampled.write_jsonl(w))
}

fn ask(
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    question: &str,
) -> crate::Result<Option<bool>> {
    loop {
        write!(output, "{question} [y/n] ")?;
        output.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        match line.trim().to_lowercase().as_str() {
            "y" | "yes" | "1" => return Ok(Some(true)),
            "n" | "no" | "0" => return Ok(Some(false)),
            "q" | "quit" => return Ok(None),
            _ => writeln!(output, "please answer y or n (q to stop)")?,
        }
    }
}

fn cmd_annotate_human(
    step: &mut Step,
    annotator: &str,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> CliResult<()> {
    let sample_path = step.require(SAMPLE_FILE, "sample")?;
    let (sample, _) = ingest_jsonl(&sample_path, Schema::Telegram)?;
    let gold_path = step.path(GOLD_FILE);
    let done: BTreeSet<String> = if gold_path.exists() {
        read_gold_records(&gold_path)?
            .into_iter()
            .filter(|r| r.annotator_id == annotator)
            .map(|r| r.post_id)
            .collect()
    } else {
        BTreeSet::new()
    };
    let todo: Vec<_> = sample
        .posts()
        .iter()
        .filter(|p| !done.contains(&p.id))
        .collect();
    writeln!(
        output,
        "{} of {} posts left for {annotator}",
        todo.len(),
        sample.len()
    )
    .map_err(Error::from)?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&gold_path)
        .map_err(Error::from)?;
    for (i, post) in todo.iter().enumerate() {
        writeln!(
            output,
            "\n[{}/{}] {}\n{}\n",
            i + 1,
            todo.len(),
            post.id,
            post.text
        )
        .map_err(Error::from)?;
        let mut labels = LabelVector::none_only();
        for key in Key::ALL {
            match ask(input, output, key.name())? {
                Some(v) => labels.set(key, v),
                None => {
                    writeln!(output, "stopped; rerun to resume").map_err(Error::from)?;
                    step.outputs.insert(gold_path);
                    return Ok(());
                }
            }
        }
        if labels.repair() {
            writeln!(
                output,
                "note: None set to {} to match the categories",
                u8::from(labels.none)
            )
            .map_err(Error::from)?;
        }
        append_gold_record(
            &mut file,
            &GoldRecord {
                post_id: post.id.clone(),
                annotator_id: annotator.to_string(),
                kind: AnnotatorKind::Human,
                labels,
                explanation: None,
            },
        )?;
        file.flush().map_err(Error::from)?;
    }
    step.outputs.insert(gold_path);
    Ok(())
}

fn cmd_annotate_llm(
    step: &mut Step,
    mode: Option<PromptMode>,
    output: &mut dyn Write,
) -> CliResult<()> {
    let corpus = step.corpus()?;
    let endpoint = step.cfg.endpoint()?;
    let profile = step.cfg.domain_profile()?;
    let journal = step.path(JOURNAL_FILE);
    let opts = BatchOptions {
        concurrency_limit: step.cfg.concurrency.max(1),
        journal: Some(journal.clone()),
        retry: match step.cfg.endpoint {
            EndpointConfig::Http(_) => RetryPolicy::default(),
            _ => RetryPolicy::immediate(),
        },
    };
    let outcome = annotate_batch(
        corpus.posts(),
        mode.unwrap_or(step.cfg.mode),
        &profile,
        endpoint.as_ref(),
        &opts,
    )?;
    step.outputs.insert(journal);
    step.write(ANNOTATIONS_FILE, |w| {
        for a in &outcome.annotations {
            serde_json::to_writer(&mut *w, a)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    step.write("annotation_failures.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["post_id", "reason"])?;
        for f in &outcome.failures {
            c.write_record([&f.post_id, &f.reason])?;
        }
        c.flush()?;
        Ok(())
    })?;
    writeln!(
        output,
        "annotated {} posts, {} failures",
        outcome.annotations.len(),
        outcome.failures.len()
    )
    .map_err(Error::from)?;
    Ok(())
}

fn cmd_agreement(step: &mut Step) -> CliResult<()> {
    let records = step.gold_records()?;
    let humans: Vec<String> = records
        .iter()
        .filter(|r| r.kind == AnnotatorKind::Human)
        .map(|r| r.annotator_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut grid: BTreeMap<&str, Vec<Option<LabelVector>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.kind == AnnotatorKind::Human) {
        let row = grid
            .entry(&r.post_id)
            .or_insert_with(|| vec![None; humans.len()]);
        let col = humans
            .iter()
            .position(|h| *h == r.annotator_id)
            .expect("known annotator");
        row[col] = Some(r.labels);
    }
    let rows: Vec<Vec<Option<LabelVector>>> = grid.into_values().collect();
    let mut stats = Vec::new();
    for key in Key::ALL {
        let name = key.name();
        let m = ratings_for(&rows, key)?;
        let row = |stat: &str, r: crate::Result<f64>| match r {
            Ok(v) => StatRow::new(format!("{stat}[{name}]"), Some(v), None),
            Err(e) => StatRow::new(format!("{stat}[{name}]"), None, None).flag(e.to_string()),
        };
        stats.push(row("krippendorff_alpha", krippendorff_alpha(&m)));
        let complete: Vec<Vec<Option<bool>>> = m
            .rows()
            .iter()
            .filter(|r| r.iter().all(Option::is_some))
            .cloned()
            .collect();
        let fleiss = crate::agreement::RatingsMatrix::new(complete).and_then(|c| fleiss_kappa(&c));
        stats.push(row("fleiss_kappa", fleiss));
        let mut kappas = Vec::new();
        for i in 0..humans.len() {
            for j in i + 1..humans.len() {
                let (a, b): (Vec<bool>, Vec<bool>) =
                    m.rows().iter().filter_map(|r| Some((r[i]?, r[j]?))).unzip();
                if let Ok(k) = cohen_kappa(&a, &b) {
                    kappas.push(k);
                }
            }
        }
        let mean = (!kappas.is_empty()).then(|| kappas.iter().sum::<f64>() / kappas.len() as f64);
        stats.push(
            StatRow::new(format!("mean_pairwise_cohen_kappa[{name}]"), mean, None)
                .flag(format!("pairs={}", kappas.len())),
        );
    }
    step.write("agreement.csv", |w| write_stat_rows(&stats, w))?;
    if step.path(ANNOTATIONS_FILE).exists() {
        let gold = step.gold()?;
        let machine: BTreeMap<String, LabelVector> = step
            .annotations()?
            .into_iter()
            .map(|a| (a.post_id, a.labels))
            .collect();
        let pred = gold.align(&machine)?;
        let metrics = class_metrics(&pred, &gold.labels)?;
        step.write("llm_metrics.csv", |w| metrics.write_csv(w))?;
    }
    Ok(())
}

fn cmd_align(step: &mut Step, reference: Option<&Path>, output: &mut dyn Write) -> CliResult<()> {
    let gold = step.gold()?;
    let machine: BTreeMap<String, LabelVector> = step
        .annotations()?
        .into_iter()
        .map(|a| (a.post_id, a.labels))
        .collect();
    let candidate = gold.align(&machine)?;
    let mut report = evaluate_candidate(&candidate, &gold, &step.cfg.gate)?;
    if let Some(r) = reference {
        let r = step.input(r);
        let file = File::open(&r).map_err(Error::from)?;
        let reference: AlignmentReport = serde_json::from_reader(file).map_err(Error::from)?;
        report = evaluate_degradation(&report, &reference, &step.cfg.gate)?;
    }
    step.write("alignment.json", |w| report.write_json(w))?;
    step.write("alignment.csv", |w| report.write_csv(w))?;
    writeln!(
        output,
        "alignment {}",
        if report.passed { "passed" } else { "failed" }
    )
    .map_err(Error::from)?;
    for r in &report.reasons {
        writeln!(output, "  {r}").map_err(Error::from)?;
    }
    Ok(())
}

fn cmd_export_train(step: &mut Step, output: &mut dyn Write) -> CliResult<()> {
    let corpus = step.corpus()?;
    let annotations = step.annotations()?;
    let gold = step.gold()?;
    let path = step.require("alignment.json", "align")?;
    let file = File::open(&path).map_err(Error::from)?;
    let report: AlignmentReport = serde_json::from_reader(file).map_err(Error::from)?;
    if report.gold_fingerprint != gold.fingerprint() {
        return Err(Error::GoldMismatch {
            left: report.gold_fingerprint,
            right: gold.fingerprint(),
        }
        .into());
    }
    if !report.passed {
        return Err(Error::GateFailed(report.reasons).into());
    }
    let records: Vec<TrainingRecord> = annotations
        .into_iter()
        .filter_map(|a| {
            Some(TrainingRecord {
                text: corpus.post(&a.post_id)?.text.clone(),
                post_id: a.post_id,
                labels: a.labels,
                explanation: a.explanation,
            })
        })
        .collect();
    let mut summary = None;
    step.write("train.jsonl", |w| {
        summary = Some(export_training_set(&records, &gold.ids(), w)?);
        Ok(())
    })?;
    let summary = summary.expect("written");
    writeln!(
        output,
        "wrote {} training records, {} held-out gold posts excluded",
        summary.written, summary.excluded_held_out
    )
    .map_err(Error::from)?;
    Ok(())
}

fn cmd_tune(
    step: &mut Step,
    objective: Option<Objective>,
    grid_step: Option<f64>,
    output: &mut dyn Write,
) -> CliResult<()> {
    let annotations = step.annotations()?;
    let gold = step.gold()?;
    let by_id: BTreeMap<&str, &MachineAnnotation> = annotations
        .iter()
        .map(|a| (a.post_id.as_str(), a))
        .collect();
    let (confs, labels): (Vec<_>, Vec<_>) = gold
        .post_ids
        .iter()
        .zip(&gold.labels)
        .filter_map(|(id, l)| Some((by_id.get(id.as_str())?.confidence, *l)))
        .unzip();
    if confs.is_empty() {
        return Err(CliError::Run(Error::Empty(
            "gold posts with LLM annotations",
        )));
    }
    let tuning = tune_thresholds(
        &confs,
        &labels,
        objective.unwrap_or(step.cfg.objective),
        grid_step.unwrap_or(step.cfg.grid_step),
    )?;
    for w in tuning.profile.warnings() {
        writeln!(output, "warning: {w}").map_err(Error::from)?;
    }
    step.write(THRESHOLDS_FILE, |w| tuning.profile.save(w))?;
    step.write("objective_curves.csv", |w| tuning.write_curves_csv(w))
}

fn cmd_classify(step: &mut Step) -> CliResult<()> {
    let annotations = step.annotations()?;
    let profile_path = match step.cfg.thresholds.clone() {
        Some(p) => step.input(&p),
        None => step.require(THRESHOLDS_FILE, "tune")?,
    };
    let profile = ThresholdProfile::load(File::open(&profile_path).map_err(Error::from)?)?;
    let labels: BTreeMap<String, LabelVector> = annotations
        .iter()
        .map(|a| (a.post_id.clone(), classify(&a.confidence, &profile)))
        .collect();
    step.write(LABELS_FILE, |w| write_labels_csv(&labels, w))
}

fn cmd_network(step: &mut Step) -> CliResult<()> {
    let corpus = step.corpus()?;
    let net = network_state(&corpus)?;
    step.write("edges.csv", |w| net.graph.write_edges_csv(w))?;
    if let Some(p) = &net.propagation {
        step.write("stances.csv", |w| p.write_csv(&net.seeds, w))?;
    }
    let degree = degree_centrality(&net.graph);
    let eigen = eigenvector_centrality(&net.graph, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    step.write("centrality.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["channel", "degree", "eigenvector"])?;
        for (id, d) in &degree {
            c.write_record([id.clone(), format!("{d:.6}"), format!("{:.6}", eigen[id])])?;
        }
        c.flush()?;
        Ok(())
    })?;
    if step.path(LABELS_FILE).exists() {
        let labels = step.labels()?;
        let mut tests = Vec::new();
        let mut groups: Vec<(String, Option<Community>)> = vec![("all".into(), None)];
        let present: BTreeSet<Community> = net.communities.values().copied().collect();
        groups.extend(
            present
                .into_iter()
                .map(|c| (c.as_str().to_string(), Some(c))),
        );
        for (name, community) in groups {
            let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
            for p in corpus.posts() {
                if community.is_some() && net.communities.get(&p.channel_id) != community.as_ref() {
                    continue;
                }
                if let Some(l) = labels.get(&p.id) {
                    let e = counts.entry(&p.channel_id).or_default();
                    e.0 += usize::from(l.any_category());
                    e.1 += 1;
                }
            }
            let props: BTreeMap<String, f64> = counts
                .into_iter()
                .map(|(c, (o, n))| (c.to_string(), o as f64 / n as f64))
                .collect();
            match centrality_vs_othering(&net.graph, &props) {
                Ok(rows) => tests.extend(rows.into_iter().map(|mut r| {
                    r.statistic = format!("{}[{name}]", r.statistic);
                    r
                })),
                Err(e) => tests.push(
                    StatRow::new(format!("centrality[{name}]"), None, None).flag(e.to_string()),
                ),
            }
        }
        step.write("network_tests.csv", |w| write_stat_rows(&tests, w))?;
    }
    Ok(())
}

fn cmd_timeline(step: &mut Step, smooth_window: Option<usize>) -> CliResult<()> {
    let corpus = step.corpus()?;
    let labels = step.labels()?;
    let registry = step.registry()?;
    let series = proportions_over_time(
        &corpus,
        &labels,
        smooth_window.unwrap_or(step.cfg.smooth_window),
    )?;
    step.write("timeline_raw.csv", |w| series.write_csv(SeriesKind::Raw, w))?;
    step.write("timeline_smoothed.csv", |w| {
        series.write_csv(SeriesKind::Smoothed, w)
    })?;
    step.write("timeline_counts.csv", |w| series.write_counts_csv(w))?;
    step.write("events.csv", |w| registry.write_csv(w))?;
    let net = network_state(&corpus)?;
    let views = normalized_views(&corpus);
    let report = crisis_comparison(
        &corpus,
        &labels,
        &registry,
        &net.communities,
        &views,
        Some(&net.graph),
    )?;
    step.write("crisis_proportions.csv", |w| {
        report.write_proportions_csv(w)
    })?;
    let rows: Vec<StatRow> = report
        .stat_rows()
        .into_iter()
        .chain(
            report
                .flags
                .iter()
                .map(|f| StatRow::new("crisis_flag", None, None).flag(f)),
        )
        .collect();
    step.write("crisis_tests.csv", |w| write_stat_rows(&rows, w))?;
    step.write("crisis_views.csv", |w| report.views.write_groups_csv(w))
}

fn cmd_moral(step: &mut Step) -> CliResult<()> {
    let corpus = step.corpus()?;
    let labels = step.labels()?;
    let grid = moral_othering_grid(&paired_posts(&corpus, &labels))?;
    step.write("moral_grid.csv", |w| grid.write_csv(w))?;
    let mut tests = Vec::new();
    match grid.headline_test() {
        Ok(c) => tests.push(
            StatRow::new(
                "chi_squared[any_othering,any_moral]",
                Some(c.statistic),
                Some(c.p),
            )
            .method("pearson"),
        ),
        Err(e) => tests.push(
            StatRow::new("chi_squared[any_othering,any_moral]", None, None).flag(e.to_string()),
        ),
    }
    let net = network_state(&corpus)?;
    let mut by_community: BTreeMap<Community, BTreeMap<String, LabelVector>> = BTreeMap::new();
    for p in corpus.posts() {
        if let (Some(c), Some(l)) = (net.communities.get(&p.channel_id), labels.get(&p.id)) {
            by_community.entry(*c).or_default().insert(p.id.clone(), *l);
        }
    }
    if let (Some(ru), Some(ua)) = (
        by_community.get(&Community::Russian),
        by_community.get(&Community::Ukrainian),
    ) {
        let a = moral_othering_grid(&paired_posts(&corpus, ru));
        let b = moral_othering_grid(&paired_posts(&corpus, ua));
        if let (Ok(a), Ok(b)) = (a, b) {
            let cells = group_contrast(&a, &b)?;
            step.write("moral_contrast.csv", |w| write_contrast_csv(&cells, w))?;
        }
    }
    step.write("moral_tests.csv", |w| write_stat_rows(&tests, w))
}

fn cmd_attention(step: &mut Step) -> CliResult<()> {
    let corpus = step.corpus()?;
    let labels = step.labels()?;
    let views = normalized_views(&corpus);
    let net = network_state(&corpus)?;
    let mut report = attention_report(&corpus, &labels, None, &views);
    if !net.communities.is_empty() {
        let split = attention_report(&corpus, &labels, Some(&net.communities), &views);
        report.groups.extend(split.groups);
        report.tests.extend(split.tests);
    }
    report.tests.push(StatRow::new(
        "views_excluded",
        Some(views.excluded.len() as f64),
        None,
    ));
    step.write("attention_groups.csv", |w| report.write_groups_csv(w))?;
    step.write("attention_tests.csv", |w| report.write_tests_csv(w))
}

fn cmd_overlap(step: &mut Step) -> CliResult<()> {
    let corpus = step.corpus()?;
    let labels = step.labels()?;
    let set = |f: &dyn Fn(&crate::corpus::Post) -> bool| -> BTreeSet<String> {
        corpus
            .posts()
            .iter()
            .filter(|p| f(p))
            .map(|p| p.id.clone())
            .collect()
    };
    let othering = set(&|p| labels.get(&p.id).is_some_and(|l| l.any_category()));
    let fear = set(&|p| p.fear_speech == Some(true));
    let hate = set(&|p| p.hate_speech == Some(true));
    let report = overlap_report(&[
        ("othering".into(), othering),
        ("fear".into(), fear),
        ("hate".into(), hate),
    ]);
    step.write("overlap_regions.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        let mut header = report.names.clone();
        header.push("count".into());
        c.write_record(&header)?;
        for r in &report.regions {
            let mut row: Vec<String> = r
                .membership
                .iter()
                .map(|m| u8::from(*m).to_string())
                .collect();
            row.push(r.count.to_string());
            c.write_record(&row)?;
        }
        c.flush()?;
        Ok(())
    })?;
    step.write("overlap_conditionals.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["a", "given", "probability", "flags"])?;
        for x in &report.conditionals {
            c.write_record([
                x.a.clone(),
                x.given.clone(),
                x.probability.map(|p| format!("{p:.6}")).unwrap_or_default(),
                if x.probability.is_none() {
                    "undefined_empty_given".into()
                } else {
                    String::new()
                },
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let rows = toxicity_summary(&toxicity_groups(&corpus, &labels));
    step.write("toxicity.csv", |w| write_toxicity_csv(&rows, w))
}

/// Toxicity scores of fear speech, hate speech, othering (with and without
/// Explicit Dehumanization) and each category. Unscored posts are skipped.
pub fn toxicity_groups(
    corpus: &Corpus,
    labels: &BTreeMap<String, LabelVector>,
) -> Vec<(String, Vec<f64>)> {
    let mut groups: Vec<(String, Vec<f64>)> = [
        "fear_speech",
        "hate_speech",
        "othering",
        "othering_without_dehumanization",
    ]
    .iter()
    .map(|g| (g.to_string(), Vec::new()))
    .chain(Key::ALL.iter().map(|k| (k.name().to_string(), Vec::new())))
    .collect();
    for p in corpus.posts() {
        let Some(t) = p.toxicity else { continue };
        let l = labels.get(&p.id);
        let any = l.is_some_and(|l| l.any_category());
        let member = [
            p.fear_speech == Some(true),
            p.hate_speech == Some(true),
            any,
            any && !l.is_some_and(|l| l.get(Key::Dehumanization)),
        ]
        .into_iter()
        .chain(Key::ALL.iter().map(|&k| l.is_some_and(|l| l.get(k))));
        for (g, m) in groups.iter_mut().zip(member) {
            if m {
                g.1.push(t);
            }
        }
    }
    groups
}

fn cmd_report(step: &mut Step, output: &mut dyn Write) -> CliResult<()> {
    let mut csvs: Vec<PathBuf> = fs::read_dir(&step.dir)
        .map_err(Error::from)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name().is_some_and(|n| n != "report_index.csv")
        })
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(missing("CSV outputs", "classify"));
    }
    let mut index = Vec::new();
    for p in &csvs {
        let rows = csv::Reader::from_path(p)
            .map_err(Error::from)?
            .records()
            .count();
        let name = p.file_name().expect("file").to_string_lossy().to_string();
        index.push((name, rows, sha256_file(p)?));
        step.inputs.insert(p.clone());
    }
    let mut summary = String::new();
    summary.push_str("Run summary\n\n");
    if let Ok(corpus) = step.corpus() {
        summary.push_str(&format!(
            "posts: {}\nchannels: {}\n",
            corpus.len(),
            corpus.channels().len()
        ));
    }
    if let Ok(labels) = step.labels() {
        let n = labels.len();
        let oth = labels.values().filter(|l| l.any_category()).count();
        summary.push_str(&format!("classified posts: {n}\nothering posts: {oth}\n"));
        for key in Key::CATEGORIES {
            let k = labels.values().filter(|l| l.get(key)).count();
            summary.push_str(&format!("  {}: {k}\n", key.name()));
        }
    }
    let align = step.path("alignment.json");
    if align.exists() {
        let report: AlignmentReport =
            serde_json::from_reader(File::open(&align).map_err(Error::from)?)
                .map_err(Error::from)?;
        summary.push_str(&format!(
            "alignment: {} (macro F1 {:.3})\n",
            if report.passed { "passed" } else { "failed" },
            report.macro_f1
        ));
        for r in &report.reasons {
            summary.push_str(&format!("  {r}\n"));
        }
    }
    let thresholds = step.path(THRESHOLDS_FILE);
    if thresholds.exists() {
        let profile = ThresholdProfile::load(File::open(&thresholds).map_err(Error::from)?)?;
        summary.push_str("thresholds:\n");
        for c in &profile.categories {
            summary.push_str(&format!("  {}: {:.2}\n", c.key.name(), c.threshold));
        }
    }
    summary.push_str("\nfiles:\n");
    for (name, rows, _) in &index {
        summary.push_str(&format!("  {name} ({rows} rows)\n"));
    }
    step.write("report_index.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["file", "rows", "sha256"])?;
        for (name, rows, hash) in &index {
            c.write_record([name.clone(), rows.to_string(), hash.clone()])?;
        }
        c.flush()?;
        Ok(())
    })?;
    step.write(SUMMARY_FILE, |w| Ok(w.write_all(summary.as_bytes())?))?;
    output.write_all(summary.as_bytes()).map_err(Error::from)?;
    Ok(())
}
