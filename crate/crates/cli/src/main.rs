//! `cargocd`: generate synthetic corpora, discover per-sequence graphs, fuse
//! them and score the result.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cargo_core::eval::score;
use cargo_core::fusion::EdgeTally;
use cargo_core::io;
use cargo_core::oneshot::discover_batch;
use cargo_core::pipeline::{self, AblationParam, EstimatorKind, RunConfig, WORKERS_ENV};
use cargo_core::{synthgen, Criterion, Error, GlobalGraph, OneShotConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cargocd", version, about = "One-shot causal discovery over labelled event sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic corpus with known label parents.
    Generate(GenerateCmd),
    /// Find per-sequence label parents with a conditional estimator.
    Discover(DiscoverCmd),
    /// Fuse per-sequence graphs into one graph.
    Fuse(FuseCmd),
    /// Score a fused graph against ground truth.
    Eval(EvalCmd),
    /// Sweep one parameter and print a CSV of scores.
    Ablate(AblateCmd),
    /// Run generate, discover, fuse and eval end to end.
    Pipeline(PipelineCmd),
}

#[derive(Args)]
struct GenerateCmd {
    #[arg(long, default_value = "tiny")]
    preset: String,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Default)]
struct OneShotArgs {
    /// Resampled context length.
    #[arg(long)]
    context: Option<usize>,
    /// Monte-Carlo variants per sequence.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    top_p: Option<f64>,
    /// Detection threshold in standard deviations.
    #[arg(long)]
    threshold_k: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    min_cmi: Option<f64>,
    /// Also profile labels that are negative for a sequence.
    #[arg(long)]
    all_labels: bool,
}

impl OneShotArgs {
    fn apply(&self, c: &mut OneShotConfig) {
        set(&mut c.context, self.context);
        set(&mut c.samples, self.samples);
        set(&mut c.top_k, self.top_k);
        set(&mut c.top_p, self.top_p);
        set(&mut c.threshold_k, self.threshold_k);
        set(&mut c.eps, self.eps);
        set(&mut c.max_len, self.max_len);
        set(&mut c.min_cmi, self.min_cmi);
        c.all_labels |= self.all_labels;
    }
}

#[derive(Args, Default)]
struct EstimatorArgs {
    /// oracle, noisy or ngram.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
}

impl EstimatorArgs {
    fn apply(&self, c: &mut pipeline::EstimatorConfig) -> Result<()> {
        if let Some(e) = &self.estimator {
            c.kind = e.parse::<EstimatorKind>()?;
        }
        set(&mut c.alpha, self.alpha);
        set(&mut c.beta, self.beta);
        if self.noise_seed.is_some() {
            c.seed = self.noise_seed;
        }
        set(&mut c.order, self.order);
        set(&mut c.delta, self.delta);
        Ok(())
    }
}

#[derive(Args, Default)]
struct FuseArgs {
    /// union, frequency, adaptive, beta_fpr, bes_mi or caig.
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tau_min: Option<f64>,
    #[arg(long)]
    tau_max: Option<f64>,
    #[arg(long)]
    fpr: Option<f64>,
    #[arg(long)]
    alpha_reg: Option<f64>,
}

impl FuseArgs {
    fn apply(&self, c: &mut pipeline::FuseConfig) {
        if let Some(name) = &self.criterion {
            c.criterion = name.clone();
        }
        set(&mut c.tau, self.tau);
        set(&mut c.tau_min, self.tau_min);
        set(&mut c.tau_max, self.tau_max);
        set(&mut c.fpr, self.fpr);
        set(&mut c.alpha_reg, self.alpha_reg);
    }
}

#[derive(Args)]
struct DiscoverCmd {
    #[arg(long)]
    sequences: PathBuf,
    /// World description written by `generate`.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[command(flatten)]
    oneshot: OneShotArgs,
}

#[derive(Args)]
struct FuseCmd {
    #[arg(long)]
    local: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fuse: FuseArgs,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Corpus the graph was fused from; label supports are read from the
    /// graph when omitted.
    #[arg(long)]
    sequences: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[command(flatten)]
    oneshot: OneShotArgs,
    #[command(flatten)]
    fuse: FuseArgs,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        if let Some(p) = &self.preset {
            cfg.generate.preset = p.clone();
        }
        set(&mut cfg.generate.m, self.m);
        self.estimator.apply(&mut cfg.estimator)?;
        self.oneshot.apply(&mut cfg.discover);
        self.fuse.apply(&mut cfg.fuse);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct AblateCmd {
    /// N, k, c or tau.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct PipelineCmd {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Refuse to run without an explicit --seed.
    #[arg(long, env = "CI")]
    ci: bool,
    #[command(flatten)]
    run: RunArgs,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = io::read_text(path)?;
    toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn workers(flag: Option<usize>) -> Result<usize> {
    match flag {
        Some(0) => bail!(Error::InvalidConfig("workers must be at least 1".into())),
        Some(w) => Ok(w),
        None => Ok(pipeline::default_workers()?),
    }
}

fn generate(cmd: GenerateCmd) -> Result<()> {
    let spec = synthgen::preset(&cmd.preset)?;
    let (sequences, truth) = synthgen::generate_with_seed(&spec, cmd.m, cmd.seed)?;
    pipeline::write_corpus(&cmd.out_dir, &spec, &sequences, &truth)?;
    log::info!("wrote {} sequences to {}", sequences.len(), cmd.out_dir.display());
    Ok(())
}

fn discover(cmd: DiscoverCmd) -> Result<()> {
    let mut oneshot = OneShotConfig::default();
    cmd.oneshot.apply(&mut oneshot);
    oneshot.validate()?;
    let mut est_cfg = pipeline::EstimatorConfig::default();
    cmd.estimator.apply(&mut est_cfg)?;
    est_cfg.validate()?;
    let workers = workers(cmd.workers)?;

    let spec = pipeline::read_spec(&cmd.spec)?;
    let sequences = io::read_sequences(&cmd.sequences, spec.n_events(), spec.n_labels())?;
    let estimator = est_cfg.build(&spec, &sequences, cmd.seed)?;
    let found = discover_batch(&*estimator, &sequences, &oneshot, cmd.seed, workers)?;
    io::write_local_graphs(&cmd.out, &found.graphs)?;
    log::info!(
        "discovered {} local graphs ({} skipped) into {}",
        found.graphs.len(),
        found.skipped,
        cmd.out.display()
    );
    Ok(())
}

fn fuse(cmd: FuseCmd) -> Result<()> {
    let mut cfg = pipeline::FuseConfig::default();
    cmd.fuse.apply(&mut cfg);
    let criterion = cfg.criterion()?;
    let spec = pipeline::read_spec(&cmd.spec)?;
    let graphs = io::read_local_graphs::<f64>(&cmd.local)?;
    let tally = EdgeTally::from_graphs(&graphs, spec.n_labels())?;
    let graph = criterion.apply(&tally);
    io::write_graph(&cmd.out, &graph, &spec.events, &spec.labels)?;
    log::info!("{criterion}: kept {} edges from {} sequences", graph.edge_count(), tally.processed);
    Ok(())
}

/// Label supports recorded in the graph itself. Labels whose parents were
/// all dropped carry no count and get weight 1.
fn supports_from_graph(graph: &GlobalGraph, n_labels: usize) -> Vec<u64> {
    let mut support = vec![0; n_labels];
    for l in &graph.labels {
        if let Some(slot) = support.get_mut(l.label.index()) {
            *slot = l.parents.first().map_or(1, |p| p.support.max(1));
        }
    }
    support
}

fn eval(cmd: EvalCmd) -> Result<()> {
    let spec = pipeline::read_spec(&cmd.spec)?;
    let graph: GlobalGraph = io::read_graph(&cmd.graph, &spec.events, &spec.labels)?;
    let truth = io::ground_truth_from_json(&io::read_text(&cmd.truth)?, &spec.events, &spec.labels)?;
    let (support, m) = match &cmd.sequences {
        Some(path) => {
            let seqs = io::read_sequences(path, spec.n_events(), spec.n_labels())?;
            let mut support = vec![0u64; spec.n_labels()];
            for s in &seqs {
                for l in s.positive_labels() {
                    support[l.index()] += 1;
                }
            }
            (support, seqs.len() as u64)
        }
        None => {
            log::warn!("no --sequences given; using label supports recorded in the graph");
            (supports_from_graph(&graph, spec.n_labels()), 0)
        }
    };
    let mut report = score(&graph, &truth, &support)?;
    report.m = m;
    print_report(&report, &spec.labels);
    if let Some(out) = &cmd.out {
        pipeline::write_report(out, &report)?;
    }
    Ok(())
}

fn print_report(report: &cargo_core::EvalReport, labels: &cargo_core::LabelVocab) {
    let (w, a) = (&report.weighted, &report.macro_avg);
    println!(
        "weighted  precision {:.4}  recall {:.4}  f1 {:.4}",
        w.precision, w.recall, w.f1
    );
    println!(
        "macro     precision {:.4}  recall {:.4}  f1 {:.4}",
        a.precision, a.recall, a.f1
    );
    for l in &report.labels {
        log::debug!(
            "{:<12} m={:<6} p={:.3} r={:.3} f1={:.3}",
            labels.name(l.label),
            l.support,
            l.metrics.precision,
            l.metrics.recall,
            l.metrics.f1
        );
    }
}

fn ablate(cmd: AblateCmd) -> Result<()> {
    let param: AblationParam = cmd.param.parse()?;
    let cfg = cmd.run.resolve()?;
    let rows = pipeline::ablate(&cfg, param, &cmd.grid)?;
    let csv = pipeline::ablation_csv(&rows);
    match &cmd.out {
        Some(path) => io::write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_pipeline(cmd: PipelineCmd) -> Result<()> {
    if cmd.ci && cmd.run.seed.is_none() {
        bail!(Error::InvalidConfig("--seed is mandatory in CI mode".into()));
    }
    let mut cfg = cmd.run.resolve()?;
    if let Some(dir) = cmd.out_dir {
        cfg.out_dir = dir;
    }
    if cfg.seed.is_none() {
        log::warn!("no seed given; using 0");
    }
    let summary = pipeline::run(&cfg)?;
    let criterion: Criterion = cfg.fuse.criterion()?;
    println!(
        "{} sequences ({} skipped), {criterion}: {} edges in {:.2}s",
        summary.sequences, summary.skipped, summary.edges, summary.timings.total
    );
    let spec = pipeline::read_spec(cfg.out_dir.join(pipeline::SPEC_FILE))?;
    print_report(&summary.report, &spec.labels);
    Ok(())
}

/// Configuration mistakes exit with 2, like command-line usage errors.
fn exit_code(err: &anyhow::Error) -> u8 {
    fn is_usage(e: &Error) -> bool {
        match e {
            Error::UnknownCriterion(_) | Error::UnknownPreset(_) | Error::InvalidConfig(_) => true,
            Error::Stage { source, .. } => is_usage(source),
            _ => false,
        }
    }
    let usage = err.chain().any(|c| {
        c.downcast_ref::<Error>().is_some_and(is_usage) || c.downcast_ref::<toml::de::Error>().is_some()
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match cli.command {
        Command::Generate(c) => generate(c),
        Command::Discover(c) => discover(c),
        Command::Fuse(c) => fuse(c),
        Command::Eval(c) => eval(c),
        Command::Ablate(c) => ablate(c),
        Command::Pipeline(c) => run_pipeline(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
