//! End-to-end runs: generate a corpus, discover local graphs, fuse and score
//! them, writing every intermediate artifact into one directory.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ConditionalEstimator, NGramEstimator, NoiseConfig, NoisyEstimator, OracleEstimator};
use crate::eval::{score_tally, EvalReport};
use crate::fusion::{Criterion, CriterionParams, EdgeTally};
use crate::graph::{GlobalGraph, LocalGraph};
use crate::io::{self, GroundTruth};
use crate::oneshot::{discover_batch, OneShotConfig};
use crate::synthgen::{self, GeneratorSpec};
use crate::types::LabeledSequence;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "CARGOCD_WORKERS";

pub const SPEC_FILE: &str = "spec.json";
pub const SEQUENCES_FILE: &str = "sequences.jsonl";
pub const TRUTH_FILE: &str = "ground_truth.json";
pub const LOCAL_GRAPHS_FILE: &str = "local_graphs.jsonl";
pub const GRAPH_FILE: &str = "graph.json";
pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";

/// Worker count from [`WORKERS_ENV`], else the number of available cores.
pub fn default_workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(Error::InvalidConfig(format!("{WORKERS_ENV}=`{v}` is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Oracle,
    Noisy,
    Ngram,
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "noisy" => Ok(Self::Noisy),
            "ngram" => Ok(Self::Ngram),
            other => Err(Error::InvalidConfig(format!(
                "unknown estimator `{other}` (expected one of: oracle, noisy, ngram)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Spurious-detection rate of the noisy wrapper.
    pub alpha: f64,
    /// Missed-detection rate of the noisy wrapper.
    pub beta: f64,
    /// Noise seed; the run seed when unset.
    pub seed: Option<u64>,
    /// Context length of the n-gram model.
    pub order: usize,
    /// Additive smoothing of the n-gram model.
    pub delta: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Oracle,
            alpha: 0.05,
            beta: 0.2,
            seed: None,
            order: 3,
            delta: 0.01,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        NoiseConfig::new(self.alpha, self.beta, 0).validate()?;
        if self.order < 1 {
            return Err(Error::InvalidConfig("n-gram order must be at least 1".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig("n-gram smoothing delta must be positive".into()));
        }
        Ok(())
    }

    /// Builds the estimator. The n-gram model is fitted on `corpus`.
    pub fn build(
        &self,
        spec: &GeneratorSpec,
        corpus: &[LabeledSequence],
        run_seed: u64,
    ) -> Result<Box<dyn ConditionalEstimator<f64>>> {
        Ok(match self.kind {
            EstimatorKind::Oracle => Box::new(OracleEstimator::new(spec)?),
            EstimatorKind::Noisy => {
                let noise = NoiseConfig::new(self.alpha, self.beta, self.seed.unwrap_or(run_seed));
                Box::new(NoisyEstimator::new(OracleEstimator::new(spec)?, noise)?)
            }
            EstimatorKind::Ngram => Box::new(NGramEstimator::fit(
                corpus,
                spec.n_events(),
                spec.n_labels(),
                self.order,
                self.delta,
            )?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// `tiny`, `standard` or `longtail`.
    pub preset: String,
    /// Number of sequences.
    pub m: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            preset: "tiny".into(),
            m: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuseConfig {
    pub criterion: String,
    pub tau: f64,
    pub tau_max: f64,
    pub tau_min: f64,
    pub fpr: f64,
    pub alpha_reg: f64,
}

impl Default for FuseConfig {
    fn default() -> Self {
        let p = CriterionParams::default();
        Self {
            criterion: "adaptive".into(),
            tau: p.tau,
            tau_max: p.tau_max,
            tau_min: p.tau_min,
            fpr: p.fpr,
            alpha_reg: p.alpha_reg,
        }
    }
}

impl FuseConfig {
    pub fn params(&self) -> CriterionParams {
        CriterionParams {
            tau: self.tau,
            tau_max: self.tau_max,
            tau_min: self.tau_min,
            fpr: self.fpr,
            alpha_reg: self.alpha_reg,
        }
    }

    pub fn criterion(&self) -> Result<Criterion> {
        Criterion::from_name(&self.criterion, &self.params())
    }
}

/// Everything a run needs, one section per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Worker threads; [`default_workers`] when unset.
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
    pub generate: GenerateConfig,
    pub estimator: EstimatorConfig,
    pub discover: OneShotConfig,
    pub fuse: FuseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            workers: None,
            out_dir: PathBuf::from("run"),
            generate: GenerateConfig::default(),
            estimator: EstimatorConfig::default(),
            discover: OneShotConfig::default(),
            fuse: FuseConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.generate.m == 0 {
            return Err(Error::InvalidConfig("generate.m must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        synthgen::preset(&self.generate.preset)?;
        self.estimator.validate()?;
        self.discover.validate()?;
        self.fuse.criterion()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn workers(&self) -> Result<usize> {
        self.workers.map_or_else(default_workers, Ok)
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub generate: f64,
    pub discover: f64,
    pub fuse: f64,
    pub eval: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub report: EvalReport,
    pub timings: StageTimings,
    pub sequences: usize,
    pub skipped: usize,
    pub edges: usize,
}

fn stage<R>(name: &'static str, f: impl FnOnce() -> Result<R>) -> Result<(R, f64)> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(name))?;
    let secs = start.elapsed().as_secs_f64();
    log::info!("{name}: {secs:.3}s");
    Ok((out, secs))
}

fn pretty<S: Serialize>(value: &S) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn write_spec(path: impl AsRef<Path>, spec: &GeneratorSpec) -> Result<()> {
    io::write_text(path, &pretty(spec)?)
}

pub fn read_spec(path: impl AsRef<Path>) -> Result<GeneratorSpec> {
    let spec: GeneratorSpec = serde_json::from_str(&io::read_text(path)?)?;
    spec.validate()?;
    Ok(spec)
}

/// Writes `spec.json`, `sequences.jsonl` and `ground_truth.json` into `dir`.
pub fn write_corpus(dir: &Path, spec: &GeneratorSpec, sequences: &[LabeledSequence], truth: &GroundTruth) -> Result<()> {
    write_spec(dir.join(SPEC_FILE), spec)?;
    io::write_sequences(dir.join(SEQUENCES_FILE), sequences)?;
    io::write_text(
        dir.join(TRUTH_FILE),
        &io::ground_truth_to_json(truth, &spec.events, &spec.labels)?,
    )
}

pub fn write_report(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    io::write_text(path, &pretty(report)?)
}

fn generate_corpus(cfg: &RunConfig) -> Result<(GeneratorSpec, Vec<LabeledSequence>, GroundTruth)> {
    let spec = synthgen::preset(&cfg.generate.preset)?;
    let (sequences, truth) = synthgen::generate_with_seed(&spec, cfg.generate.m, cfg.seed())?;
    Ok((spec, sequences, truth))
}

fn fuse_and_score(
    graphs: &[LocalGraph<f64>],
    truth: &GroundTruth,
    criterion: &Criterion,
) -> Result<(GlobalGraph<f64>, EvalReport)> {
    let tally = EdgeTally::from_graphs(graphs, truth.len())?;
    let graph = criterion.apply(&tally);
    let mut report = score_tally(&graph, truth, &tally)?;
    report.criterion = Some(criterion.to_string());
    Ok((graph, report))
}

/// Runs every stage and writes all artifacts into `cfg.out_dir`. Apart from
/// `timings.json`, the artifacts depend only on the config and seed, not on
/// the worker count.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let workers = cfg.workers().map_err(|e| e.in_stage("config"))?;
    let seed = cfg.seed();
    let dir = cfg.out_dir.as_path();
    let criterion = cfg.fuse.criterion()?;
    let total = Instant::now();

    let ((spec, sequences, truth), generate_secs) = stage("generate", || {
        let (spec, sequences, truth) = generate_corpus(cfg)?;
        write_corpus(dir, &spec, &sequences, &truth)?;
        Ok((spec, sequences, truth))
    })?;

    let (found, discover_secs) = stage("discover", || {
        let estimator = cfg.estimator.build(&spec, &sequences, seed)?;
        let found = discover_batch(&*estimator, &sequences, &cfg.discover, seed, workers)?;
        io::write_local_graphs(dir.join(LOCAL_GRAPHS_FILE), &found.graphs)?;
        Ok(found)
    })?;

    let ((graph, tally), fuse_secs) = stage("fuse", || {
        let tally = EdgeTally::from_graphs(&found.graphs, spec.n_labels())?;
        let graph = criterion.apply(&tally);
        io::write_graph(dir.join(GRAPH_FILE), &graph, &spec.events, &spec.labels)?;
        Ok((graph, tally))
    })?;

    let (report, eval_secs) = stage("eval", || {
        let mut report = score_tally(&graph, &truth, &tally)?;
        report.criterion = Some(criterion.to_string());
        write_report(dir.join(REPORT_FILE), &report)?;
        Ok(report)
    })?;

    let timings = StageTimings {
        generate: generate_secs,
        discover: discover_secs,
        fuse: fuse_secs,
        eval: eval_secs,
        total: total.elapsed().as_secs_f64(),
    };
    io::write_text(dir.join(TIMINGS_FILE), &pretty(&timings)?).map_err(|e| e.in_stage("eval"))?;
    Ok(RunSummary {
        report,
        timings,
        sequences: sequences.len(),
        skipped: found.skipped,
        edges: graph.edge_count(),
    })
}

/// Quantity varied by [`ablate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationParam {
    /// Monte-Carlo variants per sequence.
    Samples,
    /// Detection threshold in standard deviations.
    ThresholdK,
    /// Resampled context length.
    Context,
    /// Static frequency threshold, replacing the configured criterion.
    Tau,
}

impl FromStr for AblationParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" | "samples" => Ok(Self::Samples),
            "k" | "threshold_k" => Ok(Self::ThresholdK),
            "c" | "context" => Ok(Self::Context),
            "tau" => Ok(Self::Tau),
            other => Err(Error::InvalidConfig(format!(
                "unknown ablation parameter `{other}` (expected one of: N, k, c, tau)"
            ))),
        }
    }
}

impl fmt::Display for AblationParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Samples => "N",
            Self::ThresholdK => "k",
            Self::Context => "c",
            Self::Tau => "tau",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub param: AblationParam,
    pub value: f64,
    pub edges: usize,
    pub report: EvalReport,
    pub seconds: f64,
}

fn count_value(param: AblationParam, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(Error::InvalidConfig(format!("{param} needs positive integers, got {value}")))
    }
}

/// Reruns discovery (or only fusion, for `tau`) once per grid value on a
/// single generated corpus. Nothing is written to disk.
pub fn ablate(cfg: &RunConfig, param: AblationParam, grid: &[f64]) -> Result<Vec<AblationRow>> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    if grid.is_empty() {
        return Err(Error::InvalidConfig("ablation grid is empty".into()));
    }
    let workers = cfg.workers()?;
    let seed = cfg.seed();
    let (spec, sequences, truth) = generate_corpus(cfg).map_err(|e| e.in_stage("generate"))?;
    let estimator = cfg
        .estimator
        .build(&spec, &sequences, seed)
        .map_err(|e| e.in_stage("discover"))?;

    let mut rows = Vec::with_capacity(grid.len());
    if param == AblationParam::Tau {
        let start = Instant::now();
        let found = discover_batch(&*estimator, &sequences, &cfg.discover, seed, workers)?;
        let discover_secs = start.elapsed().as_secs_f64();
        for &tau in grid {
            let t = Instant::now();
            let criterion = Criterion::Frequency { tau };
            criterion.validate()?;
            let (graph, report) = fuse_and_score(&found.graphs, &truth, &criterion)?;
            rows.push(AblationRow {
                param,
                value: tau,
                edges: graph.edge_count(),
                report,
                seconds: discover_secs + t.elapsed().as_secs_f64(),
            });
        }
        return Ok(rows);
    }

    let criterion = cfg.fuse.criterion()?;
    for &value in grid {
        let mut dc = cfg.discover.clone();
        match param {
            AblationParam::Samples => dc.samples = count_value(param, value)?,
            AblationParam::Context => dc.context = count_value(param, value)?,
            AblationParam::ThresholdK => dc.threshold_k = value,
            AblationParam::Tau => unreachable!(),
        }
        dc.validate()?;
        let t = Instant::now();
        let found = discover_batch(&*estimator, &sequences, &dc, seed, workers)?;
        let (graph, report) = fuse_and_score(&found.graphs, &truth, &criterion)?;
        log::info!("{param}={value}: weighted F1 {:.4}", report.weighted.f1);
        rows.push(AblationRow {
            param,
            value,
            edges: graph.edge_count(),
            report,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

pub const ABLATION_CSV_HEADER: &str = "param,value,edges,weighted_precision,weighted_recall,weighted_f1,macro_precision,macro_recall,macro_f1,seconds";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let (w, a) = (&r.report.weighted, &r.report.macro_avg);
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            r.param, r.value, r.edges, w.precision, w.recall, w.f1, a.precision, a.recall, a.f1, r.seconds
        );
    }
    out
}
