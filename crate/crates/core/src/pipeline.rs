//! Orchestration: config to batteries, dispatch with the stop rule, scoring,
//! persistence and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, AnalysisOptions, ExperimentAnalysis, Observation};
use crate::backend::{
    dispatch, AnswerKey, Backend, BackendError, Cache, CacheError, Client, DecodeParams, DispatchOptions, LiveBackend,
    MockBackend, PlantSpec,
};
use crate::batteries::{
    apply_stop_rule, build_anchoring, build_distance, build_priming, build_size_congruity, build_snarc, first_level,
    AnchoringParams, Battery, BatteryError, ExperimentKind, PrimingParams, PrimingVariation, SizeParams, SnarcParams,
    StopStep,
};
use crate::config::{BackendKind, ConfigError, ExperimentConfig, PrimingConfig, RunConfig};
use crate::promptgen::{AnswerRule, PromptInstance};
use crate::report::{self, EffectReport, ReportError, RunMeta};
use crate::stimuli::{self, PrimingTriple, StimuliError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURE_CEILING: i32 = 3;
pub const EXIT_EMPTY: i32 = 4;
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Battery(#[from] BatteryError),
    #[error(transparent)]
    Stimuli(#[from] StimuliError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("nothing to analyze: {0}")]
    Empty(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Battery(_) | PipelineError::Stimuli(_) => EXIT_CONFIG,
            PipelineError::Backend(e) => match e {
                BackendError::MissingApiKey(_) | BackendError::InvalidConfig(_) => EXIT_CONFIG,
                BackendError::FailureCeiling { .. } => EXIT_FAILURE_CEILING,
                BackendError::Interrupted => EXIT_INTERRUPTED,
                _ => EXIT_OTHER,
            },
            PipelineError::Empty(_) => EXIT_EMPTY,
            _ => EXIT_OTHER,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> PipelineError + '_ {
    move |source| PipelineError::Json { path: path.to_path_buf(), source }
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Priming triples for a config: the named corpus or the bundled sample,
/// reduced to the strongest targets per length.
pub fn load_triples(cfg: &PrimingConfig) -> Result<Vec<PrimingTriple>, PipelineError> {
    let corpus = match &cfg.triples {
        Some(path) => stimuli::load_priming_triples(path)?,
        None => stimuli::parse_priming_triples(stimuli::SAMPLE_PRIMING_CORPUS)?,
    };
    if corpus.excluded() > 0 {
        log::info!(
            "priming corpus: {} excluded by association, {} by length",
            corpus.excluded_association,
            corpus.excluded_length
        );
    }
    Ok(stimuli::select_priming_targets(&corpus.triples, &cfg.lengths, cfg.targets_per_length).triples)
}

pub fn build_battery(exp: &ExperimentConfig, seed: Option<u64>) -> Result<Battery, PipelineError> {
    let need_seed = || seed.ok_or_else(|| ConfigError::Invalid("a seed is required".into()));
    let battery = match exp {
        ExperimentConfig::Priming(p) => {
            let params = PrimingParams {
                variation: p.variation,
                lengths: p.lengths.clone(),
                spacings: p.spacings.clone(),
                catch_trials: p.catch_trials,
                catch_seed: if p.catch_trials > 0 { need_seed()? } else { 0 },
            };
            build_priming(&params, &load_triples(p)?)?
        }
        ExperimentConfig::Distance(d) => build_distance(&d.set, d.spaced)?,
        ExperimentConfig::Snarc(s) => {
            let mut params = SnarcParams::new(s.experiment, s.axis);
            params.schedule = s.schedule.clone();
            params.x_names = s.x_names.clone();
            params.symbols = s.symbols.clone();
            build_snarc(&params)?
        }
        ExperimentConfig::SizeCongruity(s) => build_size_congruity(&SizeParams {
            set: s.set.clone(),
            spaced: s.spaced,
            number_variation: s.number_variation,
        })?,
        ExperimentConfig::Anchoring(a) => {
            let mut params = AnchoringParams::new(a.experiment, need_seed()?);
            params.min_length = a.min_length;
            params.max_length = a.max_length;
            params.per_cell = a.per_cell;
            build_anchoring(&params)?
        }
    };
    Ok(battery)
}

/// Builds every configured battery. Experiment ids must be unique.
pub fn build_batteries(cfg: &RunConfig) -> Result<Vec<Battery>, PipelineError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(cfg.experiments.len());
    for exp in &cfg.experiments {
        let b = build_battery(exp, cfg.seed)?;
        if !seen.insert(b.experiment_id.clone()) {
            return Err(ConfigError::Invalid(format!("experiment {:?} is configured twice", b.experiment_id)).into());
        }
        out.push(b);
    }
    Ok(out)
}

/// Decode parameters for one instance.
pub fn decode_params(exp: &ExperimentConfig, inst: &PromptInstance) -> DecodeParams {
    match (inst.answer_rule, exp) {
        (AnswerRule::Estimate, ExperimentConfig::Anchoring(a)) => DecodeParams::new(a.positions),
        (AnswerRule::Estimate, _) => DecodeParams::new(3),
        (AnswerRule::Classify, _) => DecodeParams::new(1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub experiment_id: String,
    pub kind: ExperimentKind,
    pub instances: usize,
    /// Set when the stop rule may skip later spacing levels; `instances`
    /// is then an upper bound on the requests issued.
    pub staged: bool,
    pub conditions: BTreeMap<String, usize>,
    pub estimated_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub experiments: Vec<PlanEntry>,
    pub total_instances: usize,
    pub total_estimated_tokens: u64,
}

/// Rough token count: four characters per prompt token plus the requested
/// completion positions.
pub fn estimate_tokens(prompt: &str, params: DecodeParams) -> u64 {
    prompt.len().div_ceil(4) as u64 + u64::from(params.positions)
}

pub fn plan(cfg: &RunConfig) -> Result<Plan, PipelineError> {
    let batteries = build_batteries(cfg)?;
    let experiments: Vec<PlanEntry> = cfg
        .experiments
        .iter()
        .zip(&batteries)
        .map(|(exp, b)| PlanEntry {
            experiment_id: b.experiment_id.clone(),
            kind: b.design.kind,
            instances: b.len(),
            staged: b.design.spacing.is_some(),
            conditions: b.condition_counts(),
            estimated_tokens: b.instances.iter().map(|i| estimate_tokens(&i.rendered_text, decode_params(exp, i))).sum(),
        })
        .collect();
    Ok(Plan {
        total_instances: experiments.iter().map(|e| e.instances).sum(),
        total_estimated_tokens: experiments.iter().map(|e| e.estimated_tokens).sum(),
        experiments,
    })
}

pub fn render_plan(plan: &Plan) -> String {
    let mut s = format!("{:<28} {:>10} {:>14}\n", "experiment", "instances", "est. tokens");
    for e in &plan.experiments {
        let mark = if e.staged { " (at most)" } else { "" };
        s.push_str(&format!("{:<28} {:>10} {:>14}{mark}\n", e.experiment_id, e.instances, e.estimated_tokens));
    }
    s.push_str(&format!("{:<28} {:>10} {:>14}\n", "total", plan.total_instances, plan.total_estimated_tokens));
    s
}

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_root: PathBuf,
    /// Defaults to `cache.jsonl` under `out_root`.
    pub cache_path: Option<PathBuf>,
    pub call_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub model: String,
    pub backend: BackendKind,
    pub started_at: u64,
    pub finished_at: u64,
    pub backend_calls: usize,
    pub cache_hits: usize,
    /// Requests issued per experiment.
    pub dispatched: BTreeMap<String, usize>,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub record: RunRecord,
    pub report: EffectReport,
}

fn backend_label(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::Live => "live",
        BackendKind::Mock => "mock",
    }
}

pub fn run_dir(cfg: &RunConfig, out_root: &Path) -> PathBuf {
    out_root.join(cfg.digest())
}

fn make_client(cfg: &RunConfig, batteries: &[Battery], opts: &RunOptions) -> Result<Client, PipelineError> {
    let backend = match cfg.backend_kind {
        BackendKind::Live => Backend::Live(LiveBackend::from_env(&cfg.backend)?),
        BackendKind::Mock => {
            let key = AnswerKey::from_instances(batteries.iter().flat_map(|b| &b.instances));
            Backend::Mock(MockBackend::new(cfg.mock.clone().unwrap_or_default(), key)?)
        }
    };
    let cache_path = opts.cache_path.clone().unwrap_or_else(|| opts.out_root.join("cache.jsonl"));
    let cache = Arc::new(Cache::open(cache_path)?);
    let client = Client::new(backend, Some(cache));
    Ok(match opts.call_budget {
        Some(n) => client.with_call_budget(n),
        None => client,
    })
}

async fn dispatch_scored(
    client: &Client,
    exp: &ExperimentConfig,
    instances: &[PromptInstance],
    dopts: DispatchOptions,
) -> Result<(Vec<Observation>, usize), PipelineError> {
    let jobs: Vec<(String, DecodeParams)> =
        instances.iter().map(|i| (i.rendered_text.clone(), decode_params(exp, i))).collect();
    let report = dispatch(client, &jobs, dopts).await?;
    let completions: Vec<_> = report.outcomes.into_iter().map(Result::ok).collect();
    Ok((analysis::score_all(instances, &completions)?, report.failures))
}

/// Dispatches one battery. Staged batteries go level by level, each level
/// only for items the stop rule keeps.
async fn run_battery(
    client: &Client,
    exp: &ExperimentConfig,
    battery: &Battery,
    dopts: DispatchOptions,
) -> Result<(Vec<Observation>, usize, usize), PipelineError> {
    if battery.design.spacing.is_none() {
        let (obs, failures) = dispatch_scored(client, exp, &battery.instances, dopts).await?;
        return Ok((obs, battery.len(), failures));
    }
    let mut observations = Vec::new();
    let mut dispatched = 0;
    let mut failures = 0;
    let mut level = first_level(battery);
    while !level.is_empty() {
        let (obs, f) = dispatch_scored(client, exp, &level, dopts).await?;
        dispatched += level.len();
        failures += f;
        let scored: Vec<(&PromptInstance, Option<f64>)> = level.iter().zip(&obs).map(|(i, o)| (i, o.value)).collect();
        let next = apply_stop_rule(battery, &scored);
        observations.extend(obs);
        level = match next {
            StopStep::Next { instances, .. } => instances,
            StopStep::Done => Vec::new(),
        };
    }
    Ok((observations, dispatched, failures))
}

/// Runs every configured experiment, persists observations under
/// `out_root/<config digest>/` and writes the reports there.
pub async fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let started_at = now_secs();
    let batteries = build_batteries(cfg)?;
    let client = make_client(cfg, &batteries, opts)?;
    let dir = run_dir(cfg, &opts.out_root);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let config_path = dir.join("config.json");
    let config_json = serde_json::to_string_pretty(cfg).map_err(json_err(&config_path))?;
    fs::write(&config_path, config_json + "\n").map_err(io_err(&config_path))?;

    let dopts = DispatchOptions::from(&cfg.backend);
    let mut observations = Vec::new();
    let mut dispatched = BTreeMap::new();
    let mut failures = 0;
    for (exp, battery) in cfg.experiments.iter().zip(&batteries) {
        log::info!("{}: {} instances", battery.experiment_id, battery.len());
        let (obs, n, f) = run_battery(&client, exp, battery, dopts).await?;
        observations.extend(obs);
        dispatched.insert(battery.experiment_id.clone(), n);
        failures += f;
    }

    write_observations(&dir, &observations)?;
    let record = RunRecord {
        config_digest: cfg.digest(),
        model: client.backend().model_name().to_string(),
        backend: cfg.backend_kind,
        started_at,
        finished_at: now_secs(),
        backend_calls: client.backend_calls(),
        cache_hits: client.cache_hits(),
        dispatched,
        failures,
    };
    let run_path = dir.join("run.json");
    let run_json = serde_json::to_string_pretty(&record).map_err(json_err(&run_path))?;
    fs::write(&run_path, run_json + "\n").map_err(io_err(&run_path))?;

    let report = analyze_batteries(cfg, &batteries, &observations, &record.model)?;
    report::write_report_files(&report, &dir)?;
    Ok(RunSummary { run_dir: dir, record, report })
}

fn write_observations(dir: &Path, observations: &[Observation]) -> Result<(), PipelineError> {
    let jsonl = dir.join("observations.jsonl");
    let mut out = std::io::BufWriter::new(fs::File::create(&jsonl).map_err(io_err(&jsonl))?);
    for o in observations {
        let line = serde_json::to_string(o).map_err(json_err(&jsonl))?;
        writeln!(out, "{line}").map_err(io_err(&jsonl))?;
    }
    out.flush().map_err(io_err(&jsonl))?;
    let csv_path = dir.join("observations.csv");
    let f = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    analysis::write_observations_csv(f, observations)?;
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<Vec<Observation>, PipelineError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(json_err(path))?);
        }
    }
    Ok(out)
}

fn analyze_batteries(
    cfg: &RunConfig,
    batteries: &[Battery],
    observations: &[Observation],
    model: &str,
) -> Result<EffectReport, PipelineError> {
    let mut by_exp: BTreeMap<&str, Vec<Observation>> = BTreeMap::new();
    for o in observations {
        by_exp.entry(o.experiment_id.as_str()).or_default().push(o.clone());
    }
    let analyses = batteries
        .iter()
        .map(|b| {
            let obs = by_exp.get(b.experiment_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            analysis::analyze(b, obs, &cfg.analysis)
        })
        .collect::<Result<Vec<ExperimentAnalysis>, _>>()?;
    let meta = RunMeta {
        model: model.to_string(),
        backend: backend_label(cfg.backend_kind).into(),
        config_digest: cfg.digest(),
        run_valid: None,
        assumptions: report::default_assumptions(),
    };
    Ok(EffectReport::new(meta, analyses))
}

/// Re-analyzes a run directory from its stored config and observations and
/// rewrites the report files.
pub fn analyze_dir(dir: &Path) -> Result<EffectReport, PipelineError> {
    let obs_path = dir.join("observations.jsonl");
    let config_path = dir.join("config.json");
    if !obs_path.is_file() || !config_path.is_file() {
        return Err(PipelineError::Empty(format!("{} has no scored observations", dir.display())));
    }
    let cfg = RunConfig::load(&config_path)?;
    let observations = read_observations(&obs_path)?;
    if observations.is_empty() {
        return Err(PipelineError::Empty(format!("{} is empty", obs_path.display())));
    }
    let model = match fs::read_to_string(dir.join("run.json")) {
        Ok(text) => serde_json::from_str::<RunRecord>(&text).map_err(json_err(&dir.join("run.json")))?.model,
        Err(_) => String::from("unknown"),
    };
    let batteries = build_batteries(&cfg)?;
    let report = analyze_batteries(&cfg, &batteries, &observations, &model)?;
    report::write_report_files(&report, dir)?;
    Ok(report)
}

/// Re-renders the report artifacts from a stored `report.json`.
pub fn rerender(dir: &Path) -> Result<EffectReport, PipelineError> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|_| PipelineError::Empty(format!("{} not found", path.display())))?;
    let report = report::import_json(&text)?;
    report::write_report_files(&report, dir)?;
    Ok(report)
}

/// Planted-effect sweep over a priming battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateOptions {
    /// Planted related-minus-unrelated differences.
    pub deltas: Vec<f64>,
    pub seeds: u64,
    pub noise: f64,
    pub base: f64,
    pub variation: PrimingVariation,
    pub lengths: Vec<usize>,
    pub spacings: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triples: Option<PathBuf>,
    pub targets_per_length: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            deltas: vec![0.0, 0.02, 0.05, 0.1],
            seeds: 100,
            noise: 0.05,
            base: 0.8,
            variation: PrimingVariation::Sentence,
            lengths: vec![4, 5, 6],
            spacings: vec![5, 10, 15],
            triples: None,
            targets_per_length: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRate {
    pub delta: f64,
    pub runs: u64,
    /// Fraction with p < 0.05; for positive deltas the effect must also
    /// point the planted way.
    pub rate_05: f64,
    pub rate_001: f64,
    pub mean_difference: f64,
}

/// Plants each delta in the mock across `seeds` noise draws and reports how
/// often the pooled t-test detects it.
pub fn mock_validate(opts: &ValidateOptions) -> Result<Vec<DetectionRate>, PipelineError> {
    let pcfg = PrimingConfig {
        variation: opts.variation,
        lengths: opts.lengths.clone(),
        spacings: opts.spacings.clone(),
        catch_trials: 0,
        targets_per_length: opts.targets_per_length,
        triples: opts.triples.clone(),
    };
    let exp = ExperimentConfig::Priming(pcfg);
    let battery = build_battery(&exp, None)?;
    let key = AnswerKey::from_instances(&battery.instances);
    let aopts = AnalysisOptions::default();
    let mut out = Vec::new();
    for &delta in &opts.deltas {
        let (mut hit05, mut hit001, mut diff) = (0u64, 0u64, 0.0);
        for seed in 0..opts.seeds {
            let plant = PlantSpec { base: opts.base, shift: delta / 2.0, noise: opts.noise, seed, ..Default::default() };
            let mock = MockBackend::new(plant, key.clone())?;
            let observations = battery
                .instances
                .iter()
                .map(|i| Ok(analysis::score(i, &mock.complete(&i.rendered_text, decode_params(&exp, i))?)))
                .collect::<Result<Vec<_>, BackendError>>()?;
            let a = analysis::analyze(&battery, &observations, &aopts)?;
            if let Some(t) = a.ttest() {
                let d = t.mean_b - t.mean_a;
                diff += d;
                let direction_ok = delta == 0.0 || d.signum() == delta.signum();
                hit05 += u64::from(t.p < 0.05 && direction_ok);
                hit001 += u64::from(t.p < 0.001 && direction_ok);
            }
        }
        let n = opts.seeds.max(1) as f64;
        out.push(DetectionRate {
            delta,
            runs: opts.seeds,
            rate_05: hit05 as f64 / n,
            rate_001: hit001 as f64 / n,
            mean_difference: diff / n,
        });
    }
    Ok(out)
}

pub fn render_detection(rates: &[DetectionRate]) -> String {
    let mut s = format!("{:>8} {:>6} {:>10} {:>10} {:>12}\n", "delta", "runs", "p<0.05", "p<0.001", "mean diff");
    for r in rates {
        s.push_str(&format!(
            "{:>8.3} {:>6} {:>10.3} {:>10.3} {:>12.4}\n",
            r.delta, r.runs, r.rate_05, r.rate_001, r.mean_difference
        ));
    }
    s
}
