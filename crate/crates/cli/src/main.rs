use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cogfx_core::config::{BackendKind, RunConfig};
use cogfx_core::pipeline::{self, PipelineError, RunOptions, ValidateOptions};
use cogfx_core::report;

#[derive(Parser)]
#[command(name = "cogfx", version, about = "Cognitive-effect experiments on language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-experiment query counts and estimated token usage.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Dispatch, score and analyze every configured experiment.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Stop after this many backend calls, as if interrupted.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Recompute the reports of a run directory from its observations.
    Analyze {
        run_dir: PathBuf,
    },
    /// Re-render the report files from a stored report.json.
    Report {
        run_dir: PathBuf,
    },
    /// Sweep planted effects through the mock backend and report detection rates.
    MockValidate {
        /// JSON file with sweep options; built-in defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Live,
    Mock,
}

impl Common {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(b) = self.backend {
            cfg.backend_kind = match b {
                BackendArg::Live => BackendKind::Live,
                BackendArg::Mock => BackendKind::Mock,
            };
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_validate_options(path: &Path) -> Result<ValidateOptions, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
    let mut opts: ValidateOptions =
        serde_json::from_str(&text).map_err(|source| PipelineError::Json { path: path.into(), source })?;
    if let Some(t) = &opts.triples {
        if t.is_relative() {
            opts.triples = Some(path.parent().unwrap_or(Path::new(".")).join(t));
        }
    }
    Ok(opts)
}

async fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Plan { common, json } => {
            let plan = pipeline::plan(&common.load()?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&plan).expect("plan serializes"));
            } else {
                print!("{}", pipeline::render_plan(&plan));
            }
        }
        Command::Run { common, cache, out, stop_after } => {
            let cfg = common.load()?;
            let opts = RunOptions { out_root: out, cache_path: cache, call_budget: stop_after };
            let summary = pipeline::run(&cfg, &opts).await?;
            print!("{}", report::render_table(&summary.report));
            eprintln!(
                "run directory {} ({} backend calls, {} cache hits)",
                summary.run_dir.display(),
                summary.record.backend_calls,
                summary.record.cache_hits
            );
        }
        Command::Analyze { run_dir } => {
            let r = pipeline::analyze_dir(&run_dir)?;
            print!("{}", report::render_table(&r));
        }
        Command::Report { run_dir } => {
            let r = pipeline::rerender(&run_dir)?;
            print!("{}", report::render_table(&r));
        }
        Command::MockValidate { config, deltas, seeds, json } => {
            let mut opts = match config {
                Some(p) => load_validate_options(&p)?,
                None => ValidateOptions::default(),
            };
            if let Some(d) = deltas {
                opts.deltas = d;
            }
            if let Some(s) = seeds {
                opts.seeds = s;
            }
            let rates = pipeline::mock_validate(&opts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rates).expect("rates serialize"));
            } else {
                print!("{}", pipeline::render_detection(&rates));
            }
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline_exit(&e))
        }
    }
}

fn pipeline_exit(e: &PipelineError) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(1)
}
