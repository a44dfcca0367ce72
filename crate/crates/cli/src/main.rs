//! `lsidm`: fit, simulate, replicate and check joint location-scale
//! illness-death models from the command line.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Command, FileConfig, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "lsidm", version, about = "Joint location-scale mixed model with an interval-censored illness-death model")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Fit the model to a longitudinal and an events CSV.
    Fit(FitArgs),
    /// Generate one dataset from a scenario.
    Simulate(SimulateArgs),
    /// Monte Carlo replication study of a scenario.
    Study(StudyArgs),
    /// Goodness-of-fit curves and histograms for a stored fit.
    Gof(GofArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML file with `seed`, `scenario`, `[pipeline]`, `[generator]`, ...
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// QMC draws for the initial fits and step 2.
    #[arg(long)]
    s1: Option<usize>,
    /// QMC draws for step 3 and the standard errors.
    #[arg(long)]
    s2: Option<usize>,
    /// Digital-shift identifier of the Sobol sequence (0 = unscrambled).
    #[arg(long)]
    scramble: Option<u64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    longitudinal: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// Also fit the midpoint-imputation comparator.
    #[arg(long)]
    naive: bool,
    /// Skip the Hessian and standard errors.
    #[arg(long)]
    no_se: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    subjects: Option<usize>,
    /// Replicate index; selects the random stream under the seed.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    subjects: Option<usize>,
    /// JSON-lines file of finished replicates, reused on restart.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Fit the interval-censored estimator only.
    #[arg(long)]
    no_naive: bool,
}

#[derive(Args, Debug)]
struct GofArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    longitudinal: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// `fit.json` written by `lsidm fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Width of the age bins of the marker curve, in years.
    #[arg(long)]
    bin_width: Option<f64>,
}

fn merge(common: &Common, command: Command, file: FileConfig) -> RunConfig {
    let mut pipeline = file.pipeline;
    if let Some(s) = common.s1 {
        pipeline.s1 = s;
    }
    if let Some(s) = common.s2 {
        pipeline.s2 = s;
    }
    if let Some(s) = common.scramble {
        pipeline.scramble = s;
    }
    if let Some(m) = common.max_iterations {
        pipeline.optimizer.max_iterations = m;
    }
    let workers = common.workers.or(file.workers);
    pipeline.workers = workers.or(pipeline.workers);
    let mut generator = file.generator;
    let seed = common.seed.or(file.seed).unwrap_or(generator.seed);
    generator.seed = seed;
    RunConfig {
        command,
        longitudinal: None,
        events: None,
        fit: None,
        out: common.out.clone(),
        scenario: file.scenario.unwrap_or_else(|| "A".into()),
        seed,
        workers,
        subjects: file.subjects.unwrap_or(0),
        replicates: file.replicates.unwrap_or(500),
        replicate: 0,
        bin_width_years: file.bin_width_years.unwrap_or(3.0),
        checkpoint: None,
        model: file.model,
        naive: file.naive.unwrap_or(false),
        pipeline,
        generator,
    }
}

fn build(cli: Cli) -> anyhow::Result<RunConfig> {
    let (common, command) = match &cli.command {
        Cmd::Fit(a) => (&a.common, Command::Fit),
        Cmd::Simulate(a) => (&a.common, Command::Simulate),
        Cmd::Study(a) => (&a.common, Command::Study),
        Cmd::Gof(a) => (&a.common, Command::Gof),
    };
    let file = FileConfig::load(common.config.as_deref())?;
    let mut cfg = merge(common, command, file);
    match cli.command {
        Cmd::Fit(a) => {
            cfg.longitudinal = Some(a.longitudinal);
            cfg.events = Some(a.events);
            cfg.naive |= a.naive;
            if a.no_se {
                cfg.pipeline.compute_se = false;
            }
        }
        Cmd::Simulate(a) => {
            cfg.scenario = a.scenario.unwrap_or(cfg.scenario);
            cfg.subjects = a.subjects.unwrap_or(cfg.subjects);
            cfg.replicate = a.replicate;
        }
        Cmd::Study(a) => {
            cfg.scenario = a.scenario.unwrap_or(cfg.scenario);
            cfg.subjects = a.subjects.unwrap_or(cfg.subjects);
            cfg.replicates = a.replicates.unwrap_or(cfg.replicates);
            cfg.checkpoint = a.checkpoint;
            cfg.naive = !a.no_naive;
        }
        Cmd::Gof(a) => {
            cfg.longitudinal = Some(a.longitudinal);
            cfg.events = Some(a.events);
            cfg.fit = Some(a.fit);
            cfg.bin_width_years = a.bin_width.unwrap_or(cfg.bin_width_years);
        }
    }
    if cfg.subjects == 0 && matches!(cfg.command, Command::Simulate | Command::Study) {
        cfg.subjects = lsidm::scenario_preset(&cfg.scenario)?.n_subjects;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let out = match &cli.command {
        Cmd::Fit(a) => a.common.out.clone(),
        Cmd::Simulate(a) => a.common.out.clone(),
        Cmd::Study(a) => a.common.out.clone(),
        Cmd::Gof(a) => a.common.out.clone(),
    };
    match build(cli).and_then(|cfg| run::run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "status": "error",
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            let text = serde_json::to_string_pretty(&report).unwrap_or_else(|_| e.to_string());
            eprintln!("{text}");
            if std::fs::create_dir_all(&out).is_ok() {
                let _ = std::fs::write(out.join("error.json"), format!("{text}\n"));
            }
            ExitCode::FAILURE
        }
    }
}
