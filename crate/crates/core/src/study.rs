//! Monte Carlo replication harness with checkpoint/resume.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{run_pipeline, FitResult, PipelineConfig};
use crate::model::ParameterLayout;
use crate::simulation::{generate_dataset, GeneratorConfig, ScenarioPreset};

const Z975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    IntervalCensored,
    Naive,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::IntervalCensored => "interval-censored",
            Estimator::Naive => "naive",
        }
    }
}

/// What a replicate contributes to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    pub estimates: Vec<f64>,
    pub std_errors: Option<Vec<Option<f64>>>,
    pub converged: bool,
    pub loglik: f64,
    /// Every accepted optimizer step, in every step of the pipeline, was
    /// non-decreasing in log-likelihood.
    pub monotone: bool,
}

impl ReplicateFit {
    pub fn from_fit(fit: &FitResult) -> Self {
        let monotone = fit
            .steps
            .iter()
            .all(|s| s.trace.windows(2).all(|w| w[1].value >= w[0].value));
        ReplicateFit {
            estimates: fit.estimates.clone(),
            std_errors: fit.std_errors.clone(),
            converged: fit.converged,
            loglik: fit.loglik,
            monotone,
        }
    }
}

/// One line of the checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub interval_censored: Option<ReplicateFit>,
    pub naive: Option<ReplicateFit>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub ese: Option<f64>,
    pub ase: Option<f64>,
    /// Percentage of 95% Wald intervals containing the truth.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBlock {
    pub estimator: Estimator,
    pub converged: usize,
    pub attempted: usize,
    pub all_monotone: bool,
    pub rows: Vec<ParameterRow>,
}

impl EstimatorBlock {
    pub fn row(&self, name: &str) -> Option<&ParameterRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub scenario: String,
    pub replicates: usize,
    pub subjects: usize,
    pub failed: usize,
    pub blocks: Vec<EstimatorBlock>,
}

impl StudyReport {
    pub fn block(&self, estimator: Estimator) -> Option<&EstimatorBlock> {
        self.blocks.iter().find(|b| b.estimator == estimator)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["estimator", "parameter", "truth", "mean", "ese", "ase", "coverage", "converged", "attempted"])?;
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for b in &self.blocks {
            for r in &b.rows {
                w.write_record([
                    b.estimator.label().to_string(),
                    r.name.clone(),
                    format!("{:.6}", r.truth),
                    format!("{:.6}", r.mean),
                    fmt(r.ese),
                    fmt(r.ase),
                    fmt(r.coverage),
                    b.converged.to_string(),
                    b.attempted.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned table with columns θ, θ̂, ESE, ASE, CR.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "Scenario {}: {} replicates x {} subjects ({} failed)\n",
            self.scenario, self.replicates, self.subjects, self.failed
        );
        let fmt = |v: Option<f64>, d: usize| v.map_or("-".to_string(), |x| format!("{x:.d$}"));
        for b in &self.blocks {
            out.push_str(&format!(
                "\n{} estimator ({} of {} converged)\n{:<16} {:>9} {:>9} {:>9} {:>9} {:>7}\n",
                b.estimator.label(),
                b.converged,
                b.attempted,
                "parameter",
                "theta",
                "estimate",
                "ESE",
                "ASE",
                "CR"
            ));
            for r in &b.rows {
                out.push_str(&format!(
                    "{:<16} {:>9.3} {:>9} {:>9} {:>9} {:>7}\n",
                    r.name,
                    r.truth,
                    fmt(Some(r.mean).filter(|m| m.is_finite()), 3),
                    fmt(r.ese, 3),
                    fmt(r.ase, 3),
                    fmt(r.coverage, 1)
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub replicates: usize,
    pub subjects: usize,
    pub estimators: Vec<Estimator>,
    pub pipeline: PipelineConfig,
    pub generator: GeneratorConfig,
    /// JSON-lines file of finished replicates; existing lines are reused.
    pub checkpoint: Option<PathBuf>,
}

fn read_checkpoint(path: &Path) -> Result<Vec<ReplicateOutcome>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(o) => out.push(o),
            // A partially written last line from an interrupted run.
            Err(e) => log::warn!("{}: ignoring line {}: {e}", path.display(), k + 1),
        }
    }
    Ok(out)
}

/// Generates, fits and summarizes `cfg.replicates` datasets. Replicate `r`
/// always uses the streams of `(seed, r)`, so a resumed run matches an
/// uninterrupted one.
pub fn replicate_study(preset: &ScenarioPreset, cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.replicates == 0 || cfg.subjects == 0 {
        return Err(Error::InvalidInput("a study needs at least one replicate and one subject".into()));
    }
    let mut pipeline = cfg.pipeline.clone();
    pipeline.naive = cfg.estimators.contains(&Estimator::Naive);
    let mut outcomes: Vec<ReplicateOutcome> = match &cfg.checkpoint {
        Some(p) => read_checkpoint(p)?
            .into_iter()
            .filter(|o| (o.replicate as usize) < cfg.replicates)
            .collect(),
        None => Vec::new(),
    };
    outcomes.sort_by_key(|o| o.replicate);
    outcomes.dedup_by_key(|o| o.replicate);
    let mut sink = match &cfg.checkpoint {
        Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
        None => None,
    };
    for r in 0..cfg.replicates as u64 {
        if outcomes.iter().any(|o| o.replicate == r) {
            continue;
        }
        let start = std::time::Instant::now();
        let outcome = match generate_dataset(preset, &cfg.generator, cfg.subjects, r)
            .and_then(|d| run_pipeline(&d.subjects, &preset.spec, &pipeline))
        {
            Ok(out) => ReplicateOutcome {
                replicate: r,
                interval_censored: Some(ReplicateFit::from_fit(&out.fit)),
                naive: out.naive.as_ref().map(ReplicateFit::from_fit),
                error: None,
                seconds: start.elapsed().as_secs_f64(),
            },
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                ReplicateOutcome {
                    replicate: r,
                    interval_censored: None,
                    naive: None,
                    error: Some(e.to_string()),
                    seconds: start.elapsed().as_secs_f64(),
                }
            }
        };
        log::info!("replicate {r} finished in {:.1} s", outcome.seconds);
        if let Some(f) = sink.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&outcome)?)?;
            f.flush()?;
        }
        outcomes.push(outcome);
    }
    outcomes.sort_by_key(|o| o.replicate);
    Ok(summarize(preset, cfg, &outcomes))
}

/// Report over converged replicates only.
pub fn summarize(preset: &ScenarioPreset, cfg: &StudyConfig, outcomes: &[ReplicateOutcome]) -> StudyReport {
    let layout = ParameterLayout::new(&preset.spec);
    let truth = layout.pack(&preset.truth);
    let names = layout.names();
    let blocks = cfg
        .estimators
        .iter()
        .map(|&est| {
            let fits: Vec<&ReplicateFit> = outcomes
                .iter()
                .filter_map(|o| match est {
                    Estimator::IntervalCensored => o.interval_censored.as_ref(),
                    Estimator::Naive => o.naive.as_ref(),
                })
                .collect();
            let converged: Vec<&ReplicateFit> = fits.iter().copied().filter(|f| f.converged).collect();
            let rows = names
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let values: Vec<f64> = converged.iter().map(|f| f.estimates[k]).collect();
                    let n = values.len() as f64;
                    let mean = if values.is_empty() { f64::NAN } else { values.iter().sum::<f64>() / n };
                    let ese = (values.len() >= 2)
                        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
                    let with_se: Vec<(f64, f64)> = converged
                        .iter()
                        .filter_map(|f| Some((f.estimates[k], f.std_errors.as_ref()?[k]?)))
                        .collect();
                    let (ase, coverage) = if with_se.is_empty() {
                        (None, None)
                    } else {
                        let m = with_se.len() as f64;
                        let ase = with_se.iter().map(|p| p.1).sum::<f64>() / m;
                        let hits = with_se.iter().filter(|(e, s)| (e - truth[k]).abs() <= Z975 * s).count();
                        (Some(ase), Some(100.0 * hits as f64 / m))
                    };
                    ParameterRow { name: name.clone(), truth: truth[k], mean, ese, ase, coverage }
                })
                .collect();
            EstimatorBlock {
                estimator: est,
                converged: converged.len(),
                attempted: fits.len(),
                all_monotone: fits.iter().all(|f| f.monotone),
                rows,
            }
        })
        .collect();
    StudyReport {
        scenario: preset.name.clone(),
        replicates: cfg.replicates,
        subjects: cfg.subjects,
        failed: outcomes.iter().filter(|o| o.error.is_some()).count(),
        blocks,
    }
}
