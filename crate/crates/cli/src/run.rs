use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lsidm::diagnostics::{
    cumulative_hazard_curves, empirical_bayes_all, hazard_ratio_table, marker_fit_curve, nelson_aalen_naive,
    variability_histograms, EbMode, Histogram,
};
use lsidm::estimation::run_pipeline;
use lsidm::io::{load_dataset, write_events, write_longitudinal, DatasetBundle};
use lsidm::simulation::{generate_dataset, scenario_preset};
use lsidm::study::{replicate_study, Estimator, StudyConfig};
use lsidm::{FitResult, ModelSpec, SubjectData};
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};

/// Contents of `fit.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    pub model: ModelSpec,
    pub fit: FitResult,
    pub naive: Option<FitResult>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: Command,
    version: &'static str,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
    outputs: Vec<String>,
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if let Some(n) = cfg.workers {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let outputs = match cfg.command {
        Command::Fit => fit(cfg)?,
        Command::Simulate => simulate(cfg)?,
        Command::Study => study(cfg)?,
        Command::Gof => gof(cfg)?,
    };
    let manifest = Manifest {
        command: cfg.command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg,
        outputs,
    };
    write_text(&cfg.out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load(cfg: &RunConfig, spec: &ModelSpec) -> Result<DatasetBundle> {
    let (Some(l), Some(e)) = (&cfg.longitudinal, &cfg.events) else {
        bail!("input files missing");
    };
    let bundle = load_dataset(l, e, &spec.time_scale)?;
    if bundle.subjects.is_empty() {
        bail!("no usable subjects in {} and {}", l.display(), e.display());
    }
    Ok(bundle)
}

/// Default model sized to the covariates found in the data.
fn default_model(cfg: &RunConfig) -> Result<(ModelSpec, DatasetBundle)> {
    let base = cfg.model.clone().unwrap_or_default();
    let bundle = load(cfg, &base)?;
    if cfg.model.is_some() {
        return Ok((base, bundle));
    }
    let first: &SubjectData = &bundle.subjects[0];
    let mut spec = base.with_hazard_covariates(first.event.covariates[0].len());
    spec.n_marker_covariates = first.marker_covariates.len();
    Ok((spec, bundle))
}

fn fit(cfg: &RunConfig) -> Result<Vec<String>> {
    let (spec, bundle) = default_model(cfg)?;
    log::info!("fitting {} subjects", bundle.subjects.len());
    let mut pipeline = cfg.pipeline.clone();
    pipeline.naive = cfg.naive;
    let out = run_pipeline(&bundle.subjects, &spec, &pipeline)?;
    let mut files = vec!["fit.json".to_string(), "ingestion.json".into(), "summary.txt".into()];
    let file = FitFile { model: spec.clone(), fit: out.fit, naive: out.naive };
    write_text(&cfg.out.join("fit.json"), &(serde_json::to_string_pretty(&file)? + "\n"))?;
    write_text(&cfg.out.join("ingestion.json"), &(serde_json::to_string_pretty(&bundle.report)? + "\n"))?;
    let hr = match hazard_ratio_table(&file.fit, &spec) {
        Ok(rows) => {
            let mut w = csv::Writer::from_path(cfg.out.join("hr_table.csv"))?;
            w.write_record(["parameter", "estimate", "se", "hr", "ci_low", "ci_high", "p_value"])?;
            for r in &rows {
                w.write_record([
                    r.name.clone(),
                    r.estimate.to_string(),
                    r.std_error.to_string(),
                    r.hazard_ratio.to_string(),
                    r.ci_low.to_string(),
                    r.ci_high.to_string(),
                    r.p_value.to_string(),
                ])?;
            }
            w.flush()?;
            files.push("hr_table.csv".into());
            Some(rows)
        }
        Err(e) => {
            log::warn!("{e}");
            None
        }
    };
    write_text(&cfg.out.join("summary.txt"), &summary(&file, bundle.subjects.len(), hr.is_some()))?;
    files.sort();
    Ok(files)
}

fn summary(file: &FitFile, n: usize, hr_written: bool) -> String {
    let f = &file.fit;
    let mut s = format!(
        "subjects: {n}\nlog-likelihood: {:.4}\nstatus: {:?} after {} iterations (S = {})\n",
        f.loglik, f.status, f.iterations, f.s_used
    );
    s.push_str(&format!(
        "criteria: parameters {:.2e}, function {:.2e}, RDM {:.2e}\n",
        f.criteria.param, f.criteria.function, f.criteria.rdm
    ));
    for st in &f.steps {
        s.push_str(&format!(
            "  step {} {:<24} S={:<5} loglik {:>14.4} {:?} ({} iterations)\n",
            st.step, st.label, st.draws, st.loglik, st.status, st.iterations
        ));
    }
    match f.hessian_negative_definite {
        Some(false) => s.push_str("Hessian not negative definite: standard errors withheld\n"),
        None => s.push_str("standard errors not computed\n"),
        Some(true) => {}
    }
    if !hr_written {
        s.push_str("hazard-ratio table withheld\n");
    }
    s.push_str(&format!("\n{:<16} {:>11} {:>10}", "parameter", "estimate", "se"));
    if file.naive.is_some() {
        s.push_str(&format!(" {:>11}", "naive"));
    }
    s.push('\n');
    for (i, name) in f.names.iter().enumerate() {
        let se = f.std_errors.as_ref().and_then(|v| v[i]).map_or("-".to_string(), |x| format!("{x:.4}"));
        let fixed = if f.free[i] { "" } else { " (fixed)" };
        s.push_str(&format!("{name:<16} {:>11.4} {se:>10}", f.estimates[i]));
        if let Some(nv) = &file.naive {
            s.push_str(&format!(" {:>11.4}", nv.estimates[i]));
        }
        s.push_str(fixed);
        s.push('\n');
    }
    s
}

fn simulate(cfg: &RunConfig) -> Result<Vec<String>> {
    let preset = scenario_preset(&cfg.scenario)?;
    let data = generate_dataset(&preset, &cfg.generator, cfg.subjects, cfg.replicate)?;
    let scale = &preset.spec.time_scale;
    write_longitudinal(&cfg.out.join("longitudinal.csv"), &data.subjects, scale)?;
    write_events(&cfg.out.join("events.csv"), &data.subjects, scale)?;
    Ok(vec!["events.csv".into(), "longitudinal.csv".into()])
}

fn study(cfg: &RunConfig) -> Result<Vec<String>> {
    let preset = scenario_preset(&cfg.scenario)?;
    let mut estimators = vec![Estimator::IntervalCensored];
    if cfg.naive {
        estimators.push(Estimator::Naive);
    }
    let study = StudyConfig {
        replicates: cfg.replicates,
        subjects: cfg.subjects,
        estimators,
        pipeline: cfg.pipeline.clone(),
        generator: cfg.generator.clone(),
        checkpoint: cfg.checkpoint.clone(),
    };
    let report = replicate_study(&preset, &study)?;
    report.write_csv(&cfg.out.join("study_report.csv"))?;
    write_text(&cfg.out.join("study_report.txt"), &report.to_table())?;
    Ok(vec!["study_report.csv".into(), "study_report.txt".into()])
}

fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["low", "high", "count"])?;
    for (k, c) in h.counts.iter().enumerate() {
        w.write_record([h.edges[k].to_string(), h.edges[k + 1].to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn gof(cfg: &RunConfig) -> Result<Vec<String>> {
    let path = cfg.fit.as_ref().context("gof requires --fit")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: FitFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let spec = &file.model;
    let params = &file.fit.theta_hat;
    let bundle = load(cfg, spec)?;
    let data = &bundle.subjects;
    let scale = &spec.time_scale;

    let eb_marker = empirical_bayes_all(spec, data, params, EbMode::MarkerOnly)?;
    let bins = marker_fit_curve(spec, data, &eb_marker, params, cfg.bin_width_years)?;
    let mut w = csv::Writer::from_path(cfg.out.join("gof_marker.csv"))?;
    w.write_record(["age_low", "age_high", "n", "mean_observed", "ci_low", "ci_high", "mean_predicted"])?;
    for b in &bins {
        w.write_record([
            b.age_low.to_string(),
            b.age_high.to_string(),
            b.n.to_string(),
            b.mean_observed.to_string(),
            b.ci_low.to_string(),
            b.ci_high.to_string(),
            b.mean_predicted.to_string(),
        ])?;
    }
    w.flush()?;

    let eb = empirical_bayes_all(spec, data, params, EbMode::Joint)?;
    let unconverged = eb.iter().filter(|e| !e.converged).count();
    if unconverged > 0 {
        log::warn!("{unconverged} empirical Bayes searches did not converge");
    }
    let mut w = csv::Writer::from_path(cfg.out.join("gof_eb.csv"))?;
    let q = spec.n_effects();
    let mut header = vec!["id".to_string(), "sigma".into(), "kappa".into(), "converged".into()];
    header.extend((1..=q).map(|k| format!("u{k}")));
    w.write_record(&header)?;
    for e in &eb {
        let mut rec = vec![e.id.clone(), e.sigma.to_string(), e.kappa.to_string(), e.converged.to_string()];
        rec.extend(e.effects.to_vec().iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    // One-year grid from the origin of the time scale to the last exit.
    let last = data.iter().map(|s| s.event.terminal).fold(0.0, f64::max);
    let step = scale.span(1.0);
    let n_grid = (last / step).ceil() as usize + 1;
    let grid: Vec<f64> = (0..n_grid).map(|k| k as f64 * step).collect();
    let effects: Vec<_> = eb.iter().map(|e| e.effects.clone()).collect();
    let predicted = cumulative_hazard_curves(spec, data, &effects, params, &grid)?;
    let reference = nelson_aalen_naive(data, &grid);
    let mut w = csv::Writer::from_path(cfg.out.join("gof_hazards.csv"))?;
    w.write_record(["transition", "age", "predicted", "nelson_aalen_naive"])?;
    for (p, r) in predicted.iter().zip(&reference) {
        for (k, t) in p.grid.iter().enumerate() {
            w.write_record([
                p.transition.label().to_string(),
                scale.age_for(*t).to_string(),
                p.cumulative[k].to_string(),
                r.cumulative[k].to_string(),
            ])?;
        }
    }
    w.flush()?;

    let (hs, hk) = variability_histograms(&eb, 20);
    write_histogram(&cfg.out.join("gof_sigma_histogram.csv"), &hs)?;
    write_histogram(&cfg.out.join("gof_kappa_histogram.csv"), &hk)?;
    Ok(vec![
        "gof_eb.csv".into(),
        "gof_hazards.csv".into(),
        "gof_kappa_histogram.csv".into(),
        "gof_marker.csv".into(),
        "gof_sigma_histogram.csv".into(),
    ])
}
