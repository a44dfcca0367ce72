//! Maximum-likelihood estimation: the three-step pipeline, standard errors
//! and the naive midpoint comparator.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{EventRecord, SubjectData};
use crate::error::{Error, Result};
use crate::likelihood::LikelihoodEngine;
use crate::model::{
    BaselineParams, ModelSpec, ParamSlot, ParameterLayout, ParameterSet, Transition,
};
use crate::optim::{marquardt_levenberg, numeric_hessian, Criteria, OptimizerConfig, Status, TraceEntry};
use crate::qmc::QmcConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Draws for the initialization fits and step 2.
    pub s1: usize,
    /// Draws for step 3 and the standard errors.
    pub s2: usize,
    pub optimizer: OptimizerConfig,
    /// Relative step of the Hessian used for standard errors.
    pub se_h_rel: f64,
    pub scramble: u64,
    /// Stop after the marker-only fit of step 1.
    pub step1_only: bool,
    pub run_step2: bool,
    pub run_step3: bool,
    pub compute_se: bool,
    /// Also fit the naive comparator at `s2`.
    pub naive: bool,
    /// Starting values; when given, step 1 is skipped.
    pub start: Option<ParameterSet>,
    /// Positions of the flat parameter vector that are estimated; the rest
    /// stay at their starting values.
    pub free: Option<Vec<bool>>,
    /// Worker threads for likelihood evaluation; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            s1: 500,
            s2: 1000,
            optimizer: OptimizerConfig::default(),
            se_h_rel: 1e-3,
            scramble: 0,
            step1_only: false,
            run_step2: true,
            run_step3: true,
            compute_se: true,
            naive: false,
            start: None,
            free: None,
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s1 == 0 || self.s2 < self.s1 {
            return Err(Error::InvalidInput(format!(
                "draw counts must satisfy S2 >= S1 >= 1, got S1 = {}, S2 = {}",
                self.s1, self.s2
            )));
        }
        if !(self.se_h_rel > 0.0) {
            return Err(Error::InvalidInput("se_h_rel must be positive".into()));
        }
        self.optimizer.validate()
    }
}

/// Summary of one maximization inside the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub label: String,
    pub draws: usize,
    pub loglik: f64,
    pub status: Status,
    pub iterations: usize,
    pub evaluations: usize,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub free: Vec<bool>,
    pub theta_hat: ParameterSet,
    pub loglik: f64,
    /// Per parameter, `None` for parameters held fixed. Withheld entirely
    /// when the Hessian is not negative definite or was not computed.
    pub std_errors: Option<Vec<Option<f64>>>,
    /// `(-H)^{-1}` over the free parameters, in layout order.
    pub covariance_of_estimates: Option<Vec<Vec<f64>>>,
    pub hessian_negative_definite: Option<bool>,
    pub re_covariance: Vec<Vec<f64>>,
    pub re_covariance_se: Option<Vec<Vec<f64>>>,
    pub converged: bool,
    pub status: Status,
    pub criteria: Criteria,
    pub iterations: usize,
    pub s_used: usize,
    pub steps: Vec<StepSummary>,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.estimates[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.index_of(name)?;
        self.std_errors.as_ref()?[i]
    }
}

/// Standard errors from the Hessian of the log-likelihood at its maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardErrors {
    pub negative_definite: bool,
    pub se: Option<Vec<f64>>,
    pub covariance: Option<DMatrix<f64>>,
}

/// `(-H)^{-1}` and the square roots of its diagonal; nothing is returned
/// when `-H` is not positive definite.
pub fn standard_errors(hessian: &DMatrix<f64>) -> StandardErrors {
    let neg = -hessian;
    match neg.cholesky() {
        Some(ch) if hessian.iter().all(|v| v.is_finite()) => {
            let cov = ch.inverse();
            let se: Vec<f64> = cov.diagonal().iter().map(|v| v.sqrt()).collect();
            if se.iter().all(|v| v.is_finite()) {
                StandardErrors {
                    negative_definite: true,
                    se: Some(se),
                    covariance: Some(cov),
                }
            } else {
                StandardErrors { negative_definite: false, se: None, covariance: None }
            }
        }
        _ => StandardErrors { negative_definite: false, se: None, covariance: None },
    }
}

/// Delta-method standard errors of the entries of `L L'`.
///
/// `entries` lists the factor positions `(a, b)` whose estimates have
/// covariance `cov` (same order); all other factor entries are treated as
/// known.
pub fn delta_method_re_covariance(
    chol: &DMatrix<f64>,
    entries: &[(usize, usize)],
    cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = chol.nrows();
    if cov.nrows() != entries.len() || cov.ncols() != entries.len() {
        return Err(Error::Dimension(format!(
            "{} factor entries but a {}x{} covariance",
            entries.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    if entries.iter().any(|&(a, b)| b > a || a >= d) {
        return Err(Error::InvalidInput("factor entries must lie in the lower triangle".into()));
    }
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let grad = DVector::from_iterator(
                entries.len(),
                entries.iter().map(|&(a, b)| {
                    let mut g = 0.0;
                    if i == a {
                        g += chol[(j, b)];
                    }
                    if j == a {
                        g += chol[(i, b)];
                    }
                    g
                }),
            );
            let var = (grad.transpose() * cov * &grad)[(0, 0)];
            out[(i, j)] = var.max(0.0).sqrt();
            out[(j, i)] = out[(i, j)];
        }
    }
    Ok(out)
}

/// Midpoint imputation of onset times, undiagnosed deaths kept as direct
/// healthy → dead transitions. Marker data are unchanged.
pub fn naive_dataset_transform(dataset: &[SubjectData]) -> Vec<SubjectData> {
    dataset
        .iter()
        .map(|s| {
            let e = &s.event;
            let event = match e.diagnosis {
                Some(r) => {
                    let mid = 0.5 * (e.last_healthy + r);
                    EventRecord { last_healthy: mid, diagnosis: Some(mid), ..e.clone() }
                }
                None if e.death => EventRecord { last_healthy: e.terminal, ..e.clone() },
                None => e.clone(),
            };
            SubjectData { event, ..s.clone() }
        })
        .collect()
}

fn marker_starts(spec: &ModelSpec, dataset: &[SubjectData]) -> ParameterSet {
    let mut params = ParameterSet::initial(spec);
    let p = spec.n_fixed();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    let mut n_total = 0usize;
    for s in dataset {
        for v in &s.visits {
            spec.fixed_row(v.time, &s.marker_covariates, &mut row);
            let x = DVector::from_column_slice(&row);
            for y in &v.measurements {
                xtx += &x * x.transpose();
                xty += &x * *y;
                n_total += 1;
            }
        }
    }
    if n_total > p {
        if let Some(ch) = xtx.cholesky() {
            params.beta = ch.solve(&xty).iter().copied().collect();
        }
    }
    // Residual variance split into visit-mean and within-visit parts.
    let (mut within, mut within_df) = (0.0, 0.0);
    let (mut between, mut between_n) = (0.0, 0.0);
    let mut subject_means = Vec::new();
    for s in dataset {
        let mut resid_sum = 0.0;
        let mut count = 0.0;
        for v in &s.visits {
            spec.fixed_row(v.time, &s.marker_covariates, &mut row);
            let m: f64 = row.iter().zip(&params.beta).map(|(a, b)| a * b).sum();
            let n = v.len() as f64;
            let ybar = v.measurements.iter().sum::<f64>() / n;
            within += v.measurements.iter().map(|y| (y - ybar).powi(2)).sum::<f64>();
            within_df += n - 1.0;
            resid_sum += ybar - m;
            count += 1.0;
        }
        if count > 0.0 {
            subject_means.push(resid_sum / count);
        }
        for v in &s.visits {
            spec.fixed_row(v.time, &s.marker_covariates, &mut row);
            let m: f64 = row.iter().zip(&params.beta).map(|(a, b)| a * b).sum();
            let ybar = v.measurements.iter().sum::<f64>() / v.len() as f64;
            between += (ybar - m - resid_sum / count.max(1.0)).powi(2);
            between_n += 1.0;
        }
    }
    let kappa2 = if within_df > 0.0 { within / within_df } else { 0.0 };
    let sigma2 = if between_n > 0.0 { between / between_n } else { 0.0 };
    let (kappa2, sigma2) = match (kappa2 > 0.0, sigma2 > 0.0) {
        (true, true) => (kappa2, sigma2),
        (true, false) => (kappa2, 0.5 * kappa2),
        (false, true) => (0.5 * sigma2, 0.5 * sigma2),
        (false, false) => (1.0, 1.0),
    };
    params.mu_sigma = 0.5 * sigma2.ln();
    params.mu_kappa = 0.5 * kappa2.ln();
    let var_b0 = if subject_means.len() > 1 {
        let m = subject_means.iter().sum::<f64>() / subject_means.len() as f64;
        subject_means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (subject_means.len() - 1) as f64
    } else {
        1.0
    };
    let d = spec.n_effects();
    let q = spec.n_random();
    for i in 0..d {
        for j in 0..d {
            params.chol[i][j] = 0.0;
        }
        params.chol[i][i] = if i == 0 {
            var_b0.max(1e-2).sqrt()
        } else if i < q {
            0.5
        } else {
            0.2
        };
    }
    params
}

/// Weibull shape `sqrt_eta = 1.3`, scales from events over exposure
/// (exponential approximation on the `t^eta` clock), no associations.
pub fn survival_starts(spec: &ModelSpec, dataset: &[SubjectData], params: &mut ParameterSet) {
    let sqrt_eta = 1.3f64;
    for kl in Transition::ALL {
        let ts = spec.transition(kl);
        let eta = match ts.baseline {
            crate::model::BaselineFamily::Weibull => sqrt_eta * sqrt_eta,
            crate::model::BaselineFamily::Exponential => 1.0,
        };
        let mut events = 0.0;
        let mut exposure = 0.0;
        for s in dataset {
            let e = &s.event;
            let onset = e.diagnosis.map(|r| 0.5 * (e.last_healthy + r));
            match kl {
                Transition::HealthyIll | Transition::HealthyDead => {
                    let exit = onset.unwrap_or(e.terminal);
                    exposure += exit.max(0.0).powf(eta) - e.entry.max(0.0).powf(eta);
                    let event = match kl {
                        Transition::HealthyIll => onset.is_some(),
                        _ => onset.is_none() && e.death,
                    };
                    events += f64::from(u8::from(event));
                }
                Transition::IllDead => {
                    if let Some(u) = onset {
                        exposure += e.terminal.max(0.0).powf(eta) - u.max(0.0).powf(eta);
                        events += f64::from(u8::from(e.death));
                    }
                }
            }
        }
        let zeta = (events.max(0.5) / exposure.max(1e-8)).ln();
        let t = params.transition_mut(kl);
        t.alpha_value = 0.0;
        t.alpha_slope = 0.0;
        t.alpha_sigma = 0.0;
        t.alpha_kappa = 0.0;
        t.gamma.iter_mut().for_each(|g| *g = 0.0);
        t.baseline = match ts.baseline {
            crate::model::BaselineFamily::Weibull => BaselineParams::Weibull { sqrt_eta, zeta },
            crate::model::BaselineFamily::Exponential => BaselineParams::Exponential { zeta },
        };
    }
}

fn is_marker_slot(slot: &ParamSlot) -> bool {
    matches!(slot, ParamSlot::Beta(_) | ParamSlot::MuSigma | ParamSlot::MuKappa | ParamSlot::Chol(..))
}

/// One maximization of an engine's likelihood over the free positions.
struct Maximized {
    theta: Vec<f64>,
    loglik: f64,
    status: Status,
    criteria: Criteria,
    iterations: usize,
    summary: StepSummary,
}

fn maximize(
    engine: &LikelihoodEngine,
    layout: &ParameterLayout,
    start: &[f64],
    free: &[bool],
    cfg: &OptimizerConfig,
    step: usize,
    label: &str,
) -> Result<Maximized> {
    let idx: Vec<usize> = (0..start.len()).filter(|&i| free[i]).collect();
    let objective = |x: &[f64]| -> Result<f64> {
        let mut full = start.to_vec();
        for (k, &i) in idx.iter().enumerate() {
            full[i] = x[k];
        }
        engine.total(&layout.unpack(&full)?)
    };
    let x0: Vec<f64> = idx.iter().map(|&i| start[i]).collect();
    let r = marquardt_levenberg(objective, &x0, cfg)?;
    let mut theta = start.to_vec();
    for (k, &i) in idx.iter().enumerate() {
        theta[i] = r.theta[k];
    }
    log::info!(
        "step {step} ({label}): loglik {:.6} after {} iterations, {:?}",
        r.value,
        r.iterations,
        r.status
    );
    Ok(Maximized {
        theta,
        loglik: r.value,
        status: r.status,
        criteria: r.criteria,
        iterations: r.iterations,
        summary: StepSummary {
            step,
            label: label.into(),
            draws: engine.qmc().draws,
            loglik: r.value,
            status: r.status,
            iterations: r.iterations,
            evaluations: r.evaluations,
            trace: r.trace,
        },
    })
}

fn finish(
    engine: &LikelihoodEngine,
    layout: &ParameterLayout,
    m: Maximized,
    free: &[bool],
    compute_se: bool,
    se_h_rel: f64,
    steps: Vec<StepSummary>,
) -> Result<FitResult> {
    let theta_hat = layout.unpack(&m.theta)?;
    let idx: Vec<usize> = (0..m.theta.len()).filter(|&i| free[i]).collect();
    let mut std_errors = None;
    let mut covariance_of_estimates = None;
    let mut hessian_negative_definite = None;
    let mut re_covariance_se = None;
    if compute_se {
        let x0: Vec<f64> = idx.iter().map(|&i| m.theta[i]).collect();
        let objective = |x: &[f64]| -> Result<f64> {
            let mut full = m.theta.clone();
            for (k, &i) in idx.iter().enumerate() {
                full[i] = x[k];
            }
            engine.total(&layout.unpack(&full)?)
        };
        let h = numeric_hessian(objective, &x0, se_h_rel)?;
        let se = standard_errors(&h);
        hessian_negative_definite = Some(se.negative_definite);
        if let (Some(values), Some(cov)) = (se.se, se.covariance) {
            let mut full = vec![None; m.theta.len()];
            for (k, &i) in idx.iter().enumerate() {
                full[i] = Some(values[k]);
            }
            let chol_pos: Vec<(usize, (usize, usize))> = idx
                .iter()
                .enumerate()
                .filter_map(|(k, &i)| match layout.slots()[i] {
                    ParamSlot::Chol(a, b) => Some((k, (a, b))),
                    _ => None,
                })
                .collect();
            let sub = DMatrix::from_fn(chol_pos.len(), chol_pos.len(), |r, c| cov[(chol_pos[r].0, chol_pos[c].0)]);
            let entries: Vec<(usize, usize)> = chol_pos.iter().map(|p| p.1).collect();
            let dm = delta_method_re_covariance(&theta_hat.chol_matrix(), &entries, &sub)?;
            re_covariance_se = Some(rows(&dm));
            covariance_of_estimates = Some(rows(&cov));
            std_errors = Some(full);
        } else {
            log::warn!("Hessian at the maximum is not negative definite; standard errors withheld");
        }
    }
    let re_covariance = rows(&crate::model::RandomEffectsDistribution::new(layout.spec(), &theta_hat).covariance());
    Ok(FitResult {
        names: layout.names(),
        estimates: m.theta,
        free: free.to_vec(),
        theta_hat,
        loglik: m.loglik,
        std_errors,
        covariance_of_estimates,
        hessian_negative_definite,
        re_covariance,
        re_covariance_se,
        converged: m.status == Status::Converged,
        status: m.status,
        criteria: m.criteria,
        iterations: m.iterations,
        s_used: engine.qmc().draws,
        steps,
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Interval-censored fit and, optionally, the naive comparator.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub fit: FitResult,
    pub naive: Option<FitResult>,
}

/// Runs the three-step estimation and returns the interval-censored fit.
pub fn fit_pipeline(dataset: &[SubjectData], spec: &ModelSpec, cfg: &PipelineConfig) -> Result<FitResult> {
    let cfg = PipelineConfig { naive: false, ..cfg.clone() };
    Ok(run_pipeline(dataset, spec, &cfg)?.fit)
}

/// Full pipeline, including the naive comparator when `cfg.naive` is set.
pub fn run_pipeline(dataset: &[SubjectData], spec: &ModelSpec, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let layout = ParameterLayout::new(spec);
    let free = match &cfg.free {
        Some(f) if f.len() != layout.len() => {
            return Err(Error::Dimension(format!(
                "free mask has {} entries, layout has {}",
                f.len(),
                layout.len()
            )))
        }
        Some(f) => f.clone(),
        None => vec![true; layout.len()],
    };
    let pool = match cfg.workers {
        Some(n) => Some(Arc::new(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?,
        )),
        None => None,
    };
    let qmc = |draws| QmcConfig { scramble: cfg.scramble, ..QmcConfig::new(draws, spec.n_effects()) };
    let engine = |data: &[SubjectData], draws, events| -> Result<LikelihoodEngine> {
        Ok(LikelihoodEngine::new(spec, data, qmc(draws), events)?.with_pool(pool.clone()))
    };
    let wrap = |step: usize| move |e: Error| Error::Pipeline { step, source: Box::new(e) };
    let naive_data = naive_dataset_transform(dataset);
    let mut steps = Vec::new();

    // Step 1: marker-only fit, then the naive joint model for survival starts.
    let (start, naive_start) = match &cfg.start {
        Some(p) => {
            p.check(spec).map_err(wrap(1))?;
            (layout.pack(p), None)
        }
        None => {
            let init = marker_starts(spec, dataset);
            let long_free: Vec<bool> =
                layout.slots().iter().zip(&free).map(|(s, &f)| f && is_marker_slot(s)).collect();
            let long_engine = engine(dataset, cfg.s1, false).map_err(wrap(1))?;
            let long = maximize(&long_engine, &layout, &layout.pack(&init), &long_free, &cfg.optimizer, 1, "marker model")
                .map_err(wrap(1))?;
            if cfg.step1_only {
                steps.push(long.summary.clone());
                let fit = finish(&long_engine, &layout, long, &long_free, cfg.compute_se, cfg.se_h_rel, steps)
                    .map_err(wrap(1))?;
                return Ok(PipelineOutput { fit, naive: None });
            }
            steps.push(long.summary.clone());
            let mut p = layout.unpack(&long.theta).map_err(wrap(1))?;
            survival_starts(spec, &naive_data, &mut p);
            let naive_engine = engine(&naive_data, cfg.s1, true).map_err(wrap(1))?;
            let naive = maximize(&naive_engine, &layout, &layout.pack(&p), &free, &cfg.optimizer, 1, "naive model")
                .map_err(wrap(1))?;
            steps.push(naive.summary.clone());
            (naive.theta.clone(), Some(naive.theta))
        }
    };

    // Step 2: interval-censored likelihood with S1 draws.
    let engine_s1 = engine(dataset, cfg.s1, true).map_err(wrap(2))?;
    let step2 = if cfg.run_step2 {
        let m = maximize(&engine_s1, &layout, &start, &free, &cfg.optimizer, 2, "interval-censored")
            .map_err(wrap(2))?;
        steps.push(m.summary.clone());
        Some(m)
    } else {
        None
    };

    // Step 3: refit with S2 draws and compute standard errors there.
    let from = step2.as_ref().map_or(start.clone(), |m| m.theta.clone());
    let engine_s2 = if cfg.s2 == cfg.s1 { None } else { Some(engine(dataset, cfg.s2, true).map_err(wrap(3))?) };
    let final_engine = engine_s2.as_ref().unwrap_or(&engine_s1);
    let result = if cfg.run_step3 || step2.is_none() {
        let m = maximize(final_engine, &layout, &from, &free, &cfg.optimizer, 3, "precision refit")
            .map_err(wrap(3))?;
        steps.push(m.summary.clone());
        finish(final_engine, &layout, m, &free, cfg.compute_se, cfg.se_h_rel, steps.clone()).map_err(wrap(3))?
    } else {
        let m = step2.expect("step 2 ran");
        finish(&engine_s1, &layout, m, &free, cfg.compute_se, cfg.se_h_rel, steps.clone()).map_err(wrap(3))?
    };

    let naive = if cfg.naive {
        let naive_from = naive_start.unwrap_or_else(|| start.clone());
        let naive_engine = engine(&naive_data, cfg.s2, true).map_err(wrap(3))?;
        let m = maximize(&naive_engine, &layout, &naive_from, &free, &cfg.optimizer, 3, "naive refit")
            .map_err(wrap(3))?;
        let mut naive_steps: Vec<StepSummary> = steps.iter().filter(|s| s.step == 1).cloned().collect();
        naive_steps.push(m.summary.clone());
        Some(finish(&naive_engine, &layout, m, &free, cfg.compute_se, cfg.se_h_rel, naive_steps).map_err(wrap(3))?)
    } else {
        None
    };
    Ok(PipelineOutput { fit: result, naive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn standard_error_examples() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-4.0, -25.0]));
        let se = standard_errors(&h);
        let v = se.se.unwrap();
        assert_relative_eq!(v[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(v[1], 0.2, epsilon = 1e-14);

        let singular = DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, -1.0, -1.0]);
        let se = standard_errors(&singular);
        assert!(!se.negative_definite && se.se.is_none());
    }

    #[test]
    fn delta_method_one_by_one() {
        let l = DMatrix::from_element(1, 1, 1.5);
        let cov = DMatrix::from_element(1, 1, 0.04);
        let se = delta_method_re_covariance(&l, &[(0, 0)], &cov).unwrap();
        assert_relative_eq!(se[(0, 0)], 2.0 * 1.5 * 0.2, epsilon = 1e-14);
    }

    #[test]
    fn delta_method_diagonal_decouples() {
        let l = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.09]));
        let se = delta_method_re_covariance(&l, &[(0, 0), (1, 1)], &cov).unwrap();
        assert_relative_eq!(se[(0, 0)], 2.0 * 2.0 * 0.1, epsilon = 1e-14);
        assert_relative_eq!(se[(1, 1)], 2.0 * 0.5 * 0.3, epsilon = 1e-14);
        assert_eq!(se[(0, 1)], 0.0);
    }

    #[test]
    fn naive_transform_examples() {
        let ts = crate::time::TimeScale::default();
        let s = |e: EventRecord| SubjectData::new("s", vec![], e);
        let dem = s(EventRecord::new(ts.transform(68.0), ts.transform(70.0), Some(ts.transform(74.0)), ts.transform(80.0), false));
        let out = naive_dataset_transform(&[dem]);
        assert_relative_eq!(out[0].event.last_healthy, ts.transform(72.0), epsilon = 1e-14);
        assert_eq!(out[0].event.diagnosis, Some(out[0].event.last_healthy));

        let died = s(EventRecord::new(0.0, ts.transform(72.0), None, ts.transform(76.0), true));
        let out = naive_dataset_transform(&[died]);
        assert_eq!(out[0].event.last_healthy, ts.transform(76.0));
        assert_eq!(
            crate::likelihood::classify_case(&out[0].event),
            crate::likelihood::CaseTag::HealthyAtT
        );

        let censored = s(EventRecord::new(0.0, 0.5, None, 0.9, false));
        assert_eq!(naive_dataset_transform(std::slice::from_ref(&censored))[0], censored);
    }

    #[test]
    fn config_invariants() {
        assert!(PipelineConfig { s1: 10, s2: 5, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { s1: 0, s2: 0, ..Default::default() }.validate().is_err());
        PipelineConfig::default().validate().unwrap();
    }
}
