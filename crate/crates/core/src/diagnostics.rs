//! Goodness-of-fit summaries: empirical Bayes effects, predicted marker
//! means, predicted cumulative intensities, hazard ratios and histograms of
//! the subject-specific variabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::SubjectData;
use crate::error::{Error, Result};
use crate::estimation::{naive_dataset_transform, FitResult};
use crate::likelihood::LikelihoodEngine;
use crate::model::{residual_scales, ModelSpec, ParameterLayout, ParameterSet, RandomEffects, RandomEffectsDistribution, Transition};
use crate::optim::{derivatives, marquardt_levenberg, OptimizerConfig};
use crate::qmc::QmcConfig;
use crate::simulation::LatentHazards;

const Z975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EbMode {
    /// Marker and event likelihood.
    Joint,
    /// Marker likelihood only.
    MarkerOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBayesEstimate {
    pub id: String,
    pub effects: RandomEffects,
    pub sigma: f64,
    pub kappa: f64,
    pub converged: bool,
    /// Gradient norm of the objective at the mode, in whitened coordinates.
    pub gradient_norm: f64,
    pub objective: f64,
    pub objective_at_prior_mode: f64,
}

fn eb_optimizer() -> OptimizerConfig {
    OptimizerConfig {
        max_iterations: 200,
        tol_param: 1e-10,
        tol_fn: 1e-10,
        tol_rdm: 1e-14,
        h_rel: 1e-5,
        ..Default::default()
    }
}

/// Posterior mode of one subject's effects given `params`.
///
/// Works in whitened coordinates `u = L z`, so directions with zero prior
/// variance stay at zero.
pub fn empirical_bayes(engine: &LikelihoodEngine, index: usize, params: &ParameterSet) -> Result<EmpiricalBayesEstimate> {
    let spec = engine.spec();
    let l = RandomEffectsDistribution::new(spec, params).chol;
    let d = l.nrows();
    let to_u = |z: &[f64]| -> Vec<f64> { (0..d).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect() };
    let objective = |z: &[f64]| -> Result<f64> {
        let v = engine.conditional_loglik(index, params, &to_u(z)) - 0.5 * z.iter().map(|x| x * x).sum::<f64>();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::evaluation(engine.plans()[index].id(), "non-finite posterior"))
        }
    };
    let zero = vec![0.0; d];
    let at_zero = objective(&zero)?;
    let cfg = eb_optimizer();
    let r = marquardt_levenberg(objective, &zero, &cfg)?;
    let mut f = objective;
    let (_, grad, _) = derivatives(&mut f, &r.theta, cfg.h_rel)?;
    let gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let effects = RandomEffects::from_slice(&to_u(&r.theta));
    let (sigma, kappa) = residual_scales(params.mu_sigma, params.mu_kappa, effects.tau_sigma, effects.tau_kappa);
    Ok(EmpiricalBayesEstimate {
        id: engine.plans()[index].id().to_string(),
        effects,
        sigma,
        kappa,
        converged: r.converged() && gradient_norm < 1e-6,
        gradient_norm,
        objective: r.value,
        objective_at_prior_mode: at_zero,
    })
}

/// Empirical Bayes estimates for every subject, in dataset order.
pub fn empirical_bayes_all(
    spec: &ModelSpec,
    dataset: &[SubjectData],
    params: &ParameterSet,
    mode: EbMode,
) -> Result<Vec<EmpiricalBayesEstimate>> {
    let engine = LikelihoodEngine::new(spec, dataset, QmcConfig::new(1, spec.n_effects()), mode == EbMode::Joint)?;
    (0..dataset.len())
        .into_par_iter()
        .map(|i| empirical_bayes(&engine, i, params))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerBin {
    pub age_low: f64,
    pub age_high: f64,
    pub n: usize,
    pub mean_observed: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_predicted: f64,
}

impl MarkerBin {
    pub fn covers_prediction(&self) -> bool {
        self.ci_low <= self.mean_predicted && self.mean_predicted <= self.ci_high
    }
}

/// Observed and subject-specific predicted marker means by age bin.
/// Bins with fewer than two measurements are omitted.
pub fn marker_fit_curve(
    spec: &ModelSpec,
    dataset: &[SubjectData],
    eb: &[EmpiricalBayesEstimate],
    params: &ParameterSet,
    bin_width_years: f64,
) -> Result<Vec<MarkerBin>> {
    if dataset.is_empty() || dataset.len() != eb.len() {
        return Err(Error::InvalidInput("marker fit needs one EB estimate per subject".into()));
    }
    if !(bin_width_years > 0.0) {
        return Err(Error::InvalidInput("bin width must be positive".into()));
    }
    let scale = spec.time_scale;
    let mut points = Vec::new();
    for (s, e) in dataset.iter().zip(eb) {
        for v in &s.visits {
            let pred = spec.trajectory(v.time, &s.marker_covariates, &params.beta, &e.effects.b)?.value;
            let age = scale.inverse(v.time);
            for &y in &v.measurements {
                points.push((age, y, pred));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("no marker measurements".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let n_bins = (((hi - lo) / bin_width_years).ceil() as usize).max(1);
    let mut acc = vec![(0usize, 0.0, 0.0, 0.0); n_bins];
    for &(age, y, pred) in &points {
        let k = (((age - lo) / bin_width_years).floor() as usize).min(n_bins - 1);
        let a = &mut acc[k];
        a.0 += 1;
        a.1 += y;
        a.2 += y * y;
        a.3 += pred;
    }
    Ok(acc
        .iter()
        .enumerate()
        .filter(|(_, a)| a.0 >= 2)
        .map(|(k, &(n, sy, syy, sp))| {
            let nf = n as f64;
            let mean = sy / nf;
            let var = ((syy - nf * mean * mean) / (nf - 1.0)).max(0.0);
            let half = Z975 * (var / nf).sqrt();
            MarkerBin {
                age_low: lo + k as f64 * bin_width_years,
                age_high: lo + (k + 1) as f64 * bin_width_years,
                n,
                mean_observed: mean,
                ci_low: mean - half,
                ci_high: mean + half,
                mean_predicted: sp / nf,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardCurve {
    pub transition: Transition,
    /// Grid on the model time scale.
    pub grid: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// Mean over subjects of `Λ_kl(0, t | effects_i)` on an increasing grid.
///
/// Averages over all subjects, not only those at risk at `t`.
pub fn cumulative_hazard_curves(
    spec: &ModelSpec,
    dataset: &[SubjectData],
    effects: &[RandomEffects],
    params: &ParameterSet,
    grid: &[f64],
) -> Result<Vec<HazardCurve>> {
    if dataset.len() != effects.len() {
        return Err(Error::InvalidInput("one effect vector per subject is required".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid.first().is_some_and(|g| *g < 0.0) {
        return Err(Error::InvalidInput("grid must be increasing and non-negative".into()));
    }
    Transition::ALL
        .iter()
        .map(|&kl| {
            let per_subject = dataset
                .par_iter()
                .zip(effects)
                .map(|(s, e)| {
                    let hz = LatentHazards {
                        spec,
                        params,
                        effects: e,
                        marker_covariates: &s.marker_covariates,
                        hazard_covariates: s.event.covariates_for(kl),
                    };
                    let mut out = Vec::with_capacity(grid.len());
                    let mut total = 0.0;
                    let mut prev = 0.0;
                    for &t in grid {
                        total += hz.cumulative(kl, prev, t)?;
                        prev = t;
                        out.push(total);
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let n = per_subject.len().max(1) as f64;
            let cumulative = (0..grid.len())
                .map(|k| per_subject.iter().map(|c| c[k]).sum::<f64>() / n)
                .collect();
            Ok(HazardCurve { transition: kl, grid: grid.to_vec(), cumulative })
        })
        .collect()
}

/// Nelson-Aalen estimates on the naive data (midpoint onsets, undiagnosed
/// deaths as direct deaths), with delayed entry. A nonparametric reference
/// for the predicted curves on observed data.
pub fn nelson_aalen_naive(dataset: &[SubjectData], grid: &[f64]) -> Vec<HazardCurve> {
    let naive = naive_dataset_transform(dataset);
    Transition::ALL
        .iter()
        .map(|&kl| {
            // (entry, exit, event) on the relevant at-risk scale
            let spells: Vec<(f64, f64, bool)> = naive
                .iter()
                .filter_map(|s| {
                    let e = &s.event;
                    match (kl, e.diagnosis) {
                        (Transition::HealthyIll, Some(u)) => Some((e.entry, u, true)),
                        (Transition::HealthyIll, None) => Some((e.entry, e.terminal, false)),
                        (Transition::HealthyDead, Some(u)) => Some((e.entry, u, false)),
                        (Transition::HealthyDead, None) => Some((e.entry, e.terminal, e.death)),
                        (Transition::IllDead, Some(u)) => Some((u, e.terminal, e.death)),
                        (Transition::IllDead, None) => None,
                    }
                })
                .collect();
            let mut times: Vec<f64> = spells.iter().filter(|s| s.2).map(|s| s.1).collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let mut steps = Vec::with_capacity(times.len());
            let mut total = 0.0;
            for &t in &times {
                let events = spells.iter().filter(|s| s.2 && s.1 == t).count() as f64;
                let at_risk = spells.iter().filter(|s| s.0 < t && s.1 >= t).count() as f64;
                if at_risk > 0.0 {
                    total += events / at_risk;
                }
                steps.push((t, total));
            }
            let cumulative = grid
                .iter()
                .map(|&g| steps.iter().take_while(|s| s.0 <= g).last().map_or(0.0, |s| s.1))
                .collect();
            HazardCurve { transition: kl, grid: grid.to_vec(), cumulative }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRatioRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub hazard_ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

/// `exp(est)`, `exp(est ± 1.96 se)` and the two-sided Wald p-value.
pub fn hazard_ratio(name: &str, estimate: f64, std_error: f64) -> HazardRatioRow {
    let normal = Normal::standard();
    let z = if std_error > 0.0 { estimate / std_error } else { f64::INFINITY };
    HazardRatioRow {
        name: name.to_string(),
        estimate,
        std_error,
        hazard_ratio: estimate.exp(),
        ci_low: (estimate - Z975 * std_error).exp(),
        ci_high: (estimate + Z975 * std_error).exp(),
        p_value: (2.0 * normal.sf(z.abs())).min(1.0),
    }
}

/// Hazard ratios of every log-intensity coefficient of a fit.
pub fn hazard_ratio_table(fit: &FitResult, spec: &ModelSpec) -> Result<Vec<HazardRatioRow>> {
    let se = fit
        .std_errors
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("standard errors unavailable; hazard-ratio table withheld".into()))?;
    let layout = ParameterLayout::new(spec);
    if layout.len() != fit.estimates.len() {
        return Err(Error::Dimension("fit does not match the model layout".into()));
    }
    Ok(layout
        .slots()
        .iter()
        .enumerate()
        .filter(|(i, s)| s.is_log_hazard_coefficient() && se[*i].is_some())
        .map(|(i, s)| hazard_ratio(&s.name(), fit.estimates[i], se[i].unwrap_or(f64::NAN)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn from_values(values: &[f64], n_bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return Histogram { edges: vec![], counts: vec![] };
        }
        if hi - lo <= 1e-12 * lo.abs().max(1.0) || n_bins <= 1 {
            return Histogram { edges: vec![lo, hi], counts: vec![values.len()] };
        }
        let width = (hi - lo) / n_bins as f64;
        let edges = (0..=n_bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0; n_bins];
        for v in values {
            let k = (((v - lo) / width).floor() as usize).min(n_bins - 1);
            counts[k] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Histograms of `σ_i = exp(μ_σ + τ_σi)` and `κ_i = exp(μ_κ + τ_κi)`.
pub fn variability_histograms(eb: &[EmpiricalBayesEstimate], n_bins: usize) -> (Histogram, Histogram) {
    let sigma: Vec<f64> = eb.iter().map(|e| e.sigma).collect();
    let kappa: Vec<f64> = eb.iter().map(|e| e.kappa).collect();
    (Histogram::from_values(&sigma, n_bins), Histogram::from_values(&kappa, n_bins))
}
