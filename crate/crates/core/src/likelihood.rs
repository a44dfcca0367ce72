//! Marginal likelihood of the joint model.
//!
//! Each subject contributes
//!
//! ```text
//! L_i = ∫ f(Y_i | b, tau) f(D_i | b, tau) f(b, tau) d(b, tau)
//!       / ∫ exp(-Λ01(T0) - Λ02(T0)) f(b, tau) d(b, tau)
//! ```
//!
//! where both integrals are replaced by averages over one shared set of
//! Sobol draws, cumulative intensities use a single 15-point Gauss-Kronrod
//! rule per interval, and the marker density is evaluated visit by visit in
//! closed form under compound symmetry.
//!
//! The free functions in this module evaluate one draw at a time and are the
//! reference path. [`LikelihoodEngine`] evaluates the same quantities with
//! per-subject precomputed quadrature nodes and is what estimation uses.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EventRecord, SubjectData, VisitBlock};
use crate::error::{Error, Result};
use crate::model::{
    residual_scales, transition_hazard, ModelSpec, ParameterSet, RandomEffects,
    RandomEffectsDistribution, Transition,
};
use crate::qmc::{NormalDraws, QmcConfig};
use crate::quadrature::{QuadratureRule, GK15_POINTS};

/// Tolerance for time equalities in case dispatch (transformed units).
pub const TIME_EPS: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The observation patterns of the illness-death likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    /// Diagnosed between the last healthy visit `L` and the diagnosis visit `R`.
    IntervalDementia,
    /// Seen healthy at the terminal time (`L = T`).
    HealthyAtT,
    /// Healthy at the last visit `L < T`; dementia may have gone unobserved.
    HealthyLastVisitBeforeT,
    /// Onset time known exactly (`L = R`).
    ExactDementia,
}

pub fn classify_case(event: &EventRecord) -> CaseTag {
    match event.diagnosis {
        Some(r) if (r - event.last_healthy).abs() <= TIME_EPS => CaseTag::ExactDementia,
        Some(_) => CaseTag::IntervalDementia,
        None if (event.terminal - event.last_healthy).abs() <= TIME_EPS => CaseTag::HealthyAtT,
        None => CaseTag::HealthyLastVisitBeforeT,
    }
}

/// Log-density of one visit's measurements, `N(mean 1, sigma^2 11' + kappa^2 I)`.
pub fn visit_block_logdensity(block: &VisitBlock, mean: f64, sigma: f64, kappa: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(kappa > 0.0) {
        return Err(Error::InvalidInput(format!(
            "residual scales must be positive, got sigma = {sigma}, kappa = {kappa}"
        )));
    }
    if block.measurements.is_empty() {
        return Err(Error::InvalidInput("visit without measurements".into()));
    }
    let n = block.len() as f64;
    let ybar = block.measurements.iter().sum::<f64>() / n;
    let ss: f64 = block.measurements.iter().map(|y| (y - ybar).powi(2)).sum();
    let k2 = kappa * kappa;
    Ok(compound_symmetry_logdensity(n, ybar - mean, ss, sigma * sigma, k2, k2.ln()))
}

/// Closed form used by both evaluation paths. `rbar` is the mean residual and
/// `ss` the within-visit sum of squares about the visit mean.
#[inline]
fn compound_symmetry_logdensity(n: f64, rbar: f64, ss: f64, s2: f64, k2: f64, ln_k2: f64) -> f64 {
    let v = k2 + n * s2;
    -0.5 * (n * LN_2PI + (n - 1.0) * ln_k2 + v.ln() + ss / k2 + n * rbar * rbar / v)
}

/// `log f(Y_i | b, tau)`; zero for a subject without visits.
pub fn longitudinal_loglik(
    spec: &ModelSpec,
    subject: &SubjectData,
    params: &ParameterSet,
    draw: &RandomEffects,
) -> Result<f64> {
    let (sigma, kappa) = residual_scales(params.mu_sigma, params.mu_kappa, draw.tau_sigma, draw.tau_kappa);
    let mut total = 0.0;
    for v in &subject.visits {
        let m = spec
            .trajectory(v.time, &subject.marker_covariates, &params.beta, &draw.b)?
            .value;
        total += visit_block_logdensity(v, m, sigma, kappa)?;
    }
    Ok(total)
}

/// Intensity of `kl` at `t` for one subject and draw.
pub fn subject_hazard(
    spec: &ModelSpec,
    kl: Transition,
    t: f64,
    subject: &SubjectData,
    params: &ParameterSet,
    draw: &RandomEffects,
) -> Result<f64> {
    let traj = spec.trajectory(t, &subject.marker_covariates, &params.beta, &draw.b)?;
    let (sigma, kappa) = residual_scales(params.mu_sigma, params.mu_kappa, draw.tau_sigma, draw.tau_kappa);
    transition_hazard(
        params.transition(kl),
        t,
        subject.event.covariates_for(kl),
        traj,
        sigma,
        kappa,
    )
}

/// `Λ_kl(b) - Λ_kl(a)` by one 15-point Gauss-Kronrod rule on `[a, b]`.
pub fn cumulative_hazard(
    spec: &ModelSpec,
    kl: Transition,
    from: f64,
    to: f64,
    subject: &SubjectData,
    params: &ParameterSet,
    draw: &RandomEffects,
) -> Result<f64> {
    if from > to || from < 0.0 {
        return Err(Error::InvalidInput(format!(
            "cumulative hazard needs 0 <= a <= b, got [{from}, {to}]"
        )));
    }
    if from == to {
        return Ok(0.0);
    }
    let rule = QuadratureRule::gauss_kronrod_15();
    let (x, w) = rule.intensity_nodes(from, to);
    let mut acc = 0.0;
    for k in 0..GK15_POINTS {
        acc += w[k] * subject_hazard(spec, kl, x[k], subject, params, draw)?;
    }
    Ok(acc)
}

/// Conditional likelihood factor `f(D_i | b, tau)` of the event history.
pub fn event_contribution(
    spec: &ModelSpec,
    subject: &SubjectData,
    params: &ParameterSet,
    draw: &RandomEffects,
) -> Result<f64> {
    let ev = &subject.event;
    let lam = |kl, t| subject_hazard(spec, kl, t, subject, params, draw);
    let cum = |kl, a, b| cumulative_hazard(spec, kl, a, b, subject, params, draw);
    let death = ev.death;
    let pow = |h: f64| if death { h } else { 1.0 };

    let healthy_at = |t: f64| -> Result<f64> {
        let surv = (-cum(Transition::HealthyIll, 0.0, t)? - cum(Transition::HealthyDead, 0.0, t)?).exp();
        Ok(surv * pow(lam(Transition::HealthyDead, t)?))
    };
    let bracket = |lo: f64, hi: f64| -> Result<f64> {
        let rule = QuadratureRule::gauss_kronrod_15();
        let (x, w) = rule.mapped(lo, hi);
        let mut acc = 0.0;
        for k in 0..GK15_POINTS {
            let u = x[k];
            let s0 = (-cum(Transition::HealthyIll, 0.0, u)? - cum(Transition::HealthyDead, 0.0, u)?).exp();
            let s1 = (-cum(Transition::IllDead, u, ev.terminal)?).exp();
            acc += w[k] * s0 * lam(Transition::HealthyIll, u)? * s1;
        }
        Ok(acc * pow(lam(Transition::IllDead, ev.terminal)?))
    };

    let value = match classify_case(ev) {
        CaseTag::HealthyAtT => healthy_at(ev.terminal)?,
        CaseTag::HealthyLastVisitBeforeT => {
            healthy_at(ev.terminal)? + bracket(ev.last_healthy, ev.terminal)?
        }
        CaseTag::IntervalDementia => bracket(ev.last_healthy, ev.diagnosis.unwrap_or(ev.last_healthy))?,
        CaseTag::ExactDementia => {
            let l = ev.last_healthy;
            let s0 = (-cum(Transition::HealthyIll, 0.0, l)? - cum(Transition::HealthyDead, 0.0, l)?).exp();
            let s1 = (-cum(Transition::IllDead, l, ev.terminal)?).exp();
            s0 * lam(Transition::HealthyIll, l)? * s1 * pow(lam(Transition::IllDead, ev.terminal)?)
        }
    };
    if !value.is_finite() || value < 0.0 {
        return Err(Error::evaluation(&subject.id, format!("event contribution {value}")));
    }
    Ok(value)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Reference marginal log-likelihood of one subject from explicit draws.
pub fn subject_marginal_loglik_from_draws(
    spec: &ModelSpec,
    subject: &SubjectData,
    params: &ParameterSet,
    draws: &[RandomEffects],
) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("no draws".into()));
    }
    let mut num = Vec::with_capacity(draws.len());
    let mut den = Vec::with_capacity(draws.len());
    let t0 = subject.event.entry;
    for d in draws {
        let f_d = event_contribution(spec, subject, params, d)?;
        num.push(longitudinal_loglik(spec, subject, params, d)? + f_d.ln());
        if t0 > 0.0 {
            den.push(
                -cumulative_hazard(spec, Transition::HealthyIll, 0.0, t0, subject, params, d)?
                    - cumulative_hazard(spec, Transition::HealthyDead, 0.0, t0, subject, params, d)?,
            );
        }
    }
    let ln_s = (draws.len() as f64).ln();
    let numerator = log_sum_exp(&num) - ln_s;
    let denominator = if den.is_empty() { 0.0 } else { log_sum_exp(&den) - ln_s };
    let value = numerator - denominator;
    if !value.is_finite() {
        return Err(Error::evaluation(&subject.id, "all draws underflow"));
    }
    Ok(value)
}

/// Marginal log-likelihood contribution of one subject with delayed-entry
/// correction, using the Sobol draws described by `cfg`.
pub fn subject_marginal_loglik(
    spec: &ModelSpec,
    subject: &SubjectData,
    params: &ParameterSet,
    cfg: QmcConfig,
) -> Result<f64> {
    let draws = crate::qmc::sobol_normal_draws(cfg, &RandomEffectsDistribution::new(spec, params))?;
    subject_marginal_loglik_from_draws(spec, subject, params, &draws)
}

/// Sum of subject contributions.
pub fn total_loglik(
    spec: &ModelSpec,
    dataset: &[SubjectData],
    params: &ParameterSet,
    cfg: QmcConfig,
) -> Result<f64> {
    let engine = LikelihoodEngine::new(spec, dataset, cfg, true)?;
    engine.total(params)
}

/// Sum in a fixed pairwise order, independent of how the terms were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

// ---------------------------------------------------------------------------
// Precomputed evaluation
// ---------------------------------------------------------------------------

/// 15 consecutive nodes of one transition and their weights.
#[derive(Debug, Clone)]
struct Segment {
    start: usize,
    w: [f64; GK15_POINTS],
}

#[derive(Debug, Clone, Default)]
struct NodeSet {
    t: Vec<f64>,
    ln_t: Vec<f64>,
}

impl NodeSet {
    fn point(&mut self, t: f64) -> usize {
        self.t.push(t);
        self.ln_t.push(t.ln());
        self.t.len() - 1
    }

    fn segment(&mut self, rule: &QuadratureRule, a: f64, b: f64) -> Segment {
        let (x, w) = rule.intensity_nodes(a, b);
        let start = self.t.len();
        for xi in x {
            self.point(xi);
        }
        Segment { start, w }
    }
}

#[derive(Debug, Clone)]
enum EventPlan {
    HealthyAtT {
        s01: Segment,
        s02: Segment,
        death02: Option<usize>,
    },
    Exact {
        s01: Segment,
        s02: Segment,
        s12: Segment,
        onset01: usize,
        death12: Option<usize>,
    },
    Bracket {
        ln_w: [f64; GK15_POINTS],
        s01: Vec<Segment>,
        s02: Vec<Segment>,
        s12: Vec<Segment>,
        onset01: [usize; GK15_POINTS],
        death12: Option<usize>,
        /// Direct healthy → dead path for `L < T` without diagnosis.
        healthy: Option<(Segment, Segment, Option<usize>)>,
    },
}

#[derive(Debug, Clone)]
struct VisitPlan {
    n: f64,
    ybar: f64,
    ss: f64,
    x: Vec<f64>,
    z: Vec<f64>,
}

/// Per-subject quantities that do not depend on the parameters.
#[derive(Debug, Clone)]
pub struct SubjectPlan {
    id: String,
    visits: Vec<VisitPlan>,
    marker_covariates: Vec<f64>,
    hazard_covariates: [Vec<f64>; 3],
    nodes: [NodeSet; 3],
    event: Option<EventPlan>,
    entry: Option<(Segment, Segment)>,
    case: CaseTag,
}

impl SubjectPlan {
    pub fn new(spec: &ModelSpec, subject: &SubjectData, with_events: bool) -> Result<Self> {
        if subject.marker_covariates.len() != spec.n_marker_covariates {
            return Err(Error::Dimension(format!(
                "subject {} has {} marker covariates, model expects {}",
                subject.id,
                subject.marker_covariates.len(),
                spec.n_marker_covariates
            )));
        }
        for kl in Transition::ALL {
            if with_events && subject.event.covariates_for(kl).len() != spec.transition(kl).n_covariates {
                return Err(Error::Dimension(format!(
                    "subject {} has {} covariates for transition {}, model expects {}",
                    subject.id,
                    subject.event.covariates_for(kl).len(),
                    kl.label(),
                    spec.transition(kl).n_covariates
                )));
            }
        }
        let p = spec.n_fixed();
        let q = spec.n_random();
        let visits = subject
            .visits
            .iter()
            .map(|v| {
                let n = v.len() as f64;
                let ybar = v.measurements.iter().sum::<f64>() / n;
                let ss = v.measurements.iter().map(|y| (y - ybar).powi(2)).sum();
                let mut x = vec![0.0; p];
                spec.fixed_row(v.time, &subject.marker_covariates, &mut x);
                let mut z = vec![0.0; q];
                spec.random_row(v.time, &mut z);
                VisitPlan { n, ybar, ss, x, z }
            })
            .collect();

        let ev = &subject.event;
        let case = classify_case(ev);
        let rule = QuadratureRule::gauss_kronrod_15();
        let mut nodes: [NodeSet; 3] = Default::default();
        let mut event = None;
        let mut entry = None;
        if with_events {
            let [n01, n02, n12] = &mut nodes;
            let death = ev.death;
            let t_end = ev.terminal;
            let bracket = |lo: f64, hi: f64, n01: &mut NodeSet, n02: &mut NodeSet, n12: &mut NodeSet| {
                let (x, w) = rule.mapped(lo, hi);
                let mut s01 = Vec::with_capacity(GK15_POINTS);
                let mut s02 = Vec::with_capacity(GK15_POINTS);
                let mut s12 = Vec::with_capacity(GK15_POINTS);
                let mut onset01 = [0; GK15_POINTS];
                for k in 0..GK15_POINTS {
                    s01.push(n01.segment(&rule, 0.0, x[k]));
                    s02.push(n02.segment(&rule, 0.0, x[k]));
                    s12.push(n12.segment(&rule, x[k], t_end));
                    onset01[k] = n01.point(x[k]);
                }
                let death12 = death.then(|| n12.point(t_end));
                (w.map(f64::ln), s01, s02, s12, onset01, death12)
            };
            event = Some(match case {
                CaseTag::HealthyAtT => EventPlan::HealthyAtT {
                    s01: n01.segment(&rule, 0.0, t_end),
                    s02: n02.segment(&rule, 0.0, t_end),
                    death02: death.then(|| n02.point(t_end)),
                },
                CaseTag::ExactDementia => {
                    let l = ev.last_healthy;
                    EventPlan::Exact {
                        s01: n01.segment(&rule, 0.0, l),
                        s02: n02.segment(&rule, 0.0, l),
                        s12: n12.segment(&rule, l, t_end),
                        onset01: n01.point(l),
                        death12: death.then(|| n12.point(t_end)),
                    }
                }
                CaseTag::IntervalDementia => {
                    let r = ev.diagnosis.unwrap_or(ev.last_healthy);
                    let (ln_w, s01, s02, s12, onset01, death12) =
                        bracket(ev.last_healthy, r, n01, n02, n12);
                    EventPlan::Bracket {
                        ln_w,
                        s01,
                        s02,
                        s12,
                        onset01,
                        death12,
                        healthy: None,
                    }
                }
                CaseTag::HealthyLastVisitBeforeT => {
                    let (ln_w, s01, s02, s12, onset01, death12) =
                        bracket(ev.last_healthy, t_end, n01, n02, n12);
                    let healthy = (
                        n01.segment(&rule, 0.0, t_end),
                        n02.segment(&rule, 0.0, t_end),
                        death.then(|| n02.point(t_end)),
                    );
                    EventPlan::Bracket {
                        ln_w,
                        s01,
                        s02,
                        s12,
                        onset01,
                        death12,
                        healthy: Some(healthy),
                    }
                }
            });
            if ev.entry > 0.0 {
                entry = Some((
                    n01.segment(&rule, 0.0, ev.entry),
                    n02.segment(&rule, 0.0, ev.entry),
                ));
            }
        }
        Ok(SubjectPlan {
            id: subject.id.clone(),
            visits,
            marker_covariates: subject.marker_covariates.clone(),
            hazard_covariates: subject.event.covariates.clone(),
            nodes,
            event,
            entry,
            case,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn case(&self) -> CaseTag {
        self.case
    }

    fn n_nodes(&self) -> [usize; 3] {
        [self.nodes[0].t.len(), self.nodes[1].t.len(), self.nodes[2].t.len()]
    }

    /// Draw-independent parts of the log-intensities and marker means.
    fn prepare(&self, spec: &ModelSpec, params: &ParameterSet) -> SubjectTheta {
        let q = spec.n_random();
        let p = spec.n_fixed();
        let xb = self
            .visits
            .iter()
            .map(|v| v.x.iter().zip(&params.beta).map(|(a, b)| a * b).sum())
            .collect();
        let mut offset: [Vec<f64>; 3] = Default::default();
        let mut coef: [Vec<f64>; 3] = Default::default();
        let mut x = vec![0.0; p];
        let mut dx = vec![0.0; p];
        let mut z = vec![0.0; q];
        let mut dz = vec![0.0; q];
        for kl in Transition::ALL {
            let i = kl.index();
            let tp = params.transition(kl);
            let wg = tp.covariate_term(&self.hazard_covariates[i]);
            let ns = &self.nodes[i];
            let mut off = Vec::with_capacity(ns.t.len());
            let mut cf = Vec::with_capacity(ns.t.len() * q);
            for (&t, &ln_t) in ns.t.iter().zip(&ns.ln_t) {
                spec.fixed_row(t, &self.marker_covariates, &mut x);
                spec.fixed_row_slope(t, &mut dx);
                spec.random_row(t, &mut z);
                spec.random_row_slope(t, &mut dz);
                let xb: f64 = x.iter().zip(&params.beta).map(|(a, b)| a * b).sum();
                let dxb: f64 = dx.iter().zip(&params.beta).map(|(a, b)| a * b).sum();
                let base = log_baseline(&tp.baseline, t, ln_t);
                off.push(base + wg + tp.alpha_value * xb + tp.alpha_slope * dxb);
                for j in 0..q {
                    cf.push(tp.alpha_value * z[j] + tp.alpha_slope * dz[j]);
                }
            }
            offset[i] = off;
            coef[i] = cf;
        }
        SubjectTheta { xb, offset, coef }
    }

    /// `(log f(Y|u) + log f(D|u), -Λ01(T0|u) - Λ02(T0|u))` for one draw.
    fn evaluate(
        &self,
        theta: &SubjectTheta,
        draw: &DrawContext,
        q: usize,
        scratch: &mut Scratch,
    ) -> (f64, f64) {
        let b = &draw.u[..q];
        let mut long = 0.0;
        for (v, xb) in self.visits.iter().zip(&theta.xb) {
            let zb: f64 = v.z.iter().zip(b).map(|(a, c)| a * c).sum();
            long += compound_symmetry_logdensity(
                v.n,
                v.ybar - xb - zb,
                v.ss,
                draw.sigma2,
                draw.kappa2,
                draw.ln_kappa2,
            );
        }
        let Some(event) = &self.event else {
            return (long, 0.0);
        };

        for i in 0..3 {
            let off = &theta.offset[i];
            let cf = &theta.coef[i];
            let lh = &mut scratch.log_h[i];
            let h = &mut scratch.h[i];
            lh.clear();
            h.clear();
            let shift = draw.shift[i];
            for (n, &o) in off.iter().enumerate() {
                let mut v = o + shift;
                for j in 0..q {
                    v += cf[n * q + j] * b[j];
                }
                lh.push(v);
                h.push(v.exp());
            }
        }
        let h = &scratch.h;
        let lh = &scratch.log_h;
        let cum = |i: usize, s: &Segment| -> f64 {
            let hs = &h[i][s.start..s.start + GK15_POINTS];
            hs.iter().zip(&s.w).map(|(a, w)| a * w).sum()
        };
        let at = |i: usize, idx: Option<usize>| idx.map_or(0.0, |k| lh[i][k]);

        let log_event = match event {
            EventPlan::HealthyAtT { s01, s02, death02 } => -cum(0, s01) - cum(1, s02) + at(1, *death02),
            EventPlan::Exact {
                s01,
                s02,
                s12,
                onset01,
                death12,
            } => -cum(0, s01) - cum(1, s02) + lh[0][*onset01] - cum(2, s12) + at(2, *death12),
            EventPlan::Bracket {
                ln_w,
                s01,
                s02,
                s12,
                onset01,
                death12,
                healthy,
            } => {
                let mut terms = [0.0; GK15_POINTS];
                for k in 0..GK15_POINTS {
                    terms[k] = ln_w[k] - cum(0, &s01[k]) - cum(1, &s02[k]) + lh[0][onset01[k]]
                        - cum(2, &s12[k]);
                }
                let ill = log_sum_exp(&terms) + at(2, *death12);
                match healthy {
                    None => ill,
                    Some((a, c, d)) => log_add_exp(-cum(0, a) - cum(1, c) + at(1, *d), ill),
                }
            }
        };
        let entry = self
            .entry
            .as_ref()
            .map_or(0.0, |(a, c)| -cum(0, a) - cum(1, c));
        (long + log_event, entry)
    }
}

#[inline]
fn log_baseline(baseline: &crate::model::BaselineParams, t: f64, ln_t: f64) -> f64 {
    use crate::model::BaselineParams;
    match *baseline {
        BaselineParams::Exponential { zeta } => zeta,
        BaselineParams::Weibull { sqrt_eta, zeta } => {
            let eta = sqrt_eta * sqrt_eta;
            if eta == 0.0 {
                f64::NEG_INFINITY
            } else if eta == 1.0 {
                zeta
            } else if t == 0.0 && eta > 1.0 {
                f64::NEG_INFINITY
            } else {
                eta.ln() + (eta - 1.0) * ln_t + zeta
            }
        }
    }
}

struct SubjectTheta {
    xb: Vec<f64>,
    offset: [Vec<f64>; 3],
    coef: [Vec<f64>; 3],
}

#[derive(Default)]
struct Scratch {
    log_h: [Vec<f64>; 3],
    h: [Vec<f64>; 3],
    num: Vec<f64>,
    den: Vec<f64>,
}

/// Parameter-dependent quantities of one random-effect draw.
#[derive(Debug, Clone)]
pub struct DrawContext {
    u: Vec<f64>,
    sigma2: f64,
    kappa2: f64,
    ln_kappa2: f64,
    shift: [f64; 3],
}

impl DrawContext {
    pub fn new(spec: &ModelSpec, params: &ParameterSet, u: Vec<f64>) -> Self {
        let q = spec.n_random();
        let (sigma, kappa) = residual_scales(params.mu_sigma, params.mu_kappa, u[q], u[q + 1]);
        let shift = Transition::ALL.map(|kl| {
            let t = params.transition(kl);
            t.alpha_sigma * sigma + t.alpha_kappa * kappa
        });
        DrawContext {
            sigma2: sigma * sigma,
            kappa2: kappa * kappa,
            ln_kappa2: 2.0 * (params.mu_kappa + u[q + 1]),
            shift,
            u,
        }
    }
}

/// Evaluates marginal log-likelihoods for a fixed dataset and draw set.
pub struct LikelihoodEngine {
    spec: ModelSpec,
    plans: Vec<SubjectPlan>,
    draws: Arc<NormalDraws>,
    with_events: bool,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl LikelihoodEngine {
    /// `with_events = false` gives the marker-only marginal likelihood.
    pub fn new(spec: &ModelSpec, dataset: &[SubjectData], cfg: QmcConfig, with_events: bool) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        if cfg.dimension != spec.n_effects() {
            return Err(Error::Dimension(format!(
                "QMC dimension {} but the model has {} random effects",
                cfg.dimension,
                spec.n_effects()
            )));
        }
        let plans = dataset
            .iter()
            .map(|s| {
                s.validate()?;
                SubjectPlan::new(spec, s, with_events)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LikelihoodEngine {
            spec: spec.clone(),
            plans,
            draws: Arc::new(NormalDraws::generate(cfg)?),
            with_events,
            pool: None,
        })
    }

    pub fn with_pool(mut self, pool: Option<Arc<rayon::ThreadPool>>) -> Self {
        self.pool = pool;
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn qmc(&self) -> QmcConfig {
        self.draws.config
    }

    pub fn n_subjects(&self) -> usize {
        self.plans.len()
    }

    pub fn plans(&self) -> &[SubjectPlan] {
        &self.plans
    }

    pub fn includes_events(&self) -> bool {
        self.with_events
    }

    fn draw_contexts(&self, params: &ParameterSet) -> Vec<DrawContext> {
        let l = RandomEffectsDistribution::new(&self.spec, params).chol;
        let d = l.nrows();
        (0..self.draws.len())
            .map(|s| {
                let z = self.draws.row(s);
                let u = (0..d).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect();
                DrawContext::new(&self.spec, params, u)
            })
            .collect()
    }

    fn subject_value(
        &self,
        plan: &SubjectPlan,
        params: &ParameterSet,
        draws: &[DrawContext],
        scratch: &mut Scratch,
    ) -> Result<f64> {
        let theta = plan.prepare(&self.spec, params);
        let q = self.spec.n_random();
        let mut num = std::mem::take(&mut scratch.num);
        let mut den = std::mem::take(&mut scratch.den);
        num.clear();
        den.clear();
        for d in draws {
            let (a, b) = plan.evaluate(&theta, d, q, scratch);
            num.push(a);
            den.push(b);
        }
        let bad = num.iter().chain(&den).any(|v| v.is_nan() || *v == f64::INFINITY);
        let ln_s = (draws.len() as f64).ln();
        let numerator = log_sum_exp(&num) - ln_s;
        let denominator = if plan.entry.is_some() { log_sum_exp(&den) - ln_s } else { 0.0 };
        scratch.num = num;
        scratch.den = den;
        if bad {
            return Err(Error::evaluation(&plan.id, "non-finite intermediate"));
        }
        let value = numerator - denominator;
        if !value.is_finite() {
            return Err(Error::evaluation(&plan.id, "all draws underflow"));
        }
        Ok(value)
    }

    /// Contributions in dataset order.
    pub fn subject_logliks(&self, params: &ParameterSet) -> Result<Vec<f64>> {
        params.check(&self.spec)?;
        let draws = self.draw_contexts(params);
        let run = || {
            self.plans
                .par_iter()
                .map_init(Scratch::default, |scratch, plan| {
                    self.subject_value(plan, params, &draws, scratch)
                })
                .collect::<Result<Vec<f64>>>()
        };
        match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }

    pub fn total(&self, params: &ParameterSet) -> Result<f64> {
        Ok(pairwise_sum(&self.subject_logliks(params)?))
    }

    /// `log f(Y_i | u) + log f(D_i | u)` at a given effect vector, without
    /// the delayed-entry term; `with_events = false` drops the event part.
    pub fn conditional_loglik(&self, index: usize, params: &ParameterSet, u: &[f64]) -> f64 {
        let plan = &self.plans[index];
        let theta = plan.prepare(&self.spec, params);
        let ctx = DrawContext::new(&self.spec, params, u.to_vec());
        let mut scratch = Scratch::default();
        plan.evaluate(&theta, &ctx, self.spec.n_random(), &mut scratch).0
    }

    /// Node counts per transition, for cost diagnostics.
    pub fn node_counts(&self) -> Vec<[usize; 3]> {
        self.plans.iter().map(SubjectPlan::n_nodes).collect()
    }
}
