//! Marquardt-Levenberg maximization with finite-difference derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Bound on `max_k |Δθ_k| / max(|θ_k|, 1)`.
    pub tol_param: f64,
    /// Bound on the absolute change of the objective.
    pub tol_fn: f64,
    /// Bound on the relative distance to the maximum `g'(-H)^{-1}g / p`.
    pub tol_rdm: f64,
    pub initial_damping: f64,
    pub damping_growth: f64,
    pub damping_shrink: f64,
    /// Relative finite-difference step.
    pub h_rel: f64,
    /// Consecutive rejected trial steps before giving up.
    pub max_rejections: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 100,
            tol_param: 1e-5,
            tol_fn: 1e-5,
            tol_rdm: 1e-4,
            initial_damping: 1e-3,
            damping_growth: 10.0,
            damping_shrink: 0.1,
            h_rel: 1e-4,
            max_rejections: 25,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_param, self.tol_fn, self.tol_rdm, self.initial_damping, self.h_rel];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("optimizer tolerances, damping and step must be positive".into()));
        }
        if !(self.damping_growth > 1.0 && self.damping_shrink > 0.0 && self.damping_shrink < 1.0) {
            return Err(Error::InvalidInput(
                "damping factors must satisfy growth > 1 > shrink > 0".into(),
            ));
        }
        if self.max_iterations == 0 || self.max_rejections == 0 {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// JSON has no infinities; these are written as the strings `"inf"`,
/// `"-inf"` and `"NaN"` so that records round-trip.
pub mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "NaN" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected a number, got '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    #[serde(with = "extended_f64")]
    pub param: f64,
    #[serde(with = "extended_f64")]
    pub function: f64,
    #[serde(with = "extended_f64")]
    pub rdm: f64,
}

impl Criteria {
    fn satisfied(&self, cfg: &OptimizerConfig) -> bool {
        self.param < cfg.tol_param && self.function < cfg.tol_fn && self.rdm < cfg.tol_rdm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIterations,
    /// No ascent step found even under heavy damping.
    StepRejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    #[serde(with = "extended_f64")]
    pub value: f64,
    pub damping: f64,
    #[serde(with = "extended_f64")]
    pub rdm: f64,
    #[serde(with = "extended_f64")]
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Hessian of the objective at the last derivative evaluation.
    pub hessian: DMatrix<f64>,
    pub status: Status,
    pub criteria: Criteria,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective value after each accepted step, starting with `θ0`.
    pub trace: Vec<TraceEntry>,
}

impl OptimResult {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

fn steps(theta: &[f64], h_rel: f64) -> Vec<f64> {
    theta.iter().map(|t| h_rel * t.abs().max(1.0)).collect()
}

/// Value, central-difference gradient and Hessian from `p² + p + 1`
/// evaluations. The Hessian is symmetric by construction.
pub fn derivatives<F>(f: &mut F, theta: &[f64], h_rel: f64) -> Result<(f64, Vec<f64>, DMatrix<f64>)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let p = theta.len();
    let h = steps(theta, h_rel);
    let f0 = f(theta)?;
    let mut x = theta.to_vec();
    let mut plus = vec![0.0; p];
    let mut minus = vec![0.0; p];
    for i in 0..p {
        x[i] = theta[i] + h[i];
        plus[i] = f(&x)?;
        x[i] = theta[i] - h[i];
        minus[i] = f(&x)?;
        x[i] = theta[i];
    }
    let mut hess = DMatrix::zeros(p, p);
    for i in 0..p {
        hess[(i, i)] = (plus[i] - 2.0 * f0 + minus[i]) / (h[i] * h[i]);
        for j in 0..i {
            x[i] = theta[i] + h[i];
            x[j] = theta[j] + h[j];
            let fpp = f(&x)?;
            x[i] = theta[i] - h[i];
            x[j] = theta[j] - h[j];
            let fmm = f(&x)?;
            x[i] = theta[i];
            x[j] = theta[j];
            let v = (fpp - plus[i] - plus[j] + 2.0 * f0 - minus[i] - minus[j] + fmm) / (2.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let grad = (0..p).map(|i| (plus[i] - minus[i]) / (2.0 * h[i])).collect();
    for v in [f0].iter().chain(&plus).chain(&minus) {
        if !v.is_finite() {
            return Err(Error::InvalidInput("objective not finite at a probe point".into()));
        }
    }
    Ok((f0, grad, hess))
}

/// Central second-difference Hessian with steps `h_rel·max(|θ_k|, 1)`.
pub fn numeric_hessian<F>(mut f: F, theta: &[f64], h_rel: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let (_, _, h) = derivatives(&mut f, theta, h_rel)?;
    let sym = (&h + h.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite Hessian entry".into()));
    }
    Ok(sym)
}

fn rdm(grad: &DVector<f64>, neg_hess: &DMatrix<f64>) -> (f64, Option<DVector<f64>>) {
    match neg_hess.clone().cholesky() {
        Some(ch) => {
            let step = ch.solve(grad);
            let p = grad.len().max(1) as f64;
            (grad.dot(&step) / p, Some(step))
        }
        None => (f64::INFINITY, None),
    }
}

fn relative_change(step: &[f64], theta: &[f64]) -> f64 {
    step.iter()
        .zip(theta)
        .map(|(d, t)| d.abs() / t.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Maximizes `f` from `theta0`.
pub fn marquardt_levenberg<F>(mut f: F, theta0: &[f64], cfg: &OptimizerConfig) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let p = theta0.len();
    let mut evaluations = 0usize;
    let mut counted = |x: &[f64]| {
        evaluations += 1;
        f(x)
    };
    let mut theta = theta0.to_vec();
    let mut value = counted(&theta)?;
    if !value.is_finite() {
        return Err(Error::InvalidInput(format!("objective is {value} at the starting point")));
    }
    let mut trace = vec![TraceEntry {
        iteration: 0,
        value,
        damping: cfg.initial_damping,
        rdm: f64::NAN,
        step: 0.0,
    }];
    if p == 0 {
        return Ok(OptimResult {
            theta,
            value,
            gradient: vec![],
            hessian: DMatrix::zeros(0, 0),
            status: Status::Converged,
            criteria: Criteria { param: 0.0, function: 0.0, rdm: 0.0 },
            iterations: 0,
            evaluations,
            trace,
        });
    }

    let mut damping = cfg.initial_damping;
    let mut last: Option<(f64, f64)> = None;
    let mut iterations = 0;
    loop {
        let (_, grad, hess) = derivatives(&mut counted, &theta, cfg.h_rel)?;
        let g = DVector::from_vec(grad.clone());
        let neg = -&hess;
        let (rdm_value, newton) = rdm(&g, &neg);
        let criteria = match last {
            Some((param, function)) => Criteria { param, function, rdm: rdm_value },
            None => match &newton {
                Some(d) => Criteria {
                    param: relative_change(d.as_slice(), &theta),
                    function: 0.5 * g.dot(d),
                    rdm: rdm_value,
                },
                None => Criteria { param: f64::INFINITY, function: f64::INFINITY, rdm: rdm_value },
            },
        };
        let finish = |status, theta: Vec<f64>, value, trace, iterations, evaluations| OptimResult {
            theta,
            value,
            gradient: grad.clone(),
            hessian: hess.clone(),
            status,
            criteria,
            iterations,
            evaluations,
            trace,
        };
        if criteria.satisfied(cfg) {
            return Ok(finish(Status::Converged, theta, value, trace, iterations, evaluations));
        }
        if iterations >= cfg.max_iterations {
            return Ok(finish(Status::MaxIterations, theta, value, trace, iterations, evaluations));
        }
        iterations += 1;

        let mut rejections = 0;
        let accepted = loop {
            let mut a = neg.clone();
            for i in 0..p {
                a[(i, i)] += damping * neg[(i, i)].abs().max(1.0);
            }
            let trial = a.cholesky().map(|ch| ch.solve(&g));
            if let Some(d) = trial {
                let candidate: Vec<f64> = theta.iter().zip(d.iter()).map(|(t, s)| t + s).collect();
                if let Ok(v) = counted(&candidate) {
                    if v.is_finite() && v >= value {
                        damping = (damping * cfg.damping_shrink).max(1e-12);
                        break Some((candidate, v, d));
                    }
                }
            }
            damping *= cfg.damping_growth;
            rejections += 1;
            if rejections >= cfg.max_rejections {
                break None;
            }
        };
        match accepted {
            Some((candidate, v, d)) => {
                last = Some((relative_change(d.as_slice(), &theta), v - value));
                theta = candidate;
                value = v;
                trace.push(TraceEntry {
                    iteration: iterations,
                    value,
                    damping,
                    rdm: rdm_value,
                    step: d.norm(),
                });
            }
            None => {
                log::warn!("no ascent step after {rejections} attempts; stopping");
                return Ok(finish(Status::StepRejected, theta, value, trace, iterations, evaluations));
            }
        }
    }
}
