#![allow(dead_code)]

use lsidm::data::{EventRecord, SubjectData, VisitBlock};
use lsidm::model::{ParameterLayout, ParameterSet};
use lsidm::simulation::scenario_preset;
use lsidm::{LikelihoodEngine, ModelSpec, QmcConfig};
use nalgebra::{DMatrix, DVector};

/// Log-density of `N(mean, cov)` at `x` through a dense Cholesky factor.
pub fn dense_mvn_logpdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let ch = cov.clone().cholesky().expect("covariance is positive definite");
    let r = DVector::from_iterator(n, x.iter().zip(mean).map(|(a, b)| a - b));
    let z = ch.l().solve_lower_triangular(&r).unwrap();
    let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared())
}

/// Compound-symmetry covariance of one visit with `n` measurements.
pub fn compound_symmetry(n: usize, sigma: f64, kappa: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| sigma * sigma + if i == j { kappa * kappa } else { 0.0 })
}

pub fn scenario_a() -> (ModelSpec, ParameterSet) {
    let p = scenario_preset("A").unwrap();
    (p.spec, p.truth)
}

/// One subject seen four times, diagnosed between the last two visits and
/// dead shortly after.
pub fn toy_subject() -> SubjectData {
    let visits = vec![
        VisitBlock::new(0.5, vec![14.3, 13.8]),
        VisitBlock::new(0.7, vec![15.1, 14.6]),
        VisitBlock::new(0.9, vec![13.2, 13.9]),
        VisitBlock::new(1.1, vec![16.0, 15.2]),
    ];
    SubjectData::new("toy", visits, EventRecord::new(0.5, 0.9, Some(1.1), 1.3, true))
}

/// Log-likelihood as a function of the named coordinates, the others held
/// at `base`.
pub struct Restricted {
    pub engine: LikelihoodEngine,
    pub layout: ParameterLayout,
    pub base: Vec<f64>,
    pub index: Vec<usize>,
}

impl Restricted {
    pub fn new(spec: &ModelSpec, data: &[SubjectData], base: &ParameterSet, names: &[&str], draws: usize) -> Self {
        let layout = ParameterLayout::new(spec);
        let all = layout.names();
        let index = names.iter().map(|n| all.iter().position(|a| a == n).expect(n)).collect();
        let engine = LikelihoodEngine::new(spec, data, QmcConfig::new(draws, spec.n_effects()), true).unwrap();
        Restricted { base: layout.pack(base), engine, layout, index }
    }

    pub fn start(&self) -> Vec<f64> {
        self.index.iter().map(|&i| self.base[i]).collect()
    }

    pub fn eval(&self, x: &[f64]) -> lsidm::Result<f64> {
        let mut theta = self.base.clone();
        for (k, &i) in self.index.iter().enumerate() {
            theta[i] = x[k];
        }
        self.engine.total(&self.layout.unpack(&theta)?)
    }
}
