//! Model quantities: designs, the parameter vector, marker trajectories,
//! subject-specific residual scales and transition intensities.
//!
//! The marker follows a location-scale mixed model
//!
//! ```text
//! Y_ijl = X(t_ij)'beta + Z(t_ij)'b_i + eps_ij + nu_ijl
//! eps_ij ~ N(0, sigma_i^2),  log sigma_i = mu_sigma + tau_sigma_i
//! nu_ijl ~ N(0, kappa_i^2),  log kappa_i = mu_kappa + tau_kappa_i
//! ```
//!
//! and each transition `kl` of the illness-death model has intensity
//!
//! ```text
//! lambda_kl(t) = lambda0_kl(t) exp(W'gamma + a1 y(t) + a2 y'(t) + a_s sigma_i + a_k kappa_i)
//! ```
//!
//! `(b_i, tau_sigma_i, tau_kappa_i)` is Gaussian with covariance `L L'`, where
//! `L` is the lower-triangular factor carried in [`ParameterSet::chol`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::TimeScale;

/// The three transitions of the illness-death model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// healthy → ill (0→1)
    HealthyIll,
    /// healthy → dead (0→2)
    HealthyDead,
    /// ill → dead (1→2)
    IllDead,
}

impl Transition {
    pub const ALL: [Transition; 3] = [
        Transition::HealthyIll,
        Transition::HealthyDead,
        Transition::IllDead,
    ];

    pub fn index(self) -> usize {
        match self {
            Transition::HealthyIll => 0,
            Transition::HealthyDead => 1,
            Transition::IllDead => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Transition::HealthyIll => "01",
            Transition::HealthyDead => "02",
            Transition::IllDead => "12",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineFamily {
    Weibull,
    Exponential,
}

/// Which marker features enter a transition intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationSet {
    pub current_value: bool,
    pub slope: bool,
    pub between_visit: bool,
    pub within_visit: bool,
}

impl AssociationSet {
    pub const ALL: AssociationSet = AssociationSet {
        current_value: true,
        slope: true,
        between_visit: true,
        within_visit: true,
    };
    pub const NONE: AssociationSet = AssociationSet {
        current_value: false,
        slope: false,
        between_visit: false,
        within_visit: false,
    };
}

impl Default for AssociationSet {
    fn default() -> Self {
        AssociationSet::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub baseline: BaselineFamily,
    pub n_covariates: usize,
    pub association: AssociationSet,
}

impl Default for TransitionSpec {
    fn default() -> Self {
        TransitionSpec {
            baseline: BaselineFamily::Weibull,
            n_covariates: 0,
            association: AssociationSet::ALL,
        }
    }
}

/// Structure of the joint model. Fixed and random designs are polynomials in
/// time given by their powers; the fixed design is followed by the subject's
/// time-constant marker covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub time_scale: TimeScale,
    pub fixed_powers: Vec<u32>,
    pub n_marker_covariates: usize,
    pub random_powers: Vec<u32>,
    pub transitions: [TransitionSpec; 3],
    /// Structural zeros between `b` and `tau` in the Cholesky factor.
    pub independent_variability: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            time_scale: TimeScale::default(),
            fixed_powers: vec![0, 1],
            n_marker_covariates: 0,
            random_powers: vec![0, 1],
            transitions: [TransitionSpec::default(); 3],
            independent_variability: true,
        }
    }
}

impl ModelSpec {
    pub fn with_hazard_covariates(mut self, n: usize) -> Self {
        for t in &mut self.transitions {
            t.n_covariates = n;
        }
        self
    }

    pub fn transition(&self, kl: Transition) -> &TransitionSpec {
        &self.transitions[kl.index()]
    }

    /// Number of fixed effects, `dim beta`.
    pub fn n_fixed(&self) -> usize {
        self.fixed_powers.len() + self.n_marker_covariates
    }

    /// Number of marker random effects, `q = dim b`.
    pub fn n_random(&self) -> usize {
        self.random_powers.len()
    }

    /// Dimension of the full random-effect vector `(b, tau_sigma, tau_kappa)`.
    pub fn n_effects(&self) -> usize {
        self.n_random() + 2
    }

    /// Whether entry `(row, col)` of the Cholesky factor is a free parameter.
    pub fn chol_entry_free(&self, row: usize, col: usize) -> bool {
        let q = self.n_random();
        col <= row && !(self.independent_variability && row >= q && col < q)
    }

    pub fn fixed_row(&self, t: f64, covariates: &[f64], out: &mut [f64]) {
        let k = self.fixed_powers.len();
        for (o, &p) in out.iter_mut().zip(&self.fixed_powers) {
            *o = powi(t, p);
        }
        out[k..k + covariates.len()].copy_from_slice(covariates);
    }

    pub fn fixed_row_slope(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (o, &p) in out.iter_mut().zip(&self.fixed_powers) {
            *o = dpowi(t, p);
        }
    }

    pub fn random_row(&self, t: f64, out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(&self.random_powers) {
            *o = powi(t, p);
        }
    }

    pub fn random_row_slope(&self, t: f64, out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(&self.random_powers) {
            *o = dpowi(t, p);
        }
    }

    /// Current value and slope of the subject-specific mean trajectory.
    pub fn trajectory(
        &self,
        t: f64,
        marker_covariates: &[f64],
        beta: &[f64],
        b: &[f64],
    ) -> Result<Trajectory> {
        if beta.len() != self.n_fixed() {
            return Err(Error::Dimension(format!(
                "beta has {} entries, design has {}",
                beta.len(),
                self.n_fixed()
            )));
        }
        if b.len() != self.n_random() {
            return Err(Error::Dimension(format!(
                "b has {} entries, random design has {}",
                b.len(),
                self.n_random()
            )));
        }
        if marker_covariates.len() != self.n_marker_covariates {
            return Err(Error::Dimension(format!(
                "{} marker covariates supplied, model expects {}",
                marker_covariates.len(),
                self.n_marker_covariates
            )));
        }
        let mut value = 0.0;
        let mut slope = 0.0;
        for (i, &p) in self.fixed_powers.iter().enumerate() {
            value += powi(t, p) * beta[i];
            slope += dpowi(t, p) * beta[i];
        }
        let k = self.fixed_powers.len();
        for (x, bt) in marker_covariates.iter().zip(&beta[k..]) {
            value += x * bt;
        }
        for (i, &p) in self.random_powers.iter().enumerate() {
            value += powi(t, p) * b[i];
            slope += dpowi(t, p) * b[i];
        }
        Ok(Trajectory { value, slope })
    }
}

#[inline]
fn powi(t: f64, p: u32) -> f64 {
    match p {
        0 => 1.0,
        1 => t,
        _ => t.powi(p as i32),
    }
}

#[inline]
fn dpowi(t: f64, p: u32) -> f64 {
    match p {
        0 => 0.0,
        1 => 1.0,
        _ => p as f64 * t.powi(p as i32 - 1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub value: f64,
    pub slope: f64,
}

/// Baseline intensity parameters. The Weibull shape is carried as
/// `sqrt_eta` so that `eta = sqrt_eta^2 >= 0` without constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BaselineParams {
    Weibull { sqrt_eta: f64, zeta: f64 },
    Exponential { zeta: f64 },
}

impl BaselineParams {
    pub fn family(&self) -> BaselineFamily {
        match self {
            BaselineParams::Weibull { .. } => BaselineFamily::Weibull,
            BaselineParams::Exponential { .. } => BaselineFamily::Exponential,
        }
    }

    pub fn zeta(&self) -> f64 {
        match *self {
            BaselineParams::Weibull { zeta, .. } | BaselineParams::Exponential { zeta } => zeta,
        }
    }

    pub fn eta(&self) -> f64 {
        match *self {
            BaselineParams::Weibull { sqrt_eta, .. } => sqrt_eta * sqrt_eta,
            BaselineParams::Exponential { .. } => 1.0,
        }
    }

    /// Log of the baseline intensity; `-inf` where the intensity is zero.
    /// Callers guarantee `t > 0` or a non-singular shape.
    #[inline]
    pub fn log_rate(&self, t: f64) -> f64 {
        match *self {
            BaselineParams::Exponential { zeta } => zeta,
            BaselineParams::Weibull { sqrt_eta, zeta } => {
                let eta = sqrt_eta * sqrt_eta;
                if eta == 0.0 {
                    f64::NEG_INFINITY
                } else if eta == 1.0 {
                    zeta
                } else {
                    eta.ln() + (eta - 1.0) * t.ln() + zeta
                }
            }
        }
    }

    /// Closed-form cumulative baseline intensity from 0 to `t`.
    pub fn cumulative(&self, t: f64) -> f64 {
        match *self {
            BaselineParams::Exponential { zeta } => zeta.exp() * t,
            BaselineParams::Weibull { zeta, .. } => {
                let eta = self.eta();
                if eta == 0.0 {
                    0.0
                } else {
                    t.powf(eta) * zeta.exp()
                }
            }
        }
    }
}

/// Baseline intensity `eta t^(eta-1) e^zeta` (Weibull) or `e^zeta` (exponential).
pub fn baseline_hazard(baseline: &BaselineParams, t: f64) -> Result<f64> {
    if let BaselineParams::Weibull { .. } = baseline {
        let eta = baseline.eta();
        if t < 0.0 || (t == 0.0 && eta < 1.0 && eta > 0.0) {
            return Err(Error::Singularity { t, eta });
        }
        if t == 0.0 && eta > 1.0 {
            return Ok(0.0);
        }
    }
    Ok(baseline.log_rate(t).exp())
}

/// Per-transition regression, association and baseline parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    pub gamma: Vec<f64>,
    pub alpha_value: f64,
    pub alpha_slope: f64,
    pub alpha_sigma: f64,
    pub alpha_kappa: f64,
    pub baseline: BaselineParams,
}

impl TransitionParams {
    pub fn new(spec: &TransitionSpec) -> Self {
        TransitionParams {
            gamma: vec![0.0; spec.n_covariates],
            alpha_value: 0.0,
            alpha_slope: 0.0,
            alpha_sigma: 0.0,
            alpha_kappa: 0.0,
            baseline: match spec.baseline {
                BaselineFamily::Weibull => BaselineParams::Weibull {
                    sqrt_eta: 1.0,
                    zeta: 0.0,
                },
                BaselineFamily::Exponential => BaselineParams::Exponential { zeta: 0.0 },
            },
        }
    }

    /// Linear predictor contribution of the marker features.
    #[inline]
    pub fn association_term(&self, traj: Trajectory, sigma: f64, kappa: f64) -> f64 {
        self.alpha_value * traj.value
            + self.alpha_slope * traj.slope
            + self.alpha_sigma * sigma
            + self.alpha_kappa * kappa
    }

    pub fn covariate_term(&self, w: &[f64]) -> f64 {
        self.gamma.iter().zip(w).map(|(g, x)| g * x).sum()
    }
}

/// Full parameter vector of the joint model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub beta: Vec<f64>,
    pub mu_sigma: f64,
    pub mu_kappa: f64,
    /// Lower-triangular factor, row-major, `(q+2) x (q+2)`.
    pub chol: Vec<Vec<f64>>,
    pub transitions: [TransitionParams; 3],
}

impl ParameterSet {
    /// All-zero fixed effects and associations, identity factor, unit baselines.
    pub fn initial(spec: &ModelSpec) -> Self {
        let d = spec.n_effects();
        let mut chol = vec![vec![0.0; d]; d];
        for (i, row) in chol.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        ParameterSet {
            beta: vec![0.0; spec.n_fixed()],
            mu_sigma: 0.0,
            mu_kappa: 0.0,
            chol,
            transitions: [
                TransitionParams::new(&spec.transitions[0]),
                TransitionParams::new(&spec.transitions[1]),
                TransitionParams::new(&spec.transitions[2]),
            ],
        }
    }

    pub fn transition(&self, kl: Transition) -> &TransitionParams {
        &self.transitions[kl.index()]
    }

    pub fn transition_mut(&mut self, kl: Transition) -> &mut TransitionParams {
        &mut self.transitions[kl.index()]
    }

    pub fn chol_matrix(&self) -> DMatrix<f64> {
        let d = self.chol.len();
        DMatrix::from_fn(d, d, |i, j| if j <= i { self.chol[i][j] } else { 0.0 })
    }

    pub fn set_chol_matrix(&mut self, l: &DMatrix<f64>) {
        let d = l.nrows();
        self.chol = (0..d)
            .map(|i| (0..d).map(|j| if j <= i { l[(i, j)] } else { 0.0 }).collect())
            .collect();
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.chol_matrix();
        &l * l.transpose()
    }

    /// Sets the factor from a covariance matrix (lower Cholesky; zero rows
    /// where the matrix is singular along a coordinate).
    pub fn set_covariance(&mut self, cov: &DMatrix<f64>) -> Result<()> {
        let l = cholesky_psd(cov)?;
        self.set_chol_matrix(&l);
        Ok(())
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.beta.len() != spec.n_fixed() {
            return Err(Error::Dimension(format!(
                "beta has {} entries, model expects {}",
                self.beta.len(),
                spec.n_fixed()
            )));
        }
        let d = spec.n_effects();
        if self.chol.len() != d || self.chol.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension(format!("Cholesky factor must be {d} x {d}")));
        }
        for (t, s) in self.transitions.iter().zip(&spec.transitions) {
            if t.gamma.len() != s.n_covariates {
                return Err(Error::Dimension(format!(
                    "gamma has {} entries, model expects {}",
                    t.gamma.len(),
                    s.n_covariates
                )));
            }
            if t.baseline.family() != s.baseline {
                return Err(Error::Dimension("baseline family mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Cholesky factor of a positive semidefinite matrix; coordinates with zero
/// residual variance get a zero column instead of failing.
pub fn cholesky_psd(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    if cov.ncols() != d {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    let mut l = DMatrix::<f64>::zeros(d, d);
    let scale = (0..d).map(|i| cov[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    for j in 0..d {
        let mut diag = cov[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag < -1e-12 * scale {
            return Err(Error::InvalidInput("covariance is not positive semidefinite".into()));
        }
        if diag <= 1e-14 * scale {
            continue;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..d {
            let mut s = cov[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Subject-specific residual standard deviations
/// `(exp(mu_sigma + tau_sigma), exp(mu_kappa + tau_kappa))`.
#[inline]
pub fn residual_scales(mu_sigma: f64, mu_kappa: f64, tau_sigma: f64, tau_kappa: f64) -> (f64, f64) {
    ((mu_sigma + tau_sigma).exp(), (mu_kappa + tau_kappa).exp())
}

/// Intensity of transition `kl` at `t` given the marker trajectory and the
/// subject's residual scales.
pub fn transition_hazard(
    params: &TransitionParams,
    t: f64,
    covariates: &[f64],
    traj: Trajectory,
    sigma: f64,
    kappa: f64,
) -> Result<f64> {
    let base = baseline_hazard(&params.baseline, t)?;
    let lp = params.covariate_term(covariates) + params.association_term(traj, sigma, kappa);
    Ok(base * lp.exp())
}

/// One draw of the random effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffects {
    pub b: Vec<f64>,
    pub tau_sigma: f64,
    pub tau_kappa: f64,
}

impl RandomEffects {
    pub fn zero(q: usize) -> Self {
        RandomEffects {
            b: vec![0.0; q],
            tau_sigma: 0.0,
            tau_kappa: 0.0,
        }
    }

    pub fn from_slice(u: &[f64]) -> Self {
        let q = u.len() - 2;
        RandomEffects {
            b: u[..q].to_vec(),
            tau_sigma: u[q],
            tau_kappa: u[q + 1],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.b.clone();
        v.push(self.tau_sigma);
        v.push(self.tau_kappa);
        v
    }
}

/// Gaussian law of `(b, tau)` given by its Cholesky factor.
#[derive(Debug, Clone)]
pub struct RandomEffectsDistribution {
    pub chol: DMatrix<f64>,
    pub n_random: usize,
}

impl RandomEffectsDistribution {
    pub fn new(spec: &ModelSpec, params: &ParameterSet) -> Self {
        let mut chol = params.chol_matrix();
        let d = chol.nrows();
        for i in 0..d {
            for j in 0..d {
                if !spec.chol_entry_free(i, j) {
                    chol[(i, j)] = 0.0;
                }
            }
        }
        RandomEffectsDistribution {
            chol,
            n_random: spec.n_random(),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    pub fn sigma_b(&self) -> DMatrix<f64> {
        let q = self.n_random;
        self.covariance().view((0, 0), (q, q)).into_owned()
    }

    pub fn sigma_tau_b(&self) -> DMatrix<f64> {
        let q = self.n_random;
        self.covariance().view((q, 0), (2, q)).into_owned()
    }

    pub fn sigma_tau(&self) -> DMatrix<f64> {
        let q = self.n_random;
        self.covariance().view((q, q), (2, 2)).into_owned()
    }
}

/// Covariance `L L'` of the random effects; entries excluded by `mask`
/// (`mask[i][j] == false`) are zeroed in the factor before multiplying.
pub fn assemble_covariance(chol: &DMatrix<f64>, mask: Option<&[Vec<bool>]>) -> DMatrix<f64> {
    let d = chol.nrows();
    let l = DMatrix::from_fn(d, d, |i, j| {
        let keep = j <= i && mask.map_or(true, |m| m[i][j]);
        if keep {
            chol[(i, j)]
        } else {
            0.0
        }
    });
    &l * l.transpose()
}

/// Mask of free factor entries implied by the model's independence setting.
pub fn independence_mask(spec: &ModelSpec) -> Vec<Vec<bool>> {
    let d = spec.n_effects();
    (0..d)
        .map(|i| (0..d).map(|j| spec.chol_entry_free(i, j)).collect())
        .collect()
}

/// What a position of the flat parameter vector stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamSlot {
    Beta(usize),
    MuSigma,
    MuKappa,
    Chol(usize, usize),
    Gamma(Transition, usize),
    AlphaValue(Transition),
    AlphaSlope(Transition),
    AlphaSigma(Transition),
    AlphaKappa(Transition),
    SqrtEta(Transition),
    Zeta(Transition),
}

impl ParamSlot {
    pub fn name(&self) -> String {
        match *self {
            ParamSlot::Beta(i) => format!("beta{i}"),
            ParamSlot::MuSigma => "mu_sigma".into(),
            ParamSlot::MuKappa => "mu_kappa".into(),
            ParamSlot::Chol(i, j) => format!("chol{}{}", i + 1, j + 1),
            ParamSlot::Gamma(t, i) => format!("gamma{}_{}", i + 1, t.label()),
            ParamSlot::AlphaValue(t) => format!("alpha1_{}", t.label()),
            ParamSlot::AlphaSlope(t) => format!("alpha2_{}", t.label()),
            ParamSlot::AlphaSigma(t) => format!("alpha_sigma_{}", t.label()),
            ParamSlot::AlphaKappa(t) => format!("alpha_kappa_{}", t.label()),
            ParamSlot::SqrtEta(t) => format!("sqrt_eta_{}", t.label()),
            ParamSlot::Zeta(t) => format!("zeta_{}", t.label()),
        }
    }

    pub fn transition(&self) -> Option<Transition> {
        match *self {
            ParamSlot::Gamma(t, _)
            | ParamSlot::AlphaValue(t)
            | ParamSlot::AlphaSlope(t)
            | ParamSlot::AlphaSigma(t)
            | ParamSlot::AlphaKappa(t)
            | ParamSlot::SqrtEta(t)
            | ParamSlot::Zeta(t) => Some(t),
            _ => None,
        }
    }

    /// Regression coefficients on the log-intensity scale.
    pub fn is_log_hazard_coefficient(&self) -> bool {
        matches!(
            self,
            ParamSlot::Gamma(..)
                | ParamSlot::AlphaValue(_)
                | ParamSlot::AlphaSlope(_)
                | ParamSlot::AlphaSigma(_)
                | ParamSlot::AlphaKappa(_)
        )
    }
}

/// Bijection between [`ParameterSet`] and the flat vector the optimizer sees.
///
/// Order: `beta`, `mu_sigma`, `mu_kappa`, free Cholesky entries (row-major),
/// then per transition 01, 02, 12: `gamma`, flagged associations,
/// baseline parameters.
#[derive(Debug, Clone)]
pub struct ParameterLayout {
    spec: ModelSpec,
    slots: Vec<ParamSlot>,
}

impl ParameterLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut slots = Vec::new();
        slots.extend((0..spec.n_fixed()).map(ParamSlot::Beta));
        slots.push(ParamSlot::MuSigma);
        slots.push(ParamSlot::MuKappa);
        let d = spec.n_effects();
        for i in 0..d {
            for j in 0..=i {
                if spec.chol_entry_free(i, j) {
                    slots.push(ParamSlot::Chol(i, j));
                }
            }
        }
        for kl in Transition::ALL {
            let ts = spec.transition(kl);
            slots.extend((0..ts.n_covariates).map(|i| ParamSlot::Gamma(kl, i)));
            let a = ts.association;
            if a.current_value {
                slots.push(ParamSlot::AlphaValue(kl));
            }
            if a.slope {
                slots.push(ParamSlot::AlphaSlope(kl));
            }
            if a.between_visit {
                slots.push(ParamSlot::AlphaSigma(kl));
            }
            if a.within_visit {
                slots.push(ParamSlot::AlphaKappa(kl));
            }
            if ts.baseline == BaselineFamily::Weibull {
                slots.push(ParamSlot::SqrtEta(kl));
            }
            slots.push(ParamSlot::Zeta(kl));
        }
        ParameterLayout {
            spec: spec.clone(),
            slots,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn names(&self) -> Vec<String> {
        self.slots.iter().map(ParamSlot::name).collect()
    }

    pub fn index_of(&self, slot: ParamSlot) -> Option<usize> {
        self.slots.iter().position(|s| *s == slot)
    }

    pub fn get(&self, params: &ParameterSet, slot: ParamSlot) -> f64 {
        match slot {
            ParamSlot::Beta(i) => params.beta[i],
            ParamSlot::MuSigma => params.mu_sigma,
            ParamSlot::MuKappa => params.mu_kappa,
            ParamSlot::Chol(i, j) => params.chol[i][j],
            ParamSlot::Gamma(t, i) => params.transition(t).gamma[i],
            ParamSlot::AlphaValue(t) => params.transition(t).alpha_value,
            ParamSlot::AlphaSlope(t) => params.transition(t).alpha_slope,
            ParamSlot::AlphaSigma(t) => params.transition(t).alpha_sigma,
            ParamSlot::AlphaKappa(t) => params.transition(t).alpha_kappa,
            ParamSlot::SqrtEta(t) => match params.transition(t).baseline {
                BaselineParams::Weibull { sqrt_eta, .. } => sqrt_eta,
                BaselineParams::Exponential { .. } => 1.0,
            },
            ParamSlot::Zeta(t) => params.transition(t).baseline.zeta(),
        }
    }

    pub fn set(&self, params: &mut ParameterSet, slot: ParamSlot, value: f64) {
        match slot {
            ParamSlot::Beta(i) => params.beta[i] = value,
            ParamSlot::MuSigma => params.mu_sigma = value,
            ParamSlot::MuKappa => params.mu_kappa = value,
            ParamSlot::Chol(i, j) => params.chol[i][j] = value,
            ParamSlot::Gamma(t, i) => params.transition_mut(t).gamma[i] = value,
            ParamSlot::AlphaValue(t) => params.transition_mut(t).alpha_value = value,
            ParamSlot::AlphaSlope(t) => params.transition_mut(t).alpha_slope = value,
            ParamSlot::AlphaSigma(t) => params.transition_mut(t).alpha_sigma = value,
            ParamSlot::AlphaKappa(t) => params.transition_mut(t).alpha_kappa = value,
            ParamSlot::SqrtEta(t) => {
                if let BaselineParams::Weibull { sqrt_eta, .. } =
                    &mut params.transition_mut(t).baseline
                {
                    *sqrt_eta = value;
                }
            }
            ParamSlot::Zeta(t) => match &mut params.transition_mut(t).baseline {
                BaselineParams::Weibull { zeta, .. } | BaselineParams::Exponential { zeta } => {
                    *zeta = value
                }
            },
        }
    }

    pub fn pack(&self, params: &ParameterSet) -> Vec<f64> {
        self.slots.iter().map(|&s| self.get(params, s)).collect()
    }

    /// Rebuilds a parameter set; entries outside the layout (masked factor
    /// entries, unflagged associations) are zero.
    pub fn unpack(&self, theta: &[f64]) -> Result<ParameterSet> {
        if theta.len() != self.len() {
            return Err(Error::Dimension(format!(
                "parameter vector has {} entries, layout has {}",
                theta.len(),
                self.len()
            )));
        }
        let mut p = ParameterSet::initial(&self.spec);
        for row in &mut p.chol {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        for (&slot, &v) in self.slots.iter().zip(theta) {
            self.set(&mut p, slot, v);
        }
        Ok(p)
    }
}
