//! Data generation for the simulation scenarios.
//!
//! Latent event times are drawn by inverting the cumulative intensities
//! conditional on a subject's random effects, then passed through the visit
//! schedule to produce interval-censored observations.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};

use crate::data::{EventRecord, SubjectData, VisitBlock};
use crate::error::{Error, Result};
use crate::model::{
    residual_scales, transition_hazard, BaselineParams, ModelSpec, ParameterSet, RandomEffects,
    RandomEffectsDistribution, Transition,
};
use crate::quadrature::QuadratureRule;

/// Random-effect covariance used as simulation truth, ordered
/// `(b0, b1, tau_sigma, tau_kappa)`.
pub const DEFAULT_RE_COVARIANCE: [[f64; 4]; 4] = [
    [4.57, -1.86, 0.0, 0.0],
    [-1.86, 1.22, 0.0, 0.0],
    [0.0, 0.0, 0.07, 0.01],
    [0.0, 0.0, 0.01, 0.07],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    pub name: String,
    pub spec: ModelSpec,
    pub truth: ParameterSet,
    /// Follow-up visits, in years from inclusion.
    pub schedule_years: Vec<f64>,
    pub entry_window: (f64, f64),
    pub horizon_years: f64,
    pub n_subjects: usize,
    pub measurements_per_visit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Shape parameters of the Beta law of entry age over the entry window.
    pub entry_beta: (f64, f64),
    /// Half-width of the uniform visit jitter, in years.
    pub jitter_years: f64,
    /// Measurement visit at inclusion in addition to the schedule.
    pub baseline_visit: bool,
    pub brent_tolerance: f64,
    /// Upper end of the root bracket, on the model time scale.
    pub bracket_cap: f64,
    /// Redraws allowed while conditioning on being event-free at entry.
    pub max_truncation_draws: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 1,
            entry_beta: (2.0, 5.0),
            jitter_years: 1.0 / 12.0,
            baseline_visit: true,
            brent_tolerance: 1e-12,
            bracket_cap: 10.0,
            max_truncation_draws: 100_000,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self, preset: &ScenarioPreset) -> Result<()> {
        if !(self.entry_beta.0 > 0.0 && self.entry_beta.1 > 0.0) {
            return Err(Error::InvalidInput("Beta shape parameters must be positive".into()));
        }
        let mut min_gap = f64::INFINITY;
        let mut prev = if self.baseline_visit { Some(0.0) } else { None };
        for &s in &preset.schedule_years {
            if let Some(p) = prev {
                if s <= p {
                    return Err(Error::InvalidInput("visit schedule must be strictly increasing".into()));
                }
                min_gap = min_gap.min(s - p);
            }
            prev = Some(s);
        }
        let baseline_gap = if self.baseline_visit { 2.0 } else { 1.0 };
        if !(self.jitter_years >= 0.0) || baseline_gap * self.jitter_years >= min_gap {
            return Err(Error::InvalidInput(format!(
                "jitter {} is not below half the minimum visit gap {min_gap}",
                self.jitter_years
            )));
        }
        if !(self.brent_tolerance > 0.0) || !(self.bracket_cap > 0.0) {
            return Err(Error::InvalidInput("Brent tolerance and bracket cap must be positive".into()));
        }
        Ok(())
    }
}

fn truth_covariance() -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |i, j| DEFAULT_RE_COVARIANCE[i][j])
}

fn set_transition(p: &mut ParameterSet, kl: Transition, alpha: [f64; 4], sqrt_eta: f64, zeta: f64) {
    let t = p.transition_mut(kl);
    t.alpha_value = alpha[0];
    t.alpha_slope = alpha[1];
    t.alpha_sigma = alpha[2];
    t.alpha_kappa = alpha[3];
    t.baseline = BaselineParams::Weibull { sqrt_eta, zeta };
}

/// Scenario A (dense schedule), B (sparse schedule) or C (stronger associations).
pub fn scenario_preset(name: &str) -> Result<ScenarioPreset> {
    let key = name.trim().to_ascii_uppercase();
    let spec = ModelSpec::default();
    let mut truth = ParameterSet::initial(&spec);
    truth.beta = vec![14.0, 0.17];
    truth.mu_sigma = 0.30;
    truth.mu_kappa = -0.23;
    truth.set_covariance(&truth_covariance())?;
    let schedule_a = vec![2.0, 4.0, 7.0, 10.0, 12.0, 14.0, 17.0];
    let schedule = match key.as_str() {
        "A" | "C" => schedule_a,
        "B" => vec![4.0, 8.0, 12.0, 16.0],
        _ => return Err(Error::UnknownScenario(name.to_string())),
    };
    if key == "C" {
        set_transition(&mut truth, Transition::HealthyIll, [0.20, 0.0, 0.80, 0.01], 2.00, -7.00);
        set_transition(&mut truth, Transition::HealthyDead, [0.30, 0.10, 0.20, 0.20], 1.70, -8.00);
        set_transition(&mut truth, Transition::IllDead, [0.15, 0.10, 0.80, 0.10], 1.70, -4.50);
    } else {
        set_transition(&mut truth, Transition::HealthyIll, [-0.06, 0.0, 0.50, 0.01], 2.00, -4.00);
        set_transition(&mut truth, Transition::HealthyDead, [-0.10, -0.40, 0.46, 0.21], 1.70, -2.50);
        set_transition(&mut truth, Transition::IllDead, [0.04, 0.02, -0.12, -0.18], 1.70, -2.20);
    }
    Ok(ScenarioPreset {
        name: key,
        spec,
        truth,
        schedule_years: schedule,
        entry_window: (65.0, 85.0),
        horizon_years: 20.0,
        n_subjects: 1000,
        measurements_per_visit: 2,
    })
}

/// Entry age and visit ages of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSchedule {
    pub entry_age: f64,
    pub baseline_visit: bool,
    /// Scheduled follow-up visits after jitter, before truncation by death.
    pub follow_up_ages: Vec<f64>,
}

impl SubjectSchedule {
    pub fn visit_ages(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.follow_up_ages.len() + 1);
        if self.baseline_visit {
            v.push(self.entry_age);
        }
        v.extend(&self.follow_up_ages);
        v
    }
}

pub fn generate_subject_schedule<R: Rng + ?Sized>(
    cfg: &GeneratorConfig,
    preset: &ScenarioPreset,
    rng: &mut R,
) -> Result<SubjectSchedule> {
    let beta = Beta::new(cfg.entry_beta.0, cfg.entry_beta.1)
        .map_err(|e| Error::InvalidInput(format!("entry-age law: {e}")))?;
    let (lo, hi) = preset.entry_window;
    let entry_age = lo + (hi - lo) * beta.sample(rng);
    let follow_up_ages = preset
        .schedule_years
        .iter()
        .map(|s| {
            let jitter = if cfg.jitter_years > 0.0 {
                rng.random_range(-cfg.jitter_years..=cfg.jitter_years)
            } else {
                0.0
            };
            entry_age + s + jitter
        })
        .collect();
    Ok(SubjectSchedule {
        entry_age,
        baseline_visit: cfg.baseline_visit,
        follow_up_ages,
    })
}

fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws `(b, tau)` from the model's Gaussian law.
pub fn draw_random_effects<R: Rng + ?Sized>(spec: &ModelSpec, params: &ParameterSet, rng: &mut R) -> RandomEffects {
    let l = RandomEffectsDistribution::new(spec, params).chol;
    let z = standard_normals(rng, l.nrows());
    let u: Vec<f64> = (0..l.nrows()).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect();
    RandomEffects::from_slice(&u)
}

/// Marker measurements at the given visit times for known random effects:
/// one between-visit error shared inside a visit plus independent
/// within-visit errors.
pub fn generate_marker<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &ParameterSet,
    effects: &RandomEffects,
    covariates: &[f64],
    times: &[f64],
    per_visit: usize,
    rng: &mut R,
) -> Result<Vec<VisitBlock>> {
    let (sigma, kappa) = residual_scales(params.mu_sigma, params.mu_kappa, effects.tau_sigma, effects.tau_kappa);
    times
        .iter()
        .map(|&t| {
            let m = spec.trajectory(t, covariates, &params.beta, &effects.b)?.value;
            let eps: f64 = StandardNormal.sample(rng);
            let ys = (0..per_visit)
                .map(|_| {
                    let nu: f64 = StandardNormal.sample(rng);
                    m + sigma * eps + kappa * nu
                })
                .collect();
            Ok(VisitBlock::new(t, ys))
        })
        .collect()
}

/// Draws the random effects, then the marker at `times`.
pub fn generate_random_effects_and_marker<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &ParameterSet,
    times: &[f64],
    per_visit: usize,
    rng: &mut R,
) -> Result<(RandomEffects, Vec<VisitBlock>)> {
    let effects = draw_random_effects(spec, params, rng);
    let visits = generate_marker(spec, params, &effects, &[], times, per_visit, rng)?;
    Ok((effects, visits))
}

/// Intensities of one subject with known random effects.
#[derive(Debug, Clone, Copy)]
pub struct LatentHazards<'a> {
    pub spec: &'a ModelSpec,
    pub params: &'a ParameterSet,
    pub effects: &'a RandomEffects,
    pub marker_covariates: &'a [f64],
    pub hazard_covariates: &'a [f64],
}

/// Widest panel of the composite rule used for generation.
const PANEL: f64 = 0.25;

impl LatentHazards<'_> {
    pub fn hazard(&self, kl: Transition, t: f64) -> Result<f64> {
        let traj = self
            .spec
            .trajectory(t, self.marker_covariates, &self.params.beta, &self.effects.b)?;
        let (sigma, kappa) = residual_scales(
            self.params.mu_sigma,
            self.params.mu_kappa,
            self.effects.tau_sigma,
            self.effects.tau_kappa,
        );
        transition_hazard(self.params.transition(kl), t, self.hazard_covariates, traj, sigma, kappa)
    }

    /// `Λ_kl(b) - Λ_kl(a)` by composite Gauss-Kronrod panels.
    pub fn cumulative(&self, kl: Transition, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        let rule = QuadratureRule::gauss_kronrod_15();
        let panels = ((b - a) / PANEL).ceil().max(1.0) as usize;
        let width = (b - a) / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let lo = a + k as f64 * width;
            let hi = if k + 1 == panels { b } else { lo + width };
            let (x, w) = rule.intensity_nodes(lo, hi);
            for (xi, wi) in x.iter().zip(&w) {
                total += wi * self.hazard(kl, *xi)?;
            }
        }
        Ok(total)
    }
}

/// Event time `T > from` with `Λ(T) - Λ(from) = -log(u)`, or `+∞` when the
/// target is not reached before `cap`.
pub fn invert_cumulative_hazard(
    hazards: &LatentHazards<'_>,
    kl: Transition,
    from: f64,
    u: f64,
    cap: f64,
    tolerance: f64,
) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidInput(format!("uniform draw {u} outside (0, 1)")));
    }
    let target = -u.ln();
    if cap <= from || hazards.cumulative(kl, from, cap)? < target {
        return Ok(f64::INFINITY);
    }
    // Tight bracket by doubling, so each evaluation integrates a short range.
    let mut lo = from;
    let mut hi = from + 0.5f64.min(cap - from);
    while hazards.cumulative(kl, from, hi)? < target {
        lo = hi;
        hi = (from + 2.0 * (hi - from)).min(cap);
    }
    let mut failure = None;
    let mut conv = SimpleConvergency { eps: tolerance, max_iter: 200 };
    let root = find_root_brent(
        lo,
        hi,
        |t: f64| match hazards.cumulative(kl, from, t) {
            Ok(v) => v - target,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        &mut conv,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    root.map_err(|e| Error::InvalidInput(format!("root finding failed for transition {}: {e:?}", kl.label())))
}

/// Observed record plus the number of visits that precede the terminal time.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub event: EventRecord,
    pub visits_kept: usize,
}

/// Applies the visit schedule to latent times: censoring at the horizon,
/// direct death, diagnosed or undiagnosed dementia, and removal of visits
/// after death. `visits` are sorted visit times, the first at or after entry.
pub fn apply_observation_scheme(
    t01: f64,
    t02: f64,
    t12: Option<f64>,
    entry: f64,
    visits: &[f64],
    horizon: f64,
) -> Result<Observation> {
    let before = |t: f64| visits.iter().filter(|&&v| v <= t).count();
    let last_visit = |n: usize| if n == 0 { entry } else { visits[n - 1] };
    let record = |l: f64, r: Option<f64>, t: f64, death: bool| EventRecord::new(entry, l, r, t, death);

    if t01 > horizon && t02 > horizon {
        let n = before(horizon);
        return Ok(Observation { event: record(last_visit(n), None, horizon, false), visits_kept: n });
    }
    if t02 < t01 {
        let n = before(t02);
        return Ok(Observation { event: record(last_visit(n), None, t02, true), visits_kept: n });
    }
    let t12 = t12.ok_or_else(|| Error::InvalidInput("dementia before death requires T12".into()))?;
    let (terminal, death) = if t12 > horizon { (horizon, false) } else { (t12, true) };
    let n = before(terminal);
    let seen = &visits[..n];
    match seen.iter().position(|&v| v >= t01) {
        None => Ok(Observation { event: record(last_visit(n), None, terminal, death), visits_kept: n }),
        Some(k) => {
            let l = if k == 0 { entry } else { seen[k - 1] };
            Ok(Observation { event: record(l, Some(seen[k]), terminal, death), visits_kept: n })
        }
    }
}

/// Latent quantities kept alongside the observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSubject {
    pub effects: RandomEffects,
    pub t01: f64,
    pub t02: f64,
    pub t12: Option<f64>,
    /// Truncation redraws needed before the subject was event-free at entry.
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub subjects: Vec<SubjectData>,
    pub latent: Vec<LatentSubject>,
}

/// Independent stream for `(replicate, subject)` under one seed.
pub fn subject_rng(seed: u64, replicate: u64, subject: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replicate << 32) ^ subject);
    rng
}

/// Generates one subject, conditional on being alive and dementia-free at
/// entry (redrawing effects and event times otherwise).
pub fn generate_subject(
    preset: &ScenarioPreset,
    cfg: &GeneratorConfig,
    replicate: u64,
    index: u64,
) -> Result<(SubjectData, LatentSubject)> {
    let spec = &preset.spec;
    let params = &preset.truth;
    let scale = spec.time_scale;
    let mut rng = subject_rng(cfg.seed, replicate, index);
    let schedule = generate_subject_schedule(cfg, preset, &mut rng)?;
    let entry = scale.snap(scale.transform(schedule.entry_age));
    let horizon = scale.snap(scale.transform(schedule.entry_age + preset.horizon_years));
    let visit_times: Vec<f64> = schedule
        .visit_ages()
        .iter()
        .map(|&a| scale.snap(scale.transform(a)))
        .collect();

    let mut redraws = 0;
    let (effects, t01, t02) = loop {
        let effects = draw_random_effects(spec, params, &mut rng);
        let hz = LatentHazards {
            spec,
            params,
            effects: &effects,
            marker_covariates: &[],
            hazard_covariates: &[],
        };
        let u01: f64 = rng.random_range(f64::EPSILON..1.0);
        let u02: f64 = rng.random_range(f64::EPSILON..1.0);
        let t01 = invert_cumulative_hazard(&hz, Transition::HealthyIll, 0.0, u01, cfg.bracket_cap, cfg.brent_tolerance)?;
        let t02 = invert_cumulative_hazard(&hz, Transition::HealthyDead, 0.0, u02, cfg.bracket_cap, cfg.brent_tolerance)?;
        if t01 > entry && t02 > entry {
            break (effects, t01, t02);
        }
        redraws += 1;
        if redraws >= cfg.max_truncation_draws {
            return Err(Error::InvalidInput(format!(
                "subject {index}: no event-free draw at entry after {redraws} attempts"
            )));
        }
    };
    let t12 = if t01 <= t02 && t01 <= horizon {
        let hz = LatentHazards {
            spec,
            params,
            effects: &effects,
            marker_covariates: &[],
            hazard_covariates: &[],
        };
        let u12: f64 = rng.random_range(f64::EPSILON..1.0);
        Some(invert_cumulative_hazard(&hz, Transition::IllDead, t01, u12, cfg.bracket_cap, cfg.brent_tolerance)?)
    } else {
        None
    };
    let snap = |t: f64| if t.is_finite() { scale.snap(t) } else { t };
    let obs = apply_observation_scheme(snap(t01), snap(t02), t12.map(snap), entry, &visit_times, horizon)?;
    let visits = generate_marker(
        spec,
        params,
        &effects,
        &[],
        &visit_times[..obs.visits_kept],
        preset.measurements_per_visit,
        &mut rng,
    )?;
    let subject = SubjectData::new(format!("r{replicate}s{index}"), visits, obs.event);
    subject.validate()?;
    Ok((subject, LatentSubject { effects, t01, t02, t12, redraws }))
}

pub fn generate_dataset(
    preset: &ScenarioPreset,
    cfg: &GeneratorConfig,
    n_subjects: usize,
    replicate: u64,
) -> Result<GeneratedDataset> {
    cfg.validate(preset)?;
    let mut subjects = Vec::with_capacity(n_subjects);
    let mut latent = Vec::with_capacity(n_subjects);
    for i in 0..n_subjects {
        let (s, l) = generate_subject(preset, cfg, replicate, i as u64)?;
        subjects.push(s);
        latent.push(l);
    }
    Ok(GeneratedDataset { subjects, latent })
}
