//! Acceptance criteria, one line per criterion.
//!
//! The desk-scale simulation studies (criteria 6 to 8 and the study half of
//! 9) take far longer than a test run, so they only run when asked for:
//!
//! ```text
//! cargo test --release -p lsidm --test acceptance -- --ignored
//! ```
//!
//! Their replicates are checkpointed, so an interrupted run resumes where it
//! stopped.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{compound_symmetry, dense_mvn_logpdf};
use lsidm::data::{EventRecord, SubjectData, VisitBlock};
use lsidm::diagnostics::{cumulative_hazard_curves, empirical_bayes_all, marker_fit_curve, EbMode};
use lsidm::estimation::{fit_pipeline, FitResult};
use lsidm::likelihood::{
    cumulative_hazard, event_contribution, longitudinal_loglik, subject_hazard, subject_marginal_loglik,
    visit_block_logdensity,
};
use lsidm::model::{BaselineFamily, BaselineParams, RandomEffects, TransitionSpec};
use lsidm::optim::{marquardt_levenberg, OptimizerConfig};
use lsidm::simulation::{
    draw_random_effects, generate_dataset, invert_cumulative_hazard, subject_rng, LatentHazards,
};
use lsidm::study::{replicate_study, Estimator, StudyConfig, StudyReport};
use lsidm::{scenario_preset, GeneratorConfig, ModelSpec, ParameterSet, PipelineConfig, QmcConfig, Transition};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

use Outcome::{Fail, NotRun, Pass};

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_density_oracle(_: bool) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=5);
        let mean = rng.random_range(-10.0..10.0);
        let sigma = rng.random_range(0.05..5.0);
        let kappa = rng.random_range(0.05..5.0);
        // Residuals from the block's own law: a shared visit deviation plus
        // independent within-visit noise.
        let shared: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
        let ys: Vec<f64> = (0..n).map(|_| mean + shared + kappa * rng.sample::<f64, _>(StandardNormal)).collect();
        let fast = visit_block_logdensity(&VisitBlock::new(0.0, ys.clone()), mean, sigma, kappa).unwrap();
        let dense = dense_mvn_logpdf(&ys, &vec![mean; n], &compound_symmetry(n, sigma, kappa));
        worst = worst.max((fast - dense).abs());
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-10 && within(t, 5.0),
        format!("max abs error {worst:.1e} over 1000 blocks (limit 1e-10), {:.2} s (limit 5 s)", t.as_secs_f64()),
    )
}

fn subject_at(terminal: f64) -> SubjectData {
    SubjectData::new("q", vec![VisitBlock::new(0.0, vec![14.0])], EventRecord::new(0.0, terminal, None, terminal, false))
}

fn zero_alpha(params: &mut ParameterSet) {
    for p in &mut params.transitions {
        p.alpha_value = 0.0;
        p.alpha_slope = 0.0;
        p.alpha_sigma = 0.0;
        p.alpha_kappa = 0.0;
    }
}

fn c2_quadrature(_: bool) -> Outcome {
    let start = Instant::now();
    let preset = scenario_preset("A").unwrap();
    let zero = RandomEffects { b: vec![0.0, 0.0], tau_sigma: 0.0, tau_kappa: 0.0 };
    let intervals = [(0.0, 0.5), (0.0, 2.0), (0.3, 1.7), (1.0, 3.5)];
    let subject = subject_at(3.5);

    // Closed forms: exponential e^zeta (b - a) and Weibull e^zeta (b^eta - a^eta).
    let mut closed = 0.0f64;
    let mut exp_spec = preset.spec.clone();
    exp_spec.transitions = [TransitionSpec { baseline: BaselineFamily::Exponential, ..Default::default() }; 3];
    let mut exp_params = ParameterSet::initial(&exp_spec);
    exp_params.beta = preset.truth.beta.clone();
    for (k, p) in exp_params.transitions.iter_mut().enumerate() {
        p.baseline = BaselineParams::Exponential { zeta: -3.0 + k as f64 };
    }
    for kl in Transition::ALL {
        let zeta = exp_params.transition(kl).baseline.zeta();
        for &(a, b) in &intervals {
            let got = cumulative_hazard(&exp_spec, kl, a, b, &subject, &exp_params, &zero).unwrap();
            closed = closed.max(rel(got, zeta.exp() * (b - a)));
        }
    }
    let mut weib = preset.truth.clone();
    zero_alpha(&mut weib);
    for kl in Transition::ALL {
        let base = weib.transition(kl).baseline;
        let (eta, zeta) = (base.eta(), base.zeta());
        for &(a, b) in &intervals {
            let got = cumulative_hazard(&preset.spec, kl, a, b, &subject, &weib, &zero).unwrap();
            closed = closed.max(rel(got, zeta.exp() * (b.powf(eta) - a.powf(eta))));
        }
    }

    // Midpoint sums with 10^6 steps, full associations and a linear trajectory.
    let mut riemann = 0.0f64;
    let draws = [
        RandomEffects { b: vec![1.5, -0.8], tau_sigma: 0.2, tau_kappa: -0.1 },
        RandomEffects { b: vec![-2.0, 0.6], tau_sigma: -0.3, tau_kappa: 0.25 },
    ];
    for d in &draws {
        for kl in Transition::ALL {
            for &(a, b) in &intervals[1..] {
                let got = cumulative_hazard(&preset.spec, kl, a, b, &subject, &preset.truth, d).unwrap();
                let n = 1_000_000;
                let h = (b - a) / n as f64;
                let sum: f64 = (0..n)
                    .map(|i| subject_hazard(&preset.spec, kl, a + (i as f64 + 0.5) * h, &subject, &preset.truth, d).unwrap())
                    .sum();
                riemann = riemann.max(rel(got, sum * h));
            }
        }
    }
    let t = start.elapsed();
    verdict(
        closed <= 1e-12 && riemann <= 1e-6 && within(t, 30.0),
        format!(
            "closed forms {closed:.1e} (limit 1e-12), midpoint oracle {riemann:.1e} (limit 1e-6), {:.1} s (limit 30 s)",
            t.as_secs_f64()
        ),
    )
}

/// Physicists' Gauss-Hermite rule by Golub-Welsch.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn c3_qmc(_: bool) -> Outcome {
    let start = Instant::now();
    let preset = scenario_preset("A").unwrap();
    let spec = ModelSpec { random_powers: vec![0], ..preset.spec.clone() };
    let mut params = ParameterSet::initial(&spec);
    params.beta = preset.truth.beta.clone();
    params.mu_sigma = preset.truth.mu_sigma;
    params.mu_kappa = preset.truth.mu_kappa;
    params.transitions = preset.truth.transitions.clone();
    params.chol = vec![vec![2.1, 0.0, 0.0], vec![0.0, 0.26, 0.0], vec![0.0, 0.04, 0.26]];
    let visits = |ys: &[[f64; 2]], t0: f64| -> Vec<VisitBlock> {
        ys.iter().enumerate().map(|(k, y)| VisitBlock::new(t0 + 0.2 * k as f64, y.to_vec())).collect()
    };
    let subjects = [
        SubjectData::new(
            "interval",
            visits(&[[15.2, 14.1], [13.9, 14.8], [12.7, 13.5]], 0.5),
            EventRecord::new(0.5, 0.7, Some(0.9), 1.2, true),
        ),
        SubjectData::new(
            "entry",
            visits(&[[16.5, 16.1], [15.8, 17.0], [16.2, 15.4], [14.9, 15.5]], 1.1),
            EventRecord::new(1.1, 1.7, None, 2.0, false),
        ),
        SubjectData::new("origin", visits(&[[11.0, 12.2], [12.5, 11.8]], 0.0), EventRecord::new(0.0, 0.2, None, 0.2, true)),
    ];

    let (x_b, w_b) = gauss_hermite(101);
    let (x_t, w_t) = gauss_hermite(21);
    let l = DMatrix::from_fn(3, 3, |i, j| params.chol[i][j]);
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for s in &subjects {
        let qmc = subject_marginal_loglik(&spec, s, &params, QmcConfig::new(5000, 3)).unwrap();
        let (mut num, mut den) = (Vec::new(), Vec::new());
        for (xi, wi) in x_b.iter().zip(&w_b) {
            for (xj, wj) in x_t.iter().zip(&w_t) {
                for (xk, wk) in x_t.iter().zip(&w_t) {
                    let z = DVector::from_vec(vec![*xi, *xj, *xk]).map(|x| std::f64::consts::SQRT_2 * x);
                    let u = &l * z;
                    let lw = (wi * wj * wk / std::f64::consts::PI.powf(1.5)).ln();
                    let d = RandomEffects { b: vec![u[0]], tau_sigma: u[1], tau_kappa: u[2] };
                    let f = event_contribution(&spec, s, &params, &d).unwrap();
                    num.push(lw + longitudinal_loglik(&spec, s, &params, &d).unwrap() + f.ln());
                    let t0 = s.event.entry;
                    if t0 > 0.0 {
                        den.push(
                            lw - cumulative_hazard(&spec, Transition::HealthyIll, 0.0, t0, s, &params, &d).unwrap()
                                - cumulative_hazard(&spec, Transition::HealthyDead, 0.0, t0, s, &params, &d).unwrap(),
                        );
                    }
                }
            }
        }
        let oracle = log_sum_exp(&num) - if den.is_empty() { 0.0 } else { log_sum_exp(&den) };
        worst = worst.max(rel(qmc, oracle));
        values.push(format!("{qmc:.4}/{oracle:.4}"));
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-3 && within(t, 60.0),
        format!(
            "QMC/GH {} rel error {worst:.1e} (limit 1e-3; 101x21x21 nodes), {:.1} s (limit 60 s)",
            values.join(", "),
            t.as_secs_f64()
        ),
    )
}

fn c4_event_cases(_: bool) -> Outcome {
    let spec = ModelSpec {
        transitions: [TransitionSpec { baseline: BaselineFamily::Exponential, ..Default::default() }; 3],
        ..ModelSpec::default()
    };
    let mut params = ParameterSet::initial(&spec);
    params.beta = vec![14.0, 0.17];
    let (a, b, c) = (0.35f64, 0.12f64, 0.8f64);
    for (p, rate) in params.transitions.iter_mut().zip([a, b, c]) {
        p.baseline = BaselineParams::Exponential { zeta: rate.ln() };
    }
    let zero = RandomEffects { b: vec![0.3, -0.2], tau_sigma: 0.1, tau_kappa: 0.1 };
    let mut worst = 0.0f64;
    for &(l, r, t, death) in &[(0.4, 0.9, 1.5, true), (0.4, 0.9, 1.5, false), (0.1, 1.8, 2.6, true), (1.2, 1.3, 1.3, true)] {
        let s = SubjectData::new("ic", vec![VisitBlock::new(0.0, vec![14.0])], EventRecord::new(0.0, l, Some(r), t, death));
        let got = event_contribution(&spec, &s, &params, &zero).unwrap();
        let k = c - a - b;
        let bracket = ((k * r).exp() - (k * l).exp()) / k;
        let expect = a * if death { c } else { 1.0 } * (-c * t).exp() * bracket;
        worst = worst.max(rel(got, expect));
    }

    // No illness intensity: the unseen-onset term vanishes exactly.
    let preset = scenario_preset("A").unwrap();
    let mut no_ill = preset.truth.clone();
    no_ill.transitions[0].baseline = BaselineParams::Weibull { sqrt_eta: 0.0, zeta: -4.0 };
    let draw = RandomEffects { b: vec![1.0, -0.5], tau_sigma: 0.2, tau_kappa: -0.1 };
    let mut exact = true;
    for death in [true, false] {
        let v = vec![VisitBlock::new(0.2, vec![14.0, 13.5])];
        let at_t = SubjectData::new("t", v.clone(), EventRecord::new(0.2, 1.4, None, 1.4, death));
        let before = SubjectData::new("l", v, EventRecord::new(0.2, 0.9, None, 1.4, death));
        exact &= event_contribution(&preset.spec, &at_t, &no_ill, &draw).unwrap()
            == event_contribution(&preset.spec, &before, &no_ill, &draw).unwrap();
    }
    verdict(
        worst <= 1e-8 && exact,
        format!("closed-form rel error {worst:.1e} (limit 1e-8); zero illness intensity cases identical: {exact}"),
    )
}

fn c5_generator_law(_: bool) -> Outcome {
    let preset = scenario_preset("A").unwrap();
    let mut params = preset.truth.clone();
    zero_alpha(&mut params);
    let base = params.transition(Transition::HealthyIll).baseline;
    let (eta, zeta) = (base.eta(), base.zeta());
    let cfg = GeneratorConfig::default();
    let n = 10_000;
    let mut draws: Vec<f64> = (0..n as u64)
        .map(|i| {
            let mut rng = subject_rng(cfg.seed, 0, i);
            let effects = draw_random_effects(&preset.spec, &params, &mut rng);
            let hz = LatentHazards {
                spec: &preset.spec,
                params: &params,
                effects: &effects,
                marker_covariates: &[],
                hazard_covariates: &[],
            };
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            invert_cumulative_hazard(&hz, Transition::HealthyIll, 0.0, u, cfg.bracket_cap, cfg.brent_tolerance).unwrap()
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let cdf = |t: f64| 1.0 - (-t.powf(eta) * zeta.exp()).exp();
    let finite = draws.iter().filter(|t| t.is_finite()).count();
    let mut ks = 1.0 - finite as f64 / n as f64;
    for (i, &t) in draws[..finite].iter().enumerate() {
        let f = cdf(t);
        ks = ks.max((f - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - f).abs());
    }
    verdict(ks < 0.02, format!("KS distance {ks:.4} over {n} draws (eta {eta}, zeta {zeta}; limit 0.02)"))
}

fn c9_optimizer(heavy: bool) -> Outcome {
    let quad = |x: &[f64]| Ok(-((x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2)));
    let q = marquardt_levenberg(quad, &[0.0, 0.0], &OptimizerConfig::default()).unwrap();
    let q_err = (q.theta[0] - 1.0).abs().max((q.theta[1] - 2.0).abs());
    let rosen = |x: &[f64]| Ok(-(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)));
    let cfg = OptimizerConfig { h_rel: 1e-5, max_iterations: 500, ..Default::default() };
    let r = marquardt_levenberg(rosen, &[-1.2, 1.0], &cfg).unwrap();
    let r_err = (r.theta[0] - 1.0).abs().max((r.theta[1] - 1.0).abs());
    let monotone = |t: &[lsidm::optim::TraceEntry]| t.windows(2).all(|w| w[1].value >= w[0].value);
    let suite = q.converged() && q_err < 1e-8 && r.converged() && r_err < 1e-6 && monotone(&q.trace) && monotone(&r.trace);
    let detail = format!("quadratic error {q_err:.1e} (limit 1e-8), Rosenbrock error {r_err:.1e} (limit 1e-6)");
    if !heavy {
        return if suite {
            NotRun(format!("{detail} PASS; monotone steps over the criterion 6 fits need --ignored"))
        } else {
            Fail(detail)
        };
    }
    let report = scenario_a_study();
    let block = report.block(Estimator::IntervalCensored).unwrap();
    verdict(
        suite && block.all_monotone,
        format!("{detail}; all {} criterion 6 fits monotone: {}", block.attempted, block.all_monotone),
    )
}

fn c10_diagnostics(heavy: bool) -> Outcome {
    let preset = scenario_preset("A").unwrap();
    let gen = GeneratorConfig::default();
    // Default run: a 150-subject replicate fitted with 25 draws and a capped
    // iteration budget. With --ignored: a full 500-subject replicate at the
    // study settings.
    let (n, cfg, label) = if heavy {
        (500, PipelineConfig { compute_se: false, ..Default::default() }, "500 subjects, S1=500, S2=1000")
    } else {
        let cfg = PipelineConfig {
            s1: 25,
            s2: 25,
            run_step3: false,
            compute_se: false,
            optimizer: OptimizerConfig { max_iterations: 8, ..Default::default() },
            ..Default::default()
        };
        (150, cfg, "reduced fit: 150 subjects, S=25, at most 8 iterations per step")
    };
    let data = generate_dataset(&preset, &gen, n, 0).unwrap().subjects;
    let fit: FitResult = fit_pipeline(&data, &preset.spec, &cfg).unwrap();
    let params = &fit.theta_hat;
    let spec = &preset.spec;

    let eb = empirical_bayes_all(spec, &data, params, EbMode::Joint).unwrap();
    let effects: Vec<RandomEffects> = eb.iter().map(|e| e.effects.clone()).collect();
    let step = spec.time_scale.span(1.0);
    let last = data.iter().map(|s| s.event.terminal).fold(0.0, f64::max);
    let grid: Vec<f64> = (0..=(last / step).ceil() as usize).map(|k| k as f64 * step).collect();
    let curves = cumulative_hazard_curves(spec, &data, &effects, params, &grid).unwrap();
    let monotone = curves.iter().all(|c| c.cumulative.windows(2).all(|w| w[1] >= w[0]));

    let eb_marker = empirical_bayes_all(spec, &data, params, EbMode::MarkerOnly).unwrap();
    let bins = marker_fit_curve(spec, &data, &eb_marker, params, 3.0).unwrap();
    let covered = bins.iter().filter(|b| b.covers_prediction()).count();
    let share = covered as f64 / bins.len() as f64;
    verdict(
        monotone && share >= 0.9,
        format!(
            "{label}; curves nondecreasing: {monotone}; predicted means inside CI in {covered}/{} 3-year bins ({:.0}%, limit 90%)",
            bins.len(),
            100.0 * share
        ),
    )
}

fn checkpoint(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn desk_study(scenario: &str) -> StudyReport {
    let preset = scenario_preset(scenario).unwrap();
    let cfg = StudyConfig {
        replicates: 100,
        subjects: 500,
        estimators: vec![Estimator::IntervalCensored, Estimator::Naive],
        pipeline: PipelineConfig { s1: 500, s2: 1000, ..Default::default() },
        generator: GeneratorConfig::default(),
        checkpoint: Some(checkpoint(&format!("scenario_{}.jsonl", scenario.to_ascii_lowercase()))),
    };
    replicate_study(&preset, &cfg).unwrap()
}

fn scenario_a_study() -> StudyReport {
    // Resumes from the checkpoint, so only the first call does the work.
    desk_study("A")
}

const STUDY_COST: &str = "100 replicates x 500 subjects at S1=500, S2=1000: measured 1.45 s and 3.15 s per \
likelihood evaluation and 813 evaluations per 28-parameter Hessian put one replicate near 20 CPU-hours";

fn c6_recovery(heavy: bool) -> Outcome {
    if !heavy {
        return NotRun(format!("{STUDY_COST}; run with --ignored"));
    }
    let report = scenario_a_study();
    let block = report.block(Estimator::IntervalCensored).unwrap();
    let r = block.converged as f64;
    let mut bad = Vec::new();
    for row in &block.rows {
        let ese = row.ese.unwrap_or(f64::NAN);
        let cov = row.coverage.unwrap_or(f64::NAN);
        if !((row.mean - row.truth).abs() <= 3.0 * ese / r.sqrt()) || !(88.0..=99.0).contains(&cov) {
            bad.push(format!("{} (mean {:.3}, truth {:.3}, ESE {ese:.3}, CR {cov:.1})", row.name, row.mean, row.truth));
        }
    }
    verdict(
        bad.is_empty(),
        format!("{}/{} replicates converged; outside bounds: [{}]", block.converged, block.attempted, bad.join(", ")),
    )
}

fn c7_naive_bias(heavy: bool) -> Outcome {
    if !heavy {
        return NotRun(format!("{STUDY_COST}, for Scenarios A and C; run with --ignored"));
    }
    let a = scenario_a_study();
    let c = desk_study("C");
    let naive_a = a.block(Estimator::Naive).unwrap().row("sqrt_eta_01").unwrap();
    let naive_c = c.block(Estimator::Naive).unwrap().row("alpha_sigma_02").unwrap();
    let ic_c = c.block(Estimator::IntervalCensored).unwrap().row("alpha_sigma_02").unwrap();
    let cr = |r: &lsidm::study::ParameterRow| r.coverage.unwrap_or(f64::NAN);
    let ok = naive_a.mean < 2.00 && cr(naive_a) < 80.0 && cr(naive_c) < 30.0 && cr(ic_c) > 85.0;
    verdict(
        ok,
        format!(
            "A naive sqrt_eta_01 mean {:.3} CR {:.1}; C alpha_sigma_02 CR naive {:.1}, interval-censored {:.1}",
            naive_a.mean,
            cr(naive_a),
            cr(naive_c),
            cr(ic_c)
        ),
    )
}

fn c8_ase_ese(heavy: bool) -> Outcome {
    if !heavy {
        return NotRun(format!("uses the criterion 6 study ({STUDY_COST}); run with --ignored"));
    }
    let report = scenario_a_study();
    let block = report.block(Estimator::IntervalCensored).unwrap();
    let bad: Vec<String> = block
        .rows
        .iter()
        .filter(|r| match (r.ase, r.ese) {
            (Some(ase), Some(ese)) => (ase - ese).abs() > 0.25 * ese,
            _ => true,
        })
        .map(|r| format!("{} (ASE {:?}, ESE {:?})", r.name, r.ase, r.ese))
        .collect();
    verdict(bad.is_empty(), format!("parameters with |ASE - ESE| > 25% ESE: [{}]", bad.join(", ")))
}

fn main() {
    let heavy = std::env::args().any(|a| a == "--ignored" || a == "--include-ignored");
    let criteria: [(&str, fn(bool) -> Outcome); 10] = [
        ("density oracle", c1_density_oracle),
        ("quadrature", c2_quadrature),
        ("QMC correctness", c3_qmc),
        ("event-case algebra", c4_event_cases),
        ("generator law", c5_generator_law),
        ("desk-scale Scenario A recovery", c6_recovery),
        ("naive-bias reproduction", c7_naive_bias),
        ("ASE/ESE consistency", c8_ase_ese),
        ("optimizer suite", c9_optimizer),
        ("diagnostics", c10_diagnostics),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run(heavy) {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            NotRun(d) => ("NOT RUN", d),
        };
        println!("criterion {:>2} {tag:<7} {name}: {detail}", k + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
