mod common;

use common::{compound_symmetry, dense_mvn_logpdf, scenario_a};
use lsidm::data::{EventRecord, SubjectData, VisitBlock};
use lsidm::diagnostics::{cumulative_hazard_curves, hazard_ratio};
use lsidm::io::{load_dataset, write_events, write_longitudinal};
use lsidm::likelihood::{event_contribution, visit_block_logdensity};
use lsidm::model::{
    assemble_covariance, residual_scales, transition_hazard, BaselineParams, RandomEffects, Trajectory,
    TransitionParams,
};
use lsidm::optim::{marquardt_levenberg, numeric_hessian, OptimizerConfig};
use lsidm::quadrature::QuadratureRule;
use lsidm::simulation::{generate_dataset, scenario_preset, GeneratorConfig};
use lsidm::{LikelihoodEngine, QmcConfig, TimeScale};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn transition(gamma: f64, a: [f64; 4], sqrt_eta: f64, zeta: f64) -> TransitionParams {
    TransitionParams {
        gamma: vec![gamma],
        alpha_value: a[0],
        alpha_slope: a[1],
        alpha_sigma: a[2],
        alpha_kappa: a[3],
        baseline: BaselineParams::Weibull { sqrt_eta, zeta },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn block_density_matches_dense_oracle(
        ys in prop::collection::vec(-30.0f64..30.0, 1..=5),
        mean in -10.0f64..10.0,
        sigma in 0.05f64..5.0,
        kappa in 0.05f64..5.0,
    ) {
        let block = VisitBlock::new(0.3, ys.clone());
        let fast = visit_block_logdensity(&block, mean, sigma, kappa).unwrap();
        let dense = dense_mvn_logpdf(&ys, &vec![mean; ys.len()], &compound_symmetry(ys.len(), sigma, kappa));
        prop_assert!((fast - dense).abs() < 1e-10 * dense.abs().max(1.0));
    }

    #[test]
    fn hazard_is_nonnegative_and_log_linear(
        t in 0.01f64..3.0,
        w in -2.0f64..2.0,
        a in prop::array::uniform4(-1.0f64..1.0),
        gamma in -1.0f64..1.0,
        value in 5.0f64..25.0,
        slope in -3.0f64..3.0,
        sigma in 0.2f64..3.0,
        kappa in 0.2f64..3.0,
        sqrt_eta in 0.5f64..2.5,
        zeta in -6.0f64..0.0,
        k in 0usize..5,
        delta in -0.5f64..0.5,
    ) {
        let traj = Trajectory { value, slope };
        let p = transition(gamma, a, sqrt_eta, zeta);
        let h = transition_hazard(&p, t, &[w], traj, sigma, kappa).unwrap();
        prop_assert!(h >= 0.0);
        // shifting one coefficient by delta shifts log h by delta * multiplier
        let mut q = p.clone();
        let multiplier = match k {
            0 => { q.gamma[0] += delta; w }
            1 => { q.alpha_value += delta; value }
            2 => { q.alpha_slope += delta; slope }
            3 => { q.alpha_sigma += delta; sigma }
            _ => { q.alpha_kappa += delta; kappa }
        };
        let h2 = transition_hazard(&q, t, &[w], traj, sigma, kappa).unwrap();
        prop_assert!(((h2.ln() - h.ln()) - delta * multiplier).abs() < 1e-9);
    }

    #[test]
    fn residual_scales_positive_and_increasing(
        ms in -3.0f64..3.0, mk in -3.0f64..3.0, ts in -2.0f64..2.0, tk in -2.0f64..2.0, d in 1e-3f64..1.0,
    ) {
        let (s, k) = residual_scales(ms, mk, ts, tk);
        prop_assert!(s > 0.0 && k > 0.0);
        prop_assert!(residual_scales(ms + d, mk, ts, tk).0 > s);
        prop_assert!(residual_scales(ms, mk, ts + d, tk).0 > s);
        prop_assert!(residual_scales(ms, mk + d, ts, tk).1 > k);
        prop_assert!(residual_scales(ms, mk, ts, tk + d).1 > k);
    }

    #[test]
    fn assembled_covariance_is_symmetric_psd(entries in prop::collection::vec(-3.0f64..3.0, 16)) {
        let chol = DMatrix::from_row_slice(4, 4, &entries);
        let cov = assemble_covariance(&chol, None);
        prop_assert_eq!(&cov, &cov.transpose());
        let min = cov.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min >= -1e-10 * cov.norm().max(1.0));
    }

    #[test]
    fn gk15_is_exact_through_degree_22(
        coef in prop::collection::vec(-1.0f64..1.0, 23),
        a in -2.0f64..2.0,
        width in 0.01f64..2.0,
    ) {
        let b = a + width;
        let rule = QuadratureRule::gauss_kronrod_15();
        let poly = |x: f64| coef.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let exact: f64 = coef.iter().enumerate()
            .map(|(k, c)| c * (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k as f64 + 1.0))
            .sum();
        let scale: f64 = coef.iter().enumerate()
            .map(|(k, c)| (c * (b.abs().max(a.abs())).powi(k as i32 + 1)).abs() / (k as f64 + 1.0))
            .sum::<f64>().max(1e-300);
        prop_assert!((rule.integrate(a, b, poly) - exact).abs() <= 1e-12 * scale);
    }

    #[test]
    fn hazard_ratio_of_negated_coefficient_is_reciprocal(est in -3.0f64..3.0, se in 0.01f64..2.0) {
        let a = hazard_ratio("x", est, se);
        let b = hazard_ratio("x", -est, se);
        prop_assert!((a.hazard_ratio * b.hazard_ratio - 1.0).abs() < 1e-12);
        prop_assert!((a.ci_low * b.ci_high - 1.0).abs() < 1e-12);
        prop_assert!((a.ci_high * b.ci_low - 1.0).abs() < 1e-12);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-15);
    }

    #[test]
    fn numeric_hessian_is_exactly_symmetric(x in prop::collection::vec(-2.0f64..2.0, 3), h in 1e-5f64..1e-2) {
        let f = |v: &[f64]| -> lsidm::Result<f64> {
            Ok(-(v[0] * v[1]).sin() - v[2].powi(4) + (v[0] - v[2]).exp() * v[1])
        };
        let hess = numeric_hessian(f, &x, h).unwrap();
        prop_assert_eq!(&hess, &hess.transpose());
    }

    #[test]
    fn time_scale_round_trips_snapped_times(age in 40.0f64..110.0) {
        let scale = TimeScale::default();
        let t = scale.snap(scale.transform(age));
        prop_assert_eq!(scale.transform(scale.age_for(t)), t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn event_contribution_bounds(
        b0 in -3.0f64..3.0, b1 in -1.5f64..1.5, ts in -0.5f64..0.5, tk in -0.5f64..0.5,
        l in 0.2f64..1.0, gap in 0.05f64..0.6, death in any::<bool>(),
    ) {
        let (spec, truth) = scenario_a();
        let draw = RandomEffects { b: vec![b0, b1], tau_sigma: ts, tau_kappa: tk };
        let terminal = l + gap;
        let v = vec![VisitBlock::new(0.1, vec![14.0])];
        let at_t = SubjectData::new("a", v.clone(), EventRecord::new(0.1, terminal, None, terminal, death));
        let before = SubjectData::new("b", v.clone(), EventRecord::new(0.1, l, None, terminal, death));
        let ic = SubjectData::new("c", v, EventRecord::new(0.1, l, Some(terminal), terminal + 0.1, death));
        let f_at = event_contribution(&spec, &at_t, &truth, &draw).unwrap();
        let f_before = event_contribution(&spec, &before, &truth, &draw).unwrap();
        let f_ic = event_contribution(&spec, &ic, &truth, &draw).unwrap();
        prop_assert!(f_at > 0.0 && f_before > 0.0 && f_ic > 0.0);
        prop_assert!(f_before >= f_at);
        if !death {
            // survival probabilities
            prop_assert!(f_at <= 1.0 && f_before <= 1.0);
        }
    }

    #[test]
    fn loglik_invariant_to_measurement_order(seed in 0u64..1000, rotate in 1usize..4) {
        let preset = scenario_preset("A").unwrap();
        let cfg = GeneratorConfig { seed, ..Default::default() };
        let data = generate_dataset(&preset, &cfg, 3, 0).unwrap().subjects;
        let shuffled: Vec<SubjectData> = data.iter().map(|s| {
            let mut s = s.clone();
            for v in &mut s.visits {
                let k = rotate % v.measurements.len();
                v.measurements.rotate_left(k);
                v.measurements.reverse();
            }
            s
        }).collect();
        let q = QmcConfig::new(64, 4);
        let a = LikelihoodEngine::new(&preset.spec, &data, q, true).unwrap().subject_logliks(&preset.truth).unwrap();
        let b = LikelihoodEngine::new(&preset.spec, &shuffled, q, true).unwrap().subject_logliks(&preset.truth).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn cumulative_curves_start_at_zero_and_never_decrease(
        seed in 0u64..1000,
        steps in prop::collection::vec(0.01f64..0.4, 1..15),
    ) {
        let preset = scenario_preset("A").unwrap();
        let d = generate_dataset(&preset, &GeneratorConfig { seed, ..Default::default() }, 5, 0).unwrap();
        let effects: Vec<RandomEffects> = d.latent.iter().map(|l| l.effects.clone()).collect();
        let mut grid = vec![0.0];
        for s in steps {
            grid.push(grid.last().unwrap() + s);
        }
        let curves = cumulative_hazard_curves(&preset.spec, &d.subjects, &effects, &preset.truth, &grid).unwrap();
        for c in curves {
            prop_assert_eq!(c.cumulative[0], 0.0);
            prop_assert!(c.cumulative.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn accepted_steps_never_decrease_the_objective(
        centre in prop::collection::vec(-3.0f64..3.0, 3),
        start in prop::collection::vec(-3.0f64..3.0, 3),
        twist in 0.0f64..2.0,
    ) {
        let f = |x: &[f64]| -> lsidm::Result<f64> {
            let d: Vec<f64> = x.iter().zip(&centre).map(|(a, b)| a - b).collect();
            Ok(-(d[0] * d[0] + 2.0 * d[1] * d[1] + d[2].powi(4)) - twist * (d[0] * d[1]).sin().powi(2))
        };
        let r = marquardt_levenberg(f, &start, &OptimizerConfig::default()).unwrap();
        prop_assert!(r.trace.windows(2).all(|w| w[1].value >= w[0].value));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_datasets_round_trip_through_csv(seed in 0u64..u64::MAX, scenario in 0usize..3, replicate in 0u64..50) {
        let name = ["A", "B", "C"][scenario];
        let preset = scenario_preset(name).unwrap();
        let data = generate_dataset(&preset, &GeneratorConfig { seed, ..Default::default() }, 25, replicate)
            .unwrap()
            .subjects;
        let dir = tempfile::tempdir().unwrap();
        let (l, e) = (dir.path().join("l.csv"), dir.path().join("e.csv"));
        let scale = &preset.spec.time_scale;
        write_longitudinal(&l, &data, scale).unwrap();
        write_events(&e, &data, scale).unwrap();
        let bundle = load_dataset(&l, &e, scale).unwrap();
        prop_assert!(bundle.report.rows_dropped.is_empty());
        prop_assert_eq!(bundle.subjects, data);
    }
}
