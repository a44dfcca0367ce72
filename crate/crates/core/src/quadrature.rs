//! Fixed 15-point Gauss-Kronrod rule.

/// Non-negative Kronrod abscissae on [-1, 1]; the rule uses `±x` for the
/// first seven and the centre point 0.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

pub const GK15_POINTS: usize = 15;

/// Nodes and weights of the 15-point Kronrod extension of 7-point Gauss.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: [f64; GK15_POINTS],
    pub weights: [f64; GK15_POINTS],
}

impl QuadratureRule {
    pub fn gauss_kronrod_15() -> Self {
        let mut nodes = [0.0; GK15_POINTS];
        let mut weights = [0.0; GK15_POINTS];
        for k in 0..7 {
            nodes[k] = -XGK[k];
            weights[k] = WGK[k];
            nodes[14 - k] = XGK[k];
            weights[14 - k] = WGK[k];
        }
        nodes[7] = XGK[7];
        weights[7] = WGK[7];
        QuadratureRule { nodes, weights }
    }

    /// Nodes mapped onto `[a, b]` together with the scaled weights.
    #[inline]
    pub fn mapped(&self, a: f64, b: f64) -> ([f64; GK15_POINTS], [f64; GK15_POINTS]) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut x = [0.0; GK15_POINTS];
        let mut w = [0.0; GK15_POINTS];
        for k in 0..GK15_POINTS {
            x[k] = mid + half * self.nodes[k];
            w[k] = half * self.weights[k];
        }
        (x, w)
    }

    /// Nodes and weights for a cumulative intensity on `[a, b]`. From the
    /// origin the rule runs in `s` with `t = b s^2`, which turns the
    /// `t^(eta-1)` factor of a Weibull baseline into a smooth function;
    /// polynomials in `t` of degree up to 10 stay exact.
    #[inline]
    pub fn intensity_nodes(&self, a: f64, b: f64) -> ([f64; GK15_POINTS], [f64; GK15_POINTS]) {
        if a != 0.0 {
            return self.mapped(a, b);
        }
        let (s, ws) = self.mapped(0.0, 1.0);
        let mut x = [0.0; GK15_POINTS];
        let mut w = [0.0; GK15_POINTS];
        for k in 0..GK15_POINTS {
            x[k] = b * s[k] * s[k];
            w[k] = 2.0 * b * s[k] * ws[k];
        }
        (x, w)
    }

    /// Single application of the rule to `f` on `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        if a == b {
            return 0.0;
        }
        let (x, w) = self.mapped(a, b);
        x.iter().zip(&w).map(|(&xi, &wi)| wi * f(xi)).sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::gauss_kronrod_15()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn origin_substitution_handles_fractional_weibull_shapes() {
        let r = QuadratureRule::gauss_kronrod_15();
        for &(eta, b) in &[(2.89f64, 2.0f64), (2.89, 0.5), (4.0, 3.5), (1.0, 1.2), (0.5, 2.0)] {
            let (x, w) = r.intensity_nodes(0.0, b);
            let got: f64 = x.iter().zip(&w).map(|(t, wk)| wk * eta * t.powf(eta - 1.0)).sum();
            assert_relative_eq!(got, b.powf(eta), max_relative = 1e-12);
        }
        let (x, w) = r.intensity_nodes(0.0, 2.0);
        let deg10: f64 = x.iter().zip(&w).map(|(t, wk)| wk * t.powi(10)).sum();
        assert_relative_eq!(deg10, 2f64.powi(11) / 11.0, max_relative = 1e-13);
    }

    #[test]
    fn weights_sum_to_two() {
        let r = QuadratureRule::gauss_kronrod_15();
        let s: f64 = r.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14, "sum = {s}");
    }

    #[test]
    fn exact_for_monomials_up_to_degree_22() {
        let r = QuadratureRule::gauss_kronrod_15();
        for k in 0..=22 {
            let got = r.integrate(-1.0, 1.0, |x| x.powi(k));
            let want = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!((got - want).abs() < 1e-14, "degree {k}: {got} vs {want}");
        }
        let got = r.integrate(-1.0, 1.0, |x| x.powi(24));
        assert!((got - 2.0 / 25.0).abs() > 1e-10, "degree 24 should not be exact: {got}");
    }

    #[test]
    fn mapped_interval() {
        let r = QuadratureRule::default();
        assert_relative_eq!(r.integrate(1.0, 3.0, |x| x * x), 26.0 / 3.0, max_relative = 1e-14);
        assert_eq!(r.integrate(2.0, 2.0, |x| x), 0.0);
    }
}
