//! Sobol points mapped to Gaussian random-effect draws.

use serde::{Deserialize, Serialize};
use sobol::params::JoeKuoD6;
use sobol::Sobol;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{RandomEffects, RandomEffectsDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QmcConfig {
    pub draws: usize,
    pub dimension: usize,
    /// Leading sequence points dropped (the first Sobol point is the origin).
    pub skip: usize,
    /// 0 leaves the sequence unscrambled; any other value applies a
    /// deterministic random digital shift derived from it.
    pub scramble: u64,
}

impl QmcConfig {
    pub fn new(draws: usize, dimension: usize) -> Self {
        QmcConfig {
            draws,
            dimension,
            skip: 1,
            scramble: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::InvalidInput("QMC needs at least one draw".into()));
        }
        if self.dimension == 0 || self.dimension > 100 {
            return Err(Error::InvalidInput(format!(
                "QMC dimension {} outside 1..=100",
                self.dimension
            )));
        }
        if self.skip == 0 && self.scramble == 0 {
            return Err(Error::InvalidInput(
                "an unscrambled sequence must skip its leading zero point".into(),
            ));
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Standard-normal QMC points, row-major `draws x dimension`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalDraws {
    pub config: QmcConfig,
    pub z: Vec<f64>,
}

impl NormalDraws {
    pub fn generate(cfg: QmcConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dimension;
        let params = JoeKuoD6::minimal();
        let shifts: Vec<u32> = (0..d)
            .map(|k| {
                if cfg.scramble == 0 {
                    0
                } else {
                    (splitmix64(cfg.scramble.wrapping_mul(1_000_003).wrapping_add(k as u64)) >> 32) as u32
                }
            })
            .collect();
        let normal = Normal::standard();
        let scale = 1.0 / 4_294_967_296.0;
        let mut z = Vec::with_capacity(cfg.draws * d);
        for point in Sobol::<u32>::new(d, &params).skip(cfg.skip).take(cfg.draws) {
            for (k, x) in point.into_iter().enumerate() {
                let u = if cfg.scramble == 0 {
                    x as f64 * scale
                } else {
                    ((x ^ shifts[k]) as f64 + 0.5) * scale
                };
                z.push(normal.inverse_cdf(u));
            }
        }
        if z.len() != cfg.draws * d || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("Sobol sequence exhausted or degenerate".into()));
        }
        Ok(NormalDraws { config: cfg, z })
    }

    pub fn len(&self) -> usize {
        self.config.draws
    }

    pub fn is_empty(&self) -> bool {
        self.config.draws == 0
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let d = self.config.dimension;
        &self.z[s * d..(s + 1) * d]
    }
}

/// Draws from the random-effects law: Sobol points (after `skip`), the
/// inverse standard-normal map, then the Cholesky factor.
pub fn sobol_normal_draws(
    cfg: QmcConfig,
    distribution: &RandomEffectsDistribution,
) -> Result<Vec<RandomEffects>> {
    let d = distribution.chol.nrows();
    if cfg.dimension != d {
        return Err(Error::Dimension(format!(
            "QMC dimension {} but random effects have dimension {d}",
            cfg.dimension
        )));
    }
    let base = NormalDraws::generate(cfg)?;
    let l = &distribution.chol;
    let mut u = vec![0.0; d];
    Ok((0..cfg.draws)
        .map(|s| {
            let z = base.row(s);
            for i in 0..d {
                u[i] = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
            }
            RandomEffects::from_slice(&u)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, ParameterSet};
    use nalgebra::DMatrix;

    fn dist(chol: DMatrix<f64>) -> RandomEffectsDistribution {
        RandomEffectsDistribution { chol, n_random: 2 }
    }

    #[test]
    fn deterministic() {
        let d = dist(DMatrix::identity(4, 4));
        let a = sobol_normal_draws(QmcConfig::new(64, 4), &d).unwrap();
        let b = sobol_normal_draws(QmcConfig::new(64, 4), &d).unwrap();
        assert_eq!(a, b);
        let mut cfg = QmcConfig::new(64, 4);
        cfg.scramble = 9;
        let c = sobol_normal_draws(cfg, &d).unwrap();
        assert_eq!(c, sobol_normal_draws(cfg, &d).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn identity_means_near_zero() {
        let d = dist(DMatrix::identity(4, 4));
        let draws = sobol_normal_draws(QmcConfig::new(4096, 4), &d).unwrap();
        for k in 0..4 {
            let m: f64 = draws.iter().map(|r| r.to_vec()[k]).sum::<f64>() / 4096.0;
            assert!(m.abs() < 0.01, "coordinate {k}: mean {m}");
        }
    }

    #[test]
    fn scaled_variance() {
        let d = dist(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0, 1.0, 1.0])));
        let draws = sobol_normal_draws(QmcConfig::new(4096, 4), &d).unwrap();
        let xs: Vec<f64> = draws.iter().map(|r| r.b[0]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((v - 4.0).abs() < 0.2, "variance {v}");
    }

    #[test]
    fn dimension_must_match() {
        let spec = ModelSpec::default();
        let d = RandomEffectsDistribution::new(&spec, &ParameterSet::initial(&spec));
        assert!(sobol_normal_draws(QmcConfig::new(8, 3), &d).is_err());
        assert!(QmcConfig { skip: 0, ..QmcConfig::new(8, 4) }.validate().is_err());
    }
}
