use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine map from age in years to the internal time scale,
/// `t = (age - origin) / divisor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub origin: f64,
    pub divisor: f64,
}

impl Default for TimeScale {
    fn default() -> Self {
        TimeScale {
            origin: 65.0,
            divisor: 10.0,
        }
    }
}

impl TimeScale {
    pub fn new(origin: f64, divisor: f64) -> Result<Self> {
        if !(divisor > 0.0) || !divisor.is_finite() || !origin.is_finite() {
            return Err(Error::InvalidInput(format!(
                "time scale needs a finite origin and a positive divisor, got ({origin}, {divisor})"
            )));
        }
        Ok(TimeScale { origin, divisor })
    }

    #[inline]
    pub fn transform(&self, age: f64) -> f64 {
        (age - self.origin) / self.divisor
    }

    #[inline]
    pub fn inverse(&self, t: f64) -> f64 {
        self.origin + self.divisor * t
    }

    /// Converts a span in years into transformed units.
    #[inline]
    pub fn span(&self, years: f64) -> f64 {
        years / self.divisor
    }

    /// Rounds `t` onto the image of the age grid, so that
    /// `transform(age_for(t)) == t` holds exactly afterwards.
    pub fn snap(&self, t: f64) -> f64 {
        self.transform(self.inverse(t))
    }

    /// An age whose transform reproduces `t` bit for bit, when one exists
    /// within a few ulps of the naive inverse; otherwise the naive inverse.
    pub fn age_for(&self, t: f64) -> f64 {
        let guess = self.inverse(t);
        if self.transform(guess) == t {
            return guess;
        }
        let (mut up, mut down) = (guess, guess);
        for _ in 0..8 {
            up = up.next_up();
            down = down.next_down();
            if self.transform(up) == t {
                return up;
            }
            if self.transform(down) == t {
                return down;
            }
        }
        guess
    }
}
