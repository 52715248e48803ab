use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` sampled uniformly. Serializes as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.0 && x <= self.1
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite()) || self.0 > self.1 {
            return Err(Error::Config(format!(
                "{what}: invalid interval [{}, {}]",
                self.0, self.1
            )));
        }
        Ok(())
    }

    /// A collapsed interval returns `lo` exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }
}
