//! Subsample size `n = N^(1/2 + δ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EXPONENT: f64 = 5.0 / 9.0;
pub const DEFAULT_FLOOR: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMethod {
    /// Each row kept independently with probability `n/N`.
    Bernoulli,
    /// Exactly `n` rows.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// `1/2 + δ`, in `(1/2, 1]`.
    pub exponent: f64,
    /// Minimum target size.
    pub floor: u64,
    pub method: SampleMethod,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            exponent: DEFAULT_EXPONENT,
            floor: DEFAULT_FLOOR,
            method: SampleMethod::Bernoulli,
        }
    }
}

impl SampleSpec {
    pub fn with_exponent(exponent: f64) -> Self {
        Self {
            exponent,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.5 && self.exponent <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "sampling exponent {} is outside (0.5, 1]",
                self.exponent
            )));
        }
        if self.floor < 1 {
            return Err(Error::InvalidSpec("sample floor must be at least 1".into()));
        }
        Ok(())
    }

    /// Smallest realised sample accepted for a model with `p` parameters.
    pub fn min_realised(&self, p: usize) -> usize {
        (10 * p).max(DEFAULT_FLOOR as usize)
    }
}

/// `ceil(N^exponent)`, snapping to an integer when the power lands on one up to rounding.
fn ceil_power(total: u64, exponent: f64) -> u64 {
    let x = (total as f64).powf(exponent);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// `max(ceil(N^exponent), floor, 10·p)`, capped at `N`.
pub fn choose_subsample_size(total: u64, spec: &SampleSpec, p: usize) -> u64 {
    let n = ceil_power(total, spec.exponent)
        .max(spec.floor)
        .max(10 * p as u64);
    n.min(total)
}
