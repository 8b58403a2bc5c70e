use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::link::Link;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Binomial,
    Poisson,
    Gaussian,
    Gamma,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Binomial,
        Family::Poisson,
        Family::Gaussian,
        Family::Gamma,
    ];

    /// Whether the dispersion is estimated (gaussian, gamma) rather than fixed at 1.
    pub fn has_dispersion(self) -> bool {
        matches!(self, Family::Gaussian | Family::Gamma)
    }

    /// The link with unit score weights.
    pub fn canonical_link(self) -> Link {
        match self {
            Family::Binomial => Link::Logit,
            Family::Poisson => Link::Log,
            Family::Gaussian => Link::Identity,
            // The gamma canonical link is the inverse; log is the supported pairing.
            Family::Gamma => Link::Log,
        }
    }

    /// Family/link pairs whose score and information can be generated as SQL.
    pub fn supports(self, link: Link) -> bool {
        matches!(
            (self, link),
            (Family::Binomial, Link::Logit)
                | (Family::Poisson, Link::Log)
                | (Family::Gaussian, Link::Identity)
                | (Family::Gamma, Link::Log)
        )
    }

    /// Pairs for which `w = 1` identically.
    pub fn is_canonical(self, link: Link) -> bool {
        matches!(
            (self, link),
            (Family::Binomial, Link::Logit) | (Family::Poisson, Link::Log) | (Family::Gaussian, Link::Identity)
        )
    }

    /// Variance function `V(mu)`.
    #[inline]
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Binomial => mu * (1.0 - mu),
            Family::Poisson => mu,
            Family::Gaussian => 1.0,
            Family::Gamma => mu * mu,
        }
    }

    pub fn valid_mean(self, mu: f64) -> bool {
        match self {
            Family::Binomial => mu > 0.0 && mu < 1.0,
            Family::Poisson | Family::Gamma => mu > 0.0 && mu.is_finite(),
            Family::Gaussian => mu.is_finite(),
        }
    }

    pub fn valid_response(self, y: f64) -> bool {
        match self {
            Family::Binomial => y == 0.0 || y == 1.0,
            Family::Poisson => y >= 0.0 && y.is_finite() && y.fract() == 0.0,
            Family::Gaussian => y.is_finite(),
            Family::Gamma => y > 0.0 && y.is_finite(),
        }
    }

    /// Unit deviance `d(y, mu)`, unscaled by the dispersion.
    #[inline]
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Binomial => -2.0 * (y * mu.ln() + (1.0 - y) * (1.0 - mu).ln()),
            Family::Poisson => {
                let term = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                2.0 * (term - (y - mu))
            }
            Family::Gaussian => (y - mu) * (y - mu),
            Family::Gamma => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
            Family::Gaussian => "gaussian",
            Family::Gamma => "gamma",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "binomial" | "logistic" => Ok(Family::Binomial),
            "poisson" => Ok(Family::Poisson),
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "gamma" => Ok(Family::Gamma),
            other => Err(Error::InvalidSpec(format!("unknown family {other:?}"))),
        }
    }
}
