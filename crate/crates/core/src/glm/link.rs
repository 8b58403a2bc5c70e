use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Linear predictors are clamped to this range before exponentiation.
pub const ETA_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Log,
    Identity,
}

impl Link {
    pub const ALL: [Link; 3] = [Link::Logit, Link::Log, Link::Identity];

    /// Clamps `eta` to the range where `exp` cannot overflow; identity is untouched.
    #[inline]
    pub fn clamp_eta(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Logit | Link::Log => eta.clamp(-ETA_CLAMP, ETA_CLAMP),
        }
    }

    /// `g⁻¹(eta)` on the clamped predictor.
    #[inline]
    pub fn mean_from_eta(self, eta: f64) -> f64 {
        let eta = self.clamp_eta(eta);
        match self {
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
            Link::Log => eta.exp(),
            Link::Identity => eta,
        }
    }

    /// `g(mu)`.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Link::Logit => (mu / (1.0 - mu)).ln(),
            Link::Log => mu.ln(),
            Link::Identity => mu,
        }
    }

    /// `dmu/deta` at `eta`, computed from the clamped mean.
    #[inline]
    pub fn mu_eta(self, eta: f64) -> f64 {
        let mu = self.mean_from_eta(eta);
        self.mu_eta_from_mean(mu)
    }

    #[inline]
    pub(crate) fn mu_eta_from_mean(self, mu: f64) -> f64 {
        match self {
            Link::Logit => mu * (1.0 - mu),
            Link::Log => mu,
            Link::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Log => "log",
            Link::Identity => "identity",
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(Link::Logit),
            "log" => Ok(Link::Log),
            "identity" => Ok(Link::Identity),
            "probit" | "cloglog" | "cauchit" => Err(Error::InvalidSpec(format!(
                "link {s:?} is not supported; use logit, log or identity"
            ))),
            other => Err(Error::InvalidSpec(format!("unknown link {other:?}"))),
        }
    }
}
