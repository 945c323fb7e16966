//! Link functions defining the treatment-effect scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth, strictly increasing transform `g` of an arm mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// Mean difference.
    Identity,
    /// Log ratio of means; requires positive means.
    Log,
    /// Log odds ratio; requires means in (0, 1).
    Logit,
}

impl Link {
    fn check(self, mu: f64) -> Result<()> {
        let ok = match self {
            Link::Identity => mu.is_finite(),
            Link::Log => mu > 0.0 && mu.is_finite(),
            Link::Logit => mu > 0.0 && mu < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::LinkDomain { link: self, mu })
        }
    }

    /// `g(mu)`.
    pub fn value(self, mu: f64) -> Result<f64> {
        self.check(mu)?;
        Ok(match self {
            Link::Identity => mu,
            Link::Log => mu.ln(),
            Link::Logit => (mu / (1.0 - mu)).ln(),
        })
    }

    /// `g'(mu)`, strictly positive on the domain.
    pub fn deriv(self, mu: f64) -> Result<f64> {
        self.check(mu)?;
        Ok(match self {
            Link::Identity => 1.0,
            Link::Log => 1.0 / mu,
            Link::Logit => 1.0 / (mu * (1.0 - mu)),
        })
    }

    /// Pulls a small-sample mean back inside the open domain before `g` or
    /// `g'` are evaluated. Identity is left untouched.
    pub fn guard(self, mu: f64) -> f64 {
        const EPS: f64 = 1e-6;
        match self {
            Link::Identity => mu,
            Link::Log => mu.max(EPS),
            Link::Logit => mu.clamp(EPS, 1.0 - EPS),
        }
    }
}

/// `delta = g(mu1) - g(mu0)`.
pub fn treatment_effect(link: Link, mu1: f64, mu0: f64) -> Result<f64> {
    Ok(link.value(mu1)? - link.value(mu0)?)
}

/// Inverse logit, written to stay finite for large |eta|.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}
