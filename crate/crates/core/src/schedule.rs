//! Primal learning-rate rules.
//!
//! With `L(λ) = L_R + λᵀL_C` the exact adaptive rates are
//! `η¹ = 1/(2L(λ))` (InvLin) and `η² = μ/(2L(λ)²)` (InvQua). Their practical
//! forms replace the unknown constants by hyper-parameters:
//! `η¹ = H₁/(λ + H₂)` and `η² = H₁′/(λ + H₂′)²`. With several constraints the
//! practical forms are evaluated at `λ = Σᵢ λᵢ`.

use serde::{Deserialize, Serialize};

use crate::lagrangian::Multiplier;
use crate::{Error, Result};

/// Smoothness and curvature constants of the Lagrangian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub l_r: f64,
    pub l_c: Vec<f64>,
    pub mu: f64,
    /// Lipschitz constant `L′` of the Lagrangian value, when known.
    #[serde(default)]
    pub l_lip: Option<f64>,
}

impl SmoothnessConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_r >= 0.0) || self.l_c.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidConfig("smoothness constants must be nonnegative".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidConfig(format!("mu must be positive, got {}", self.mu)));
        }
        if self.mu > self.l_r {
            return Err(Error::InvalidConfig(format!(
                "strong convexity {} exceeds smoothness {} at λ = 0",
                self.mu, self.l_r
            )));
        }
        Ok(())
    }
}

/// `L(λ) = L_R + λᵀL_C`.
pub fn lipschitz_of_lambda(c: &SmoothnessConstants, lm: &Multiplier) -> Result<f64> {
    if lm.len() != c.l_c.len() {
        return Err(Error::dim("multiplier", c.l_c.len(), lm.len()));
    }
    Ok(c.l_r + lm.dot(&c.l_c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptiveRule {
    InvLin,
    InvQua,
}

/// Closed-form rate minimising the corresponding primal-error bound.
pub fn exact_lr(rule: AdaptiveRule, c: &SmoothnessConstants, lm: &Multiplier) -> Result<f64> {
    let l = lipschitz_of_lambda(c, lm)?;
    if !(l > 0.0) {
        return Err(Error::InvalidArgument(format!("L(λ) must be positive, got {l}")));
    }
    Ok(match rule {
        AdaptiveRule::InvLin => 1.0 / (2.0 * l),
        AdaptiveRule::InvQua => c.mu / (2.0 * l * l),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LrSchedule {
    Constant { lr: f64 },
    InvlinExact { constants: SmoothnessConstants },
    InvquaExact { constants: SmoothnessConstants },
    InvlinPractical { h1: f64, h2: f64 },
    InvquaPractical { h1: f64, h2: f64 },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            LrSchedule::Constant { lr } if !(*lr > 0.0) || !lr.is_finite() => {
                Err(Error::InvalidConfig(format!("constant lr must be positive, got {lr}")))
            }
            LrSchedule::InvlinExact { constants } | LrSchedule::InvquaExact { constants } => {
                constants.validate()
            }
            LrSchedule::InvlinPractical { h1, h2 } | LrSchedule::InvquaPractical { h1, h2 }
                if !(*h1 > 0.0 && *h2 > 0.0) =>
            {
                Err(Error::InvalidConfig(format!(
                    "practical schedule constants must be positive, got H1 = {h1}, H2 = {h2}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, LrSchedule::InvlinExact { .. } | LrSchedule::InvquaExact { .. })
    }

    pub fn is_practical(&self) -> bool {
        matches!(
            self,
            LrSchedule::InvlinPractical { .. } | LrSchedule::InvquaPractical { .. }
        )
    }

    pub fn constants(&self) -> Option<&SmoothnessConstants> {
        match self {
            LrSchedule::InvlinExact { constants } | LrSchedule::InvquaExact { constants } => Some(constants),
            _ => None,
        }
    }

    /// The primal step size at multiplier `lm`.
    pub fn rate(&self, lm: &Multiplier) -> Result<f64> {
        match self {
            LrSchedule::Constant { lr } => Ok(*lr),
            LrSchedule::InvlinExact { constants } => exact_lr(AdaptiveRule::InvLin, constants, lm),
            LrSchedule::InvquaExact { constants } => exact_lr(AdaptiveRule::InvQua, constants, lm),
            LrSchedule::InvlinPractical { .. } | LrSchedule::InvquaPractical { .. } => practical_lr(self, lm),
        }
    }
}

/// Practical rate for a single constraint; several constraints are summed.
pub fn practical_lr(sched: &LrSchedule, lm: &Multiplier) -> Result<f64> {
    let lambda = lm.sum();
    match *sched {
        LrSchedule::Constant { lr } => Ok(lr),
        LrSchedule::InvlinPractical { h1, h2 } => Ok(h1 / (lambda + h2)),
        LrSchedule::InvquaPractical { h1, h2 } => Ok(h1 / (lambda + h2).powi(2)),
        _ => Err(Error::InvalidArgument(
            "exact schedules are evaluated with exact_lr".into(),
        )),
    }
}
