//! Stochastic policies with exact score functions.
//!
//! Parameter layouts:
//!
//! - tabular softmax: `theta[s * actions + a]` is the logit of action `a` in state `s`;
//! - linear Gaussian: a row-major `action_dim × (state_dim + 1)` weight matrix
//!   acting on the features `φ(s) = (s, 1)`, followed by `action_dim` log
//!   standard deviations.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cmdp::{Action, SimRng, Space, State};
use crate::{Error, Result};

/// Initial log standard deviation of Gaussian policies.
pub const DEFAULT_LOG_STD: f64 = -std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PolicyKind {
    TabularSoftmax { states: usize, actions: usize },
    LinearGaussian { state_dim: usize, action_dim: usize },
}

impl PolicyKind {
    pub fn param_count(&self) -> usize {
        match *self {
            PolicyKind::TabularSoftmax { states, actions } => states * actions,
            PolicyKind::LinearGaussian {
                state_dim,
                action_dim,
            } => action_dim * (state_dim + 1) + action_dim,
        }
    }

    /// The policy family matching an environment's state and action spaces.
    pub fn for_space(space: Space) -> Self {
        match space {
            Space::Discrete { states, actions } => PolicyKind::TabularSoftmax { states, actions },
            Space::Continuous {
                state_dim,
                action_dim,
            } => PolicyKind::LinearGaussian {
                state_dim,
                action_dim,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    kind: PolicyKind,
    theta: Vec<f64>,
}

impl PolicyParams {
    pub fn new(kind: PolicyKind, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != kind.param_count() {
            return Err(Error::dim("policy parameters", kind.param_count(), theta.len()));
        }
        Ok(Self { kind, theta })
    }

    /// Uniform tabular policy, or a zero-mean Gaussian with std 0.5.
    pub fn zeros(kind: PolicyKind) -> Self {
        let mut theta = vec![0.0; kind.param_count()];
        if let PolicyKind::LinearGaussian { action_dim, .. } = kind {
            let n = theta.len();
            theta[n - action_dim..].fill(DEFAULT_LOG_STD);
        }
        Self { kind, theta }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_theta(self) -> Vec<f64> {
        self.theta
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.kind, theta)
    }

    /// In-place `theta += scale * direction`.
    pub fn axpy(&mut self, scale: f64, direction: &[f64]) -> Result<()> {
        if direction.len() != self.theta.len() {
            return Err(Error::dim("parameter step", self.theta.len(), direction.len()));
        }
        for (t, d) in self.theta.iter_mut().zip(direction) {
            *t += scale * d;
        }
        Ok(())
    }

    pub(crate) fn check_space(&self, space: Space) -> Result<()> {
        match (self.kind, space) {
            (
                PolicyKind::TabularSoftmax { states, actions },
                Space::Discrete {
                    states: s,
                    actions: a,
                },
            ) => {
                if states != s {
                    return Err(Error::dim("policy state count", s, states));
                }
                if actions != a {
                    return Err(Error::dim("policy action count", a, actions));
                }
                Ok(())
            }
            (
                PolicyKind::LinearGaussian {
                    state_dim,
                    action_dim,
                },
                Space::Continuous {
                    state_dim: s,
                    action_dim: a,
                },
            ) => {
                if state_dim != s {
                    return Err(Error::dim("policy state dimension", s, state_dim));
                }
                if action_dim != a {
                    return Err(Error::dim("policy action dimension", a, action_dim));
                }
                Ok(())
            }
            _ => Err(Error::IncompatibleState(format!(
                "{:?} policy cannot act in a {:?} space",
                self.kind, space
            ))),
        }
    }

    /// Action probabilities in a tabular state.
    pub fn probabilities(&self, state: &State) -> Result<Vec<f64>> {
        let (s, actions) = self.tabular_state(state)?;
        Ok(softmax(&self.theta[s * actions..(s + 1) * actions]))
    }

    /// Gaussian mean `W φ(s)`.
    pub fn mean(&self, state: &State) -> Result<Vec<f64>> {
        let (x, state_dim, action_dim) = self.gaussian_state(state)?;
        let cols = state_dim + 1;
        Ok((0..action_dim)
            .map(|i| {
                let row = &self.theta[i * cols..(i + 1) * cols];
                row[..state_dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[state_dim]
            })
            .collect())
    }

    pub fn log_std(&self) -> Option<&[f64]> {
        match self.kind {
            PolicyKind::LinearGaussian { action_dim, .. } => {
                Some(&self.theta[self.theta.len() - action_dim..])
            }
            PolicyKind::TabularSoftmax { .. } => None,
        }
    }

    /// Samples an action from `π_θ(·|state)`.
    pub fn act(&self, state: &State, rng: &mut SimRng) -> Result<Action> {
        match self.kind {
            PolicyKind::TabularSoftmax { .. } => {
                let probs = self.probabilities(state)?;
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(Action::Index(a));
                    }
                }
                // u landed in the rounding gap above the cumulative sum
                Ok(Action::Index(probs.len() - 1))
            }
            PolicyKind::LinearGaussian { .. } => {
                let mean = self.mean(state)?;
                let log_std = self.log_std().expect("gaussian");
                Ok(Action::Vector(
                    mean.iter()
                        .zip(log_std)
                        .map(|(m, ls)| {
                            let z: f64 = rng.sample(StandardNormal);
                            m + ls.exp() * z
                        })
                        .collect(),
                ))
            }
        }
    }

    /// `log π_θ(action|state)`.
    pub fn log_prob(&self, state: &State, action: &Action) -> Result<f64> {
        match self.kind {
            PolicyKind::TabularSoftmax { .. } => {
                let (s, actions) = self.tabular_state(state)?;
                let a = tabular_action(action, actions)?;
                let logits = &self.theta[s * actions..(s + 1) * actions];
                let lp = logits[a] - log_sum_exp(logits);
                if lp == f64::NEG_INFINITY {
                    return Err(Error::ZeroProbabilityAction);
                }
                Ok(lp)
            }
            PolicyKind::LinearGaussian { .. } => {
                let mean = self.mean(state)?;
                let a = gaussian_action(action, mean.len())?;
                let log_std = self.log_std().expect("gaussian");
                let ln_2pi = (2.0 * std::f64::consts::PI).ln();
                Ok(a.iter()
                    .zip(&mean)
                    .zip(log_std)
                    .map(|((x, m), ls)| {
                        let z = (x - m) / ls.exp();
                        -0.5 * z * z - ls - 0.5 * ln_2pi
                    })
                    .sum())
            }
        }
    }

    /// Score function `∇_θ log π_θ(action|state)`.
    pub fn grad_log_prob(&self, state: &State, action: &Action) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.theta.len()];
        self.accumulate_grad_log_prob(state, action, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// `out += weight · ∇_θ log π_θ(action|state)` without allocating a
    /// full-size gradient per call.
    pub fn accumulate_grad_log_prob(
        &self,
        state: &State,
        action: &Action,
        weight: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if out.len() != self.theta.len() {
            return Err(Error::dim("gradient buffer", self.theta.len(), out.len()));
        }
        match self.kind {
            PolicyKind::TabularSoftmax { .. } => {
                let (s, actions) = self.tabular_state(state)?;
                let a = tabular_action(action, actions)?;
                let probs = softmax(&self.theta[s * actions..(s + 1) * actions]);
                if probs[a] == 0.0 {
                    return Err(Error::ZeroProbabilityAction);
                }
                let block = &mut out[s * actions..(s + 1) * actions];
                for (b, (g, p)) in block.iter_mut().zip(&probs).enumerate() {
                    let indicator = if b == a { 1.0 } else { 0.0 };
                    *g += weight * (indicator - p);
                }
            }
            PolicyKind::LinearGaussian { .. } => {
                let (x, state_dim, action_dim) = self.gaussian_state(state)?;
                let x = x.to_vec();
                let mean = self.mean(state)?;
                let a = gaussian_action(action, action_dim)?;
                let cols = state_dim + 1;
                let n = self.theta.len();
                for i in 0..action_dim {
                    let ls = self.theta[n - action_dim + i];
                    let var = (2.0 * ls).exp();
                    let diff = a[i] - mean[i];
                    let dmean = weight * diff / var;
                    let row = &mut out[i * cols..(i + 1) * cols];
                    for (g, v) in row[..state_dim].iter_mut().zip(&x) {
                        *g += dmean * v;
                    }
                    row[state_dim] += dmean;
                    out[n - action_dim + i] += weight * (diff * diff / var - 1.0);
                }
            }
        }
        Ok(())
    }

    fn tabular_state(&self, state: &State) -> Result<(usize, usize)> {
        let PolicyKind::TabularSoftmax { states, actions } = self.kind else {
            return Err(Error::IncompatibleState(
                "gaussian policy given a tabular query".into(),
            ));
        };
        let s = state
            .index()
            .ok_or_else(|| Error::IncompatibleState("tabular policy needs an index state".into()))?;
        if s >= states {
            return Err(Error::IncompatibleState(format!(
                "state {s} out of range for {states} states"
            )));
        }
        Ok((s, actions))
    }

    fn gaussian_state<'a>(&self, state: &'a State) -> Result<(&'a [f64], usize, usize)> {
        let PolicyKind::LinearGaussian {
            state_dim,
            action_dim,
        } = self.kind
        else {
            return Err(Error::IncompatibleState(
                "tabular policy given a continuous query".into(),
            ));
        };
        let x = state
            .vector()
            .ok_or_else(|| Error::IncompatibleState("gaussian policy needs a vector state".into()))?;
        if x.len() != state_dim {
            return Err(Error::dim("state vector", state_dim, x.len()));
        }
        Ok((x, state_dim, action_dim))
    }
}

fn tabular_action(action: &Action, actions: usize) -> Result<usize> {
    match action.index() {
        Some(a) if a < actions => Ok(a),
        _ => Err(Error::InvalidArgument(format!(
            "{action:?} is not one of {actions} discrete actions"
        ))),
    }
}

fn gaussian_action(action: &Action, action_dim: usize) -> Result<&[f64]> {
    let a = action
        .vector()
        .ok_or_else(|| Error::InvalidArgument("gaussian policy needs a vector action".into()))?;
    if a.len() != action_dim {
        return Err(Error::dim("action vector", action_dim, a.len()));
    }
    Ok(a)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
