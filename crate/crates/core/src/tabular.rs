//! Exact policy evaluation on tabular models.

use nalgebra::{DMatrix, DVector};

use crate::cmdp::State;
use crate::policy::PolicyParams;
use crate::{Error, Result};

/// Expected-reward tabular model: `P(s'|s,a)`, `r(s,a)`, `c_i(s,a)` and the
/// initial distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    pub states: usize,
    pub actions: usize,
    pub num_costs: usize,
    pub gamma: f64,
    pub initial: Vec<f64>,
    /// `transitions[(s * actions + a) * states + s']`
    pub transitions: Vec<f64>,
    /// `rewards[s * actions + a]`
    pub rewards: Vec<f64>,
    /// `costs[i][s * actions + a]`
    pub costs: Vec<Vec<f64>>,
}

impl TabularModel {
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.transitions[start..start + self.states]
    }

    fn policy_matrix(&self, params: &PolicyParams) -> Result<Vec<Vec<f64>>> {
        (0..self.states)
            .map(|s| {
                let probs = params.probabilities(&State::Index(s))?;
                if probs.len() != self.actions {
                    return Err(Error::dim("policy action count", self.actions, probs.len()));
                }
                Ok(probs)
            })
            .collect()
    }

    fn induced(&self, pi: &[Vec<f64>], signal: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.states;
        let mut p = DMatrix::zeros(n, n);
        let mut r = DVector::zeros(n);
        for s in 0..n {
            for a in 0..self.actions {
                let w = pi[s][a];
                r[s] += w * signal[s * self.actions + a];
                for (sp, prob) in self.transition_row(s, a).iter().enumerate() {
                    p[(s, sp)] += w * prob;
                }
            }
        }
        (p, r)
    }
}

/// State values and discounted objectives of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub v_r: Vec<f64>,
    /// `v_c[i][s]`
    pub v_c: Vec<Vec<f64>>,
    pub j_r: f64,
    pub j_c: Vec<f64>,
}

impl PolicyValue {
    pub fn q_r(&self, model: &TabularModel, s: usize, a: usize) -> f64 {
        backup(model, &model.rewards, &self.v_r, s, a)
    }

    pub fn q_c(&self, model: &TabularModel, i: usize, s: usize, a: usize) -> f64 {
        backup(model, &model.costs[i], &self.v_c[i], s, a)
    }
}

fn backup(model: &TabularModel, signal: &[f64], v: &[f64], s: usize, a: usize) -> f64 {
    signal[s * model.actions + a]
        + model.gamma
            * model
                .transition_row(s, a)
                .iter()
                .zip(v)
                .map(|(p, x)| p * x)
                .sum::<f64>()
}

/// Infinite-horizon values by solving `(I − γ P_π) V = r_π`.
pub fn evaluate_policy(model: &TabularModel, params: &PolicyParams) -> Result<PolicyValue> {
    let pi = model.policy_matrix(params)?;
    let solve = |signal: &[f64]| -> Result<Vec<f64>> {
        let (p, r) = model.induced(&pi, signal);
        let a = DMatrix::identity(model.states, model.states) - p * model.gamma;
        a.lu()
            .solve(&r)
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::InvalidArgument("singular policy-evaluation system".into()))
    };
    finish(model, solve(&model.rewards)?, model.costs.iter().map(|c| solve(c)).collect::<Result<_>>()?)
}

/// Exact expectation of the horizon-`H` truncated discounted sums, by
/// `H` backward Bellman sweeps.
pub fn evaluate_policy_truncated(
    model: &TabularModel,
    params: &PolicyParams,
    horizon: usize,
) -> Result<PolicyValue> {
    let pi = model.policy_matrix(params)?;
    let sweep = |signal: &[f64]| -> Vec<f64> {
        let (p, r) = model.induced(&pi, signal);
        let mut v = DVector::zeros(model.states);
        for _ in 0..horizon {
            v = &r + (&p * v) * model.gamma;
        }
        v.iter().copied().collect()
    };
    finish(model, sweep(&model.rewards), model.costs.iter().map(|c| sweep(c)).collect())
}

fn finish(model: &TabularModel, v_r: Vec<f64>, v_c: Vec<Vec<f64>>) -> Result<PolicyValue> {
    let dot = |v: &[f64]| model.initial.iter().zip(v).map(|(p, x)| p * x).sum::<f64>();
    Ok(PolicyValue {
        j_r: dot(&v_r),
        j_c: v_c.iter().map(|v| dot(v)).collect(),
        v_r,
        v_c,
    })
}
