//! Lagrangian `𝓛(θ, λ) = −J_R(θ) + λᵀ(J_C(θ) − d)` and its stochastic
//! gradients: a score-function (REINFORCE) estimator and the PPO-Lagrangian
//! clipped surrogate with GAE advantages.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cmdp::{
    discounted_value, estimate_from_batch, sample_batch, Cmdp, ObjectiveEstimate, SamplingConfig, State,
    Trajectory,
};
use crate::policy::PolicyParams;
use crate::tabular::evaluate_policy;
use crate::{Error, Result};

/// Cost thresholds `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub d: Vec<f64>,
}

impl ConstraintSpec {
    pub fn new(d: Vec<f64>) -> Self {
        Self { d }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.d.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Lagrange multiplier `λ ∈ ℝ₊ᵐ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Multiplier(Vec<f64>);

impl Multiplier {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if let Some(bad) = lambda.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "multiplier components must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Self(lambda))
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    /// Componentwise projection of `x` onto the nonnegative orthant.
    pub fn project(x: &[f64]) -> Self {
        Self(x.iter().map(|v| v.max(0.0)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(l, v)| l * v).sum()
    }
}

impl TryFrom<Vec<f64>> for Multiplier {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Multiplier> for Vec<f64> {
    fn from(m: Multiplier) -> Self {
        m.0
    }
}

fn check_dims(j_c: &[f64], lm: Option<&Multiplier>, spec: &ConstraintSpec) -> Result<()> {
    if j_c.len() != spec.len() {
        return Err(Error::dim("cost vector", spec.len(), j_c.len()));
    }
    if let Some(lm) = lm {
        if lm.len() != spec.len() {
            return Err(Error::dim("multiplier", spec.len(), lm.len()));
        }
    }
    Ok(())
}

/// Constraint function `g = J_C − d`.
pub fn constraint_value(j_c: &[f64], spec: &ConstraintSpec) -> Result<Vec<f64>> {
    check_dims(j_c, None, spec)?;
    Ok(j_c.iter().zip(&spec.d).map(|(c, d)| c - d).collect())
}

pub fn lagrangian_value(j_r: f64, j_c: &[f64], lm: &Multiplier, spec: &ConstraintSpec) -> Result<f64> {
    check_dims(j_c, Some(lm), spec)?;
    Ok(-j_r + lm.dot(&constraint_value(j_c, spec)?))
}

/// Monte-Carlo estimate of `∇_θ𝓛` together with the objective estimates of
/// the batch it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    /// Componentwise standard error of `grad`.
    pub std_err: Vec<f64>,
    pub objectives: ObjectiveEstimate,
}

/// Samples a batch and estimates `∇_θ𝓛(θ, λ)` from it.
pub fn reinforce_grad(
    cmdp: &dyn Cmdp,
    params: &PolicyParams,
    lm: &Multiplier,
    spec: &ConstraintSpec,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<GradientEstimate> {
    let batch = sample_batch(cmdp, params, sampling, seed)?;
    reinforce_grad_from_batch(&batch, params, lm, spec, cmdp.gamma())
}

/// Score-function estimate: each trajectory contributes
/// `(Σ_t ∇log π(a_t|s_t)) · (ℓ_i − b_i)` where `ℓ_i = −R_i + λᵀ(C_i − d)` is
/// its discounted Lagrangian and `b_i` is the mean of the other trajectories'
/// values, which keeps the estimate unbiased.
pub fn reinforce_grad_from_batch(
    batch: &[Trajectory],
    params: &PolicyParams,
    lm: &Multiplier,
    spec: &ConstraintSpec,
    gamma: f64,
) -> Result<GradientEstimate> {
    let objectives = estimate_from_batch(batch, gamma)?;
    check_dims(&objectives.j_c, Some(lm), spec)?;
    let n = batch.len();
    let dim = params.theta().len();

    let mut values = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for traj in batch {
        let v = discounted_value(traj, gamma)?;
        values.push(lagrangian_value(v.ret, &v.costs, lm, spec)?);
        let mut score = vec![0.0; dim];
        for step in &traj.steps {
            params.accumulate_grad_log_prob(&step.state, &step.action, 1.0, &mut score)?;
        }
        scores.push(score);
    }

    let total: f64 = values.iter().sum();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for (score, value) in scores.iter().zip(&values) {
        let baseline = if n > 1 {
            (total - value) / (n - 1) as f64
        } else {
            0.0
        };
        let weight = value - baseline;
        for j in 0..dim {
            let g = score[j] * weight;
            sum[j] += g;
            sum_sq[j] += g * g;
        }
    }
    let nf = n as f64;
    let grad: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_err = if n > 1 {
        sum_sq
            .iter()
            .zip(&grad)
            .map(|(sq, mean)| ((sq - nf * mean * mean).max(0.0) / (nf - 1.0) / nf).sqrt())
            .collect()
    } else {
        vec![0.0; dim]
    };
    Ok(GradientEstimate {
        grad,
        std_err,
        objectives,
    })
}

/// Generalised advantage estimates for one signal:
/// `A_t = Σ_l (γλ)ˡ δ_{t+l}` with `δ_t = x_t + γV_{t+1} − V_t`.
///
/// `values` holds `V(s_0), …, V(s_T)`, the last entry bootstrapping the
/// truncated tail.
pub fn gae(signal: &[f64], values: &[f64], gamma: f64, gae_lambda: f64) -> Result<Vec<f64>> {
    if values.len() != signal.len() + 1 {
        return Err(Error::dim("value sequence", signal.len() + 1, values.len()));
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&gae_lambda) {
        return Err(Error::InvalidArgument(format!(
            "gamma and gae_lambda must lie in [0, 1], got {gamma} and {gae_lambda}"
        )));
    }
    let mut adv = vec![0.0; signal.len()];
    let mut running = 0.0;
    for t in (0..signal.len()).rev() {
        let delta = signal[t] + gamma * values[t + 1] - values[t];
        running = delta + gamma * gae_lambda * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// Reward advantages of a trajectory.
pub fn gae_advantages(traj: &Trajectory, values: &[f64], gamma: f64, gae_lambda: f64) -> Result<Vec<f64>> {
    let rewards: Vec<f64> = traj.rewards().collect();
    gae(&rewards, values, gamma, gae_lambda)
}

/// Advantages of cost signal `i` of a trajectory.
pub fn gae_cost_advantages(
    traj: &Trajectory,
    i: usize,
    values: &[f64],
    gamma: f64,
    gae_lambda: f64,
) -> Result<Vec<f64>> {
    if i >= traj.num_costs {
        return Err(Error::dim("cost index", traj.num_costs, i));
    }
    let costs: Vec<f64> = traj.steps.iter().map(|s| s.costs[i]).collect();
    gae(&costs, values, gamma, gae_lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpolConfig {
    pub clip_ratio: f64,
    pub gae_lambda: f64,
    pub minibatch_size: usize,
    pub epochs: usize,
}

impl Default for PpolConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 0.2,
            gae_lambda: 0.95,
            minibatch_size: 256,
            epochs: 4,
        }
    }
}

impl PpolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "clip_ratio must lie in (0, 1), got {}",
                self.clip_ratio
            )));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::InvalidConfig(format!(
                "gae_lambda must lie in [0, 1], got {}",
                self.gae_lambda
            )));
        }
        if self.minibatch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("minibatch_size and epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageSample {
    pub state: State,
    pub action: crate::cmdp::Action,
    pub log_prob_old: f64,
    pub adv_r: f64,
    pub adv_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdvantageBatch {
    pub samples: Vec<AdvantageSample>,
}

fn ppol_lambda(batch: &AdvantageBatch, lm: &Multiplier) -> Result<f64> {
    if lm.len() != 1 {
        return Err(Error::dim("PPO-Lagrangian multiplier", 1, lm.len()));
    }
    if let Some(s) = batch.samples.iter().find(|s| s.adv_c.len() != 1) {
        return Err(Error::dim("PPO-Lagrangian cost advantage", 1, s.adv_c.len()));
    }
    if batch.samples.is_empty() {
        return Err(Error::InvalidArgument("empty advantage batch".into()));
    }
    Ok(lm.as_slice()[0])
}

/// Batch mean of `(min(ρA_R, clip(ρ, 1−ε, 1+ε)A_R) − λρA_C) / (1 + λ)`.
///
/// The cost advantage is importance-weighted by the same ratio `ρ` so that the
/// cost term contributes to the policy gradient; at `ρ = 1` this is exactly
/// `(ℓ_ppo − λA_C)/(1 + λ)`.
pub fn ppol_surrogate(
    batch: &AdvantageBatch,
    params: &PolicyParams,
    lm: &Multiplier,
    cfg: &PpolConfig,
) -> Result<f64> {
    let lambda = ppol_lambda(batch, lm)?;
    let eps = cfg.clip_ratio;
    let mut total = 0.0;
    for s in &batch.samples {
        let ratio = (params.log_prob(&s.state, &s.action)? - s.log_prob_old).exp();
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
        let ppo = (ratio * s.adv_r).min(clipped * s.adv_r);
        total += (ppo - lambda * ratio * s.adv_c[0]) / (1.0 + lambda);
    }
    Ok(total / batch.samples.len() as f64)
}

/// Gradient of [`ppol_surrogate`] with respect to θ.
pub fn ppol_surrogate_grad(
    batch: &AdvantageBatch,
    params: &PolicyParams,
    lm: &Multiplier,
    cfg: &PpolConfig,
) -> Result<Vec<f64>> {
    let lambda = ppol_lambda(batch, lm)?;
    let eps = cfg.clip_ratio;
    let n = batch.samples.len() as f64;
    let mut grad = vec![0.0; params.theta().len()];
    for s in &batch.samples {
        let ratio = (params.log_prob(&s.state, &s.action)? - s.log_prob_old).exp();
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
        let reward_active = ratio * s.adv_r <= clipped * s.adv_r;
        let coeff = if reward_active { s.adv_r } else { 0.0 } - lambda * s.adv_c[0];
        // ∇ρ = ρ ∇log π
        let weight = ratio * coeff / ((1.0 + lambda) * n);
        if weight != 0.0 {
            params.accumulate_grad_log_prob(&s.state, &s.action, weight, &mut grad)?;
        }
    }
    Ok(grad)
}

/// Builds reward and cost advantages for a batch collected under `params`.
///
/// Tabular environments use exact state values of the current policy;
/// continuous ones a per-batch least-squares fit of discounted returns-to-go
/// on the features `(s, 1)`.
pub fn build_advantage_batch(
    cmdp: &dyn Cmdp,
    params: &PolicyParams,
    batch: &[Trajectory],
    cfg: &PpolConfig,
) -> Result<AdvantageBatch> {
    let gamma = cmdp.gamma();
    let m = cmdp.num_costs();
    let values = ValueModel::fit(cmdp, params, batch)?;
    let mut samples = Vec::new();
    for traj in batch {
        let states: Vec<&State> = traj
            .steps
            .iter()
            .map(|s| &s.state)
            .chain(std::iter::once(&traj.final_state))
            .collect();
        let v_r: Vec<f64> = states.iter().map(|s| values.value(s, None)).collect::<Result<_>>()?;
        let adv_r = gae_advantages(traj, &v_r, gamma, cfg.gae_lambda)?;
        let mut adv_c = Vec::with_capacity(m);
        for i in 0..m {
            let v_c: Vec<f64> = states
                .iter()
                .map(|s| values.value(s, Some(i)))
                .collect::<Result<_>>()?;
            adv_c.push(gae_cost_advantages(traj, i, &v_c, gamma, cfg.gae_lambda)?);
        }
        for (t, step) in traj.steps.iter().enumerate() {
            samples.push(AdvantageSample {
                state: step.state.clone(),
                action: step.action.clone(),
                log_prob_old: params.log_prob(&step.state, &step.action)?,
                adv_r: adv_r[t],
                adv_c: adv_c.iter().map(|a| a[t]).collect(),
            });
        }
    }
    Ok(AdvantageBatch { samples })
}

enum ValueModel {
    Tabular { v_r: Vec<f64>, v_c: Vec<Vec<f64>> },
    Linear { w_r: Vec<f64>, w_c: Vec<Vec<f64>> },
}

impl ValueModel {
    fn fit(cmdp: &dyn Cmdp, params: &PolicyParams, batch: &[Trajectory]) -> Result<Self> {
        if let Some(model) = cmdp.tabular_model() {
            let pv = evaluate_policy(model, params)?;
            return Ok(ValueModel::Tabular {
                v_r: pv.v_r,
                v_c: pv.v_c,
            });
        }
        let gamma = cmdp.gamma();
        let m = cmdp.num_costs();
        let mut features = Vec::new();
        let mut targets_r = Vec::new();
        let mut targets_c: Vec<Vec<f64>> = vec![Vec::new(); m];
        for traj in batch {
            let mut g_r = 0.0;
            let mut g_c = vec![0.0; m];
            let mut rows = Vec::with_capacity(traj.len());
            for step in traj.steps.iter().rev() {
                g_r = step.reward + gamma * g_r;
                for (acc, c) in g_c.iter_mut().zip(&step.costs) {
                    *acc = c + gamma * *acc;
                }
                rows.push((features_of(&step.state)?, g_r, g_c.clone()));
            }
            for (phi, r, c) in rows.into_iter().rev() {
                features.push(phi);
                targets_r.push(r);
                for i in 0..m {
                    targets_c[i].push(c[i]);
                }
            }
        }
        let w_r = least_squares(&features, &targets_r)?;
        let w_c = targets_c.iter().map(|t| least_squares(&features, t)).collect::<Result<_>>()?;
        Ok(ValueModel::Linear { w_r, w_c })
    }

    fn value(&self, state: &State, cost: Option<usize>) -> Result<f64> {
        match self {
            ValueModel::Tabular { v_r, v_c } => {
                let s = state
                    .index()
                    .ok_or_else(|| Error::IncompatibleState("tabular values need index states".into()))?;
                Ok(match cost {
                    None => v_r[s],
                    Some(i) => v_c[i][s],
                })
            }
            ValueModel::Linear { w_r, w_c } => {
                let phi = features_of(state)?;
                let w = match cost {
                    None => w_r,
                    Some(i) => &w_c[i],
                };
                Ok(phi.iter().zip(w).map(|(a, b)| a * b).sum())
            }
        }
    }
}

fn features_of(state: &State) -> Result<Vec<f64>> {
    let x = state
        .vector()
        .ok_or_else(|| Error::IncompatibleState("linear values need vector states".into()))?;
    let mut phi = x.to_vec();
    phi.push(1.0);
    Ok(phi)
}

/// Ridge-stabilised normal equations `(XᵀX + 10⁻⁸ I) w = Xᵀy`.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let k = rows.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(y);
    let xt = x.transpose();
    let gram = &xt * &x + DMatrix::identity(k, k) * 1e-8;
    gram.cholesky()
        .map(|c| c.solve(&(xt * y)).iter().copied().collect())
        .ok_or_else(|| Error::InvalidArgument("value regression is ill-conditioned".into()))
}
