//! Constrained MDP abstraction and Monte-Carlo objective estimates.
//!
//! Infinite-horizon discounted sums are truncated at a fixed horizon `H`; the
//! truncation error of a return estimate is at most `γ^H · R_max / (1 − γ)`.
//!
//! Every trajectory draws from its own ChaCha8 stream: trajectory `i` of a
//! batch sampled with base seed `s` uses `ChaCha8Rng::seed_from_u64(s)` with
//! `set_stream(i)`. Single trajectories use stream 0, so a batch of one is the
//! same trajectory as [`sample_trajectory`] with the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::policy::PolicyParams;
use crate::tabular::TabularModel;
use crate::{Error, Result};

pub type SimRng = ChaCha8Rng;

/// Random stream used for trajectory `index` of a batch drawn with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A state is an index for tabular environments and a real vector otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum State {
    Index(usize),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Index(usize),
    Vector(Vec<f64>),
}

impl State {
    pub fn index(&self) -> Option<usize> {
        match self {
            State::Index(i) => Some(*i),
            State::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            State::Vector(v) => Some(v),
            State::Index(_) => None,
        }
    }
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Index(i) => Some(*i),
            Action::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Action::Vector(v) => Some(v),
            Action::Index(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Discrete { states: usize, actions: usize },
    Continuous { state_dim: usize, action_dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next_state: State,
    pub reward: f64,
    pub costs: Vec<f64>,
}

/// A constrained MDP `(S, A, R, C, P, U, γ)` with costs bounded by `B`.
///
/// Implementations must be deterministic functions of the supplied random
/// stream and must not hold interior mutability, so one value can be shared
/// across threads sampling distinct trajectories.
pub trait Cmdp: Send + Sync {
    fn space(&self) -> Space;

    /// Number of cost signals `m`.
    fn num_costs(&self) -> usize;

    fn gamma(&self) -> f64;

    /// Bound `B` on the norm of any per-step cost vector.
    fn cost_bound(&self) -> f64;

    fn initial_state(&self, rng: &mut SimRng) -> State;

    fn step(&self, state: &State, action: &Action, rng: &mut SimRng) -> Transition;

    /// Exact transition/reward/cost tables, when the environment is tabular.
    fn tabular_model(&self) -> Option<&TabularModel> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// State reached after the last step, used to bootstrap value estimates.
    pub final_state: State,
    pub num_costs: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedValue {
    pub ret: f64,
    pub costs: Vec<f64>,
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("discount must lie in (0, 1), got {gamma}")))
    }
}

/// Rolls out `params` for exactly `horizon` steps using stream 0 of `seed`.
pub fn sample_trajectory(
    cmdp: &dyn Cmdp,
    params: &PolicyParams,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    rollout(cmdp, params, horizon, &mut trajectory_rng(seed, 0))
}

/// Rolls out `params` for exactly `horizon` steps drawing from `rng`.
pub fn rollout(
    cmdp: &dyn Cmdp,
    params: &PolicyParams,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    params.check_space(cmdp.space())?;
    let m = cmdp.num_costs();
    let mut state = cmdp.initial_state(rng);
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = params.act(&state, rng)?;
        let tr = cmdp.step(&state, &action, rng);
        debug_assert_eq!(tr.costs.len(), m);
        steps.push(Step {
            state: std::mem::replace(&mut state, tr.next_state),
            action,
            reward: tr.reward,
            costs: tr.costs,
        });
    }
    Ok(Trajectory {
        steps,
        final_state: state,
        num_costs: m,
    })
}

/// `Σ_t γᵗ r_t` and `Σ_t γᵗ c_{i,t}` over the recorded steps.
pub fn discounted_value(traj: &Trajectory, gamma: f64) -> Result<DiscountedValue> {
    check_gamma(gamma)?;
    let mut ret = 0.0;
    let mut costs = vec![0.0; traj.num_costs];
    let mut discount = 1.0;
    for step in &traj.steps {
        ret += discount * step.reward;
        for (acc, c) in costs.iter_mut().zip(&step.costs) {
            *acc += discount * c;
        }
        discount *= gamma;
    }
    Ok(DiscountedValue { ret, costs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub n_traj: usize,
    pub horizon: usize,
}

/// Sample means of discounted return and costs with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEstimate {
    pub j_r: f64,
    pub j_c: Vec<f64>,
    pub j_r_std_err: f64,
    pub j_c_std_err: Vec<f64>,
    pub n_traj: usize,
}

/// Draws `n_traj` trajectories, trajectory `i` on stream `i` of `seed`.
pub fn sample_batch(
    cmdp: &dyn Cmdp,
    params: &PolicyParams,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if sampling.n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    (0..sampling.n_traj as u64)
        .map(|i| rollout(cmdp, params, sampling.horizon, &mut trajectory_rng(seed, i)))
        .collect()
}

pub fn estimate_objectives(
    cmdp: &dyn Cmdp,
    params: &PolicyParams,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<ObjectiveEstimate> {
    let batch = sample_batch(cmdp, params, sampling, seed)?;
    estimate_from_batch(&batch, cmdp.gamma())
}

pub fn estimate_from_batch(batch: &[Trajectory], gamma: f64) -> Result<ObjectiveEstimate> {
    let first = batch
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory batch".into()))?;
    let m = first.num_costs;
    let values = batch
        .iter()
        .map(|t| discounted_value(t, gamma))
        .collect::<Result<Vec<_>>>()?;
    let returns: Vec<f64> = values.iter().map(|v| v.ret).collect();
    let (j_r, j_r_std_err) = mean_and_std_err(&returns);
    let mut j_c = Vec::with_capacity(m);
    let mut j_c_std_err = Vec::with_capacity(m);
    for i in 0..m {
        let col: Vec<f64> = values.iter().map(|v| v.costs[i]).collect();
        let (mean, se) = mean_and_std_err(&col);
        j_c.push(mean);
        j_c_std_err.push(se);
    }
    Ok(ObjectiveEstimate {
        j_r,
        j_c,
        j_r_std_err,
        j_c_std_err,
        n_traj: batch.len(),
    })
}

pub(crate) fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
