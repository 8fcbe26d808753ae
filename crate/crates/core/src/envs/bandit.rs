use crate::cmdp::{Action, Cmdp, SimRng, Space, State, Transition};
use crate::tabular::TabularModel;
use crate::{Error, Result};

/// Single-state environment where action `a` pays `rewards[a]` and incurs
/// `costs[a]` deterministically at every step.
#[derive(Debug, Clone)]
pub struct Bandit {
    model: TabularModel,
    cost_bound: f64,
}

impl Bandit {
    pub fn new(rewards: Vec<f64>, costs: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        crate::cmdp::check_gamma(gamma)?;
        let actions = rewards.len();
        if actions == 0 || costs.len() != actions {
            return Err(Error::dim("bandit cost rows", actions, costs.len()));
        }
        let m = costs[0].len();
        if costs.iter().any(|c| c.len() != m) {
            return Err(Error::InvalidConfig("ragged bandit cost vectors".into()));
        }
        let cost_bound = costs
            .iter()
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let model = TabularModel {
            states: 1,
            actions,
            num_costs: m,
            gamma,
            initial: vec![1.0],
            transitions: vec![1.0; actions],
            rewards,
            costs: (0..m).map(|i| costs.iter().map(|c| c[i]).collect()).collect(),
        };
        Ok(Self { model, cost_bound })
    }
}

impl Cmdp for Bandit {
    fn space(&self) -> Space {
        Space::Discrete {
            states: 1,
            actions: self.model.actions,
        }
    }

    fn num_costs(&self) -> usize {
        self.model.num_costs
    }

    fn gamma(&self) -> f64 {
        self.model.gamma
    }

    fn cost_bound(&self) -> f64 {
        self.cost_bound
    }

    fn initial_state(&self, _rng: &mut SimRng) -> State {
        State::Index(0)
    }

    fn step(&self, _state: &State, action: &Action, _rng: &mut SimRng) -> Transition {
        let a = action.index().expect("bandit actions are indices");
        Transition {
            next_state: State::Index(0),
            reward: self.model.rewards[a],
            costs: self.model.costs.iter().map(|c| c[a]).collect(),
        }
    }

    fn tabular_model(&self) -> Option<&TabularModel> {
        Some(&self.model)
    }
}
