//! Tabular gridworld with hazard cells, an absorbing goal and slippery moves.
//!
//! Cells are `(row, col)` with row 0 at the top; the state index of a cell is
//! `row * width + col`. Actions are up, right, down, left. With probability
//! `slip_prob` the agent moves in one of the three other directions, chosen
//! uniformly. Moves off the grid leave the agent in place.
//!
//! Every transition out of a non-goal cell pays `goal_reward` if it lands on
//! the goal and `step_reward` otherwise, and incurs `hazard_cost` if it lands
//! on a hazard cell. The goal is absorbing with zero reward and cost.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::{check_gamma, Action, Cmdp, SimRng, Space, State, Transition};
use crate::tabular::TabularModel;
use crate::{Error, Result};

pub type Cell = [usize; 2];

const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub hazard_cells: Vec<Cell>,
    pub goal_cell: Cell,
    pub start_cell: Cell,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub hazard_cost: f64,
    pub slip_prob: f64,
    pub gamma: f64,
}

impl Default for GridworldSpec {
    /// Two-row corridor: start and goal at the ends of the bottom row with
    /// hazards between them, so the short route pays about three hazard costs
    /// and the detour along the top row pays only for slips.
    fn default() -> Self {
        Self {
            width: 5,
            height: 2,
            hazard_cells: vec![[1, 1], [1, 2], [1, 3]],
            goal_cell: [1, 4],
            start_cell: [1, 0],
            step_reward: -1.0,
            goal_reward: 50.0,
            hazard_cost: 20.0,
            slip_prob: 0.1,
            gamma: 0.99,
        }
    }
}

impl GridworldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("grid must be nonempty".into()));
        }
        let inside = |c: &Cell| c[0] < self.height && c[1] < self.width;
        if !inside(&self.goal_cell) {
            return Err(Error::InvalidConfig(format!("goal {:?} outside grid", self.goal_cell)));
        }
        if !inside(&self.start_cell) {
            return Err(Error::InvalidConfig(format!("start {:?} outside grid", self.start_cell)));
        }
        if let Some(h) = self.hazard_cells.iter().find(|c| !inside(c)) {
            return Err(Error::InvalidConfig(format!("hazard {h:?} outside grid")));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(Error::InvalidConfig(format!(
                "slip_prob must lie in [0, 1), got {}",
                self.slip_prob
            )));
        }
        if !(self.hazard_cost >= 0.0) {
            return Err(Error::InvalidConfig("hazard_cost must be nonnegative".into()));
        }
        check_gamma(self.gamma).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    fn index(&self, c: Cell) -> usize {
        c[0] * self.width + c[1]
    }

    fn moved(&self, s: usize, dir: usize) -> usize {
        let (row, col) = ((s / self.width) as isize, (s % self.width) as isize);
        let (dr, dc) = MOVES[dir];
        let (r, c) = (row + dr, col + dc);
        if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
            s
        } else {
            r as usize * self.width + c as usize
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gridworld {
    spec: GridworldSpec,
    hazard: Vec<bool>,
    goal: usize,
    start: usize,
    model: TabularModel,
}

pub fn make_gridworld(spec: GridworldSpec) -> Result<Gridworld> {
    spec.validate()?;
    let n = spec.width * spec.height;
    let mut hazard = vec![false; n];
    for &c in &spec.hazard_cells {
        hazard[spec.index(c)] = true;
    }
    let goal = spec.index(spec.goal_cell);
    let start = spec.index(spec.start_cell);

    let mut transitions = vec![0.0; n * 4 * n];
    let mut rewards = vec![0.0; n * 4];
    let mut costs = vec![0.0; n * 4];
    for s in 0..n {
        for a in 0..4 {
            let sa = s * 4 + a;
            if s == goal {
                transitions[sa * n + goal] = 1.0;
                continue;
            }
            for dir in 0..4 {
                let p = if dir == a {
                    1.0 - spec.slip_prob
                } else {
                    spec.slip_prob / 3.0
                };
                if p == 0.0 {
                    continue;
                }
                let next = spec.moved(s, dir);
                transitions[sa * n + next] += p;
                rewards[sa] += p * if next == goal { spec.goal_reward } else { spec.step_reward };
                if hazard[next] {
                    costs[sa] += p * spec.hazard_cost;
                }
            }
        }
    }
    let mut initial = vec![0.0; n];
    initial[start] = 1.0;
    let model = TabularModel {
        states: n,
        actions: 4,
        num_costs: 1,
        gamma: spec.gamma,
        initial,
        transitions,
        rewards,
        costs: vec![costs],
    };
    Ok(Gridworld {
        spec,
        hazard,
        goal,
        start,
        model,
    })
}

impl Gridworld {
    pub fn spec(&self) -> &GridworldSpec {
        &self.spec
    }

    pub fn goal_state(&self) -> usize {
        self.goal
    }

    pub fn start_state(&self) -> usize {
        self.start
    }
}

impl Cmdp for Gridworld {
    fn space(&self) -> Space {
        Space::Discrete {
            states: self.model.states,
            actions: 4,
        }
    }

    fn num_costs(&self) -> usize {
        1
    }

    fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    fn cost_bound(&self) -> f64 {
        self.spec.hazard_cost
    }

    fn initial_state(&self, _rng: &mut SimRng) -> State {
        State::Index(self.start)
    }

    fn step(&self, state: &State, action: &Action, rng: &mut SimRng) -> Transition {
        let s = state.index().expect("gridworld states are indices");
        let a = action.index().expect("gridworld actions are indices");
        if s == self.goal {
            return Transition {
                next_state: State::Index(s),
                reward: 0.0,
                costs: vec![0.0],
            };
        }
        let dir = if self.spec.slip_prob > 0.0 && rng.random::<f64>() < self.spec.slip_prob {
            let k: usize = rng.random_range(0..3);
            (a + 1 + k) % 4
        } else {
            a
        };
        let next = self.spec.moved(s, dir);
        Transition {
            next_state: State::Index(next),
            reward: if next == self.goal {
                self.spec.goal_reward
            } else {
                self.spec.step_reward
            },
            costs: vec![if self.hazard[next] { self.spec.hazard_cost } else { 0.0 }],
        }
    }

    fn tabular_model(&self) -> Option<&TabularModel> {
        Some(&self.model)
    }
}
