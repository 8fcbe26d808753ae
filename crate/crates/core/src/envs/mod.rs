//! Desk-scale environments.

mod bandit;
mod gridworld;
mod point;

pub use bandit::Bandit;
pub use gridworld::{make_gridworld, Cell, Gridworld, GridworldSpec};
pub use point::{circle_reward_cost, make_point_env, run_reward_cost, PointEnv, PointEnvConfig, PointTask};
