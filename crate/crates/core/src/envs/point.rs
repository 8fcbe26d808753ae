//! Point-mass Run and Circle tasks on double-integrator dynamics.
//!
//! State is `(p_x, p_y, v_x, v_y)`, the action is a planar force. Each step
//! applies `v' = v + a·action_scale·dt + noise` and `p' = p + v'·dt`, then
//! scores the transition with the task's reward and cost.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cmdp::{check_gamma, Action, Cmdp, SimRng, Space, State, Transition};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointTask {
    Run,
    Circle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointEnvConfig {
    /// Fictitious target `g` of the Run task.
    pub goal: [f64; 2],
    pub y_lim: f64,
    pub v_lim: f64,
    /// Radius `o` of the Circle task's target circle.
    pub circle_radius: f64,
    pub x_lim: f64,
    pub dt: f64,
    pub action_scale: f64,
    pub noise_std: f64,
    pub gamma: f64,
    /// Initial positions are uniform on `[-init_spread, init_spread]²`.
    pub init_spread: f64,
}

impl Default for PointEnvConfig {
    fn default() -> Self {
        Self {
            goal: [10.0, 0.0],
            y_lim: 1.0,
            v_lim: 1.0,
            circle_radius: 1.0,
            x_lim: 0.6,
            dt: 0.1,
            action_scale: 1.0,
            noise_std: 0.05,
            gamma: 0.99,
            init_spread: 0.1,
        }
    }
}

impl PointEnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("y_lim", self.y_lim),
            ("v_lim", self.v_lim),
            ("circle_radius", self.circle_radius),
            ("x_lim", self.x_lim),
            ("dt", self.dt),
            ("action_scale", self.action_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dt > 1.0 {
            return Err(Error::InvalidConfig(format!("dt must lie in (0, 1], got {}", self.dt)));
        }
        if !(self.noise_std >= 0.0) || !(self.init_spread >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise_std and init_spread must be nonnegative".into(),
            ));
        }
        if self.goal.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidConfig("goal must be finite".into()));
        }
        check_gamma(self.gamma).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

fn norm(x: [f64; 2]) -> f64 {
    x[0].hypot(x[1])
}

/// Run task: progress toward `g` and the band/speed indicator costs.
pub fn run_reward_cost(p_prev: [f64; 2], p: [f64; 2], v: [f64; 2], cfg: &PointEnvConfig) -> (f64, f64) {
    let g = cfg.goal;
    let reward = norm([p_prev[0] - g[0], p_prev[1] - g[1]]) - norm([p[0] - g[0], p[1] - g[1]]);
    let band = if p[1].abs() > cfg.y_lim { 1.0 } else { 0.0 };
    let speed = if norm(v) > cfg.v_lim { 1.0 } else { 0.0 };
    (reward, band + speed)
}

/// Circle task: angular progress weighted toward the target radius, and the
/// `|p_x| > x_lim` indicator cost.
pub fn circle_reward_cost(p: [f64; 2], v: [f64; 2], cfg: &PointEnvConfig) -> (f64, f64) {
    let reward = (-p[1] * v[0] + p[0] * v[1]) / (1.0 + (norm(p) - cfg.circle_radius).abs());
    let cost = if p[0].abs() > cfg.x_lim { 1.0 } else { 0.0 };
    (reward, cost)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEnv {
    task: PointTask,
    cfg: PointEnvConfig,
}

pub fn make_point_env(task: PointTask, cfg: PointEnvConfig) -> Result<PointEnv> {
    cfg.validate()?;
    Ok(PointEnv { task, cfg })
}

impl PointEnv {
    pub fn task(&self) -> PointTask {
        self.task
    }

    pub fn config(&self) -> &PointEnvConfig {
        &self.cfg
    }
}

impl Cmdp for PointEnv {
    fn space(&self) -> Space {
        Space::Continuous {
            state_dim: 4,
            action_dim: 2,
        }
    }

    fn num_costs(&self) -> usize {
        1
    }

    fn gamma(&self) -> f64 {
        self.cfg.gamma
    }

    fn cost_bound(&self) -> f64 {
        match self.task {
            PointTask::Run => 2.0,
            PointTask::Circle => 1.0,
        }
    }

    fn initial_state(&self, rng: &mut SimRng) -> State {
        let spread = self.cfg.init_spread;
        let (px, py) = if spread > 0.0 {
            (
                rng.random_range(-spread..=spread),
                rng.random_range(-spread..=spread),
            )
        } else {
            (0.0, 0.0)
        };
        State::Vector(vec![px, py, 0.0, 0.0])
    }

    fn step(&self, state: &State, action: &Action, rng: &mut SimRng) -> Transition {
        let s = state.vector().expect("point env states are vectors");
        let a = action.vector().expect("point env actions are vectors");
        let cfg = &self.cfg;
        let p_prev = [s[0], s[1]];
        let mut v = [s[2], s[3]];
        for i in 0..2 {
            v[i] += a[i] * cfg.action_scale * cfg.dt;
            if cfg.noise_std > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v[i] += cfg.noise_std * z;
            }
        }
        let p = [p_prev[0] + v[0] * cfg.dt, p_prev[1] + v[1] * cfg.dt];
        let (reward, cost) = match self.task {
            PointTask::Run => run_reward_cost(p_prev, p, v, cfg),
            PointTask::Circle => circle_reward_cost(p, v, cfg),
        };
        Transition {
            next_state: State::Vector(vec![p[0], p[1], v[0], v[1]]),
            reward,
            costs: vec![cost],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::{rollout, sample_trajectory, trajectory_rng};
    use crate::policy::{PolicyKind, PolicyParams};
    use proptest::prelude::*;

    fn quiet() -> PointEnvConfig {
        PointEnvConfig {
            noise_std: 0.0,
            init_spread: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn run_collinear_progress() {
        let cfg = quiet();
        let (r, c) = run_reward_cost([0.0, 0.0], [1.0, 0.0], [0.1, 0.0], &cfg);
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(c, 0.0);
        let (r, _) = run_reward_cost([0.3, 0.4], [0.3, 0.4], [0.0, 0.0], &cfg);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn run_both_indicators() {
        let cfg = quiet();
        let (_, c) = run_reward_cost(
            [0.0, 0.0],
            [0.0, 2.0 * cfg.y_lim],
            [2.0 * cfg.v_lim, 0.0],
            &cfg,
        );
        assert_eq!(c, 2.0);
    }

    #[test]
    fn circle_tangential_motion() {
        let cfg = PointEnvConfig {
            circle_radius: 2.0,
            x_lim: 1.0,
            ..quiet()
        };
        let (r, c) = circle_reward_cost([2.0, 0.0], [0.0, 1.0], &cfg);
        assert!((r - 2.0).abs() < 1e-12);
        assert_eq!(c, 1.0);
        let inside = PointEnvConfig { x_lim: 3.0, ..cfg.clone() };
        assert_eq!(circle_reward_cost([2.0, 0.0], [0.0, 1.0], &inside).1, 0.0);
        assert_eq!(circle_reward_cost([0.0, 0.0], [0.0, 0.0], &cfg).0, 0.0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        for bad in [
            PointEnvConfig { y_lim: 0.0, ..quiet() },
            PointEnvConfig { dt: 1.5, ..quiet() },
            PointEnvConfig { noise_std: -1.0, ..quiet() },
            PointEnvConfig { gamma: 1.0, ..quiet() },
        ] {
            assert!(make_point_env(PointTask::Run, bad).is_err());
        }
    }

    #[test]
    fn zero_action_is_a_fixed_point() {
        let env = make_point_env(PointTask::Run, quiet()).unwrap();
        let mut state = State::Vector(vec![0.5, -0.2, 0.0, 0.0]);
        let mut rng = trajectory_rng(0, 0);
        for _ in 0..50 {
            let tr = env.step(&state, &Action::Vector(vec![0.0, 0.0]), &mut rng);
            assert_eq!(tr.next_state, state);
            assert_eq!(tr.reward, 0.0);
            state = tr.next_state;
        }
    }

    #[test]
    fn pushing_toward_goal_earns_reward() {
        let env = make_point_env(PointTask::Run, quiet()).unwrap();
        let mut state = env.initial_state(&mut trajectory_rng(0, 0));
        let mut rng = trajectory_rng(0, 1);
        for _ in 0..10 {
            let tr = env.step(&state, &Action::Vector(vec![1.0, 0.0]), &mut rng);
            assert!(tr.reward > 0.0);
            state = tr.next_state;
        }
    }

    #[test]
    fn rollouts_are_deterministic_per_seed() {
        for task in [PointTask::Run, PointTask::Circle] {
            let env = make_point_env(task, PointEnvConfig::default()).unwrap();
            let p = PolicyParams::zeros(PolicyKind::for_space(env.space()));
            let a = sample_trajectory(&env, &p, 40, 9).unwrap();
            let b = sample_trajectory(&env, &p, 40, 9).unwrap();
            assert_eq!(a, b);
            let c = rollout(&env, &p, 40, &mut trajectory_rng(9, 0)).unwrap();
            assert_eq!(a, c);
        }
    }

    proptest! {
        #[test]
        fn costs_are_indicators(
            p in prop::array::uniform2(-5.0f64..5.0),
            q in prop::array::uniform2(-5.0f64..5.0),
            v in prop::array::uniform2(-3.0f64..3.0),
        ) {
            let cfg = quiet();
            let (_, c) = run_reward_cost(p, q, v, &cfg);
            prop_assert!(c == 0.0 || c == 1.0 || c == 2.0);
            let (_, c) = circle_reward_cost(p, v, &cfg);
            prop_assert!(c == 0.0 || c == 1.0);
        }

        #[test]
        fn circle_reward_symmetries(
            p in prop::array::uniform2(-5.0f64..5.0),
            v in prop::array::uniform2(-3.0f64..3.0),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let cfg = quiet();
            let (r, c) = circle_reward_cost(p, v, &cfg);
            let (rn, cn) = circle_reward_cost(p, [-v[0], -v[1]], &cfg);
            prop_assert!((r + rn).abs() < 1e-12);
            prop_assert_eq!(c, cn);
            let (s, co) = angle.sin_cos();
            let rot = |x: [f64; 2]| [co * x[0] - s * x[1], s * x[0] + co * x[1]];
            let (rr, _) = circle_reward_cost(rot(p), rot(v), &cfg);
            prop_assert!((r - rr).abs() < 1e-9 * (1.0 + r.abs()));
        }
    }
}
