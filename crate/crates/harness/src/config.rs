//! Experiment configuration files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! schema_version = 1
//! task = "gridworld"            # testbed | gridworld | point-run | point-circle
//! algorithm = "papd-reinforce"  # apd | papd-reinforce | papd-ppol
//! seeds = [0, 1, 2, 3, 4]
//! iterations = 8000
//! cost_limit = 10.0             # CMDP tasks only; the testbed threshold is testbed.d
//! output_dir = "runs/gridworld"
//!
//! [schedule]
//! kind = "invlin-practical"     # constant | invlin-exact | invqua-exact | invlin-practical | invqua-practical
//! h1 = 0.001
//! h2 = 3.0
//!
//! [dual]
//! kind = "pid"                  # pid (sampled tasks) | ascent (testbed)
//!
//! [sampling]
//! n_traj = 16
//! horizon = 50
//! ```
//!
//! Optional top-level keys: `workers`, `final_window` (default 0.2), `lambda0`,
//! `theta0`, `inner_steps`, `fresh_cost_batch`. Optional tables: `[ppol]`,
//! `[testbed]`, `[gridworld]`, `[point]`. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use apd_core::cmdp::{Cmdp, SamplingConfig};
use apd_core::dual::PidGains;
use apd_core::envs::{make_gridworld, make_point_env, GridworldSpec, PointEnvConfig, PointTask};
use apd_core::lagrangian::{ConstraintSpec, Multiplier, PpolConfig};
use apd_core::schedule::{LrSchedule, SmoothnessConstants};
use apd_core::solver::{DualVariant, PrimalEstimator, SolverConfig};
use apd_core::testbed::{ConstrainedProgram, QuadProgram, QuadSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative output directories resolve against this variable when set.
pub const OUTPUT_ROOT_ENV: &str = "APD_OUTPUT_ROOT";

const DEFAULT_COST_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Testbed,
    Gridworld,
    PointRun,
    PointCircle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Apd,
    PapdReinforce,
    PapdPpol,
}

fn default_h1_lin() -> f64 {
    0.001
}
fn default_h2_lin() -> f64 {
    3.0
}
fn default_h1_qua() -> f64 {
    0.015
}
fn default_h2_qua() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant {
        lr: f64,
    },
    /// Constants default to the ones the testbed derives from its matrices.
    InvlinExact {
        #[serde(default)]
        constants: Option<SmoothnessConstants>,
    },
    InvquaExact {
        #[serde(default)]
        constants: Option<SmoothnessConstants>,
    },
    InvlinPractical {
        #[serde(default = "default_h1_lin")]
        h1: f64,
        #[serde(default = "default_h2_lin")]
        h2: f64,
    },
    InvquaPractical {
        #[serde(default = "default_h1_qua")]
        h1: f64,
        #[serde(default = "default_h2_qua")]
        h2: f64,
    },
}

impl ScheduleConfig {
    pub fn build(&self, problem: Option<&SmoothnessConstants>) -> Result<LrSchedule> {
        let exact = |c: &Option<SmoothnessConstants>| -> Result<SmoothnessConstants> {
            c.clone().or_else(|| problem.cloned()).ok_or_else(|| {
                HarnessError::Config("exact schedules need [schedule.constants] for this task".into())
            })
        };
        let sched = match self {
            ScheduleConfig::Constant { lr } => LrSchedule::Constant { lr: *lr },
            ScheduleConfig::InvlinExact { constants } => LrSchedule::InvlinExact {
                constants: exact(constants)?,
            },
            ScheduleConfig::InvquaExact { constants } => LrSchedule::InvquaExact {
                constants: exact(constants)?,
            },
            ScheduleConfig::InvlinPractical { h1, h2 } => LrSchedule::InvlinPractical { h1: *h1, h2: *h2 },
            ScheduleConfig::InvquaPractical { h1, h2 } => LrSchedule::InvquaPractical { h1: *h1, h2: *h2 },
        };
        sched.validate()?;
        Ok(sched)
    }

    /// Copy with one hyper-parameter multiplied by `factor`.
    pub fn scaled(&self, param: SweepParam, factor: f64) -> Result<Self> {
        let mut out = self.clone();
        let slot = match (&mut out, param) {
            (ScheduleConfig::Constant { lr }, SweepParam::Lr) => lr,
            (ScheduleConfig::InvlinPractical { h1, .. }, SweepParam::H1)
            | (ScheduleConfig::InvquaPractical { h1, .. }, SweepParam::H1) => h1,
            (ScheduleConfig::InvlinPractical { h2, .. }, SweepParam::H2)
            | (ScheduleConfig::InvquaPractical { h2, .. }, SweepParam::H2) => h2,
            _ => {
                return Err(HarnessError::Config(format!(
                    "schedule {self:?} has no parameter {}",
                    param.name()
                )))
            }
        };
        *slot *= factor;
        Ok(out)
    }

    pub fn value(&self, param: SweepParam) -> Option<f64> {
        match (self, param) {
            (ScheduleConfig::Constant { lr }, SweepParam::Lr) => Some(*lr),
            (ScheduleConfig::InvlinPractical { h1, .. }, SweepParam::H1)
            | (ScheduleConfig::InvquaPractical { h1, .. }, SweepParam::H1) => Some(*h1),
            (ScheduleConfig::InvlinPractical { h2, .. }, SweepParam::H2)
            | (ScheduleConfig::InvquaPractical { h2, .. }, SweepParam::H2) => Some(*h2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Lr,
    H1,
    H2,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Lr => "lr",
            SweepParam::H1 => "h1",
            SweepParam::H2 => "h2",
        }
    }
}

fn default_kp() -> f64 {
    PidGains::default().kp
}
fn default_ki() -> f64 {
    PidGains::default().ki
}
fn default_kd() -> f64 {
    PidGains::default().kd
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DualConfig {
    Ascent {
        zeta: f64,
    },
    Pid {
        #[serde(default = "default_kp")]
        kp: f64,
        #[serde(default = "default_ki")]
        ki: f64,
        #[serde(default = "default_kd")]
        kd: f64,
    },
}

impl DualConfig {
    fn variant(&self) -> DualVariant {
        match *self {
            DualConfig::Ascent { zeta } => DualVariant::Ascent { zeta },
            DualConfig::Pid { kp, ki, kd } => DualVariant::Pid(PidGains { kp, ki, kd }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub n_traj: usize,
    pub horizon: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            n_traj: 16,
            horizon: 50,
        }
    }
}

fn default_window() -> f64 {
    0.2
}
fn default_inner() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub task: Task,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    #[serde(default)]
    pub cost_limit: Option<f64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_window")]
    pub final_window: f64,
    #[serde(default)]
    pub lambda0: f64,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(default = "default_inner")]
    pub inner_steps: usize,
    #[serde(default)]
    pub fresh_cost_batch: bool,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub dual: Option<DualConfig>,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub ppol: PpolConfig,
    #[serde(default)]
    pub testbed: QuadSpec,
    #[serde(default)]
    pub gridworld: GridworldSpec,
    #[serde(default)]
    pub point: PointEnvConfig,
}

/// The problem a config describes.
pub enum Problem {
    Testbed(QuadProgram),
    Cmdp(Box<dyn Cmdp>, ConstraintSpec),
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_toml_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {}", path.display(), e.message())))?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.seeds.is_empty() {
            return bad("seeds: at least one seed is required".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.final_window > 0.0 && self.final_window <= 1.0) {
            return bad(format!("final_window must lie in (0, 1], got {}", self.final_window));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if !(self.lambda0 >= 0.0) {
            return bad(format!("lambda0 must be nonnegative, got {}", self.lambda0));
        }
        let sampled = self.algorithm != Algorithm::Apd;
        match (self.task, sampled) {
            (Task::Testbed, true) => return bad("the testbed task runs with algorithm = \"apd\"".into()),
            (Task::Testbed, false) if self.cost_limit.is_some() => {
                return bad("cost_limit applies to CMDP tasks; set testbed.d instead".into())
            }
            (t, false) if t != Task::Testbed => {
                return bad(format!("{t:?} is a sampled task; use papd-reinforce or papd-ppol"))
            }
            _ => {}
        }
        match (&self.dual, sampled) {
            (Some(DualConfig::Ascent { .. }), true) => return bad("sampled runs use dual.kind = \"pid\"".into()),
            (Some(DualConfig::Pid { .. }), false) => return bad("the testbed uses dual.kind = \"ascent\"".into()),
            _ => {}
        }
        if let Some(limit) = self.cost_limit {
            if !limit.is_finite() {
                return bad("cost_limit must be finite".into());
            }
        }
        if sampled && (self.sampling.n_traj == 0 || self.sampling.horizon == 0) {
            return bad("sampling.n_traj and sampling.horizon must be positive".into());
        }
        self.ppol.validate()?;
        Ok(())
    }

    pub fn is_sampled(&self) -> bool {
        self.algorithm != Algorithm::Apd
    }

    pub fn problem(&self) -> Result<Problem> {
        let d = self.cost_limit.unwrap_or(DEFAULT_COST_LIMIT);
        let spec = ConstraintSpec::new(vec![d]);
        Ok(match self.task {
            Task::Testbed => Problem::Testbed(self.testbed.build()?),
            Task::Gridworld => Problem::Cmdp(Box::new(make_gridworld(self.gridworld.clone())?), spec),
            Task::PointRun => Problem::Cmdp(Box::new(make_point_env(PointTask::Run, self.point.clone())?), spec),
            Task::PointCircle => {
                Problem::Cmdp(Box::new(make_point_env(PointTask::Circle, self.point.clone())?), spec)
            }
        })
    }

    /// Dual rate of a testbed run.
    pub fn zeta(&self) -> f64 {
        match self.dual_config() {
            DualConfig::Ascent { zeta } => zeta,
            DualConfig::Pid { .. } => f64::NAN,
        }
    }

    fn dual_config(&self) -> DualConfig {
        self.dual.clone().unwrap_or(if self.is_sampled() {
            DualConfig::Pid {
                kp: default_kp(),
                ki: default_ki(),
                kd: default_kd(),
            }
        } else {
            DualConfig::Ascent { zeta: 0.05 }
        })
    }

    pub fn solver_config(&self, problem: &Problem, seed: u64) -> Result<SolverConfig> {
        let constants = match problem {
            Problem::Testbed(p) => Some(p.constants()),
            Problem::Cmdp(..) => None,
        };
        let schedule = self.schedule.build(constants.as_ref())?;
        let mut cfg = SolverConfig::new(self.iterations, schedule, self.dual_config().variant());
        cfg.lambda0 = Multiplier::new(vec![self.lambda0])?;
        cfg.theta0 = self.theta0.clone();
        cfg.inner_steps = self.inner_steps;
        cfg.sampling = SamplingConfig {
            n_traj: self.sampling.n_traj,
            horizon: self.sampling.horizon,
        };
        cfg.estimator = match self.algorithm {
            Algorithm::PapdPpol => PrimalEstimator::Ppol(self.ppol.clone()),
            _ => PrimalEstimator::Reinforce,
        };
        cfg.fresh_cost_batch = self.fresh_cost_batch;
        cfg.seed = seed;
        Ok(cfg)
    }

    /// Output directory after applying [`OUTPUT_ROOT_ENV`].
    pub fn resolved_output_dir(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => self.output_dir.clone(),
        }
    }
}
