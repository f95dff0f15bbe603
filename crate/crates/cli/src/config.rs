//! Run configuration: one JSON document with a section per module.
//!
//! Sections left out take the task defaults. Grid, dynamics, solver and target fall back to
//! values derived from the environment section when absent.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hjarl_core::adversary::uniform_levels;
use hjarl_core::dynamics::{NominalModel, Quad6Nominal, Sig1v0};
use hjarl_core::envs::{QuadConfig, ReachAvoidConfig};
use hjarl_core::eval::{lattice, QuadEvalMode};
use hjarl_core::hjsolver::{Horizon, SolveConfig, TargetSet};
use hjarl_core::rl::TrainConfig;
use hjarl_core::{Axis, Grid};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum EnvSection {
    ReachAvoid(ReachAvoidConfig),
    Quadrotor(QuadConfig),
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection::ReachAvoid(ReachAvoidConfig::default())
    }
}

impl EnvSection {
    pub fn task(&self) -> &'static str {
        match self {
            EnvSection::ReachAvoid(_) => "reach_avoid",
            EnvSection::Quadrotor(_) => "quadrotor",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferSection {
    /// Explicit, strictly increasing disturbance bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    /// Number of uniformly spaced levels from 0 to `max_bound`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSet>,
    /// Points per axis of the attacker-only reach value (reach-avoid only). Its solve uses the
    /// solver section with a finite horizon of `fallback_horizon`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_horizon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub spacing: f64,
    pub defender_inits: Vec<[f64; 2]>,
    /// Buffer level of the HJ attacker and BRT slice; the strongest when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub modes: Vec<QuadEvalMode>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            spacing: 0.05,
            defender_inits: vec![[0.5, 0.0], [-0.5, -0.5]],
            level: None,
            episodes: 10,
            seeds: vec![0, 1, 2],
            modes: vec![
                QuadEvalMode::RandomHj,
                QuadEvalMode::Random,
                QuadEvalMode::Constant,
                QuadEvalMode::None,
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenderSource {
    #[default]
    Checkpoint,
    Hj,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub host: String,
    pub port: u16,
    pub defender: DefenderSource,
    pub tick_hz: f64,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8765,
            defender: DefenderSource::Checkpoint,
            tick_hz: 20.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Axis>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<NominalModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolveConfig>,
    pub buffer: BufferSection,
    pub trainer: TrainConfig,
    pub eval: EvalSection,
    pub serve: ServeSection,
}

/// The attacker-only reach problem solved next to the reach-avoid game.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FallbackProblem {
    pub grid: Grid,
    pub model: NominalModel,
    pub target: TargetSet,
    pub solver: SolveConfig,
}

/// Everything that determines the solved value functions. Its hash ties buffers to configs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Problem {
    pub grid: Grid,
    pub model: NominalModel,
    pub levels: Vec<f64>,
    pub target: TargetSet,
    pub solver: SolveConfig,
    pub fallback: Option<FallbackProblem>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_of<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config types serialize"))
}

impl RunConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config types serialize")
    }

    pub fn config_hash(&self) -> String {
        hash_of(self)
    }

    pub fn env_hash(&self) -> String {
        hash_of(&self.env)
    }

    pub fn problem_hash(&self) -> Result<String> {
        Ok(hash_of(&self.problem()?))
    }

    pub fn validate(&self) -> Result<()> {
        match &self.env {
            EnvSection::ReachAvoid(c) => c.validate()?,
            EnvSection::Quadrotor(c) => c.validate()?,
        }
        self.trainer.validate()?;
        self.problem()?;
        self.validate_eval()?;
        if !(self.serve.tick_hz > 0.0 && self.serve.tick_hz.is_finite()) {
            return Err(CliError::config("serve.tick_hz must be positive"));
        }
        Ok(())
    }

    fn validate_eval(&self) -> Result<()> {
        let e = &self.eval;
        if e.episodes == 0 || e.seeds.is_empty() || e.modes.is_empty() {
            return Err(CliError::config("eval needs episodes, seeds and modes"));
        }
        if let EnvSection::ReachAvoid(c) = &self.env {
            lattice(c.arena_half_width, e.spacing)?;
            let a = c.arena_half_width;
            if e.defender_inits.is_empty() {
                return Err(CliError::config("eval.defender_inits is empty"));
            }
            if e.defender_inits.iter().flatten().any(|x| !(x.abs() <= a)) {
                return Err(CliError::config("eval.defender_inits must lie inside the arena"));
            }
        }
        Ok(())
    }

    /// Resolves the HJ problem from the explicit sections and the task defaults.
    pub fn problem(&self) -> Result<Problem> {
        let problem = match &self.env {
            EnvSection::ReachAvoid(c) => self.reach_avoid_problem(c)?,
            EnvSection::Quadrotor(c) => self.quad_problem(c)?,
        };
        problem.solver.validate()?;
        if let Some(f) = &problem.fallback {
            f.solver.validate()?;
        }
        let state_dim = problem.model.as_hj().state_dim();
        if problem.grid.dim() != state_dim {
            return Err(CliError::config(format!(
                "grid has {} axes but model {} has {state_dim} states",
                problem.grid.dim(),
                problem.model.model_id()
            )));
        }
        for &b in &problem.levels {
            problem.model.with_disturbance_bound(b)?;
        }
        // Checks the target against a 3-point stand-in of the grid, which is cheap at any size.
        let probe: Vec<Axis> = problem.grid.axes().iter().map(|a| Axis { points: 3, ..a.clone() }).collect();
        hjarl_core::hjsolver::level_set_target(&Grid::new(probe)?, &problem.target)?;
        Ok(problem)
    }

    fn grid_or(&self, default: impl FnOnce() -> Vec<Axis>) -> Result<Grid> {
        Ok(Grid::new(self.grid.clone().unwrap_or_else(default))?)
    }

    fn levels(&self, default_count: usize, default_max: f64) -> Result<Vec<f64>> {
        let b = &self.buffer;
        match &b.levels {
            Some(levels) => {
                if b.count.is_some() || b.max_bound.is_some() {
                    return Err(CliError::config("buffer.levels excludes buffer.count and buffer.max_bound"));
                }
                if levels.is_empty() || levels.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(CliError::config("buffer.levels must be non-empty and strictly increasing"));
                }
                Ok(levels.clone())
            }
            None => Ok(uniform_levels(
                0.0,
                b.max_bound.unwrap_or(default_max),
                b.count.unwrap_or(default_count),
            )?),
        }
    }

    fn reach_avoid_problem(&self, c: &ReachAvoidConfig) -> Result<Problem> {
        let a = c.arena_half_width;
        let grid = self.grid_or(|| vec![Axis::new(-a, a, 45); 4])?;
        let model = match &self.dynamics {
            None => NominalModel::Sig1v1(c.model()),
            Some(NominalModel::Sig1v1(m)) => {
                if m.v_attacker != c.v_attacker || m.v_defender != c.v_defender {
                    return Err(CliError::config("dynamics speeds differ from the env speeds"));
                }
                NominalModel::Sig1v1(m.clone())
            }
            Some(other) => {
                return Err(CliError::config(format!(
                    "the reach-avoid task needs sig1v1 dynamics, not {}",
                    other.model_id()
                )))
            }
        };
        let target = self.buffer.target.clone().unwrap_or(TargetSet::ReachAvoid {
            target_center: c.target_center,
            target_side: c.target_side,
            capture_radius: c.capture_radius,
        });
        let solver = self.solver.clone().unwrap_or_default();
        let points = self.buffer.fallback_points.unwrap_or(101);
        let horizon = self.buffer.fallback_horizon.unwrap_or(0.05);
        let fallback = FallbackProblem {
            grid: Grid::uniform(2, -a, a, points)?,
            model: NominalModel::Sig1v0(Sig1v0::new(c.v_attacker)),
            target: TargetSet::Box {
                axes: vec![0, 1],
                center: c.target_center.to_vec(),
                half_widths: vec![0.5 * c.target_side; 2],
            },
            solver: SolveConfig {
                horizon: Horizon::Finite(horizon),
                ..solver.clone()
            },
        };
        Ok(Problem {
            grid,
            model,
            levels: self.levels(1, 1.0)?,
            target,
            solver,
            fallback: Some(fallback),
        })
    }

    fn quad_problem(&self, c: &QuadConfig) -> Result<Problem> {
        if self.buffer.fallback_points.is_some() || self.buffer.fallback_horizon.is_some() {
            return Err(CliError::config("fallback settings only apply to the reach-avoid task"));
        }
        let grid = self.grid_or(|| {
            let angle = Axis::new(-1.2, 1.2, 11);
            let rate = Axis::new(-5.0, 5.0, 11);
            vec![
                angle.clone(),
                angle,
                Axis::periodic(-std::f64::consts::PI, std::f64::consts::PI, 3),
                rate.clone(),
                rate.clone(),
                rate,
            ]
        })?;
        let model = match &self.dynamics {
            None => NominalModel::Quad6(Quad6Nominal {
                inertia: c.params.inertia,
                torque_bound: [c.params.torque_bound; 3],
                ..Quad6Nominal::default()
            }),
            Some(m @ NominalModel::Quad6(_)) => m.clone(),
            Some(other) => {
                return Err(CliError::config(format!(
                    "the quadrotor task needs quad6 dynamics, not {}",
                    other.model_id()
                )))
            }
        };
        let target = self.buffer.target.clone().unwrap_or(TargetSet::MaxNorm {
            axes: vec![0, 1, 3, 4, 5],
            center: vec![0.0; 5],
            half_widths: vec![0.2, 0.2, 0.5, 0.5, 0.5],
        });
        Ok(Problem {
            grid,
            model,
            levels: self.levels(21, 2.0 * c.params.torque_bound)?,
            target,
            solver: self.solver.clone().unwrap_or_else(|| SolveConfig::finite(0.5)),
            fallback: None,
        })
    }
}
