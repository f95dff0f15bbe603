//! Training environments: the one-vs-one reach-avoid game and quadrotor stabilisation.

mod quadrotor;
mod reach_avoid;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use quadrotor::{DisturbanceAxes, QuadConfig, QuadEnv, ResetSpread};
pub use reach_avoid::{segment_min_distance, ReachAvoidConfig, ReachAvoidEnv, ReachAvoidHj};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Running,
    Capture,
    Reached,
    Crash,
    Timeout,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Capture => "capture",
            Outcome::Reached => "reached",
            Outcome::Crash => "crash",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo {
    /// The opponent input actually applied, in physical units.
    pub disturbance: Vec<f64>,
    /// Buffer level of an HJ opponent, 0-based.
    pub level: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// The protagonist's action after clipping.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub outcome: Outcome,
    pub info: StepInfo,
}

impl Transition {
    pub fn terminal(&self) -> bool {
        self.outcome.is_terminal()
    }
}

/// What drives the other side of the game for one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Opponent<'a> {
    /// No opponent input (zero control or zero disturbance).
    Passive,
    /// The HJ adversary of the given buffer level.
    Hj { level: usize },
    /// A learned adversary's raw action in `[-1, 1]ᵏ`, scaled by the environment.
    Learned(&'a [f64]),
    /// An opponent input given directly in physical units.
    Direct(&'a [f64]),
}

/// Affine observation normalisation `(s − offset) ⊙ scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(&self.offset)
            .zip(&self.scale)
            .map(|((x, o), k)| (x - o) * k)
            .collect()
    }
}

/// The interface the trainers and evaluators drive.
pub trait Env {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn adversary_dim(&self) -> usize;
    /// Number of HJ adversary levels available (0 when none is attached).
    fn hj_levels(&self) -> usize;
    fn normalization(&self) -> Normalization;
    fn state(&self) -> &[f64];
    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<()>;
    fn step(&mut self, action: &[f64], opponent: Opponent<'_>, rng: &mut dyn RngCore) -> Result<Transition>;
}

pub(crate) fn clip_unit_ball(v: &[f64]) -> Vec<f64> {
    let n = crate::dynamics::norm(v);
    if n > 1.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}
