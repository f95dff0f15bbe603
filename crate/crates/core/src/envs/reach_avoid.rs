use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{clip_unit_ball, Env, Normalization, Opponent, Outcome, StepInfo, Transition};
use crate::adversary::{hj_attacker_policy, ValueBuffer, EPSILON_GRAD};
use crate::dynamics::{integrate_rk4, Sig1v1};
use crate::error::{Error, Result};
use crate::hjsolver::SolveResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachAvoidConfig {
    /// The arena is `[-a, a]²`.
    pub arena_half_width: f64,
    pub target_center: [f64; 2],
    pub target_side: f64,
    pub capture_radius: f64,
    pub dt: f64,
    pub max_steps: usize,
    pub v_attacker: f64,
    pub v_defender: f64,
    pub capture_bonus: f64,
    pub reach_penalty: f64,
}

impl Default for ReachAvoidConfig {
    fn default() -> Self {
        Self {
            arena_half_width: 1.0,
            target_center: [0.7, 0.7],
            target_side: 0.2,
            capture_radius: 0.1,
            dt: 0.05,
            max_steps: 200,
            v_attacker: 1.0,
            v_defender: 1.5,
            capture_bonus: 200.0,
            reach_penalty: 200.0,
        }
    }
}

impl ReachAvoidConfig {
    pub fn validate(&self) -> Result<()> {
        let a = self.arena_half_width;
        let h = 0.5 * self.target_side;
        let checks = [
            (a > 0.0, "arena_half_width must be positive"),
            (self.capture_radius > 0.0, "capture_radius must be positive"),
            (self.target_side > 0.0, "target_side must be positive"),
            (self.dt > 0.0, "dt must be positive"),
            (self.max_steps > 0, "max_steps must be positive"),
            (self.v_attacker > 0.0 && self.v_defender > 0.0, "speeds must be positive"),
            (
                self.target_center.iter().all(|c| c.abs() + h <= a),
                "the destination must lie inside the arena",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Sig1v1 {
        Sig1v1::new(self.v_attacker, self.v_defender)
    }

    pub fn in_target(&self, attacker: &[f64]) -> bool {
        let h = 0.5 * self.target_side;
        (attacker[0] - self.target_center[0]).abs() <= h
            && (attacker[1] - self.target_center[1]).abs() <= h
    }

    pub fn captured(&self, state: &[f64]) -> bool {
        (state[0] - state[2]).hypot(state[1] - state[3]) <= self.capture_radius
    }

    /// Captured or already at the destination.
    pub fn is_terminal_state(&self, state: &[f64]) -> bool {
        self.captured(state) || self.in_target(&state[..2])
    }
}

/// HJ resources for the attacker: a buffer of joint game values and the attacker-only
/// reach value used where the joint gradient is flat.
#[derive(Clone, Debug)]
pub struct ReachAvoidHj {
    pub buffer: ValueBuffer,
    pub fallback: SolveResult,
    pub epsilon: f64,
}

impl ReachAvoidHj {
    pub fn new(buffer: ValueBuffer, fallback: SolveResult) -> Self {
        Self {
            buffer,
            fallback,
            epsilon: EPSILON_GRAD,
        }
    }

    pub fn attacker_control(&self, level: usize, state: &[f64]) -> Result<Vec<f64>> {
        let game = &self.buffer.entry(level)?.result;
        Ok(hj_attacker_policy(game, &self.fallback, state, self.epsilon)?.action)
    }
}

/// Minimum of `‖a + t (b − a)‖` over `t ∈ [0, 1]`.
pub fn segment_min_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (-(a[0] * d[0] + a[1] * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a[0] + t * d[0]).hypot(a[1] + t * d[1])
}

/// The defender's MDP. The state is `(x_A, y_A, x_D, y_D)`; the protagonist's action is the
/// defender's heading input and the opponent is the attacker.
#[derive(Clone, Debug)]
pub struct ReachAvoidEnv {
    config: ReachAvoidConfig,
    model: Sig1v1,
    hj: Option<Arc<ReachAvoidHj>>,
    state: Vec<f64>,
    steps: usize,
}

impl ReachAvoidEnv {
    pub fn new(config: ReachAvoidConfig, hj: Option<Arc<ReachAvoidHj>>) -> Result<Self> {
        config.validate()?;
        let model = config.model();
        let a = config.arena_half_width;
        let mut env = Self {
            config,
            model,
            hj,
            state: vec![0.0; 4],
            steps: 0,
        };
        env.state = vec![-a, -a, a, a];
        Ok(env)
    }

    pub fn config(&self) -> &ReachAvoidConfig {
        &self.config
    }

    pub fn hj(&self) -> Option<&Arc<ReachAvoidHj>> {
        self.hj.as_ref()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Starts an episode from explicit positions.
    pub fn reset_to(&mut self, attacker: [f64; 2], defender: [f64; 2]) -> Result<()> {
        let a = self.config.arena_half_width;
        let state = vec![attacker[0], attacker[1], defender[0], defender[1]];
        if state.iter().any(|x| !x.is_finite() || x.abs() > a) {
            return Err(Error::Config(format!("initial positions {state:?} outside the arena")));
        }
        if self.config.is_terminal_state(&state) {
            return Err(Error::Config(format!("initial positions {state:?} are already terminal")));
        }
        self.state = state;
        self.steps = 0;
        Ok(())
    }

    /// Opponent input for the attacker, clipped to the unit ball.
    fn attacker_input(&self, opponent: Opponent<'_>) -> Result<(Vec<f64>, Option<usize>)> {
        match opponent {
            Opponent::Passive => Ok((vec![0.0, 0.0], None)),
            Opponent::Hj { level } => {
                let hj = self
                    .hj
                    .as_ref()
                    .ok_or_else(|| Error::Config("no HJ attacker attached".into()))?;
                Ok((clip_unit_ball(&hj.attacker_control(level, &self.state)?), Some(level)))
            }
            Opponent::Learned(a) | Opponent::Direct(a) => {
                if a.len() != 2 {
                    return Err(Error::Shape(format!("attacker input has {} entries", a.len())));
                }
                Ok((clip_unit_ball(a), None))
            }
        }
    }

    /// Advances both players by one step with explicit inputs.
    pub fn step_with(&mut self, defender: &[f64], attacker: &[f64]) -> Result<Transition> {
        self.advance(defender, attacker.to_vec(), None)
    }

    fn advance(&mut self, defender: &[f64], attacker: Vec<f64>, level: Option<usize>) -> Result<Transition> {
        if defender.len() != 2 {
            return Err(Error::Shape(format!("defender action has {} entries", defender.len())));
        }
        let cfg = &self.config;
        let d = clip_unit_ball(defender);
        let u = clip_unit_ball(&attacker);
        let raw = integrate_rk4(&self.model, &self.state, &u, &d, cfg.dt)?;
        let a = cfg.arena_half_width;
        let next: Vec<f64> = raw.iter().map(|x| x.clamp(-a, a)).collect();

        let before = [self.state[0] - self.state[2], self.state[1] - self.state[3]];
        let after = [next[0] - next[2], next[1] - next[3]];
        let captured = segment_min_distance(before, after) <= cfg.capture_radius;
        let reached = !captured && cfg.in_target(&next[..2]);
        self.steps += 1;

        let outcome = if captured {
            Outcome::Capture
        } else if reached {
            Outcome::Reached
        } else if self.steps >= cfg.max_steps {
            Outcome::Timeout
        } else {
            Outcome::Running
        };
        let mut reward = -after[0].hypot(after[1]);
        if captured {
            reward += cfg.capture_bonus;
        }
        if reached {
            reward -= cfg.reach_penalty;
        }
        let state = std::mem::replace(&mut self.state, next);
        Ok(Transition {
            state,
            action: d,
            reward,
            next_state: self.state.clone(),
            outcome,
            info: StepInfo {
                disturbance: u,
                level,
            },
        })
    }
}

impl Env for ReachAvoidEnv {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn adversary_dim(&self) -> usize {
        2
    }

    fn hj_levels(&self) -> usize {
        self.hj.as_ref().map_or(0, |h| h.buffer.len())
    }

    fn normalization(&self) -> Normalization {
        Normalization {
            offset: vec![0.0; 4],
            scale: vec![1.0 / self.config.arena_half_width; 4],
        }
    }

    fn state(&self) -> &[f64] {
        &self.state
    }

    /// Draws both positions uniformly over the arena, rejecting terminal configurations.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        let a = self.config.arena_half_width;
        loop {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-a..=a)).collect();
            if !self.config.is_terminal_state(&s) {
                self.state = s;
                self.steps = 0;
                return Ok(());
            }
        }
    }

    fn step(&mut self, action: &[f64], opponent: Opponent<'_>, _rng: &mut dyn RngCore) -> Result<Transition> {
        let (u, level) = self.attacker_input(opponent)?;
        self.advance(action, u, level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> ReachAvoidEnv {
        ReachAvoidEnv::new(ReachAvoidConfig::default(), None).unwrap()
    }

    #[test]
    fn override_sets_exact_state() {
        let mut e = env();
        e.reset_to([0.9, 0.9], [-0.9, -0.9]).unwrap();
        assert_eq!(e.state(), &[0.9, 0.9, -0.9, -0.9]);
        assert!(e.reset_to([0.7, 0.7], [-0.9, -0.9]).is_err());
        assert!(e.reset_to([0.0, 0.0], [0.05, 0.0]).is_err());
        assert!(e.reset_to([1.5, 0.0], [0.0, 0.0]).is_err());
    }

    #[test]
    fn resets_are_never_terminal_and_deterministic() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut first = Vec::new();
        for _ in 0..10_000 {
            e.reset(&mut rng).unwrap();
            assert!(!e.config().is_terminal_state(e.state()));
            if first.len() < 5 {
                first.push(e.state().to_vec());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for s in first {
            e.reset(&mut rng).unwrap();
            assert_eq!(e.state(), s.as_slice());
        }
    }

    #[test]
    fn capture_inside_radius() {
        let mut e = env();
        e.state = vec![0.0, 0.0, 0.08, 0.0];
        let t = e.step_with(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(t.outcome, Outcome::Capture);
        assert!((t.reward - (200.0 - 0.08)).abs() < 1e-12);
    }

    #[test]
    fn capture_checked_along_the_step() {
        let mut e = env();
        // the players pass through each other within one step
        e.reset_to([0.0, 0.0], [0.2, 0.02]).unwrap();
        let t = e.step_with(&[-1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(t.outcome, Outcome::Capture);
    }

    #[test]
    fn reaching_the_destination() {
        let mut e = env();
        e.reset_to([0.7, 0.58], [-0.9, -0.9]).unwrap();
        let t = e.step_with(&[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(t.outcome, Outcome::Reached);
        let dist = (0.7f64 + 0.9).hypot(0.63 + 0.9);
        assert!((t.reward - (-200.0 - dist)).abs() < 1e-12);
    }

    #[test]
    fn capture_wins_ties_with_reach() {
        let mut e = env();
        e.reset_to([0.7, 0.58], [0.7, 0.72]).unwrap();
        let t = e.step_with(&[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(t.outcome, Outcome::Capture);
    }

    #[test]
    fn running_reward_is_negative_distance_and_timeout() {
        let mut e = env();
        e.reset_to([-0.8, 0.0], [0.8, 0.0]).unwrap();
        let t = e.step_with(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(t.outcome, Outcome::Running);
        assert!((t.reward + 1.6).abs() < 1e-12);
        let mut last = t;
        while !last.terminal() {
            last = e.step_with(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        }
        assert_eq!(last.outcome, Outcome::Timeout);
        assert_eq!(e.steps(), 200);
    }

    #[test]
    fn positions_stay_in_the_arena_and_inputs_are_clipped() {
        let mut e = env();
        e.reset_to([0.99, -0.99], [-0.99, 0.99]).unwrap();
        let t = e.step_with(&[-3.0, 4.0], &[5.0, 0.0]).unwrap();
        assert!(t.next_state.iter().all(|x| x.abs() <= 1.0));
        assert!((t.action[0] + 0.6).abs() < 1e-15 && (t.action[1] - 0.8).abs() < 1e-15);
        assert_eq!(t.info.disturbance, vec![1.0, 0.0]);
    }

    #[test]
    fn segment_distance_examples() {
        assert_eq!(segment_min_distance([1.0, 0.0], [-1.0, 0.0]), 0.0);
        assert_eq!(segment_min_distance([1.0, 0.0], [2.0, 0.0]), 1.0);
        assert!((segment_min_distance([1.0, 1.0], [-1.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}
