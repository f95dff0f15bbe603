use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Env, Normalization, Opponent, Outcome, StepInfo, Transition};
use crate::adversary::{hj_disturbance, ValueBuffer};
use crate::dynamics::{integrate_rk4, Quad12Full, QuadParams};
use crate::error::{Error, Result};

/// Which torque channels an opponent may act on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceAxes {
    /// Roll and pitch torques only.
    Xy,
    #[default]
    Xyz,
}

/// Half-widths of the uniform initial-state box around hover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResetSpread {
    pub position: f64,
    pub velocity: f64,
    pub angle: f64,
    pub rate: f64,
}

impl Default for ResetSpread {
    fn default() -> Self {
        Self {
            position: 0.3,
            velocity: 0.2,
            angle: 0.1,
            rate: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadConfig {
    pub params: QuadParams,
    pub dt: f64,
    pub max_steps: usize,
    pub hover: [f64; 3],
    pub reset: ResetSpread,
    pub action_penalty: f64,
    pub rate_penalty: f64,
    pub crash_penalty: f64,
    pub distance_penalty: f64,
    pub disturbance_axes: DisturbanceAxes,
    /// Half-width of a learned adversary's torque box (N·m).
    pub adversary_bound: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        let params = QuadParams::default();
        let adversary_bound = 2.0 * params.torque_bound;
        Self {
            params,
            dt: 0.01,
            max_steps: 1000,
            hover: [0.0, 0.0, 1.0],
            reset: ResetSpread::default(),
            action_penalty: 1e-4,
            rate_penalty: 1e-3,
            crash_penalty: 100.0,
            distance_penalty: 1.0,
            disturbance_axes: DisturbanceAxes::Xyz,
            adversary_bound,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let spread = [self.reset.position, self.reset.velocity, self.reset.angle, self.reset.rate];
        let checks = [
            (self.dt > 0.0, "dt must be positive"),
            (self.max_steps > 0, "max_steps must be positive"),
            (p.mass > 0.0 && p.gravity > 0.0, "mass and gravity must be positive"),
            (p.inertia.iter().all(|i| *i > 0.0), "inertia must be positive"),
            (p.torque_bound > 0.0, "torque_bound must be positive"),
            (p.max_thrust_ratio >= 1.0, "max_thrust_ratio must allow hover"),
            (spread.iter().all(|s| *s >= 0.0), "reset spreads must be non-negative"),
            (self.reset.angle < FRAC_PI_2, "reset angle spread must stay below π/2"),
            (self.adversary_bound >= 0.0, "adversary_bound must be non-negative"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }

    pub fn crashed(&self, s: &[f64]) -> bool {
        s[6].abs() > FRAC_PI_2 || s[7].abs() > FRAC_PI_2 || s[2] < 0.0
    }

    /// Physical input for a normalised action in `[-1, 1]⁴`: thrust `mg (1 + a₀)` scaled
    /// into `[0, ratio · mg]`, torques `ū aᵢ`.
    pub fn input_of_action(&self, a: &[f64]) -> [f64; 4] {
        let p = &self.params;
        let hover = p.hover_thrust();
        let thrust = if a[0] >= 0.0 {
            hover * (1.0 + (p.max_thrust_ratio - 1.0) * a[0])
        } else {
            hover * (1.0 + a[0])
        };
        [thrust, p.torque_bound * a[1], p.torque_bound * a[2], p.torque_bound * a[3]]
    }
}

/// Twelve-state quadrotor hovering at a set point against torque disturbances.
#[derive(Clone, Debug)]
pub struct QuadEnv {
    config: QuadConfig,
    model: Quad12Full,
    buffer: Option<Arc<ValueBuffer>>,
    state: Vec<f64>,
    steps: usize,
}

impl QuadEnv {
    pub fn new(config: QuadConfig, buffer: Option<Arc<ValueBuffer>>) -> Result<Self> {
        config.validate()?;
        if let Some(b) = &buffer {
            if b.entries()[0].model.model_id() != "quad6" {
                return Err(Error::Config("quadrotor disturbances need a quad6 buffer".into()));
            }
        }
        let model = Quad12Full::new(config.params.clone());
        let mut state = vec![0.0; 12];
        state[..3].copy_from_slice(&config.hover);
        Ok(Self {
            config,
            model,
            buffer,
            state,
            steps: 0,
        })
    }

    pub fn config(&self) -> &QuadConfig {
        &self.config
    }

    pub fn buffer(&self) -> Option<&Arc<ValueBuffer>> {
        self.buffer.as_ref()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn set_disturbance_axes(&mut self, axes: DisturbanceAxes) {
        self.config.disturbance_axes = axes;
    }

    /// Starts an episode from an explicit 12-D state.
    pub fn reset_to(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != 12 || state.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("the quadrotor state needs 12 finite entries".into()));
        }
        if self.config.crashed(state) {
            return Err(Error::Config("initial quadrotor state is already crashed".into()));
        }
        self.state = state.to_vec();
        self.steps = 0;
        Ok(())
    }

    fn opponent_torque(&self, opponent: Opponent<'_>) -> Result<([f64; 3], Option<usize>)> {
        let (mut d, level) = match opponent {
            Opponent::Passive => ([0.0; 3], None),
            Opponent::Hj { level } => {
                let buffer = self
                    .buffer
                    .as_ref()
                    .ok_or_else(|| Error::Config("no HJ disturbance buffer attached".into()))?;
                let d = hj_disturbance(buffer.entry(level)?, &self.state[6..12])?.action;
                ([d[0], d[1], d[2]], Some(level))
            }
            Opponent::Learned(a) => {
                check_torque_len(a)?;
                let b = self.config.adversary_bound;
                ([b * a[0].clamp(-1.0, 1.0), b * a[1].clamp(-1.0, 1.0), b * a[2].clamp(-1.0, 1.0)], None)
            }
            Opponent::Direct(a) => {
                check_torque_len(a)?;
                ([a[0], a[1], a[2]], None)
            }
        };
        if self.config.disturbance_axes == DisturbanceAxes::Xy {
            d[2] = 0.0;
        }
        Ok((d, level))
    }
}

fn check_torque_len(a: &[f64]) -> Result<()> {
    if a.len() != 3 {
        return Err(Error::Shape(format!("torque disturbance has {} entries", a.len())));
    }
    Ok(())
}

impl Env for QuadEnv {
    fn observation_dim(&self) -> usize {
        12
    }

    fn action_dim(&self) -> usize {
        4
    }

    fn adversary_dim(&self) -> usize {
        3
    }

    fn hj_levels(&self) -> usize {
        self.buffer.as_ref().map_or(0, |b| b.len())
    }

    fn normalization(&self) -> Normalization {
        let mut offset = vec![0.0; 12];
        offset[..3].copy_from_slice(&self.config.hover);
        let mut scale = vec![1.0; 12];
        scale[9..].fill(0.2);
        Normalization { offset, scale }
    }

    fn state(&self) -> &[f64] {
        &self.state
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        let r = &self.config.reset;
        let mut uniform = |h: f64| if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 };
        let mut s = vec![0.0; 12];
        for i in 0..3 {
            s[i] = self.config.hover[i] + uniform(r.position);
        }
        for v in &mut s[3..6] {
            *v = uniform(r.velocity);
        }
        for v in &mut s[6..9] {
            *v = uniform(r.angle);
        }
        for v in &mut s[9..12] {
            *v = uniform(r.rate);
        }
        // Positions below ground are the only crash a bounded spread can produce.
        s[2] = s[2].max(0.0);
        self.state = s;
        self.steps = 0;
        Ok(())
    }

    fn step(&mut self, action: &[f64], opponent: Opponent<'_>, _rng: &mut dyn RngCore) -> Result<Transition> {
        if action.len() != 4 {
            return Err(Error::Shape(format!("quadrotor action has {} entries", action.len())));
        }
        let cfg = &self.config;
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        let (d, level) = self.opponent_torque(opponent)?;
        let input = cfg.input_of_action(&a);
        let next = match integrate_rk4(&self.model, &self.state, &input, &d, cfg.dt) {
            Ok(next) if next.iter().all(|x| x.is_finite()) => Some(next),
            Ok(_) | Err(Error::Domain(_)) => None,
            Err(e) => return Err(e),
        };
        self.steps += 1;
        // A step through the Euler singularity counts as a crash at the previous state.
        let (next, crashed) = match next {
            Some(n) => {
                let crashed = cfg.crashed(&n);
                (n, crashed)
            }
            None => (self.state.clone(), true),
        };
        let rate_norm = (next[9] * next[9] + next[10] * next[10] + next[11] * next[11]).sqrt();
        let dist = ((next[0] - cfg.hover[0]).powi(2)
            + (next[1] - cfg.hover[1]).powi(2)
            + (next[2] - cfg.hover[2]).powi(2))
        .sqrt();
        let l1: f64 = a.iter().map(|x| x.abs()).sum();
        let mut reward = -cfg.action_penalty * l1 - cfg.rate_penalty * rate_norm - cfg.distance_penalty * dist;
        if crashed {
            reward -= cfg.crash_penalty;
        }
        let outcome = if crashed {
            Outcome::Crash
        } else if self.steps >= cfg.max_steps {
            Outcome::Timeout
        } else {
            Outcome::Running
        };
        let state = std::mem::replace(&mut self.state, next);
        Ok(Transition {
            state,
            action: a,
            reward,
            next_state: self.state.clone(),
            outcome,
            info: StepInfo {
                disturbance: d.to_vec(),
                level,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hover_state() -> Vec<f64> {
        let mut s = vec![0.0; 12];
        s[2] = 1.0;
        s
    }

    #[test]
    fn hover_with_equilibrium_action() {
        let mut env = QuadEnv::new(QuadConfig::default(), None).unwrap();
        env.reset_to(&hover_state()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = env.step(&[0.0; 4], Opponent::Passive, &mut rng).unwrap();
        assert_eq!(t.outcome, Outcome::Running);
        assert!(t.reward.abs() < 1e-12, "{}", t.reward);
        let t = env.step(&[0.0, 0.5, 0.0, 0.0], Opponent::Passive, &mut rng).unwrap();
        assert!(!t.terminal());
        let s = &t.next_state;
        let rates = (s[9] * s[9] + s[10] * s[10] + s[11] * s[11]).sqrt();
        let dist = (s[0] * s[0] + s[1] * s[1] + (s[2] - 1.0).powi(2)).sqrt();
        assert!(rates > 0.0);
        assert!((t.reward - (-1e-4 * 0.5 - 1e-3 * rates - dist)).abs() < 1e-15);
    }

    #[test]
    fn pitch_beyond_vertical_crashes() {
        let mut env = QuadEnv::new(QuadConfig::default(), None).unwrap();
        let mut s = hover_state();
        s[7] = 1.5;
        s[10] = 10.0;
        env.reset_to(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = env.step(&[0.0; 4], Opponent::Passive, &mut rng).unwrap();
        assert!(t.next_state[7] > FRAC_PI_2);
        assert_eq!(t.outcome, Outcome::Crash);
        assert!(t.reward < -100.0);
        assert!(env.config().crashed(&{
            let mut c = hover_state();
            c[7] = FRAC_PI_2 + 0.01;
            c
        }));
    }

    #[test]
    fn times_out_after_max_steps() {
        let mut env = QuadEnv::new(QuadConfig::default(), None).unwrap();
        env.reset_to(&hover_state()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut n = 0;
        loop {
            n += 1;
            let t = env.step(&[0.0; 4], Opponent::Passive, &mut rng).unwrap();
            if t.terminal() {
                assert_eq!(t.outcome, Outcome::Timeout);
                break;
            }
        }
        assert_eq!(n, 1000);
    }

    #[test]
    fn resets_are_deterministic_and_safe() {
        let mut env = QuadEnv::new(QuadConfig::default(), None).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            env.reset(&mut a).unwrap();
            let s = env.state().to_vec();
            assert!(!env.config().crashed(&s));
            assert!((s[2] - 1.0).abs() <= 0.3 && s[6].abs() <= 0.1 && s[9].abs() <= 0.2);
            env.reset(&mut b).unwrap();
            assert_eq!(env.state(), s.as_slice());
        }
        let zero = QuadConfig {
            reset: ResetSpread { position: 0.0, velocity: 0.0, angle: 0.0, rate: 0.0 },
            ..QuadConfig::default()
        };
        let mut env = QuadEnv::new(zero, None).unwrap();
        env.reset(&mut a).unwrap();
        assert_eq!(env.state(), hover_state().as_slice());
    }

    #[test]
    fn xy_mask_drops_yaw_disturbance() {
        let cfg = QuadConfig { disturbance_axes: DisturbanceAxes::Xy, ..QuadConfig::default() };
        let mut env = QuadEnv::new(cfg, None).unwrap();
        env.reset_to(&hover_state()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = env.step(&[0.0; 4], Opponent::Learned(&[1.0, -2.0, 1.0]), &mut rng).unwrap();
        assert_eq!(t.info.disturbance, vec![2e-3, -2e-3, 0.0]);
    }

    #[test]
    fn thrust_mapping_spans_the_admissible_range() {
        let cfg = QuadConfig::default();
        let mg = cfg.params.hover_thrust();
        assert_eq!(cfg.input_of_action(&[-1.0, 0.0, 0.0, 0.0])[0], 0.0);
        assert_eq!(cfg.input_of_action(&[0.0, 0.0, 0.0, 0.0])[0], mg);
        assert!((cfg.input_of_action(&[1.0, 0.0, 0.0, 0.0])[0] - 2.0 * mg).abs() < 1e-15);
    }
}
