//! HJ-guided adversaries: the value-function buffer, worst-case disturbances read off its
//! gradients, the Boltzmann level curriculum, and the HJ attacker/defender of the
//! reach-avoid game.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{NominalModel, Optimal};
use crate::error::{Error, Result};
use crate::hjsolver::{solve, LevelSets, SolveConfig, SolveResult};

/// Gradient norms below this fall back to the secondary policy.
pub const EPSILON_GRAD: f64 = 1e-3;

/// One solved level of the buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub bound: f64,
    pub model: NominalModel,
    pub result: SolveResult,
}

/// Value functions for strictly increasing disturbance bounds on one shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueBuffer {
    entries: Vec<BufferEntry>,
}

impl ValueBuffer {
    pub fn new(entries: Vec<BufferEntry>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Config("a value buffer needs at least one level".into()))?;
        for pair in entries.windows(2) {
            if !(pair[1].bound > pair[0].bound) {
                return Err(Error::Config(format!(
                    "buffer levels must strictly increase, got {} then {}",
                    pair[0].bound, pair[1].bound
                )));
            }
        }
        for e in &entries {
            if e.result.value.grid() != first.result.value.grid() {
                return Err(Error::Config("buffer levels use different grids".into()));
            }
            if e.model.model_id() != first.model.model_id() {
                return Err(Error::Config(format!(
                    "buffer mixes models {} and {}",
                    first.model.model_id(),
                    e.model.model_id()
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, level: usize) -> Result<&BufferEntry> {
        self.entries
            .get(level)
            .ok_or_else(|| Error::Config(format!("level {level} outside a {}-level buffer", self.len())))
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.bound).collect()
    }

    pub fn max_bound(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.bound)
    }
}

/// `n` uniformly spaced bounds from `min` to `max`; a single level sits at `max`.
pub fn uniform_levels(min: f64, max: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("the buffer needs at least one level".into()));
    }
    if !(min.is_finite() && max.is_finite() && min >= 0.0) {
        return Err(Error::Config(format!("disturbance bounds {min}..{max} are not admissible")));
    }
    if n == 1 {
        return Ok(vec![max]);
    }
    if !(max > min) {
        return Err(Error::Config(format!("disturbance range {min}..{max} is empty")));
    }
    let step = (max - min) / (n - 1) as f64;
    Ok((0..n).map(|i| if i == n - 1 { max } else { min + step * i as f64 }).collect())
}

/// Solves one value function per disturbance bound in `levels`.
pub fn build_buffer(
    family: &NominalModel,
    levels: &[f64],
    sets: &LevelSets,
    config: &SolveConfig,
) -> Result<ValueBuffer> {
    if levels.is_empty() {
        return Err(Error::Config("the buffer needs at least one level".into()));
    }
    for pair in levels.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::Config(format!(
                "buffer levels must strictly increase, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    let mut entries = Vec::with_capacity(levels.len());
    for (level, &bound) in levels.iter().enumerate() {
        let model = family.with_disturbance_bound(bound)?;
        let result = solve(model.as_hj(), &sets.target, sets.avoid.as_ref(), config)?;
        if !result.converged {
            return Err(Error::NonConvergence {
                level,
                bound,
                iterations: result.iterations(),
            });
        }
        entries.push(BufferEntry {
            bound,
            model,
            result,
        });
    }
    ValueBuffer::new(entries)
}

/// The worst-case disturbance of one buffer level at nominal state `x`: the model's
/// disturbance maximiser evaluated at the interpolated value gradient. Every
/// implemented model is additive in the disturbance, so the control does not enter.
pub fn hj_disturbance(entry: &BufferEntry, x: &[f64]) -> Result<Optimal> {
    let grad = entry.result.value.gradient_at(x)?.value;
    let x = entry.result.value.grid().wrap_and_clamp(x).value;
    entry.model.as_hj().optimal_disturbance(&x, &grad)
}

/// Exponential-in-index level distribution whose inverse temperature moves linearly from
/// `beta_start` to `beta_end` over training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumSchedule {
    pub beta_start: f64,
    pub beta_end: f64,
    pub total_steps: u64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            beta_start: -2.0,
            beta_end: 2.0,
            total_steps: 1_000_000,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("curriculum total_steps must be positive".into()));
        }
        if !(self.beta_start.is_finite() && self.beta_end.is_finite()) {
            return Err(Error::Config("curriculum temperatures must be finite".into()));
        }
        Ok(())
    }

    pub fn progress(&self, step: u64) -> f64 {
        (step as f64 / self.total_steps as f64).clamp(0.0, 1.0)
    }

    pub fn beta(&self, progress: f64) -> f64 {
        self.beta_start + (self.beta_end - self.beta_start) * progress.clamp(0.0, 1.0)
    }

    /// `P(i) ∝ exp(β i)` over levels `i = 1..=n`, returned 0-based.
    pub fn probabilities(&self, progress: f64, n: usize) -> Vec<f64> {
        level_probabilities(self.beta(progress), n)
    }
}

pub fn level_probabilities(beta: f64, n: usize) -> Vec<f64> {
    // Shifting the exponent by its maximum keeps large |β·n| finite.
    let top = if beta >= 0.0 { beta * n as f64 } else { beta };
    let weights: Vec<f64> = (1..=n).map(|i| (beta * i as f64 - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Draws a 0-based buffer level from the curriculum at `progress ∈ [0, 1]`.
pub fn sample_level<R: Rng + ?Sized>(
    schedule: &CurriculumSchedule,
    progress: f64,
    n: usize,
    rng: &mut R,
) -> usize {
    if n <= 1 {
        return 0;
    }
    let probs = schedule.probabilities(progress, n);
    let mut u: f64 = rng.random();
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    n - 1
}

/// The reach-avoid attacker: optimal control on the joint value function where its
/// gradient is informative, otherwise steepest descent on the attacker-only reach value.
#[derive(Clone, Debug)]
pub struct HjAttacker {
    pub game: SolveResult,
    pub fallback: SolveResult,
    pub epsilon: f64,
}

impl HjAttacker {
    pub fn new(game: SolveResult, fallback: SolveResult) -> Self {
        Self {
            game,
            fallback,
            epsilon: EPSILON_GRAD,
        }
    }

    /// Unit-ball control for joint state `(x_A, y_A, x_D, y_D)`.
    pub fn control(&self, state: &[f64]) -> Result<Optimal> {
        hj_attacker_policy(&self.game, &self.fallback, state, self.epsilon)
    }
}

pub fn hj_attacker_policy(
    game: &SolveResult,
    fallback: &SolveResult,
    state: &[f64],
    epsilon: f64,
) -> Result<Optimal> {
    if state.len() != 4 {
        return Err(Error::Shape(format!("joint state has {} entries, expected 4", state.len())));
    }
    let grad = game.value.gradient_at(state)?.value;
    if grad[0].hypot(grad[1]) >= epsilon {
        let n = grad[0].hypot(grad[1]);
        return Ok(Optimal {
            action: vec![-grad[0] / n, -grad[1] / n],
            degenerate: false,
        });
    }
    let grad = fallback.value.gradient_at(&state[..2])?.value;
    let n = grad[0].hypot(grad[1]);
    if n < crate::dynamics::DEGENERATE_GRADIENT {
        return Ok(Optimal {
            action: vec![0.0, 0.0],
            degenerate: true,
        });
    }
    Ok(Optimal {
        action: vec![-grad[0] / n, -grad[1] / n],
        degenerate: false,
    })
}

/// The HJ-optimal defender `d* = ∇_{x_D}V / ‖∇_{x_D}V‖`, switching to pure pursuit of the
/// attacker where the defender's gradient is flat.
pub fn hj_defender_policy(game: &SolveResult, state: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if state.len() != 4 {
        return Err(Error::Shape(format!("joint state has {} entries, expected 4", state.len())));
    }
    let grad = game.value.gradient_at(state)?.value;
    let n = grad[2].hypot(grad[3]);
    if n >= epsilon {
        return Ok(vec![grad[2] / n, grad[3] / n]);
    }
    let (dx, dy) = (state[0] - state[2], state[1] - state[3]);
    let gap = dx.hypot(dy);
    if gap < crate::dynamics::DEGENERATE_GRADIENT {
        return Ok(vec![0.0, 0.0]);
    }
    Ok(vec![dx / gap, dy / gap])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Quad6Nominal, Sig1v0, Sig1v1};
    use crate::grid::{Grid, ScalarField};
    use crate::hjsolver::{level_set_target, TargetSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fake_result(value: ScalarField) -> SolveResult {
        SolveResult {
            value,
            residual_history: vec![0.0],
            accumulated_time: 0.0,
            converged: true,
        }
    }

    #[test]
    fn uniform_levels_examples() {
        assert_eq!(uniform_levels(0.0, 1.0, 1).unwrap(), vec![1.0]);
        let quad = uniform_levels(0.0, 2e-3, 21).unwrap();
        assert_eq!(quad.len(), 21);
        assert_eq!(quad[0], 0.0);
        assert_eq!(quad[20], 2e-3);
        assert!((quad[1] - 1e-4).abs() < 1e-18);
        assert!(uniform_levels(0.5, 0.3, 2).is_err());
        assert!(uniform_levels(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn build_buffer_rejects_unordered_levels() {
        let grid = Grid::uniform(4, -1.0, 1.0, 5).unwrap();
        let sets = level_set_target(
            &grid,
            &TargetSet::ReachAvoid { target_center: [0.5, 0.5], target_side: 0.5, capture_radius: 0.3 },
        )
        .unwrap();
        let family = NominalModel::Sig1v1(Sig1v1::default());
        let err = build_buffer(&family, &[0.5, 0.3], &sets, &SolveConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let one = build_buffer(&family, &[1.0], &sets, &SolveConfig::finite(0.1)).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.bounds(), vec![1.0]);
    }

    #[test]
    fn build_buffer_reports_non_convergence() {
        let grid = Grid::uniform(4, -1.0, 1.0, 5).unwrap();
        let sets = level_set_target(
            &grid,
            &TargetSet::ReachAvoid { target_center: [0.5, 0.5], target_side: 0.5, capture_radius: 0.3 },
        )
        .unwrap();
        let family = NominalModel::Sig1v1(Sig1v1::default());
        let config = SolveConfig { max_iterations: 1, ..SolveConfig::default() };
        let err = build_buffer(&family, &[1.0], &sets, &config).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { level: 0, .. }));
    }

    #[test]
    fn quad_disturbance_follows_rate_gradient() {
        let grid = Grid::uniform(6, -1.0, 1.0, 3).unwrap();
        // V = 2p − 3q has rate gradient (+, −, 0)
        let value = ScalarField::from_fn(grid, |x| 2.0 * x[3] - 3.0 * x[4]);
        let model = NominalModel::Quad6(Quad6Nominal::default()).with_disturbance_bound(5e-4).unwrap();
        let entry = BufferEntry { bound: 5e-4, model, result: fake_result(value) };
        let d = hj_disturbance(&entry, &[0.1, 0.0, 0.0, 0.2, -0.3, 0.1]).unwrap();
        assert_eq!(d.action, vec![5e-4, -5e-4, 0.0]);
    }

    #[test]
    fn flat_value_gives_degenerate_disturbance() {
        let grid = Grid::uniform(4, -1.0, 1.0, 3).unwrap();
        let entry = BufferEntry {
            bound: 1.0,
            model: NominalModel::Sig1v1(Sig1v1::default()),
            result: fake_result(ScalarField::constant(grid, 0.7)),
        };
        let d = hj_disturbance(&entry, &[0.0; 4]).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.action, vec![0.0, 0.0]);
    }

    #[test]
    fn curriculum_examples() {
        let s = CurriculumSchedule::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_level(&s, 0.3, 1, &mut rng), 0);
        }
        let p = level_probabilities(2f64.ln(), 3);
        for (a, b) in p.iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(s.beta(0.0), -2.0);
        assert_eq!(s.beta(0.5), 0.0);
        assert_eq!(s.beta(1.0), 2.0);
        assert!(level_probabilities(-800.0, 21).iter().all(|p| p.is_finite()));
        assert!(level_probabilities(800.0, 21)[20] > 0.999);
    }

    #[test]
    fn uniform_curriculum_passes_chi_square() {
        let s = CurriculumSchedule { beta_start: 0.0, beta_end: 0.0, total_steps: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 5;
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[sample_level(&s, 0.5, n, &mut rng)] += 1;
        }
        let expected = draws as f64 / n as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9th percentile of χ² with 4 degrees of freedom
        assert!(chi2 < 18.47, "χ² = {chi2}, counts {counts:?}");
    }

    #[test]
    fn attacker_falls_back_to_reach_value() {
        let g4 = Grid::uniform(4, -1.0, 1.0, 5).unwrap();
        let game = fake_result(ScalarField::constant(g4, 1.0));
        let g2 = Grid::uniform(2, -1.0, 1.0, 41).unwrap();
        let reach = level_set_target(
            &g2,
            &TargetSet::Ball { axes: vec![0, 1], center: vec![0.5, 0.5], radius: 0.1 },
        )
        .unwrap();
        let fallback = solve(&Sig1v0::default(), &reach.target, None, &SolveConfig::finite(0.05)).unwrap();
        let u = hj_attacker_policy(&game, &fallback, &[-0.5, 0.5, 0.0, 0.0], EPSILON_GRAD).unwrap();
        assert!(!u.degenerate);
        assert!((u.action[0] - 1.0).abs() < 1e-6 && u.action[1].abs() < 1e-6, "{:?}", u.action);
    }

    #[test]
    fn attacker_gradient_threshold_is_inclusive() {
        let g4 = Grid::uniform(4, -1.0, 1.0, 5).unwrap();
        let game = fake_result(ScalarField::from_fn(g4, |x| EPSILON_GRAD * x[1]));
        let g2 = Grid::uniform(2, -1.0, 1.0, 5).unwrap();
        let fallback = fake_result(ScalarField::from_fn(g2, |x| x[0]));
        let u = hj_attacker_policy(&game, &fallback, &[0.1, 0.2, 0.0, 0.0], EPSILON_GRAD).unwrap();
        assert_eq!(u.action, vec![-0.0, -1.0]);
        let d = hj_defender_policy(&game, &[0.1, 0.2, -0.5, 0.2], EPSILON_GRAD).unwrap();
        assert_eq!(d, vec![1.0, 0.0]);
    }
}
