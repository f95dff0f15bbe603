//! Fixed-point solver for the reach-avoid Hamilton-Jacobi-Isaacs variational inequality.
//!
//! Starting from `V₀ = l`, each iteration advances the value one pseudo-time step backwards
//! with a Lax-Friedrichs numerical Hamiltonian and then applies the target and avoid
//! clamps:
//!
//! ```text
//! V_{k+1} = max( g, min( l, V_k + Δt · (H(x, p̄) + Σᵢ αᵢ (D⁺ᵢ − D⁻ᵢ) / 2) ) )
//! ```
//!
//! with `p̄ = (D⁺ + D⁻) / 2` and `Δt = cfl / Σᵢ αᵢ/Δxᵢ`; the recursion runs backwards in
//! time, so the dissipation enters with a positive sign.
//!
//! Without an avoid set the problem is a reachable tube: the rate is capped at zero and
//! values never rise between iterations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::HjDynamics;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

const MAX_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Iterate to a fixed point.
    Infinite,
    /// Stop after this much accumulated pseudo-time (seconds).
    Finite(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub cfl_factor: f64,
    pub convergence_tol: f64,
    pub max_iterations: usize,
    pub horizon: Horizon,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            cfl_factor: 0.8,
            convergence_tol: 1e-4,
            max_iterations: 10_000,
            horizon: Horizon::Infinite,
        }
    }
}

impl SolveConfig {
    pub fn finite(horizon: f64) -> Self {
        Self {
            horizon: Horizon::Finite(horizon),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 1.0) {
            return Err(Error::Config(format!("cfl_factor {} not in (0, 1]", self.cfl_factor)));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Config("convergence_tol must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if let Horizon::Finite(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("finite horizon {t} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub value: ScalarField,
    /// `max |V_{k+1} − V_k|` for every iteration performed.
    pub residual_history: Vec<f64>,
    pub accumulated_time: f64,
    pub converged: bool,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.residual_history.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// Implicit-surface descriptions of target (and avoid) sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSet {
    /// Euclidean ball over the listed axes; other axes are unconstrained.
    Ball {
        axes: Vec<usize>,
        center: Vec<f64>,
        radius: f64,
    },
    /// Axis-aligned box with an exact signed distance over the listed axes.
    Box {
        axes: Vec<usize>,
        center: Vec<f64>,
        half_widths: Vec<f64>,
    },
    /// `max_i |x_i − c_i| − h_i` over the listed axes.
    MaxNorm {
        axes: Vec<usize>,
        center: Vec<f64>,
        half_widths: Vec<f64>,
    },
    /// The joint attacker/defender game on `(x_A, x_D)`: the attacker must enter the
    /// square destination without coming within `capture_radius` of the defender.
    ReachAvoid {
        target_center: [f64; 2],
        target_side: f64,
        capture_radius: f64,
    },
}

/// Target function `l` (negative inside the target) and optional avoid function `g`
/// (positive inside the avoid set).
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSets {
    pub target: ScalarField,
    pub avoid: Option<ScalarField>,
}

/// Exact signed distance from `x` to the box `|xᵢ − cᵢ| ≤ hᵢ`.
pub fn box_signed_distance(x: &[f64], center: &[f64], half_widths: &[f64]) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::NEG_INFINITY;
    for i in 0..x.len() {
        let q = (x[i] - center[i]).abs() - half_widths[i];
        outside += q.max(0.0).powi(2);
        inside = inside.max(q);
    }
    outside.sqrt() + inside.min(0.0)
}

fn check_axes(grid: &Grid, axes: &[usize], lens: &[usize]) -> Result<()> {
    if axes.is_empty() || axes.iter().any(|&a| a >= grid.dim()) || lens.iter().any(|&n| n != axes.len())
    {
        return Err(Error::Config(format!(
            "target axes {axes:?} do not match a {}-D grid",
            grid.dim()
        )));
    }
    Ok(())
}

fn gather(x: &[f64], axes: &[usize]) -> Vec<f64> {
    axes.iter().map(|&a| x[a]).collect()
}

/// Samples the target (and avoid) functions of `set` on `grid`.
pub fn level_set_target(grid: &Grid, set: &TargetSet) -> Result<LevelSets> {
    match set {
        TargetSet::Ball {
            axes,
            center,
            radius,
        } => {
            check_axes(grid, axes, &[center.len()])?;
            if !(*radius > 0.0) {
                return Err(Error::Config(format!("ball radius {radius} must be positive")));
            }
            let target = ScalarField::from_fn(grid.clone(), |x| {
                let y = gather(x, axes);
                y.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt() - radius
            });
            Ok(LevelSets { target, avoid: None })
        }
        TargetSet::Box {
            axes,
            center,
            half_widths,
        }
        | TargetSet::MaxNorm {
            axes,
            center,
            half_widths,
        } => {
            check_axes(grid, axes, &[center.len(), half_widths.len()])?;
            if half_widths.iter().any(|h| !(*h > 0.0)) {
                return Err(Error::Config(format!("box half widths {half_widths:?} must be positive")));
            }
            let exact = matches!(set, TargetSet::Box { .. });
            let target = ScalarField::from_fn(grid.clone(), |x| {
                let y = gather(x, axes);
                if exact {
                    box_signed_distance(&y, center, half_widths)
                } else {
                    (0..y.len())
                        .map(|i| (y[i] - center[i]).abs() - half_widths[i])
                        .fold(f64::NEG_INFINITY, f64::max)
                }
            });
            Ok(LevelSets { target, avoid: None })
        }
        TargetSet::ReachAvoid {
            target_center,
            target_side,
            capture_radius,
        } => {
            if grid.dim() != 4 {
                return Err(Error::Config("the reach-avoid game needs a 4-D grid".into()));
            }
            if !(*target_side > 0.0 && *capture_radius > 0.0) {
                return Err(Error::Config(
                    "destination side and capture radius must be positive".into(),
                ));
            }
            let half = [0.5 * target_side; 2];
            let capture = |x: &[f64]| capture_radius - (x[0] - x[2]).hypot(x[1] - x[3]);
            let target = ScalarField::from_fn(grid.clone(), |x| {
                box_signed_distance(&x[..2], target_center, &half).max(capture(x))
            });
            let avoid = ScalarField::from_fn(grid.clone(), capture);
            Ok(LevelSets {
                target,
                avoid: Some(avoid),
            })
        }
    }
}

/// Solves the reach-avoid fixed point for `model` with target `l` and optional avoid `g`.
pub fn solve(
    model: &dyn HjDynamics,
    target: &ScalarField,
    avoid: Option<&ScalarField>,
    config: &SolveConfig,
) -> Result<SolveResult> {
    solve_observed(model, target, avoid, config, |_, _| {})
}

/// [`solve`], calling `observer(k, V_k)` after every iteration `k ≥ 1`.
pub fn solve_observed(
    model: &dyn HjDynamics,
    target: &ScalarField,
    avoid: Option<&ScalarField>,
    config: &SolveConfig,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<SolveResult> {
    config.validate()?;
    let grid = target.grid();
    if grid.dim() != model.state_dim() {
        return Err(Error::Shape(format!(
            "{}-D model on a {}-D grid",
            model.state_dim(),
            grid.dim()
        )));
    }
    if grid.dim() > MAX_DIM {
        return Err(Error::Shape(format!("grids above {MAX_DIM} dimensions are not supported")));
    }
    if let Some(g) = avoid {
        if g.grid() != grid {
            return Err(Error::Shape("avoid function sampled on a different grid".into()));
        }
    }
    if target.values().iter().any(|v| !v.is_finite())
        || avoid.is_some_and(|g| g.values().iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Numerical("non-finite level-set function".into()));
    }

    let alpha = model.dissipation_bounds(grid);
    let rate: f64 = alpha.iter().zip(grid.spacing()).map(|(a, h)| a / h).sum();
    let dt = if rate > 0.0 {
        config.cfl_factor / rate
    } else {
        match config.horizon {
            Horizon::Finite(t) => t,
            Horizon::Infinite => 1.0,
        }
    };

    let sweep = Sweep {
        model,
        grid,
        alpha: &alpha,
        target: target.values(),
        avoid: avoid.map(ScalarField::values),
        coords: (0..grid.dim()).map(|a| grid.coordinates(a)).collect(),
    };

    let mut current = target.values().to_vec();
    let mut next = vec![0.0; current.len()];
    let mut history = Vec::new();
    let mut time = 0.0;
    let mut converged = false;

    while history.len() < config.max_iterations {
        let step = match config.horizon {
            Horizon::Finite(t) => dt.min(t - time),
            Horizon::Infinite => dt,
        };
        let residual = sweep.run(&current, &mut next, step)?;
        std::mem::swap(&mut current, &mut next);
        time += step;
        history.push(residual);
        observer(history.len(), &current);
        let done = match config.horizon {
            Horizon::Infinite => residual < config.convergence_tol,
            Horizon::Finite(t) => time >= t * (1.0 - 1e-12),
        };
        if done {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        value: ScalarField::new(grid.clone(), current)?,
        residual_history: history,
        accumulated_time: time,
        converged,
    })
}

struct Sweep<'a> {
    model: &'a dyn HjDynamics,
    grid: &'a Grid,
    alpha: &'a [f64],
    target: &'a [f64],
    avoid: Option<&'a [f64]>,
    coords: Vec<Vec<f64>>,
}

impl Sweep<'_> {
    /// One update of every cell; returns the sup-norm change. Slabs along the first axis
    /// are independent, and the max reduction is order-free, so the result does not depend
    /// on the thread count.
    fn run(&self, current: &[f64], next: &mut [f64], dt: f64) -> Result<f64> {
        let slab = self.grid.strides()[0];
        next.par_chunks_mut(slab)
            .enumerate()
            .map(|(i0, out)| self.slab(current, out, i0, dt))
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    }

    fn slab(&self, v: &[f64], out: &mut [f64], i0: usize, dt: f64) -> Result<f64> {
        let dim = self.grid.dim();
        let axes = self.grid.axes();
        let base = i0 * out.len();
        let mut index = [0usize; MAX_DIM];
        let mut x = [0.0; MAX_DIM];
        let mut p = [0.0; MAX_DIM];
        index[0] = i0;
        for ax in 0..dim {
            x[ax] = self.coords[ax][index[ax]];
        }
        let mut residual: f64 = 0.0;
        for (offset, slot) in out.iter_mut().enumerate() {
            let flat = base + offset;
            let mut dissipation = 0.0;
            for ax in 0..dim {
                let (dm, dp) = self.grid.axis_differences(v, flat, index[ax], ax);
                p[ax] = 0.5 * (dm + dp);
                dissipation += self.alpha[ax] * 0.5 * (dp - dm);
            }
            let h = self.model.hamiltonian(&x[..dim], &p[..dim])?;
            let mut rate = h + dissipation;
            if self.avoid.is_none() {
                rate = rate.min(0.0);
            }
            let mut updated = (v[flat] + dt * rate).min(self.target[flat]);
            if let Some(g) = self.avoid {
                updated = updated.max(g[flat]);
            }
            if !updated.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite value at node {:?}",
                    &index[..dim]
                )));
            }
            residual = residual.max((updated - v[flat]).abs());
            *slot = updated;

            for ax in (1..dim).rev() {
                index[ax] += 1;
                if index[ax] < axes[ax].points {
                    x[ax] = self.coords[ax][index[ax]];
                    break;
                }
                index[ax] = 0;
                x[ax] = self.coords[ax][0];
            }
        }
        Ok(residual)
    }
}

/// Whether `x` lies in the backward-reachable tube, i.e. its interpolated value is `≤ 0`.
pub fn brt_contains(result: &SolveResult, x: &[f64]) -> Result<bool> {
    Ok(result.value.interpolate(x)?.value <= 0.0)
}
