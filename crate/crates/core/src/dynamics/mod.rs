//! Nominal dynamical systems `ẋ = f(x, u, d)`.
//!
//! Every HJ-tractable model implements [`HjDynamics`]: the flow, the closed-form
//! `min_u max_d pᵀf` Hamiltonian, the extremal inputs, and per-axis bounds on `|f|` used as
//! Lax-Friedrichs dissipation coefficients. The control minimises and the disturbance
//! maximises.

mod dubin;
mod quad;
mod sig;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub use dubin::Dubin1v0;
pub use quad::{Quad12Full, Quad6Nominal, QuadParams};
pub use sig::{Sig1v0, Sig1v1};

/// Gradients with norm below this are treated as zero when extracting extremal inputs.
pub const DEGENERATE_GRADIENT: f64 = 1e-8;

/// An admissible input set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    /// Euclidean ball `‖v‖₂ ≤ radius` in `dim` dimensions.
    Ball { dim: usize, radius: f64 },
    /// Box `|vᵢ| ≤ half_widths[i]`.
    Box { half_widths: Vec<f64> },
}

impl ControlSpec {
    pub fn dim(&self) -> usize {
        match self {
            ControlSpec::Ball { dim, .. } => *dim,
            ControlSpec::Box { half_widths } => half_widths.len(),
        }
    }

    /// Bounds must be finite and non-negative. A zero bound is the degenerate "no input"
    /// set, which the lowest level of a disturbance buffer uses.
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ControlSpec::Ball { dim, radius } => *dim > 0 && radius.is_finite() && *radius >= 0.0,
            ControlSpec::Box { half_widths } => {
                !half_widths.is_empty() && half_widths.iter().all(|h| h.is_finite() && *h >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid input set {self:?}")))
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        match self {
            ControlSpec::Ball { radius, .. } => norm(v) <= radius + tol,
            ControlSpec::Box { half_widths } => {
                v.iter().zip(half_widths).all(|(x, h)| x.abs() <= h + tol)
            }
        }
    }

    /// Projects `v` onto the set.
    pub fn clip(&self, v: &[f64]) -> Vec<f64> {
        match self {
            ControlSpec::Ball { radius, .. } => {
                let n = norm(v);
                if n > *radius {
                    v.iter().map(|x| x * radius / n).collect()
                } else {
                    v.to_vec()
                }
            }
            ControlSpec::Box { half_widths } => v
                .iter()
                .zip(half_widths)
                .map(|(x, h)| x.clamp(-h, *h))
                .collect(),
        }
    }
}

/// An extremal input. `degenerate` is set when the relevant gradient vanished and the
/// zero tie-break was used.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimal {
    pub action: Vec<f64>,
    pub degenerate: bool,
}

pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;

    /// Writes `f(x, u, d)` into `out`.
    fn flow_into(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) -> Result<()>;

    fn flow(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim()];
        self.flow_into(x, u, d, &mut out)?;
        Ok(out)
    }
}

pub trait HjDynamics: Dynamics + Send + Sync {
    /// Short identifier written into value-function files.
    fn model_id(&self) -> &'static str;
    fn control_spec(&self) -> ControlSpec;
    fn disturbance_spec(&self) -> Option<ControlSpec>;

    /// `min_u max_d pᵀ f(x, u, d)`.
    fn hamiltonian(&self, x: &[f64], p: &[f64]) -> Result<f64>;

    fn optimal_control(&self, x: &[f64], p: &[f64]) -> Result<Optimal>;

    /// Maximiser of `pᵀ f(x, u*, d)`. Models without a disturbance return an empty action.
    fn optimal_disturbance(&self, x: &[f64], p: &[f64]) -> Result<Optimal>;

    /// Per-axis `αᵢ ≥ max |fᵢ|` over the grid's box and all admissible inputs.
    fn dissipation_bounds(&self, region: &Grid) -> Vec<f64>;
}

/// The HJ-tractable models, as a closed set so they can live in configs and files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum NominalModel {
    Sig1v1(Sig1v1),
    Sig1v0(Sig1v0),
    Dubin1v0(Dubin1v0),
    Quad6(Quad6Nominal),
}

impl NominalModel {
    pub fn as_hj(&self) -> &dyn HjDynamics {
        match self {
            NominalModel::Sig1v1(m) => m,
            NominalModel::Sig1v0(m) => m,
            NominalModel::Dubin1v0(m) => m,
            NominalModel::Quad6(m) => m,
        }
    }

    pub fn model_id(&self) -> &'static str {
        self.as_hj().model_id()
    }

    /// The same model with its disturbance set rescaled to `bound`.
    pub fn with_disturbance_bound(&self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::Config(format!("disturbance bound {bound} is not admissible")));
        }
        match self {
            NominalModel::Sig1v1(m) => Ok(NominalModel::Sig1v1(Sig1v1 {
                disturbance_bound: bound,
                ..m.clone()
            })),
            NominalModel::Quad6(m) => Ok(NominalModel::Quad6(Quad6Nominal {
                disturbance_bound: [bound; 3],
                ..m.clone()
            })),
            other => Err(Error::Config(format!(
                "model {} has no disturbance to scale",
                other.model_id()
            ))),
        }
    }

    pub fn disturbance_bound(&self) -> Option<f64> {
        match self {
            NominalModel::Sig1v1(m) => Some(m.disturbance_bound),
            NominalModel::Quad6(m) => Some(m.disturbance_bound[0]),
            _ => None,
        }
    }
}

/// One classical Runge-Kutta step with `u` and `d` held constant.
pub fn integrate_rk4(
    model: &dyn Dynamics,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step size {dt} must be positive")));
    }
    let n = model.state_dim();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    model.flow_into(x, u, d, &mut k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    model.flow_into(&tmp, u, d, &mut k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    model.flow_into(&tmp, u, d, &mut k3)?;
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    model.flow_into(&tmp, u, d, &mut k4)?;
    Ok((0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `sign` with `sign(0) = 0`.
pub(crate) fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Shape(format!("{what} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

/// Largest absolute coordinate on each axis of a grid's box.
pub(crate) fn axis_extents(region: &Grid) -> Vec<f64> {
    region
        .axes()
        .iter()
        .map(|a| a.lower.abs().max(a.upper.abs()))
        .collect()
}
