//! Unicycle reach model.

use serde::{Deserialize, Serialize};

use super::{check_len, sign0, ControlSpec, Dynamics, HjDynamics, Optimal};
use crate::error::Result;
use crate::grid::Grid;

/// `ẋ = v cos θ`, `ẏ = v sin θ`, `θ̇ = ω` with `|ω| ≤ omega_max`; state `(x, y, θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dubin1v0 {
    pub speed: f64,
    pub omega_max: f64,
}

impl Default for Dubin1v0 {
    fn default() -> Self {
        Self {
            speed: 0.2,
            omega_max: 1.0,
        }
    }
}

impl Dynamics for Dubin1v0 {
    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn disturbance_dim(&self) -> usize {
        0
    }

    fn flow_into(&self, x: &[f64], u: &[f64], _d: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("state", x, 3)?;
        check_len("control", u, 1)?;
        out[0] = self.speed * x[2].cos();
        out[1] = self.speed * x[2].sin();
        out[2] = u[0];
        Ok(())
    }
}

impl HjDynamics for Dubin1v0 {
    fn model_id(&self) -> &'static str {
        "dubin1v0"
    }

    fn control_spec(&self) -> ControlSpec {
        ControlSpec::Box {
            half_widths: vec![self.omega_max],
        }
    }

    fn disturbance_spec(&self) -> Option<ControlSpec> {
        None
    }

    fn hamiltonian(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        check_len("state", x, 3)?;
        check_len("costate", p, 3)?;
        Ok(p[0] * self.speed * x[2].cos() + p[1] * self.speed * x[2].sin()
            - self.omega_max * p[2].abs())
    }

    fn optimal_control(&self, _x: &[f64], p: &[f64]) -> Result<Optimal> {
        check_len("costate", p, 3)?;
        Ok(Optimal {
            action: vec![-self.omega_max * sign0(p[2])],
            degenerate: p[2] == 0.0,
        })
    }

    fn optimal_disturbance(&self, _x: &[f64], _p: &[f64]) -> Result<Optimal> {
        Ok(Optimal {
            action: Vec::new(),
            degenerate: true,
        })
    }

    fn dissipation_bounds(&self, _region: &Grid) -> Vec<f64> {
        vec![self.speed, self.speed, self.omega_max]
    }
}
