//! Single-integrator pursuit-evasion models.

use serde::{Deserialize, Serialize};

use super::{check_len, norm, ControlSpec, Dynamics, HjDynamics, Optimal, DEGENERATE_GRADIENT};
use crate::error::Result;
use crate::grid::Grid;

/// Joint attacker/defender game `ẋ_A = v_A u`, `ẋ_D = v_D d` on the state
/// `(x_A, y_A, x_D, y_D)`. The attacker's `u` minimises, the defender's `d` maximises.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sig1v1 {
    pub v_attacker: f64,
    pub v_defender: f64,
    /// Radius of the defender's input ball; the buffer's disturbance level.
    #[serde(default = "one")]
    pub disturbance_bound: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Sig1v1 {
    fn default() -> Self {
        Self::new(1.0, 1.5)
    }
}

impl Sig1v1 {
    pub fn new(v_attacker: f64, v_defender: f64) -> Self {
        Self {
            v_attacker,
            v_defender,
            disturbance_bound: 1.0,
        }
    }

    fn radius(&self) -> f64 {
        self.disturbance_bound
    }
}

impl Dynamics for Sig1v1 {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn disturbance_dim(&self) -> usize {
        2
    }

    fn flow_into(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("state", x, 4)?;
        check_len("control", u, 2)?;
        check_len("disturbance", d, 2)?;
        out[0] = self.v_attacker * u[0];
        out[1] = self.v_attacker * u[1];
        out[2] = self.v_defender * d[0];
        out[3] = self.v_defender * d[1];
        Ok(())
    }
}

impl HjDynamics for Sig1v1 {
    fn model_id(&self) -> &'static str {
        "sig1v1"
    }

    fn control_spec(&self) -> ControlSpec {
        ControlSpec::Ball { dim: 2, radius: 1.0 }
    }

    fn disturbance_spec(&self) -> Option<ControlSpec> {
        Some(ControlSpec::Ball {
            dim: 2,
            radius: self.radius(),
        })
    }

    fn hamiltonian(&self, _x: &[f64], p: &[f64]) -> Result<f64> {
        check_len("costate", p, 4)?;
        Ok(-self.v_attacker * norm(&p[..2]) + self.v_defender * self.radius() * norm(&p[2..]))
    }

    fn optimal_control(&self, _x: &[f64], p: &[f64]) -> Result<Optimal> {
        check_len("costate", p, 4)?;
        Ok(unit_direction(&p[..2], -1.0))
    }

    fn optimal_disturbance(&self, _x: &[f64], p: &[f64]) -> Result<Optimal> {
        check_len("costate", p, 4)?;
        Ok(unit_direction(&p[2..], self.radius()))
    }

    fn dissipation_bounds(&self, _region: &Grid) -> Vec<f64> {
        let a = self.v_attacker;
        let d = self.v_defender * self.radius();
        vec![a, a, d, d]
    }
}

/// `scale · g / ‖g‖`, or zero with the degenerate flag when `g` vanishes.
fn unit_direction(g: &[f64], scale: f64) -> Optimal {
    let n = norm(g);
    if n < DEGENERATE_GRADIENT {
        Optimal {
            action: vec![0.0; g.len()],
            degenerate: true,
        }
    } else {
        Optimal {
            action: g.iter().map(|x| scale * x / n).collect(),
            degenerate: false,
        }
    }
}

/// A lone attacker `ẋ_A = v_A u` heading for its target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sig1v0 {
    pub v_attacker: f64,
}

impl Default for Sig1v0 {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl Sig1v0 {
    pub fn new(v_attacker: f64) -> Self {
        Self { v_attacker }
    }
}

impl Dynamics for Sig1v0 {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn disturbance_dim(&self) -> usize {
        0
    }

    fn flow_into(&self, x: &[f64], u: &[f64], _d: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("state", x, 2)?;
        check_len("control", u, 2)?;
        out[0] = self.v_attacker * u[0];
        out[1] = self.v_attacker * u[1];
        Ok(())
    }
}

impl HjDynamics for Sig1v0 {
    fn model_id(&self) -> &'static str {
        "sig1v0"
    }

    fn control_spec(&self) -> ControlSpec {
        ControlSpec::Ball { dim: 2, radius: 1.0 }
    }

    fn disturbance_spec(&self) -> Option<ControlSpec> {
        None
    }

    fn hamiltonian(&self, _x: &[f64], p: &[f64]) -> Result<f64> {
        check_len("costate", p, 2)?;
        Ok(-self.v_attacker * norm(p))
    }

    fn optimal_control(&self, _x: &[f64], p: &[f64]) -> Result<Optimal> {
        check_len("costate", p, 2)?;
        Ok(unit_direction(p, -1.0))
    }

    fn optimal_disturbance(&self, _x: &[f64], _p: &[f64]) -> Result<Optimal> {
        Ok(Optimal {
            action: Vec::new(),
            degenerate: true,
        })
    }

    fn dissipation_bounds(&self, _region: &Grid) -> Vec<f64> {
        vec![self.v_attacker; 2]
    }
}
