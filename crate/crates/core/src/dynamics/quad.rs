//! Quadrotor models: the 6-D attitude system used for HJ and the 12-D simulator.

use serde::{Deserialize, Serialize};

use super::{axis_extents, check_len, sign0, ControlSpec, Dynamics, HjDynamics, Optimal};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Physical constants of the simulated vehicle (Crazyflie scale).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParams {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub gravity: f64,
    /// Half-width of every body-torque channel (N·m).
    pub torque_bound: f64,
    /// Maximum collective thrust as a multiple of `mass · gravity`.
    pub max_thrust_ratio: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass: 0.03,
            inertia: [1.4e-5, 1.4e-5, 2.2e-5],
            gravity: 9.81,
            torque_bound: 1e-3,
            max_thrust_ratio: 2.0,
        }
    }
}

impl QuadParams {
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Rigid-body rate equations with the torque and disturbance entering additively.
#[inline]
fn body_rate_derivatives(inertia: &[f64; 3], rates: [f64; 3], torque: [f64; 3]) -> [f64; 3] {
    let [ix, iy, iz] = *inertia;
    let [p, q, r] = rates;
    [
        (iy - iz) / ix * r * q + torque[0] / ix,
        (iz - ix) / iy * p * r + torque[1] / iy,
        (ix - iy) / iz * p * q + torque[2] / iz,
    ]
}

/// Euler-angle kinematics `(φ̇, θ̇, ψ̇)` from body rates.
#[inline]
fn euler_rates(phi: f64, theta: f64, rates: [f64; 3]) -> [f64; 3] {
    let [p, q, r] = rates;
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let tt = st / ct;
    [
        p + r * cp * tt + q * sp * tt,
        q * cp - r * sp,
        r * cp / ct + q * sp / ct,
    ]
}

/// Attitude dynamics on `(φ, θ, ψ, p, q, r)` with box-bounded control and disturbance
/// torques.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quad6Nominal {
    pub inertia: [f64; 3],
    pub torque_bound: [f64; 3],
    pub disturbance_bound: [f64; 3],
    /// Largest admissible `|φ|` and `|θ|`; keeps clear of the `cos θ = 0` singularity.
    pub angle_limit: f64,
}

impl Default for Quad6Nominal {
    fn default() -> Self {
        let p = QuadParams::default();
        Self {
            inertia: p.inertia,
            torque_bound: [p.torque_bound; 3],
            disturbance_bound: [0.0; 3],
            angle_limit: 1.2,
        }
    }
}

impl Quad6Nominal {
    fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x[0].abs() > self.angle_limit || x[1].abs() > self.angle_limit {
            return Err(Error::Domain(format!(
                "roll {} / pitch {} outside ±{}",
                x[0], x[1], self.angle_limit
            )));
        }
        Ok(())
    }

    fn drift(&self, x: &[f64]) -> [f64; 6] {
        let rates = [x[3], x[4], x[5]];
        let e = euler_rates(x[0], x[1], rates);
        let w = body_rate_derivatives(&self.inertia, rates, [0.0; 3]);
        [e[0], e[1], e[2], w[0], w[1], w[2]]
    }
}

impl Dynamics for Quad6Nominal {
    fn state_dim(&self) -> usize {
        6
    }

    fn control_dim(&self) -> usize {
        3
    }

    fn disturbance_dim(&self) -> usize {
        3
    }

    fn flow_into(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("state", x, 6)?;
        check_len("control", u, 3)?;
        check_len("disturbance", d, 3)?;
        self.check_domain(x)?;
        let rates = [x[3], x[4], x[5]];
        let e = euler_rates(x[0], x[1], rates);
        let w = body_rate_derivatives(
            &self.inertia,
            rates,
            [u[0] + d[0], u[1] + d[1], u[2] + d[2]],
        );
        out[..3].copy_from_slice(&e);
        out[3..6].copy_from_slice(&w);
        Ok(())
    }
}

impl HjDynamics for Quad6Nominal {
    fn model_id(&self) -> &'static str {
        "quad6"
    }

    fn control_spec(&self) -> ControlSpec {
        ControlSpec::Box {
            half_widths: self.torque_bound.to_vec(),
        }
    }

    fn disturbance_spec(&self) -> Option<ControlSpec> {
        Some(ControlSpec::Box {
            half_widths: self.disturbance_bound.to_vec(),
        })
    }

    fn hamiltonian(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        check_len("state", x, 6)?;
        check_len("costate", p, 6)?;
        self.check_domain(x)?;
        let drift = self.drift(x);
        let mut h: f64 = drift.iter().zip(p).map(|(f, p)| f * p).sum();
        for i in 0..3 {
            h += (self.disturbance_bound[i] - self.torque_bound[i]) * p[3 + i].abs()
                / self.inertia[i];
        }
        Ok(h)
    }

    fn optimal_control(&self, _x: &[f64], p: &[f64]) -> Result<Optimal> {
        check_len("costate", p, 6)?;
        let action: Vec<f64> = (0..3).map(|i| -self.torque_bound[i] * sign0(p[3 + i])).collect();
        Ok(Optimal {
            degenerate: p[3..].iter().all(|&v| v == 0.0),
            action,
        })
    }

    fn optimal_disturbance(&self, _x: &[f64], p: &[f64]) -> Result<Optimal> {
        check_len("costate", p, 6)?;
        let action: Vec<f64> = (0..3)
            .map(|i| self.disturbance_bound[i] * sign0(p[3 + i]))
            .collect();
        Ok(Optimal {
            degenerate: p[3..].iter().all(|&v| v == 0.0),
            action,
        })
    }

    fn dissipation_bounds(&self, region: &Grid) -> Vec<f64> {
        let ext = axis_extents(region);
        let theta = ext[1].min(self.angle_limit);
        let (pm, qm, rm) = (ext[3], ext[4], ext[5]);
        let [ix, iy, iz] = self.inertia;
        let torque = |i: usize| self.torque_bound[i] + self.disturbance_bound[i];
        vec![
            pm + (qm + rm) * theta.tan().abs(),
            qm + rm,
            (qm + rm) / theta.cos(),
            (iy - iz).abs() / ix * qm * rm + torque(0) / ix,
            (iz - ix).abs() / iy * pm * rm + torque(1) / iy,
            (ix - iy).abs() / iz * pm * qm + torque(2) / iz,
        ]
    }
}

/// Twelve-state quadrotor on `(x, y, z, vx, vy, vz, φ, θ, ψ, p, q, r)` with ZYX Euler
/// angles. The control is `(thrust, τx, τy, τz)`; the disturbance adds to the torques.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quad12Full {
    pub params: QuadParams,
}

impl Quad12Full {
    pub fn new(params: QuadParams) -> Self {
        Self { params }
    }

    /// Thrust and torques that hold a level hover.
    pub fn hover_input(&self) -> [f64; 4] {
        [self.params.hover_thrust(), 0.0, 0.0, 0.0]
    }
}

impl Dynamics for Quad12Full {
    fn state_dim(&self) -> usize {
        12
    }

    fn control_dim(&self) -> usize {
        4
    }

    fn disturbance_dim(&self) -> usize {
        3
    }

    fn flow_into(&self, x: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("state", x, 12)?;
        check_len("control", u, 4)?;
        check_len("disturbance", d, 3)?;
        let (phi, theta, psi) = (x[6], x[7], x[8]);
        if theta.cos().abs() < 1e-6 {
            return Err(Error::Domain(format!("pitch {theta} at the Euler singularity")));
        }
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let (ss, cs) = psi.sin_cos();
        let a = u[0] / self.params.mass;
        out[0] = x[3];
        out[1] = x[4];
        out[2] = x[5];
        out[3] = a * (cp * st * cs + sp * ss);
        out[4] = a * (cp * st * ss - sp * cs);
        out[5] = a * cp * ct - self.params.gravity;
        let rates = [x[9], x[10], x[11]];
        let e = euler_rates(phi, theta, rates);
        let w = body_rate_derivatives(
            &self.params.inertia,
            rates,
            [u[1] + d[0], u[2] + d[1], u[3] + d[2]],
        );
        out[6..9].copy_from_slice(&e);
        out[9..12].copy_from_slice(&w);
        Ok(())
    }
}
