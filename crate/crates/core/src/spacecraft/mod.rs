//! Rigid spacecraft with a four-CMG roof cluster.
//!
//! Gimbal angles are carried as `α = [cos δ₁, sin δ₁, …, cos δ₄, sin δ₄]`, which
//! makes the stored momentum linear in the state: the cluster holds `C_H α` in
//! its own frame and the spacecraft holds `-R_cb C_H α` in body axes. The full
//! optimization state is `x = [φ, θ, ψ, ω, α]` (14 entries) driven by gimbal
//! rates `u = δ̇` (4 entries).

mod cluster;
mod dynamics;

pub use cluster::{rotation_x, rotation_z, CmgCluster, N_CMG};
pub use dynamics::{
    body_torque, euler_kinematics, euler_kinematics_jacobian, full_dynamics,
    full_dynamics_jacobians, propagate, FullInput, FullState, Propagation, N_STATE,
};

use nalgebra::{Matrix3, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Euler-angle kinematics are rejected once `|θ|` comes this close to π/2.
pub const PITCH_GUARD: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpacecraftError {
    #[error("Euler kinematics singular at pitch {theta} rad")]
    KinematicsSingularity { theta: f64 },
    #[error("singularity at step {step}: {source}")]
    Propagation {
        step: usize,
        #[source]
        source: Box<SpacecraftError>,
    },
    #[error("inertia matrix is not symmetric positive definite")]
    InvalidInertia,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacecraftModel {
    pub inertia: Matrix3<f64>,
    pub dcm_cluster_to_body: Matrix3<f64>,
}

impl SpacecraftModel {
    /// Inertia from principal-axis moments `[Jxx, Jyy, Jzz]` and products
    /// `[Jxy, Jxz, Jyz]`, with the roof mounting `Tx(π/6) Tz(π/2) Tx(π/2 - β)`.
    pub fn new(moments: [f64; 3], products: [f64; 3], beta: f64) -> Result<Self, SpacecraftError> {
        let [jxx, jyy, jzz] = moments;
        let [jxy, jxz, jyz] = products;
        let inertia = Matrix3::new(jxx, jxy, jxz, jxy, jyy, jyz, jxz, jyz, jzz);
        if inertia.cholesky().is_none() {
            return Err(SpacecraftError::InvalidInertia);
        }
        Ok(Self {
            inertia,
            dcm_cluster_to_body: roof_mounting(beta),
        })
    }

    pub fn inertia_inv(&self) -> Matrix3<f64> {
        self.inertia
            .try_inverse()
            .expect("inertia is positive definite")
    }

    /// Spacecraft angular momentum `Jω` plus the cluster momentum in body axes.
    /// Zero for a system that started at rest with an empty cluster.
    pub fn total_momentum(&self, cluster: &CmgCluster, x: &FullState) -> Vector3<f64> {
        let omega = Vector3::new(x[3], x[4], x[5]);
        let alpha = x.fixed_rows::<8>(6).into_owned();
        self.inertia * omega + self.dcm_cluster_to_body * cluster.momentum(&alpha)
    }
}

impl Default for SpacecraftModel {
    fn default() -> Self {
        Self::new(
            [5000.0, 5000.0, 3000.0],
            [-400.0, -70.0, -80.0],
            45f64.to_radians(),
        )
        .expect("default inertia is positive definite")
    }
}

pub fn roof_mounting(beta: f64) -> Matrix3<f64> {
    use std::f64::consts::PI;
    rotation_x(PI / 6.0) * rotation_z(PI / 2.0) * rotation_x(PI / 2.0 - beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttitudeState {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub omega: Vector3<f64>,
}

impl AttitudeState {
    pub fn at_rest(phi: f64, theta: f64, psi: f64) -> Self {
        Self {
            phi,
            theta,
            psi,
            omega: Vector3::zeros(),
        }
    }

    pub fn angles(&self) -> Vector3<f64> {
        Vector3::new(self.phi, self.theta, self.psi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GimbalState {
    pub delta: Vector4<f64>,
    pub alpha: SVector<f64, 8>,
}

impl GimbalState {
    pub fn from_delta(delta: Vector4<f64>) -> Self {
        Self {
            delta,
            alpha: alpha_from_delta(&delta),
        }
    }

    /// Recover angles by `atan2`; only used for reporting.
    pub fn from_alpha(alpha: SVector<f64, 8>) -> Self {
        Self {
            delta: delta_from_alpha(&alpha),
            alpha,
        }
    }

    /// Largest deviation of a `(cos, sin)` pair from unit length.
    pub fn normalization_error(&self) -> f64 {
        pair_norm_error(&self.alpha)
    }
}

pub fn alpha_from_delta(delta: &Vector4<f64>) -> SVector<f64, 8> {
    SVector::<f64, 8>::from_fn(|k, _| {
        let d = delta[k / 2];
        if k % 2 == 0 {
            d.cos()
        } else {
            d.sin()
        }
    })
}

pub fn delta_from_alpha(alpha: &SVector<f64, 8>) -> Vector4<f64> {
    Vector4::from_fn(|i, _| alpha[2 * i + 1].atan2(alpha[2 * i]))
}

pub fn pair_norm_error(alpha: &SVector<f64, 8>) -> f64 {
    (0..N_CMG)
        .map(|i| (alpha[2 * i].hypot(alpha[2 * i + 1]) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Stack attitude and gimbals into the 14-entry optimization state.
pub fn full_state(att: &AttitudeState, gimbals: &GimbalState) -> FullState {
    let mut x = FullState::zeros();
    x[0] = att.phi;
    x[1] = att.theta;
    x[2] = att.psi;
    x.fixed_rows_mut::<3>(3).copy_from(&att.omega);
    x.fixed_rows_mut::<8>(6).copy_from(&gimbals.alpha);
    x
}

pub fn split_state(x: &FullState) -> (AttitudeState, GimbalState) {
    let att = AttitudeState {
        phi: x[0],
        theta: x[1],
        psi: x[2],
        omega: Vector3::new(x[3], x[4], x[5]),
    };
    (
        att,
        GimbalState::from_alpha(x.fixed_rows::<8>(6).into_owned()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn default_model_matches_table_values() {
        let sc = SpacecraftModel::default();
        assert_eq!(sc.inertia[(0, 0)], 5000.0);
        assert_eq!(sc.inertia[(1, 2)], -80.0);
        assert_eq!(sc.inertia[(2, 0)], -70.0);
        let r = sc.dcm_cluster_to_body;
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-14);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite_inertia() {
        assert_eq!(
            SpacecraftModel::new([1.0, 1.0, 1.0], [2.0, 0.0, 0.0], 0.5),
            Err(SpacecraftError::InvalidInertia)
        );
    }

    #[test]
    fn alpha_round_trip() {
        let d = Vector4::new(PI / 3.0, -PI / 3.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0);
        let g = GimbalState::from_delta(d);
        assert!(g.normalization_error() < 1e-15);
        assert!((GimbalState::from_alpha(g.alpha).delta - d).amax() < 1e-14);
    }
}
