//! Continuous dynamics adapters between the spacecraft model and the SCP layer.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};

use crate::scp::{ContinuousDynamics, DynamicsError};
use crate::spacecraft::{
    euler_kinematics_jacobian, full_dynamics, full_dynamics_jacobians, AttitudeState, CmgCluster,
    FullInput, FullState, SpacecraftModel, N_CMG, N_STATE,
};

/// Attitude, rates and gimbals: `x = [φ, θ, ψ, ω, α]`, `u = δ̇`.
#[derive(Clone, Debug)]
pub struct JointDynamics {
    pub sc: SpacecraftModel,
    pub cluster: CmgCluster,
}

impl ContinuousDynamics for JointDynamics {
    fn state_dim(&self) -> usize {
        N_STATE
    }

    fn input_dim(&self) -> usize {
        N_CMG
    }

    fn eval(
        &self,
        _stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        let xs = FullState::from_column_slice(x.as_slice());
        let us = FullInput::from_column_slice(u.as_slice());
        let dx = full_dynamics(&self.sc, &self.cluster, &xs, &us)?;
        Ok(DVector::from_column_slice(dx.as_slice()))
    }

    fn jacobians(
        &self,
        _stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        let xs = FullState::from_column_slice(x.as_slice());
        let us = FullInput::from_column_slice(u.as_slice());
        let (fx, fu) = full_dynamics_jacobians(&self.sc, &self.cluster, &xs, &us)?;
        Ok((
            DMatrix::from_column_slice(N_STATE, N_STATE, fx.as_slice()),
            DMatrix::from_column_slice(N_STATE, N_CMG, fu.as_slice()),
        ))
    }
}

/// Attitude and rates with the gimbal angles frozen per stage:
/// `ω̇ = -J⁻¹ R_cb C_τ Λ(ᾱ_i) δ̇`.
#[derive(Clone, Debug)]
pub struct AttitudeDynamics {
    /// `-J⁻¹ R_cb C_τ Λ(ᾱ_i)`, one 3×4 gain per stage.
    pub gains: Vec<SMatrix<f64, 3, 4>>,
}

impl AttitudeDynamics {
    pub fn new(sc: &SpacecraftModel, cluster: &CmgCluster, alpha: &[SVector<f64, 8>]) -> Self {
        let m = sc.inertia_inv() * sc.dcm_cluster_to_body;
        let gains = alpha
            .iter()
            .map(|a| -(m * cluster.jacobian_alpha(a)))
            .collect();
        Self { gains }
    }

    fn gain(&self, stage: usize) -> &SMatrix<f64, 3, 4> {
        &self.gains[stage.min(self.gains.len() - 1)]
    }
}

fn attitude_of(x: &DVector<f64>) -> AttitudeState {
    AttitudeState {
        phi: x[0],
        theta: x[1],
        psi: x[2],
        omega: Vector3::new(x[3], x[4], x[5]),
    }
}

impl ContinuousDynamics for AttitudeDynamics {
    fn state_dim(&self) -> usize {
        6
    }

    fn input_dim(&self) -> usize {
        N_CMG
    }

    fn eval(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        let att = attitude_of(x);
        let rates = crate::spacecraft::euler_kinematics(&att)?;
        let wdot = self.gain(stage) * nalgebra::Vector4::from_column_slice(u.as_slice());
        Ok(DVector::from_iterator(
            6,
            rates.iter().chain(wdot.iter()).copied(),
        ))
    }

    fn jacobians(
        &self,
        stage: usize,
        x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        let (da, dw) = euler_kinematics_jacobian(&attitude_of(x))?;
        let mut fx = DMatrix::zeros(6, 6);
        fx.view_mut((0, 0), (3, 3)).copy_from(&da);
        fx.view_mut((0, 3), (3, 3)).copy_from(&dw);
        let mut fu = DMatrix::zeros(6, N_CMG);
        fu.view_mut((3, 0), (3, N_CMG)).copy_from(self.gain(stage));
        Ok((fx, fu))
    }
}

/// Gimbal states alone: `x = α`, `α̇ = [-sin δ_i, cos δ_i] δ̇_i`.
#[derive(Clone, Copy, Debug, Default)]
pub struct AllocationDynamics;

impl ContinuousDynamics for AllocationDynamics {
    fn state_dim(&self) -> usize {
        2 * N_CMG
    }

    fn input_dim(&self) -> usize {
        N_CMG
    }

    fn eval(
        &self,
        _stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        Ok(DVector::from_fn(2 * N_CMG, |k, _| {
            let i = k / 2;
            if k % 2 == 0 {
                -x[2 * i + 1] * u[i]
            } else {
                x[2 * i] * u[i]
            }
        }))
    }

    fn jacobians(
        &self,
        _stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        let mut fx = DMatrix::zeros(2 * N_CMG, 2 * N_CMG);
        let mut fu = DMatrix::zeros(2 * N_CMG, N_CMG);
        for i in 0..N_CMG {
            fx[(2 * i, 2 * i + 1)] = -u[i];
            fx[(2 * i + 1, 2 * i)] = u[i];
            fu[(2 * i, i)] = -x[2 * i + 1];
            fu[(2 * i + 1, i)] = x[2 * i];
        }
        Ok((fx, fu))
    }
}
