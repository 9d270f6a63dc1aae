use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector4};

use super::{AttitudeState, CmgCluster, SpacecraftError, SpacecraftModel, N_CMG, PITCH_GUARD};

pub const N_STATE: usize = 14;

/// `[φ, θ, ψ, ωx, ωy, ωz, α₁ … α₈]`
pub type FullState = SVector<f64, N_STATE>;
/// Gimbal rates `δ̇`.
pub type FullInput = Vector4<f64>;

fn check_pitch(theta: f64) -> Result<(), SpacecraftError> {
    if theta.abs() >= std::f64::consts::FRAC_PI_2 - PITCH_GUARD || !theta.is_finite() {
        Err(SpacecraftError::KinematicsSingularity { theta })
    } else {
        Ok(())
    }
}

fn kinematics(angles: &Vector3<f64>, w: &Vector3<f64>) -> Result<Vector3<f64>, SpacecraftError> {
    let (theta, psi) = (angles[1], angles[2]);
    check_pitch(theta)?;
    let (sp, cp) = psi.sin_cos();
    let a = w.x * cp - w.y * sp;
    let b = w.x * sp + w.y * cp;
    Ok(Vector3::new(a / theta.cos(), b, w.z - a * theta.tan()))
}

/// Euler angle rates `[φ̇, θ̇, ψ̇]` for body rates `ω`.
pub fn euler_kinematics(att: &AttitudeState) -> Result<Vector3<f64>, SpacecraftError> {
    kinematics(&att.angles(), &att.omega)
}

/// Derivatives of the Euler rates with respect to the angles and to `ω`.
pub fn euler_kinematics_jacobian(
    att: &AttitudeState,
) -> Result<(Matrix3<f64>, Matrix3<f64>), SpacecraftError> {
    check_pitch(att.theta)?;
    let w = att.omega;
    let (sp, cp) = att.psi.sin_cos();
    let (sec, tan) = (1.0 / att.theta.cos(), att.theta.tan());
    let a = w.x * cp - w.y * sp;
    let b = w.x * sp + w.y * cp;
    let d_angles = Matrix3::new(
        0.0,
        a * sec * tan,
        -b * sec,
        0.0,
        0.0,
        a,
        0.0,
        -a * sec * sec,
        b * tan,
    );
    let d_omega = Matrix3::new(
        cp * sec,
        -sp * sec,
        0.0,
        sp,
        cp,
        0.0,
        -cp * tan,
        sp * tan,
        1.0,
    );
    Ok((d_angles, d_omega))
}

/// `J⁻¹ R_cb C_τ`, the map from `Λ(α) δ̇` to `-ω̇`.
fn torque_gain(sc: &SpacecraftModel, cluster: &CmgCluster) -> SMatrix<f64, 3, 8> {
    sc.inertia_inv() * sc.dcm_cluster_to_body * cluster.c_tau()
}

fn lambda_times(alpha: &SVector<f64, 8>, u: &FullInput) -> SVector<f64, 8> {
    SVector::<f64, 8>::from_fn(|k, _| alpha[k] * u[k / 2])
}

/// Continuous dynamics of the full state.
pub fn full_dynamics(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    x: &FullState,
    u: &FullInput,
) -> Result<FullState, SpacecraftError> {
    let angles = x.fixed_rows::<3>(0).into_owned();
    let w = x.fixed_rows::<3>(3).into_owned();
    let alpha = x.fixed_rows::<8>(6).into_owned();
    let mut dx = FullState::zeros();
    dx.fixed_rows_mut::<3>(0)
        .copy_from(&kinematics(&angles, &w)?);
    dx.fixed_rows_mut::<3>(3)
        .copy_from(&(-torque_gain(sc, cluster) * lambda_times(&alpha, u)));
    for i in 0..N_CMG {
        dx[6 + 2 * i] = -alpha[2 * i + 1] * u[i];
        dx[6 + 2 * i + 1] = alpha[2 * i] * u[i];
    }
    Ok(dx)
}

/// Analytic `(∂f/∂x, ∂f/∂u)` of [`full_dynamics`].
pub fn full_dynamics_jacobians(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    x: &FullState,
    u: &FullInput,
) -> Result<(SMatrix<f64, N_STATE, N_STATE>, SMatrix<f64, N_STATE, 4>), SpacecraftError> {
    let att = AttitudeState {
        phi: x[0],
        theta: x[1],
        psi: x[2],
        omega: Vector3::new(x[3], x[4], x[5]),
    };
    let (da, dw) = euler_kinematics_jacobian(&att)?;
    let mut fx = SMatrix::<f64, N_STATE, N_STATE>::zeros();
    let mut fu = SMatrix::<f64, N_STATE, 4>::zeros();
    fx.fixed_view_mut::<3, 3>(0, 0).copy_from(&da);
    fx.fixed_view_mut::<3, 3>(0, 3).copy_from(&dw);

    let m = torque_gain(sc, cluster);
    for k in 0..8 {
        let col = -m.column(k) * u[k / 2];
        fx.fixed_view_mut::<3, 1>(3, 6 + k).copy_from(&col);
    }
    for i in 0..N_CMG {
        let (c, s) = (x[6 + 2 * i], x[6 + 2 * i + 1]);
        let col = -(m.column(2 * i) * c + m.column(2 * i + 1) * s);
        fu.fixed_view_mut::<3, 1>(3, i).copy_from(&col);
        fx[(6 + 2 * i, 6 + 2 * i + 1)] = -u[i];
        fx[(6 + 2 * i + 1, 6 + 2 * i)] = u[i];
        fu[(6 + 2 * i, i)] = -s;
        fu[(6 + 2 * i + 1, i)] = c;
    }
    Ok((fx, fu))
}

/// Per-step output of [`propagate`]. Torque and metric are sampled at the
/// start of each hold interval; the final sample carries zero torque.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    pub states: Vec<FullState>,
    /// Torque applied to the spacecraft in body axes, N·m.
    pub torque: Vec<Vector3<f64>>,
    pub singularity: Vec<f64>,
}

/// Body-axis torque on the spacecraft: `-R_cb C_τ Λ(α) δ̇`.
pub fn body_torque(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    x: &FullState,
    u: &FullInput,
) -> Vector3<f64> {
    let alpha = x.fixed_rows::<8>(6).into_owned();
    -sc.dcm_cluster_to_body * cluster.c_tau() * lambda_times(&alpha, u)
}

fn rk4(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    x: &FullState,
    u: &FullInput,
    h: f64,
) -> Result<FullState, SpacecraftError> {
    let k1 = full_dynamics(sc, cluster, x, u)?;
    let k2 = full_dynamics(sc, cluster, &(x + k1 * (h / 2.0)), u)?;
    let k3 = full_dynamics(sc, cluster, &(x + k2 * (h / 2.0)), u)?;
    let k4 = full_dynamics(sc, cluster, &(x + k3 * h), u)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// RK4 under zero-order hold, `substeps` integration steps per interval `ts`.
pub fn propagate(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    x0: &FullState,
    inputs: &[FullInput],
    ts: f64,
    substeps: usize,
) -> Result<Propagation, SpacecraftError> {
    let substeps = substeps.max(1);
    let h = ts / substeps as f64;
    let mut out = Propagation {
        states: Vec::with_capacity(inputs.len() + 1),
        torque: Vec::with_capacity(inputs.len() + 1),
        singularity: Vec::with_capacity(inputs.len() + 1),
    };
    let mut x = *x0;
    out.states.push(x);
    for (step, u) in inputs.iter().enumerate() {
        out.torque.push(body_torque(sc, cluster, &x, u));
        out.singularity
            .push(cluster.singularity_metric_alpha(&x.fixed_rows::<8>(6).into_owned()));
        for _ in 0..substeps {
            x = rk4(sc, cluster, &x, u, h).map_err(|e| SpacecraftError::Propagation {
                step,
                source: Box::new(e),
            })?;
        }
        out.states.push(x);
    }
    out.torque.push(Vector3::zeros());
    out.singularity
        .push(cluster.singularity_metric_alpha(&x.fixed_rows::<8>(6).into_owned()));
    Ok(out)
}
