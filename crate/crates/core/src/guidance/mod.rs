//! Slew guidance: bang-bang baseline, joint optimization over attitude and
//! gimbals, and the sequential attitude-then-allocation scheme.

mod baseline;
mod envelope;
mod joint;
mod models;
mod sequential;

pub use baseline::{baseline_bang_bang, BaselineInfo, MOMENTUM_FRACTION};
pub use envelope::{
    envelope_support, inverse_allocation, momentum_envelope_ellipsoid, MomentumEnvelope,
};
pub use joint::{build_joint_ocp, joint_guess, solve_joint};
pub use models::{AllocationDynamics, AttitudeDynamics, JointDynamics};
pub use sequential::{
    build_allocation_ocp, build_attitude_ocp, solve_sequential, SequentialRound,
    DEFAULT_MAX_ROUNDS, PROFILE_TOLERANCE,
};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scp::{ScpError, ScpLimits, ScpReport, TrustRegion};
use crate::spacecraft::{
    full_state, AttitudeState, CmgCluster, FullInput, FullState, GimbalState, Propagation,
    SpacecraftError, SpacecraftModel,
};

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("gimbal Jacobian is singular at step {step}")]
    SingularJacobian { step: usize },
    #[error("half slew angle not reached within {steps} steps")]
    HalfAngleNotReached { steps: usize },
    #[error("ellipsoid leaves the momentum envelope by {excess:e} (relative)")]
    ContainmentViolation { excess: f64 },
    #[error("profile has {got} samples, expected {expected}")]
    ProfileLengthMismatch { got: usize, expected: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Spacecraft(#[from] SpacecraftError),
    #[error(transparent)]
    Scp(#[from] ScpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Joint,
    Sequential,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Joint => "joint",
            Method::Sequential => "sequential",
        }
    }
}

/// Rest-to-rest rotation by `delta_theta` about a body axis. The reference
/// frame is aligned with the target, so the slew starts at attitude
/// `-delta_theta · axis` (Euler angles) and ends at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlewScenario {
    pub delta_theta: f64,
    pub axis: Vector3<f64>,
    pub delta_init: Vector4<f64>,
    pub ts: f64,
    /// RK4 substeps per hold interval in the validation propagator.
    pub substeps: usize,
    /// RK4 substeps per hold interval in the optimization models.
    pub model_substeps: usize,
    /// Extra horizon beyond the baseline duration, as a fraction.
    pub horizon_margin: f64,
}

impl Default for SlewScenario {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            delta_theta: 30f64.to_radians(),
            axis: Vector3::y(),
            delta_init: Vector4::new(PI / 3.0, -PI / 3.0, PI - PI / 3.0, PI + PI / 3.0),
            ts: 0.1,
            substeps: 10,
            model_substeps: 1,
            horizon_margin: 0.1,
        }
    }
}

impl SlewScenario {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if !(self.ts > 0.0) || self.substeps == 0 || self.model_substeps == 0 {
            return Err(GuidanceError::InvalidScenario(
                "ts and substeps must be positive".into(),
            ));
        }
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(GuidanceError::InvalidScenario(
                "slew axis must be a unit vector".into(),
            ));
        }
        if !(self.delta_theta >= 0.0) || !(self.horizon_margin > -1.0) {
            return Err(GuidanceError::InvalidScenario(
                "negative slew angle or horizon margin at or below -100%".into(),
            ));
        }
        Ok(())
    }

    pub fn initial_attitude(&self) -> AttitudeState {
        let a = -self.axis * self.delta_theta;
        AttitudeState::at_rest(a.x, a.y, a.z)
    }

    pub fn initial_state(&self) -> FullState {
        full_state(
            &self.initial_attitude(),
            &GimbalState::from_delta(self.delta_init),
        )
    }

    /// Optimization horizon for a baseline lasting `baseline_steps` intervals.
    pub fn horizon(&self, baseline_steps: usize) -> usize {
        ((baseline_steps as f64) * (1.0 + self.horizon_margin))
            .ceil()
            .max(1.0) as usize
    }
}

/// Weights acting on scaled variables: attitude in units of the slew angle,
/// rates in units of `rate_scale`. Only attitude and rate are penalized so
/// the gimbal angles remain free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Terminal quadratic weight on (attitude, rate).
    pub lf_attitude: f64,
    pub lf_rate: f64,
    /// Terminal ∞-norm weight.
    pub sf: f64,
    /// Stage ∞-norm weight.
    pub s: f64,
    /// Stage quadratic weight.
    pub l_attitude: f64,
    pub l_rate: f64,
    /// Gimbal-rate effort.
    pub r: f64,
    /// Deviation from the reference gimbal rates (sequential scheme only).
    pub g: f64,
    /// Momentum tracking weights of the allocation step, per (N·m·s)².
    pub track_stage: f64,
    pub track_terminal: f64,
    pub attitude_scale: f64,
    pub rate_scale: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            lf_attitude: 1e2,
            lf_rate: 1e2,
            sf: 1e4,
            s: 10.0,
            l_attitude: 1.0,
            l_rate: 0.1,
            r: 1e-2,
            g: 10.0,
            track_stage: 1e-2,
            track_terminal: 1.0,
            attitude_scale: 30f64.to_radians(),
            rate_scale: 1.0,
        }
    }
}

impl CostWeights {
    /// Weight `diag(att, rate)` on the scaled attitude and rates, expressed
    /// on the unscaled variables and padded with zeros to `n` states.
    fn attitude_rate_weight(&self, att: f64, rate: f64, n: usize) -> DMatrix<f64> {
        let a = att / (self.attitude_scale * self.attitude_scale);
        let w = rate / (self.rate_scale * self.rate_scale);
        DMatrix::from_fn(n, n, |i, j| match (i == j, i) {
            (true, 0..=2) => a,
            (true, 3..=5) => w,
            _ => 0.0,
        })
    }

    /// Characteristic magnitudes of `[φ, θ, ψ, ω, ...]`, with unit scale on
    /// any further (gimbal) states.
    fn state_scale(&self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |i, _| match i {
            0..=2 => self.attitude_scale,
            3..=5 => self.rate_scale,
            _ => 1.0,
        })
    }
}

/// SCP settings shared by the optimizing methods.
///
/// The defaults accept subproblem steps with a scaled defect up to `1e-2`
/// and re-propagate every accepted step, so iterates stay dynamically
/// consistent while the trust region stays large enough to make progress.
#[derive(Clone, Debug)]
pub struct SolverSettings {
    pub limits: ScpLimits,
    pub trust_region: TrustRegion,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            limits: ScpLimits {
                max_outer: 60,
                max_inner: 20,
                epsilon_tr: 1e-2,
                reproject: true,
                ..ScpLimits::default()
            },
            trust_region: TrustRegion {
                delta_x_max: 0.05,
                delta_u_max: 0.05,
                ..TrustRegion::default()
            },
        }
    }
}

/// Output of any guidance method, re-propagated through the nonlinear model.
#[derive(Clone, Debug)]
pub struct GuidanceResult {
    pub method: Method,
    pub ts: f64,
    pub inputs: Vec<FullInput>,
    pub propagation: Propagation,
    /// Steady-state time of the propagated trajectory, s.
    pub maneuver_time: f64,
    pub settled: bool,
    pub terminal_attitude_error_deg: f64,
    pub terminal_rate_deg_s: f64,
    pub converged: bool,
    pub scp_reports: Vec<ScpReport>,
    pub wall_time: f64,
    pub baseline: Option<BaselineInfo>,
    pub rounds: Vec<SequentialRound>,
}

impl GuidanceResult {
    fn assemble(
        method: Method,
        sc: &SpacecraftModel,
        cluster: &CmgCluster,
        scenario: &SlewScenario,
        inputs: Vec<FullInput>,
    ) -> Result<Self, GuidanceError> {
        let propagation = crate::spacecraft::propagate(
            sc,
            cluster,
            &scenario.initial_state(),
            &inputs,
            scenario.ts,
            scenario.substeps,
        )?;
        let settle = settling_index(&propagation.states);
        let last = propagation
            .states
            .last()
            .expect("propagation has an initial sample");
        Ok(Self {
            method,
            ts: scenario.ts,
            maneuver_time: settle.unwrap_or(inputs.len()) as f64 * scenario.ts,
            settled: settle.is_some(),
            terminal_attitude_error_deg: attitude_error(last).to_degrees(),
            terminal_rate_deg_s: rate_norm(last).to_degrees(),
            inputs,
            propagation,
            converged: true,
            scp_reports: Vec::new(),
            wall_time: 0.0,
            baseline: None,
            rounds: Vec::new(),
        })
    }

    pub fn states(&self) -> &[FullState] {
        &self.propagation.states
    }

    pub fn gimbal_angles(&self) -> Vec<Vector4<f64>> {
        self.propagation
            .states
            .iter()
            .map(|x| crate::spacecraft::delta_from_alpha(&x.fixed_rows::<8>(6).into_owned()))
            .collect()
    }

    /// Relative maneuver-time reduction against `baseline`, percent.
    pub fn improvement_over(&self, baseline: &GuidanceResult) -> f64 {
        100.0 * (baseline.maneuver_time - self.maneuver_time) / baseline.maneuver_time
    }
}

/// Attitude of the body relative to the target, `C = R3(ψ) R2(θ) R1(φ)` with
/// frame (passive) rotations; this is the sequence the Euler-rate equations
/// integrate.
pub fn attitude_matrix(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
    let r1 = crate::spacecraft::rotation_x(phi).transpose();
    let r2 = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), theta)
        .matrix()
        .transpose();
    let r3 = crate::spacecraft::rotation_z(psi).transpose();
    r3 * r2 * r1
}

/// Principal rotation angle to the target, rad.
pub fn attitude_error(x: &FullState) -> f64 {
    let c = attitude_matrix(x[0], x[1], x[2]);
    ((c.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

pub fn rate_norm(x: &FullState) -> f64 {
    Vector3::new(x[3], x[4], x[5]).norm()
}

/// Attitude error below which the spacecraft counts as settled, deg.
pub const SETTLE_ATTITUDE_DEG: f64 = 0.05;
/// Rate below which the spacecraft counts as settled, deg/s.
pub const SETTLE_RATE_DEG_S: f64 = 0.01;

/// First sample from which attitude error and rate stay below the settling
/// thresholds until the end of the trajectory.
pub fn settling_index(states: &[FullState]) -> Option<usize> {
    let inside = |x: &FullState| {
        attitude_error(x).to_degrees() < SETTLE_ATTITUDE_DEG
            && rate_norm(x).to_degrees() < SETTLE_RATE_DEG_S
    };
    let mut k = states.len();
    while k > 0 && inside(&states[k - 1]) {
        k -= 1;
    }
    (k < states.len()).then_some(k)
}
