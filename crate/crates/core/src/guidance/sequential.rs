//! Sequential scheme: an attitude OCP with the gimbal angles frozen along a
//! reference profile, then a gimbal allocation OCP that tracks the momentum
//! demanded by the attitude solution. The allocation refreshes the frozen
//! profile and the pair is repeated.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, SVector, Vector3};
use serde::Serialize;

use super::joint::{fit_inputs, install_attitude_costs, install_gimbal_rate_limits, to_inputs};
use super::{
    momentum_envelope_ellipsoid, AllocationDynamics, AttitudeDynamics, CostWeights, GuidanceError,
    GuidanceResult, Method, MomentumEnvelope, SlewScenario, SolverSettings,
};
use crate::scp::{
    scp_solve, OcpProblem, QuadCost, QuadraticBlock, Rk4, ScpReport, StageVar, Trajectory,
};
use crate::spacecraft::{
    delta_from_alpha, CmgCluster, FullInput, GimbalState, SpacecraftModel, N_CMG,
};

/// Stop once successive gimbal profiles differ by less than this, rad RMS.
pub const PROFILE_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ROUNDS: usize = 4;
/// Relative margin kept inside the envelope by a rescaled initial guess.
const ENVELOPE_GUESS_MARGIN: f64 = 1e-3;

type Alpha = SVector<f64, 8>;

/// One attitude + allocation pass.
#[derive(Clone, Debug, Serialize)]
pub struct SequentialRound {
    pub round: usize,
    pub attitude: ScpReport,
    pub allocation: ScpReport,
    /// RMS change of the gimbal angles against the previous profile, rad.
    pub profile_change_rms: f64,
    /// `‖C_H α_i + R_cbᵀ J ω̄_i‖` per stage `0..=N`, N·m·s.
    pub tracking_error: Vec<f64>,
    /// Largest `ωᵀ Q_ω ω` over the attitude solution.
    pub envelope_peak: f64,
}

impl SequentialRound {
    pub fn max_tracking_error(&self) -> f64 {
        self.tracking_error.iter().copied().fold(0.0, f64::max)
    }
}

fn check_len(got: usize, expected: usize) -> Result<(), GuidanceError> {
    if got == expected {
        Ok(())
    } else {
        Err(GuidanceError::ProfileLengthMismatch { got, expected })
    }
}

/// `‖u - δ̄̇_i‖²_G` on top of the effort cost, per stage.
fn install_reference_rate_cost(
    ocp: &mut OcpProblem,
    reference: &[FullInput],
    g: f64,
    rate_max: f64,
) {
    let w = g / (rate_max * rate_max);
    for (cost, r) in ocp.input_costs.iter_mut().zip(reference) {
        cost.hessian += DMatrix::identity(N_CMG, N_CMG) * w;
        cost.linear -= DVector::from_column_slice(r.as_slice()) * w;
    }
}

/// Attitude OCP on `[φ, θ, ψ, ω]` with the gimbal angles frozen at
/// `alpha[i]` over interval `i`. Adds the reference-rate cost around
/// `rates` and the rate envelope `ω_iᵀ Q_ω ω_i ≤ 1` on every stage `1..=N`.
#[allow(clippy::too_many_arguments)]
pub fn build_attitude_ocp(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    scenario: &SlewScenario,
    weights: &CostWeights,
    alpha: &[Alpha],
    rates: &[FullInput],
    envelope: &MomentumEnvelope,
) -> Result<OcpProblem, GuidanceError> {
    scenario.validate()?;
    let horizon = rates.len();
    check_len(alpha.len(), horizon)?;
    let dynamics = Rk4::new(
        AttitudeDynamics::new(sc, cluster, alpha),
        scenario.ts,
        scenario.model_substeps,
    )?;
    let att = scenario.initial_attitude();
    let x0 = DVector::from_iterator(6, att.angles().iter().chain(att.omega.iter()).copied());
    let mut ocp = OcpProblem::new(horizon, Box::new(dynamics), x0)?;
    install_attitude_costs(&mut ocp, weights)?;
    install_gimbal_rate_limits(&mut ocp, cluster, weights);
    install_reference_rate_cost(&mut ocp, rates, weights.g, cluster.gimbal_rate_max);

    let mut q = DMatrix::zeros(6, 6);
    q.view_mut((3, 3), (3, 3))
        .copy_from(&(envelope.q_omega(sc) * 2.0));
    for i in 1..=horizon {
        ocp.quadratics.push(QuadraticBlock {
            var: StageVar::State(i),
            q: q.clone(),
            linear: DVector::zeros(6),
            bound: 1.0,
            slack: Vec::new(),
        });
    }
    Ok(ocp)
}

/// Allocation OCP on `α`: track the cluster momentum `demand[i]` (cluster
/// axes, stages `0..=N`) with quadratic stage and terminal costs, plus effort
/// and the reference-rate cost around `rates`.
pub fn build_allocation_ocp(
    cluster: &CmgCluster,
    scenario: &SlewScenario,
    weights: &CostWeights,
    demand: &[Vector3<f64>],
    rates: &[FullInput],
    alpha_init: &Alpha,
) -> Result<OcpProblem, GuidanceError> {
    scenario.validate()?;
    let horizon = rates.len();
    check_len(demand.len(), horizon + 1)?;
    let dynamics = Rk4::new(AllocationDynamics, scenario.ts, scenario.model_substeps)?;
    let mut ocp = OcpProblem::new(
        horizon,
        Box::new(dynamics),
        DVector::from_column_slice(alpha_init.as_slice()),
    )?;
    install_gimbal_rate_limits(&mut ocp, cluster, weights);
    install_reference_rate_cost(&mut ocp, rates, weights.g, cluster.gimbal_rate_max);

    let ch = DMatrix::from_column_slice(3, 8, cluster.c_h().as_slice());
    let tracking = |w: f64, h: &Vector3<f64>| QuadCost {
        hessian: ch.transpose() * &ch * w,
        linear: -(ch.transpose() * DVector::from_column_slice(h.as_slice())) * w,
    };
    for (i, cost) in ocp.state_costs.iter_mut().enumerate().skip(1) {
        *cost = tracking(weights.track_stage, &demand[i]);
    }
    ocp.terminal_cost = tracking(weights.track_terminal, &demand[horizon]);
    Ok(ocp)
}

/// Largest `ωᵀ Q_ω ω` along an attitude trajectory.
fn envelope_peak_of(traj: &Trajectory, q_omega: &Matrix3<f64>) -> f64 {
    traj.states
        .iter()
        .map(|x| {
            let w = Vector3::new(x[3], x[4], x[5]);
            w.dot(&(q_omega * w))
        })
        .fold(0.0, f64::max)
}

fn wrap(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

/// Gimbal configuration halfway between `a` and `b` along the shorter arcs.
fn midpoint(a: &Alpha, b: &Alpha) -> Alpha {
    let (da, db) = (delta_from_alpha(a), delta_from_alpha(b));
    let mid = da.zip_map(&db, |x, y| x + 0.5 * wrap(y - x));
    GimbalState::from_delta(mid).alpha
}

/// Per-interval frozen profile from sampled gimbal states: interval `i` uses
/// the midpoint of samples `i` and `i + 1`, which keeps the frozen torque map
/// second-order accurate while the gimbals turn. Samples past the end repeat
/// the last one.
fn interval_profile(samples: &[Alpha], horizon: usize) -> Vec<Alpha> {
    let at = |k: usize| &samples[k.min(samples.len() - 1)];
    (0..horizon).map(|i| midpoint(at(i), at(i + 1))).collect()
}

fn alpha_of(x: &DVector<f64>, offset: usize) -> Alpha {
    Alpha::from_column_slice(&x.as_slice()[offset..offset + 8])
}

/// RMS of the wrapped gimbal-angle differences between two profiles.
fn profile_change(a: &[Alpha], b: &[Alpha]) -> f64 {
    let mut sq = 0.0;
    let mut n = 0;
    for (x, y) in a.iter().zip(b) {
        let d = delta_from_alpha(x) - delta_from_alpha(y);
        for v in d.iter() {
            sq += wrap(*v).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sq / n as f64).sqrt()
    }
}

/// Sequential optimization warm-started from `baseline`: up to `max_rounds`
/// attitude/allocation passes, stopping early once the gimbal profile
/// changes by less than [`PROFILE_TOLERANCE`].
pub fn solve_sequential(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    scenario: &SlewScenario,
    weights: &CostWeights,
    baseline: &GuidanceResult,
    settings: &SolverSettings,
    max_rounds: usize,
) -> Result<GuidanceResult, GuidanceError> {
    let start = Instant::now();
    let envelope = momentum_envelope_ellipsoid(cluster)?;
    let horizon = scenario.horizon(baseline.inputs.len());
    let alpha_init = scenario.initial_state().fixed_rows::<8>(6).into_owned();
    let to_rates = |v: &[DVector<f64>]| -> Vec<FullInput> {
        v.iter()
            .map(|u| FullInput::from_column_slice(u.as_slice()))
            .collect()
    };

    let mut rates = to_rates(&fit_inputs(&baseline.inputs, horizon));
    let samples: Vec<Alpha> = baseline
        .propagation
        .states
        .iter()
        .map(|x| x.fixed_rows::<8>(6).into_owned())
        .collect();
    let mut alpha = interval_profile(&samples, horizon);
    let q_omega = envelope.q_omega(sc);
    let to_cluster = sc.dcm_cluster_to_body.transpose() * sc.inertia;

    let mut rounds = Vec::new();
    let mut reports = Vec::new();
    let mut allocation: Option<Trajectory> = None;
    for round in 1..=max_rounds.max(1) {
        let att_ocp =
            build_attitude_ocp(sc, cluster, scenario, weights, &alpha, &rates, &envelope)?;
        // Rates are linear in the inputs from rest, so shrinking the inputs
        // pulls the guess inside the envelope and the subproblems start
        // feasible.
        let mut guess_inputs = fit_inputs(&rates, horizon);
        let peak = envelope_peak_of(&att_ocp.rollout(&guess_inputs)?, &q_omega);
        if peak > 1.0 {
            let shrink = (1.0 - ENVELOPE_GUESS_MARGIN) / peak.sqrt();
            guess_inputs.iter_mut().for_each(|u| *u *= shrink);
        }
        let att_guess = att_ocp.rollout(&guess_inputs)?;
        let (att, att_report) = scp_solve(
            &att_ocp,
            &att_guess,
            settings.trust_region,
            &settings.limits,
        )?;

        let omega: Vec<Vector3<f64>> = att
            .states
            .iter()
            .map(|x| Vector3::new(x[3], x[4], x[5]))
            .collect();
        let envelope_peak = envelope_peak_of(&att, &q_omega);
        let demand: Vec<Vector3<f64>> = omega.iter().map(|w| -(to_cluster * w)).collect();
        let att_rates = to_rates(&att.inputs);

        let alloc_ocp =
            build_allocation_ocp(cluster, scenario, weights, &demand, &att_rates, &alpha_init)?;
        let alloc_guess = alloc_ocp.rollout(&att.inputs)?;
        let (alloc, alloc_report) = scp_solve(
            &alloc_ocp,
            &alloc_guess,
            settings.trust_region,
            &settings.limits,
        )?;

        let tracking_error: Vec<f64> = alloc
            .states
            .iter()
            .zip(&demand)
            .map(|(a, h)| (cluster.momentum(&alpha_of(a, 0)) - h).norm())
            .collect();
        let samples: Vec<Alpha> = alloc.states.iter().map(|a| alpha_of(a, 0)).collect();
        let new_alpha = interval_profile(&samples, horizon);
        let change = profile_change(&new_alpha, &alpha);
        alpha = new_alpha;
        rates = to_rates(&alloc.inputs);
        reports.push(att_report.clone());
        reports.push(alloc_report.clone());
        rounds.push(SequentialRound {
            round,
            attitude: att_report,
            allocation: alloc_report,
            profile_change_rms: change,
            tracking_error,
            envelope_peak,
        });
        allocation = Some(alloc);
        if change < PROFILE_TOLERANCE {
            break;
        }
    }

    let alloc = allocation.expect("at least one round runs");
    let mut result = GuidanceResult::assemble(
        Method::Sequential,
        sc,
        cluster,
        scenario,
        to_inputs(&alloc, cluster),
    )?;
    result.converged = reports.iter().all(ScpReport::converged);
    result.scp_reports = reports;
    result.rounds = rounds;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}
