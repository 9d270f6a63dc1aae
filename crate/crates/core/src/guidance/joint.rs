//! Joint optimization: attitude, rates and gimbal angles in one OCP driven
//! directly by the gimbal rates.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{
    CostWeights, GuidanceError, GuidanceResult, JointDynamics, Method, SlewScenario, SolverSettings,
};
use crate::scp::{epigraph_infnorm, scp_solve, OcpProblem, QuadCost, Rk4, Trajectory};
use crate::spacecraft::{CmgCluster, FullInput, SpacecraftModel, N_CMG, N_STATE};

/// Input box `|δ̇_i| ≤ δ̇_max`, effort cost and input scaling shared by both
/// optimizing schemes.
pub(super) fn install_gimbal_rate_limits(
    ocp: &mut OcpProblem,
    cluster: &CmgCluster,
    weights: &CostWeights,
) {
    let max = cluster.gimbal_rate_max;
    ocp.input_scale = DVector::from_element(N_CMG, max);
    ocp.add_input_box(
        &DVector::from_element(N_CMG, -max),
        &DVector::from_element(N_CMG, max),
    );
    ocp.set_stage_input_cost(QuadCost::quadratic(
        DMatrix::identity(N_CMG, N_CMG) * (weights.r / (max * max)),
    ));
}

/// Quadratic and ∞-norm attitude/rate costs: `L` and `S` on stages
/// `1..N`, `L_f` and `S_f` on the terminal state.
pub(super) fn install_attitude_costs(
    ocp: &mut OcpProblem,
    weights: &CostWeights,
) -> Result<(), GuidanceError> {
    let n = ocp.n_x;
    let horizon = ocp.horizon;
    ocp.state_scale = weights.state_scale(n);
    ocp.terminal_cost =
        QuadCost::quadratic(weights.attitude_rate_weight(weights.lf_attitude, weights.lf_rate, n));
    ocp.set_stage_state_cost(QuadCost::quadratic(weights.attitude_rate_weight(
        weights.l_attitude,
        weights.l_rate,
        n,
    )));
    let stages: Vec<usize> = (1..horizon).collect();
    if weights.s > 0.0 && !stages.is_empty() {
        let s2 = weights.s * weights.s;
        epigraph_infnorm(ocp, &weights.attitude_rate_weight(s2, s2, n), &stages)?;
    }
    if weights.sf > 0.0 {
        let sf2 = weights.sf * weights.sf;
        epigraph_infnorm(ocp, &weights.attitude_rate_weight(sf2, sf2, n), &[horizon])?;
    }
    Ok(())
}

/// Joint OCP over `horizon` intervals: `x = [φ, θ, ψ, ω, α]`, `u = δ̇`,
/// target at the origin.
pub fn build_joint_ocp(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    scenario: &SlewScenario,
    weights: &CostWeights,
    horizon: usize,
) -> Result<OcpProblem, GuidanceError> {
    scenario.validate()?;
    let dynamics = Rk4::new(
        JointDynamics {
            sc: sc.clone(),
            cluster: *cluster,
        },
        scenario.ts,
        scenario.model_substeps,
    )?;
    let x0 = DVector::from_column_slice(scenario.initial_state().as_slice());
    let mut ocp = OcpProblem::new(horizon, Box::new(dynamics), x0)?;
    install_attitude_costs(&mut ocp, weights)?;
    install_gimbal_rate_limits(&mut ocp, cluster, weights);
    Ok(ocp)
}

/// Inputs padded with zeros (or truncated) to `horizon`.
pub(super) fn fit_inputs(inputs: &[FullInput], horizon: usize) -> Vec<DVector<f64>> {
    (0..horizon)
        .map(|i| {
            inputs.get(i).map_or_else(
                || DVector::zeros(N_CMG),
                |u| DVector::from_column_slice(u.as_slice()),
            )
        })
        .collect()
}

/// Baseline inputs rolled out through the OCP's own discrete dynamics, so
/// the guess is dynamically consistent.
pub fn joint_guess(
    ocp: &OcpProblem,
    baseline: &GuidanceResult,
) -> Result<Trajectory, GuidanceError> {
    Ok(ocp.rollout(&fit_inputs(&baseline.inputs, ocp.horizon))?)
}

/// Optimized gimbal rates as held inputs, clipped onto the rate box.
pub(super) fn to_inputs(traj: &Trajectory, cluster: &CmgCluster) -> Vec<FullInput> {
    let max = cluster.gimbal_rate_max;
    traj.inputs
        .iter()
        .map(|u| FullInput::from_column_slice(u.as_slice()).map(|v| v.clamp(-max, max)))
        .collect()
}

/// Joint optimization warm-started from `baseline`, re-propagated through the
/// nonlinear model.
pub fn solve_joint(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    scenario: &SlewScenario,
    weights: &CostWeights,
    baseline: &GuidanceResult,
    settings: &SolverSettings,
) -> Result<GuidanceResult, GuidanceError> {
    let start = Instant::now();
    let horizon = scenario.horizon(baseline.inputs.len());
    let ocp = build_joint_ocp(sc, cluster, scenario, weights, horizon)?;
    let guess = joint_guess(&ocp, baseline)?;
    let (traj, report) = scp_solve(&ocp, &guess, settings.trust_region, &settings.limits)?;
    debug_assert_eq!(traj.states[0].len(), N_STATE);

    let mut result = GuidanceResult::assemble(
        Method::Joint,
        sc,
        cluster,
        scenario,
        to_inputs(&traj, cluster),
    )?;
    result.converged = report.converged();
    result.scp_reports.push(report);
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}
