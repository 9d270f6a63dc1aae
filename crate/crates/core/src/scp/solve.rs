use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use super::{build_subproblem, linearize, IndexMap, OcpProblem, ScpError, Trajectory, TrustRegion};
use crate::qcqp::{solve_qcqp, SolveOptions, SolveStatus};

#[derive(Clone, Debug)]
pub struct ScpLimits {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Stop once `‖z - z̄‖₂ < epsilon` (scaled units).
    pub epsilon: f64,
    /// Accept a subproblem minimizer when its dynamics defect is below this.
    pub epsilon_tr: f64,
    /// Replace each candidate by the rollout of its inputs, so every iterate
    /// is dynamically consistent, and accept it only if [`OcpProblem::merit`]
    /// does not increase. Off by default.
    pub reproject: bool,
    pub qcqp: SolveOptions,
}

impl Default for ScpLimits {
    fn default() -> Self {
        Self {
            max_outer: 30,
            max_inner: 10,
            epsilon: 1e-4,
            epsilon_tr: 1e-4,
            reproject: false,
            qcqp: SolveOptions {
                skip_validation: true,
                ..SolveOptions::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ScpStatus {
    Converged,
    MaxIterations,
    /// The inner loop ran out of attempts without an acceptable step.
    TrustRegionExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScpIterationRecord {
    pub outer: usize,
    pub inner: usize,
    pub defect: f64,
    pub progress: f64,
    pub delta_x_max: f64,
    pub delta_u_max: f64,
    pub qcqp_iterations: usize,
    pub qcqp_status: String,
    pub accepted: bool,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScpReport {
    pub status: ScpStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub final_defect: f64,
    pub final_progress: f64,
    pub objective: f64,
    pub final_trust_region: (f64, f64),
    pub solve_time: f64,
    pub iterations: Vec<ScpIterationRecord>,
    #[serde(skip)]
    pub slacks: DVector<f64>,
}

impl ScpReport {
    pub fn converged(&self) -> bool {
        self.status == ScpStatus::Converged
    }

    pub fn qcqp_iterations(&self) -> usize {
        self.iterations.iter().map(|r| r.qcqp_iterations).sum()
    }

    /// One line per subproblem solve.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "outer,inner,defect,progress,delta_x_max,delta_u_max,qcqp_iterations,qcqp_status,accepted,objective"
        )?;
        for r in &self.iterations {
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{},{},{},{:e}",
                r.outer,
                r.inner,
                r.defect,
                r.progress,
                r.delta_x_max,
                r.delta_u_max,
                r.qcqp_iterations,
                r.qcqp_status,
                r.accepted,
                r.objective
            )?;
        }
        Ok(())
    }
}

/// Scaled dynamics defect `‖D_x⁻¹ (x_{i+1} - f_i(x_i, u_i))‖₂`, which equals
/// the equality residual of the subproblem re-linearized at `traj`.
pub fn dynamics_defect(ocp: &OcpProblem, traj: &Trajectory) -> Result<f64, ScpError> {
    let mut sq = 0.0;
    for i in 0..ocp.horizon {
        let next = ocp.dynamics.step(i, &traj.states[i], &traj.inputs[i])?;
        sq += (&traj.states[i + 1] - next)
            .component_div(&ocp.state_scale)
            .norm_squared();
    }
    Ok(sq.sqrt())
}

/// Double-loop SCP: the inner loop resizes the trust region until the
/// subproblem minimizer is dynamically consistent, the outer loop repeats
/// until the accepted iterate stops moving.
pub fn scp_solve(
    ocp: &OcpProblem,
    guess: &Trajectory,
    tr: TrustRegion,
    limits: &ScpLimits,
) -> Result<(Trajectory, ScpReport), ScpError> {
    let start = Instant::now();
    ocp.validate()?;
    tr.validate()?;
    if !guess.matches(ocp) {
        return Err(ScpError::DimensionMismatch(
            "initial guess does not match problem".into(),
        ));
    }
    let map = IndexMap::new(ocp);
    let mut traj = guess.clone();
    traj.states[0] = ocp.x_init.clone();
    // Re-projected iterates always carry their least slacks, so a guess at
    // the optimum is a fixed point; otherwise γ starts at 1.
    let mut gamma = DVector::from_element(ocp.n_s, 1.0);
    if limits.reproject {
        traj = ocp.rollout(&traj.inputs)?;
        gamma = ocp.least_slacks(&traj);
    }
    let mut lin = linearize(ocp, &traj)?;
    let mut tr = tr;
    let mut records = Vec::new();
    let mut progress = f64::INFINITY;
    let mut defect = dynamics_defect(ocp, &traj)?;
    let mut merit = ocp.merit(&traj);
    let mut outer = 0;
    let mut inner_total = 0;
    let mut status = ScpStatus::Converged;

    while progress >= limits.epsilon {
        if outer == limits.max_outer {
            status = ScpStatus::MaxIterations;
            break;
        }
        outer += 1;
        let z_bar = map.stack(&traj, &gamma);
        let mut accepted = None;
        for inner in 1..=limits.max_inner {
            inner_total += 1;
            let (qp, _) = build_subproblem(ocp, &traj, &lin, &tr)?;
            let opts = SolveOptions {
                warm_start: Some(z_bar.clone()),
                ..limits.qcqp.clone()
            };
            let sol = solve_qcqp(&qp, &opts)?;
            let mut record = ScpIterationRecord {
                outer,
                inner,
                defect: f64::INFINITY,
                progress: f64::NAN,
                delta_x_max: tr.delta_x_max,
                delta_u_max: tr.delta_u_max,
                qcqp_iterations: sol.iterations,
                qcqp_status: format!("{:?}", sol.status),
                accepted: false,
                objective: f64::NAN,
            };
            if sol.status == SolveStatus::Optimal {
                let (cand, cand_gamma) = map.unstack(&sol.x, &ocp.x_init);
                let cand_lin = linearize(ocp, &cand)?;
                let d = cand_lin
                    .defects(&cand)
                    .iter()
                    .map(|v| v.component_div(&ocp.state_scale).norm_squared())
                    .sum::<f64>()
                    .sqrt();
                record.defect = d;
                record.objective = ocp.objective(&cand, &cand_gamma);
                if d <= limits.epsilon_tr {
                    let step = if limits.reproject {
                        let cand = ocp.rollout(&cand.inputs)?;
                        let m = ocp.merit(&cand);
                        record.objective = m;
                        (m <= merit).then(|| {
                            let gamma = ocp.least_slacks(&cand);
                            let z = map.stack(&cand, &gamma);
                            (cand, gamma, 0.0, z)
                        })
                    } else {
                        Some((cand, cand_gamma, d, sol.x))
                    };
                    if let Some((cand, cand_gamma, d, z)) = step {
                        let cand_lin = if limits.reproject {
                            linearize(ocp, &cand)?
                        } else {
                            cand_lin
                        };
                        record.accepted = true;
                        record.progress = (&z - &z_bar).norm();
                        records.push(record);
                        tr = tr.grown();
                        accepted = Some((cand, cand_gamma, cand_lin, d, z));
                        break;
                    }
                }
            }
            records.push(record);
            tr = tr.shrunk();
            if tr.at_floor() {
                break;
            }
        }
        match accepted {
            Some((cand, cand_gamma, cand_lin, d, z)) => {
                progress = (&z - &z_bar).norm();
                traj = cand;
                gamma = cand_gamma;
                lin = cand_lin;
                merit = ocp.merit(&traj);
                defect = d;
            }
            None => {
                status = ScpStatus::TrustRegionExhausted;
                break;
            }
        }
    }

    let report = ScpReport {
        status,
        outer_iterations: outer,
        inner_iterations: inner_total,
        final_defect: defect,
        final_progress: progress,
        objective: ocp.objective(&traj, &gamma),
        final_trust_region: (tr.delta_x_max, tr.delta_u_max),
        solve_time: start.elapsed().as_secs_f64(),
        iterations: records,
        slacks: gamma,
    };
    Ok((traj, report))
}
