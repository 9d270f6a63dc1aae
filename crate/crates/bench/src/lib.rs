//! Fixtures shared by the criterion benches.

use slewopt::guidance::{
    baseline_bang_bang, build_joint_ocp, joint_guess, CostWeights, SlewScenario,
};
use slewopt::harness::{synthetic_qp, synthetic_suite, Tier};
use slewopt::scp::{build_subproblem, linearize, TrustRegion};
use slewopt::spacecraft::{CmgCluster, SpacecraftModel};
use slewopt::QcqpProblem;

/// Random strictly convex QP with `n / 2` inequalities and `n / 8` equalities.
pub fn qp(n: usize) -> QcqpProblem {
    synthetic_qp(n as u64, n, n / 2, n / 8)
}

/// First QCQP of the built-in benchmark suite.
pub fn small_qcqp() -> QcqpProblem {
    synthetic_suite(1)
        .into_iter()
        .find(|b| b.tier == Tier::Qcqp)
        .expect("suite has a QCQP tier")
        .problem
}

/// Ill-conditioned member of the built-in suite with condition number 1e8.
pub fn ill_conditioned_qp() -> QcqpProblem {
    synthetic_suite(1)
        .into_iter()
        .find(|b| b.tier == Tier::IllConditioned && b.name.ends_with("cond1e8"))
        .expect("suite has a 1e8 member")
        .problem
}

/// First SCP subproblem of the joint slew optimization on the default
/// scenario, linearized about the baseline.
pub fn joint_subproblem() -> QcqpProblem {
    let sc = SpacecraftModel::default();
    let cluster = CmgCluster::default();
    let scenario = SlewScenario::default();
    let baseline = baseline_bang_bang(&sc, &cluster, &scenario).expect("baseline");
    let horizon = scenario.horizon(baseline.inputs.len());
    let ocp = build_joint_ocp(&sc, &cluster, &scenario, &CostWeights::default(), horizon)
        .expect("joint OCP");
    let traj = joint_guess(&ocp, &baseline).expect("guess");
    let lin = linearize(&ocp, &traj).expect("linearization");
    let tr = TrustRegion {
        delta_x_max: 0.05,
        delta_u_max: 0.05,
        ..TrustRegion::default()
    };
    build_subproblem(&ocp, &traj, &lin, &tr)
        .expect("subproblem")
        .0
}
