use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use slewopt::scp::{
    build_subproblem, epigraph_infnorm, linearize, rk4_discretize, scp_solve, IndexMap,
    LinearDynamics, OcpProblem, QuadCost, ScpLimits, ScpStatus, Trajectory, TrustRegion,
};

const TS: f64 = 0.1;

fn double_integrator() -> LinearDynamics {
    LinearDynamics {
        f: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        g: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    }
}

fn wide_region() -> TrustRegion {
    TrustRegion {
        delta_x_max: 1e4,
        delta_u_max: 1e4,
        ..TrustRegion::default()
    }
}

fn zero_guess(n: usize, n_u: usize, x0: &DVector<f64>) -> Trajectory {
    Trajectory::new(vec![x0.clone(); n + 1], vec![DVector::zeros(n_u); n]).unwrap()
}

/// Minimum effort to the origin: min ½Σu² with ½ q_f ‖x_N‖² standing in for
/// the terminal constraint.
fn min_effort(n: usize, qf: f64) -> OcpProblem {
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let dyn_ = rk4_discretize(double_integrator(), TS).unwrap();
    let mut ocp = OcpProblem::new(n, Box::new(dyn_), x0).unwrap();
    ocp.set_stage_input_cost(QuadCost::quadratic(DMatrix::identity(1, 1)));
    ocp.terminal_cost = QuadCost::quadratic(DMatrix::identity(2, 2) * qf);
    ocp
}

/// Exact zero-order-hold transition of the double integrator.
fn exact_ab() -> (Matrix2<f64>, Vector2<f64>) {
    (
        Matrix2::new(1.0, TS, 0.0, 1.0),
        Vector2::new(TS * TS / 2.0, TS),
    )
}

/// Backward Riccati recursion for the same soft-terminal problem.
fn riccati_inputs(n: usize, qf: f64, x0: Vector2<f64>) -> Vec<f64> {
    let (a, b) = exact_ab();
    let mut p = Matrix2::identity() * qf;
    let mut gains = vec![Vector2::zeros(); n];
    for k in (0..n).rev() {
        let s = 1.0 + (b.transpose() * p * b)[0];
        let kk = (b.transpose() * p * a) / s;
        gains[k] = kk.transpose();
        p = a.transpose() * p * (a - b * kk);
        p = (p + p.transpose()) / 2.0;
    }
    let mut x = x0;
    gains
        .iter()
        .map(|k| {
            let u = -k.dot(&x);
            x = a * x + b * u;
            u
        })
        .collect()
}

/// Hard-constrained minimum-norm control `u = -Cᵀ(CCᵀ)⁻¹Aᴺx₀`.
fn minimum_energy_inputs(n: usize, x0: Vector2<f64>) -> Vec<f64> {
    let (a, b) = exact_ab();
    let cols: Vec<Vector2<f64>> = (0..n).map(|k| a.pow((n - 1 - k) as u32) * b).collect();
    let gram: Matrix2<f64> = cols.iter().map(|c| c * c.transpose()).sum();
    let nu = gram.try_inverse().unwrap() * (a.pow(n as u32) * x0);
    cols.iter().map(|c| -c.dot(&nu)).collect()
}

#[test]
fn double_integrator_matches_the_closed_form() {
    let (n, qf) = (20, 1e6);
    let ocp = min_effort(n, qf);
    let guess = zero_guess(n, 1, &ocp.x_init);
    let (traj, report) = scp_solve(&ocp, &guess, wide_region(), &ScpLimits::default()).unwrap();
    assert_eq!(report.status, ScpStatus::Converged);

    let x0 = Vector2::new(1.0, 0.0);
    let lq = riccati_inputs(n, qf, x0);
    let hard = minimum_energy_inputs(n, x0);
    for (k, u) in traj.inputs.iter().enumerate() {
        assert!(
            (u[0] - lq[k]).abs() <= 1e-6,
            "stage {k}: {} vs {}",
            u[0],
            lq[k]
        );
        assert!(
            (u[0] - hard[k]).abs() <= 1e-4,
            "stage {k}: {} vs {}",
            u[0],
            hard[k]
        );
    }
    assert!(traj.states[n].amax() < 1e-4);
}

#[test]
fn linear_dynamics_converge_in_one_outer_iteration() {
    let ocp = min_effort(20, 1e3);
    let guess = zero_guess(20, 1, &ocp.x_init);
    let (traj, report) = scp_solve(&ocp, &guess, wide_region(), &ScpLimits::default()).unwrap();
    assert!(report.converged());
    // the second pass only confirms the first
    assert!(report.outer_iterations <= 2);
    let first = report.iterations.iter().find(|r| r.accepted).unwrap();
    assert_eq!(first.outer, 1);
    assert!(first.defect < 1e-10, "{}", first.defect);
    assert!(report.final_progress < ScpLimits::default().epsilon);
    assert_eq!(report.inner_iterations, report.outer_iterations);

    let lin = linearize(&ocp, &traj).unwrap();
    assert!(lin.defects(&traj).iter().all(|d| d.amax() < 1e-12));
    let (a, b) = exact_ab();
    for i in 0..20 {
        assert!((&lin.a[i] - DMatrix::from_column_slice(2, 2, a.as_slice())).amax() < 1e-15);
        assert!((&lin.b[i] - DMatrix::from_column_slice(2, 1, b.as_slice())).amax() < 1e-15);
    }
}

/// One stage, `x_1 = x_0` fixed, epigraph slack on `x_1`.
fn epigraph_value(w: DMatrix<f64>, x0: [f64; 2]) -> f64 {
    let frozen = LinearDynamics {
        f: DMatrix::zeros(2, 2),
        g: DMatrix::zeros(2, 1),
    };
    let x0 = DVector::from_column_slice(&x0);
    let mut ocp =
        OcpProblem::new(1, Box::new(rk4_discretize(frozen, TS).unwrap()), x0.clone()).unwrap();
    ocp.set_stage_input_cost(QuadCost::quadratic(DMatrix::identity(1, 1)));
    let slacks = epigraph_infnorm(&mut ocp, &w, &[1]).unwrap();
    assert_eq!(slacks, vec![0]);
    let guess = zero_guess(1, 1, &x0);
    let (_, report) = scp_solve(&ocp, &guess, wide_region(), &ScpLimits::default()).unwrap();
    report.slacks[0]
}

#[test]
fn epigraph_slack_is_the_weighted_infinity_norm() {
    assert!((epigraph_value(DMatrix::identity(2, 2), [3.0, -5.0]) - 5.0).abs() < 1e-6);
    assert!(epigraph_value(DMatrix::zeros(2, 2), [3.0, -5.0]).abs() < 1e-6);
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
    assert!((epigraph_value(w, [1.0, 1.0]) - 2.0).abs() < 1e-6);
}

#[test]
fn epigraph_rejects_indefinite_weights() {
    let mut ocp = min_effort(3, 1.0);
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
    assert!(epigraph_infnorm(&mut ocp, &w, &[1]).is_err());
    assert!(epigraph_infnorm(&mut ocp, &DMatrix::identity(2, 2), &[0]).is_err());
}

fn scalar_ocp() -> OcpProblem {
    let integrator = LinearDynamics {
        f: DMatrix::zeros(1, 1),
        g: DMatrix::identity(1, 1),
    };
    OcpProblem::new(
        1,
        Box::new(rk4_discretize(integrator, TS).unwrap()),
        DVector::from_element(1, 0.0),
    )
    .unwrap()
}

#[test]
fn scalar_subproblem_shape_and_trust_region_rows() {
    let mut ocp = scalar_ocp();
    ocp.add_slacks(1, 1.0);
    let traj = Trajectory::new(
        vec![DVector::from_element(1, 0.0), DVector::from_element(1, 2.0)],
        vec![DVector::from_element(1, 1.0)],
    )
    .unwrap();
    let lin = linearize(&ocp, &traj).unwrap();
    let tr = TrustRegion {
        delta_x_max: 0.5,
        delta_u_max: 0.5,
        ..TrustRegion::default()
    };
    let (qp, map) = build_subproblem(&ocp, &traj, &lin, &tr).unwrap();
    assert_eq!((qp.n, map.len(), qp.n_eq()), (3, 3, 1));
    // γ ≥ 0 is the only linear row; one ball per stage variable
    assert_eq!((qp.n_lin(), qp.quad.len()), (1, 2));

    // state ball: ½(x - 2)² ≤ 0.5, written with unit bound
    let ball = &qp.quad[0];
    for x in [1.0, 2.0, 2.7, 3.0, 3.5] {
        let z = DVector::from_vec(vec![x, 0.0, 0.0]);
        let expected = 0.5 * (x - 2.0_f64).powi(2) / 0.5;
        assert!((ball.value(&z) - expected).abs() < 1e-14);
    }
    assert!((ball.value(&DVector::from_vec(vec![3.0, 0.0, 0.0])) - 1.0).abs() < 1e-14);

    let bare = scalar_ocp();
    let (qp, _) = build_subproblem(&bare, &traj, &linearize(&bare, &traj).unwrap(), &tr).unwrap();
    assert_eq!((qp.n, qp.n_eq(), qp.n_lin()), (2, 1, 0));
}

#[test]
fn stacking_round_trips() {
    let mut ocp = min_effort(7, 1.0);
    ocp.add_slacks(3, 1.0);
    ocp.state_scale = DVector::from_vec(vec![0.5, 4.0]);
    ocp.input_scale = DVector::from_element(1, 3.0);
    let map = IndexMap::new(&ocp);
    let states: Vec<_> = (0..8)
        .map(|i| DVector::from_vec(vec![i as f64, -0.5 * i as f64]))
        .collect();
    let inputs: Vec<_> = (0..7)
        .map(|i| DVector::from_element(1, 0.1 * i as f64))
        .collect();
    let traj = Trajectory::new(states, inputs).unwrap();
    let gamma = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let z = map.stack(&traj, &gamma);
    assert_eq!(z.len(), 7 * 3 + 3);
    let (back, g) = map.unstack(&z, &traj.states[0]);
    assert_eq!(back, traj);
    assert_eq!(g, gamma);
}

#[test]
fn affine_model_is_exact_at_the_linearization_point() {
    let ocp = min_effort(5, 1.0);
    let states: Vec<_> = (0..6)
        .map(|i| DVector::from_vec(vec![1.0 - 0.1 * i as f64, 0.3]))
        .collect();
    let inputs: Vec<_> = (0..5)
        .map(|i| DVector::from_element(1, (i as f64).sin()))
        .collect();
    let traj = Trajectory::new(states, inputs).unwrap();
    let lin = linearize(&ocp, &traj).unwrap();
    let (a, b) = exact_ab();
    for i in 0..5 {
        let x = Vector2::new(traj.states[i][0], traj.states[i][1]);
        let expected = a * x + b * traj.inputs[i][0];
        assert!(
            (lin.d[i][0] - expected[0]).abs() < 1e-15 && (lin.d[i][1] - expected[1]).abs() < 1e-15
        );
    }
}

#[test]
fn mismatched_guess_is_rejected() {
    let ocp = min_effort(4, 1.0);
    let guess = zero_guess(3, 1, &ocp.x_init);
    assert!(scp_solve(&ocp, &guess, wide_region(), &ScpLimits::default()).is_err());
    let bad = TrustRegion {
        kappa_plus: 0.9,
        ..TrustRegion::default()
    };
    let guess = zero_guess(4, 1, &ocp.x_init);
    assert!(scp_solve(&ocp, &guess, bad, &ScpLimits::default()).is_err());
}
