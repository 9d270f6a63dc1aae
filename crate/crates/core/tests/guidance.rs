use nalgebra::{DVector, SVector, Vector3, Vector4};
use rand::Rng;
use slewopt::guidance::{
    baseline_bang_bang, build_allocation_ocp, build_attitude_ocp, build_joint_ocp,
    envelope_support, inverse_allocation, joint_guess, momentum_envelope_ellipsoid, solve_joint,
    solve_sequential, CostWeights, GuidanceResult, MomentumEnvelope, SlewScenario, SolverSettings,
};
use slewopt::scp::{scp_solve, ScpLimits, StageVar, Trajectory, TrustRegion};
use slewopt::spacecraft::{CmgCluster, SpacecraftModel};

mod common;

type Alpha = SVector<f64, 8>;

fn models() -> (SpacecraftModel, CmgCluster) {
    (SpacecraftModel::default(), CmgCluster::default())
}

fn wide() -> TrustRegion {
    TrustRegion {
        delta_x_max: 1e3,
        delta_u_max: 1e3,
        ..TrustRegion::default()
    }
}

fn max_abs_input(traj: &Trajectory) -> f64 {
    traj.inputs.iter().map(|u| u.amax()).fold(0.0, f64::max)
}

#[test]
fn envelope_is_bounded_symmetric_and_allocatable() {
    let (_, cluster) = models();
    let env = momentum_envelope_ellipsoid(&cluster).unwrap();
    let x_support = envelope_support(&cluster, &Vector3::x());
    assert!((x_support - 4.0 * cluster.h_cmg).abs() < 1e-9);
    assert!(env.semi_axes.x <= x_support + 1e-9);
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        assert!(env.q[(i, j)].abs() <= 1e-12 * env.q.amax(), "{}", env.q);
    }

    let mut rng = common::rng(21);
    let ch = cluster.c_h();
    for _ in 0..2000 {
        let dir = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let radial: f64 = rng.random_range(0.0..1.0);
        let h = dir / dir.dot(&(env.q * dir)).sqrt() * radial.cbrt();
        assert!(env.contains(&h));
        let alpha = inverse_allocation(&cluster, &h).expect("inside the envelope");
        assert!((ch * alpha - h).amax() < 1e-9 * cluster.h_cmg);
        for k in 0..4 {
            assert!((alpha[2 * k].hypot(alpha[2 * k + 1]) - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn baseline_is_saturated_and_mirrored() {
    let (sc, cluster) = models();
    let scenario = SlewScenario::default();
    let b = baseline_bang_bang(&sc, &cluster, &scenario).unwrap();
    let info = b.baseline.clone().unwrap();
    let m = b.inputs.len() / 2;
    assert_eq!(b.inputs.len(), 2 * m);
    for j in 0..m {
        assert_eq!(b.inputs[2 * m - 1 - j], -b.inputs[j], "step {j}");
    }
    let rate_max = cluster.gimbal_rate_max;
    // the last acceleration step is the fractional one
    let k = info.accel_steps - 1;
    for u in &b.inputs[..k] {
        assert!((u.amax() - rate_max).abs() < 1e-12, "{}", u.amax());
    }
    assert!((b.inputs[k].amax() - info.kappa * rate_max).abs() < 1e-12);
    assert!(b.inputs[k + 1..m].iter().all(|u| *u == Vector4::zeros()));
    assert_eq!(info.coast_steps, m - info.accel_steps);
    assert!(b.settled);
}

#[test]
fn zero_angle_baseline_takes_no_time() {
    let (sc, cluster) = models();
    let scenario = SlewScenario {
        delta_theta: 0.0,
        ..SlewScenario::default()
    };
    let b = baseline_bang_bang(&sc, &cluster, &scenario).unwrap();
    assert!(b.inputs.is_empty());
    assert_eq!(b.maneuver_time, 0.0);
}

/// Interval gimbal profile read off the propagated baseline.
fn frozen_profile(b: &GuidanceResult) -> Vec<Alpha> {
    b.states()[..b.inputs.len()]
        .iter()
        .map(|x| x.fixed_rows::<8>(6).into_owned())
        .collect()
}

fn small_slew() -> SlewScenario {
    SlewScenario {
        delta_theta: 10f64.to_radians(),
        ..SlewScenario::default()
    }
}

#[test]
fn reference_rate_penalty_pins_the_inputs() {
    let (sc, cluster) = models();
    let scenario = small_slew();
    let b = baseline_bang_bang(&sc, &cluster, &scenario).unwrap();
    let env = momentum_envelope_ellipsoid(&cluster).unwrap();
    // envelope scaled out of the way: only the penalty limit is under test
    let loose = MomentumEnvelope {
        q: env.q * 1e-4,
        ..env
    };
    let alpha = frozen_profile(&b);
    // Hessian entries reach G, so the absolute stationarity floor is about
    // G·1e-16; 1e-6 still pins u to ~1e-14 at G = 1e8
    let mut limits = ScpLimits::default();
    limits.qcqp.tol = 1e-6;
    let deviation = |g: f64| {
        let weights = CostWeights {
            g,
            ..CostWeights::default()
        };
        let ocp = build_attitude_ocp(
            &sc, &cluster, &scenario, &weights, &alpha, &b.inputs, &loose,
        )
        .unwrap();
        assert_eq!(ocp.quadratics.len(), ocp.horizon);
        for (k, q) in ocp.quadratics.iter().enumerate() {
            assert_eq!(q.var, StageVar::State(k + 1));
        }
        let refs: Vec<DVector<f64>> = b
            .inputs
            .iter()
            .map(|u| DVector::from_column_slice(u.as_slice()))
            .collect();
        let guess = ocp.rollout(&refs).unwrap();
        let (traj, report) = scp_solve(&ocp, &guess, wide(), &limits).unwrap();
        assert!(report.converged(), "G = {g}: {:?}", report.status);
        traj.inputs
            .iter()
            .zip(&refs)
            .map(|(u, r)| (u - r).amax())
            .fold(0.0, f64::max)
    };
    let (d6, d8) = (deviation(1e6), deviation(1e8));
    let ratio = d6 / d8;
    assert!(
        d6 > 0.0 && (50.0..200.0).contains(&ratio),
        "{d6:e} {d8:e} ratio {ratio}"
    );
}

#[test]
fn at_rest_on_target_stays_put() {
    let (sc, cluster) = models();
    let scenario = SlewScenario {
        delta_theta: 0.0,
        ..SlewScenario::default()
    };
    let env = momentum_envelope_ellipsoid(&cluster).unwrap();
    let n = 15;
    let alpha0: Alpha = scenario.initial_state().fixed_rows::<8>(6).into_owned();
    let weights = CostWeights::default();
    let rates = vec![Vector4::zeros(); n];

    let ocp = build_attitude_ocp(
        &sc,
        &cluster,
        &scenario,
        &weights,
        &vec![alpha0; n],
        &rates,
        &env,
    )
    .unwrap();
    let guess = ocp.rollout(&vec![DVector::zeros(4); n]).unwrap();
    let (traj, _) = scp_solve(&ocp, &guess, wide(), &ScpLimits::default()).unwrap();
    assert!(max_abs_input(&traj) < 1e-6);
    assert!(traj.states.iter().all(|x| x.amax() < 1e-8));

    let demand = vec![Vector3::zeros(); n + 1];
    let ocp =
        build_allocation_ocp(&cluster, &scenario, &weights, &demand, &rates, &alpha0).unwrap();
    let guess = ocp.rollout(&vec![DVector::zeros(4); n]).unwrap();
    let (traj, _) = scp_solve(&ocp, &guess, wide(), &ScpLimits::default()).unwrap();
    assert!(max_abs_input(&traj) < 1e-6);

    // effort only
    let only_r = CostWeights {
        lf_attitude: 0.0,
        lf_rate: 0.0,
        sf: 0.0,
        s: 0.0,
        l_attitude: 0.0,
        l_rate: 0.0,
        ..CostWeights::default()
    };
    let ocp = build_joint_ocp(&sc, &cluster, &scenario, &only_r, n).unwrap();
    let guess = ocp.rollout(&vec![DVector::zeros(4); n]).unwrap();
    let (traj, _) = scp_solve(&ocp, &guess, wide(), &ScpLimits::default()).unwrap();
    assert!(max_abs_input(&traj) < 1e-6);
}

#[test]
fn allocation_recovers_a_feasible_gimbal_profile() {
    let (_, cluster) = models();
    let scenario = small_slew();
    let weights = CostWeights::default();
    let n = 40;
    let rates: Vec<Vector4<f64>> = (0..n)
        .map(|i| {
            let t = i as f64 * scenario.ts;
            Vector4::new(
                0.5 * (0.7 * t).sin(),
                -0.3,
                0.4 * (0.3 * t).cos(),
                0.2 * t.sin(),
            )
        })
        .collect();
    let alpha0: Alpha = scenario.initial_state().fixed_rows::<8>(6).into_owned();
    let refs: Vec<DVector<f64>> = rates
        .iter()
        .map(|u| DVector::from_column_slice(u.as_slice()))
        .collect();

    // generate the demand from the known profile, then ask for it back
    let probe = build_allocation_ocp(
        &cluster,
        &scenario,
        &weights,
        &vec![Vector3::zeros(); n + 1],
        &rates,
        &alpha0,
    )
    .unwrap();
    let generating = probe.rollout(&refs).unwrap();
    let ch = cluster.c_h();
    let momentum = |x: &DVector<f64>| ch * Alpha::from_column_slice(x.as_slice());
    let demand: Vec<Vector3<f64>> = generating.states.iter().map(momentum).collect();
    let ocp =
        build_allocation_ocp(&cluster, &scenario, &weights, &demand, &rates, &alpha0).unwrap();
    let (traj, _) = scp_solve(&ocp, &generating, wide(), &ScpLimits::default()).unwrap();

    let tracking: f64 = (1..=n)
        .map(|i| {
            let w = if i == n {
                weights.track_terminal
            } else {
                weights.track_stage
            };
            0.5 * w * (momentum(&traj.states[i]) - demand[i]).norm_squared()
        })
        .sum();
    let r = weights.r / cluster.gimbal_rate_max.powi(2);
    let effort_floor: f64 = refs.iter().map(|u| 0.5 * r * u.norm_squared()).sum();
    assert!(
        tracking <= effort_floor * (1.0 + 1e-6),
        "{tracking:e} vs {effort_floor:e}"
    );
    let worst = (1..=n)
        .map(|i| (momentum(&traj.states[i]) - demand[i]).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1.0, "{worst}");
}

#[test]
fn joint_ocp_has_eight_box_rows_per_stage() {
    let (sc, cluster) = models();
    let scenario = small_slew();
    let ocp = build_joint_ocp(&sc, &cluster, &scenario, &CostWeights::default(), 12).unwrap();
    for i in 0..12 {
        let rows: usize = ocp
            .polytopes
            .iter()
            .filter(|p| p.var == StageVar::Input(i))
            .map(|p| p.a.nrows())
            .sum();
        assert_eq!(rows, 8, "stage {i}");
    }
    let b = baseline_bang_bang(&sc, &cluster, &scenario).unwrap();
    let ocp = build_joint_ocp(
        &sc,
        &cluster,
        &scenario,
        &CostWeights::default(),
        scenario.horizon(b.inputs.len()),
    )
    .unwrap();
    let guess = joint_guess(&ocp, &b).unwrap();
    assert_eq!(guess.horizon(), ocp.horizon);
    assert!(guess.horizon() >= b.inputs.len());
}

#[test]
fn optimized_rates_respect_the_gimbal_limit() {
    let (sc, cluster) = models();
    let scenario = small_slew();
    let weights = CostWeights::default();
    let mut settings = SolverSettings::default();
    settings.limits.max_outer = 4;
    let b = baseline_bang_bang(&sc, &cluster, &scenario).unwrap();
    let joint = solve_joint(&sc, &cluster, &scenario, &weights, &b, &settings).unwrap();
    let seq = solve_sequential(&sc, &cluster, &scenario, &weights, &b, &settings, 2).unwrap();
    for r in [&b, &joint, &seq] {
        let worst = r.inputs.iter().map(|u| u.amax()).fold(0.0, f64::max);
        assert!(
            worst <= cluster.gimbal_rate_max + 1e-9,
            "{:?}: {worst}",
            r.method
        );
    }
    for round in &seq.rounds {
        assert!(round.envelope_peak <= 1.0 + 1e-6, "{}", round.envelope_peak);
    }
}

#[test]
fn warm_start_at_the_optimum_stops_after_one_pass() {
    let (sc, cluster) = models();
    // a 1° offset from the target, settled by a short horizon
    let start = SlewScenario {
        delta_theta: 1f64.to_radians(),
        ..SlewScenario::default()
    };
    let weights = CostWeights::default();
    let ocp = build_joint_ocp(&sc, &cluster, &start, &weights, 30).unwrap();
    let guess = ocp.rollout(&vec![DVector::zeros(4); 30]).unwrap();
    let settings = SolverSettings::default();
    let limits = settings.limits.clone();
    let (opt, first) = scp_solve(&ocp, &guess, settings.trust_region, &limits).unwrap();
    assert!(first.converged(), "{:?}", first.status);
    let (again, report) = scp_solve(&ocp, &opt, settings.trust_region, &limits).unwrap();
    assert_eq!(report.outer_iterations, 1);
    assert!(report.final_progress < limits.epsilon);
    let shift = again
        .inputs
        .iter()
        .zip(&opt.inputs)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    assert!(shift < 1e-4, "{shift}");
}
