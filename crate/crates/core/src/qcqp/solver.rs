use std::time::Instant;

use nalgebra::DVector;

use super::kkt::{max_step, KktSystem, FRACTION_TO_BOUNDARY};
use super::{
    kkt_residuals, residual_vectors, validate_problem, IpmIterate, IterationRecord, KktResiduals,
    QcqpError, QcqpProblem, QcqpSolution, SolveStatus,
};

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub warm_start: Option<DVector<f64>>,
    /// Skip the PSD check; for callers that build convex problems by construction.
    pub skip_validation: bool,
    /// Record per-iteration statistics in [`QcqpSolution::trace`].
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            warm_start: None,
            skip_validation: false,
            record_trace: false,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_warm_start(mut self, x: DVector<f64>) -> Self {
        self.warm_start = Some(x);
        self
    }
}

const GAP_REDUCTION: f64 = 0.9;
const SIGMA_FLOOR: f64 = 0.5;
/// Target ratio between `μ / μ₀` and the infeasibility ratio `r / r₀`; while
/// the gap runs ahead of it, centering is held at `SIGMA_FLOOR`.
const NEIGHBORHOOD: f64 = 0.2;

fn gap_after(it: &IpmIterate, dir: &super::Direction) -> f64 {
    let a = max_step(it, dir, FRACTION_TO_BOUNDARY);
    let s = &it.s + &dir.ds * a;
    let mu = &it.mu + &dir.dmu * a;
    s.dot(&mu) / s.len() as f64
}

fn initial_iterate(p: &QcqpProblem, opts: &SolveOptions) -> IpmIterate {
    let x = match &opts.warm_start {
        Some(x) if x.len() == p.n => x.clone(),
        _ => DVector::zeros(p.n),
    };
    let defect = p.stacked_bound() - p.constraint_values(&x);
    let s = defect.map(|d| d.max(1.0));
    IpmIterate {
        x,
        s,
        mu: DVector::from_element(p.n_ineq(), 1.0),
        lambda: DVector::zeros(p.n_eq()),
        tau: 1.0,
    }
}

fn converged(r: &KktResiduals, it: &IpmIterate, tol: f64) -> bool {
    r.all_below(tol) && it.duality_measure() <= tol
}

struct Outcome {
    status: SolveStatus,
    iterations: usize,
    trace: Vec<IterationRecord>,
}

fn finish(p: &QcqpProblem, it: IpmIterate, out: Outcome, tol: f64, start: Instant) -> QcqpSolution {
    let Outcome {
        status,
        iterations,
        trace,
    } = out;
    // The reported status is re-derived from a fresh residual evaluation.
    let residuals = kkt_residuals(p, &it).expect("iterate shaped by solver");
    let status = if converged(&residuals, &it, tol) {
        SolveStatus::Optimal
    } else if status == SolveStatus::Optimal {
        SolveStatus::NumericalFailure
    } else {
        status
    };
    QcqpSolution {
        objective: p.objective(&it.x),
        x: it.x,
        s: it.s,
        mu: it.mu,
        lambda: it.lambda,
        status,
        iterations,
        residuals,
        solve_time: start.elapsed().as_secs_f64(),
        trace,
    }
}

/// Mehrotra predictor-corrector interior-point method.
///
/// Each iteration computes the affine direction (`τ = 0`), sets the
/// centering parameter `σ = (μ_aff / μ)³`, and solves once more with the
/// second-order corrected complementarity target `σμ 1 - ΔS_aff Δμ_aff`.
/// Both solves reuse one factorization.
pub fn solve_qcqp(p: &QcqpProblem, opts: &SolveOptions) -> Result<QcqpSolution, QcqpError> {
    let start = Instant::now();
    if !opts.skip_validation {
        validate_problem(p)?;
    }
    let tol = opts.tol;
    let m = p.n_ineq();
    let mut it = initial_iterate(p, opts);
    let mut kkt = KktSystem::new(p);

    let mut best = it.clone();
    let mut best_merit = f64::INFINITY;
    let mut tiny_steps = 0;
    let mut primal_history: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut initial_infeasibility = None;
    let gap0 = it.duality_measure().max(f64::MIN_POSITIVE);

    for iter in 0..opts.max_iter {
        let res = residual_vectors(p, &it);
        let norms = kkt_residuals(p, &it)?;
        let merit = norms.max().max(it.duality_measure());
        if merit < best_merit {
            best_merit = merit;
            best = it.clone();
        }
        if converged(&norms, &it, tol) {
            return Ok(finish(
                p,
                it,
                Outcome {
                    status: SolveStatus::Optimal,
                    iterations: iter,
                    trace,
                },
                tol,
                start,
            ));
        }
        let infeasibility = norms
            .stationarity
            .max(norms.eq_feasibility)
            .max(norms.ineq_feasibility);
        let r0 = *initial_infeasibility.get_or_insert(infeasibility.max(f64::MIN_POSITIVE));
        primal_history.push(norms.eq_feasibility.max(norms.ineq_feasibility));
        if infeasibility_suspected(&it, &primal_history) {
            return Ok(finish(
                p,
                best,
                Outcome {
                    status: SolveStatus::InfeasibleDetected,
                    iterations: iter,
                    trace,
                },
                tol,
                start,
            ));
        }

        if kkt.factorize(p, &it).is_err() {
            return Ok(finish(
                p,
                best,
                Outcome {
                    status: SolveStatus::NumericalFailure,
                    iterations: iter,
                    trace,
                },
                tol,
                start,
            ));
        }

        let sm = it.s.component_mul(&it.mu);
        let dir = if m == 0 {
            kkt.direction(p, &it, &res, &sm)
        } else {
            let gap = it.duality_measure();
            let aff = kkt.direction(p, &it, &res, &sm);
            let a_aff = max_step(&it, &aff, 1.0);
            let s_aff = &it.s + &aff.ds * a_aff;
            let mu_aff = &it.mu + &aff.dmu * a_aff;
            let gap_aff = s_aff.dot(&mu_aff) / m as f64;
            // Keep some centering while the residuals lag behind the gap,
            // otherwise complementarity can collapse before feasibility.
            let ratio = (infeasibility / r0).min(1.0);
            let floor = (NEIGHBORHOOD * ratio * gap0 / gap).max(ratio).min(1.0) * SIGMA_FLOOR;
            let sigma = (gap_aff / gap).powi(3).clamp(floor, 1.0);
            it.tau = sigma * gap;
            let rc = &sm + aff.ds.component_mul(&aff.dmu) - DVector::from_element(m, sigma * gap);
            let corrected = kkt.direction(p, &it, &res, &rc);
            if gap_after(&it, &corrected) <= GAP_REDUCTION.max(sigma) * gap {
                corrected
            } else {
                // The second-order term can point the gap upward; fall back to
                // plain centered directions and keep whichever reduces it most.
                // Score each candidate by the slower of gap and infeasibility
                // reduction so a tiny step cannot win on gap alone.
                let score = |it: &IpmIterate, d: &super::Direction| {
                    let a = max_step(it, d, FRACTION_TO_BOUNDARY);
                    (gap_after(it, d) / gap).max(1.0 - a)
                };
                let mut best_score = score(&it, &corrected);
                let mut best_dir = corrected;
                for sig in [0.1, 0.3, 0.5, 0.7, 0.9]
                    .into_iter()
                    .filter(|&sig| sig >= floor)
                {
                    let rc = sm.add_scalar(-sig * gap);
                    let d = kkt.direction(p, &it, &res, &rc);
                    let sc = score(&it, &d);
                    if sc < best_score {
                        best_score = sc;
                        best_dir = d;
                        it.tau = sig * gap;
                    }
                    if best_score <= GAP_REDUCTION {
                        break;
                    }
                }
                best_dir
            }
        };

        let alpha = if m == 0 {
            1.0
        } else {
            max_step(&it, &dir, FRACTION_TO_BOUNDARY)
        };
        if ![&dir.dx, &dir.ds, &dir.dmu, &dir.dlambda]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
        {
            return Ok(finish(
                p,
                best,
                Outcome {
                    status: SolveStatus::NumericalFailure,
                    iterations: iter,
                    trace,
                },
                tol,
                start,
            ));
        }
        tiny_steps = if alpha < 1e-12 { tiny_steps + 1 } else { 0 };
        if tiny_steps >= 5 {
            return Ok(finish(
                p,
                best,
                Outcome {
                    status: SolveStatus::NumericalFailure,
                    iterations: iter,
                    trace,
                },
                tol,
                start,
            ));
        }
        if opts.record_trace {
            trace.push(IterationRecord {
                duality_measure: it.duality_measure(),
                step: alpha,
                residual: norms.max(),
                regularization: kkt.regularization,
                min_slack: it.s.min(),
                min_multiplier: it.mu.min(),
            });
        }
        it.x += &dir.dx * alpha;
        it.s += &dir.ds * alpha;
        it.mu += &dir.dmu * alpha;
        it.lambda += &dir.dlambda * alpha;
    }

    let norms = kkt_residuals(p, &it)?;
    let last = if converged(&norms, &it, tol) {
        it
    } else if norms.max().max(it.duality_measure()) < best_merit {
        it
    } else {
        best
    };
    Ok(finish(
        p,
        last,
        Outcome {
            status: SolveStatus::MaxIterations,
            iterations: opts.max_iter,
            trace,
        },
        tol,
        start,
    ))
}

// Diverging multipliers while primal infeasibility stalls.
fn infeasibility_suspected(it: &IpmIterate, primal: &[f64]) -> bool {
    const WINDOW: usize = 10;
    if primal.len() <= 2 * WINDOW {
        return false;
    }
    let dual_size = it.mu.amax().max(it.lambda.amax());
    let now = primal[primal.len() - 1];
    let before = primal[primal.len() - 1 - WINDOW];
    dual_size > 1e10 && now > 1e-6 && now > 0.9 * before
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;
    use crate::qcqp::QuadConstraint;

    #[test]
    fn scalar_unconstrained() {
        let p = QcqpProblem::unconstrained(CsrMatrix::identity(1), DVector::from_vec(vec![-1.0]));
        let sol = solve_qcqp(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_objective_over_disc() {
        let p =
            QcqpProblem::unconstrained(CsrMatrix::zeros(2, 2), DVector::from_vec(vec![-1.0, -1.0]))
                .with_quadratic(QuadConstraint::new(
                    CsrMatrix::identity(2),
                    DVector::zeros(2),
                ));
        let sol = solve_qcqp(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{:?}", sol.residuals);
        assert!(
            (sol.x[0] - 1.0).abs() < 1e-7 && (sol.x[1] - 1.0).abs() < 1e-7,
            "{}",
            sol.x
        );
    }

    #[test]
    fn infeasible_box_is_not_reported_optimal() {
        // x ≤ -1 and -x ≤ -1
        let p = QcqpProblem::unconstrained(CsrMatrix::identity(1), DVector::zeros(1))
            .with_inequalities(
                CsrMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, -1.0)]),
                DVector::from_vec(vec![-1.0, -1.0]),
            );
        let sol = solve_qcqp(&p, &SolveOptions::default()).unwrap();
        assert_ne!(sol.status, SolveStatus::Optimal);
    }

    #[test]
    fn warm_start_at_solution_finishes_quickly() {
        let p =
            QcqpProblem::unconstrained(CsrMatrix::identity(2), DVector::from_vec(vec![-1.0, 2.0]))
                .with_equalities(
                    CsrMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]),
                    DVector::from_vec(vec![0.0]),
                );
        let cold = solve_qcqp(&p, &SolveOptions::default()).unwrap();
        let warm =
            solve_qcqp(&p, &SolveOptions::default().with_warm_start(cold.x.clone())).unwrap();
        assert_eq!(warm.status, SolveStatus::Optimal);
        assert!(warm.iterations <= cold.iterations);
    }
}
