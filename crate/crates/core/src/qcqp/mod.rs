//! Primal-dual interior-point solver for convex QCQPs of the form
//!
//! ```text
//! minimize    ½ xᵀHx + cᵀx
//! subject to  A_eq x = b_eq
//!             A_ineq x ≤ b_ineq
//!             ½ (x - x_c,i)ᵀQ_i(x - x_c,i) + q_iᵀ(x - x_c,i) ≤ 1,   i = 1..n_q
//! ```
//!
//! Inequalities are turned into equalities with nonnegative slacks `s`; the
//! stacked inequality map is `g(x) = [A_ineq x; quadratic rows]` with bound
//! `b̄ = [b_ineq; 1]`.

mod io;
mod kkt;
mod solver;

pub use io::{read_problem, write_problem, DocumentError, ProblemDocument, SolutionDocument};
pub use kkt::{fraction_to_boundary, newton_step, Direction, FRACTION_TO_BOUNDARY};
pub use solver::{solve_qcqp, SolveOptions};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{min_eigenvalue, CsrMatrix, SparseVec};

/// Smallest eigenvalue tolerated for matrices that must be PSD.
pub const PSD_TOLERANCE: f64 = -1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadConstraint {
    pub hessian: CsrMatrix,
    pub linear: DVector<f64>,
    pub center: Option<DVector<f64>>,
}

impl QuadConstraint {
    pub fn new(hessian: CsrMatrix, linear: DVector<f64>) -> Self {
        Self {
            hessian,
            linear,
            center: None,
        }
    }

    pub fn centered(hessian: CsrMatrix, linear: DVector<f64>, center: DVector<f64>) -> Self {
        Self {
            hessian,
            linear,
            center: Some(center),
        }
    }

    fn shifted(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.center {
            Some(c) => x - c,
            None => x.clone(),
        }
    }

    /// `½ yᵀQy + qᵀy` with `y = x - center`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let y = self.shifted(x);
        0.5 * self.hessian.quad_form(&y) + self.linear.dot(&y)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let y = self.shifted(x);
        self.hessian.mul_vec(&y) + &self.linear
    }

    /// Indices where the gradient can be nonzero.
    pub(crate) fn support(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .hessian
            .triplets()
            .flat_map(|(r, c, _)| [r, c])
            .collect();
        idx.extend(
            self.linear
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i),
        );
        idx.sort_unstable();
        idx.dedup();
        idx
    }

    pub(crate) fn sparse_gradient(&self, x: &DVector<f64>, support: &[usize]) -> SparseVec {
        let y = self.shifted(x);
        let values = support
            .iter()
            .map(|&i| self.hessian.row_dot(i, &y) + self.linear[i])
            .collect();
        SparseVec {
            indices: support.to_vec(),
            values,
        }
    }
}

/// Convex QCQP data. Matrices are stored sparse; H and every Q_i use full
/// symmetric storage.
#[derive(Clone, Debug, PartialEq)]
pub struct QcqpProblem {
    pub n: usize,
    pub h: CsrMatrix,
    pub c: DVector<f64>,
    pub a_eq: CsrMatrix,
    pub b_eq: DVector<f64>,
    pub a_ineq: CsrMatrix,
    pub b_ineq: DVector<f64>,
    pub quad: Vec<QuadConstraint>,
}

impl QcqpProblem {
    /// Unconstrained problem `min ½xᵀHx + cᵀx`.
    pub fn unconstrained(h: CsrMatrix, c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            n,
            h,
            c,
            a_eq: CsrMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ineq: CsrMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
            quad: Vec::new(),
        }
    }

    pub fn with_equalities(mut self, a: CsrMatrix, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: CsrMatrix, b: DVector<f64>) -> Self {
        self.a_ineq = a;
        self.b_ineq = b;
        self
    }

    pub fn with_quadratic(mut self, q: QuadConstraint) -> Self {
        self.quad.push(q);
        self
    }

    pub fn n_eq(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn n_lin(&self) -> usize {
        self.a_ineq.nrows()
    }

    /// Total inequality rows, linear plus quadratic.
    pub fn n_ineq(&self) -> usize {
        self.a_ineq.nrows() + self.quad.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.h.quad_form(x) + self.c.dot(x)
    }

    /// Stacked inequality map `g(x)`.
    pub fn constraint_values(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_ineq());
        let lin = self.a_ineq.mul_vec(x);
        g.rows_mut(0, self.n_lin()).copy_from(&lin);
        for (k, q) in self.quad.iter().enumerate() {
            g[self.n_lin() + k] = q.value(x);
        }
        g
    }

    /// Stacked bound `b̄ = [b_ineq; 1]`.
    pub fn stacked_bound(&self) -> DVector<f64> {
        let mut b = DVector::from_element(self.n_ineq(), 1.0);
        b.rows_mut(0, self.n_lin()).copy_from(&self.b_ineq);
        b
    }

    /// `∇g(x)ᵀ v`.
    pub fn constraint_jacobian_tr_mul(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self
            .a_ineq
            .tr_mul_vec(&v.rows(0, self.n_lin()).into_owned());
        for (k, q) in self.quad.iter().enumerate() {
            let w = v[self.n_lin() + k];
            if w != 0.0 {
                out += q.gradient(x) * w;
            }
        }
        out
    }

    fn dimension_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.n;
        let mut check = |ok: bool, what: &str| {
            if !ok {
                out.push(Violation::DimensionMismatch(what.to_string()));
            }
        };
        check(self.c.len() == n, "c");
        check(self.h.nrows() == n && self.h.ncols() == n, "H");
        check(self.a_eq.ncols() == n, "A_eq");
        check(self.a_eq.nrows() == self.b_eq.len(), "b_eq");
        check(self.a_ineq.ncols() == n, "A_ineq");
        check(self.a_ineq.nrows() == self.b_ineq.len(), "b_ineq");
        for (i, q) in self.quad.iter().enumerate() {
            check(
                q.hessian.nrows() == n && q.hessian.ncols() == n,
                &format!("quad[{i}].Q"),
            );
            check(q.linear.len() == n, &format!("quad[{i}].q"));
            if let Some(c) = &q.center {
                check(c.len() == n, &format!("quad[{i}].center"));
            }
        }
        out
    }
}

/// One problem defect found by [`validate_problem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    DimensionMismatch(String),
    NotSymmetric { matrix: String, asymmetry: f64 },
    NotPositiveSemidefinite { matrix: String, min_eigenvalue: f64 },
    NonFinite(String),
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DimensionMismatch(what) => write!(f, "dimension mismatch in {what}"),
            Violation::NotSymmetric { matrix, asymmetry } => {
                write!(
                    f,
                    "{matrix} is not symmetric (max |a_ij - a_ji| = {asymmetry:e})"
                )
            }
            Violation::NotPositiveSemidefinite {
                matrix,
                min_eigenvalue,
            } => write!(
                f,
                "{matrix} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})"
            ),
            Violation::NonFinite(what) => write!(f, "{what} contains non-finite entries"),
        }
    }
}

#[derive(Debug, Error)]
pub enum QcqpError {
    #[error("invalid problem: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("iterate dimensions do not match the problem")]
    DimensionMismatch,
    #[error("KKT matrix factorization broke down at row {0}")]
    SingularKktMatrix(usize),
}

/// Checks dimensions, finiteness, symmetry and convexity.
pub fn validate_problem(p: &QcqpProblem) -> Result<&QcqpProblem, QcqpError> {
    let mut violations = p.dimension_violations();
    if !violations.is_empty() {
        return Err(QcqpError::Invalid(violations));
    }
    let finite = [
        ("H", p.h.is_finite()),
        ("c", p.c.iter().all(|v| v.is_finite())),
        ("A_eq", p.a_eq.is_finite()),
        ("b_eq", p.b_eq.iter().all(|v| v.is_finite())),
        ("A_ineq", p.a_ineq.is_finite()),
        ("b_ineq", p.b_ineq.iter().all(|v| v.is_finite())),
    ];
    for (name, ok) in finite {
        if !ok {
            violations.push(Violation::NonFinite(name.into()));
        }
    }
    let mut psd = |m: &CsrMatrix, name: String| {
        if !m.is_finite() {
            violations.push(Violation::NonFinite(name));
            return;
        }
        let asym = m.asymmetry().unwrap_or(0.0);
        if asym > 1e-9 * (1.0 + m.max_abs()) {
            violations.push(Violation::NotSymmetric {
                matrix: name,
                asymmetry: asym,
            });
            return;
        }
        let lmin = min_eigenvalue(m);
        if lmin < PSD_TOLERANCE {
            violations.push(Violation::NotPositiveSemidefinite {
                matrix: name,
                min_eigenvalue: lmin,
            });
        }
    };
    psd(&p.h, "H".into());
    for (i, q) in p.quad.iter().enumerate() {
        psd(&q.hessian, format!("quad[{i}].Q"));
    }
    if violations.is_empty() {
        Ok(p)
    } else {
        Err(QcqpError::Invalid(violations))
    }
}

/// Primal-dual point of the slack-augmented problem.
#[derive(Clone, Debug, PartialEq)]
pub struct IpmIterate {
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub mu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub tau: f64,
}

impl IpmIterate {
    pub fn matches(&self, p: &QcqpProblem) -> bool {
        self.x.len() == p.n
            && self.s.len() == p.n_ineq()
            && self.mu.len() == p.n_ineq()
            && self.lambda.len() == p.n_eq()
    }

    pub fn is_interior(&self) -> bool {
        self.s.iter().all(|&v| v > 0.0) && self.mu.iter().all(|&v| v > 0.0)
    }

    /// `sᵀμ / m`, zero without inequalities.
    pub fn duality_measure(&self) -> f64 {
        if self.s.is_empty() {
            0.0
        } else {
            self.s.dot(&self.mu) / self.s.len() as f64
        }
    }
}

/// Max-norms of the four KKT residual blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub eq_feasibility: f64,
    pub ineq_feasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.eq_feasibility)
            .max(self.ineq_feasibility)
            .max(self.complementarity)
    }

    pub fn all_below(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Residual vectors (not norms) used by the Newton step.
pub(crate) struct ResidualVectors {
    pub dual: DVector<f64>,
    pub eq: DVector<f64>,
    pub ineq: DVector<f64>,
}

pub(crate) fn residual_vectors(p: &QcqpProblem, it: &IpmIterate) -> ResidualVectors {
    let dual = p.h.mul_vec(&it.x)
        + &p.c
        + p.constraint_jacobian_tr_mul(&it.x, &it.mu)
        + p.a_eq.tr_mul_vec(&it.lambda);
    let eq = p.a_eq.mul_vec(&it.x) - &p.b_eq;
    let ineq = p.constraint_values(&it.x) + &it.s - p.stacked_bound();
    ResidualVectors { dual, eq, ineq }
}

/// Stationarity `Hx + c + ∇g(x)ᵀμ + A_eqᵀλ`, equality defect, inequality
/// defect `g(x) + s - b̄`, and complementarity `s ∘ μ`, as max-norms.
pub fn kkt_residuals(p: &QcqpProblem, it: &IpmIterate) -> Result<KktResiduals, QcqpError> {
    if !it.matches(p) {
        return Err(QcqpError::DimensionMismatch);
    }
    let r = residual_vectors(p, it);
    Ok(KktResiduals {
        stationarity: inf_norm(&r.dual),
        eq_feasibility: inf_norm(&r.eq),
        ineq_feasibility: inf_norm(&r.ineq),
        complementarity: inf_norm(&it.s.component_mul(&it.mu)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
    InfeasibleDetected,
}

#[derive(Clone, Debug)]
pub struct QcqpSolution {
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub mu: DVector<f64>,
    pub lambda: DVector<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub objective: f64,
    pub solve_time: f64,
    pub trace: Vec<IterationRecord>,
}

/// Statistics of one interior-point iteration, taken before its step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub duality_measure: f64,
    pub step: f64,
    pub residual: f64,
    pub regularization: f64,
    pub min_slack: f64,
    pub min_multiplier: f64,
}

impl QcqpSolution {
    pub fn iterate(&self) -> IpmIterate {
        IpmIterate {
            x: self.x.clone(),
            s: self.s.clone(),
            mu: self.mu.clone(),
            lambda: self.lambda.clone(),
            tau: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense(r: usize, c: usize, v: &[f64]) -> CsrMatrix {
        CsrMatrix::from_dense(&DMatrix::from_row_slice(r, c, v))
    }

    #[test]
    fn identity_cost_is_accepted() {
        let p = QcqpProblem::unconstrained(CsrMatrix::identity(2), DVector::zeros(2));
        assert!(validate_problem(&p).is_ok());
    }

    #[test]
    fn indefinite_quadratic_is_rejected() {
        let p =
            QcqpProblem::unconstrained(CsrMatrix::identity(2), DVector::zeros(2)).with_quadratic(
                QuadConstraint::new(CsrMatrix::from_diagonal(&[1.0, -1.0]), DVector::zeros(2)),
            );
        match validate_problem(&p) {
            Err(QcqpError::Invalid(v)) => assert!(matches!(
                &v[0],
                Violation::NotPositiveSemidefinite { matrix, min_eigenvalue } if matrix == "quad[0].Q" && (*min_eigenvalue + 1.0).abs() < 1e-12
            )),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_is_a_dimension_mismatch() {
        let p = QcqpProblem::unconstrained(CsrMatrix::identity(2), DVector::zeros(2))
            .with_equalities(dense(1, 3, &[1.0, 1.0, 1.0]), DVector::from_vec(vec![1.0]));
        match validate_problem(&p) {
            Err(QcqpError::Invalid(v)) => {
                assert_eq!(v, vec![Violation::DimensionMismatch("A_eq".into())])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unconstrained_stationarity_vanishes_at_minimizer() {
        let p = QcqpProblem::unconstrained(CsrMatrix::identity(1), DVector::from_vec(vec![-1.0]));
        let it = IpmIterate {
            x: DVector::from_vec(vec![1.0]),
            s: DVector::zeros(0),
            mu: DVector::zeros(0),
            lambda: DVector::zeros(0),
            tau: 0.0,
        };
        assert_eq!(kkt_residuals(&p, &it).unwrap().stationarity, 0.0);
    }

    #[test]
    fn analytic_kkt_point_of_disc_problem() {
        // min -x1 - x2  s.t. ½|x|² ≤ 1  at x = (1, 1), μ = 1, s = 0
        let p =
            QcqpProblem::unconstrained(CsrMatrix::zeros(2, 2), DVector::from_vec(vec![-1.0, -1.0]))
                .with_quadratic(QuadConstraint::new(
                    CsrMatrix::identity(2),
                    DVector::zeros(2),
                ));
        let it = IpmIterate {
            x: DVector::from_vec(vec![1.0, 1.0]),
            s: DVector::from_vec(vec![0.0]),
            mu: DVector::from_vec(vec![1.0]),
            lambda: DVector::zeros(0),
            tau: 0.0,
        };
        let r = kkt_residuals(&p, &it).unwrap();
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn centered_constraint_shifts_argument() {
        let q = QuadConstraint::centered(
            CsrMatrix::identity(1),
            DVector::zeros(1),
            DVector::from_vec(vec![2.0]),
        );
        assert_eq!(q.value(&DVector::from_vec(vec![3.0])), 0.5);
        assert_eq!(q.gradient(&DVector::from_vec(vec![3.0]))[0], 1.0);
    }

    #[test]
    fn mismatched_iterate_is_rejected() {
        let p = QcqpProblem::unconstrained(CsrMatrix::identity(2), DVector::zeros(2));
        let it = IpmIterate {
            x: DVector::zeros(3),
            s: DVector::zeros(0),
            mu: DVector::zeros(0),
            lambda: DVector::zeros(0),
            tau: 0.0,
        };
        assert!(matches!(
            kkt_residuals(&p, &it),
            Err(QcqpError::DimensionMismatch)
        ));
    }
}
