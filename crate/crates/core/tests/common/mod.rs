#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slewopt::linalg::CsrMatrix;
use slewopt::{QcqpProblem, QuadConstraint};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Strictly convex QP with a strictly feasible point, so the optimum exists.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m_in: usize, m_eq: usize) -> QcqpProblem {
    random_qp_with_point(rng, n, m_in, m_eq).0
}

/// Like [`random_qp`], also returning the strictly feasible point.
pub fn random_qp_with_point(
    rng: &mut ChaCha8Rng,
    n: usize,
    m_in: usize,
    m_eq: usize,
) -> (QcqpProblem, DVector<f64>) {
    let g = random_matrix(rng, n, n);
    let h = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
    let c = random_vector(rng, n) * 2.0;
    let x0 = random_vector(rng, n);
    let a = random_matrix(rng, m_in, n);
    let b = &a * &x0 + DVector::from_fn(m_in, |_, _| rng.random_range(0.05..1.0));
    let ae = random_matrix(rng, m_eq, n);
    let be = &ae * &x0;
    let p = QcqpProblem::unconstrained(CsrMatrix::from_dense(&h), c)
        .with_inequalities(CsrMatrix::from_dense(&a), b)
        .with_equalities(CsrMatrix::from_dense(&ae), be);
    (p, x0)
}

/// Random convex QCQP: QP plus `n_q` ellipsoidal constraints containing x0.
pub fn random_qcqp(
    rng: &mut ChaCha8Rng,
    n: usize,
    m_in: usize,
    m_eq: usize,
    n_q: usize,
) -> QcqpProblem {
    let (mut p, x0) = random_qp_with_point(rng, n, m_in, m_eq);
    for _ in 0..n_q {
        let g = random_matrix(rng, n, n);
        let q = &g * g.transpose() + DMatrix::identity(n, n) * 0.5;
        let center = &x0 + random_vector(rng, n) * 0.3;
        let lin = random_vector(rng, n) * 0.1;
        // scale so that x0 sits at half the level set
        let y = &x0 - &center;
        let level = 0.5 * y.dot(&(&q * &y)) + lin.dot(&y);
        let scale = if level > 0.0 { 0.5 / level } else { 1.0 };
        p.quad.push(QuadConstraint::centered(
            CsrMatrix::from_dense(&(q * scale)),
            lin * scale,
            center,
        ));
    }
    p
}

/// Active-set enumeration for strictly convex QPs with affine constraints.
///
/// For every subset of inequality rows, solve the equality-constrained QP
/// with those rows active; keep primal-feasible candidates and return the
/// one with the smallest objective.
pub fn enumerate_active_sets(p: &QcqpProblem) -> (DVector<f64>, f64) {
    let n = p.n;
    let h = p.h.to_dense();
    let a_in = p.a_ineq.to_dense();
    let a_eq = p.a_eq.to_dense();
    let m = a_in.nrows();
    assert!(m <= 16);
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = a_eq.nrows() + active.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        rhs.rows_mut(0, n).copy_from(&(-&p.c));
        let mut row = n;
        for r in 0..a_eq.nrows() {
            for j in 0..n {
                kkt[(row, j)] = a_eq[(r, j)];
                kkt[(j, row)] = a_eq[(r, j)];
            }
            rhs[row] = p.b_eq[r];
            row += 1;
        }
        for &r in &active {
            for j in 0..n {
                kkt[(row, j)] = a_in[(r, j)];
                kkt[(j, row)] = a_in[(r, j)];
            }
            rhs[row] = p.b_ineq[r];
            row += 1;
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let feasible = (&a_in * &x - &p.b_ineq).iter().all(|&v| v <= 1e-9);
        if !feasible {
            continue;
        }
        let f = p.objective(&x);
        if best.as_ref().map_or(true, |(_, fb)| f < *fb) {
            best = Some((x, f));
        }
    }
    best.expect("feasible by construction")
}

/// Direct dense evaluation of the KKT residual blocks.
pub fn dense_residuals(
    p: &QcqpProblem,
    x: &DVector<f64>,
    s: &DVector<f64>,
    mu: &DVector<f64>,
    lambda: &DVector<f64>,
) -> [f64; 4] {
    let h = p.h.to_dense();
    let a_in = p.a_ineq.to_dense();
    let a_eq = p.a_eq.to_dense();
    let m_lin = a_in.nrows();
    let mut stat = &h * x + &p.c + a_eq.transpose() * lambda;
    let mut ineq = DVector::zeros(s.len());
    for r in 0..m_lin {
        let row = a_in.row(r);
        stat += row.transpose() * mu[r];
        ineq[r] = (row * x)[0] + s[r] - p.b_ineq[r];
    }
    for (k, q) in p.quad.iter().enumerate() {
        let qd = q.hessian.to_dense();
        let y = match &q.center {
            Some(c) => x - c,
            None => x.clone(),
        };
        let grad = &qd * &y + &q.linear;
        stat += grad * mu[m_lin + k];
        ineq[m_lin + k] = 0.5 * y.dot(&(&qd * &y)) + q.linear.dot(&y) + s[m_lin + k] - 1.0;
    }
    let eq = &a_eq * x - &p.b_eq;
    let comp = s.component_mul(mu);
    [stat.amax(), eq.amax(), ineq.amax(), comp.amax()]
}
