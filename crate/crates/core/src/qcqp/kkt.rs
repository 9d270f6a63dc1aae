//! Newton system of the slack-augmented KKT conditions.
//!
//! The full system in `(Δx, Δs, Δμ, Δλ)` is reduced by eliminating `Δs` and
//! `Δμ`, leaving the quasi-definite system
//!
//! ```text
//! [ W + ∇gᵀ S⁻¹ Z ∇g   A_eqᵀ ] [Δx]   [ -r_d + ∇gᵀ S⁻¹ (r_c - Z r_i) ]
//! [ A_eq               -δ I  ] [Δλ] = [ -r_e                          ]
//! ```
//!
//! with `W = H + Σ μ_q Q_q`. It is ordered by reverse Cuthill-McKee and
//! factorized in banded LDLᵀ form, then polished with iterative refinement
//! against the unregularized matrix.

use nalgebra::DVector;

use super::{residual_vectors, IpmIterate, QcqpError, QcqpProblem, ResidualVectors};
use crate::linalg::{reverse_cuthill_mckee, BandLdlt, Ordering, SparseVec, SymBand};

/// Fraction-to-boundary parameter η.
pub const FRACTION_TO_BOUNDARY: f64 = 0.995;

/// Static regularization on the equality block.
const EQ_REGULARIZATION: f64 = 1e-9;
/// Primal regularization schedule tried after a factorization breakdown.
const PRIMAL_REGULARIZATION: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
const REFINEMENT_STEPS: usize = 20;

/// Search direction of one Newton step.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub dx: DVector<f64>,
    pub ds: DVector<f64>,
    pub dmu: DVector<f64>,
    pub dlambda: DVector<f64>,
}

/// Largest `α ≤ 1` keeping `s + αΔs ≥ (1-η)s` and `μ + αΔμ ≥ (1-η)μ`.
pub fn fraction_to_boundary(it: &IpmIterate, dir: &Direction) -> f64 {
    max_step(it, dir, FRACTION_TO_BOUNDARY)
}

pub(crate) fn max_step(it: &IpmIterate, dir: &Direction, eta: f64) -> f64 {
    let mut alpha = 1.0f64;
    for (v, dv) in
        it.s.iter()
            .zip(dir.ds.iter())
            .chain(it.mu.iter().zip(dir.dmu.iter()))
    {
        if *dv < 0.0 {
            alpha = alpha.min(-eta * v / dv);
        }
    }
    alpha
}

/// Sparsity structure and factorization workspace, reused across iterations.
pub(crate) struct KktSystem {
    n: usize,
    m_eq: usize,
    ordering: Ordering,
    quad_support: Vec<Vec<usize>>,
    signs: Vec<f64>,
    exact: SymBand,
    factor: Option<BandLdlt>,
    grads: Vec<SparseVec>,
    pub regularization: f64,
}

impl KktSystem {
    pub fn new(p: &QcqpProblem) -> Self {
        let n = p.n;
        let m_eq = p.n_eq();
        let dim = n + m_eq;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
        let mut link = |a: usize, b: usize| {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        };
        for (r, c, _) in p.h.triplets() {
            link(r, c);
        }
        for r in 0..p.n_lin() {
            let (cols, _) = p.a_ineq.row(r);
            for (k, &a) in cols.iter().enumerate() {
                for &b in &cols[k + 1..] {
                    link(a, b);
                }
            }
        }
        let quad_support: Vec<Vec<usize>> = p.quad.iter().map(|q| q.support()).collect();
        for sup in &quad_support {
            for (k, &a) in sup.iter().enumerate() {
                for &b in &sup[k + 1..] {
                    link(a, b);
                }
            }
        }
        for (r, c, _) in p.a_eq.triplets() {
            link(n + r, c);
        }
        let ordering = reverse_cuthill_mckee(&adj);
        let mut signs = vec![1.0; dim];
        for i in n..dim {
            signs[ordering.inv[i]] = -1.0;
        }
        let exact = SymBand::zeros(dim, ordering.bandwidth);
        Self {
            n,
            m_eq,
            ordering,
            quad_support,
            signs,
            exact,
            factor: None,
            grads: Vec::new(),
            regularization: 0.0,
        }
    }

    /// Assembles and factorizes the reduced matrix at `it`.
    pub fn factorize(&mut self, p: &QcqpProblem, it: &IpmIterate) -> Result<(), QcqpError> {
        let inv = &self.ordering.inv;
        let n = self.n;
        self.grads = p
            .quad
            .iter()
            .zip(&self.quad_support)
            .map(|(q, sup)| q.sparse_gradient(&it.x, sup))
            .collect();

        let band = &mut self.exact;
        band.clear();
        for (r, c, v) in p.h.triplets() {
            if r >= c {
                band.add(inv[r], inv[c], v);
            }
        }
        let n_lin = p.n_lin();
        for (k, q) in p.quad.iter().enumerate() {
            let mu = it.mu[n_lin + k];
            for (r, c, v) in q.hessian.triplets() {
                if r >= c {
                    band.add(inv[r], inv[c], mu * v);
                }
            }
        }
        let mut add_outer = |idx: &[usize], vals: &[f64], w: f64| {
            for (a, (&i, &vi)) in idx.iter().zip(vals).enumerate() {
                let wi = w * vi;
                for (&j, &vj) in idx[..=a].iter().zip(&vals[..=a]) {
                    band.add(inv[i], inv[j], wi * vj);
                }
            }
        };
        for r in 0..n_lin {
            let (cols, vals) = p.a_ineq.row(r);
            add_outer(cols, vals, it.mu[r] / it.s[r]);
        }
        for (k, g) in self.grads.iter().enumerate() {
            let row = n_lin + k;
            add_outer(&g.indices, &g.values, it.mu[row] / it.s[row]);
        }
        for (r, c, v) in p.a_eq.triplets() {
            band.add(inv[n + r], inv[c], v);
        }

        for &rho in &PRIMAL_REGULARIZATION {
            let mut reg = self.exact.clone();
            for i in 0..n {
                reg.add(inv[i], inv[i], rho);
            }
            for i in 0..self.m_eq {
                reg.add(inv[n + i], inv[n + i], -EQ_REGULARIZATION);
            }
            match reg.ldlt(&self.signs) {
                Ok(f) => {
                    self.factor = Some(f);
                    self.regularization = rho;
                    return Ok(());
                }
                Err(row) => {
                    if rho == *PRIMAL_REGULARIZATION.last().unwrap() {
                        self.factor = None;
                        return Err(QcqpError::SingularKktMatrix(self.ordering.perm[row]));
                    }
                }
            }
        }
        unreachable!()
    }

    /// Solves the reduced system in original variable order, refining
    /// against the unregularized matrix.
    fn solve_reduced(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let factor = self.factor.as_ref().expect("factorize before solving");
        let perm = &self.ordering.perm;
        let permuted = DVector::from_iterator(rhs.len(), perm.iter().map(|&i| rhs[i]));
        let rhs_norm = permuted.amax().max(f64::MIN_POSITIVE);
        let mut sol = factor.solve(&permuted);
        let mut res = &permuted - self.exact.mul_vec(&sol);
        let mut res_norm = res.amax();
        for _ in 0..REFINEMENT_STEPS {
            if res_norm <= 1e-13 * rhs_norm {
                break;
            }
            let candidate = &sol + factor.solve(&res);
            let cand_res = &permuted - self.exact.mul_vec(&candidate);
            let cand_norm = cand_res.amax();
            if !(cand_norm < res_norm) {
                break;
            }
            sol = candidate;
            res = cand_res;
            res_norm = cand_norm;
        }
        let mut out = DVector::zeros(rhs.len());
        for (new, &old) in perm.iter().enumerate() {
            out[old] = sol[new];
        }
        out
    }

    /// Direction for complementarity residual `r_c` (target `s∘μ - r_c`).
    pub fn direction(
        &self,
        p: &QcqpProblem,
        it: &IpmIterate,
        res: &ResidualVectors,
        rc: &DVector<f64>,
    ) -> Direction {
        let n = self.n;
        let n_lin = p.n_lin();
        let m = p.n_ineq();
        // w = S⁻¹ (r_c - Z r_i)
        let w = DVector::from_iterator(
            m,
            (0..m).map(|i| (rc[i] - it.mu[i] * res.ineq[i]) / it.s[i]),
        );
        let mut top = -&res.dual + p.a_ineq.tr_mul_vec(&w.rows(0, n_lin).into_owned());
        for (k, g) in self.grads.iter().enumerate() {
            g.axpy_into(w[n_lin + k], &mut top);
        }
        let mut rhs = DVector::zeros(n + self.m_eq);
        rhs.rows_mut(0, n).copy_from(&top);
        rhs.rows_mut(n, self.m_eq).copy_from(&(-&res.eq));
        let sol = self.solve_reduced(&rhs);
        let dx = sol.rows(0, n).into_owned();
        let dlambda = sol.rows(n, self.m_eq).into_owned();

        let mut ds = -&res.ineq;
        for r in 0..n_lin {
            ds[r] -= p.a_ineq.row_dot(r, &dx);
        }
        for (k, g) in self.grads.iter().enumerate() {
            ds[n_lin + k] -= g.dot(&dx);
        }
        let dmu = DVector::from_iterator(m, (0..m).map(|i| (-rc[i] - it.mu[i] * ds[i]) / it.s[i]));
        Direction {
            dx,
            ds,
            dmu,
            dlambda,
        }
    }
}

/// Newton direction of the barrier-relaxed KKT system with complementarity
/// target `s ∘ μ = τ 1`.
pub fn newton_step(
    p: &QcqpProblem,
    it: &IpmIterate,
    tau_target: f64,
) -> Result<Direction, QcqpError> {
    if !it.matches(p) {
        return Err(QcqpError::DimensionMismatch);
    }
    let mut kkt = KktSystem::new(p);
    kkt.factorize(p, it)?;
    let res = residual_vectors(p, it);
    let rc = it.s.component_mul(&it.mu).add_scalar(-tau_target);
    Ok(kkt.direction(p, it, &res, &rc))
}
