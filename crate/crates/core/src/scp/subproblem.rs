use nalgebra::{DMatrix, DVector};

use super::{Linearization, OcpProblem, ScpError, StageVar, Trajectory, TrustRegion};
use crate::linalg::CsrMatrix;
use crate::qcqp::{QcqpProblem, QuadConstraint};

/// Layout of the stacked, scaled decision vector
/// `z = (x̃_1 … x̃_N, ũ_0 … ũ_{N-1}, γ)` with `x = D_x x̃`, `u = D_u ũ`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexMap {
    pub horizon: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub n_s: usize,
    pub state_scale: DVector<f64>,
    pub input_scale: DVector<f64>,
}

impl IndexMap {
    pub fn new(ocp: &OcpProblem) -> Self {
        Self {
            horizon: ocp.horizon,
            n_x: ocp.n_x,
            n_u: ocp.n_u,
            n_s: ocp.n_s,
            state_scale: ocp.state_scale.clone(),
            input_scale: ocp.input_scale.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.horizon * (self.n_x + self.n_u) + self.n_s
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First column of `x̃_i`, `i = 1..=N`.
    pub fn state(&self, i: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.horizon);
        (i - 1) * self.n_x
    }

    pub fn input(&self, i: usize) -> usize {
        debug_assert!(i < self.horizon);
        self.horizon * self.n_x + i * self.n_u
    }

    pub fn slack(&self, k: usize) -> usize {
        self.horizon * (self.n_x + self.n_u) + k
    }

    fn var(&self, v: StageVar) -> (usize, &DVector<f64>) {
        match v {
            StageVar::State(i) => (self.state(i), &self.state_scale),
            StageVar::Input(i) => (self.input(i), &self.input_scale),
        }
    }

    pub fn stack(&self, traj: &Trajectory, gamma: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.len());
        for i in 1..=self.horizon {
            z.rows_mut(self.state(i), self.n_x)
                .copy_from(&traj.states[i].component_div(&self.state_scale));
        }
        for i in 0..self.horizon {
            z.rows_mut(self.input(i), self.n_u)
                .copy_from(&traj.inputs[i].component_div(&self.input_scale));
        }
        z.rows_mut(self.slack(0), self.n_s).copy_from(gamma);
        z
    }

    /// Inverse of [`IndexMap::stack`]; `x_0` is supplied by the caller.
    pub fn unstack(&self, z: &DVector<f64>, x0: &DVector<f64>) -> (Trajectory, DVector<f64>) {
        let mut states = vec![x0.clone()];
        for i in 1..=self.horizon {
            states.push(
                z.rows(self.state(i), self.n_x)
                    .component_mul(&self.state_scale),
            );
        }
        let inputs = (0..self.horizon)
            .map(|i| {
                z.rows(self.input(i), self.n_u)
                    .component_mul(&self.input_scale)
            })
            .collect();
        let gamma = z.rows(self.slack(0), self.n_s).into_owned();
        (Trajectory { states, inputs }, gamma)
    }
}

fn push_block(t: &mut Vec<(usize, usize, f64)>, r0: usize, c0: usize, m: &DMatrix<f64>) {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v != 0.0 {
                t.push((r0 + r, c0 + c, v));
            }
        }
    }
}

fn scale_cols(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

fn scale_rows(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

fn scale_sym(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    scale_rows(&scale_cols(m, d), d)
}

/// Convex subproblem around `traj` with linearized dynamics `lin`.
///
/// Dynamics rows are divided by the state scale so the equality residual is
/// measured in the same units as the scaled states.
pub fn build_subproblem(
    ocp: &OcpProblem,
    traj: &Trajectory,
    lin: &Linearization,
    tr: &TrustRegion,
) -> Result<(QcqpProblem, IndexMap), ScpError> {
    ocp.validate()?;
    if !traj.matches(ocp) || lin.a.len() != ocp.horizon {
        return Err(ScpError::DimensionMismatch(
            "trajectory or linearization does not match problem".into(),
        ));
    }
    let map = IndexMap::new(ocp);
    let n = map.len();
    let (nx, nu, horizon) = (ocp.n_x, ocp.n_u, ocp.horizon);
    let dx = &ocp.state_scale;
    let du = &ocp.input_scale;

    // Cost
    let mut h = Vec::new();
    let mut c = DVector::zeros(n);
    for i in 1..=horizon {
        let cost = if i == horizon {
            &ocp.terminal_cost
        } else {
            &ocp.state_costs[i]
        };
        push_block(
            &mut h,
            map.state(i),
            map.state(i),
            &scale_sym(&cost.hessian, dx),
        );
        c.rows_mut(map.state(i), nx)
            .copy_from(&cost.linear.component_mul(dx));
    }
    for i in 0..horizon {
        let cost = &ocp.input_costs[i];
        push_block(
            &mut h,
            map.input(i),
            map.input(i),
            &scale_sym(&cost.hessian, du),
        );
        c.rows_mut(map.input(i), nu)
            .copy_from(&cost.linear.component_mul(du));
    }
    push_block(&mut h, map.slack(0), map.slack(0), &ocp.slack_cost.hessian);
    c.rows_mut(map.slack(0), ocp.n_s)
        .copy_from(&ocp.slack_cost.linear);

    // Linearized dynamics: D_x⁻¹ (x_{i+1} - A_i x_i - B_i u_i) = D_x⁻¹ (d_i - A_i x̄_i - B_i ū_i)
    let mut eq = Vec::new();
    let mut b_eq = DVector::zeros(horizon * nx);
    let inv_dx = dx.map(|s| 1.0 / s);
    for i in 0..horizon {
        let row = i * nx;
        for k in 0..nx {
            eq.push((row + k, map.state(i + 1) + k, 1.0));
        }
        let a = &lin.a[i];
        let b = &lin.b[i];
        let mut rhs = &lin.d[i] - a * &traj.states[i] - b * &traj.inputs[i];
        if i == 0 {
            rhs += a * &ocp.x_init;
        } else {
            push_block(
                &mut eq,
                row,
                map.state(i),
                &(-scale_rows(&scale_cols(a, dx), &inv_dx)),
            );
        }
        push_block(
            &mut eq,
            row,
            map.input(i),
            &(-scale_rows(&scale_cols(b, du), &inv_dx)),
        );
        b_eq.rows_mut(row, nx)
            .copy_from(&rhs.component_mul(&inv_dx));
    }

    // Polytopes and γ ≥ 0
    let mut ineq = Vec::new();
    let mut b_in = Vec::new();
    for p in &ocp.polytopes {
        let (col, d) = map.var(p.var);
        let row = b_in.len();
        push_block(&mut ineq, row, col, &scale_cols(&p.a, d));
        for &(r, s, coeff) in &p.slack {
            ineq.push((row + r, map.slack(s), -coeff));
        }
        b_in.extend(p.b.iter().copied());
    }
    for k in 0..ocp.n_s {
        ineq.push((b_in.len(), map.slack(k), -1.0));
        b_in.push(0.0);
    }

    let mut qcqp = QcqpProblem::unconstrained(CsrMatrix::from_triplets(n, n, &h), c)
        .with_equalities(CsrMatrix::from_triplets(horizon * nx, n, &eq), b_eq)
        .with_inequalities(
            CsrMatrix::from_triplets(b_in.len(), n, &ineq),
            DVector::from_vec(b_in),
        );

    for q in &ocp.quadratics {
        let (col, d) = map.var(q.var);
        let m = scale_sym(&q.q, d) / q.bound;
        let mut t = Vec::new();
        push_block(&mut t, col, col, &m);
        let mut lin_term = DVector::zeros(n);
        lin_term
            .rows_mut(col, d.len())
            .copy_from(&(q.linear.component_mul(d) / q.bound));
        for &(s, coeff) in &q.slack {
            lin_term[map.slack(s)] -= coeff / q.bound;
        }
        qcqp = qcqp.with_quadratic(QuadConstraint::new(
            CsrMatrix::from_triplets(n, n, &t),
            lin_term,
        ));
    }

    // Trust regions ½‖z̃_i - z̄̃_i‖² ≤ δ
    let center = map.stack(traj, &DVector::zeros(ocp.n_s));
    let ball = |start: usize, len: usize, radius: f64| {
        let t: Vec<_> = (start..start + len).map(|k| (k, k, 1.0 / radius)).collect();
        QuadConstraint::centered(
            CsrMatrix::from_triplets(n, n, &t),
            DVector::zeros(n),
            center.clone(),
        )
    };
    for i in 1..=horizon {
        qcqp = qcqp.with_quadratic(ball(map.state(i), nx, tr.delta_x_max));
    }
    for i in 0..horizon {
        qcqp = qcqp.with_quadratic(ball(map.input(i), nu, tr.delta_u_max));
    }
    Ok((qcqp, map))
}
