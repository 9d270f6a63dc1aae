//! Sequential convex programming for stage-structured optimal control.
//!
//! The problem class is
//!
//! ```text
//! minimize   ½ x_Nᵀ P x_N + pᵀx_N + ½ γᵀCγ + cᵀγ
//!            + Σ_i ½ x_iᵀL_i x_i + l_iᵀx_i + ½ u_iᵀR_i u_i + r_iᵀu_i
//! subject to x_{i+1} = f_i(x_i, u_i),   x_0 = x_init,   γ ≥ 0
//!            polytopic and quadratic state/input constraints, optionally
//!            softened by the global slack vector γ
//! ```
//!
//! Each iteration linearizes the dynamics around the previous trajectory and
//! solves the resulting QCQP with quadratic trust regions on every stage.

mod discretize;
mod solve;
mod subproblem;

pub use discretize::{rk4_discretize, ContinuousDynamics, DiscreteDynamics, LinearDynamics, Rk4};
pub use solve::{dynamics_defect, scp_solve, ScpIterationRecord, ScpLimits, ScpReport, ScpStatus};
pub use subproblem::{build_subproblem, IndexMap};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::psd_sqrt;
use crate::qcqp::QcqpError;
use crate::spacecraft::SpacecraftError;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("dynamics returned non-finite values at stage {stage}")]
    NonFinite { stage: usize },
    #[error(transparent)]
    Model(#[from] SpacecraftError),
}

#[derive(Debug, Error)]
pub enum ScpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("stage {stage} is outside the allowed range for {what}")]
    InvalidStage { stage: usize, what: &'static str },
    #[error("weight matrix is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("subproblem solve failed: {0}")]
    SubproblemFailure(#[from] QcqpError),
}

/// `½ vᵀ H v + gᵀ v`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadCost {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl QuadCost {
    pub fn zeros(n: usize) -> Self {
        Self {
            hessian: DMatrix::zeros(n, n),
            linear: DVector::zeros(n),
        }
    }

    pub fn quadratic(hessian: DMatrix<f64>) -> Self {
        let n = hessian.nrows();
        Self {
            hessian,
            linear: DVector::zeros(n),
        }
    }

    pub fn eval(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.hessian * v)) + self.linear.dot(v)
    }
}

/// Which stage variable a constraint acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageVar {
    /// `x_i`, valid for `i = 1..=N`.
    State(usize),
    /// `u_i`, valid for `i = 0..N`.
    Input(usize),
}

/// `A v ≤ b + Σ coeff·γ_k` with entries `(row, k, coeff)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    pub var: StageVar,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub slack: Vec<(usize, usize, f64)>,
}

/// `½ vᵀQv + qᵀv ≤ bound + Σ coeff·γ_k`, `bound > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticBlock {
    pub var: StageVar,
    pub q: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub bound: f64,
    pub slack: Vec<(usize, f64)>,
}

pub struct OcpProblem {
    pub horizon: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub n_s: usize,
    pub dynamics: Box<dyn DiscreteDynamics + Send + Sync>,
    pub x_init: DVector<f64>,
    pub terminal_cost: QuadCost,
    /// Cost on `x_i`, `i = 0..N`; the `i = 0` entry only shifts the objective.
    pub state_costs: Vec<QuadCost>,
    pub input_costs: Vec<QuadCost>,
    pub slack_cost: QuadCost,
    pub polytopes: Vec<Polytope>,
    pub quadratics: Vec<QuadraticBlock>,
    /// Characteristic magnitudes; the QCQP works in `x / state_scale`.
    pub state_scale: DVector<f64>,
    pub input_scale: DVector<f64>,
}

impl std::fmt::Debug for OcpProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpProblem")
            .field("horizon", &self.horizon)
            .field("n_x", &self.n_x)
            .field("n_u", &self.n_u)
            .field("n_s", &self.n_s)
            .field("polytopes", &self.polytopes.len())
            .field("quadratics", &self.quadratics.len())
            .finish_non_exhaustive()
    }
}

impl OcpProblem {
    /// Problem with zero costs, no constraints and unit scaling.
    pub fn new(
        horizon: usize,
        dynamics: Box<dyn DiscreteDynamics + Send + Sync>,
        x_init: DVector<f64>,
    ) -> Result<Self, ScpError> {
        let (n_x, n_u) = (dynamics.state_dim(), dynamics.input_dim());
        if x_init.len() != n_x {
            return Err(ScpError::DimensionMismatch(format!(
                "x_init has {} entries, dynamics expect {n_x}",
                x_init.len()
            )));
        }
        if horizon == 0 {
            return Err(ScpError::InvalidParameter(
                "horizon must be positive".into(),
            ));
        }
        Ok(Self {
            horizon,
            n_x,
            n_u,
            n_s: 0,
            dynamics,
            x_init,
            terminal_cost: QuadCost::zeros(n_x),
            state_costs: vec![QuadCost::zeros(n_x); horizon],
            input_costs: vec![QuadCost::zeros(n_u); horizon],
            slack_cost: QuadCost::zeros(0),
            polytopes: Vec::new(),
            quadratics: Vec::new(),
            state_scale: DVector::from_element(n_x, 1.0),
            input_scale: DVector::from_element(n_u, 1.0),
        })
    }

    /// Append `count` slack variables with linear cost `weight` each.
    pub fn add_slacks(&mut self, count: usize, weight: f64) -> std::ops::Range<usize> {
        let start = self.n_s;
        let n = start + count;
        let mut h = DMatrix::zeros(n, n);
        h.view_mut((0, 0), (start, start))
            .copy_from(&self.slack_cost.hessian);
        let mut g = DVector::from_element(n, weight);
        g.rows_mut(0, start).copy_from(&self.slack_cost.linear);
        self.slack_cost = QuadCost {
            hessian: h,
            linear: g,
        };
        self.n_s = n;
        start..n
    }

    pub fn set_stage_state_cost(&mut self, cost: QuadCost) {
        self.state_costs = vec![cost; self.horizon];
    }

    pub fn set_stage_input_cost(&mut self, cost: QuadCost) {
        self.input_costs = vec![cost; self.horizon];
    }

    /// Box `lo ≤ u_i ≤ hi` on every input of every stage.
    pub fn add_input_box(&mut self, lo: &DVector<f64>, hi: &DVector<f64>) {
        let n = self.n_u;
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for j in 0..n {
            a[(2 * j, j)] = 1.0;
            b[2 * j] = hi[j];
            a[(2 * j + 1, j)] = -1.0;
            b[2 * j + 1] = -lo[j];
        }
        for i in 0..self.horizon {
            self.polytopes.push(Polytope {
                var: StageVar::Input(i),
                a: a.clone(),
                b: b.clone(),
                slack: Vec::new(),
            });
        }
    }

    pub fn check_stage(&self, var: StageVar) -> Result<(), ScpError> {
        match var {
            StageVar::State(i) if i == 0 || i > self.horizon => Err(ScpError::InvalidStage {
                stage: i,
                what: "state",
            }),
            StageVar::Input(i) if i >= self.horizon => Err(ScpError::InvalidStage {
                stage: i,
                what: "input",
            }),
            _ => Ok(()),
        }
    }

    fn var_dim(&self, var: StageVar) -> usize {
        match var {
            StageVar::State(_) => self.n_x,
            StageVar::Input(_) => self.n_u,
        }
    }

    /// Shape checks for every cost and constraint block.
    pub fn validate(&self) -> Result<(), ScpError> {
        let mismatch = |what: String| Err(ScpError::DimensionMismatch(what));
        if self.state_costs.len() != self.horizon || self.input_costs.len() != self.horizon {
            return mismatch("stage cost count differs from horizon".into());
        }
        let sq = |c: &QuadCost, n: usize| {
            c.hessian.nrows() == n && c.hessian.ncols() == n && c.linear.len() == n
        };
        if !sq(&self.terminal_cost, self.n_x)
            || !self.state_costs.iter().all(|c| sq(c, self.n_x))
            || !self.input_costs.iter().all(|c| sq(c, self.n_u))
            || !sq(&self.slack_cost, self.n_s)
        {
            return mismatch("cost block shapes".into());
        }
        if self.state_scale.len() != self.n_x
            || self.input_scale.len() != self.n_u
            || self
                .state_scale
                .iter()
                .chain(self.input_scale.iter())
                .any(|s| !(*s > 0.0))
        {
            return mismatch("scaling vectors must be positive with state/input length".into());
        }
        for (k, p) in self.polytopes.iter().enumerate() {
            self.check_stage(p.var)?;
            if p.a.ncols() != self.var_dim(p.var) || p.a.nrows() != p.b.len() {
                return mismatch(format!("polytope {k}"));
            }
            if p.slack
                .iter()
                .any(|&(r, s, _)| r >= p.b.len() || s >= self.n_s)
            {
                return mismatch(format!("polytope {k} slack selector"));
            }
        }
        for (k, q) in self.quadratics.iter().enumerate() {
            self.check_stage(q.var)?;
            let n = self.var_dim(q.var);
            if q.q.nrows() != n || q.q.ncols() != n || q.linear.len() != n {
                return mismatch(format!("quadratic block {k}"));
            }
            if !(q.bound > 0.0) {
                return Err(ScpError::InvalidParameter(format!(
                    "quadratic block {k} needs a positive bound"
                )));
            }
            if q.slack.iter().any(|&(s, _)| s >= self.n_s) {
                return mismatch(format!("quadratic block {k} slack selector"));
            }
        }
        Ok(())
    }

    /// Cost of a trajectory and slack vector under the original objective.
    pub fn objective(&self, traj: &Trajectory, gamma: &DVector<f64>) -> f64 {
        let mut j =
            self.terminal_cost.eval(&traj.states[self.horizon]) + self.slack_cost.eval(gamma);
        for i in 0..self.horizon {
            j += self.state_costs[i].eval(&traj.states[i])
                + self.input_costs[i].eval(&traj.inputs[i]);
        }
        j
    }

    /// Smallest nonnegative slacks satisfying every constraint row that
    /// involves a single slack with positive coefficient, for a fixed
    /// trajectory. Rows mixing several slacks are ignored.
    pub fn least_slacks(&self, traj: &Trajectory) -> DVector<f64> {
        let value = |var: StageVar| match var {
            StageVar::State(i) => &traj.states[i],
            StageVar::Input(i) => &traj.inputs[i],
        };
        let mut gamma = DVector::zeros(self.n_s);
        for p in &self.polytopes {
            let lhs = &p.a * value(p.var) - &p.b;
            for &(row, k, coeff) in &p.slack {
                let single = p.slack.iter().filter(|&&(r, _, _)| r == row).count() == 1;
                if single && coeff > 0.0 {
                    gamma[k] = f64::max(gamma[k], lhs[row] / coeff);
                }
            }
        }
        for q in &self.quadratics {
            if let [(k, coeff)] = q.slack[..] {
                if coeff > 0.0 {
                    let v = value(q.var);
                    let g = 0.5 * v.dot(&(&q.q * v)) + q.linear.dot(v) - q.bound;
                    gamma[k] = gamma[k].max(g / coeff);
                }
            }
        }
        gamma
    }

    /// Objective with the slacks set by [`Self::least_slacks`].
    pub fn merit(&self, traj: &Trajectory) -> f64 {
        self.objective(traj, &self.least_slacks(traj))
    }

    /// Trajectory obtained by propagating `inputs` from `x_init`.
    pub fn rollout(&self, inputs: &[DVector<f64>]) -> Result<Trajectory, ScpError> {
        let mut states = vec![self.x_init.clone()];
        for (i, u) in inputs.iter().enumerate() {
            let next = self.dynamics.step(i, &states[i], u)?;
            states.push(next);
        }
        Trajectory::new(states, inputs.to_vec())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, inputs: Vec<DVector<f64>>) -> Result<Self, ScpError> {
        if states.len() != inputs.len() + 1 {
            return Err(ScpError::DimensionMismatch(format!(
                "{} states for {} inputs",
                states.len(),
                inputs.len()
            )));
        }
        Ok(Self { states, inputs })
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn matches(&self, ocp: &OcpProblem) -> bool {
        self.horizon() == ocp.horizon
            && self.states.iter().all(|x| x.len() == ocp.n_x)
            && self.inputs.iter().all(|u| u.len() == ocp.n_u)
    }
}

/// Quadratic trust-region radii and their update factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrustRegion {
    pub delta_x_max: f64,
    pub delta_u_max: f64,
    pub kappa_plus: f64,
    pub kappa_minus: f64,
}

pub const TRUST_REGION_MIN: f64 = 1e-8;
pub const TRUST_REGION_MAX: f64 = 1e8;

impl Default for TrustRegion {
    fn default() -> Self {
        Self {
            delta_x_max: 1.0,
            delta_u_max: 1.0,
            kappa_plus: 2.0,
            kappa_minus: 0.5,
        }
    }
}

impl TrustRegion {
    pub fn validate(&self) -> Result<(), ScpError> {
        let ok = self.delta_x_max > 0.0
            && self.delta_u_max > 0.0
            && self.kappa_plus > 1.0
            && self.kappa_minus > 0.0
            && self.kappa_minus < 1.0;
        if ok {
            Ok(())
        } else {
            Err(ScpError::InvalidParameter(format!("{self:?}")))
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        let clamp = |d: f64| (d * factor).clamp(TRUST_REGION_MIN, TRUST_REGION_MAX);
        Self {
            delta_x_max: clamp(self.delta_x_max),
            delta_u_max: clamp(self.delta_u_max),
            ..*self
        }
    }

    pub fn grown(&self) -> Self {
        self.scaled(self.kappa_plus)
    }

    pub fn shrunk(&self) -> Self {
        self.scaled(self.kappa_minus)
    }

    fn at_floor(&self) -> bool {
        self.delta_x_max <= TRUST_REGION_MIN && self.delta_u_max <= TRUST_REGION_MIN
    }
}

/// Affine model `x_{i+1} ≈ A_i (x_i - x̄_i) + B_i (u_i - ū_i) + d_i` per stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    /// `f_i(x̄_i, ū_i)`.
    pub d: Vec<DVector<f64>>,
}

impl Linearization {
    /// `x_{i+1} - f_i(x_i, u_i)` at the linearization point, stacked.
    pub fn defects(&self, traj: &Trajectory) -> Vec<DVector<f64>> {
        self.d
            .iter()
            .enumerate()
            .map(|(i, d)| &traj.states[i + 1] - d)
            .collect()
    }
}

pub fn linearize(ocp: &OcpProblem, traj: &Trajectory) -> Result<Linearization, ScpError> {
    if !traj.matches(ocp) {
        return Err(ScpError::DimensionMismatch(
            "trajectory does not match problem".into(),
        ));
    }
    let mut lin = Linearization {
        a: Vec::with_capacity(ocp.horizon),
        b: Vec::with_capacity(ocp.horizon),
        d: Vec::with_capacity(ocp.horizon),
    };
    for i in 0..ocp.horizon {
        let (d, a, b) = ocp
            .dynamics
            .linearize_step(i, &traj.states[i], &traj.inputs[i])?;
        lin.a.push(a);
        lin.b.push(b);
        lin.d.push(d);
    }
    Ok(lin)
}

/// Install `‖W^{½} x_i‖_∞` on each listed stage through the epigraph form
/// `-γ_i 1 ≤ W^{½} x_i ≤ γ_i 1` with unit cost on `γ_i`. Returns the slack
/// indices in the order of `stages`.
pub fn epigraph_infnorm(
    ocp: &mut OcpProblem,
    w: &DMatrix<f64>,
    stages: &[usize],
) -> Result<Vec<usize>, ScpError> {
    if w.nrows() != ocp.n_x || w.ncols() != ocp.n_x {
        return Err(ScpError::DimensionMismatch(
            "epigraph weight must be n_x × n_x".into(),
        ));
    }
    for &i in stages {
        ocp.check_stage(StageVar::State(i))?;
    }
    let root = psd_sqrt(w, 1e-9).ok_or(ScpError::NotPositiveSemidefinite)?;
    // Rows of W^{½} that are identically zero impose nothing.
    let rows: Vec<usize> = (0..ocp.n_x).filter(|&r| root.row(r).amax() > 0.0).collect();
    let mut a = DMatrix::zeros(2 * rows.len(), ocp.n_x);
    for (k, &r) in rows.iter().enumerate() {
        a.row_mut(2 * k).copy_from(&root.row(r));
        a.row_mut(2 * k + 1).copy_from(&(-root.row(r)));
    }
    let slacks = ocp.add_slacks(stages.len(), 1.0);
    for (&i, s) in stages.iter().zip(slacks.clone()) {
        ocp.polytopes.push(Polytope {
            var: StageVar::State(i),
            a: a.clone(),
            b: DVector::zeros(a.nrows()),
            slack: (0..a.nrows()).map(|r| (r, s, 1.0)).collect(),
        });
    }
    Ok(slacks.collect())
}
