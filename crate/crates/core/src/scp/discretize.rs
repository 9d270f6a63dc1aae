use nalgebra::{DMatrix, DVector};

use super::{DynamicsError, ScpError};

/// Continuous dynamics `ẋ = f_c(x, u)`, optionally varying with the hold
/// interval index `stage`.
pub trait ContinuousDynamics {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn eval(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError>;
    /// `(∂f_c/∂x, ∂f_c/∂u)` at `(x, u)`.
    fn jacobians(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError>;
}

/// Discrete transition `x_{i+1} = f_i(x_i, u_i)` with its first derivatives.
pub trait DiscreteDynamics {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError>;
    /// `(f_i, ∇_x f_i, ∇_u f_i)` at `(x, u)`.
    fn linearize_step(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>), DynamicsError>;
}

/// Classical RK4 under zero-order hold, `substeps` equal steps per interval.
#[derive(Clone, Debug)]
pub struct Rk4<C> {
    pub continuous: C,
    pub ts: f64,
    pub substeps: usize,
}

pub fn rk4_discretize<C: ContinuousDynamics>(continuous: C, ts: f64) -> Result<Rk4<C>, ScpError> {
    Rk4::new(continuous, ts, 1)
}

fn finite(stage: usize, v: DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(DynamicsError::NonFinite { stage })
    }
}

impl<C: ContinuousDynamics> Rk4<C> {
    pub fn new(continuous: C, ts: f64, substeps: usize) -> Result<Self, ScpError> {
        if !(ts > 0.0 && ts.is_finite()) || substeps == 0 {
            return Err(ScpError::InvalidParameter(format!(
                "ts = {ts}, substeps = {substeps}"
            )));
        }
        Ok(Self {
            continuous,
            ts,
            substeps,
        })
    }

    fn h(&self) -> f64 {
        self.ts / self.substeps as f64
    }

    fn f(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        finite(stage, self.continuous.eval(stage, x, u)?)
    }

    fn single(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        let h = self.h();
        let k1 = self.f(stage, x, u)?;
        let k2 = self.f(stage, &(x + &k1 * (h / 2.0)), u)?;
        let k3 = self.f(stage, &(x + &k2 * (h / 2.0)), u)?;
        let k4 = self.f(stage, &(x + &k3 * h), u)?;
        Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }

    /// One RK4 step with sensitivities chained through the four stages:
    /// `∂k_j/∂x = A_j (I + c_j h ∂k_{j-1}/∂x)`, and likewise for `u` plus `B_j`.
    fn single_linearized(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        let h = self.h();
        let n = x.len();
        let eye = DMatrix::<f64>::identity(n, n);
        let mut ks: Vec<DVector<f64>> = Vec::with_capacity(4);
        let mut kx: Vec<DMatrix<f64>> = Vec::with_capacity(4);
        let mut ku: Vec<DMatrix<f64>> = Vec::with_capacity(4);
        for (j, c) in [0.0, 0.5, 0.5, 1.0].into_iter().enumerate() {
            let (xj, dxj_dx, dxj_du) = if j == 0 {
                (x.clone(), eye.clone(), DMatrix::zeros(n, u.len()))
            } else {
                (
                    x + &ks[j - 1] * (c * h),
                    &eye + &kx[j - 1] * (c * h),
                    &ku[j - 1] * (c * h),
                )
            };
            let k = self.f(stage, &xj, u)?;
            let (a, b) = self.continuous.jacobians(stage, &xj, u)?;
            kx.push(&a * dxj_dx);
            ku.push(&a * dxj_du + b);
            ks.push(k);
        }
        let w = h / 6.0;
        let next = x + (&ks[0] + &ks[1] * 2.0 + &ks[2] * 2.0 + &ks[3]) * w;
        let fx = eye + (&kx[0] + &kx[1] * 2.0 + &kx[2] * 2.0 + &kx[3]) * w;
        let fu = (&ku[0] + &ku[1] * 2.0 + &ku[2] * 2.0 + &ku[3]) * w;
        Ok((next, fx, fu))
    }
}

impl<C: ContinuousDynamics> DiscreteDynamics for Rk4<C> {
    fn state_dim(&self) -> usize {
        self.continuous.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.continuous.input_dim()
    }

    fn step(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        let mut x = x.clone();
        for _ in 0..self.substeps {
            x = self.single(stage, &x, u)?;
        }
        Ok(x)
    }

    fn linearize_step(
        &self,
        stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        let (mut next, mut fx, mut fu) = self.single_linearized(stage, x, u)?;
        for _ in 1..self.substeps {
            let (n2, ax, bu) = self.single_linearized(stage, &next, u)?;
            fu = &ax * fu + bu;
            fx = ax * fx;
            next = n2;
        }
        Ok((next, fx, fu))
    }
}

/// Time-invariant linear dynamics `ẋ = F x + G u`.
#[derive(Clone, Debug)]
pub struct LinearDynamics {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl ContinuousDynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    fn input_dim(&self) -> usize {
        self.g.ncols()
    }

    fn eval(
        &self,
        _stage: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, DynamicsError> {
        Ok(&self.f * x + &self.g * u)
    }

    fn jacobians(
        &self,
        _stage: usize,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), DynamicsError> {
        Ok((self.f.clone(), self.g.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(f: f64, g: f64) -> LinearDynamics {
        LinearDynamics {
            f: DMatrix::from_element(1, 1, f),
            g: DMatrix::from_element(1, 1, g),
        }
    }

    #[test]
    fn frozen_flow_is_identity() {
        let d = rk4_discretize(scalar(0.0, 0.0), 0.1).unwrap();
        let (x, fx, _) = d
            .linearize_step(0, &DVector::from_element(1, 3.0), &DVector::zeros(1))
            .unwrap();
        assert_eq!(x[0], 3.0);
        assert_eq!(fx[(0, 0)], 1.0);
    }

    #[test]
    fn decay_matches_fourth_order_series() {
        let d = rk4_discretize(scalar(-1.0, 0.0), 0.1).unwrap();
        let x = d
            .step(0, &DVector::from_element(1, 1.0), &DVector::zeros(1))
            .unwrap();
        let h: f64 = -0.1;
        let series = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x[0] - series).abs() < 1e-15);
        assert!((x[0] - 0.9048375).abs() < 1e-7);
    }

    #[test]
    fn integrator_input_gain() {
        let d = rk4_discretize(scalar(0.0, 1.0), 0.1).unwrap();
        let (x, _, fu) = d
            .linearize_step(
                0,
                &DVector::from_element(1, 1.0),
                &DVector::from_element(1, 2.0),
            )
            .unwrap();
        assert!((x[0] - 1.2).abs() < 1e-15);
        assert!((fu[(0, 0)] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(rk4_discretize(scalar(0.0, 1.0), 0.0).is_err());
    }
}
