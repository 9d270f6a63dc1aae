use nalgebra::{Matrix3, Matrix3x4, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::alpha_from_delta;

pub const N_CMG: usize = 4;

pub type Matrix3x8 = SMatrix<f64, 3, 8>;

/// Active rotation about x by `a`.
pub fn rotation_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Active rotation about z by `a`.
pub fn rotation_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Roof cluster: CMGs 1-2 share one gimbal axis, CMGs 3-4 the mirrored one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmgCluster {
    /// Roof tip angle, rad.
    pub beta: f64,
    /// Momentum of each wheel, N·m·s.
    pub h_cmg: f64,
    /// Gimbal rate limit, rad/s.
    pub gimbal_rate_max: f64,
}

impl Default for CmgCluster {
    fn default() -> Self {
        Self {
            beta: 45f64.to_radians(),
            h_cmg: 100.0,
            gimbal_rate_max: 1.0,
        }
    }
}

impl CmgCluster {
    /// Momentum map: the cluster stores `C_H α` in cluster axes.
    pub fn c_h(&self) -> Matrix3x8 {
        let (sb, cb) = self.beta.sin_cos();
        let h = self.h_cmg;
        let mut m = Matrix3x8::zeros();
        for i in 0..N_CMG {
            let side = if i < 2 { 1.0 } else { -1.0 };
            m[(0, 2 * i)] = h;
            m[(1, 2 * i + 1)] = side * h * sb;
            m[(2, 2 * i + 1)] = h * cb;
        }
        m
    }

    /// Torque map: `C_τ Λ(α) δ̇ = C_H α̇`.
    pub fn c_tau(&self) -> Matrix3x8 {
        let (sb, cb) = self.beta.sin_cos();
        let h = self.h_cmg;
        let mut m = Matrix3x8::zeros();
        for i in 0..N_CMG {
            let side = if i < 2 { 1.0 } else { -1.0 };
            m[(1, 2 * i)] = side * h * sb;
            m[(2, 2 * i)] = h * cb;
            m[(0, 2 * i + 1)] = -h;
        }
        m
    }

    pub fn momentum(&self, alpha: &SVector<f64, 8>) -> Vector3<f64> {
        self.c_h() * alpha
    }

    /// Gimbal-rate Jacobian `C = C_τ Λ(α)` in cluster axes; the cluster
    /// delivers torque `-C δ̇` to the spacecraft.
    pub fn jacobian_alpha(&self, alpha: &SVector<f64, 8>) -> Matrix3x4<f64> {
        let ct = self.c_tau();
        Matrix3x4::from_fn(|r, i| {
            ct[(r, 2 * i)] * alpha[2 * i] + ct[(r, 2 * i + 1)] * alpha[2 * i + 1]
        })
    }

    pub fn jacobian(&self, delta: &Vector4<f64>) -> Matrix3x4<f64> {
        self.jacobian_alpha(&alpha_from_delta(delta))
    }

    /// `sqrt(det(C Cᵀ))`, zero exactly when torque is confined to a plane.
    pub fn singularity_metric_alpha(&self, alpha: &SVector<f64, 8>) -> f64 {
        let c = self.jacobian_alpha(alpha);
        (c * c.transpose()).determinant().max(0.0).sqrt()
    }

    pub fn singularity_metric(&self, delta: &Vector4<f64>) -> f64 {
        self.singularity_metric_alpha(&alpha_from_delta(delta))
    }

    /// Largest value of `v · C_H α` over all gimbal angles, with the maximizer.
    ///
    /// Each CMG contributes `h (a cos δ + b sin δ)` independently, maximized by
    /// pointing `(cos δ, sin δ)` along `(a, b)`.
    pub fn max_projection(&self, v: &Vector3<f64>) -> (f64, SVector<f64, 8>) {
        let ch = self.c_h();
        let mut best = SVector::<f64, 8>::zeros();
        let mut total = 0.0;
        for i in 0..N_CMG {
            let a = v.dot(&ch.column(2 * i));
            let b = v.dot(&ch.column(2 * i + 1));
            let r = a.hypot(b);
            total += r;
            if r > 0.0 {
                best[2 * i] = a / r;
                best[2 * i + 1] = b / r;
            } else {
                best[2 * i] = 1.0;
            }
        }
        (total, best)
    }

    /// Orthonormal basis `(e₁, w)` of each parallel pair's momentum plane, in
    /// cluster axes: CMG `i` of the pair stores `h (cos δ_i e₁ + sin δ_i w)`.
    pub fn pair_planes(&self) -> [(Vector3<f64>, Vector3<f64>); 2] {
        let (sb, cb) = self.beta.sin_cos();
        [
            (Vector3::x(), Vector3::new(0.0, sb, cb)),
            (Vector3::x(), Vector3::new(0.0, -sb, cb)),
        ]
    }
}
