//! Ellipsoidal inner approximation of the roof cluster's momentum envelope.
//!
//! Each parallel-gimbal pair reaches a disc of radius `2h` in its momentum
//! plane; the envelope is the Minkowski sum of the two discs, with support
//! function `σ(v) = 2h (‖P₁v‖ + ‖P₂v‖)`. An ellipsoid `{E u : ‖u‖ ≤ 1}` lies
//! inside a convex set exactly when `‖E v‖ ≤ σ(v)` for every direction `v`,
//! so the maximum-volume ellipsoid solves
//!
//! ```text
//! maximize log det E   subject to   ‖E v_j‖² ≤ σ(v_j)²
//! ```
//!
//! over densely sampled directions. The envelope is symmetric under the three
//! coordinate reflections of the cluster frame, and the maximum-volume
//! ellipsoid is unique, so `E` is diagonal and the constraints are linear in
//! the squared semi-axes. A log-barrier Newton method solves the resulting
//! three-variable concave program.

use nalgebra::{Matrix2, Matrix3, SVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GuidanceError;
use crate::spacecraft::{CmgCluster, SpacecraftModel, N_CMG};

/// Directions constraining the ellipsoid fit.
const FIT_DIRECTIONS: usize = 20_000;
/// Directions used to shrink the fitted ellipsoid onto the envelope.
const TIGHTEN_DIRECTIONS: usize = 200_000;
/// Random directions for the final containment check.
const VERIFY_DIRECTIONS: usize = 100_000;
const VERIFY_SEED: u64 = 0x5eed;
/// Relative excess tolerated by the containment check.
const CONTAINMENT_TOL: f64 = 1e-6;

/// `{h : hᵀ Q h ≤ 1}` in cluster axes, N·m·s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumEnvelope {
    pub q: Matrix3<f64>,
    pub semi_axes: Vector3<f64>,
    /// Largest `‖E v‖ / σ(v) - 1` seen by the random containment check.
    pub containment_excess: f64,
}

impl MomentumEnvelope {
    pub fn contains(&self, h: &Vector3<f64>) -> bool {
        h.dot(&(self.q * h)) <= 1.0
    }

    /// Rate-space form `ωᵀ Q_ω ω ≤ 1` with `Q_ω = J R Q Rᵀ J`: the cluster
    /// stores `-Rᵀ J ω` when the total momentum is zero.
    pub fn q_omega(&self, sc: &SpacecraftModel) -> Matrix3<f64> {
        let m = sc.dcm_cluster_to_body.transpose() * sc.inertia;
        m.transpose() * self.q * m
    }
}

/// Support function of the two-disc envelope.
pub fn envelope_support(cluster: &CmgCluster, v: &Vector3<f64>) -> f64 {
    let r = 2.0 * cluster.h_cmg;
    cluster
        .pair_planes()
        .iter()
        .map(|(e, w)| r * v.dot(e).hypot(v.dot(w)))
        .sum()
}

/// Quasi-uniform unit vectors on the sphere.
fn fibonacci_sphere(n: usize) -> impl Iterator<Item = Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n).map(move |k| {
        let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let (s, c) = (golden * k as f64).sin_cos();
        Vector3::new(r * c, r * s, z)
    })
}

/// Plane normals, where the support function has its ridges, and the
/// coordinate axes, where the diagonal ellipsoid attains its semi-axes.
fn critical_directions(cluster: &CmgCluster) -> Vec<Vector3<f64>> {
    let normals = cluster.pair_planes().map(|(e, w)| e.cross(&w).normalize());
    normals
        .into_iter()
        .chain([Vector3::x(), Vector3::y(), Vector3::z()])
        .flat_map(|n| [n, -n])
        .collect()
}

/// Maximize `Σ log p_k` subject to `a_jᵀ p ≤ b_j` by a barrier path.
fn max_log_det(a: &[Vector3<f64>], b: &[f64]) -> Vector3<f64> {
    let m = a.len() as f64;
    let b_min = b.iter().copied().fold(f64::INFINITY, f64::min);
    // a_j has unit 1-norm, so this start is strictly feasible.
    let mut p = Vector3::from_element(0.5 * b_min);
    let mut t = 1.0;
    let barrier = |p: &Vector3<f64>, t: f64| -> f64 {
        let mut f = -t * p.iter().map(|x| x.ln()).sum::<f64>();
        for (aj, bj) in a.iter().zip(b) {
            f -= (bj - aj.dot(p)).ln();
        }
        f
    };
    while m / t > 1e-12 {
        for _ in 0..100 {
            let mut g = Vector3::from_fn(|k, _| -t / p[k]);
            let mut h = Matrix3::from_diagonal(&p.map(|x| t / (x * x)));
            for (aj, bj) in a.iter().zip(b) {
                let s = bj - aj.dot(&p);
                g += aj / s;
                h += aj * aj.transpose() / (s * s);
            }
            let Some(step) = h.cholesky().map(|c| -c.solve(&g)) else {
                break;
            };
            let decrement = -g.dot(&step);
            if decrement < 1e-14 {
                break;
            }
            let f0 = barrier(&p, t);
            let mut alpha = 1.0;
            loop {
                let trial = p + step * alpha;
                let feasible = trial.iter().all(|x| *x > 0.0)
                    && a.iter().zip(b).all(|(aj, bj)| aj.dot(&trial) < *bj);
                if feasible && barrier(&trial, t) <= f0 - 0.25 * alpha * decrement {
                    p = trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-12 {
                    break;
                }
            }
            if alpha < 1e-12 {
                break;
            }
        }
        t *= 10.0;
    }
    p
}

/// Maximum-volume ellipsoid inside the cluster's momentum envelope.
///
/// The fitted ellipsoid is shrunk by the worst support ratio over a denser
/// direction set, then checked against random directions; an excess above
/// `1e-6` (relative) is reported as an error.
pub fn momentum_envelope_ellipsoid(
    cluster: &CmgCluster,
) -> Result<MomentumEnvelope, GuidanceError> {
    let critical = critical_directions(cluster);
    let dirs: Vec<Vector3<f64>> = fibonacci_sphere(FIT_DIRECTIONS)
        .chain(critical.iter().copied())
        .collect();
    let a: Vec<Vector3<f64>> = dirs.iter().map(|v| v.component_mul(v)).collect();
    let b: Vec<f64> = dirs
        .iter()
        .map(|v| envelope_support(cluster, v).powi(2))
        .collect();
    let p = max_log_det(&a, &b);
    let mut semi = p.map(f64::sqrt);

    let ratio = |semi: &Vector3<f64>, v: &Vector3<f64>| {
        semi.component_mul(v).norm() / envelope_support(cluster, v)
    };
    let worst = fibonacci_sphere(TIGHTEN_DIRECTIONS)
        .chain(critical)
        .map(|v| ratio(&semi, &v))
        .fold(0.0, f64::max);
    if worst > 1.0 {
        semi /= worst;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..VERIFY_DIRECTIONS {
        let v = random_unit(&mut rng);
        excess = excess.max(ratio(&semi, &v) - 1.0);
    }
    if excess > CONTAINMENT_TOL {
        return Err(GuidanceError::ContainmentViolation { excess });
    }
    Ok(MomentumEnvelope {
        q: Matrix3::from_diagonal(&semi.map(|s| 1.0 / (s * s))),
        semi_axes: semi,
        containment_excess: excess,
    })
}

pub(crate) fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Gimbal configuration storing `h` (cluster axes), if one exists.
///
/// The pair planes share `e₁`, so the components along the two in-plane
/// normals `w₁, w₂` fix each pair's out-of-axis share; the `e₁` component is
/// then split in proportion to the room left in each disc, and each pair
/// vector is realized by two wheels placed symmetrically about it.
pub fn inverse_allocation(cluster: &CmgCluster, h: &Vector3<f64>) -> Option<SVector<f64, 8>> {
    let r = 2.0 * cluster.h_cmg;
    let [(e, w1), (_, w2)] = cluster.pair_planes();
    let m = Matrix2::new(w1.y, w2.y, w1.z, w2.z);
    let y = m.lu().solve(&Vector2::new(h.y, h.z))?;
    let room = |yk: f64| (r * r - yk * yk).max(0.0).sqrt();
    let (r1, r2) = (room(y[0]), room(y[1]));
    let hx = h.dot(&e);
    let tol = 1e-12 * r;
    if y.amax() > r + tol || hx.abs() > r1 + r2 + tol {
        return None;
    }
    let split = if r1 + r2 > 0.0 { r1 / (r1 + r2) } else { 0.5 };
    let pairs = [(hx * split, y[0]), (hx * (1.0 - split), y[1])];

    let mut alpha = SVector::<f64, 8>::zeros();
    for (k, (px, py)) in pairs.into_iter().enumerate() {
        let rho = (px.hypot(py) / r).min(1.0);
        let phi = py.atan2(px);
        let spread = rho.acos();
        for (j, d) in [phi + spread, phi - spread].into_iter().enumerate() {
            let i = 2 * k + j;
            debug_assert!(i < N_CMG);
            alpha[2 * i] = d.cos();
            alpha[2 * i + 1] = d.sin();
        }
    }
    Some(alpha)
}
