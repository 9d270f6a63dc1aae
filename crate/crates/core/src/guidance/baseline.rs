use std::time::Instant;

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::{GuidanceError, GuidanceResult, Method, SlewScenario};
use crate::spacecraft::{propagate, CmgCluster, FullInput, FullState, SpacecraftModel};

/// Fraction of the achievable momentum at which torque is cut.
pub const MOMENTUM_FRACTION: f64 = 0.98;

const STEERING_CORRECTIONS: usize = 4;

/// Switching details of a bang-bang profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineInfo {
    /// Steps of the acceleration phase; the last one is scaled by `kappa`.
    pub accel_steps: usize,
    pub kappa: f64,
    /// Zero-input steps on each side of the half-angle point.
    pub coast_steps: usize,
    /// Spacecraft momentum along the torque direction at the switch, as a
    /// fraction of the achievable momentum.
    pub momentum_fraction: f64,
    /// Achievable momentum along the torque direction, N·m·s.
    pub achievable_momentum: f64,
    pub torque_direction: Vector3<f64>,
}

struct Setup<'a> {
    sc: &'a SpacecraftModel,
    cluster: &'a CmgCluster,
    scenario: &'a SlewScenario,
    /// Torque direction in body axes.
    tau: Vector3<f64>,
    /// `-R_cbᵀ τ̂`: the spacecraft momentum along τ̂ equals `v · C_H α`.
    v: Vector3<f64>,
    achievable: f64,
}

impl Setup<'_> {
    /// Pseudoinverse direction `-Cᵀ(CCᵀ)⁻¹ τ̂_c`, scaled to saturate the fastest gimbal.
    fn mpp(&self, x: &FullState, step: usize) -> Result<FullInput, GuidanceError> {
        let alpha = x.fixed_rows::<8>(6).into_owned();
        let c = self.cluster.jacobian_alpha(&alpha);
        let tau_c = self.sc.dcm_cluster_to_body.transpose() * self.tau;
        let gram = (c * c.transpose())
            .try_inverse()
            .ok_or(GuidanceError::SingularJacobian { step })?;
        let dir: Vector4<f64> = -(c.transpose() * gram * tau_c);
        let peak = dir.amax();
        if !(peak > 0.0) || !peak.is_finite() {
            return Err(GuidanceError::SingularJacobian { step });
        }
        Ok(dir * (self.cluster.gimbal_rate_max / peak))
    }

    /// Held gimbal rates for one interval. The pseudoinverse direction at the
    /// start of the interval is corrected until the torque averaged over the
    /// interval (the momentum change over `ts`) points along `τ̂`.
    fn steering(&self, x: &FullState, step: usize) -> Result<FullInput, GuidanceError> {
        let tau_c = self.sc.dcm_cluster_to_body.transpose() * self.tau;
        let alpha0 = x.fixed_rows::<8>(6).into_owned();
        let h0 = self.cluster.momentum(&alpha0);
        let mut u = self.mpp(x, step)?;
        for _ in 0..STEERING_CORRECTIONS {
            let p = propagate(
                self.sc,
                self.cluster,
                x,
                &[u],
                self.scenario.ts,
                self.scenario.substeps,
            )?;
            let alpha1 = p.states[1].fixed_rows::<8>(6).into_owned();
            let avg = -(self.cluster.momentum(&alpha1) - h0) / self.scenario.ts;
            let off_axis = avg - tau_c * tau_c.dot(&avg);
            if off_axis.norm() <= 1e-12 * avg.norm() {
                break;
            }
            let c = self.cluster.jacobian_alpha(&(0.5 * (alpha0 + alpha1)));
            let gram = (c * c.transpose())
                .try_inverse()
                .ok_or(GuidanceError::SingularJacobian { step })?;
            u += c.transpose() * gram * off_axis;
            let peak = u.amax();
            if !(peak > 0.0) || !peak.is_finite() {
                return Err(GuidanceError::SingularJacobian { step });
            }
            u *= self.cluster.gimbal_rate_max / peak;
        }
        Ok(u)
    }

    fn momentum_fraction(&self, x: &FullState) -> f64 {
        let alpha = x.fixed_rows::<8>(6).into_owned();
        self.v.dot(&self.cluster.momentum(&alpha)) / self.achievable
    }

    /// Rotation covered about the slew axis.
    fn progress(&self, x: &FullState, x0: &FullState) -> f64 {
        let d = Vector3::new(x[0] - x0[0], x[1] - x0[1], x[2] - x0[2]);
        d.dot(&self.scenario.axis)
    }

    fn step(&self, x: &FullState, u: &FullInput) -> Result<FullState, GuidanceError> {
        let p = propagate(
            self.sc,
            self.cluster,
            x,
            &[*u],
            self.scenario.ts,
            self.scenario.substeps,
        )?;
        Ok(p.states[1])
    }
}

/// Full bang-bang input sequence: `accel` (last entry scaled by `kappa`),
/// `2·coast` zeros, then the acceleration inputs reversed and negated.
fn assemble(accel: &[FullInput], kappa: f64, coast: usize) -> Vec<FullInput> {
    let mut first: Vec<FullInput> = accel.to_vec();
    if let Some(last) = first.last_mut() {
        *last *= kappa;
    }
    first.extend(std::iter::repeat_n(FullInput::zeros(), coast));
    let brake: Vec<FullInput> = first.iter().rev().map(|u| -u).collect();
    first.extend(brake);
    first
}

fn bisect(
    mut lo: f64,
    mut hi: f64,
    mut f: impl FnMut(f64) -> Result<f64, GuidanceError>,
) -> Result<f64, GuidanceError> {
    let mut f_lo = f(lo)?;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bang-bang eigenaxis slew.
///
/// The torque direction is `τ̂ ∝ J ê` so the body accelerates about the slew
/// axis `ê`. Gimbal rates follow the pseudoinverse steering law at full rate
/// until the spacecraft momentum along `τ̂` reaches 98% of what the cluster can
/// store in that direction, then coast; at half the slew angle the inputs are
/// replayed reversed and negated, which retraces the gimbal path and brakes
/// to rest.
///
/// Time is quantized by `ts`, so the final acceleration step is scaled by
/// `κ ∈ [0, 1]` (and the coast length chosen) such that the braked maneuver
/// covers exactly the commanded angle. The switch therefore happens at most
/// one step before the 98% point.
pub fn baseline_bang_bang(
    sc: &SpacecraftModel,
    cluster: &CmgCluster,
    scenario: &SlewScenario,
) -> Result<GuidanceResult, GuidanceError> {
    let start = Instant::now();
    scenario.validate()?;
    let je = sc.inertia * scenario.axis;
    let tau = je / je.norm();
    let v = -sc.dcm_cluster_to_body.transpose() * tau;
    let (achievable, _) = cluster.max_projection(&v);
    let setup = Setup {
        sc,
        cluster,
        scenario,
        tau,
        v,
        achievable,
    };
    let x0 = scenario.initial_state();

    if scenario.delta_theta == 0.0 {
        let mut r = GuidanceResult::assemble(Method::Baseline, sc, cluster, scenario, Vec::new())?;
        r.baseline = Some(BaselineInfo {
            accel_steps: 0,
            kappa: 0.0,
            coast_steps: 0,
            momentum_fraction: 0.0,
            achievable_momentum: achievable,
            torque_direction: tau,
        });
        return Ok(r);
    }

    // Saturated acceleration until 98% momentum or half the slew angle.
    let half = 0.5 * scenario.delta_theta;
    let max_steps = (1e4 / scenario.ts).ceil() as usize;
    let mut accel: Vec<FullInput> = Vec::new();
    let mut states = vec![x0];
    loop {
        let x = *states.last().expect("nonempty");
        if setup.momentum_fraction(&x) >= MOMENTUM_FRACTION || setup.progress(&x, &x0) >= half {
            break;
        }
        if accel.len() >= max_steps {
            return Err(GuidanceError::HalfAngleNotReached { steps: max_steps });
        }
        let u = setup.steering(&x, accel.len())?;
        states.push(setup.step(&x, &u)?);
        accel.push(u);
    }

    // Continuous switch point `s = k + κ`: k full steps, then κ of step k.
    let n = accel.len();
    let partial = |s: f64, m: usize| -> (usize, f64) {
        let k = (s.floor() as usize).min(n - 1).min(m - 1);
        (k, s - k as f64)
    };
    let state_at = |s: f64| -> Result<FullState, GuidanceError> {
        let (k, kappa) = partial(s, n);
        setup.step(&states[k], &(accel[k] * kappa))
    };
    let s_max = if setup.momentum_fraction(&states[n]) >= MOMENTUM_FRACTION {
        bisect(n as f64 - 1.0, n as f64, |s| {
            Ok(setup.momentum_fraction(&state_at(s)?) - MOMENTUM_FRACTION)
        })?
    } else {
        n as f64
    };

    // With `m` steps per half (acceleration, partial step and coast), the
    // covered angle is continuous in `s`: the partial step absorbs the
    // difference when `s` crosses an integer. Take the shortest `m` that can
    // cover the slew, then place the switch so the coverage is exact.
    let profile = |m: usize, s: f64| {
        let (k, kappa) = partial(s, m);
        assemble(&accel[..=k], kappa, m - 1 - k)
    };
    let shortfall = |m: usize, s: f64| -> Result<f64, GuidanceError> {
        let p = propagate(
            sc,
            cluster,
            &x0,
            &profile(m, s),
            scenario.ts,
            scenario.substeps,
        )?;
        Ok(setup.progress(p.states.last().expect("nonempty"), &x0) - scenario.delta_theta)
    };
    let mut m = 1;
    while shortfall(m, s_max.min(m as f64))? < 0.0 {
        m += 1;
        if m > max_steps {
            return Err(GuidanceError::HalfAngleNotReached { steps: max_steps });
        }
    }
    let s = bisect(0.0, s_max.min(m as f64), |s| shortfall(m, s))?;
    let (k, kappa) = partial(s, m);
    let switch_state = state_at(s)?;
    let inputs = profile(m, s);
    let coast = m - 1 - k;

    let mut result = GuidanceResult::assemble(Method::Baseline, sc, cluster, scenario, inputs)?;
    result.baseline = Some(BaselineInfo {
        accel_steps: k + 1,
        kappa,
        coast_steps: coast,
        momentum_fraction: setup.momentum_fraction(&switch_state),
        achievable_momentum: achievable,
        torque_direction: tau,
    });
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}
