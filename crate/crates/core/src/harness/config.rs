//! Scenario configuration read from TOML.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::guidance::{CostWeights, SlewScenario, SolverSettings, DEFAULT_MAX_ROUNDS};
use crate::scp::{ScpLimits, TrustRegion};
use crate::spacecraft::{CmgCluster, SpacecraftModel};
use crate::SolveOptions;

/// Complete description of a slew run. Angles are in degrees here and
/// converted to radians when the models are built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Seed for every randomized component.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub spacecraft: SpacecraftConfig,
    pub cluster: ClusterConfig,
    pub slew: SlewConfig,
    pub weights: WeightsConfig,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacecraftConfig {
    /// `[Jxx, Jyy, Jzz]`, kg·m².
    pub moments_kg_m2: [f64; 3],
    /// `[Jxy, Jxz, Jyz]`, kg·m².
    pub products_kg_m2: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub beta_deg: f64,
    pub wheel_momentum_nms: f64,
    pub gimbal_rate_max_rad_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlewConfig {
    pub angle_deg: f64,
    pub axis: [f64; 3],
    pub initial_gimbals_deg: [f64; 4],
    pub ts_s: f64,
    pub substeps: usize,
    pub model_substeps: usize,
    pub horizon_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub terminal_attitude: f64,
    pub terminal_rate: f64,
    pub terminal_infnorm: f64,
    pub stage_infnorm: f64,
    pub stage_attitude: f64,
    pub stage_rate: f64,
    pub gimbal_rate: f64,
    pub reference_rate: f64,
    pub track_stage: f64,
    pub track_terminal: f64,
    pub attitude_scale_deg: f64,
    pub rate_scale_rad_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub qcqp_tol: f64,
    pub qcqp_max_iter: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    pub epsilon: f64,
    pub epsilon_tr: f64,
    pub reproject: bool,
    pub delta_x_max: f64,
    pub delta_u_max: f64,
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    pub sequential_rounds: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let settings = SolverSettings::default();
        let w = CostWeights::default();
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            spacecraft: SpacecraftConfig {
                moments_kg_m2: [5000.0, 5000.0, 3000.0],
                products_kg_m2: [-400.0, -70.0, -80.0],
            },
            cluster: ClusterConfig {
                beta_deg: 45.0,
                wheel_momentum_nms: 100.0,
                gimbal_rate_max_rad_s: 1.0,
            },
            slew: SlewConfig {
                angle_deg: 30.0,
                axis: [0.0, 1.0, 0.0],
                initial_gimbals_deg: [60.0, -60.0, 120.0, 240.0],
                ts_s: 0.1,
                substeps: 10,
                model_substeps: 1,
                horizon_margin: 0.1,
            },
            weights: WeightsConfig {
                terminal_attitude: w.lf_attitude,
                terminal_rate: w.lf_rate,
                terminal_infnorm: w.sf,
                stage_infnorm: w.s,
                stage_attitude: w.l_attitude,
                stage_rate: w.l_rate,
                gimbal_rate: w.r,
                reference_rate: w.g,
                track_stage: w.track_stage,
                track_terminal: w.track_terminal,
                attitude_scale_deg: 30.0,
                rate_scale_rad_s: w.rate_scale,
            },
            solver: SolverConfig {
                qcqp_tol: settings.limits.qcqp.tol,
                qcqp_max_iter: settings.limits.qcqp.max_iter,
                max_outer: settings.limits.max_outer,
                max_inner: settings.limits.max_inner,
                epsilon: settings.limits.epsilon,
                epsilon_tr: settings.limits.epsilon_tr,
                reproject: settings.limits.reproject,
                delta_x_max: settings.trust_region.delta_x_max,
                delta_u_max: settings.trust_region.delta_u_max,
                kappa_plus: settings.trust_region.kappa_plus,
                kappa_minus: settings.trust_region.kappa_minus,
                sequential_rounds: DEFAULT_MAX_ROUNDS,
            },
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::InvalidConfig {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Rejects a symmetric matrix with an eigenvalue below `-1e-12·‖M‖`.
fn check_psd(field: &str, m: &Matrix3<f64>) -> Result<(), HarnessError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid(field, "non-finite entry"));
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(invalid(field, "matrix is not symmetric"));
    }
    let min = m.symmetric_eigenvalues().min();
    if min < -1e-12 * m.amax().max(1.0) {
        return Err(invalid(
            field,
            format!("matrix is not positive semidefinite (eigenvalue {min:e})"),
        ));
    }
    Ok(())
}

fn check_positive(field: &str, v: f64) -> Result<(), HarnessError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let config: Self =
            toml::from_str(text).map_err(|e| HarnessError::ConfigSyntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every weight and inertia matrix for positive semidefiniteness
    /// and every scale, step and tolerance for positivity.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let [jxx, jyy, jzz] = self.spacecraft.moments_kg_m2;
        let [jxy, jxz, jyz] = self.spacecraft.products_kg_m2;
        let inertia = Matrix3::new(jxx, jxy, jxz, jxy, jyy, jyz, jxz, jyz, jzz);
        check_psd("spacecraft", &inertia)?;
        if inertia.cholesky().is_none() {
            return Err(invalid("spacecraft", "inertia is singular"));
        }

        let w = &self.weights;
        let pairs = [
            ("weights.terminal", w.terminal_attitude, w.terminal_rate),
            ("weights.stage", w.stage_attitude, w.stage_rate),
            ("weights.infnorm", w.stage_infnorm, w.terminal_infnorm),
            ("weights.gimbal_rate", w.gimbal_rate, w.reference_rate),
            ("weights.track", w.track_stage, w.track_terminal),
        ];
        for (field, a, b) in pairs {
            check_psd(field, &Matrix3::from_diagonal(&Vector3::new(a, b, b)))?;
        }
        check_positive("weights.attitude_scale_deg", w.attitude_scale_deg)?;
        check_positive("weights.rate_scale_rad_s", w.rate_scale_rad_s)?;

        check_positive(
            "cluster.wheel_momentum_nms",
            self.cluster.wheel_momentum_nms,
        )?;
        check_positive(
            "cluster.gimbal_rate_max_rad_s",
            self.cluster.gimbal_rate_max_rad_s,
        )?;
        if !self.cluster.beta_deg.is_finite() {
            return Err(invalid("cluster.beta_deg", "non-finite"));
        }

        let s = &self.solver;
        for (field, v) in [
            ("solver.qcqp_tol", s.qcqp_tol),
            ("solver.epsilon", s.epsilon),
            ("solver.epsilon_tr", s.epsilon_tr),
        ] {
            check_positive(field, v)?;
        }
        if s.qcqp_max_iter == 0 || s.max_outer == 0 || s.max_inner == 0 || s.sequential_rounds == 0
        {
            return Err(invalid("solver", "iteration limits must be positive"));
        }
        self.trust_region()
            .validate()
            .map_err(|e| invalid("solver", e.to_string()))?;

        self.scenario()
            .validate()
            .map_err(|e| invalid("slew", e.to_string()))?;
        Ok(())
    }

    pub fn spacecraft_model(&self) -> Result<SpacecraftModel, HarnessError> {
        SpacecraftModel::new(
            self.spacecraft.moments_kg_m2,
            self.spacecraft.products_kg_m2,
            self.cluster.beta_deg.to_radians(),
        )
        .map_err(|e| invalid("spacecraft", e.to_string()))
    }

    pub fn cluster_model(&self) -> CmgCluster {
        CmgCluster {
            beta: self.cluster.beta_deg.to_radians(),
            h_cmg: self.cluster.wheel_momentum_nms,
            gimbal_rate_max: self.cluster.gimbal_rate_max_rad_s,
        }
    }

    /// The slew axis is normalized here; a zero axis is left as is and
    /// rejected by [`SlewScenario::validate`].
    pub fn scenario(&self) -> SlewScenario {
        let axis = Vector3::from(self.slew.axis);
        let norm = axis.norm();
        let d = self.slew.initial_gimbals_deg.map(f64::to_radians);
        SlewScenario {
            delta_theta: self.slew.angle_deg.to_radians(),
            axis: if norm > 0.0 { axis / norm } else { axis },
            delta_init: Vector4::from(d),
            ts: self.slew.ts_s,
            substeps: self.slew.substeps,
            model_substeps: self.slew.model_substeps,
            horizon_margin: self.slew.horizon_margin,
        }
    }

    pub fn weights(&self) -> CostWeights {
        let w = &self.weights;
        CostWeights {
            lf_attitude: w.terminal_attitude,
            lf_rate: w.terminal_rate,
            sf: w.terminal_infnorm,
            s: w.stage_infnorm,
            l_attitude: w.stage_attitude,
            l_rate: w.stage_rate,
            r: w.gimbal_rate,
            g: w.reference_rate,
            track_stage: w.track_stage,
            track_terminal: w.track_terminal,
            attitude_scale: w.attitude_scale_deg.to_radians(),
            rate_scale: w.rate_scale_rad_s,
        }
    }

    fn trust_region(&self) -> TrustRegion {
        TrustRegion {
            delta_x_max: self.solver.delta_x_max,
            delta_u_max: self.solver.delta_u_max,
            kappa_plus: self.solver.kappa_plus,
            kappa_minus: self.solver.kappa_minus,
        }
    }

    pub fn solver_settings(&self) -> SolverSettings {
        let s = &self.solver;
        SolverSettings {
            limits: ScpLimits {
                max_outer: s.max_outer,
                max_inner: s.max_inner,
                epsilon: s.epsilon,
                epsilon_tr: s.epsilon_tr,
                reproject: s.reproject,
                qcqp: SolveOptions {
                    tol: s.qcqp_tol,
                    max_iter: s.qcqp_max_iter,
                    skip_validation: true,
                    ..SolveOptions::default()
                },
            },
            trust_region: self.trust_region(),
        }
    }
}
