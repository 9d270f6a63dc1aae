//! Trajectory CSVs, run summaries and SCP traces.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::guidance::{
    attitude_error, rate_norm, GuidanceResult, Method, SETTLE_ATTITUDE_DEG, SETTLE_RATE_DEG_S,
};
use crate::scp::ScpReport;
use crate::spacecraft::{delta_from_alpha, CmgCluster, FullState, SpacecraftModel};

pub const CSV_COLUMNS: [&str; 19] = [
    "t",
    "phi",
    "theta",
    "psi",
    "wx",
    "wy",
    "wz",
    "d1",
    "d2",
    "d3",
    "d4",
    "dd1",
    "dd2",
    "dd3",
    "dd4",
    "taux",
    "tauy",
    "tauz",
    "sing_metric",
];

/// Header of the trajectory CSV.
pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

/// Units of the CSV columns, recorded in the summary document.
pub const CSV_UNITS: &str = "t s; phi theta psi rad; wx wy wz rad/s; d1..d4 rad; dd1..dd4 rad/s; \
taux tauy tauz N·m (body axes, held over the interval starting at t); sing_metric sqrt(det(C Cᵀ)) of the gimbal Jacobian C";

/// One CSV row per propagated sample, `floor(T_end / Ts) + 1` rows. Inputs
/// and torques of the final sample are zero. Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn trajectory_csv(result: &GuidanceResult, cluster: &CmgCluster) -> String {
    let p = &result.propagation;
    let mut out = csv_header();
    out.push('\n');
    for (k, x) in p.states.iter().enumerate() {
        let t = k as f64 * result.ts;
        let alpha = x.fixed_rows::<8>(6).into_owned();
        let delta = delta_from_alpha(&alpha);
        let rates = result.inputs.get(k).copied().unwrap_or_default();
        let torque = p.torque.get(k).copied().unwrap_or_else(Vector3::zeros);
        let sing = p
            .singularity
            .get(k)
            .copied()
            .unwrap_or_else(|| cluster.singularity_metric_alpha(&alpha));
        let fields = [t, x[0], x[1], x[2], x[3], x[4], x[5]]
            .into_iter()
            .chain(delta.iter().copied())
            .chain(rates.iter().copied())
            .chain(torque.iter().copied())
            .chain([sing]);
        for (i, v) in fields.enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a string");
        }
        out.push('\n');
    }
    out
}

/// Attitude and rate columns of a trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub t: Vec<f64>,
    pub rows: Vec<[f64; 19]>,
}

impl TrajectoryTable {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != csv_header() {
            return Err(HarnessError::Table(format!("unexpected header `{header}`")));
        }
        let mut table = Self {
            t: Vec::new(),
            rows: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let mut row = [0.0; 19];
            let mut count = 0;
            for (j, field) in line.split(',').enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    HarnessError::Table(format!("row {}: column {j} is not a number", i + 1))
                })?;
                if j < 19 {
                    row[j] = v;
                }
                count += 1;
            }
            if count != 19 {
                return Err(HarnessError::Table(format!(
                    "row {}: {count} columns",
                    i + 1
                )));
            }
            table.t.push(row[0]);
            table.rows.push(row);
        }
        Ok(table)
    }

    /// Time from which attitude error and rate stay within the settling
    /// thresholds, or the final time when they never do.
    pub fn maneuver_time(&self) -> f64 {
        let inside = |r: &[f64; 19]| {
            let mut x = FullState::zeros();
            for i in 0..6 {
                x[i] = r[i + 1];
            }
            attitude_error(&x).to_degrees() < SETTLE_ATTITUDE_DEG
                && rate_norm(&x).to_degrees() < SETTLE_RATE_DEG_S
        };
        let mut k = self.rows.len();
        while k > 0 && inside(&self.rows[k - 1]) {
            k -= 1;
        }
        if k == self.rows.len() {
            k -= 1;
        }
        self.t.get(k).copied().unwrap_or(0.0)
    }
}

/// Scalar outcome of one guidance method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub maneuver_time_s: f64,
    pub settled: bool,
    /// `100 (T_baseline - T) / T_baseline`; absent when the baseline failed
    /// or took no time.
    pub improvement_vs_baseline_pct: Option<f64>,
    pub terminal_attitude_error_deg: f64,
    pub terminal_rate_deg_s: f64,
    /// Largest `‖Jω + R C_H α‖` along the propagated trajectory, N·m·s.
    pub momentum_residual_nms: f64,
    pub converged: bool,
    pub scp_outer_iterations: usize,
    pub scp_inner_iterations: usize,
    pub qcqp_iterations: usize,
    pub sequential_rounds: usize,
    pub csv_rows: usize,
    /// Kept out of the summary file so repeated runs produce identical
    /// summaries; written to the timing document instead.
    #[serde(skip_serializing, default)]
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn new(
        result: &GuidanceResult,
        sc: &SpacecraftModel,
        cluster: &CmgCluster,
        baseline_time: Option<f64>,
    ) -> Self {
        let reports = &result.scp_reports;
        let improvement = baseline_time
            .filter(|&t| t > 0.0)
            .map(|t| 100.0 * (t - result.maneuver_time) / t);
        Self {
            method: result.method,
            maneuver_time_s: result.maneuver_time,
            settled: result.settled,
            improvement_vs_baseline_pct: improvement,
            terminal_attitude_error_deg: result.terminal_attitude_error_deg,
            terminal_rate_deg_s: result.terminal_rate_deg_s,
            momentum_residual_nms: result
                .states()
                .iter()
                .map(|x| sc.total_momentum(cluster, x).norm())
                .fold(0.0, f64::max),
            converged: result.converged,
            scp_outer_iterations: reports.iter().map(|r| r.outer_iterations).sum(),
            scp_inner_iterations: reports.iter().map(|r| r.inner_iterations).sum(),
            qcqp_iterations: reports.iter().map(ScpReport::qcqp_iterations).sum(),
            sequential_rounds: result.rounds.len(),
            csv_rows: result.states().len(),
            wall_time_s: result.wall_time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodFailure {
    pub method: Method,
    pub error: String,
}

/// Summary document of a slew run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlewSummary {
    pub seed: u64,
    pub slew_angle_deg: f64,
    pub ts_s: f64,
    pub csv_units: String,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<MethodFailure>,
}

impl SlewSummary {
    pub fn run(&self, method: Method) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }

    /// Wall times per method, s.
    pub fn timing_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self
            .runs
            .iter()
            .map(|r| {
                (
                    r.method.name().to_string(),
                    serde_json::json!({ "wall_time_s": r.wall_time_s }),
                )
            })
            .collect();
        serde_json::to_string_pretty(&map).expect("timings serialize") + "\n"
    }
}

/// Per-iteration SCP statistics, one row per inner iteration of every
/// report in `reports`.
pub fn trace_csv(reports: &[ScpReport]) -> String {
    let mut out = String::from(
        "solve,outer,inner,defect,progress,delta_x_max,delta_u_max,qcqp_iterations,qcqp_status,accepted,objective\n",
    );
    for (i, report) in reports.iter().enumerate() {
        for r in &report.iterations {
            writeln!(
                out,
                "{i},{},{},{},{},{},{},{},{},{},{}",
                r.outer,
                r.inner,
                r.defect,
                r.progress,
                r.delta_x_max,
                r.delta_u_max,
                r.qcqp_iterations,
                r.qcqp_status,
                r.accepted,
                r.objective
            )
            .expect("writing to a string");
        }
    }
    out
}

/// Writes `contents` to `path`, creating the parent directory.
pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(contents.as_bytes()).map_err(io)
}
