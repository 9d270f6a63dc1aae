//! End-to-end slew runs: baseline, optimized methods, output files.

use std::path::{Path, PathBuf};

use super::config::ScenarioConfig;
use super::output::{
    trace_csv, trajectory_csv, write_file, MethodFailure, RunSummary, SlewSummary, CSV_UNITS,
};
use super::HarnessError;
use crate::guidance::{baseline_bang_bang, solve_joint, solve_sequential, GuidanceResult, Method};

/// `baseline`, `joint`, `sequential` or `all`.
pub fn parse_methods(name: &str) -> Result<Vec<Method>, HarnessError> {
    match name {
        "baseline" => Ok(vec![Method::Baseline]),
        "joint" => Ok(vec![Method::Joint]),
        "sequential" => Ok(vec![Method::Sequential]),
        "all" => Ok(vec![Method::Baseline, Method::Joint, Method::Sequential]),
        other => Err(HarnessError::UnknownMethod(other.to_string())),
    }
}

pub struct SlewRun {
    pub results: Vec<GuidanceResult>,
    pub summary: SlewSummary,
}

impl SlewRun {
    pub fn result(&self, method: Method) -> Option<&GuidanceResult> {
        self.results.iter().find(|r| r.method == method)
    }

    pub fn all_failed(&self) -> bool {
        self.results.is_empty()
    }
}

/// Runs `methods` in order. The baseline is always computed because the
/// optimized methods start from it and report improvements against it;
/// it is only listed in the output when requested. A failing method is
/// recorded in the summary and does not stop the others.
pub fn run_slew(config: &ScenarioConfig, methods: &[Method]) -> Result<SlewRun, HarnessError> {
    config.validate()?;
    let sc = config.spacecraft_model()?;
    let cluster = config.cluster_model();
    let scenario = config.scenario();
    let weights = config.weights();
    let settings = config.solver_settings();

    let baseline = baseline_bang_bang(&sc, &cluster, &scenario);
    let baseline_time = baseline.as_ref().ok().map(|b| b.maneuver_time);
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &method in methods {
        let outcome = match (&baseline, method) {
            (Ok(b), Method::Baseline) => Ok(b.clone()),
            (Ok(b), Method::Joint) => solve_joint(&sc, &cluster, &scenario, &weights, b, &settings),
            (Ok(b), Method::Sequential) => solve_sequential(
                &sc,
                &cluster,
                &scenario,
                &weights,
                b,
                &settings,
                config.solver.sequential_rounds,
            ),
            (Err(e), _) => {
                let error = match method {
                    Method::Baseline => e.to_string(),
                    _ => format!("baseline failed: {e}"),
                };
                failures.push(MethodFailure { method, error });
                continue;
            }
        };
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push(MethodFailure {
                method,
                error: e.to_string(),
            }),
        }
    }

    let runs = results
        .iter()
        .map(|r| RunSummary::new(r, &sc, &cluster, baseline_time))
        .collect();
    Ok(SlewRun {
        results,
        summary: SlewSummary {
            seed: config.seed,
            slew_angle_deg: config.slew.angle_deg,
            ts_s: config.slew.ts_s,
            csv_units: CSV_UNITS.to_string(),
            runs,
            failures,
        },
    })
}

/// Writes `<method>.csv` per successful method, `summary.json`,
/// `timing.json` and, with `trace`, `<method>_trace.csv` for the methods
/// that ran SCP. Returns the written paths.
pub fn write_slew_outputs(
    run: &SlewRun,
    config: &ScenarioConfig,
    out_dir: &Path,
    trace: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    let cluster = config.cluster_model();
    let mut written = Vec::new();
    let mut emit = |name: String, contents: String| -> Result<(), HarnessError> {
        let path = out_dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };
    for r in &run.results {
        emit(
            format!("{}.csv", r.method.name()),
            trajectory_csv(r, &cluster),
        )?;
        if trace && !r.scp_reports.is_empty() {
            emit(
                format!("{}_trace.csv", r.method.name()),
                trace_csv(&r.scp_reports),
            )?;
        }
    }
    emit("summary.json".into(), run.summary.to_json())?;
    emit("timing.json".into(), run.summary.timing_json())?;
    Ok(written)
}
