//! `slewopt` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slewopt::harness::{self, HarnessError, ScenarioConfig};
use slewopt::qcqp::{read_problem, DocumentError, SolutionDocument};
use slewopt::{solve_qcqp, validate_problem, SolveOptions, SolveStatus};

/// Exit code for a problem or config that fails validation.
const EXIT_INVALID: u8 = 3;
const EXIT_MAX_ITERATIONS: u8 = 2;
/// Any other non-optimal solver status.
const EXIT_NOT_SOLVED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "slewopt",
    version,
    about = "Convex QCQP solver and CMG slew guidance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a QCQP problem document and write the solution document.
    SolveQcqp {
        problem: PathBuf,
        /// Directory for `<problem stem>.solution.json`.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
    },
    /// Run slew guidance and write trajectory CSVs and a summary.
    Slew {
        /// Scenario TOML; the built-in defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// baseline, joint, sequential or all.
        #[arg(long, default_value = "all")]
        method: String,
        /// Overrides `output_dir` of the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Tolerance of the QCQP subproblem solves.
        #[arg(long)]
        tol: Option<f64>,
        /// Also write per-iteration SCP statistics.
        #[arg(long)]
        trace: bool,
    },
    /// Run the benchmark suite and write `bench.json` and `bench.csv`.
    Bench {
        /// Directory of `.oqp` problems; the built-in synthetic suite otherwise.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value = "bench_out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn write_or_fail(path: &Path, contents: &str) -> Result<(), ExitCode> {
    harness::write_file(path, contents).map_err(|e| fail(1, e))
}

fn solve_qcqp_cmd(problem: &Path, out_dir: &Path, tol: f64, max_iter: usize) -> ExitCode {
    let p = match read_problem(problem) {
        Ok(p) => p,
        Err(e @ DocumentError::Io { .. }) => return fail(1, e),
        Err(e) => return fail(EXIT_INVALID, e),
    };
    if let Err(e) = validate_problem(&p) {
        return fail(EXIT_INVALID, e);
    }
    let opts = SolveOptions {
        tol,
        max_iter,
        skip_validation: true,
        ..SolveOptions::default()
    };
    let sol = match solve_qcqp(&p, &opts) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_NOT_SOLVED, e),
    };
    let stem = problem
        .file_stem()
        .map_or_else(|| "problem".into(), |s| s.to_string_lossy());
    let out = out_dir.join(format!("{stem}.solution.json"));
    let doc = SolutionDocument::from(&sol);
    let text = serde_json::to_string_pretty(&doc).expect("solution serializes") + "\n";
    if let Err(code) = write_or_fail(&out, &text) {
        return code;
    }
    println!(
        "{:?} after {} iterations, objective {:.10e}, max KKT residual {:.2e}; wrote {}",
        sol.status,
        sol.iterations,
        sol.objective,
        sol.residuals.max(),
        out.display()
    );
    match sol.status {
        SolveStatus::Optimal => ExitCode::SUCCESS,
        SolveStatus::MaxIterations => ExitCode::from(EXIT_MAX_ITERATIONS),
        _ => ExitCode::from(EXIT_NOT_SOLVED),
    }
}

fn slew_cmd(
    config: Option<&Path>,
    method: &str,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    tol: Option<f64>,
    trace: bool,
) -> ExitCode {
    let mut cfg = match config.map_or_else(|| Ok(ScenarioConfig::default()), ScenarioConfig::load) {
        Ok(c) => c,
        Err(e @ HarnessError::Io { .. }) => return fail(1, e),
        Err(e) => return fail(EXIT_INVALID, e),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(tol) = tol {
        cfg.solver.qcqp_tol = tol;
    }
    if let Some(dir) = out_dir {
        cfg.output_dir = dir;
    }
    let methods = match harness::parse_methods(method) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_INVALID, e),
    };
    let run = match harness::run_slew(&cfg, &methods) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_INVALID, e),
    };
    if let Err(e) = harness::write_slew_outputs(&run, &cfg, &cfg.output_dir, trace) {
        return fail(1, e);
    }
    for r in &run.summary.runs {
        let improvement = r
            .improvement_vs_baseline_pct
            .map_or_else(|| "-".to_string(), |v| format!("{v:.1}%"));
        println!(
            "{:<10} T = {:6.2} s{} improvement {improvement:>7}  attitude error {:.2e} deg  rate {:.2e} deg/s  wall {:.1} s",
            r.method.name(),
            r.maneuver_time_s,
            if r.settled { " " } else { "*" },
            r.terminal_attitude_error_deg,
            r.terminal_rate_deg_s,
            r.wall_time_s
        );
    }
    for f in &run.summary.failures {
        eprintln!("{} failed: {}", f.method.name(), f.error);
    }
    println!("outputs in {}", cfg.output_dir.display());
    if run.all_failed() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn bench_cmd(suite: Option<&Path>, out_dir: &Path, seed: u64, tol: f64) -> ExitCode {
    let opts = SolveOptions::default().with_tol(tol);
    let report = match harness::bench_suite(suite, seed, &opts) {
        Ok(r) => r,
        Err(e) => return fail(1, e),
    };
    for (name, contents) in [
        ("bench.json", report.to_json()),
        ("bench.csv", report.to_csv()),
    ] {
        if let Err(code) = write_or_fail(&out_dir.join(name), &contents) {
            return code;
        }
    }
    print!("{}", report.table());
    for r in report.records.iter().filter(|r| !r.optimal()) {
        eprintln!(
            "{}: {}",
            r.name,
            r.error.clone().unwrap_or_else(|| format!("{:?}", r.status))
        );
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::SolveQcqp {
            problem,
            out_dir,
            tol,
            max_iter,
        } => solve_qcqp_cmd(&problem, &out_dir, tol, max_iter),
        Command::Slew {
            config,
            method,
            out_dir,
            seed,
            tol,
            trace,
        } => slew_cmd(config.as_deref(), &method, out_dir, seed, tol, trace),
        Command::Bench {
            suite,
            out_dir,
            seed,
            tol,
        } => bench_cmd(suite.as_deref(), &out_dir, seed, tol),
    }
}
