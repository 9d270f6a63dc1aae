//! QP/QCQP benchmark suite: built-in synthetic problems or an imported
//! collection in the `.oqp` text format.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::linalg::CsrMatrix;
use crate::{solve_qcqp, QcqpProblem, QuadConstraint, SolveOptions, SolveStatus};

/// Values at or beyond this magnitude are read as infinite bounds.
pub const OQP_INFINITY: f64 = 1e20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Random strictly convex QPs with n ≤ 50.
    Easy,
    /// Hessian condition number between 1e2 and 1e8.
    IllConditioned,
    /// Small convex QCQPs with ellipsoidal constraints.
    Qcqp,
    /// 256-variable QPs.
    Scale,
    Imported,
}

impl Tier {
    pub fn name(&self) -> &'static str {
        match self {
            Tier::Easy => "easy",
            Tier::IllConditioned => "ill_conditioned",
            Tier::Qcqp => "qcqp",
            Tier::Scale => "scale",
            Tier::Imported => "imported",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchProblem {
    pub name: String,
    pub tier: Tier,
    pub problem: QcqpProblem,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn uniform_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Strictly convex QP with Hessian `h` whose constraints are strictly
/// satisfied at a random point, so an optimum exists. Returns the point.
fn qp_around(
    rng: &mut ChaCha8Rng,
    h: DMatrix<f64>,
    m_in: usize,
    m_eq: usize,
) -> (QcqpProblem, DVector<f64>) {
    let n = h.nrows();
    let c = uniform_vector(rng, n) * 2.0;
    let x0 = uniform_vector(rng, n);
    let a = uniform_matrix(rng, m_in, n);
    let b = &a * &x0 + DVector::from_fn(m_in, |_, _| rng.random_range(0.05..1.0));
    let ae = uniform_matrix(rng, m_eq, n);
    let be = &ae * &x0;
    let p = QcqpProblem::unconstrained(CsrMatrix::from_dense(&h), c)
        .with_inequalities(CsrMatrix::from_dense(&a), b)
        .with_equalities(CsrMatrix::from_dense(&ae), be);
    (p, x0)
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let g = uniform_matrix(rng, n, n);
    &g * g.transpose() + DMatrix::identity(n, n) * shift
}

/// Random orthogonal eigenbasis with eigenvalues log-spaced over `cond`.
pub fn conditioned_hessian(rng: &mut ChaCha8Rng, n: usize, cond: f64) -> DMatrix<f64> {
    let q = uniform_matrix(rng, n, n).qr().q();
    let eig = DVector::from_fn(n, |i, _| {
        let f = if n > 1 {
            i as f64 / (n - 1) as f64
        } else {
            0.0
        };
        cond.powf(-f)
    });
    let h = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&h + h.transpose()) * 0.5
}

/// Adds `count` ellipsoids, each holding the feasible point at half its level.
fn add_ellipsoids(rng: &mut ChaCha8Rng, p: &mut QcqpProblem, x0: &DVector<f64>, count: usize) {
    let n = p.n;
    for _ in 0..count {
        let q = random_spd(rng, n, 0.5);
        let center = x0 + uniform_vector(rng, n) * 0.3;
        let lin = uniform_vector(rng, n) * 0.1;
        let y = x0 - &center;
        let level = 0.5 * y.dot(&(&q * &y)) + lin.dot(&y);
        let scale = if level > 0.0 { 0.5 / level } else { 1.0 };
        p.quad.push(QuadConstraint::centered(
            CsrMatrix::from_dense(&(q * scale)),
            lin * scale,
            center,
        ));
    }
}

/// Built-in suite, feasible by construction: 60 easy QPs, 8 ill-conditioned
/// QPs (condition 1e2..1e8), 20 small QCQPs and 2 QPs with 256 variables.
pub fn synthetic_suite(seed: u64) -> Vec<BenchProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::new();
    for i in 0..60 {
        let n = rng.random_range(2..=50);
        let m_in = rng.random_range(0..=2 * n);
        let m_eq = rng.random_range(0..=n / 2);
        let h = random_spd(&mut rng, n, 0.1);
        let (problem, _) = qp_around(&mut rng, h, m_in, m_eq);
        suite.push(BenchProblem {
            name: format!("easy_{i:02}_n{n}"),
            tier: Tier::Easy,
            problem,
        });
    }
    for (i, exp) in [2, 4, 6, 8].into_iter().cycle().take(8).enumerate() {
        let n = if i < 4 { 10 } else { 40 };
        let h = conditioned_hessian(&mut rng, n, 10f64.powi(exp));
        let (problem, _) = qp_around(&mut rng, h, 2 * n, n / 5);
        suite.push(BenchProblem {
            name: format!("ill_{i}_n{n}_cond1e{exp}"),
            tier: Tier::IllConditioned,
            problem,
        });
    }
    for i in 0..20 {
        let n = rng.random_range(2..=20);
        let h = random_spd(&mut rng, n, 0.1);
        let (mut problem, x0) = qp_around(&mut rng, h, n, n / 4);
        add_ellipsoids(&mut rng, &mut problem, &x0, 1 + i % 3);
        suite.push(BenchProblem {
            name: format!("qcqp_{i:02}_n{n}"),
            tier: Tier::Qcqp,
            problem,
        });
    }
    for i in 0..2 {
        let h = random_spd(&mut rng, 256, 1.0);
        let (problem, _) = qp_around(&mut rng, h, 128, 32);
        suite.push(BenchProblem {
            name: format!("scale_{i}_n256"),
            tier: Tier::Scale,
            problem,
        });
    }
    suite
}

/// Random strictly convex QP with `n` variables, `m_in` inequalities and
/// `m_eq` equalities, feasible by construction.
pub fn synthetic_qp(seed: u64, n: usize, m_in: usize, m_eq: usize) -> QcqpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_spd(&mut rng, n, 0.1);
    qp_around(&mut rng, h, m_in, m_eq).0
}

fn read_oqp(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| HarnessError::Import {
                        path: path.display().to_string(),
                        reason: format!("line {}: `{v}` is not a number", i + 1),
                    })
                })
                .collect()
        })
        .collect()
}

fn oqp_matrix(
    dir: &Path,
    file: &str,
    rows: usize,
    cols: usize,
) -> Result<Option<DMatrix<f64>>, HarnessError> {
    let path = dir.join(file);
    if !path.exists() {
        return Ok(None);
    }
    let data = read_oqp(&path)?;
    if data.len() < rows || data.iter().take(rows).any(|r| r.len() != cols) {
        return Err(HarnessError::Import {
            path: path.display().to_string(),
            reason: format!("expected {rows}x{cols} values"),
        });
    }
    Ok(Some(DMatrix::from_fn(rows, cols, |i, j| data[i][j])))
}

/// First problem of an `.oqp` directory (`dims.oqp` holding
/// `nQP nV nC ...`; `H`, `g`, `A`, `lb`, `ub`, `lbA`, `ubA`). Two-sided
/// rows become one or two inequalities, rows with equal sides equalities.
pub fn import_oqp_problem(dir: &Path) -> Result<QcqpProblem, HarnessError> {
    let import_err = |reason: &str| HarnessError::Import {
        path: dir.display().to_string(),
        reason: reason.to_string(),
    };
    let dims = read_oqp(&dir.join("dims.oqp"))?;
    let dims: Vec<f64> = dims.into_iter().flatten().collect();
    if dims.len() < 3 {
        return Err(import_err("dims.oqp needs nQP nV nC"));
    }
    let (nv, nc) = (dims[1] as usize, dims[2] as usize);
    let h = oqp_matrix(dir, "H.oqp", nv, nv)?.unwrap_or_else(|| DMatrix::zeros(nv, nv));
    let g = oqp_matrix(dir, "g.oqp", 1, nv)?.ok_or_else(|| import_err("missing g.oqp"))?;
    let row = |file: &str, len: usize| -> Result<Option<DVector<f64>>, HarnessError> {
        Ok(oqp_matrix(dir, file, 1, len)?.map(|m| m.row(0).transpose()))
    };
    let a = if nc > 0 {
        oqp_matrix(dir, "A.oqp", nc, nv)?.ok_or_else(|| import_err("missing A.oqp"))?
    } else {
        DMatrix::zeros(0, nv)
    };

    let mut eq_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut in_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut add = |coeff: DVector<f64>, lo: Option<f64>, hi: Option<f64>| {
        let lo = lo.filter(|v| *v > -OQP_INFINITY);
        let hi = hi.filter(|v| *v < OQP_INFINITY);
        match (lo, hi) {
            (Some(l), Some(u)) if (u - l).abs() <= 1e-12 * (1.0 + l.abs()) => {
                eq_rows.push((coeff, l))
            }
            (l, u) => {
                if let Some(u) = u {
                    in_rows.push((coeff.clone(), u));
                }
                if let Some(l) = l {
                    in_rows.push((-coeff, -l));
                }
            }
        }
    };
    let (lb, ub) = (row("lb.oqp", nv)?, row("ub.oqp", nv)?);
    for i in 0..nv {
        let mut e = DVector::zeros(nv);
        e[i] = 1.0;
        add(e, lb.as_ref().map(|v| v[i]), ub.as_ref().map(|v| v[i]));
    }
    let (lba, uba) = (row("lbA.oqp", nc)?, row("ubA.oqp", nc)?);
    for i in 0..nc {
        add(
            a.row(i).transpose(),
            lba.as_ref().map(|v| v[i]),
            uba.as_ref().map(|v| v[i]),
        );
    }

    let stack = |rows: &[(DVector<f64>, f64)]| {
        let m = DMatrix::from_fn(rows.len(), nv, |i, j| rows[i].0[j]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        (CsrMatrix::from_dense(&m), b)
    };
    let (ae, be) = stack(&eq_rows);
    let (ai, bi) = stack(&in_rows);
    let h = (&h + h.transpose()) * 0.5;
    Ok(
        QcqpProblem::unconstrained(CsrMatrix::from_dense(&h), g.row(0).transpose())
            .with_equalities(ae, be)
            .with_inequalities(ai, bi),
    )
}

/// Every subdirectory of `root` holding a `dims.oqp`, sorted by name.
/// Problems that fail to import are returned as errors next to their names.
pub fn import_oqp_suite(
    root: &Path,
) -> Result<Vec<(String, Result<QcqpProblem, HarnessError>)>, HarnessError> {
    let entries = std::fs::read_dir(root).map_err(|source| HarnessError::Io {
        path: root.display().to_string(),
        source,
    })?;
    let mut dirs: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("dims.oqp").is_file())
        .collect();
    dirs.sort();
    Ok(dirs
        .into_iter()
        .map(|d| {
            let name = d
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            (name, import_oqp_problem(&d))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub name: String,
    pub tier: Tier,
    pub n: usize,
    pub m_eq: usize,
    pub m_ineq: usize,
    pub n_quad: usize,
    /// Absent when the problem failed validation or import.
    pub status: Option<SolveStatus>,
    pub error: Option<String>,
    pub iterations: usize,
    pub time_s: f64,
    pub kkt_residual: f64,
}

impl BenchRecord {
    pub fn optimal(&self) -> bool {
        self.status == Some(SolveStatus::Optimal)
    }

    fn failed(name: String, tier: Tier, error: String) -> Self {
        Self {
            name,
            tier,
            n: 0,
            m_eq: 0,
            m_ineq: 0,
            n_quad: 0,
            status: None,
            error: Some(error),
            iterations: 0,
            time_s: 0.0,
            kkt_residual: f64::NAN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierStats {
    pub tier: Tier,
    pub problems: usize,
    pub optimal: usize,
    pub optimal_pct: f64,
    /// Over the problems solved to optimality.
    pub median_iterations: f64,
    pub mean_iterations: f64,
    pub median_time_s: f64,
    pub mean_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub tol: f64,
    pub records: Vec<BenchRecord>,
    pub tiers: Vec<TierStats>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl BenchReport {
    pub fn tier(&self, tier: Tier) -> Option<&TierStats> {
        self.tiers.iter().find(|t| t.tier == tier)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per problem.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("name,tier,n,m_eq,m_ineq,n_quad,status,iterations,time_s,kkt_residual\n");
        for r in &self.records {
            let status = r
                .status
                .map_or_else(|| "Error".to_string(), |s| format!("{s:?}"));
            writeln!(
                out,
                "{},{},{},{},{},{},{status},{},{},{}",
                r.name,
                r.tier.name(),
                r.n,
                r.m_eq,
                r.m_ineq,
                r.n_quad,
                r.iterations,
                r.time_s,
                r.kkt_residual
            )
            .expect("writing to a string");
        }
        out
    }

    /// Fixed-width aggregate table for terminals.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>8} {:>9} {:>8} {:>8} {:>12} {:>12}\n",
            "tier", "problems", "optimal%", "med.it", "mean.it", "med.time[s]", "mean.time[s]"
        );
        for t in &self.tiers {
            writeln!(
                out,
                "{:<16} {:>8} {:>9.1} {:>8.1} {:>8.2} {:>12.3e} {:>12.3e}",
                t.tier.name(),
                t.problems,
                t.optimal_pct,
                t.median_iterations,
                t.mean_iterations,
                t.median_time_s,
                t.mean_time_s
            )
            .expect("writing to a string");
        }
        out
    }
}

fn solve_one(name: String, tier: Tier, p: &QcqpProblem, opts: &SolveOptions) -> BenchRecord {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| solve_qcqp(p, opts)));
    let time_s = start.elapsed().as_secs_f64();
    let mut record = BenchRecord {
        name,
        tier,
        n: p.n,
        m_eq: p.n_eq(),
        m_ineq: p.n_lin(),
        n_quad: p.quad.len(),
        status: None,
        error: None,
        iterations: 0,
        time_s,
        kkt_residual: f64::NAN,
    };
    match outcome {
        Ok(Ok(sol)) => {
            record.status = Some(sol.status);
            record.iterations = sol.iterations;
            record.kkt_residual = sol.residuals.max();
        }
        Ok(Err(e)) => record.error = Some(e.to_string()),
        Err(_) => record.error = Some("solver panicked".into()),
    }
    record
}

/// Solves every problem; failures are recorded and never stop the suite.
pub fn run_bench(
    problems: &[BenchProblem],
    failed_imports: Vec<(String, String)>,
    opts: &SolveOptions,
) -> BenchReport {
    let mut records: Vec<BenchRecord> = problems
        .iter()
        .map(|b| solve_one(b.name.clone(), b.tier, &b.problem, opts))
        .collect();
    records.extend(
        failed_imports
            .into_iter()
            .map(|(name, e)| BenchRecord::failed(name, Tier::Imported, e)),
    );

    let mut tiers = Vec::new();
    for tier in [
        Tier::Easy,
        Tier::IllConditioned,
        Tier::Qcqp,
        Tier::Scale,
        Tier::Imported,
    ] {
        let members: Vec<&BenchRecord> = records.iter().filter(|r| r.tier == tier).collect();
        if members.is_empty() {
            continue;
        }
        let solved: Vec<&&BenchRecord> = members.iter().filter(|r| r.optimal()).collect();
        let its: Vec<f64> = solved.iter().map(|r| r.iterations as f64).collect();
        let times: Vec<f64> = solved.iter().map(|r| r.time_s).collect();
        tiers.push(TierStats {
            tier,
            problems: members.len(),
            optimal: solved.len(),
            optimal_pct: 100.0 * solved.len() as f64 / members.len() as f64,
            median_iterations: median(its.clone()),
            mean_iterations: mean(&its),
            median_time_s: median(times.clone()),
            mean_time_s: mean(&times),
        });
    }
    BenchReport {
        tol: opts.tol,
        records,
        tiers,
    }
}

/// Imported collection when `dir` is given, built-in suite otherwise.
pub fn bench_suite(
    dir: Option<&Path>,
    seed: u64,
    opts: &SolveOptions,
) -> Result<BenchReport, HarnessError> {
    match dir {
        None => Ok(run_bench(&synthetic_suite(seed), Vec::new(), opts)),
        Some(dir) => {
            let mut problems = Vec::new();
            let mut failed = Vec::new();
            for (name, p) in import_oqp_suite(dir)? {
                match p {
                    Ok(problem) => problems.push(BenchProblem {
                        name,
                        tier: Tier::Imported,
                        problem,
                    }),
                    Err(e) => failed.push((name, e.to_string())),
                }
            }
            Ok(run_bench(&problems, failed, opts))
        }
    }
}
