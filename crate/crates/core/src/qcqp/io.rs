//! JSON problem and solution documents.
//!
//! Matrices are written as arrays of rows (row-major, dense).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{KktResiduals, QcqpProblem, QcqpSolution, QuadConstraint, SolveStatus};
use crate::linalg::CsrMatrix;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadDocument {
    #[serde(rename = "Q")]
    pub q_mat: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    pub n: usize,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    #[serde(rename = "A_eq", default)]
    pub a_eq: Vec<Vec<f64>>,
    #[serde(default)]
    pub b_eq: Vec<f64>,
    #[serde(rename = "A_ineq", default)]
    pub a_ineq: Vec<Vec<f64>>,
    #[serde(default)]
    pub b_ineq: Vec<f64>,
    #[serde(default)]
    pub quad: Vec<QuadDocument>,
}

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn matrix(field: &str, rows: &[Vec<f64>], ncols: usize) -> Result<CsrMatrix, DocumentError> {
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(DocumentError::Field {
                field: field.to_string(),
                message: format!("row {r} has {} entries, expected {ncols}", row.len()),
            });
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(CsrMatrix::from_dense(&DMatrix::from_row_slice(
        rows.len(),
        ncols,
        &flat,
    )))
}

fn vector(field: &str, v: &[f64], len: usize) -> Result<DVector<f64>, DocumentError> {
    if v.len() != len {
        return Err(DocumentError::Field {
            field: field.to_string(),
            message: format!("has {} entries, expected {len}", v.len()),
        });
    }
    Ok(DVector::from_column_slice(v))
}

fn rows_of(m: &CsrMatrix) -> Vec<Vec<f64>> {
    let d = m.to_dense();
    (0..d.nrows())
        .map(|r| d.row(r).iter().copied().collect())
        .collect()
}

impl ProblemDocument {
    pub fn to_problem(&self) -> Result<QcqpProblem, DocumentError> {
        let n = self.n;
        if self.h.len() != n {
            return Err(DocumentError::Field {
                field: "H".into(),
                message: format!("has {} rows, expected {n}", self.h.len()),
            });
        }
        let h = matrix("H", &self.h, n)?;
        let c = vector("c", &self.c, n)?;
        let a_eq = matrix("A_eq", &self.a_eq, n)?;
        let b_eq = vector("b_eq", &self.b_eq, self.a_eq.len())?;
        let a_ineq = matrix("A_ineq", &self.a_ineq, n)?;
        let b_ineq = vector("b_ineq", &self.b_ineq, self.a_ineq.len())?;
        let mut quad = Vec::with_capacity(self.quad.len());
        for (i, q) in self.quad.iter().enumerate() {
            if q.q_mat.len() != n {
                return Err(DocumentError::Field {
                    field: format!("quad[{i}].Q"),
                    message: format!("has {} rows, expected {n}", q.q_mat.len()),
                });
            }
            let hess = matrix(&format!("quad[{i}].Q"), &q.q_mat, n)?;
            let lin = vector(&format!("quad[{i}].q"), &q.q, n)?;
            let center = q
                .center
                .as_ref()
                .map(|c| vector(&format!("quad[{i}].center"), c, n))
                .transpose()?;
            quad.push(QuadConstraint {
                hessian: hess,
                linear: lin,
                center,
            });
        }
        Ok(QcqpProblem {
            n,
            h,
            c,
            a_eq,
            b_eq,
            a_ineq,
            b_ineq,
            quad,
        })
    }

    pub fn from_problem(p: &QcqpProblem) -> Self {
        Self {
            n: p.n,
            h: rows_of(&p.h),
            c: p.c.iter().copied().collect(),
            a_eq: rows_of(&p.a_eq),
            b_eq: p.b_eq.iter().copied().collect(),
            a_ineq: rows_of(&p.a_ineq),
            b_ineq: p.b_ineq.iter().copied().collect(),
            quad: p
                .quad
                .iter()
                .map(|q| QuadDocument {
                    q_mat: rows_of(&q.hessian),
                    q: q.linear.iter().copied().collect(),
                    center: q.center.as_ref().map(|c| c.iter().copied().collect()),
                })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, DocumentError> {
        serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

pub fn read_problem(path: &Path) -> Result<QcqpProblem, DocumentError> {
    let text = std::fs::read_to_string(path).map_err(|source| DocumentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ProblemDocument::parse(&text)?.to_problem()
}

pub fn write_problem(path: &Path, p: &QcqpProblem) -> Result<(), DocumentError> {
    let text =
        serde_json::to_string_pretty(&ProblemDocument::from_problem(p)).expect("serializable");
    std::fs::write(path, text).map_err(|source| DocumentError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub objective: f64,
    pub solve_time_s: f64,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl From<&QcqpSolution> for SolutionDocument {
    fn from(s: &QcqpSolution) -> Self {
        Self {
            x: s.x.iter().copied().collect(),
            status: s.status,
            iterations: s.iterations,
            residuals: s.residuals,
            objective: s.objective,
            solve_time_s: s.solve_time,
            mu: s.mu.iter().copied().collect(),
            lambda: s.lambda.iter().copied().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_row_names_field() {
        let doc = ProblemDocument::parse(r#"{"n": 2, "H": [[1, 0], [0]], "c": [0, 0]}"#).unwrap();
        let err = doc.to_problem().unwrap_err().to_string();
        assert!(err.contains("`H`") && err.contains("row 1"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        match ProblemDocument::parse("{\n \"n\": 2,\n \"H\": [[1, 0],, [0, 1]]}") {
            Err(DocumentError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn optional_blocks_default_to_empty() {
        let p = ProblemDocument::parse(r#"{"n": 1, "H": [[1]], "c": [-1]}"#)
            .unwrap()
            .to_problem()
            .unwrap();
        assert_eq!(p.n_eq(), 0);
        assert_eq!(p.n_ineq(), 0);
    }
}
