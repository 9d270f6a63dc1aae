//! Linear algebra support shared by the solver layers.

pub mod banded;
pub mod ordering;
pub mod sparse;

pub use banded::{BandLdlt, SymBand};
pub use ordering::{reverse_cuthill_mckee, Ordering};
pub use sparse::{CsrMatrix, SparseVec};

use nalgebra::{DMatrix, SymmetricEigen};

/// Smallest eigenvalue of a symmetric sparse matrix.
///
/// The nonzero pattern is split into connected components and each block is
/// decomposed densely, so block-diagonal matrices stay cheap. Returns 0 for
/// an all-zero matrix.
pub fn min_eigenvalue(m: &CsrMatrix) -> f64 {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (r, c, _) in m.triplets() {
        let (a, b) = (find(&mut parent, r), find(&mut parent, c));
        if a != b {
            parent[a] = b;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut touched = vec![false; n];
    for (r, c, _) in m.triplets() {
        touched[r] = true;
        touched[c] = true;
    }
    for i in (0..n).filter(|&i| touched[i]) {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut local = vec![usize::MAX; n];
    let mut min_eig = if touched.iter().all(|&t| t) {
        f64::INFINITY
    } else {
        0.0
    };
    for members in groups.values() {
        for (k, &i) in members.iter().enumerate() {
            local[i] = k;
        }
        let mut block = DMatrix::zeros(members.len(), members.len());
        for &i in members {
            let (cols, vals) = m.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                block[(local[i], local[c])] = v;
            }
        }
        let sym = (&block + block.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym).eigenvalues.min();
        min_eig = min_eig.min(eig);
    }
    if min_eig == f64::INFINITY {
        0.0
    } else {
        min_eig
    }
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Eigenvalues within `-tol` of zero are clipped; `None` if any is below that.
pub fn psd_sqrt(m: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return None;
    }
    let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Some(v * DMatrix::from_diagonal(&sqrt_l) * v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_eigenvalue_of_block_diagonal() {
        let m = CsrMatrix::from_triplets(
            4,
            4,
            &[
                (0, 0, 2.0),
                (1, 1, 1.0),
                (1, 2, 2.0),
                (2, 1, 2.0),
                (2, 2, 1.0),
            ],
        );
        // block [[1,2],[2,1]] has eigenvalues -1, 3; row 3 is empty
        assert!((min_eigenvalue(&m) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = psd_sqrt(&m, 1e-12).unwrap();
        assert!((&r * &r - m).norm() < 1e-12);
        assert!(psd_sqrt(&DMatrix::from_diagonal_element(2, 2, -1.0), 1e-9).is_none());
    }
}
