//! Symmetric banded storage and an LDLᵀ factorization without pivoting.
//!
//! Intended for quasi-definite matrices `[K Aᵀ; A -D]` (K positive definite,
//! D positive diagonal), which admit an LDLᵀ factorization under any
//! symmetric permutation. Each row stores the columns `i - bw ..= i`.

use nalgebra::DVector;

#[derive(Clone, Debug)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // requires j <= i, i - j <= bw
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Adds `v` at `(i, j)`; the mirrored entry is implied.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let off = self.bw + lo - i;
            let mut acc = 0.0;
            for (k, j) in (lo..i).enumerate() {
                let a = row[off + k];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            acc += row[self.bw] * x[i];
            y[i] += acc;
        }
        y
    }

    /// Factorizes in place of a copy. `expected_sign[i]` is +1 for rows that
    /// must yield positive pivots and -1 for negative ones; a pivot of the
    /// wrong sign or negligible size is reported as `Err(row)`.
    pub fn ldlt(&self, expected_sign: &[f64]) -> Result<BandLdlt, usize> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = self.data.clone();
        let mut d = vec![0.0; n];
        let mut tmp = vec![0.0; w];

        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base_i = i * w;
            // tmp[k - lo] = L_ik * d_k as it becomes available
            for j in lo..i {
                let base_j = j * w;
                let lo_j = j.saturating_sub(bw);
                let kstart = lo.max(lo_j);
                let mut s = l[base_i + bw + j - i];
                for k in kstart..j {
                    s -= tmp[k - lo] * l[base_j + bw + k - j];
                }
                let lij = s / d[j];
                l[base_i + bw + j - i] = lij;
                tmp[j - lo] = lij * d[j];
            }
            let mut di = l[base_i + bw];
            for j in lo..i {
                di -= tmp[j - lo] * l[base_i + bw + j - i];
            }
            let scale = self.data[base_i + bw].abs();
            if !(di * expected_sign[i] > 1e-14 * scale) || !di.is_finite() {
                return Err(i);
            }
            d[i] = di;
            l[base_i + bw] = 1.0;
        }
        Ok(BandLdlt { n, bw, l, d })
    }
}

#[derive(Clone, Debug)]
pub struct BandLdlt {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandLdlt {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = b.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base = i * w;
            let mut s = y[i];
            for j in lo..i {
                s -= self.l[base + bw + j - i] * y[j];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let yi = y[i];
            let lo = i.saturating_sub(bw);
            let base = i * w;
            for j in lo..i {
                y[j] -= self.l[base + bw + j - i] * yi;
            }
        }
        y
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn solves_quasi_definite_tridiagonal() {
        // [2 1 0; 1 -1 1; 0 1 3]
        let mut a = SymBand::zeros(3, 1);
        a.add(0, 0, 2.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 1, 1.0);
        a.add(2, 2, 3.0);
        let f = a.ldlt(&[1.0, -1.0, 1.0]).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = f.solve(&b);
        let dense = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, -1.0, 1.0, 0.0, 1.0, 3.0]);
        assert!((dense * &x - &b).norm() < 1e-12);
        assert!((a.mul_vec(&x) - b).norm() < 1e-12);
    }

    #[test]
    fn reports_singular_pivot() {
        let mut a = SymBand::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        assert_eq!(a.ldlt(&[1.0, 1.0]).unwrap_err(), 1);
    }
}
