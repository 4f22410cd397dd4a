//! Sparse symmetric matrices in compressed sparse row form.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Symmetric sparse matrix. Both triangles are stored, rows are sorted by
/// column, duplicates have been merged.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Assembles from unordered `(row, col, value)` triplets; duplicates
    /// accumulate. The caller is responsible for emitting a symmetric set.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= n || c >= n {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r}, {c}) out of range for a {n}x{n} matrix"
                )));
            }
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }

        let mut row_ptr = vec![0usize; n + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = merged.iter().map(|t| t.1).collect();
        let vals = merged.iter().map(|t| t.2).collect();
        Ok(SparseSym {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Entries of row `r` as parallel `(columns, values)` slices.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    /// `y = A x`. Rows are independent, so the parallel form is
    /// deterministic: each output slot is one sequential dot product.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        y.par_iter_mut().enumerate().for_each(|(r, out)| {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            *out = acc;
        });
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// Gershgorin upper bound on the largest eigenvalue:
    /// `max_r (a_rr + sum_{c != r} |a_rc|)`.
    pub fn gershgorin_upper(&self) -> f64 {
        let mut bound = f64::NEG_INFINITY;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            let mut diag = 0.0;
            let mut radius = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c == r {
                    diag = v;
                } else {
                    radius += v.abs();
                }
            }
            bound = bound.max(diag + radius);
        }
        if bound.is_finite() {
            bound
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.n, self.n));
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[[r, c]] += v;
            }
        }
        out
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`; useful in tests.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let mirrored = self.get(c, r);
                worst = worst.max((v - mirrored).abs());
            }
        }
        worst
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assembles_and_merges_duplicates() {
        let a = SparseSym::from_triplets(
            3,
            vec![(0, 1, 1.0), (1, 0, 1.0), (0, 1, 2.0), (2, 2, 5.0), (1, 0, 2.0)],
        )
        .unwrap();
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(2, 2), 5.0);
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = SparseSym::from_triplets(
            4,
            vec![
                (0, 0, 2.0),
                (0, 3, -1.0),
                (3, 0, -1.0),
                (1, 1, 1.5),
                (2, 1, 0.5),
                (1, 2, 0.5),
                (3, 3, 4.0),
            ],
        )
        .unwrap();
        let x = vec![1.0, -2.0, 3.0, 0.5];
        let y = a.matvec_alloc(&x);
        let dense = a.to_dense();
        for r in 0..4 {
            let want: f64 = (0..4).map(|c| dense[[r, c]] * x[c]).sum();
            assert!((y[r] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn gershgorin_bounds_largest_eigenvalue() {
        // 1D chain Laplacian: eigenvalues in [0, 4], bound is 4.
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            let mut deg = 0.0;
            if i > 0 {
                t.push((i, i - 1, -1.0));
                deg += 1.0;
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                deg += 1.0;
            }
            t.push((i, i, deg));
        }
        let a = SparseSym::from_triplets(n, t).unwrap();
        assert!((a.gershgorin_upper() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(SparseSym::from_triplets(2, vec![(0, 2, 1.0)]).is_err());
    }
}
