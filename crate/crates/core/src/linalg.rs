//! Dense symmetric eigendecomposition and thin SVD.
//!
//! The dense problems in this crate are small: local Gram matrices (a few
//! hundred rows at most), `T x T` covariance blocks, and dense oracles in
//! tests. Classic Jacobi algorithms fit well at these sizes: unconditionally
//! convergent, highly accurate, and free of external solver dependencies.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix. Values ascend; `vectors`
/// holds the matching eigenvectors as columns, each with its
/// largest-magnitude entry positive.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl SymEigen {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Cyclic Jacobi eigendecomposition. The input is symmetrized as
/// `(A + A^T) / 2` before iteration, so mild asymmetry from accumulated
/// round-off is tolerated.
pub fn jacobi_eigh(a: ArrayView2<f64>) -> Result<SymEigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::Empty("eigendecomposition of a 0x0 matrix"));
    }

    // Flat row-major buffers; only the upper triangle of `m` is kept
    // current through the sweeps, which halves the rotation work.
    let mut m = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    let mut sweeps = 0;
    loop {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s += 2.0 * m[i * n + j] * m[i * n + j];
                }
            }
            s.sqrt()
        };
        if off <= 1e-15 * norm {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NoConvergence {
                residual: off,
                tol: 1e-15 * norm,
                iterations: sweeps,
            });
        }
        sweeps += 1;

        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (m[q * n + q] - m[p * n + p]) / apq;
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[p * n + p] -= t * apq;
                m[q * n + q] += t * apq;
                m[p * n + q] = 0.0;

                let rot = |m: &mut [f64], i: usize, j: usize| {
                    let x = m[i];
                    let y = m[j];
                    m[i] = x - s * (y + tau * x);
                    m[j] = y + s * (x - tau * y);
                };
                for j in 0..p {
                    rot(&mut m, j * n + p, j * n + q);
                }
                for j in (p + 1)..q {
                    rot(&mut m, p * n + j, j * n + q);
                }
                for j in (q + 1)..n {
                    rot(&mut m, p * n + j, q * n + j);
                }
                for r in 0..n {
                    rot(&mut v, r * n + p, r * n + q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].partial_cmp(&m[j * n + j]).unwrap());

    let mut values = Array1::<f64>::zeros(n);
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = m[src * n + src];
        let mut col: Vec<f64> = (0..n).map(|r| v[r * n + src]).collect();
        fix_sign(&mut col);
        for (r, x) in col.into_iter().enumerate() {
            vectors[[r, dst]] = x;
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Makes the largest-magnitude entry of `v` positive (first such entry on
/// ties). A fixed orientation keeps downstream output deterministic.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Thin SVD `A = U diag(s) V^T` with singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m x n`, orthonormal columns where the singular value is nonzero.
    pub u: Array2<f64>,
    /// Length `n`, descending, non-negative.
    pub s: Array1<f64>,
    /// `n x n`, right singular vectors as columns, sign-fixed.
    pub v: Array2<f64>,
}

/// One-sided Jacobi SVD (Hestenes). Columns of `A` are rotated pairwise
/// until mutually orthogonal; their norms are the singular values.
pub fn jacobi_svd(a: ArrayView2<f64>) -> Result<Svd> {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return Err(Error::Empty("SVD of an empty matrix"));
    }
    let mut u = a.to_owned();
    let mut v = Array2::<f64>::eye(n);

    for sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..m {
                    let up = u[[r, p]];
                    let uq = u[[r, q]];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (zeta * zeta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = c * t;
                for r in 0..m {
                    let up = u[[r, p]];
                    let uq = u[[r, q]];
                    u[[r, p]] = c * up - s * uq;
                    u[[r, q]] = s * up + c * uq;
                }
                for r in 0..n {
                    let vp = v[[r, p]];
                    let vq = v[[r, q]];
                    v[[r, p]] = c * vp - s * vq;
                    v[[r, q]] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
        if sweep + 1 == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                residual: f64::NAN,
                tol: 0.0,
                iterations: MAX_SWEEPS,
            });
        }
    }

    let mut s = Array1::<f64>::zeros(n);
    for j in 0..n {
        s[j] = u.column(j).iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap());

    let smax = order.first().map(|&i| s[i]).unwrap_or(0.0);
    let mut us = Array2::<f64>::zeros((m, n));
    let mut vs = Array2::<f64>::zeros((n, n));
    let mut ss = Array1::<f64>::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        ss[dst] = s[src];
        let mut vcol = v.column(src).to_owned();
        let mut ucol = u.column(src).to_owned();
        if ss[dst] > smax * 1e-300 && ss[dst] > 0.0 {
            ucol.mapv_inplace(|x| x / ss[dst]);
        }
        // Sign convention lives on the right singular vector; U flips along.
        let flip = {
            let mut best = 0;
            for (i, x) in vcol.iter().enumerate() {
                if x.abs() > vcol[best].abs() {
                    best = i;
                }
            }
            vcol[best] < 0.0
        };
        if flip {
            vcol.mapv_inplace(|x| -x);
            ucol.mapv_inplace(|x| -x);
        }
        us.column_mut(dst).assign(&ucol);
        vs.column_mut(dst).assign(&vcol);
    }
    Ok(Svd { u: us, s: ss, v: vs })
}

/// Relative eigenvalue cutoff for the spectral pseudoinverse. Chosen well
/// above the round-off floor of an exactly singular Gram (~1e-15 of the top
/// eigenvalue) and well below any eigenvalue generic data produces.
pub const PINV_RCOND: f64 = 1e-12;

/// Applies the Moore-Penrose pseudoinverse of the symmetric PSD matrix
/// behind `eig` to `b`: eigenvalues at or below `rcond * lambda_max` are
/// treated as zero.
pub fn pinv_apply(eig: &SymEigen, b: ArrayView1<f64>, rcond: f64) -> Array1<f64> {
    let n = eig.len();
    debug_assert_eq!(b.len(), n);
    let lmax = eig.values.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let cut = rcond * lmax;
    let mut out = Array1::<f64>::zeros(n);
    for k in 0..n {
        let lambda = eig.values[k];
        if lambda > cut {
            let q = eig.vectors.column(k);
            let coeff = q.dot(&b) / lambda;
            out.scaled_add(coeff, &q);
        }
    }
    out
}
