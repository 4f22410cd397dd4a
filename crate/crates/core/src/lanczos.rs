//! Iterative solver for the algebraically smallest eigenpairs of a sparse
//! symmetric matrix.
//!
//! Lanczos with full reorthogonalization, run on the reflected operator
//! `B = sigma*I - A` where `sigma` is a Gershgorin upper bound of `A`. The
//! largest eigenvalues of `B` are the smallest of `A`, and Krylov spaces
//! resolve the large end of a spectrum first. The Krylov dimension doubles
//! until the wanted Ritz pairs meet the residual tolerance, reaching a full
//! tridiagonalization at `m = n` in the worst case.
//!
//! The start vector comes from a fixed internal seed, so the solve is a pure
//! function of the matrix.

use ndarray::{Array1, Array2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::fix_sign;
use crate::sparse::SparseSym;

const START_SEED: u64 = 0x5eed_1a2c_905b_17e3;
const MAX_QL_ITER: usize = 50;

/// The `k` requested eigenpairs: `values` ascend, `vectors` holds matching
/// unit eigenvectors as columns, sign-fixed.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
    /// Largest residual `||A v - lambda v||` over the returned pairs.
    pub residual: f64,
}

/// Computes the `k` algebraically smallest eigenpairs of `a` to residual
/// tolerance `tol` (scaled by the spectral magnitude of `a`).
pub fn smallest_eigenpairs(a: &SparseSym, k: usize, tol: f64) -> Result<EigenPairs> {
    let n = a.n();
    if k == 0 {
        return Err(Error::InvalidArgument("requested 0 eigenpairs".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs of a {n}x{n} matrix"
        )));
    }

    let sigma = a.gershgorin_upper();
    let scale = sigma.abs().max(1.0);
    let accept = tol * scale;
    // Aim two orders tighter than the contract; settle for the contract once
    // the Krylov space is the whole space.
    let target = accept * 1e-2;

    let mut m = n.min((4 * k + 20).max(60));
    let mut iterations = 0;
    loop {
        let (alphas, betas, basis) = lanczos_run(a, sigma, m)?;
        iterations += alphas.len();
        let pairs = ritz_pairs(a, sigma, &alphas, &betas, &basis, k)?;
        let converged_tight = pairs.residual <= target;
        let at_full_dimension = m >= n;
        if converged_tight || (at_full_dimension && pairs.residual <= accept) {
            return Ok(pairs);
        }
        if at_full_dimension {
            return Err(Error::NoConvergence {
                residual: pairs.residual,
                tol: accept,
                iterations,
            });
        }
        m = n.min(m * 2);
    }
}

/// One Lanczos pass of `m` steps on `B = sigma*I - A`, with full
/// reorthogonalization (two classical Gram-Schmidt passes per step).
/// Breakdown restarts the recurrence with a fresh random direction, leaving
/// a zero coupling in the tridiagonal matrix, which is harmless: the block
/// spectra union to the same Ritz problem.
fn lanczos_run(
    a: &SparseSym,
    sigma: f64,
    m: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.n();
    let scale = sigma.abs().max(1.0);
    let breakdown = 1e-12 * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED ^ (n as u64));

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    basis.push(random_unit(n, &mut rng));

    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m.saturating_sub(1));
    let mut av = vec![0.0; n];

    for j in 0..m {
        let vj = basis[j].clone();
        a.matvec(&vj, &mut av);
        // w = B v_j = sigma v_j - A v_j
        let mut w: Vec<f64> = vj
            .iter()
            .zip(&av)
            .map(|(&v, &product)| sigma * v - product)
            .collect();
        if j > 0 {
            let beta_prev = betas[j - 1];
            for (wi, pi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= beta_prev * pi;
            }
        }
        let alpha = dot(&vj, &w);
        for (wi, vi) in w.iter_mut().zip(&vj) {
            *wi -= alpha * vi;
        }
        for _ in 0..2 {
            for u in &basis {
                let c = dot(u, &w);
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= c * ui;
                }
            }
        }
        alphas.push(alpha);

        if j + 1 == m {
            break;
        }
        let beta = dot(&w, &w).sqrt();
        if beta <= breakdown {
            // Invariant subspace found; continue in a fresh direction.
            let mut fresh = random_unit(n, &mut rng);
            for _ in 0..2 {
                for u in &basis {
                    let c = dot(u, &fresh);
                    for (fi, ui) in fresh.iter_mut().zip(u) {
                        *fi -= c * ui;
                    }
                }
            }
            let norm = dot(&fresh, &fresh).sqrt();
            if norm <= f64::MIN_POSITIVE.sqrt() {
                // The basis already spans the space.
                betas.push(0.0);
                basis.push(vec![0.0; n]);
                break;
            }
            for fi in fresh.iter_mut() {
                *fi /= norm;
            }
            betas.push(0.0);
            basis.push(fresh);
        } else {
            for wi in w.iter_mut() {
                *wi /= beta;
            }
            betas.push(beta);
            basis.push(w);
        }
    }
    Ok((alphas, betas, basis))
}

/// Extracts the `k` Ritz pairs corresponding to the smallest eigenvalues of
/// `A` and measures their true residuals against `A`.
fn ritz_pairs(
    a: &SparseSym,
    sigma: f64,
    alphas: &[f64],
    betas: &[f64],
    basis: &[Vec<f64>],
    k: usize,
) -> Result<EigenPairs> {
    let n = a.n();
    let m = alphas.len();
    let mut d = alphas.to_vec();
    let mut e = betas.to_vec();
    e.resize(m, 0.0);
    let mut z = Array2::<f64>::eye(m);
    tridiag_ql(&mut d, &mut e, &mut z)?;

    // Largest Ritz values of B = smallest of A. `tridiag_ql` sorts ascending.
    let mut values = Array1::<f64>::zeros(k);
    let mut vectors = Array2::<f64>::zeros((n, k));
    let mut worst = 0.0f64;
    let mut av = vec![0.0; n];
    for out in 0..k {
        let src = m - 1 - out;
        let lambda = sigma - d[src];
        let mut y = vec![0.0; n];
        for (j, basis_vec) in basis.iter().enumerate().take(m) {
            let c = z[[j, src]];
            if c != 0.0 {
                for (yi, bi) in y.iter_mut().zip(basis_vec) {
                    *yi += c * bi;
                }
            }
        }
        let norm = dot(&y, &y).sqrt();
        if norm <= f64::MIN_POSITIVE.sqrt() {
            return Err(Error::Degenerate(
                "Ritz vector collapsed to zero; Krylov space too small".into(),
            ));
        }
        for yi in y.iter_mut() {
            *yi /= norm;
        }
        a.matvec(&y, &mut av);
        let mut res = 0.0;
        for (&ayi, &yi) in av.iter().zip(&y) {
            let r = ayi - lambda * yi;
            res += r * r;
        }
        worst = worst.max(res.sqrt());

        fix_sign(&mut y);
        // theta descends over `out`, so lambda = sigma - theta ascends.
        let slot = out;
        values[slot] = lambda;
        for (row, &yi) in y.iter().enumerate() {
            vectors[[row, slot]] = yi;
        }
    }
    Ok(EigenPairs {
        values,
        vectors,
        residual: worst,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Implicit-shift QL eigensolver for a symmetric tridiagonal matrix with
/// diagonal `d` and subdiagonal `e` (`e[i]` couples `i` and `i+1`;
/// `e[m-1]` is scratch). Eigenvalues land in `d` ascending; the matching
/// eigenvectors are accumulated into the columns of `z`.
fn tridiag_ql(d: &mut [f64], e: &mut [f64], z: &mut Array2<f64>) -> Result<()> {
    let m = d.len();
    debug_assert_eq!(e.len(), m);
    if m == 0 {
        return Err(Error::Empty("tridiagonal eigenproblem of size 0"));
    }
    e[m - 1] = 0.0;

    for l in 0..m {
        let mut iter = 0;
        loop {
            let mut mm = l;
            while mm + 1 < m {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITER {
                return Err(Error::NoConvergence {
                    residual: e[l].abs(),
                    tol: f64::EPSILON,
                    iterations: iter,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[mm] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            let mut i = mm as isize - 1;
            while i >= l as isize {
                let iu = i as usize;
                let mut f = s * e[iu];
                let b = c * e[iu];
                r = f.hypot(g);
                e[iu + 1] = r;
                if r == 0.0 {
                    d[iu + 1] -= p;
                    e[mm] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[iu + 1] - p;
                r = (d[iu] - g) * s + 2.0 * c * b;
                p = s * r;
                d[iu + 1] = g + p;
                g = c * r - b;
                for k in 0..m {
                    f = z[[k, iu + 1]];
                    z[[k, iu + 1]] = s * z[[k, iu]] + c * f;
                    z[[k, iu]] = c * z[[k, iu]] - s * f;
                }
                i -= 1;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }

    // Ascending sort with matching column permutation.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let dc = d.to_vec();
    let zc = z.clone();
    for (dst, &src) in order.iter().enumerate() {
        d[dst] = dc[src];
        z.column_mut(dst).assign(&zc.column(src));
    }
    Ok(())
}
