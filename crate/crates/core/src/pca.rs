//! Principal-component reduction of a scan's waveform matrix.
//!
//! The `V x T` matrix of voxel waveforms is centered by the mean waveform
//! and rotated onto its right singular vectors; the leading `d` columns of
//! the rotated matrix are the reduced representation. This is the linear
//! baseline the locally linear embedding is compared against.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigh, jacobi_svd};

/// A fitted principal-component model of one waveform matrix.
#[derive(Debug, Clone)]
pub struct PcaModel {
    /// Mean waveform, length `T`.
    pub mean: Array1<f64>,
    /// `T x T` orthogonal rotation; column `i` is the direction of the
    /// `i`-th largest variance, sign-fixed so its largest-magnitude entry
    /// is positive.
    pub rotation: Array2<f64>,
    /// Singular values of the centered matrix, non-increasing.
    pub singular_values: Array1<f64>,
}

impl PcaModel {
    /// Fits the model to a `V x T` matrix. Tall matrices (`V > 4T`) go
    /// through the `T x T` Gram matrix; the rest through a direct SVD.
    pub fn fit(x: ArrayView2<f64>) -> Result<PcaModel> {
        let (v, t) = (x.nrows(), x.ncols());
        if v == 0 || t == 0 {
            return Err(Error::Empty("PCA of an empty matrix"));
        }
        let mean = x.mean_axis(Axis(0)).unwrap();
        let xc = &x - &mean;

        let (rotation, singular_values) = if v > 4 * t {
            let gram = xc.t().dot(&xc);
            let eig = jacobi_eigh(gram.view())?;
            let mut rot = Array2::<f64>::zeros((t, t));
            let mut sv = Array1::<f64>::zeros(t);
            for i in 0..t {
                let src = t - 1 - i;
                rot.column_mut(i).assign(&eig.vectors.column(src));
                sv[i] = eig.values[src].max(0.0).sqrt();
            }
            (rot, sv)
        } else {
            let svd = jacobi_svd(xc.view())?;
            (svd.v, svd.s)
        };

        Ok(PcaModel {
            mean,
            rotation,
            singular_values,
        })
    }

    /// Projects a `V x T` matrix onto the first `d` components, returning
    /// the `V x d` score matrix.
    pub fn scores(&self, x: ArrayView2<f64>, d: usize) -> Result<Array2<f64>> {
        let t = self.mean.len();
        if x.ncols() != t {
            return Err(Error::DimMismatch(format!(
                "matrix has {} columns, model was fit on {t}",
                x.ncols()
            )));
        }
        if d == 0 || d > t {
            return Err(Error::InvalidArgument(format!(
                "component count {d} must lie in 1..={t}"
            )));
        }
        let xc = &x - &self.mean;
        Ok(xc.dot(&self.rotation.slice(s![.., ..d])))
    }

    /// Fraction of total variance carried by the first `d` components.
    pub fn variance_explained(&self, d: usize) -> f64 {
        variance_explained(self.singular_values.as_slice().unwrap(), d)
    }
}

/// Fits a model to `x` and returns its first `d` score columns together
/// with the model.
pub fn pca_reconstruct(x: ArrayView2<f64>, d: usize) -> Result<(Array2<f64>, PcaModel)> {
    let model = PcaModel::fit(x)?;
    let z = model.scores(x, d)?;
    Ok((z, model))
}

/// Fraction of total variance (squared singular values) in the `d` largest
/// entries of `sigma`. Input order is irrelevant; an all-zero spectrum
/// yields 0.
pub fn variance_explained(sigma: &[f64], d: usize) -> f64 {
    let mut lambda: Vec<f64> = sigma.iter().map(|x| x * x).collect();
    lambda.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = lambda.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let head: f64 = lambda.iter().take(d).sum();
    head / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(v: usize, t: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::<f64>::zeros((v, t));
        x.mapv_inplace(|_| rng.random::<f64>() * 2.0 - 1.0);
        x
    }

    #[test]
    fn variance_explained_known_values() {
        assert!((variance_explained(&[3.0, 4.0], 1) - 0.64).abs() < 1e-15);
        assert_eq!(variance_explained(&[2.0, 0.0, 0.0], 1), 1.0);
        assert_eq!(variance_explained(&[5.0, 1.0], 2), 1.0);
        assert_eq!(variance_explained(&[0.0, 0.0], 1), 0.0);
    }

    #[test]
    fn full_rank_projection_is_lossless() {
        let x = random_matrix(12, 5, 3);
        let (z, model) = pca_reconstruct(x.view(), 5).unwrap();
        let xc = &x - &model.mean;
        let back = z.dot(&model.rotation.t());
        let err = (&back - &xc).mapv(f64::abs).sum();
        assert!(err < 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn rank_one_matrix_needs_one_component() {
        let wave = array![1.0, -2.0, 0.5, 3.0];
        let mut x = Array2::<f64>::zeros((6, 4));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let c = i as f64 - 2.0;
            row.assign(&(&wave * c));
        }
        let model = PcaModel::fit(x.view()).unwrap();
        assert!((model.variance_explained(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_orthogonal_and_values_descend() {
        for (v, t) in [(9, 4), (30, 3), (4, 6)] {
            let x = random_matrix(v, t, v as u64 * 31 + t as u64);
            let model = PcaModel::fit(x.view()).unwrap();
            let btb = model.rotation.t().dot(&model.rotation);
            for i in 0..t {
                for j in 0..t {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((btb[[i, j]] - want).abs() < 1e-8);
                }
            }
            for i in 1..t {
                assert!(model.singular_values[i - 1] >= model.singular_values[i] - 1e-12);
            }
        }
    }

    #[test]
    fn gram_route_matches_direct_svd() {
        // 50 x 3 takes the Gram route; force the direct route on the same
        // data by fitting the transpose-shaped threshold case manually.
        let x = random_matrix(50, 3, 17);
        let model = PcaModel::fit(x.view()).unwrap();
        let xc = &x - &x.mean_axis(Axis(0)).unwrap();
        let svd = jacobi_svd(xc.view()).unwrap();
        for i in 0..3 {
            assert!((model.singular_values[i] - svd.s[i]).abs() < 1e-9);
            for r in 0..3 {
                assert!((model.rotation[[r, i]] - svd.v[[r, i]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn reconstruction_error_is_non_increasing_in_d() {
        let x = random_matrix(15, 6, 8);
        let model = PcaModel::fit(x.view()).unwrap();
        let xc = &x - &model.mean;
        let mut prev = f64::INFINITY;
        for d in 1..=6 {
            let z = model.scores(x.view(), d).unwrap();
            let back = z.dot(&model.rotation.slice(s![.., ..d]).t());
            let err = (&back - &xc).mapv(|e| e * e).sum();
            assert!(err <= prev + 1e-12);
            prev = err;
        }
    }

    #[test]
    fn singular_values_survive_orthogonal_rotation() {
        let t = 5;
        let x = random_matrix(20, t, 4);
        // Householder reflection as the orthogonal factor.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut h = Array1::<f64>::zeros(t);
        h.mapv_inplace(|_| rng.random::<f64>() - 0.5);
        let nh = h.dot(&h);
        let mut q = Array2::<f64>::eye(t);
        for i in 0..t {
            for j in 0..t {
                q[[i, j]] -= 2.0 * h[i] * h[j] / nh;
            }
        }
        let a = PcaModel::fit(x.view()).unwrap();
        let b = PcaModel::fit(x.dot(&q).view()).unwrap();
        for i in 0..t {
            assert!((a.singular_values[i] - b.singular_values[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_empty_and_bad_dimension() {
        assert!(PcaModel::fit(Array2::<f64>::zeros((0, 3)).view()).is_err());
        let x = random_matrix(5, 3, 1);
        let model = PcaModel::fit(x.view()).unwrap();
        assert!(model.scores(x.view(), 0).is_err());
        assert!(model.scores(x.view(), 4).is_err());
        assert!(model.scores(random_matrix(5, 2, 2).view(), 1).is_err());
    }
}
