//! Locally linear embedding of a 4D scan over its spatial grid.
//!
//! Each voxel's waveform is approximated as an affine combination of its
//! spatial neighbors' waveforms. Per voxel `i` with neighbor set `N(i)`:
//!
//! 1. The columns of `C_i` (`T x K_i`) are the neighbor waveform
//!    differences; the local Gram is `G_i = C_i^T C_i + xi*I`.
//! 2. Base weights solve the constrained least-squares fit through the
//!    pseudoinverse, `w ∝ G_i^+ 1`, rescaled to sum 1.
//! 3. A spectral tail rule picks `s_i >= 1` weight vectors per voxel: the
//!    eigenvector matrix of `G_i` is combined with a Householder reflection
//!    of the base weights, which guards the embedding against locally
//!    degenerate fits. The tail threshold `eta` is the median tail ratio
//!    over all voxels.
//! 4. The weight vectors assemble a sparse alignment matrix `Phi`; its
//!    bottom eigenvectors, after dropping the constant direction, are the
//!    spatial modes `Z` (`V x d`, orthonormal columns, zero column sums).
//!
//! With `s_i = 1` everywhere the construction reduces to plain locally
//! linear embedding and the constant vector lies exactly in the null space
//! of `Phi`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{validate_scan, ClassLabel, GridDims, NeighborhoodSpec, ScanVolume};
use crate::lanczos::smallest_eigenpairs;
use crate::linalg::{fix_sign, jacobi_eigh, pinv_apply, SymEigen, PINV_RCOND};
use crate::sparse::SparseSym;

/// Which eigenvectors of the local Gram feed the multi-weight construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigvecChoice {
    /// Eigenvectors of the `s_i` smallest eigenvalues (the directions the
    /// tail rule actually measures). Default.
    SmallestEigenvalues,
    /// First `s_i` columns in descending eigenvalue order.
    LargestEigenvalues,
}

/// Normalization of the mixing coefficient `alpha_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaNorm {
    /// `alpha_i = ||V_i^T 1||^2 / sqrt(s_i)`. Default.
    SquaredNorm,
    /// `alpha_i = ||V_i^T 1|| / sqrt(s_i)`, the variant under which every
    /// weight column sums to exactly 1.
    Norm,
}

/// How the per-voxel weight-vector count `s_i` is determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SRule {
    /// Tail rule evaluated at the embedding dimension `d`. Default.
    TargetDim,
    /// Tail rule evaluated at dimension 1 regardless of `d`.
    UnitDim,
}

/// Embedding configuration. `Default` gives the standard pipeline settings.
#[derive(Debug, Clone, Copy)]
pub struct EmbedConfig {
    /// Chebyshev neighborhood radius, `>= 1`.
    pub radius: usize,
    /// Tikhonov term added to the local Gram diagonal, `>= 0`.
    pub xi: f64,
    pub eigvec_choice: EigvecChoice,
    pub alpha_norm: AlphaNorm,
    pub s_rule: SRule,
    /// Residual tolerance of the bottom-eigenpair solve.
    pub solver_tol: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            radius: 1,
            xi: 0.0,
            eigvec_choice: EigvecChoice::SmallestEigenvalues,
            alpha_norm: AlphaNorm::SquaredNorm,
            s_rule: SRule::TargetDim,
            solver_tol: 1e-8,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::InvalidArgument("neighborhood radius must be >= 1".into()));
        }
        if !(self.xi >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Gram regularization must be non-negative, got {}",
                self.xi
            )));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Neighbor waveform differences of voxel `i`: column `k` holds
/// `x_{N(i)[k]} - x_i`, shape `T x K`.
pub fn center_neighbors(scan: &ScanVolume, i: usize, neighbors: &[usize]) -> Array2<f64> {
    let t = scan.dims().t;
    let mut c = Array2::<f64>::zeros((t, neighbors.len()));
    let xi = scan.waveform(i);
    for (k, &j) in neighbors.iter().enumerate() {
        let xj = scan.waveform(j);
        for (ti, (a, b)) in xj.iter().zip(xi).enumerate() {
            c[[ti, k]] = a - b;
        }
    }
    c
}

/// Local Gram `G = C^T C + xi*I`.
pub fn local_gram(c: ArrayView2<f64>, xi: f64) -> Result<Array2<f64>> {
    if !(xi >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Gram regularization must be non-negative, got {xi}"
        )));
    }
    let mut g = c.t().dot(&c);
    for i in 0..g.nrows() {
        g[[i, i]] += xi;
    }
    Ok(g)
}

/// Base reconstruction weights for one voxel: `w ∝ G^+ 1`, rescaled to sum
/// 1. A raw solution summing to (numerically) zero falls back to uniform
/// weights.
pub fn lle_weights(gram: ArrayView2<f64>) -> Result<Array1<f64>> {
    let eig = jacobi_eigh(gram)?;
    Ok(base_weights(&eig))
}

fn base_weights(eig: &SymEigen) -> Array1<f64> {
    let k = eig.len();
    let ones = Array1::<f64>::ones(k);
    let raw = pinv_apply(eig, ones.view(), PINV_RCOND);
    let total: f64 = raw.sum();
    if total.abs() < 1e-12 {
        Array1::from_elem(k, 1.0 / k as f64)
    } else {
        raw / total
    }
}

/// Eigendecompositions of every voxel's local Gram.
pub fn gram_spectra(
    scan: &ScanVolume,
    neighborhoods: &NeighborhoodSpec,
    xi: f64,
) -> Result<Vec<SymEigen>> {
    check_neighborhood(scan, neighborhoods)?;
    (0..neighborhoods.n_voxels())
        .into_par_iter()
        .map(|i| {
            let c = center_neighbors(scan, i, neighborhoods.neighbors(i));
            let g = local_gram(c.view(), xi)?;
            jacobi_eigh(g.view())
        })
        .collect()
}

/// Tail ratio of one Gram spectrum at dimension `d`: the summed eigenvalue
/// mass outside the top `d` directions over the mass inside them. A zero
/// denominator ranks as `+inf`.
fn tail_ratio(eig: &SymEigen, d: usize) -> f64 {
    let k = eig.len();
    let dd = d.min(k);
    let tail: f64 = eig.values.iter().take(k - dd).sum();
    let total: f64 = eig.values.iter().sum();
    let head = total - tail;
    if head <= 0.0 {
        f64::INFINITY
    } else {
        tail / head
    }
}

/// Median tail ratio over all voxels: the threshold the per-voxel
/// weight-vector count is measured against.
pub fn compute_eta(spectra: &[SymEigen], d: usize) -> Result<f64> {
    if spectra.is_empty() {
        return Err(Error::Empty("eta over an empty spectrum set"));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("eta needs d >= 1".into()));
    }
    let mut rho: Vec<f64> = spectra.iter().map(|e| tail_ratio(e, d)).collect();
    rho.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(rho[spectra.len().div_ceil(2) - 1])
}

/// Largest `ell <= K - d` whose bottom-`ell` eigenvalue mass stays below
/// `eta` times the remaining mass; at least 1.
fn pick_s(eig: &SymEigen, d: usize, eta: f64) -> usize {
    let k = eig.len();
    if k <= d {
        return 1;
    }
    let total: f64 = eig.values.iter().sum();
    let mut best = 1;
    let mut tail = 0.0;
    for ell in 1..=(k - d) {
        tail += eig.values[ell - 1];
        let head = total - tail;
        let ratio = if head <= 0.0 { f64::INFINITY } else { tail / head };
        if ratio < eta {
            best = ell;
        }
    }
    best
}

/// The weight vectors of a single voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelWeights {
    /// `K x s` matrix; column `ell` is the `ell`-th weight vector over the
    /// neighbor list.
    pub vectors: Array2<f64>,
    /// The base (single-vector) weights, always summing to 1.
    pub base: Array1<f64>,
    pub alpha: f64,
    pub s: usize,
}

/// Multi-vector weights for one voxel given its Gram spectrum and base
/// weights. `s = 1` (including the forced `K <= d` case) short-circuits to
/// the base weights.
pub fn mlle_weights(
    eig: &SymEigen,
    base: &Array1<f64>,
    d: usize,
    eta: f64,
    cfg: &EmbedConfig,
) -> VoxelWeights {
    let k = eig.len();
    let d_eff = match cfg.s_rule {
        SRule::TargetDim => d,
        SRule::UnitDim => 1,
    };
    let s = if k <= d_eff { 1 } else { pick_s(eig, d_eff, eta) };
    if s == 1 {
        return VoxelWeights {
            vectors: base.clone().insert_axis(Axis(1)),
            base: base.clone(),
            alpha: 0.0,
            s: 1,
        };
    }

    // Selected eigenvector block V_i, K x s.
    let mut v = Array2::<f64>::zeros((k, s));
    match cfg.eigvec_choice {
        EigvecChoice::SmallestEigenvalues => {
            for c in 0..s {
                v.column_mut(c).assign(&eig.vectors.column(c));
            }
        }
        EigvecChoice::LargestEigenvalues => {
            for c in 0..s {
                v.column_mut(c).assign(&eig.vectors.column(k - 1 - c));
            }
        }
    }

    let g: Array1<f64> = v.sum_axis(Axis(0)); // V^T 1
    let gg = g.dot(&g);
    let alpha = match cfg.alpha_norm {
        AlphaNorm::SquaredNorm => gg / (s as f64).sqrt(),
        AlphaNorm::Norm => gg.sqrt() / (s as f64).sqrt(),
    };

    let mut h = Array1::<f64>::from_elem(s, alpha) - &g;
    let nh = h.dot(&h).sqrt();
    if nh > 1e-12 {
        h /= nh;
    } else {
        h.fill(0.0);
    }

    // W = (1 - alpha) * w 1^T + V (I - 2 h h^T)
    let vh = v.dot(&h);
    let mut vectors = Array2::<f64>::zeros((k, s));
    for ell in 0..s {
        let coeff = 2.0 * h[ell];
        for r in 0..k {
            vectors[[r, ell]] = (1.0 - alpha) * base[r] + v[[r, ell]] - coeff * vh[r];
        }
    }
    VoxelWeights {
        vectors,
        base: base.clone(),
        alpha,
        s,
    }
}

/// Weights for every voxel of a scan plus the shared threshold `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub voxels: Vec<VoxelWeights>,
    pub eta: f64,
}

/// Computes the full weight set of a scan at embedding dimension `d`.
pub fn compute_weights(
    scan: &ScanVolume,
    neighborhoods: &NeighborhoodSpec,
    d: usize,
    cfg: &EmbedConfig,
) -> Result<WeightSet> {
    cfg.validate()?;
    check_neighborhood(scan, neighborhoods)?;
    if d == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
    }
    for i in 0..neighborhoods.n_voxels() {
        if neighborhoods.neighbors(i).is_empty() {
            return Err(Error::Degenerate(format!("voxel {i} has no neighbors")));
        }
    }

    let per_voxel: Vec<(SymEigen, Array1<f64>)> = (0..neighborhoods.n_voxels())
        .into_par_iter()
        .map(|i| {
            let c = center_neighbors(scan, i, neighborhoods.neighbors(i));
            let g = local_gram(c.view(), cfg.xi)?;
            let eig = jacobi_eigh(g.view())?;
            let base = base_weights(&eig);
            Ok((eig, base))
        })
        .collect::<Result<_>>()?;

    let d_eff = match cfg.s_rule {
        SRule::TargetDim => d,
        SRule::UnitDim => 1,
    };
    let spectra: Vec<&SymEigen> = per_voxel.iter().map(|(e, _)| e).collect();
    let eta = {
        let mut rho: Vec<f64> = spectra.iter().map(|e| tail_ratio(e, d_eff)).collect();
        rho.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rho[rho.len().div_ceil(2) - 1]
    };

    let degenerate = per_voxel.iter().filter(|(e, _)| e.len() <= d_eff).count();
    if degenerate > 0 {
        log::warn!(
            "{degenerate} voxel(s) have neighborhoods no larger than d = {d_eff}; \
             their weights fall back to the single-vector form"
        );
    }

    let voxels = per_voxel
        .par_iter()
        .map(|(eig, base)| mlle_weights(eig, base, d, eta, cfg))
        .collect();
    Ok(WeightSet { voxels, eta })
}

/// Assembles the sparse alignment matrix
/// `Phi = sum_i sum_ell u_{i,ell} u_{i,ell}^T`, where `u_{i,ell}` carries
/// the `ell`-th weight vector of voxel `i` over `N(i)` and `-1` at `i`.
pub fn alignment_matrix(
    weights: &WeightSet,
    neighborhoods: &NeighborhoodSpec,
) -> Result<SparseSym> {
    let v = neighborhoods.n_voxels();
    if weights.voxels.len() != v {
        return Err(Error::DimMismatch(format!(
            "weight set covers {} voxels, neighborhoods cover {v}",
            weights.voxels.len()
        )));
    }
    let mut triplets = Vec::new();
    let mut support: Vec<(usize, f64)> = Vec::new();
    for i in 0..v {
        let nb = neighborhoods.neighbors(i);
        let wv = &weights.voxels[i];
        if wv.vectors.nrows() != nb.len() {
            return Err(Error::DimMismatch(format!(
                "voxel {i}: {} weight rows for {} neighbors",
                wv.vectors.nrows(),
                nb.len()
            )));
        }
        for ell in 0..wv.s {
            support.clear();
            support.push((i, -1.0));
            for (r, &j) in nb.iter().enumerate() {
                support.push((j, wv.vectors[[r, ell]]));
            }
            for &(ra, va) in &support {
                for &(rb, vb) in &support {
                    triplets.push((ra, rb, va * vb));
                }
            }
        }
    }
    SparseSym::from_triplets(v, triplets)
}

/// Writes `Phi` as text triplets, one `row col value` line per stored
/// entry, row-major and 0-based.
pub fn write_phi_triplets<W: std::io::Write>(phi: &SparseSym, out: &mut W) -> std::io::Result<()> {
    for (r, c, v) in phi.iter() {
        writeln!(out, "{r} {c} {v}")?;
    }
    Ok(())
}

/// How the constant direction was removed from the solved eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscardInfo {
    /// Which of the `d + 1` solved eigenvectors was dropped.
    pub index: usize,
    /// Its cosine similarity with the constant vector.
    pub similarity: f64,
    /// True when the dropped vector was not the bottom one.
    pub fallback: bool,
}

/// A scan reduced to `d` spatial modes.
#[derive(Debug, Clone)]
pub struct EmbeddedScan {
    /// Original spatial extents with `t` replaced by the mode count `d`.
    pub dims: GridDims,
    /// `V x d`; orthonormal columns with zero sums, ascending eigenvalue.
    pub modes: Array2<f64>,
    /// Alignment-matrix eigenvalues of the retained modes.
    pub eigenvalues: Array1<f64>,
    pub provenance: EmbedProvenance,
    pub subject: String,
    pub label: Option<ClassLabel>,
}

/// Everything needed to reproduce an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedProvenance {
    pub radius: usize,
    pub d: usize,
    pub xi: f64,
    pub solver_tol: f64,
    pub discard: DiscardInfo,
}

const CONSTANT_SIMILARITY: f64 = 0.99;

/// Solves for the `d + 1` bottom eigenpairs of `Phi`, removes the constant
/// direction, and returns centered, orthonormal, sign-fixed modes.
pub fn embed(phi: &SparseSym, d: usize, solver_tol: f64) -> Result<(Array2<f64>, Array1<f64>, DiscardInfo)> {
    let v = phi.n();
    if d == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
    }
    if d + 1 > v {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension {d} needs d + 1 <= V = {v}"
        )));
    }
    let pairs = smallest_eigenpairs(phi, d + 1, solver_tol)?;

    let sqrt_v = (v as f64).sqrt();
    let similarity: Vec<f64> = (0..d + 1)
        .map(|j| pairs.vectors.column(j).sum().abs() / sqrt_v)
        .collect();
    let discard = if similarity[0] > CONSTANT_SIMILARITY {
        DiscardInfo {
            index: 0,
            similarity: similarity[0],
            fallback: false,
        }
    } else {
        let (index, &sim) = similarity
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        log::warn!(
            "bottom eigenvector is not the constant direction \
             (similarity {:.3}); dropping eigenvector {index} (similarity {sim:.3}) instead",
            similarity[0]
        );
        DiscardInfo {
            index,
            similarity: sim,
            fallback: true,
        }
    };

    let mut modes = Array2::<f64>::zeros((v, d));
    let mut eigenvalues = Array1::<f64>::zeros(d);
    let mut out = 0;
    for j in 0..d + 1 {
        if j == discard.index {
            continue;
        }
        modes.column_mut(out).assign(&pairs.vectors.column(j));
        eigenvalues[out] = pairs.values[j];
        out += 1;
    }

    // The modes must be centered (zero column sums); when the constant
    // vector sits exactly in the null space this is a no-op. Re-orthonormalize
    // afterwards so both properties hold simultaneously.
    for j in 0..d {
        let mean = modes.column(j).mean().unwrap();
        modes.column_mut(j).mapv_inplace(|x| x - mean);
    }
    for j in 0..d {
        for _ in 0..2 {
            for prev in 0..j {
                let proj = modes.column(j).dot(&modes.column(prev));
                let prev_col = modes.column(prev).to_owned();
                modes.column_mut(j).scaled_add(-proj, &prev_col);
            }
        }
        let norm = modes.column(j).dot(&modes.column(j)).sqrt();
        if norm < 1e-8 {
            return Err(Error::Degenerate(format!(
                "mode {j} collapsed while removing the constant direction"
            )));
        }
        modes.column_mut(j).mapv_inplace(|x| x / norm);
        let mut col = modes.column(j).to_owned();
        fix_sign(col.as_slice_mut().unwrap());
        modes.column_mut(j).assign(&col);
    }
    Ok((modes, eigenvalues, discard))
}

/// Full reconstruction of one scan: weights, alignment, spectral embedding.
pub fn reconstruct_scan(scan: &ScanVolume, d: usize, cfg: &EmbedConfig) -> Result<EmbeddedScan> {
    cfg.validate()?;
    let dims = scan.dims();
    if d == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be >= 1".into()));
    }
    if d > dims.t {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension {d} exceeds the {} time points",
            dims.t
        )));
    }
    if d + 1 > dims.voxels() {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension {d} needs d + 1 <= V = {}",
            dims.voxels()
        )));
    }

    let report = validate_scan(scan).map_err(|e| e.in_stage("validation"))?;
    if !report.is_clean() {
        log::warn!(
            "scan {}: {} constant waveform(s), first at voxel {}",
            scan.subject,
            report.constant_voxels.len(),
            report.constant_voxels[0]
        );
    }

    let neighborhoods =
        NeighborhoodSpec::cube(&dims, cfg.radius).map_err(|e| e.in_stage("neighborhoods"))?;
    let weights =
        compute_weights(scan, &neighborhoods, d, cfg).map_err(|e| e.in_stage("weights"))?;
    let phi =
        alignment_matrix(&weights, &neighborhoods).map_err(|e| e.in_stage("alignment"))?;
    let (modes, eigenvalues, discard) =
        embed(&phi, d, cfg.solver_tol).map_err(|e| e.in_stage("embedding"))?;

    Ok(EmbeddedScan {
        dims: GridDims {
            l: dims.l,
            w: dims.w,
            h: dims.h,
            t: d,
        },
        modes,
        eigenvalues,
        provenance: EmbedProvenance {
            radius: cfg.radius,
            d,
            xi: cfg.xi,
            solver_tol: cfg.solver_tol,
            discard,
        },
        subject: scan.subject.clone(),
        label: scan.label,
    })
}

fn check_neighborhood(scan: &ScanVolume, neighborhoods: &NeighborhoodSpec) -> Result<()> {
    if neighborhoods.n_voxels() != scan.dims().voxels() {
        return Err(Error::DimMismatch(format!(
            "neighborhoods cover {} voxels, scan has {}",
            neighborhoods.n_voxels(),
            scan.dims().voxels()
        )));
    }
    Ok(())
}
