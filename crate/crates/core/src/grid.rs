//! Voxel grids, 4D scan containers, and spatial neighborhoods.
//!
//! A scan is a dense 4D block: three spatial axes of extent `L x W x H` plus
//! `T` time points. Voxels are addressed x-fastest, so voxel `(x, y, z)` has
//! linear index `x + L*(y + W*z)`. Waveforms are stored contiguously per
//! voxel, which makes the per-voxel operations downstream cache-friendly.
//!
//! Neighborhoods are cubes: all voxels within Chebyshev distance `r` of a
//! center, minus the center itself, clipped at the grid boundary. An interior
//! voxel therefore has `(1 + 2r)^3 - 1` neighbors.

use crate::error::{Error, Result};

/// Grid extents: spatial `L x W x H` plus `T` time points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDims {
    pub l: usize,
    pub w: usize,
    pub h: usize,
    pub t: usize,
}

impl GridDims {
    pub fn new(l: usize, w: usize, h: usize, t: usize) -> Result<Self> {
        if l == 0 || w == 0 || h == 0 {
            return Err(Error::InvalidArgument(format!(
                "spatial extents must be positive, got {l}x{w}x{h}"
            )));
        }
        if t == 0 {
            return Err(Error::InvalidArgument(
                "time extent must be positive".into(),
            ));
        }
        Ok(GridDims { l, w, h, t })
    }

    /// Number of voxels `V = L*W*H`.
    pub fn voxels(&self) -> usize {
        self.l * self.w * self.h
    }

    /// Total sample count `V*T`.
    pub fn samples(&self) -> usize {
        self.voxels() * self.t
    }

    /// Linear index of voxel `(x, y, z)`, x-fastest.
    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> Result<usize> {
        if x >= self.l || y >= self.w || z >= self.h {
            return Err(Error::OutOfBounds {
                x,
                y,
                z,
                l: self.l,
                w: self.w,
                h: self.h,
            });
        }
        Ok(x + self.l * (y + self.w * z))
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        debug_assert!(index < self.voxels());
        let x = index % self.l;
        let y = (index / self.l) % self.w;
        let z = index / (self.l * self.w);
        (x, y, z)
    }

    /// True when the spatial extents agree (time extents may differ).
    pub fn same_space(&self, other: &GridDims) -> bool {
        self.l == other.l && self.w == other.w && self.h == other.h
    }

    /// Neighbors of `center` within Chebyshev radius `r`, center excluded,
    /// clipped at the boundary, ascending by linear index.
    pub fn cube_neighborhood(&self, center: usize, r: usize) -> Vec<usize> {
        let (cx, cy, cz) = self.coords(center);
        let mut out = Vec::with_capacity((2 * r + 1).pow(3) - 1);
        // Ascending (z, y, x) traversal yields ascending linear indices.
        for z in cz.saturating_sub(r)..=(cz + r).min(self.h - 1) {
            for y in cy.saturating_sub(r)..=(cy + r).min(self.w - 1) {
                for x in cx.saturating_sub(r)..=(cx + r).min(self.l - 1) {
                    if (x, y, z) != (cx, cy, cz) {
                        out.push(x + self.l * (y + self.w * z));
                    }
                }
            }
        }
        out
    }
}

impl std::fmt::Display for GridDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.l, self.w, self.h, self.t)
    }
}

/// Diagnostic class of a subject. Patients are the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    Control,
    Patient,
}

impl ClassLabel {
    pub fn as_index(&self) -> usize {
        match self {
            ClassLabel::Control => 0,
            ClassLabel::Patient => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(ClassLabel::Control),
            1 => Ok(ClassLabel::Patient),
            _ => Err(Error::InvalidArgument(format!("class label must be 0 or 1, got {i}"))),
        }
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_index())
    }
}

/// A single subject's 4D scan.
///
/// Samples are laid out waveform-contiguously: sample `(v, t)` lives at
/// `samples[v*T + t]`. File formats that store volume-major data are
/// transposed on load.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanVolume {
    dims: GridDims,
    samples: Vec<f64>,
    pub subject: String,
    pub label: Option<ClassLabel>,
}

impl ScanVolume {
    pub fn new(
        dims: GridDims,
        samples: Vec<f64>,
        subject: impl Into<String>,
        label: Option<ClassLabel>,
    ) -> Result<Self> {
        if samples.len() != dims.samples() {
            return Err(Error::DimMismatch(format!(
                "scan for {dims} needs {} samples, got {}",
                dims.samples(),
                samples.len()
            )));
        }
        Ok(ScanVolume {
            dims,
            samples,
            subject: subject.into(),
            label,
        })
    }

    /// Builds a scan from volume-major order (one full volume per time
    /// point, volumes consecutive), the layout used by the on-disk formats.
    pub fn from_volume_major(
        dims: GridDims,
        data: &[f64],
        subject: impl Into<String>,
        label: Option<ClassLabel>,
    ) -> Result<Self> {
        if data.len() != dims.samples() {
            return Err(Error::DimMismatch(format!(
                "scan for {dims} needs {} samples, got {}",
                dims.samples(),
                data.len()
            )));
        }
        let (v, t) = (dims.voxels(), dims.t);
        let mut samples = vec![0.0; data.len()];
        for ti in 0..t {
            for vi in 0..v {
                samples[vi * t + ti] = data[ti * v + vi];
            }
        }
        Ok(ScanVolume {
            dims,
            samples,
            subject: subject.into(),
            label,
        })
    }

    /// Serializes samples to volume-major order.
    pub fn to_volume_major(&self) -> Vec<f64> {
        let (v, t) = (self.dims.voxels(), self.dims.t);
        let mut out = vec![0.0; self.samples.len()];
        for vi in 0..v {
            for ti in 0..t {
                out[ti * v + vi] = self.samples[vi * t + ti];
            }
        }
        out
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    /// The waveform of voxel `v`, length `T`.
    pub fn waveform(&self, v: usize) -> &[f64] {
        &self.samples[v * self.dims.t..(v + 1) * self.dims.t]
    }

    pub fn sample(&self, v: usize, t: usize) -> f64 {
        debug_assert!(t < self.dims.t);
        self.samples[v * self.dims.t + t]
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// The scan as a `V x T` matrix, one row per voxel waveform.
    pub fn to_matrix(&self) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_vec((self.dims.voxels(), self.dims.t), self.samples.clone())
            .expect("samples length is V*T by construction")
    }
}

/// Outcome of [`validate_scan`]: non-fatal findings.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    /// Voxels whose waveform is constant over time (zero variance).
    pub constant_voxels: Vec<usize>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.constant_voxels.is_empty()
    }
}

/// Checks a scan for non-finite samples (hard error, reported with its 4D
/// coordinate) and constant waveforms (returned as warnings).
pub fn validate_scan(scan: &ScanVolume) -> Result<ValidationReport> {
    let dims = scan.dims();
    let mut report = ValidationReport::default();
    for v in 0..dims.voxels() {
        let wf = scan.waveform(v);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (t, &s) in wf.iter().enumerate() {
            if !s.is_finite() {
                let (x, y, z) = dims.coords(v);
                return Err(Error::NonFinite { x, y, z, t });
            }
            lo = lo.min(s);
            hi = hi.max(s);
        }
        if lo == hi {
            report.constant_voxels.push(v);
        }
    }
    Ok(report)
}

/// Per-voxel neighbor lists over a fixed spatial grid.
///
/// Lists are ascending, self-free, and symmetric: `i` appears in `j`'s list
/// exactly when `j` appears in `i`'s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodSpec {
    lists: Vec<Vec<usize>>,
    radius: Option<usize>,
}

impl NeighborhoodSpec {
    /// Cube neighborhoods of Chebyshev radius `r >= 1` over the grid.
    pub fn cube(dims: &GridDims, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidArgument("neighborhood radius must be >= 1".into()));
        }
        let lists = (0..dims.voxels())
            .map(|i| dims.cube_neighborhood(i, r))
            .collect();
        Ok(NeighborhoodSpec {
            lists,
            radius: Some(r),
        })
    }

    /// Wraps explicit neighbor lists, validating the structural invariants.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        for (i, list) in lists.iter().enumerate() {
            for (k, &j) in list.iter().enumerate() {
                if j >= n {
                    return Err(Error::InvalidArgument(format!(
                        "neighbor {j} of voxel {i} out of range (V = {n})"
                    )));
                }
                if j == i {
                    return Err(Error::InvalidArgument(format!(
                        "voxel {i} lists itself as a neighbor"
                    )));
                }
                if k > 0 && list[k - 1] >= j {
                    return Err(Error::InvalidArgument(format!(
                        "neighbor list of voxel {i} is not strictly ascending"
                    )));
                }
                if lists[j].binary_search(&i).is_err() {
                    return Err(Error::InvalidArgument(format!(
                        "asymmetric neighborhood: {i} -> {j} but not {j} -> {i}"
                    )));
                }
            }
        }
        Ok(NeighborhoodSpec {
            lists,
            radius: None,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.lists.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    /// Radius this spec was built with, if it came from [`cube`](Self::cube).
    pub fn radius(&self) -> Option<usize> {
        self.radius
    }

    pub fn max_degree(&self) -> usize {
        self.lists.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_index_is_x_fastest() {
        let dims = GridDims::new(57, 68, 42, 1).unwrap();
        assert_eq!(dims.linear_index(0, 0, 0).unwrap(), 0);
        assert_eq!(dims.linear_index(1, 0, 0).unwrap(), 1);
        assert_eq!(dims.linear_index(0, 1, 0).unwrap(), 57);
        assert_eq!(dims.linear_index(56, 67, 41).unwrap(), 162_791);
    }

    #[test]
    fn linear_index_rejects_out_of_bounds() {
        let dims = GridDims::new(3, 3, 3, 1).unwrap();
        assert!(dims.linear_index(3, 0, 0).is_err());
        assert!(dims.linear_index(0, 0, 3).is_err());
    }

    #[test]
    fn coords_inverts_linear_index() {
        let dims = GridDims::new(4, 5, 6, 1).unwrap();
        for i in 0..dims.voxels() {
            let (x, y, z) = dims.coords(i);
            assert_eq!(dims.linear_index(x, y, z).unwrap(), i);
        }
    }

    #[test]
    fn corner_of_3x3x3_has_7_neighbors() {
        let dims = GridDims::new(3, 3, 3, 1).unwrap();
        let nbrs = dims.cube_neighborhood(0, 1);
        assert_eq!(nbrs.len(), 7);
        // Everything in {0,1}^3 except the corner itself.
        let expected: Vec<usize> = vec![1, 3, 4, 9, 10, 12, 13];
        assert_eq!(nbrs, expected);
    }

    #[test]
    fn interior_counts_match_cube_formula() {
        let dims = GridDims::new(5, 5, 5, 1).unwrap();
        let center = dims.linear_index(2, 2, 2).unwrap();
        assert_eq!(dims.cube_neighborhood(center, 1).len(), 26);
        assert_eq!(dims.cube_neighborhood(center, 2).len(), 124);
    }

    #[test]
    fn neighborhood_is_sorted_ascending() {
        let dims = GridDims::new(4, 4, 4, 1).unwrap();
        for i in 0..dims.voxels() {
            let nbrs = dims.cube_neighborhood(i, 2);
            assert!(nbrs.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn from_lists_rejects_asymmetry_and_self() {
        assert!(NeighborhoodSpec::from_lists(vec![vec![1], vec![]]).is_err());
        assert!(NeighborhoodSpec::from_lists(vec![vec![0], vec![0]]).is_err());
        assert!(NeighborhoodSpec::from_lists(vec![vec![1], vec![0]]).is_ok());
    }

    #[test]
    fn validate_flags_nonfinite_with_coordinate() {
        let dims = GridDims::new(2, 2, 1, 3).unwrap();
        let mut samples = vec![1.0; dims.samples()];
        samples[3 * 3 + 1] = f64::NAN; // voxel 3 = (1, 1, 0), time 1
        let scan = ScanVolume::new(dims, samples, "s", None).unwrap();
        match validate_scan(&scan) {
            Err(Error::NonFinite { x, y, z, t }) => {
                assert_eq!((x, y, z, t), (1, 1, 0, 1));
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn validate_reports_constant_waveforms() {
        let dims = GridDims::new(2, 1, 1, 4).unwrap();
        let mut samples = vec![0.0; dims.samples()];
        samples[4..8].copy_from_slice(&[1.0, 2.0, 1.0, 2.0]);
        let scan = ScanVolume::new(dims, samples, "s", None).unwrap();
        let report = validate_scan(&scan).unwrap();
        assert_eq!(report.constant_voxels, vec![0]);
    }

    #[test]
    fn volume_major_round_trip() {
        let dims = GridDims::new(2, 2, 1, 3).unwrap();
        let data: Vec<f64> = (0..dims.samples()).map(|i| i as f64).collect();
        let scan = ScanVolume::from_volume_major(dims, &data, "s", None).unwrap();
        // Volume-major sample (t=1, v=2) must land at waveform slot (v=2, t=1).
        assert_eq!(scan.sample(2, 1), data[1 * 4 + 2]);
        assert_eq!(scan.to_volume_major(), data);
    }

    proptest! {
        #[test]
        fn neighborhoods_are_symmetric_and_self_free(
            l in 1usize..5, w in 1usize..5, h in 1usize..5, r in 1usize..3,
        ) {
            let dims = GridDims::new(l, w, h, 1).unwrap();
            let spec = NeighborhoodSpec::cube(&dims, r).unwrap();
            for i in 0..dims.voxels() {
                for &j in spec.neighbors(i) {
                    prop_assert!(j != i);
                    prop_assert!(spec.neighbors(j).contains(&i));
                }
            }
        }

        #[test]
        fn membership_matches_chebyshev_ball(
            l in 1usize..5, w in 1usize..5, h in 1usize..5, r in 1usize..3,
        ) {
            let dims = GridDims::new(l, w, h, 1).unwrap();
            for i in 0..dims.voxels() {
                let nbrs = dims.cube_neighborhood(i, r);
                let (cx, cy, cz) = dims.coords(i);
                for j in 0..dims.voxels() {
                    let (x, y, z) = dims.coords(j);
                    let cheb = cx.abs_diff(x).max(cy.abs_diff(y)).max(cz.abs_diff(z));
                    let inside = cheb >= 1 && cheb <= r;
                    prop_assert_eq!(nbrs.contains(&j), inside);
                }
            }
        }
    }
}
