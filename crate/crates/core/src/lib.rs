//! Spatially constrained manifold embedding and classification of volumetric
//! time series.
//!
//! The crate implements an end-to-end analysis pipeline for 4D scans
//! (three spatial axes plus time), built around a locally linear embedding
//! that respects the voxel grid:
//!
//! 1. **Embedding** — each voxel's waveform is approximated as a weighted
//!    combination of its spatial neighbors' waveforms; the weights align a
//!    low-dimensional set of spatial modes ([`lle`]). A PCA baseline over the
//!    same data layout lives in [`pca`].
//! 2. **Classification** — diagonal-covariance linear discriminant analysis
//!    over flattened mode volumes, with greedy forward selection of the most
//!    diagnostic volumes ([`classify`]).
//! 3. **Evaluation** — leave-one-out cross-validation over a log-spaced
//!    dimension grid, holdout scoring, and binomial error bars ([`evaluate`]).
//! 4. **Group maps** — voxelwise two-sample t-maps at the selected volumes
//!    with two-sided p-values ([`statmap`]).
//!
//! [`pipeline`] wires the stages into reproducible run directories, and
//! [`io`] covers the on-disk formats (raw volumes, group maps, dataset
//! manifests, single-file NIfTI-1 ingestion). [`synth`] generates seeded
//! synthetic cohorts with planted group differences for testing and demos.
//!
//! Everything is deterministic: a run is a pure function of its inputs,
//! configuration, and seed.

pub mod classify;
pub mod error;
pub mod evaluate;
pub mod grid;
pub mod io;
pub mod lanczos;
pub mod linalg;
pub mod lle;
pub mod pca;
pub mod pipeline;
pub mod sparse;
pub mod statmap;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{validate_scan, ClassLabel, GridDims, NeighborhoodSpec, ScanVolume};
