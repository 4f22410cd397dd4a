//! File formats: the native raw-volume interchange format, a NIfTI-1
//! ingestion adapter, and dataset manifests.
//!
//! The raw format is the canonical one: a text header plus little-endian
//! `f32` payload, chosen so every artifact round-trips bit-exactly.
//! NIfTI-1 files are read-only inputs converted at the boundary.

mod manifest;
mod nifti;
mod rawvol;

pub use manifest::{
    load_dataset, load_manifest, parse_manifest, Dataset, DatasetManifest, SubjectEntry,
};
pub use nifti::read_nifti1;
pub use rawvol::{read_raw_dims, read_raw_volume, write_raw_volume};
