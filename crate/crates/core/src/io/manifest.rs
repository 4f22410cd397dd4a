//! Line-oriented cohort manifests.
//!
//! A manifest declares the shared grid geometry and one line per subject,
//! so a whole study can be loaded and partitioned from a single file:
//!
//! ```text
//! # schizophrenia pilot
//! name = pilot
//! dims = 57x68x42x46
//! radius = 1
//! subject = p01, scans/p01.rawvol, patient, training
//! subject = c01, scans/c01.nii,    control, holdout
//! ```
//!
//! Keys are `name`, `dims` (`LxWxHxT`), optional `radius`, an optional
//! `grid` override (comma-separated embedding dimensionalities), and one
//! `subject` entry per scan: id, path relative to the manifest, class
//! label (`patient`/`control`), and partition (`training`/`holdout`).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluate::Partition;
use crate::grid::{ClassLabel, GridDims, ScanVolume};
use crate::io::{read_nifti1, read_raw_volume};

/// One subject line: identity, scan location, class, and partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: ClassLabel,
    pub partition: Partition,
    /// Line the entry came from, for error reporting.
    pub line: usize,
}

/// A parsed cohort description.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub dims: GridDims,
    pub radius: Option<usize>,
    pub grid_override: Option<Vec<usize>>,
    pub subjects: Vec<SubjectEntry>,
}

impl DatasetManifest {
    /// Subjects in the given partition, manifest order.
    pub fn partition(&self, which: Partition) -> impl Iterator<Item = &SubjectEntry> {
        self.subjects.iter().filter(move |s| s.partition == which)
    }
}

/// Scans grouped by partition, ready for the pipeline.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub training: Vec<ScanVolume>,
    pub holdout: Vec<ScanVolume>,
}

fn err(origin: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Manifest {
        path: origin.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_dims(value: &str, origin: &Path, line: usize) -> Result<GridDims> {
    let parts: Vec<&str> = value.split('x').collect();
    if parts.len() != 4 {
        return Err(err(origin, line, format!("dims must be LxWxHxT, got {value:?}")));
    }
    let mut n = [0usize; 4];
    for (slot, part) in n.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| err(origin, line, format!("bad extent {part:?} in dims")))?;
    }
    GridDims::new(n[0], n[1], n[2], n[3])
        .map_err(|e| err(origin, line, format!("invalid dims: {e}")))
}

fn parse_subject(value: &str, origin: &Path, line: usize) -> Result<SubjectEntry> {
    let fields: Vec<&str> = value.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(err(
            origin,
            line,
            "subject needs 4 fields: id, path, label, partition",
        ));
    }
    let [id, path, label, partition] = [fields[0], fields[1], fields[2], fields[3]];
    if id.is_empty() || path.is_empty() {
        return Err(err(origin, line, "subject id and path must be non-empty"));
    }
    let label = match label {
        "patient" => ClassLabel::Patient,
        "control" => ClassLabel::Control,
        other => return Err(err(origin, line, format!("unknown label {other:?}"))),
    };
    let partition = match partition {
        "training" => Partition::Training,
        "holdout" => Partition::Holdout,
        other => return Err(err(origin, line, format!("unknown partition {other:?}"))),
    };
    Ok(SubjectEntry {
        id: id.to_string(),
        path: PathBuf::from(path),
        label,
        partition,
        line,
    })
}

/// Parses manifest text. `origin` names the source in errors; subject
/// paths are kept as written (see [`load_manifest`] for resolution).
pub fn parse_manifest(text: &str, origin: &Path) -> Result<DatasetManifest> {
    let mut name: Option<String> = None;
    let mut dims: Option<GridDims> = None;
    let mut radius: Option<usize> = None;
    let mut grid_override: Option<Vec<usize>> = None;
    let mut subjects: Vec<SubjectEntry> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(origin, line, "expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        let reject_repeat = |taken: bool| {
            if taken {
                Err(err(origin, line, format!("duplicate key {key:?}")))
            } else {
                Ok(())
            }
        };
        match key {
            "name" => {
                reject_repeat(name.is_some())?;
                name = Some(value.to_string());
            }
            "dims" => {
                reject_repeat(dims.is_some())?;
                dims = Some(parse_dims(value, origin, line)?);
            }
            "radius" => {
                reject_repeat(radius.is_some())?;
                let r: usize = value
                    .parse()
                    .map_err(|_| err(origin, line, format!("bad radius {value:?}")))?;
                if r == 0 {
                    return Err(err(origin, line, "radius must be at least 1"));
                }
                radius = Some(r);
            }
            "grid" => {
                reject_repeat(grid_override.is_some())?;
                let mut points = Vec::new();
                for part in value.split(',') {
                    let d: usize = part
                        .trim()
                        .parse()
                        .map_err(|_| err(origin, line, format!("bad grid point {part:?}")))?;
                    points.push(d);
                }
                if points.is_empty() {
                    return Err(err(origin, line, "grid override is empty"));
                }
                grid_override = Some(points);
            }
            "subject" => subjects.push(parse_subject(value, origin, line)?),
            other => return Err(err(origin, line, format!("unknown key {other:?}"))),
        }
    }

    let name = name.ok_or_else(|| err(origin, 0, "missing required key name"))?;
    let dims = dims.ok_or_else(|| err(origin, 0, "missing required key dims"))?;
    if subjects.is_empty() {
        return Err(err(origin, 0, "no subjects declared"));
    }
    if let Some(points) = &grid_override {
        let ascending = points.windows(2).all(|p| p[0] < p[1]);
        if !ascending || points[0] == 0 || *points.last().unwrap() > dims.t {
            return Err(err(
                origin,
                0,
                format!(
                    "grid override must be strictly ascending within 1..={}",
                    dims.t
                ),
            ));
        }
    }
    let mut seen = HashSet::new();
    for s in &subjects {
        if !seen.insert(s.id.as_str()) {
            return Err(err(
                origin,
                s.line,
                format!("duplicate subject id {:?}", s.id),
            ));
        }
    }
    let training_labels: HashSet<ClassLabel> = subjects
        .iter()
        .filter(|s| s.partition == Partition::Training)
        .map(|s| s.label)
        .collect();
    if training_labels.len() < 2 {
        return Err(err(
            origin,
            0,
            "training partition must contain both classes",
        ));
    }

    Ok(DatasetManifest {
        name,
        dims,
        radius,
        grid_override,
        subjects,
    })
}

/// Reads and parses a manifest file, resolves subject paths relative to
/// the manifest's directory, and checks that every scan file exists.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    let mut manifest = parse_manifest(&text, path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for subject in &mut manifest.subjects {
        if subject.path.is_relative() {
            subject.path = base.join(&subject.path);
        }
        if !subject.path.is_file() {
            return Err(err(
                path,
                subject.line,
                format!("scan file {} not found", subject.path.display()),
            ));
        }
    }
    Ok(manifest)
}

fn read_scan(entry: &SubjectEntry) -> Result<ScanVolume> {
    let ext = entry
        .path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "rawvol" => read_raw_volume(&entry.path),
        "nii" => read_nifti1(&entry.path),
        _ => Err(Error::InvalidArgument(format!(
            "subject {}: unsupported scan format {}",
            entry.id,
            entry.path.display()
        ))),
    }
}

/// Loads every subject scan, attaches ids and labels, and verifies each
/// scan matches the manifest geometry.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Dataset> {
    let mut training = Vec::new();
    let mut holdout = Vec::new();
    for entry in &manifest.subjects {
        let mut scan = read_scan(entry)?;
        if !scan.dims().same_space(&manifest.dims) || scan.dims().t != manifest.dims.t {
            return Err(Error::DimMismatch(format!(
                "subject {}: scan is {} but manifest declares {}",
                entry.id,
                scan.dims(),
                manifest.dims
            )));
        }
        scan.subject = entry.id.clone();
        scan.label = Some(entry.label);
        match entry.partition {
            Partition::Training => training.push(scan),
            Partition::Holdout => holdout.push(scan),
        }
    }
    Ok(Dataset { training, holdout })
}
