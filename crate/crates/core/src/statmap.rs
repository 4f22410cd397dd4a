//! Voxelwise two-sample t-statistic maps and their on-disk format.
//!
//! A map compares patient and control groups at one selected volume of the
//! reduced scans: every voxel gets a two-sample t-statistic and a
//! two-sided p-value. Maps serialize to a text header plus little-endian
//! `f32` payload so they round-trip bit-exactly without any imaging-stack
//! dependency.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridDims;
use crate::stats::student_t_two_sided_p;

/// Which two-sample statistic a test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtestKind {
    /// Pooled variance, df = n1 + n0 - 2. Default.
    Pooled,
    /// Per-group variances with Welch-Satterthwaite df.
    Welch,
}

/// One voxel's test outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelTtest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    /// Zero variance with unequal means: the statistic diverges and `p`
    /// collapses to 0.
    pub degenerate: bool,
}

fn mean_and_ss(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss)
}

/// Two-sample t-test of `group_a` against `group_b`; the sign of `t`
/// follows `mean(a) - mean(b)`.
///
/// Zero variance is handled without NaNs: equal means give `t = 0, p = 1`,
/// unequal means give an infinite statistic flagged degenerate with
/// `p = 0`.
pub fn voxel_ttest(group_a: &[f64], group_b: &[f64], kind: TtestKind) -> Result<VoxelTtest> {
    let (n1, n0) = (group_a.len(), group_b.len());
    if n1 < 2 || n0 < 2 {
        return Err(Error::InvalidArgument(format!(
            "t-test needs at least 2 per group, got {n1} and {n0}"
        )));
    }
    let (m1, ss1) = mean_and_ss(group_a);
    let (m0, ss0) = mean_and_ss(group_b);
    let diff = m1 - m0;

    let (denom_sq, df) = match kind {
        TtestKind::Pooled => {
            let df = (n1 + n0 - 2) as f64;
            let pooled = (ss1 + ss0) / df;
            (pooled * (1.0 / n1 as f64 + 1.0 / n0 as f64), df)
        }
        TtestKind::Welch => {
            let v1 = ss1 / (n1 - 1) as f64;
            let v0 = ss0 / (n0 - 1) as f64;
            let a = v1 / n1 as f64;
            let b = v0 / n0 as f64;
            let denom_sq = a + b;
            let df = if denom_sq > 0.0 {
                denom_sq * denom_sq
                    / (a * a / (n1 - 1) as f64 + b * b / (n0 - 1) as f64)
            } else {
                (n1 + n0 - 2) as f64
            };
            (denom_sq, df)
        }
    };

    if denom_sq <= 0.0 {
        return Ok(if diff == 0.0 {
            VoxelTtest {
                t: 0.0,
                p: 1.0,
                df,
                degenerate: false,
            }
        } else {
            VoxelTtest {
                t: diff.signum() * f64::INFINITY,
                p: 0.0,
                df,
                degenerate: true,
            }
        });
    }

    let t = diff / denom_sq.sqrt();
    let p = student_t_two_sided_p(t, df)?;
    Ok(VoxelTtest {
        t,
        p,
        df,
        degenerate: false,
    })
}

/// A per-voxel statistical map at one volume.
///
/// Values are stored as `f32`, matching the serialized form, so a map
/// survives write/read cycles without drift.
#[derive(Debug, Clone, PartialEq)]
pub struct StatMap {
    /// Spatial extents; the time extent is fixed at 1 (one map per
    /// volume).
    pub dims: GridDims,
    pub t: Vec<f32>,
    pub p: Vec<f32>,
    /// Which reduced volume the map was computed at.
    pub volume: usize,
    /// Patient group size.
    pub n1: usize,
    /// Control group size.
    pub n0: usize,
    /// Significance level the map is exported with.
    pub alpha: f64,
}

impl StatMap {
    /// Voxels whose statistic diverged (zero variance, unequal means).
    pub fn degenerate_voxels(&self) -> Vec<usize> {
        self.t
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.is_finite())
            .map(|(v, _)| v)
            .collect()
    }
}

/// Builds the map for `volume` from per-subject mode matrices
/// (`V x d` each), patients against controls.
pub fn build_map(
    patients: &[Array2<f64>],
    controls: &[Array2<f64>],
    dims: &GridDims,
    volume: usize,
    kind: TtestKind,
    alpha: f64,
) -> Result<StatMap> {
    let v = dims.voxels();
    if patients.len() < 2 || controls.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "map needs at least 2 per group, got {} and {}",
            patients.len(),
            controls.len()
        )));
    }
    for m in patients.iter().chain(controls) {
        if m.nrows() != v {
            return Err(Error::DimMismatch(format!(
                "mode matrix has {} rows, grid has {v} voxels",
                m.nrows()
            )));
        }
        if volume >= m.ncols() {
            return Err(Error::InvalidArgument(format!(
                "volume {volume} out of range for {} columns",
                m.ncols()
            )));
        }
    }

    let tests: Vec<VoxelTtest> = (0..v)
        .into_par_iter()
        .map(|voxel| {
            let a: Vec<f64> = patients.iter().map(|m| m[[voxel, volume]]).collect();
            let b: Vec<f64> = controls.iter().map(|m| m[[voxel, volume]]).collect();
            voxel_ttest(&a, &b, kind)
        })
        .collect::<Result<_>>()?;

    Ok(StatMap {
        dims: GridDims::new(dims.l, dims.w, dims.h, 1)?,
        t: tests.iter().map(|r| r.t as f32).collect(),
        p: tests.iter().map(|r| r.p as f32).collect(),
        volume,
        n1: patients.len(),
        n0: controls.len(),
        alpha,
    })
}

/// Thresholds the map at `p < alpha`; returns the mask and its count.
pub fn threshold_map(map: &StatMap, alpha: f64) -> Result<(Vec<bool>, usize)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance level {alpha} outside (0, 1]"
        )));
    }
    let mask: Vec<bool> = map.p.iter().map(|&p| (p as f64) < alpha).collect();
    let count = mask.iter().filter(|&&m| m).count();
    Ok((mask, count))
}

/// Writes `map` to `path`: header line
/// `statmap v1 L W H volume n1 n0 alpha`, then the t-array and the p-array
/// as little-endian `f32`.
pub fn write_statmap(map: &StatMap, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "statmap v1 {} {} {} {} {} {} {}",
        map.dims.l, map.dims.w, map.dims.h, map.volume, map.n1, map.n0, map.alpha
    )?;
    for &x in &map.t {
        out.write_f32::<LittleEndian>(x)?;
    }
    for &x in &map.p {
        out.write_f32::<LittleEndian>(x)?;
    }
    out.flush()?;
    Ok(())
}

fn format_err(path: &Path, offset: u64, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

/// Reads a map written by [`write_statmap`].
pub fn read_statmap(path: &Path) -> Result<StatMap> {
    let mut reader = BufReader::new(File::open(path)?);

    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let got = reader.read(&mut byte)?;
        if got == 0 {
            return Err(format_err(path, header.len() as u64, "missing header line"));
        }
        if byte[0] == b'\n' {
            break;
        }
        if header.len() > 256 {
            return Err(format_err(path, header.len() as u64, "header line too long"));
        }
        header.push(byte[0]);
    }
    let header_len = header.len() as u64 + 1;
    let text = std::str::from_utf8(&header)
        .map_err(|_| format_err(path, 0, "header is not UTF-8"))?;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 9 || tokens[0] != "statmap" || tokens[1] != "v1" {
        return Err(format_err(
            path,
            0,
            format!("bad header '{text}', expected 'statmap v1 L W H volume n1 n0 alpha'"),
        ));
    }
    let num = |i: usize, what: &str| -> Result<usize> {
        tokens[i]
            .parse()
            .map_err(|_| format_err(path, 0, format!("bad {what} '{}'", tokens[i])))
    };
    let (l, w, h) = (num(2, "L")?, num(3, "W")?, num(4, "H")?);
    let volume = num(5, "volume")?;
    let (n1, n0) = (num(6, "n1")?, num(7, "n0")?);
    let alpha: f64 = tokens[8]
        .parse()
        .map_err(|_| format_err(path, 0, format!("bad alpha '{}'", tokens[8])))?;
    let dims = GridDims::new(l, w, h, 1)?;
    let v = dims.voxels();

    let mut read_array = |start: u64| -> Result<Vec<f32>> {
        let mut buf = vec![0f32; v];
        reader
            .read_f32_into::<LittleEndian>(&mut buf)
            .map_err(|_| format_err(path, start, format!("truncated payload, expected {v} f32s")))?;
        Ok(buf)
    };
    let t = read_array(header_len)?;
    let p = read_array(header_len + 4 * v as u64)?;

    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(format_err(
            path,
            header_len + 8 * v as u64,
            "trailing bytes after payload",
        ));
    }
    Ok(StatMap {
        dims,
        t,
        p,
        volume,
        n1,
        n0,
        alpha,
    })
}
