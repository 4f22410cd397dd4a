//! Read-only ingestion of uncompressed single-file NIfTI-1 images.
//!
//! Supports the common clinical subset: 348-byte header with magic
//! `n+1\0`, 4-dimensional images, datatypes int16/float32/float64, both
//! byte orders (detected from the dimension count), and the
//! `scl_slope`/`scl_inter` affine rescaling. Everything else is rejected
//! with an explicit error rather than guessed at.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridDims, ScanVolume};

const HEADER_LEN: usize = 348;
const DIM_OFFSET: usize = 40;
const DATATYPE_OFFSET: usize = 70;
const BITPIX_OFFSET: usize = 72;
const VOX_OFFSET_OFFSET: usize = 108;
const SCL_SLOPE_OFFSET: usize = 112;
const SCL_INTER_OFFSET: usize = 116;
const MAGIC_OFFSET: usize = 344;

const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ByteOrder {
    Little,
    Big,
}

struct Fields<'a> {
    bytes: &'a [u8],
    order: ByteOrder,
}

impl Fields<'_> {
    fn i16_at(&self, offset: usize) -> i16 {
        let raw: [u8; 2] = self.bytes[offset..offset + 2].try_into().unwrap();
        match self.order {
            ByteOrder::Little => i16::from_le_bytes(raw),
            ByteOrder::Big => i16::from_be_bytes(raw),
        }
    }

    fn i32_at(&self, offset: usize) -> i32 {
        let raw: [u8; 4] = self.bytes[offset..offset + 4].try_into().unwrap();
        match self.order {
            ByteOrder::Little => i32::from_le_bytes(raw),
            ByteOrder::Big => i32::from_be_bytes(raw),
        }
    }

    fn f32_at(&self, offset: usize) -> f32 {
        let raw: [u8; 4] = self.bytes[offset..offset + 4].try_into().unwrap();
        match self.order {
            ByteOrder::Little => f32::from_le_bytes(raw),
            ByteOrder::Big => f32::from_be_bytes(raw),
        }
    }

    fn f64_at(&self, offset: usize) -> f64 {
        let raw: [u8; 8] = self.bytes[offset..offset + 8].try_into().unwrap();
        match self.order {
            ByteOrder::Little => f64::from_le_bytes(raw),
            ByteOrder::Big => f64::from_be_bytes(raw),
        }
    }
}

fn format_err(path: &Path, offset: u64, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

/// Reads an uncompressed single-file NIfTI-1 image as a scan. The subject
/// id defaults to the file stem; no label is attached.
pub fn read_nifti1(path: &Path) -> Result<ScanVolume> {
    let bytes = std::fs::read(path)?;
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        return Err(format_err(
            path,
            0,
            "gzip-compressed input is not supported, decompress first",
        ));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!("file shorter than the {HEADER_LEN}-byte header"),
        ));
    }

    // The dimension count is 1..=7 in any valid file; reading it as the
    // wrong byte order lands far outside that range.
    let dim0_le = i16::from_le_bytes(bytes[DIM_OFFSET..DIM_OFFSET + 2].try_into().unwrap());
    let order = if (1..=7).contains(&dim0_le) {
        ByteOrder::Little
    } else {
        let dim0_be = i16::from_be_bytes(bytes[DIM_OFFSET..DIM_OFFSET + 2].try_into().unwrap());
        if (1..=7).contains(&dim0_be) {
            ByteOrder::Big
        } else {
            return Err(format_err(
                path,
                DIM_OFFSET as u64,
                format!("dimension count {dim0_le} invalid in either byte order"),
            ));
        }
    };
    let f = Fields {
        bytes: &bytes,
        order,
    };

    if f.i32_at(0) != HEADER_LEN as i32 {
        return Err(format_err(
            path,
            0,
            format!("header size field is {}, expected {HEADER_LEN}", f.i32_at(0)),
        ));
    }
    let magic = &bytes[MAGIC_OFFSET..MAGIC_OFFSET + 4];
    if magic == b"ni1\0" {
        return Err(format_err(
            path,
            MAGIC_OFFSET as u64,
            "two-file (.hdr/.img) images are not supported",
        ));
    }
    if magic != b"n+1\0" {
        return Err(format_err(
            path,
            MAGIC_OFFSET as u64,
            format!("unrecognized magic {magic:?}"),
        ));
    }

    let ndim = f.i16_at(DIM_OFFSET);
    if ndim != 4 {
        return Err(format_err(
            path,
            DIM_OFFSET as u64,
            format!("expected a 4-dimensional image, got {ndim} dimensions"),
        ));
    }
    let dim = |i: usize| f.i16_at(DIM_OFFSET + 2 * i);
    let (l, w, h, t) = (dim(1), dim(2), dim(3), dim(4));
    if l <= 0 || w <= 0 || h <= 0 || t <= 0 {
        return Err(format_err(
            path,
            DIM_OFFSET as u64,
            format!("non-positive extent in {l}x{w}x{h}x{t}"),
        ));
    }
    let dims = GridDims::new(l as usize, w as usize, h as usize, t as usize)?;

    let datatype = f.i16_at(DATATYPE_OFFSET);
    let elem_size = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => {
            return Err(format_err(
                path,
                DATATYPE_OFFSET as u64,
                format!("unsupported datatype code {other} (supported: int16, float32, float64)"),
            ))
        }
    };
    let bitpix = f.i16_at(BITPIX_OFFSET);
    if bitpix as usize != 8 * elem_size {
        return Err(format_err(
            path,
            BITPIX_OFFSET as u64,
            format!("bitpix {bitpix} inconsistent with datatype {datatype}"),
        ));
    }

    let vox_offset = f.f32_at(VOX_OFFSET_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_LEN as f32) {
        return Err(format_err(
            path,
            VOX_OFFSET_OFFSET as u64,
            format!("bad data offset {vox_offset}"),
        ));
    }
    let start = vox_offset as usize;
    let n = dims.samples();
    let need = start + n * elem_size;
    if bytes.len() < need {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!("truncated payload: file has {} bytes, needs {need}", bytes.len()),
        ));
    }

    let slope = f.f32_at(SCL_SLOPE_OFFSET) as f64;
    let inter = f.f32_at(SCL_INTER_OFFSET) as f64;
    let rescale = |v: f64| if slope != 0.0 { v * slope + inter } else { v };

    let mut volume_major = Vec::with_capacity(n);
    for i in 0..n {
        let off = start + i * elem_size;
        let raw = match datatype {
            DT_INT16 => f.i16_at(off) as f64,
            DT_FLOAT32 => f.f32_at(off) as f64,
            DT_FLOAT64 => f.f64_at(off),
            _ => unreachable!(),
        };
        volume_major.push(rescale(raw));
    }

    let subject = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scan".into());
    ScanVolume::from_volume_major(dims, &volume_major, subject, None)
}
