//! The native scan format: `rawvol v1 L W H T` header line, then `V*T`
//! little-endian `f32` samples, voxel-major per volume with volumes
//! consecutive (file index `t*V + v`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::grid::{GridDims, ScanVolume};

fn format_err(path: &Path, offset: u64, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

fn read_header(reader: &mut impl Read, path: &Path) -> Result<(GridDims, u64)> {
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
        if header.len() > 128 {
            return Err(format_err(path, header.len() as u64, "header line too long"));
        }
        header.push(byte[0]);
    }
    let text = std::str::from_utf8(&header)
        .map_err(|_| format_err(path, 0, "header is not UTF-8"))?;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 6 || tokens[0] != "rawvol" || tokens[1] != "v1" {
        return Err(format_err(
            path,
            0,
            format!("bad header '{text}', expected 'rawvol v1 L W H T'"),
        ));
    }
    let num = |i: usize, what: &str| -> Result<usize> {
        tokens[i]
            .parse()
            .map_err(|_| format_err(path, 0, format!("bad {what} '{}'", tokens[i])))
    };
    let dims = GridDims::new(num(2, "L")?, num(3, "W")?, num(4, "H")?, num(5, "T")?)?;
    Ok((dims, header.len() as u64 + 1))
}

/// Reads only the header of a raw volume file.
pub fn read_raw_dims(path: &Path) -> Result<GridDims> {
    let mut reader = BufReader::new(File::open(path)?);
    Ok(read_header(&mut reader, path)?.0)
}

/// Reads a full raw volume file. The subject id defaults to the file stem;
/// no label is attached.
pub fn read_raw_volume(path: &Path) -> Result<ScanVolume> {
    let mut reader = BufReader::new(File::open(path)?);
    let (dims, header_len) = read_header(&mut reader, path)?;
    let n = dims.samples();
    let mut payload = vec![0f32; n];
    reader
        .read_f32_into::<LittleEndian>(&mut payload)
        .map_err(|_| format_err(path, header_len, format!("truncated payload, expected {n} f32s")))?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(format_err(
            path,
            header_len + 4 * n as u64,
            "trailing bytes after payload",
        ));
    }
    let volume_major: Vec<f64> = payload.iter().map(|&x| x as f64).collect();
    let subject = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scan".into());
    ScanVolume::from_volume_major(dims, &volume_major, subject, None)
}

/// Writes a scan in the raw format. Samples are quantized to `f32`; a file
/// read back and rewritten is byte-identical.
pub fn write_raw_volume(scan: &ScanVolume, path: &Path) -> Result<()> {
    let dims = scan.dims();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "rawvol v1 {} {} {} {}", dims.l, dims.w, dims.h, dims.t)?;
    for x in scan.to_volume_major() {
        out.write_f32::<LittleEndian>(x as f32)?;
    }
    out.flush()?;
    Ok(())
}
