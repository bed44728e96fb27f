//! DFLD displacement-field file format.
//!
//! Layout, all little-endian:
//!   magic  b"DFLD"
//!   version u16        (currently 1)
//!   width   u32
//!   height  u32
//!   payload width*height pairs of f32 (dx, dy), row-major, pixel units.
//!
//! Components are stored as f32; write -> read -> write is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ribreg_core::grid::DisplacementField;

use crate::error::{CliError, Result};

pub const DFLD_MAGIC: &[u8; 4] = b"DFLD";
pub const DFLD_VERSION: u16 = 1;

pub fn write_field(path: &Path, field: &DisplacementField) -> Result<()> {
    let file = File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    w.write_all(DFLD_MAGIC).map_err(io_err)?;
    w.write_all(&DFLD_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(field.width() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&(field.height() as u32).to_le_bytes())
        .map_err(io_err)?;
    for v in field.vectors() {
        w.write_all(&(v[0] as f32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(v[1] as f32).to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_field(path: &Path) -> Result<DisplacementField> {
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = BufReader::new(file);
    let format_err = |message: &str| CliError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| format_err("missing DFLD magic"))?;
    if &magic != DFLD_MAGIC {
        return Err(format_err("bad magic, not a DFLD file"));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf)
        .map_err(|_| format_err("truncated header"))?;
    let version = u16::from_le_bytes(u16buf);
    if version != DFLD_VERSION {
        return Err(format_err("unsupported DFLD version"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| format_err("truncated header"))?;
    let width = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)
        .map_err(|_| format_err("truncated header"))?;
    let height = u32::from_le_bytes(u32buf) as usize;

    let n = width
        .checked_mul(height)
        .ok_or_else(|| format_err("dimension overflow"))?;
    let mut payload = vec![0u8; n * 8];
    r.read_exact(&mut payload)
        .map_err(|_| format_err("truncated payload"))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|_| format_err("read error"))? != 0 {
        return Err(format_err("trailing bytes after payload"));
    }

    let mut u = Vec::with_capacity(n);
    for c in payload.chunks_exact(8) {
        let dx = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        let dy = f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64;
        u.push([dx, dy]);
    }
    DisplacementField::new(width, height, u).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Rounds a field through the f32 storage precision without touching disk;
/// in-process pipelines use this to mirror what a DFLD round-trip produces.
pub fn quantize_like_dfld(field: &DisplacementField) -> DisplacementField {
    let u = field
        .vectors()
        .iter()
        .map(|v| [v[0] as f32 as f64, v[1] as f32 as f64])
        .collect();
    DisplacementField::new(field.width(), field.height(), u).expect("finite after narrowing")
}
