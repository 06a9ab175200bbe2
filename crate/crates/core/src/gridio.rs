//! On-disk formats: the raw `DRCGRID1` grid container, `DRCEMB01` embedding
//! sidecars and binary PGM (P5) for eyeballing single-channel images.
//!
//! Raw grid layout: 8-byte magic, `u32` LE height, width, channels, then
//! `h*w*c` `f64` LE values in row-major `(row, col, channel)` order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{DrcError, Result};
use crate::numerics::Grid;

pub const GRID_MAGIC: &[u8; 8] = b"DRCGRID1";
pub const EMBEDDING_MAGIC: &[u8; 8] = b"DRCEMB01";

pub fn encode_grid(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + grid.len() * 8);
    out.extend_from_slice(GRID_MAGIC);
    for dim in [grid.height(), grid.width(), grid.channels()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<Grid> {
    if bytes.len() < 20 || &bytes[..8] != GRID_MAGIC {
        return Err(DrcError::Format("missing DRCGRID1 header".into()));
    }
    let dim =
        |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| DrcError::Format("grid dimensions overflow".into()))?;
    let body = &bytes[20..];
    if body.len() != n * 8 {
        return Err(DrcError::Format(format!(
            "grid body has {} bytes, expected {} for {h}x{w}x{c}",
            body.len(),
            n * 8
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Grid::new(h, w, c, data).map_err(|e| DrcError::Format(e.to_string()))
}

pub fn write_grid(path: &Path, grid: &Grid) -> Result<()> {
    write_atomic(path, &encode_grid(grid))
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path).map_err(|e| DrcError::io(path, e))?;
    decode_grid(&bytes).map_err(|e| match e {
        DrcError::Format(msg) => DrcError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn encode_embedding(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + values.len() * 8);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_embedding(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 12 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(DrcError::Format("missing DRCEMB01 header".into()));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != n * 8 {
        return Err(DrcError::Format(format!(
            "embedding body has {} bytes, expected {}",
            body.len(),
            n * 8
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

pub fn write_embedding(path: &Path, values: &[f64]) -> Result<()> {
    write_atomic(path, &encode_embedding(values))
}

pub fn read_embedding(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| DrcError::io(path, e))?;
    decode_embedding(&bytes)
}

/// Model domain `[-1, 1]` to an 8-bit level.
pub fn to_level(v: f64) -> u8 {
    (((v + 1.0) / 2.0).clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn from_level(p: u8) -> f64 {
    p as f64 / 255.0 * 2.0 - 1.0
}

/// P5 encoding; multi-channel grids are reduced to their channel mean.
pub fn encode_pgm(grid: &Grid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    for r in 0..grid.height() {
        for c in 0..grid.width() {
            let mean = (0..grid.channels())
                .map(|ch| grid.get(r, c, ch))
                .sum::<f64>()
                / grid.channels() as f64;
            out.push(to_level(mean));
        }
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Grid> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(DrcError::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(DrcError::Format(format!(
            "unsupported PGM magic {}",
            fields[0]
        )));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| DrcError::Format(format!("bad PGM header field {s}")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(DrcError::Format(format!(
            "only maxval 255 supported, got {maxval}"
        )));
    }
    let raster = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| DrcError::Format("truncated PGM raster".into()))?;
    Grid::new(h, w, 1, raster.iter().map(|&p| from_level(p)).collect())
}

pub fn write_pgm(path: &Path, grid: &Grid) -> Result<()> {
    write_atomic(path, &encode_pgm(grid))
}

pub fn read_pgm(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path).map_err(|e| DrcError::io(path, e))?;
    decode_pgm(&bytes)
}

/// Writes to a temporary sibling and renames, so pollers never observe a
/// partially written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| DrcError::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| DrcError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| DrcError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| DrcError::io(path, e))
}
