//! Template matrix files.
//!
//! Layout: an 8-byte little-endian header length `h`, `h` bytes of JSON
//! `{"dim": d, "count": n, "dtype": "f32le"}`, then `n * d` little-endian
//! `f32` values, row-major.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    dim: usize,
    count: usize,
    dtype: String,
}

const DTYPE: &str = "f32le";
const MAX_HEADER: u64 = 1 << 20;

pub fn write_templates<W: Write>(mut w: W, rows: &[Vec<f64>]) -> Result<()> {
    let dim = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            what: "template row length",
            expected: dim,
            got: bad.len(),
        });
    }
    let header = serde_json::to_vec(&Header {
        dim,
        count: rows.len(),
        dtype: DTYPE.into(),
    })?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(rows.len() * dim * 4);
    for row in rows {
        for &v in row {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_templates<R: Read>(mut r: R) -> Result<Vec<Vec<f64>>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(Error::InvalidParameter(format!("template header of {len} bytes")));
    }
    let mut header = vec![0u8; len as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    if header.dtype != DTYPE {
        return Err(Error::InvalidParameter(format!("unsupported dtype {:?}", header.dtype)));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let expected = header.dim * header.count * 4;
    if body.len() != expected {
        return Err(Error::DimensionMismatch {
            what: "template payload bytes",
            expected,
            got: body.len(),
        });
    }
    if header.dim == 0 {
        return Ok(vec![Vec::new(); header.count]);
    }
    Ok(body
        .chunks_exact(header.dim * 4)
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect()
        })
        .collect())
}

pub fn save_templates(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_templates(std::io::BufWriter::new(file), rows)
}

pub fn load_templates(path: &Path) -> Result<Vec<Vec<f64>>> {
    read_templates(std::io::BufReader::new(std::fs::File::open(path)?))
}
