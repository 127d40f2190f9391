//! Field dump formats.
//!
//! Binary layout (all little-endian):
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 4    | magic `NFLD`                     |
//! | 4      | 4    | format version (`u32`, = 1)      |
//! | 8      | 4    | dimension (`u32`)                |
//! | 12     | 4    | points per axis `n` (`u32`)      |
//! | 16     | 8    | box half-width `L` (`f64`)       |
//! | 24     | 8    | ε (`f64`)                        |
//! | 32     | 8·nᵈ | values (`f64`), row-major, last axis fastest |
//!
//! The CSV variant has one header line `# dim=D n=N L=HALF eps=EPS` followed
//! by one value per line in the same order, printed in shortest round-trip form.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &[u8; 4] = b"NFLD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

/// A field together with the ε it was computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub field: Field,
    pub eps: f64,
}

pub fn encode(field: &Field, eps: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    out.extend_from_slice(&g.half_width().to_le_bytes());
    out.extend_from_slice(&eps.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<const N: usize>(bytes: &[u8], at: usize) -> [u8; N] {
    let mut buf = [0u8; N];
    buf.copy_from_slice(&bytes[at..at + N]);
    buf
}

pub fn decode(bytes: &[u8]) -> Result<FieldDump> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(bytes, 4));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(take(bytes, 8)) as usize;
    let n = u32::from_le_bytes(take(bytes, 12)) as usize;
    let half_width = f64::from_le_bytes(take(bytes, 16));
    let eps = f64::from_le_bytes(take(bytes, 24));
    let grid = Grid::new(dim, n, half_width).map_err(|e| Error::Format(e.to_string()))?;
    let expected = HEADER_LEN + 8 * grid.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(take(c, 0)))
        .collect();
    Ok(FieldDump { field: Field::new(grid, values)?, eps })
}

pub fn write_binary(path: &Path, field: &Field, eps: f64) -> Result<()> {
    std::fs::write(path, encode(field, eps))?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<FieldDump> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn write_csv<W: Write>(mut w: W, field: &Field, eps: f64) -> Result<()> {
    let g = field.grid();
    writeln!(w, "# dim={} n={} L={} eps={}", g.dim(), g.n(), g.half_width(), eps)?;
    for v in field.values() {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<FieldDump> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty csv dump".into()))??;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("missing '#' header".into()))?;
    let (mut dim, mut n, mut l, mut eps) = (None, None, None, None);
    for tok in header.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header token {tok:?}")))?;
        let bad = |_| Error::Format(format!("bad header value {tok:?}"));
        match key {
            "dim" => dim = Some(val.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "n" => n = Some(val.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "L" => l = Some(val.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "eps" => eps = Some(val.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            _ => {}
        }
    }
    let missing = |k: &str| Error::Format(format!("header lacks {k}"));
    let grid = Grid::new(dim.ok_or_else(|| missing("dim"))?, n.ok_or_else(|| missing("n"))?, l.ok_or_else(|| missing("L"))?)
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(t.parse::<f64>().map_err(|e| Error::Format(format!("{t:?}: {e}")))?);
    }
    Ok(FieldDump { field: Field::new(grid, values)?, eps: eps.ok_or_else(|| missing("eps"))? })
}
