//! Binary matrix files with JSON sidecars.
//!
//! Layout: `rows: u64`, `cols: u64` (little endian), then `rows * cols`
//! little-endian `f64` values in row-major order. The sidecar sits next to the
//! matrix with the extension replaced by `.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_matrix(mut out: impl Write, rows: &[&[f64]]) -> Result<()> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Format("ragged matrix rows".into()));
    }
    out.write_all(&(rows.len() as u64).to_le_bytes())?;
    out.write_all(&(cols as u64).to_le_bytes())?;
    for row in rows {
        for x in *row {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix(mut input: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut row = Vec::with_capacity(cols);
        for _ in 0..cols {
            input
                .read_exact(&mut word)
                .map_err(|_| Error::Format("matrix file is truncated".into()))?;
            row.push(f64::from_le_bytes(word));
        }
        out.push(row);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format("trailing bytes after matrix".into()));
    }
    Ok(out)
}

pub fn sidecar_path(matrix: &Path) -> PathBuf {
    matrix.with_extension("json")
}

/// Writes the matrix and its pretty-printed JSON sidecar.
pub fn save_with_sidecar<M: Serialize>(path: &Path, rows: &[&[f64]], meta: &M) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, rows)?;
    w.flush()?;
    let mut json = serde_json::to_string_pretty(meta)?;
    json.push('\n');
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn load_with_sidecar<M: DeserializeOwned>(path: &Path) -> Result<(Vec<Vec<f64>>, M)> {
    let rows = read_matrix(BufReader::new(File::open(path)?))?;
    let meta = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
    Ok((rows, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let a = [1.0, -2.5, f64::MIN_POSITIVE];
        let b = [0.0, 1e300, -0.0];
        let mut buf = Vec::new();
        write_matrix(&mut buf, &[&a, &b]).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 8);
        let back = read_matrix(&buf[..]).unwrap();
        assert_eq!(back, vec![a.to_vec(), b.to_vec()]);
        assert_eq!(back[1][2].to_bits(), (-0.0f64).to_bits());
        assert!(read_matrix(&buf[..buf.len() - 1]).is_err());
        assert!(write_matrix(Vec::new(), &[&a, &b[..2]]).is_err());
    }
}
