//! On-disk formats: wavefunction snapshots, CSV tables, key–value sidecars.
//!
//! Every writer goes through [`atomic_write`] (temp file + rename in the
//! destination directory), so partially written outputs never appear under
//! their final name. All formats are deterministic byte-for-byte for
//! identical inputs: floats are printed with [`format_float`] (17 significant
//! digits, enough to round-trip `f64` exactly).
//!
//! Snapshot layout (little-endian, magic `CVDSNAP1`):
//!
//! ```text
//! offset  size  field
//!      0     8  magic "CVDSNAP1"
//!      8   3×4  u32 grid sizes: n_r, n_nuc, n_q
//!     20   6×8  f64 grid bounds: r_min, r_max, nuc_min, nuc_max, q_min, q_max
//!     68     8  f64 time (atomic units)
//!     76  n×16  complex amplitudes (re, im f64 pairs), q index fastest,
//!               then nuclear, then electronic — n = n_r·n_nuc·n_q
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::grid::{Grid1D, Grid3D};
use crate::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"CVDSNAP1";

/// Format a float with enough digits to round-trip `f64` exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `bytes` to `path` atomically: a temp file in the same directory is
/// written, flushed, and renamed over the destination.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("not a writable path: {}", path.display())))?;
    let tmp_name = format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id());
    let tmp_path = match dir {
        Some(d) => d.join(&tmp_name),
        None => Path::new(&tmp_name).to_path_buf(),
    };
    let result = (|| -> Result<()> {
        let mut f = BufWriter::new(File::create(&tmp_path)?);
        f.write_all(bytes)?;
        f.into_inner().map_err(|e| Error::Io(e.into_error()))?.sync_all()?;
        fs::rename(&tmp_path, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp_path);
    }
    result
}

/// Serialize a wavefunction snapshot to `path`.
pub fn write_snapshot(
    path: &Path,
    grid: &Grid3D,
    time_au: f64,
    amplitudes: &[Complex64],
) -> Result<()> {
    let n = grid.len();
    if amplitudes.len() != n {
        return Err(Error::contract(format!(
            "snapshot has {} amplitudes but the grid holds {n}",
            amplitudes.len()
        )));
    }
    let mut buf = Vec::with_capacity(76 + 16 * n);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    for axis in [&grid.r, &grid.nuc, &grid.q] {
        buf.extend_from_slice(&(axis.n() as u32).to_le_bytes());
    }
    for axis in [&grid.r, &grid.nuc, &grid.q] {
        buf.extend_from_slice(&axis.min().to_le_bytes());
        buf.extend_from_slice(&axis.max().to_le_bytes());
    }
    buf.extend_from_slice(&time_au.to_le_bytes());
    for z in amplitudes {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    atomic_write(path, &buf)
}

/// Read back a snapshot written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<(Grid3D, f64, Vec<Complex64>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |what: &str| {
        Error::config(format!("{}: not a snapshot file ({what})", path.display()))
    };
    if bytes.len() < 76 {
        return Err(bad("truncated header"));
    }
    if &bytes[0..8] != SNAPSHOT_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let (n_r, n_nuc, n_q) = (u32_at(8), u32_at(12), u32_at(16));
    let grid = Grid3D {
        r: Grid1D::new(f64_at(20), f64_at(28), n_r)?,
        nuc: Grid1D::new(f64_at(36), f64_at(44), n_nuc)?,
        q: Grid1D::new(f64_at(52), f64_at(60), n_q)?,
    };
    let time_au = f64_at(68);
    let n = grid.len();
    if bytes.len() != 76 + 16 * n {
        return Err(bad("size does not match the declared grid"));
    }
    let amplitudes = (0..n)
        .map(|k| Complex64::new(f64_at(76 + 16 * k), f64_at(84 + 16 * k)))
        .collect();
    Ok((grid, time_au, amplitudes))
}

/// Write a `key = value` sidecar file. Keys keep their given order.
pub fn write_kv(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        text.push_str(k);
        text.push_str(" = ");
        text.push_str(v);
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// Read a `key = value` sidecar file; `#` starts a comment, blanks skipped.
pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(format!(
                "{}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                lineno + 1
            )));
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Write a comma-separated table: one header line, then one line per row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for (k, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::contract(format!(
                "row {k} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        let fields: Vec<String> = row.iter().map(|&x| format_float(x)).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// Read back a table written by [`write_csv`]: header names and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::config(format!("{}: empty table", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::config(format!(
                        "{}:{}: `{s}` is not a number",
                        path.display(),
                        lineno + 2
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::config(format!(
                "{}:{}: {} fields, header has {}",
                path.display(),
                lineno + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
