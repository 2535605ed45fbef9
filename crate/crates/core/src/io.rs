//! File formats.
//!
//! * Inner products: 8-byte little-endian `u64` size `N`, then `N * N`
//!   entries in row-major order, each as two little-endian `f64` (re, im).
//!   A JSON sidecar records `degrees`, `k` and `frame = "monomial"`; the
//!   matrix is always written in the plain monomial basis `z^j e_i`.
//! * Fields: little-endian header `u64 n_points`, `u64 rank`, followed by one
//!   32-byte record per matrix entry: `u64 point`, `u32 row`, `u32 col`,
//!   `f64 re`, `f64 im`. The CSV variant has the header `point,row,col,re,im`.
//!   Every entry of every point must appear exactly once.
//! * Flow traces: CSV with header `t,mu0_norm,dk_ref,sup_err,lam_min,lam_max,cond_max`.
//!
//! Floats are written with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::TraceRow;
use crate::linalg::CMat;

/// Largest matrix or field accepted by the decoders.
const MAX_ENTRIES: u64 = 1 << 26;

/// Metadata stored next to an inner-product file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerMeta {
    pub degrees: Vec<i64>,
    pub k: u32,
    pub frame: String,
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos.checked_add(N).filter(|&e| e <= self.data.len()).ok_or_else(|| {
            Error::Format(format!("unexpected end of data at byte {}", self.pos))
        })?;
        let mut out = [0u8; N];
        out.copy_from_slice(&self.data[self.pos..end]);
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take()?);
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite value before byte {}", self.pos)));
        }
        Ok(v)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_matrix(m: &CMat) -> Vec<u8> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(8 + 16 * n * n);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..n {
            out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
    out
}

/// Decodes a square complex matrix; Hermitian symmetry is left to the caller.
pub fn decode_matrix(data: &[u8]) -> Result<CMat> {
    let mut r = Reader { data, pos: 0 };
    let n = r.u64()?;
    if n == 0 || n.checked_mul(n).is_none_or(|nn| nn > MAX_ENTRIES) {
        return Err(Error::Format(format!("matrix size {n} out of range")));
    }
    let expected = 8 + 16 * (n * n) as usize;
    if data.len() != expected {
        return Err(Error::Format(format!("{} bytes for a {n}x{n} matrix, expected {expected}", data.len())));
    }
    let n = n as usize;
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = Complex64::new(r.f64()?, r.f64()?);
        }
    }
    r.finish()?;
    Ok(m)
}

/// Pointwise square matrices read from a field file.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    pub rank: usize,
    pub values: Vec<CMat>,
}

struct FieldBuilder {
    rank: usize,
    values: Vec<CMat>,
    seen: Vec<bool>,
}

impl FieldBuilder {
    fn new(n_points: u64, rank: u64) -> Result<Self> {
        if rank == 0 || n_points == 0 {
            return Err(Error::Format("empty field".into()));
        }
        let total = rank.checked_mul(rank).and_then(|r2| r2.checked_mul(n_points));
        if total.is_none_or(|t| t > MAX_ENTRIES) {
            return Err(Error::Format(format!("field of {n_points} points and rank {rank} is too large")));
        }
        let (n, r) = (n_points as usize, rank as usize);
        Ok(Self { rank: r, values: vec![CMat::zeros(r, r); n], seen: vec![false; n * r * r] })
    }

    fn set(&mut self, point: u64, row: u64, col: u64, v: Complex64) -> Result<()> {
        let r = self.rank as u64;
        if point >= self.values.len() as u64 || row >= r || col >= r {
            return Err(Error::Format(format!("entry ({point}, {row}, {col}) out of range")));
        }
        let (p, i, j) = (point as usize, row as usize, col as usize);
        let idx = (p * self.rank + i) * self.rank + j;
        if std::mem::replace(&mut self.seen[idx], true) {
            return Err(Error::Format(format!("entry ({point}, {row}, {col}) appears twice")));
        }
        self.values[p][(i, j)] = v;
        Ok(())
    }

    fn finish(self) -> Result<FieldData> {
        if let Some(idx) = self.seen.iter().position(|s| !s) {
            let r2 = self.rank * self.rank;
            return Err(Error::Format(format!(
                "entry ({}, {}, {}) is missing",
                idx / r2,
                (idx % r2) / self.rank,
                idx % self.rank
            )));
        }
        Ok(FieldData { rank: self.rank, values: self.values })
    }
}

pub fn encode_field_binary(values: &[CMat]) -> Vec<u8> {
    let r = values.first().map_or(0, |m| m.nrows());
    let mut out = Vec::with_capacity(16 + 32 * values.len() * r * r);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    out.extend_from_slice(&(r as u64).to_le_bytes());
    for (p, m) in values.iter().enumerate() {
        for i in 0..r {
            for j in 0..r {
                out.extend_from_slice(&(p as u64).to_le_bytes());
                out.extend_from_slice(&(i as u32).to_le_bytes());
                out.extend_from_slice(&(j as u32).to_le_bytes());
                out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
                out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_field_binary(data: &[u8]) -> Result<FieldData> {
    let mut r = Reader { data, pos: 0 };
    let n_points = r.u64()?;
    let rank = r.u64()?;
    let body = (data.len() - 16) as u64;
    let entries = rank.checked_mul(rank).and_then(|r2| r2.checked_mul(n_points));
    if entries.and_then(|e| e.checked_mul(32)) != Some(body) {
        return Err(Error::Format(format!("{body} record bytes for {n_points} points of rank {rank}")));
    }
    let mut b = FieldBuilder::new(n_points, rank)?;
    let records = b.seen.len();
    for _ in 0..records {
        let p = r.u64()?;
        let i = r.u32()? as u64;
        let j = r.u32()? as u64;
        let v = Complex64::new(r.f64()?, r.f64()?);
        b.set(p, i, j, v)?;
    }
    r.finish()?;
    b.finish()
}

pub fn encode_field_csv(values: &[CMat]) -> String {
    let mut out = String::from("point,row,col,re,im\n");
    for (p, m) in values.iter().enumerate() {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                out.push_str(&format!("{p},{i},{j},{},{}\n", fmt_f64(v.re), fmt_f64(v.im)));
            }
        }
    }
    out
}

pub fn decode_field_csv(text: &str) -> Result<FieldData> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "point,row,col,re,im" => {}
        _ => return Err(Error::Format("missing header point,row,col,re,im".into())),
    }
    let mut entries = Vec::new();
    let (mut max_p, mut max_r) = (0u64, 0u64);
    for (ln, line) in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(Error::Format(format!("line {}: expected 5 columns, found {}", ln + 1, cols.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Format(format!("line {}: {e}", ln + 1)));
        let float = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Format(format!("line {}: bad number {s:?}", ln + 1)))
        };
        let (p, i, j) = (int(cols[0])?, int(cols[1])?, int(cols[2])?);
        let v = Complex64::new(float(cols[3])?, float(cols[4])?);
        max_p = max_p.max(p);
        max_r = max_r.max(i).max(j);
        entries.push((p, i, j, v));
        if entries.len() as u64 > MAX_ENTRIES {
            return Err(Error::Format("field is too large".into()));
        }
    }
    if entries.is_empty() {
        return Err(Error::Format("no entries".into()));
    }
    let mut b = FieldBuilder::new(max_p + 1, max_r + 1)?;
    for (p, i, j, v) in entries {
        b.set(p, i, j, v)?;
    }
    b.finish()
}

pub const TRACE_HEADER: &str = "t,mu0_norm,dk_ref,sup_err,lam_min,lam_max,cond_max";

/// Flow trace as CSV; rows carrying a moment map must have `|tr mu0| <= 1e-9`.
pub fn encode_trace_csv(rows: &[TraceRow]) -> Result<String> {
    let mut out = format!("{TRACE_HEADER}\n");
    for r in rows {
        if r.mu0_trace.is_finite() && r.mu0_trace.abs() > 1e-9 {
            return Err(Error::NonFinite(format!("trace row at t = {} has tr(mu0) = {:e}", r.t, r.mu0_trace)));
        }
        let cols = [r.t, r.mu0_norm, r.dk_ref, r.sup_err, r.lam_min, r.lam_max, r.cond_max];
        out.push_str(&cols.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, r: usize) -> Vec<CMat> {
        (0..n).map(|p| CMat::from_fn(r, r, |i, j| Complex64::new(p as f64 + 0.25 * i as f64, j as f64 - 1.0 / 3.0))).collect()
    }

    #[test]
    fn matrix_round_trip() {
        let m = sample(1, 4).remove(0);
        let bytes = encode_matrix(&m);
        assert_eq!(bytes.len(), 8 + 16 * 16);
        assert_eq!(decode_matrix(&bytes).unwrap(), m);
        assert!(decode_matrix(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn field_round_trips() {
        let v = sample(5, 2);
        assert_eq!(decode_field_binary(&encode_field_binary(&v)).unwrap().values, v);
        assert_eq!(decode_field_csv(&encode_field_csv(&v)).unwrap().values, v);
    }

    #[test]
    fn duplicate_and_missing_entries_rejected() {
        let text = "point,row,col,re,im\n0,0,0,1,0\n0,0,0,1,0\n";
        assert!(decode_field_csv(text).is_err());
        let text = "point,row,col,re,im\n0,0,0,1,0\n1,0,0,1,0\n0,1,1,1,0\n";
        assert!(decode_field_csv(text).is_err());
    }

    #[test]
    fn huge_headers_rejected() {
        let mut bytes = u64::MAX.to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0; 16]);
        assert!(decode_matrix(&bytes).is_err());
        let mut bytes = (1u64 << 40).to_le_bytes().to_vec();
        bytes.extend_from_slice(&(1u64 << 40).to_le_bytes());
        assert!(decode_field_binary(&bytes).is_err());
    }

    #[test]
    fn seventeen_digits() {
        let s = fmt_f64(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
