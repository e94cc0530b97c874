//! SSNF binary field format.
//!
//! Layout (all little-endian): magic `SSNF`, `u32` version, `u32` d, `u32` n,
//! `f64` L, `f64` alpha, then `d` component arrays of `n^d` `f64` samples in
//! row-major order (last axis fastest).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::field::SpectralField;
use super::grid::{make_grid, GridSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SSNF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;

/// Header fields of an SSNF file.
#[derive(Clone, Debug, PartialEq)]
pub struct SsnfHeader {
    pub version: u32,
    pub d: u32,
    pub n: u32,
    pub l: f64,
    pub alpha: f64,
}

/// Serialize the real samples of `u` (d components).
pub fn encode(u: &SpectralField) -> Vec<u8> {
    let g = u.grid();
    let comps = u.components();
    let mut out = Vec::with_capacity(HEADER_LEN + comps.len() * g.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.d as u32).to_le_bytes());
    out.extend_from_slice(&(g.n as u32).to_le_bytes());
    out.extend_from_slice(&g.l.to_le_bytes());
    out.extend_from_slice(&g.alpha.to_le_bytes());
    for c in comps.iter().take(g.d) {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn fmt_err(file: &str, offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        file: file.to_string(),
        offset: offset as u64,
        msg: msg.into(),
    }
}

fn u32_at(b: &[u8], o: usize) -> u32 {
    u32::from_le_bytes(b[o..o + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], o: usize) -> f64 {
    f64::from_le_bytes(b[o..o + 8].try_into().unwrap())
}

/// Parse only the header.
pub fn decode_header(bytes: &[u8], name: &str) -> Result<SsnfHeader> {
    if bytes.len() < 4 || &bytes[0..4] != MAGIC {
        return Err(fmt_err(name, 0, "bad magic, expected SSNF"));
    }
    if bytes.len() < 8 {
        return Err(fmt_err(name, 4, "truncated header"));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(fmt_err(name, bytes.len(), "truncated header"));
    }
    Ok(SsnfHeader {
        version,
        d: u32_at(bytes, 8),
        n: u32_at(bytes, 12),
        l: f64_at(bytes, 16),
        alpha: f64_at(bytes, 24),
    })
}

/// Decode a field. When `grid` is given its (d, n, L, alpha) must match the header;
/// otherwise a grid is built from the header (dealiasing off).
pub fn decode(bytes: &[u8], name: &str, grid: Option<&GridSpec>) -> Result<SpectralField> {
    let h = decode_header(bytes, name)?;
    let g = match grid {
        Some(g) => {
            if g.d as u32 != h.d || g.n as u32 != h.n || g.l != h.l || g.alpha != h.alpha {
                return Err(fmt_err(name, 8, "header does not match the expected grid"));
            }
            g.clone()
        }
        None => make_grid(h.d as usize, h.n as usize, h.l, h.alpha, false)
            .map_err(|e| fmt_err(name, 8, format!("invalid header: {e}")))?,
    };
    let npts = g.len();
    let need = HEADER_LEN + g.d * npts * 8;
    if bytes.len() < need {
        return Err(fmt_err(name, bytes.len(), format!("truncated payload, expected {need} bytes")));
    }
    if bytes.len() > need {
        return Err(fmt_err(name, need, "trailing bytes after payload"));
    }
    let mut comps = Vec::with_capacity(g.d);
    for a in 0..g.d {
        let base = HEADER_LEN + a * npts * 8;
        comps.push((0..npts).map(|p| f64_at(bytes, base + 8 * p)).collect());
    }
    SpectralField::from_samples(&g, comps).map_err(|e| fmt_err(name, HEADER_LEN, e.to_string()))
}

pub fn write_field(path: &Path, u: &SpectralField) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(u))?;
    Ok(())
}

pub fn read_field(path: &Path, grid: Option<&GridSpec>) -> Result<SpectralField> {
    let bytes = fs::read(path)?;
    decode(&bytes, &path.display().to_string(), grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bit_exact() {
        let g = make_grid(2, 16, 1.25, 1.5, false).unwrap();
        let u = SpectralField::from_fn(&g, 2, |x| vec![(x[0] * 7.1).sin() / 3.0, (x[1] * 1.7).exp()]);
        let bytes = encode(&u);
        let v = decode(&bytes, "mem", None).unwrap();
        assert_eq!(encode(&v), bytes);
        for (a, b) in u.components().iter().flatten().zip(v.components().iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_corruption() {
        let g = make_grid(2, 8, 1.0, 1.5, false).unwrap();
        let u = SpectralField::zeros(&g);
        let mut bytes = encode(&u);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let e = decode(&bad, "f.ssnf", None).unwrap_err().to_string();
        assert!(e.contains("f.ssnf") && e.contains("offset 0"), "{e}");
        bytes[4] = 2;
        assert!(matches!(decode(&bytes, "f", None), Err(Error::UnsupportedVersion(2))));
        let short = encode(&u)[..40].to_vec();
        assert!(decode(&short, "f", None).is_err());
    }
}
