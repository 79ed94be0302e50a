//! Eigenbasis cache file.
//!
//! Layout: the 8-byte magic `SBBASIS\n`, a little-endian `u32` header length,
//! a JSON header, then little-endian `f64` payload: all energies, followed by
//! the modes row-major per mode. The header's `checksum` is the SHA-256 of the
//! payload bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EigenBasis, GridMeta, GridSpec};
use crate::geometry::Region;
use crate::{Error, Result};

pub const BASIS_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SBBASIS\n";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    region: Region,
    grid: GridMeta,
    e_max: f64,
    count: usize,
    checksum: String,
}

pub fn save_basis(basis: &EigenBasis, path: impl AsRef<Path>) -> Result<()> {
    let mut payload = Vec::with_capacity(8 * (basis.energies.len() + basis.raw_modes().len()));
    for v in basis.energies.iter().chain(basis.raw_modes()) {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let header = Header {
        format_version: BASIS_FORMAT_VERSION,
        region: basis.grid.region,
        grid: basis.grid.meta(),
        e_max: basis.cutoff,
        count: basis.len(),
        checksum: hex::encode(Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

pub fn load_basis(path: impl AsRef<Path>) -> Result<EigenBasis> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let name = path.display().to_string();
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Format(format!("{name} is not an eigenbasis file")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(Error::Checksum(name));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Format(format!("{name}: {e}")))?;
    if header.format_version != BASIS_FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: header.format_version, expected: BASIS_FORMAT_VERSION });
    }
    let payload = &body[hlen..];
    if hex::encode(Sha256::digest(payload)) != header.checksum {
        return Err(Error::Checksum(name));
    }
    let grid = GridSpec::with_cells(header.region, header.grid.cells_per_unit);
    if grid.meta() != header.grid {
        return Err(Error::Format(format!("{name}: grid metadata does not match its region")));
    }
    let n = grid.n_interior();
    let expected = header.count * (1 + n) * 8;
    if payload.len() != expected {
        return Err(Error::Checksum(name));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let energies: Vec<f64> = values.by_ref().take(header.count).collect();
    let modes: Vec<f64> = values.collect();
    Ok(EigenBasis::from_parts(grid, header.e_max, energies, modes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, Rectangle};
    use crate::spectral::solve_eigen;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("sb-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = GridSpec::with_cells(Domain::default().into(), 10);
        let basis = solve_eigen(&grid, 400.0).unwrap();
        let path = tmp("rt.bin");
        save_basis(&basis, &path).unwrap();
        let back = load_basis(&path).unwrap();
        assert_eq!(back.grid, basis.grid);
        assert_eq!(back.cutoff.to_bits(), basis.cutoff.to_bits());
        assert_eq!(back.energies.iter().map(|e| e.to_bits()).collect::<Vec<_>>(),
                   basis.energies.iter().map(|e| e.to_bits()).collect::<Vec<_>>());
        assert!(back.raw_modes().iter().zip(basis.raw_modes()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn grid_metadata_reproduced() {
        let grid = GridSpec::with_cells(Rectangle { width: 1.0, height: 0.5 }.into(), 14);
        let basis = solve_eigen(&grid, 300.0).unwrap();
        let path = tmp("meta.bin");
        save_basis(&basis, &path).unwrap();
        assert_eq!(load_basis(&path).unwrap().grid.meta(), grid.meta());
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let grid = GridSpec::with_cells(Domain::default().into(), 8);
        let basis = solve_eigen(&grid, 300.0).unwrap();
        let path = tmp("trunc.bin");
        save_basis(&basis, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 20]).unwrap();
        assert!(matches!(load_basis(&path), Err(Error::Checksum(_))));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let grid = GridSpec::with_cells(Domain::default().into(), 8);
        let basis = solve_eigen(&grid, 300.0).unwrap();
        let path = tmp("ver.bin");
        save_basis(&basis, &path).unwrap();
        let mut patched = fs::read(&path).unwrap();
        let needle = b"\"format_version\":1";
        let pos = patched.windows(needle.len()).position(|w| w == needle).unwrap();
        patched[pos + needle.len() - 1] = b'9';
        fs::write(&path, &patched).unwrap();
        assert!(matches!(load_basis(&path), Err(Error::VersionMismatch { found: 9, .. })));
    }
}
