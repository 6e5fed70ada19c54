//! Report writers. Every payload is a pure function of the config, so two
//! runs produce identical bytes; only the manifest carries timing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::RunError;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"DWAVE\0\x01\0";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// An output directory that remembers what was written to it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(root).map_err(|e| RunError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.written
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let p = self.root.join(name);
        fs::write(&p, bytes).map_err(|e| RunError::Io(format!("cannot write {}: {e}", p.display())))?;
        self.written.retain(|f| f.name != name);
        self.written.push(FileEntry { name: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    /// CSV with a header row and f64 cells; `None` becomes an empty cell.
    pub fn write_table(&mut self, name: &str, header: &[String], rows: &[Vec<Option<f64>>]) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()))?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }
}

/// Snapshot file: magic, then f64 LE values n, L, dt, count, the count
/// snapshot times, and per snapshot u followed by ∂_t u in (i, j, k)
/// row-major order.
pub fn encode_snapshots(n: usize, extent: f64, dt: f64, snaps: &[(f64, &[f64], &[f64])]) -> Vec<u8> {
    let cells = n * n * n;
    let mut out = Vec::with_capacity(8 + 8 * (4 + snaps.len() * (1 + 2 * cells)));
    out.extend_from_slice(SNAPSHOT_MAGIC);
    for v in [n as f64, extent, dt, snaps.len() as f64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in snaps {
        out.extend_from_slice(&s.0.to_le_bytes());
    }
    for s in snaps {
        for v in s.1.iter().chain(s.2.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedSnapshots {
    pub n: usize,
    pub extent: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub fields: Vec<(Vec<f64>, Vec<f64>)>,
}

pub fn decode_snapshots(bytes: &[u8]) -> Option<DecodedSnapshots> {
    if bytes.len() < 40 || &bytes[..8] != SNAPSHOT_MAGIC {
        return None;
    }
    let vals: Vec<f64> = bytes[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (n, extent, dt, count) = (vals[0] as usize, vals[1], vals[2], vals[3] as usize);
    let cells = n * n * n;
    if vals.len() != 4 + count * (1 + 2 * cells) {
        return None;
    }
    let times = vals[4..4 + count].to_vec();
    let body = &vals[4 + count..];
    let fields = (0..count)
        .map(|s| {
            let base = s * 2 * cells;
            (body[base..base + cells].to_vec(), body[base + cells..base + 2 * cells].to_vec())
        })
        .collect();
    Some(DecodedSnapshots { n, extent, dt, times, fields })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn snapshot_round_trip() {
        let n = 3;
        let u: Vec<f64> = (0..27).map(|i| i as f64 * 0.5).collect();
        let ut: Vec<f64> = (0..27).map(|i| -(i as f64)).collect();
        let bytes = encode_snapshots(n, 2.0, 0.125, &[(1.0, &u, &ut), (2.0, &ut, &u)]);
        assert_eq!(bytes.len(), 8 + 8 * (4 + 2 + 4 * 27));
        let d = decode_snapshots(&bytes).unwrap();
        assert_eq!((d.n, d.extent, d.dt), (3, 2.0, 0.125));
        assert_eq!(d.times, vec![1.0, 2.0]);
        assert_eq!(d.fields[0], (u.clone(), ut.clone()));
        assert_eq!(d.fields[1], (ut, u));
        assert!(decode_snapshots(&bytes[..bytes.len() - 8]).is_none());
    }
}
