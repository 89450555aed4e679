//! Output emission: CSV tables, atomic file writes and run manifests.
//!
//! CSV is byte-stable: a mandatory header row, `,` separators, `.` decimal
//! point, LF line endings, floats in shortest round-trip exponent form.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// A CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    /// Quoted when it contains a separator, quote or line break.
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if *v == 0.0 => "0".to_string(),
            Cell::Float(v) => format!("{v:e}"),
            Cell::Text(s) if s.contains([',', '"', '\n', '\r']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::validation(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| {
        Error::validation(format!("output path {} has no file name", path.display()))
    })?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Record written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub output: String,
    pub output_sha256: String,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn manifest_path(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_os_string();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write_for(&self, output: &Path) -> Result<PathBuf> {
        let path = Self::manifest_path(output);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_format_is_fixed() {
        let mut t = CsvTable::new(&["trial", "raw_phase"]);
        t.push(vec![0usize.into(), 0.0.into()]).unwrap();
        t.push(vec![1usize.into(), (-1.5e-20).into()]).unwrap();
        t.push(vec![2usize.into(), 1234.5.into()]).unwrap();
        assert_eq!(t.render(), "trial,raw_phase\n0,0\n1,-1.5e-20\n2,1.2345e3\n");
        assert!(t.push(vec![1usize.into()]).is_err());
        let mut text = CsvTable::new(&["name"]);
        text.push(vec![Cell::Text("a,\"b\"".into())]).unwrap();
        assert_eq!(text.render(), "name\n\"a,\"\"b\"\"\"\n");
        let v: f64 = "-1.5e-20".parse().unwrap();
        assert_eq!(v, -1.5e-20);
    }

    #[test]
    fn floats_round_trip() {
        for v in [std::f64::consts::PI, 1.0 / 3.0, 6.02214076e23, -2.2e-308] {
            let s = Cell::Float(v).render();
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn atomic_write_and_manifest() {
        let dir = std::env::temp_dir().join(format!("mdd-out-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let out = dir.join("a.csv");
        write_atomic(&out, b"x\n1\n").unwrap();
        write_atomic(&out, b"x\n2\n").unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), "x\n2\n");
        let m = RunManifest {
            tool: "mdd".into(),
            version: "0".into(),
            subcommand: "test".into(),
            config_sha256: sha256_hex(b"{}"),
            seed: Some(1),
            wall_time_s: 0.0,
            output: out.display().to_string(),
            output_sha256: sha256_hex(b"x\n2\n"),
            notes: vec![],
        };
        let p = m.write_for(&out).unwrap();
        assert!(p.to_string_lossy().ends_with("a.csv.manifest.json"));
        let entries: Vec<_> = fs::read_dir(&dir).unwrap().collect();
        assert_eq!(entries.len(), 2);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
