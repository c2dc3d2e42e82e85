//! Run manifests and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use graphon_ldp::io::{fmt_f64, to_json};

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    /// SHA-256 over the command parameters and the bytes of every input file.
    pub config_hash: String,
}

/// Accumulates everything that determines a run's output.
pub struct ConfigHasher {
    hasher: Sha256,
}

impl ConfigHasher {
    pub fn new(command: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        Self { hasher }
    }

    pub fn param(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.hasher.update(format!("\0{key}={value}").as_bytes());
        self
    }

    pub fn input(&mut self, bytes: &[u8]) -> &mut Self {
        self.hasher.update(b"\0file\0");
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
        self
    }

    pub fn finish(self, command: &'static str, seed: Option<u64>) -> Manifest {
        let digest = self.hasher.finalize();
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Manifest { tool: "graphon-ldp", version: env!("CARGO_PKG_VERSION"), command, seed, config_hash }
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, then renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// JSON document with the manifest embedded under `"manifest"`.
#[derive(Serialize)]
struct WithManifest<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    manifest: &'a Manifest,
}

pub fn json_with_manifest<T: Serialize>(body: &T, manifest: &Manifest) -> Result<String> {
    Ok(to_json(&WithManifest { body, manifest })?)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

/// CSV with `\n` line endings and 17-digit floats.
pub struct Csv {
    text: String,
}

pub enum Cell {
    Int(usize),
    Real(f64),
    Text(&'static str),
    Empty,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        let parts: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::Int(i) => i.to_string(),
                Cell::Real(x) => fmt_f64(*x),
                Cell::Text(t) => (*t).to_string(),
                Cell::Empty => String::new(),
            })
            .collect();
        self.text.push_str(&parts.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}
