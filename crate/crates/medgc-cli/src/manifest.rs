//! Run manifests: each subcommand records what it read, what it wrote, and
//! the digest of its effective configuration, so identical reruns can be
//! recognized byte-for-byte and inputs can be audited later.
//!
//! Manifests contain no timestamps or host details on purpose — rerunning a
//! command with the same inputs, configuration, and seed must reproduce the
//! manifest exactly.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = std::fs::File::open(path).map_err(|e| {
        CliError::usage(format!("cannot open {}: {e}", path.display()))
    })?;
    let mut hasher = Sha256::new();
    let mut buffer = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buffer).map_err(|e| {
            CliError::invalid(format!("cannot read {}: {e}", path.display()))
        })?;
        if n == 0 {
            break;
        }
        hasher.update(&buffer[..n]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        let _ = write!(hex, "{byte:02x}");
    }
    Ok(hex)
}

/// Digest of the effective configuration: the canonical JSON encoding of a
/// per-command resolved-settings struct.
pub fn config_hash<T: Serialize>(resolved: &T) -> Result<String, CliError> {
    let json = serde_json::to_vec(resolved)
        .map_err(|e| CliError::invalid(format!("cannot encode configuration: {e}")))?;
    Ok(sha256_hex(&json))
}

/// Per-file digests of a directory's regular files (one level deep, names
/// sorted), skipping `manifest.json` itself. Model banks are flat, so this
/// captures them completely.
pub fn hash_dir(dir: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut digests = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| {
        CliError::usage(format!("cannot read directory {}: {e}", dir.display()))
    })?;
    for entry in entries {
        let entry = entry.map_err(|e| {
            CliError::invalid(format!("cannot list {}: {e}", dir.display()))
        })?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "manifest.json" {
            continue;
        }
        digests.insert(name, sha256_file(&path)?);
    }
    Ok(digests)
}

/// What a subcommand run consumed and produced.
#[derive(Debug, Serialize)]
pub struct Manifest {
    /// Subcommand name.
    pub command: String,
    /// Master seed the run used.
    pub seed: u64,
    /// Digest of the effective configuration.
    pub config_hash: String,
    /// Input label → content digest.
    pub inputs: BTreeMap<String, String>,
    /// Output file name → content digest.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_hash: String) -> Self {
        Manifest {
            command: command.to_string(),
            seed,
            config_hash,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Records an input by digesting the file at `path`.
    pub fn input_file(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.inputs.insert(label.to_string(), digest);
        Ok(())
    }

    /// Records an already-computed input digest.
    pub fn input_digest(&mut self, label: &str, digest: String) {
        self.inputs.insert(label.to_string(), digest);
    }

    /// Records an output by digesting the file at `path`, keyed by its
    /// file name.
    pub fn output_file(&mut self, path: &Path) -> Result<(), CliError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let digest = sha256_file(path)?;
        self.outputs.insert(name, digest);
        Ok(())
    }

    /// Writes `manifest.json` into `dir` (pretty JSON, trailing newline).
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::invalid(format!("cannot encode manifest: {e}")))?;
        json.push('\n');
        let path = dir.join("manifest.json");
        std::fs::write(&path, json).map_err(|e| {
            CliError::invalid(format!("cannot write {}: {e}", path.display()))
        })?;
        Ok(())
    }
}

/// Writes `text` to `path` and, when given, records the file in `manifest`.
pub fn write_text(
    path: &Path,
    text: &str,
    manifest: Option<&mut Manifest>,
) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))?;
    if let Some(manifest) = manifest {
        manifest.output_file(path)?;
    }
    Ok(())
}
