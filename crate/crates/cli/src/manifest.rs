//! Run manifests and hashed artifact I/O.
//!
//! Each command writes its outputs through [`Run`], which hashes every input
//! it reads and every output it writes, then emits `<name>.manifest.json`.
//! Output files refer to their manifest by name; the manifest alone holds the
//! wall-clock time so outputs stay byte-identical across reruns.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    /// Fully defaulted config as used.
    pub config: serde_json::Value,
    pub seed: u64,
    /// sha256 by path as given.
    pub inputs: BTreeMap<String, String>,
    /// sha256 by file name relative to the output directory.
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub software_version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Run {
    command: String,
    config_path: Option<PathBuf>,
    out_dir: PathBuf,
    manifest_name: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    started: Instant,
}

impl Run {
    /// `name` is the manifest stem; outputs reference `<name>.manifest.json`.
    pub fn start(command: &str, name: &str, config_path: Option<&Path>, out_dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(out_dir)?;
        let mut run = Self {
            command: command.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            out_dir: out_dir.to_path_buf(),
            manifest_name: format!("{name}.manifest.json"),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started: Instant::now(),
        };
        if let Some(p) = config_path {
            run.read_input(p)?;
        }
        Ok(run)
    }

    pub fn manifest_name(&self) -> &str {
        &self.manifest_name
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Reads an input artifact and records its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::Missing(format!("{}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        String::from_utf8(bytes).map_err(|e| Failure::Missing(format!("{}: {e}", path.display())))
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&mut self, path: &Path) -> Result<T, Failure> {
        let text = self.read_input(path)?;
        serde_json::from_str(&text).map_err(|e| Failure::Missing(format!("{} is not a valid artifact: {e}", path.display())))
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        std::fs::write(self.out_dir.join(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes serializable rows as RFC-4180 CSV with a header.
    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Other(anyhow::anyhow!("{e}")))?;
        self.write_bytes(name, &bytes)
    }

    pub fn finish<C: Serialize>(self, config: &C, seed: u64) -> Result<RunManifest, Failure> {
        let manifest = RunManifest {
            command: self.command,
            config_path: self.config_path.map(|p| p.display().to_string()),
            config: serde_json::to_value(config)?,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(self.out_dir.join(&self.manifest_name), text + "\n")?;
        Ok(manifest)
    }
}
