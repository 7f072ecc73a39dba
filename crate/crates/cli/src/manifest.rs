use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix: f64,
    pub wall_seconds: Option<f64>,
}

/// Record of one invocation: enough to reproduce its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub schema_version: u32,
    /// The subcommand's configuration section with every default filled in.
    pub config: serde_json::Value,
    pub threads: usize,
    pub sequential: bool,
    /// SHA-256 of each grid's canonical encoding.
    pub grid_hashes: Vec<String>,
    pub solver: Option<serde_json::Value>,
    pub outputs: Vec<OutputFile>,
    pub timings: Timings,
    /// `running`, `ok` or `failed`.
    pub status: String,
    pub error: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects outputs and writes the manifest at start and finish.
pub struct Recorder {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn start(
        dir: &Path,
        command: &str,
        config: serde_json::Value,
        threads: usize,
        sequential: bool,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let r = Recorder {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                tool: "chorin".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                schema_version: crate::config::SCHEMA_VERSION,
                config,
                threads,
                sequential,
                grid_hashes: Vec::new(),
                solver: None,
                outputs: Vec::new(),
                timings: Timings {
                    started_unix,
                    wall_seconds: None,
                },
                status: "running".into(),
                error: None,
            },
            started: Instant::now(),
        };
        r.save()?;
        Ok(r)
    }

    pub fn add_grid(&mut self, grid: &chorin::Grid) {
        self.manifest.grid_hashes.push(sha256_hex(&grid.fingerprint()));
    }

    /// Writes `bytes` to `name` in the output directory and lists it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.retain(|o| o.path != name);
        self.manifest.outputs.push(OutputFile {
            path: name.into(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn save(&self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        let path = self.dir.join(MANIFEST_NAME);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    pub fn finish(mut self, outcome: &Result<(), CliError>) -> Result<(), CliError> {
        self.manifest.timings.wall_seconds = Some(self.started.elapsed().as_secs_f64());
        match outcome {
            Ok(()) => self.manifest.status = "ok".into(),
            Err(e) => {
                self.manifest.status = "failed".into();
                self.manifest.error = Some(e.to_string());
            }
        }
        self.save()
    }
}

pub fn load(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("manifest: {e}")))
}
