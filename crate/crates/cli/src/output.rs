//! Output artifacts and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct InputRecord {
    role: String,
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct OutputRecord {
    file: String,
    sha256: String,
}

/// Everything needed to reproduce a run. Holds no timings or clock readings,
/// so identical runs write identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    settings: serde_json::Value,
    inputs: Vec<InputRecord>,
    outputs: Vec<OutputRecord>,
    status: &'static str,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Self {
            tool: "keyshare",
            version: env!("CARGO_PKG_VERSION"),
            command,
            settings: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            status: "incomplete",
        }
    }

    pub fn input(&mut self, role: &str, path: &Path, data: &[u8]) {
        self.inputs.push(InputRecord {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: sha256(data),
        });
    }

    /// Records the resolved settings of the run.
    pub fn settings<S: Serialize>(&mut self, settings: &S) {
        self.settings = serde_json::to_value(settings).expect("settings serialize");
    }
}

pub fn sha256(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Files collected in memory and written together with the manifest.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, data: Vec<u8>) {
        self.files.push((name.to_string(), data));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut data = serde_json::to_vec_pretty(value).expect("artifact serializes");
        data.push(b'\n');
        self.add(name, data);
    }

    /// Writes every file, then the manifest listing them.
    pub fn finish(self, mut manifest: Manifest, status: &'static str) -> Result<(), CliError> {
        let write = |path: PathBuf, data: &[u8]| fs::write(&path, data).map_err(|source| CliError::Write { path, source });
        fs::create_dir_all(&self.dir).map_err(|source| CliError::Write {
            path: self.dir.clone(),
            source,
        })?;
        for (name, data) in &self.files {
            write(self.dir.join(name), data)?;
            manifest.outputs.push(OutputRecord {
                file: name.clone(),
                sha256: sha256(data),
            });
        }
        manifest.status = status;
        let mut data = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        data.push(b'\n');
        write(self.dir.join(MANIFEST), &data)
    }
}
