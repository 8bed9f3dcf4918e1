use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: &Path) -> Result<Self, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Provenance written next to every command's outputs. Everything except
/// `duration_secs` is a function of the inputs and options.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a, O: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub options: &'a O,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub duration_secs: f64,
}

pub struct Recorder {
    start: Instant,
    out_dir: PathBuf,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    /// Create the output directory and start the clock.
    pub fn start(out_dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(out_dir).map_err(|e| Failure::io(out_dir, e))?;
        Ok(Self {
            start: Instant::now(),
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|e| Failure::io(&path, e))?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn finish<O: Serialize>(
        self,
        command: &str,
        options: &O,
        inputs: &[&Path],
    ) -> Result<(), Failure> {
        let manifest = RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            options,
            inputs: inputs
                .iter()
                .map(|p| FileHash::of(p))
                .collect::<Result<_, _>>()?,
            outputs: self
                .outputs
                .iter()
                .map(|p| FileHash::of(p))
                .collect::<Result<_, _>>()?,
            duration_secs: self.start.elapsed().as_secs_f64(),
        };
        let json =
            serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Usage(e.to_string()))?;
        let path = self.path("manifest.json");
        std::fs::write(&path, json + "\n").map_err(|e| Failure::io(&path, e))
    }
}
