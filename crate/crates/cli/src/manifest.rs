//! Run manifests: what a command read, how it was configured and what it wrote.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use motifwatch::io::write_json;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    /// Digest of the file at `path`, recorded under the name `shown`.
    pub fn of(path: &Path, shown: String) -> motifwatch::Result<FileDigest> {
        let mut file = File::open(path).map_err(|source| motifwatch::Error::Open {
            path: path.to_path_buf(),
            source,
        })?;
        let mut hasher = Sha256::new();
        let bytes = std::io::copy(&mut file, &mut hasher)?;
        Ok(FileDigest {
            path: shown,
            bytes,
            sha256: format!("{:x}", hasher.finalize()),
        })
    }
}

/// Wall-clock free by design, so identical runs write identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Collects a manifest while a command writes into its output directory.
pub struct Recorder {
    dir: PathBuf,
    /// Paths under this root are recorded relative to it.
    root: PathBuf,
    manifest: RunManifest,
}

impl Recorder {
    pub fn new(command: &str, dir: &Path, root: &Path) -> motifwatch::Result<Recorder> {
        std::fs::create_dir_all(dir)?;
        Ok(Recorder {
            dir: dir.to_path_buf(),
            root: root.to_path_buf(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").trim_end_matches("-cli").to_owned(),
                version: env!("CARGO_PKG_VERSION").to_owned(),
                command: command.to_owned(),
                parameters: BTreeMap::new(),
                seed: None,
                inputs: Vec::new(),
                outputs: Vec::new(),
                notes: Vec::new(),
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("parameters serialize");
        self.manifest.parameters.insert(key.to_owned(), value);
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn note(&mut self, note: String) {
        log::warn!("{note}");
        self.manifest.notes.push(note);
    }

    /// Record a note that was already reported elsewhere.
    pub fn quiet_note(&mut self, note: String) {
        self.manifest.notes.push(note);
    }

    fn shown(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.to_string_lossy().replace('\\', "/")
    }

    pub fn input(&mut self, path: &Path) -> motifwatch::Result<()> {
        let digest = FileDigest::of(path, self.shown(path))?;
        self.manifest.inputs.push(digest);
        Ok(())
    }

    /// Record a file already written into the output directory.
    pub fn output(&mut self, name: &str) -> motifwatch::Result<()> {
        let path = self.path(name);
        let shown = path
            .strip_prefix(&self.dir)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        self.manifest.outputs.push(FileDigest::of(&path, shown)?);
        Ok(())
    }

    /// Record a file written by a nested command, under its path relative to this directory.
    pub fn nested_output(&mut self, path: &Path) -> motifwatch::Result<()> {
        let shown = path
            .strip_prefix(&self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.manifest.outputs.push(FileDigest::of(path, shown)?);
        Ok(())
    }

    pub fn finish(self) -> motifwatch::Result<RunManifest> {
        write_json(&self.dir.join(MANIFEST_FILE), &self.manifest)?;
        Ok(self.manifest)
    }
}
