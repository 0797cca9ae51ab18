//! Run directories, manifests and the per-run lock file.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;

/// Everything needed to rerun a stage: its configuration, every seed it
/// consumed, the code version and hashes of its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub git_describe: Option<String>,
    pub tool_version: String,
    /// Input path → hex SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(run_id: &str, command: &str, config: serde_json::Value) -> Self {
        Self {
            run_id: run_id.to_string(),
            command: command.to_string(),
            config,
            seeds: BTreeMap::new(),
            git_describe: git_describe(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, label: &str, seed: u64) -> &mut Self {
        self.seeds.insert(label.to_string(), seed);
        self
    }

    /// Records the hash of a file, or of every file under a directory.
    pub fn add_input(&mut self, path: &Path) -> Result<(), DataError> {
        self.inputs.insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self).map_err(DataError::json)
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DataError::parse(path, 0, e))
    }
}

/// `git describe --always --dirty` of the working directory, if available.
pub fn git_describe() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, DataError> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

/// Files are hashed directly; directories hash the sorted list of
/// (relative path, file hash) pairs.
pub fn hash_path(path: &Path) -> Result<String, DataError> {
    if !path.is_dir() {
        return sha256_file(path);
    }
    let mut files = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut hasher = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(path).unwrap_or(&f);
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update(sha256_file(&f)?.as_bytes());
        hasher.update([b'\n']);
    }
    Ok(hex(&hasher.finalize()))
}

/// Exclusive lock on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self, DataError> {
        let path = dir.join("run.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(DataError::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// `runs/<run-id>/{manifest.json, checkpoints/, datasets/, reports/, plots/}`.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    _lock: RunLock,
}

impl RunDir {
    pub fn open(runs_root: &Path, run_id: &str) -> Result<Self, DataError> {
        if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
            return Err(DataError::Spec(format!("invalid run id {run_id:?}")));
        }
        let root = runs_root.join(run_id);
        fs::create_dir_all(&root)?;
        let lock = RunLock::acquire(&root)?;
        for sub in ["checkpoints", "datasets", "reports", "plots"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self { root, _lock: lock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn datasets(&self) -> PathBuf {
        self.root.join("datasets")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }

    /// Manifest for a given stage, e.g. `manifest.train-dsi.json`.
    pub fn manifest_path(&self, command: &str) -> PathBuf {
        self.root.join(format!("manifest.{command}.json"))
    }
}
