//! File-backed run store.
//!
//! Layout under the root:
//!   runs/<run_id>/meta              status and params, one `key=value` per line
//!   runs/<run_id>/metrics/<name>    one numeric value per line, last line wins
//!   runs/<run_id>/artifacts/<path>  artifact bytes
//!
//! The layout keeps every gate check a plain filesystem read, so audits stay
//! inspectable by hand.

use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use indexmap::IndexMap;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{
    validate_artifact_path, ArtifactEntry, RunRecord, RunStatus, RunStore, StoreError, WriteError,
};

pub struct FsStore {
    root: PathBuf,
    ids: Mutex<ChaCha20Rng>,
    display_base: Option<String>,
    // Serializes same-run writers; distinct runs only contend on the map briefly.
    write_lock: Mutex<()>,
}

impl FsStore {
    /// Open a store at `root`, creating the directory tree if absent.
    pub fn open(root: impl AsRef<Path>) -> FsStore {
        let root = root.as_ref().to_path_buf();
        let _ = fs::create_dir_all(root.join("runs"));
        FsStore {
            root,
            ids: Mutex::new(ChaCha20Rng::from_entropy()),
            display_base: None,
            write_lock: Mutex::new(()),
        }
    }

    /// Open with a deterministic run-id sequence (for reproducible harnesses).
    pub fn open_seeded(root: impl AsRef<Path>, seed: u64) -> FsStore {
        let mut s = FsStore::open(root);
        s.ids = Mutex::new(ChaCha20Rng::seed_from_u64(seed));
        s
    }

    /// Override the locator base used in `run_uri`, detaching evidence
    /// locators from the physical root path.
    pub fn with_display_base(mut self, base: impl Into<String>) -> FsStore {
        self.display_base = Some(base.into());
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Every run id in the store, sorted.
    pub fn list_run_ids(&self) -> Result<Vec<String>, StoreError> {
        self.check_reachable()?;
        let mut ids = Vec::new();
        for entry in fs::read_dir(self.runs_dir()).map_err(|e| StoreError::unreachable(e.to_string()))? {
            let entry = entry.map_err(|e| StoreError::unreachable(e.to_string()))?;
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
        ids.sort();
        Ok(ids)
    }

    fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    fn check_reachable(&self) -> Result<(), StoreError> {
        if self.runs_dir().is_dir() {
            Ok(())
        } else {
            Err(StoreError::unreachable(format!(
                "store root {} is not available",
                self.root.display()
            )))
        }
    }

    fn require_run(&self, run_id: &str) -> Result<PathBuf, StoreError> {
        self.check_reachable()?;
        let dir = self.run_dir(run_id);
        if dir.is_dir() {
            Ok(dir)
        } else {
            Err(StoreError::not_found(format!("no run {run_id}")))
        }
    }

    fn read_status(&self, run_id: &str) -> Result<RunStatus, StoreError> {
        let dir = self.require_run(run_id)?;
        let meta = fs::read_to_string(dir.join("meta"))
            .map_err(|e| StoreError::corrupt(format!("run {run_id} meta unreadable: {e}")))?;
        let mut status = None;
        for line in meta.lines() {
            if let Some(v) = line.strip_prefix("status=") {
                status = RunStatus::from_str(v);
            }
        }
        status.ok_or_else(|| StoreError::corrupt(format!("run {run_id} has no valid status")))
    }

    fn fresh_id(&self) -> String {
        let mut bytes = [0u8; 16];
        self.ids.lock().unwrap().fill_bytes(&mut bytes);
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn walk_files(
    base: &Path,
    dir: &Path,
    out: &mut Vec<ArtifactEntry>,
) -> io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            walk_files(base, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(base)
                .expect("walked path is under base")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.push(ArtifactEntry {
                path: rel,
                is_directory: false,
                size_bytes: entry.metadata()?.len(),
            });
        }
    }
    Ok(())
}

impl RunStore for FsStore {
    fn get_run(&self, run_id: &str) -> Result<RunRecord, StoreError> {
        let dir = self.require_run(run_id)?;
        let meta = fs::read_to_string(dir.join("meta"))
            .map_err(|e| StoreError::corrupt(format!("run {run_id} meta unreadable: {e}")))?;
        let mut status = None;
        let mut params = IndexMap::new();
        for line in meta.lines() {
            if let Some(v) = line.strip_prefix("status=") {
                status = RunStatus::from_str(v);
            } else if let Some(rest) = line.strip_prefix("param.") {
                if let Some((k, v)) = rest.split_once('=') {
                    params.insert(k.to_owned(), v.to_owned());
                }
            }
        }
        let status = status
            .ok_or_else(|| StoreError::corrupt(format!("run {run_id} has no valid status")))?;

        let mut metrics = IndexMap::new();
        let metrics_dir = dir.join("metrics");
        if metrics_dir.is_dir() {
            let mut files: Vec<_> = fs::read_dir(&metrics_dir)
                .map_err(|e| StoreError::corrupt(e.to_string()))?
                .collect::<io::Result<_>>()
                .map_err(|e| StoreError::corrupt(e.to_string()))?;
            files.sort_by_key(|e| e.file_name());
            for f in files {
                let name = f.file_name().to_string_lossy().into_owned();
                let text = fs::read_to_string(f.path())
                    .map_err(|e| StoreError::corrupt(format!("metric {name}: {e}")))?;
                // Append-style logging: last recorded value wins.
                if let Some(last) = text.lines().filter(|l| !l.trim().is_empty()).last() {
                    let value: f64 = last.trim().parse().map_err(|_| {
                        StoreError::corrupt(format!("metric {name} has non-numeric value {last:?}"))
                    })?;
                    metrics.insert(name, value);
                }
            }
        }

        Ok(RunRecord {
            run_id: run_id.to_owned(),
            status,
            metrics,
            params,
            artifact_root: dir.join("artifacts").to_string_lossy().into_owned(),
        })
    }

    fn list_artifacts(&self, run_id: &str, recursive: bool) -> Result<Vec<ArtifactEntry>, StoreError> {
        let dir = self.require_run(run_id)?;
        let base = dir.join("artifacts");
        if !base.is_dir() {
            return Ok(Vec::new());
        }
        if recursive {
            let mut out = Vec::new();
            walk_files(&base, &base, &mut out)
                .map_err(|e| StoreError::unreachable(format!("artifact listing failed: {e}")))?;
            out.sort_by(|a, b| a.path.cmp(&b.path));
            Ok(out)
        } else {
            let mut entries: Vec<_> = fs::read_dir(&base)
                .map_err(|e| StoreError::unreachable(format!("artifact listing failed: {e}")))?
                .collect::<io::Result<_>>()
                .map_err(|e| StoreError::unreachable(format!("artifact listing failed: {e}")))?;
            entries.sort_by_key(|e| e.file_name());
            let mut out = Vec::new();
            for entry in entries {
                let is_dir = entry.path().is_dir();
                out.push(ArtifactEntry {
                    path: entry.file_name().to_string_lossy().into_owned(),
                    is_directory: is_dir,
                    size_bytes: if is_dir {
                        0
                    } else {
                        entry
                            .metadata()
                            .map_err(|e| StoreError::unreachable(e.to_string()))?
                            .len()
                    },
                });
            }
            Ok(out)
        }
    }

    fn create_run(&self) -> Result<String, WriteError> {
        self.check_reachable()?;
        let run_id = self.fresh_id();
        let dir = self.run_dir(&run_id);
        fs::create_dir_all(dir.join("metrics"))
            .map_err(|e| StoreError::unreachable(e.to_string()))?;
        fs::create_dir_all(dir.join("artifacts"))
            .map_err(|e| StoreError::unreachable(e.to_string()))?;
        fs::write(dir.join("meta"), "status=RUNNING\n")
            .map_err(|e| StoreError::unreachable(e.to_string()))?;
        Ok(run_id)
    }

    fn set_status(&self, run_id: &str, status: RunStatus) -> Result<(), WriteError> {
        let _guard = self.write_lock.lock().unwrap();
        let current = self.read_status(run_id)?;
        if current.is_terminal() {
            return Err(WriteError::IllegalTransition {
                from: current,
                to: status,
            });
        }
        let dir = self.run_dir(run_id);
        let meta = fs::read_to_string(dir.join("meta"))
            .map_err(|e| StoreError::corrupt(e.to_string()))?;
        let mut lines: Vec<String> = meta
            .lines()
            .filter(|l| !l.starts_with("status="))
            .map(str::to_owned)
            .collect();
        lines.insert(0, format!("status={}", status.as_str()));
        fs::write(dir.join("meta"), lines.join("\n") + "\n")
            .map_err(|e| StoreError::unreachable(e.to_string()))?;
        Ok(())
    }

    fn log_metric(&self, run_id: &str, name: &str, value: f64) -> Result<(), WriteError> {
        if !value.is_finite() {
            return Err(WriteError::NonFiniteMetric(value));
        }
        if name.is_empty() || name.contains('/') || name.contains("..") {
            return Err(WriteError::InvalidPath(name.to_owned()));
        }
        let _guard = self.write_lock.lock().unwrap();
        let current = self.read_status(run_id)?;
        if current != RunStatus::Running {
            return Err(WriteError::NotRunning(current));
        }
        let path = self.run_dir(run_id).join("metrics").join(name);
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StoreError::unreachable(e.to_string()))?;
        writeln!(f, "{value}").map_err(|e| StoreError::unreachable(e.to_string()))?;
        Ok(())
    }

    fn log_param(&self, run_id: &str, name: &str, value: &str) -> Result<(), WriteError> {
        let _guard = self.write_lock.lock().unwrap();
        let current = self.read_status(run_id)?;
        if current != RunStatus::Running {
            return Err(WriteError::NotRunning(current));
        }
        let dir = self.run_dir(run_id);
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(dir.join("meta"))
            .map_err(|e| StoreError::unreachable(e.to_string()))?;
        writeln!(f, "param.{name}={value}").map_err(|e| StoreError::unreachable(e.to_string()))?;
        Ok(())
    }

    fn log_artifact(&self, run_id: &str, path: &str, bytes: &[u8]) -> Result<(), WriteError> {
        validate_artifact_path(path)?;
        let _guard = self.write_lock.lock().unwrap();
        let current = self.read_status(run_id)?;
        if current != RunStatus::Running {
            return Err(WriteError::NotRunning(current));
        }
        let target = self.run_dir(run_id).join("artifacts").join(path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| StoreError::unreachable(e.to_string()))?;
        }
        fs::write(target, bytes).map_err(|e| StoreError::unreachable(e.to_string()))?;
        Ok(())
    }

    fn healthcheck(&self) -> Result<(), StoreError> {
        self.check_reachable()
    }

    fn run_uri(&self, run_id: &str) -> String {
        match &self.display_base {
            Some(base) => format!("{base}/runs/{run_id}"),
            None => format!("file://{}/runs/{run_id}", self.root.display()),
        }
    }
}
