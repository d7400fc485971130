//! Workspace directory layout and atomic file publication.
//!
//! Everything a run produces lives under one root:
//!
//! ```text
//! <root>/workspace.json        provenance: corpus root, toolchain identity
//! <root>/corpus-index.tsv      serialized corpus (records + split)
//! <root>/flag-catalog.txt      pinned flag catalog
//! <root>/vocab.tsv             baseline statement vocabulary
//! <root>/cache/                content-addressed compile cache
//! <root>/checkpoints/          GA checkpoints, trace, archive
//! <root>/reports/              fitness / eval / ablation reports
//! <root>/quarantined.txt       programs whose baseline failed, one id/line
//! <root>/apply-manifest.tsv    optimized-IR manifest written by `apply`
//! ```

use serde::{Deserialize, Serialize};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkspaceMeta {
    pub corpus_root: PathBuf,
    pub cc: PathBuf,
    pub opt: PathBuf,
    pub toolchain_version: String,
}

#[derive(Clone, Debug)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Create the layout (idempotent) and return a handle.
    pub fn create(root: &Path) -> io::Result<Workspace> {
        for sub in ["", "cache", "checkpoints", "reports"] {
            std::fs::create_dir_all(root.join(sub))?;
        }
        Ok(Workspace { root: root.to_path_buf() })
    }

    /// Open an existing workspace; errors if it was never built.
    pub fn open(root: &Path) -> io::Result<Workspace> {
        if !root.join("workspace.json").is_file() {
            return Err(io::Error::new(
                io::ErrorKind::NotFound,
                format!("{} is not an irforge workspace (run `irforge build` first)", root.display()),
            ));
        }
        Ok(Workspace { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta_file(&self) -> PathBuf {
        self.root.join("workspace.json")
    }

    pub fn corpus_index(&self) -> PathBuf {
        self.root.join("corpus-index.tsv")
    }

    pub fn flag_catalog(&self) -> PathBuf {
        self.root.join("flag-catalog.txt")
    }

    pub fn vocab_file(&self) -> PathBuf {
        self.root.join("vocab.tsv")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn quarantine_file(&self) -> PathBuf {
        self.root.join("quarantined.txt")
    }

    pub fn apply_manifest(&self) -> PathBuf {
        self.root.join("apply-manifest.tsv")
    }

    pub fn write_meta(&self, meta: &WorkspaceMeta) -> io::Result<()> {
        let json = serde_json::to_string_pretty(meta).expect("meta serializes");
        atomic_write(&self.meta_file(), json.as_bytes())
    }

    pub fn read_meta(&self) -> io::Result<WorkspaceMeta> {
        let text = std::fs::read_to_string(self.meta_file())?;
        serde_json::from_str(&text)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write-to-temp-then-rename so readers never observe partial files and
/// concurrent writers of the same key settle on one winner.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp.{}.{}",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default(),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed),
    ));
    std::fs::write(&tmp, bytes)?;
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_then_open() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::create(dir.path()).unwrap();
        assert!(ws.cache_dir().is_dir());
        assert!(Workspace::open(dir.path()).is_err(), "no meta yet");
        ws.write_meta(&WorkspaceMeta {
            corpus_root: "/tmp/poj".into(),
            cc: "/usr/bin/cc".into(),
            opt: "/usr/bin/opt".into(),
            toolchain_version: "test".into(),
        })
        .unwrap();
        let ws2 = Workspace::open(dir.path()).unwrap();
        assert_eq!(ws2.read_meta().unwrap().toolchain_version, "test");
    }

    #[test]
    fn atomic_write_replaces_whole_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested/out.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        let leftovers: Vec<_> = std::fs::read_dir(p.parent().unwrap())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name() != "out.txt")
            .collect();
        assert!(leftovers.is_empty(), "no temp droppings");
    }
}
