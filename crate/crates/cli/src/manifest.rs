use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::jobs::Job;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to repeat a command: the resolved job, the inputs it
/// read and the outputs it wrote.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    /// Effective configuration after flags, config file and defaults.
    pub job: Job,
    pub inputs: Vec<FileDigest>,
    /// SHA-256 over the sorted `path\0sha256\n` lines of `inputs`.
    pub inputs_digest: String,
    /// Paths relative to the run directory.
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digest_inputs(paths: &[PathBuf]) -> Result<(Vec<FileDigest>, String)> {
    let mut digests = paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    digests.sort_by(|a, b| a.path.cmp(&b.path));
    let mut h = Sha256::new();
    for d in &digests {
        h.update(d.path.as_bytes());
        h.update([0]);
        h.update(d.sha256.as_bytes());
        h.update(b"\n");
    }
    Ok((digests, hex::encode(h.finalize())))
}

fn walk(dir: &Path, base: &Path, out: &mut Vec<FileDigest>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, base, out)?;
        } else {
            let rel = p.strip_prefix(base).expect("walk stays under base");
            if rel == Path::new(MANIFEST_FILE) {
                continue;
            }
            out.push(FileDigest {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(&p)?,
            });
        }
    }
    Ok(())
}

/// Digests of every file under `dir` except the manifest itself.
pub fn digest_outputs(dir: &Path) -> Result<Vec<FileDigest>> {
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join(MANIFEST_FILE);
        fs::write(&p, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(p)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| crate::UsageError(format!("{}: {e}", path.display())).into())
    }
}
