//! Content-hash manifest of an output directory.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.sha256";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("cannot list {}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Io(format!("cannot list {}: {e}", dir.display())))?;
        let path = entry.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else if path != root.join(MANIFEST_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Hashes every file under `root` (except the manifest itself) and writes
/// `manifest.sha256` with one `<hash>  <path>` line per file, sorted by path.
pub fn write_manifest(root: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let mut files = Vec::new();
    walk(root, root, &mut files)?;
    let mut entries = files
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(root).expect("walk stays under root");
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            Ok(ManifestEntry {
                path,
                sha256: hash_file(p)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let text: String = entries.iter().map(|e| format!("{}  {}\n", e.sha256, e.path)).collect();
    let target = root.join(MANIFEST_FILE);
    std::fs::write(&target, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", target.display())))?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_sorted_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("b")).unwrap();
        std::fs::write(dir.path().join("b/x.txt"), "x").unwrap();
        std::fs::write(dir.path().join("a.txt"), "").unwrap();
        let entries = write_manifest(dir.path()).unwrap();
        let paths: Vec<&str> = entries.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, ["a.txt", "b/x.txt"]);
        assert_eq!(
            entries[0].sha256,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        // Rewriting does not list the manifest itself.
        assert_eq!(write_manifest(dir.path()).unwrap(), entries);
    }
}
