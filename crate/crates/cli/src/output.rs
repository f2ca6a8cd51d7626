//! All-or-nothing output: files are staged in memory and only written once
//! the command has succeeded, each through a temporary file and a rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: impl Into<PathBuf>, contents: impl Into<Vec<u8>>) {
        self.files.push((path.into(), contents.into()));
    }

    pub fn paths(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }

    /// Writes every staged file. Temporary files are created first; if any of
    /// them fails, all are removed and no destination is touched.
    pub fn commit(self) -> Result<()> {
        let mut staged: Vec<(PathBuf, &Path)> = Vec::new();
        let result = (|| {
            for (path, data) in &self.files {
                let tmp = temp_path(path);
                let mut f = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
                staged.push((tmp.clone(), path));
                f.write_all(data).and_then(|_| f.sync_all()).with_context(|| format!("writing {}", tmp.display()))?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &staged {
                let _ = std::fs::remove_file(tmp);
            }
            return Err(e);
        }
        for (tmp, path) in &staged {
            std::fs::rename(tmp, path).with_context(|| format!("moving output into {}", path.display()))?;
        }
        Ok(())
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_written_when_a_destination_is_unwritable() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::default();
        out.add(dir.path().join("a.txt"), "a");
        out.add(dir.path().join("missing/b.txt"), "b");
        assert!(out.commit().is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn writes_all() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::default();
        out.add(dir.path().join("a.txt"), "a");
        out.add(dir.path().join("b.txt"), "bb");
        out.commit().unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("b.txt")).unwrap(), "bb");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
