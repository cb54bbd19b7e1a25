//! Per-invocation output directory guarded by a lock file.

use std::fs::{self, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const LOCK_FILE: &str = ".lock";

#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Opens `out` if given, otherwise the first unused
    /// `$TOONFACE_RUN_ROOT/<command>-NNN` (root defaults to `runs`).
    pub fn open(out: Option<&Path>, command: &str) -> CliResult<Self> {
        let path = match out {
            Some(p) => p.to_path_buf(),
            None => {
                let root = std::env::var_os("TOONFACE_RUN_ROOT").map(PathBuf::from).unwrap_or_else(|| "runs".into());
                (1..).map(|n| root.join(format!("{command}-{n:03}"))).find(|p| !p.exists()).expect("unbounded range")
            }
        };
        fs::create_dir_all(&path)?;
        match OpenOptions::new().write(true).create_new(true).open(path.join(LOCK_FILE)) {
            Ok(_) => Ok(RunDir { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Validation(format!(
                "run directory `{}` is locked by another run (remove {LOCK_FILE} if stale)",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.file(name);
        fs::write(&p, contents)?;
        Ok(p)
    }

    pub fn write_config(&self, command: &str, config: &RunConfig) -> CliResult<()> {
        self.write("config.txt", format!("# toonface {command}\n{}", config.to_text()))?;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.path.join(LOCK_FILE));
    }
}
