use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output directory; every file is written to a temp file and renamed into place.
pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_with<F>(&self, name: &str, fill: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.path(name);
        let mut tmp = NamedTempFile::new_in(&self.dir)?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut w)?;
            w.flush()?;
        }
        tmp.persist(&path)
            .map_err(|e| CliError::Io(format!("{}: {}", path.display(), e.error)))?;
        Ok(path)
    }

    /// Writes `payload` wrapped with the command name, toolkit version and resolved config.
    pub fn write_json<P: Serialize>(
        &self,
        name: &str,
        command: &str,
        cfg: &RunConfig,
        payload: &P,
    ) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Doc<'a, P> {
            command: &'a str,
            version: &'a str,
            config: &'a RunConfig,
            result: &'a P,
        }
        let doc = Doc {
            command,
            version: VERSION,
            config: cfg,
            result: payload,
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        self.write_with(name, |w| writeln!(w, "{text}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_file() {
        let tmp = tempfile::tempdir().unwrap();
        let out = OutDir::create(&tmp.path().join("nested")).unwrap();
        out.write_with("a.txt", |w| write!(w, "one")).unwrap();
        out.write_with("a.txt", |w| write!(w, "two")).unwrap();
        assert_eq!(std::fs::read_to_string(out.path("a.txt")).unwrap(), "two");
        assert_eq!(std::fs::read_dir(tmp.path().join("nested")).unwrap().count(), 1);
    }
}
