use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Destination directory for one run. Existing files are only replaced when
/// `overwrite` is set.
pub struct OutputDir {
    dir: PathBuf,
    overwrite: bool,
}

impl OutputDir {
    /// Creates `dir` and refuses up front if any of `files` already exists.
    pub fn prepare(dir: &Path, overwrite: bool, files: &[&str]) -> Result<Self, CliError> {
        if !overwrite {
            if let Some(f) = files.iter().find(|f| dir.join(f).exists()) {
                return Err(CliError::Runtime(format!(
                    "{} already exists; pass --overwrite to replace it",
                    dir.join(f).display()
                )));
            }
        }
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            overwrite,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let mut opts = OpenOptions::new();
        opts.write(true);
        if self.overwrite {
            opts.create(true).truncate(true);
        } else {
            opts.create_new(true);
        }
        let file = opts
            .open(&path)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(BufWriter::new(file))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes one CSV row per item, with a header taken from the field names.
    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_with<F>(&self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_existing_file_without_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), "{}").unwrap();
        let err = OutputDir::prepare(dir.path(), false, &["a.json"]).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        let out = OutputDir::prepare(dir.path(), true, &["a.json"]).unwrap();
        out.write_json("a.json", &[1, 2]).unwrap();
        assert!(fs::read_to_string(dir.path().join("a.json")).unwrap().contains('2'));
    }

    #[test]
    fn creates_missing_directory() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("x/y");
        let out = OutputDir::prepare(&nested, false, &["r.csv"]).unwrap();
        out.write_csv("r.csv", &[(1, 2.5)]).unwrap();
        assert!(nested.join("r.csv").exists());
    }
}
