//! Artifact writing: CSV files, text reports and the SHA-256 manifest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Output directory that remembers every file written through it.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create output dir {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        fs::write(self.dir.join(name), body)?;
        self.record(name);
        Ok(())
    }

    /// Writes a CSV file; `None` cells stay empty.
    pub fn csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> Result<(), CliError>
    where
        R: IntoIterator<Item = Vec<Option<f64>>>,
    {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()))?;
        }
        w.flush()?;
        self.record(name);
        Ok(())
    }

    /// `MANIFEST` with one `sha256  name` line per artifact, sorted by name.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.files.sort();
        let mut body = String::new();
        for name in &self.files {
            let bytes = fs::read(self.dir.join(name))?;
            let digest = Sha256::digest(&bytes);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            body.push_str(&format!("{hex}  {name}\n"));
        }
        let path = self.dir.join("MANIFEST");
        fs::write(&path, body)?;
        Ok(path)
    }
}

/// Every value present, as a CSV row.
pub fn row(values: &[f64]) -> Vec<Option<f64>> {
    values.iter().copied().map(Some).collect()
}
