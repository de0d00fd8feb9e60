//! Output directory handling: atomic file writes and the run manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Collects the files a subcommand writes into one directory.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::User(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Writes `name` through a temporary file in the same directory, renamed
    /// into place once `body` succeeds.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let target = self.dir.join(name);
        let io_err = |e: std::io::Error| CliError::User(format!("cannot write {}: {e}", target.display()));
        let tmp = NamedTempFile::new_in(&self.dir).map_err(io_err)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            body(&mut w)?;
            w.flush().map_err(io_err)?;
        }
        tmp.persist(&target).map_err(|e| io_err(e.error))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::User(e.to_string()))
        })
    }

    /// Writes the manifest last; it lists every file written before it.
    pub fn finish<C: Serialize>(mut self, command: &str, config: &C, seed: Option<u64>) -> Result<(), CliError> {
        let manifest = Manifest {
            command,
            version: weakfactor::VERSION,
            seed,
            config,
            outputs: self.written.clone(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        self.write_json(MANIFEST, &manifest)
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    config: &'a C,
    outputs: Vec<String>,
    wall_time_seconds: f64,
}
