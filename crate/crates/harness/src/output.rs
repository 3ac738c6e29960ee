//! CSV files with `#` comment headers.
//!
//! Each file starts with zero or more `# ...` lines carrying notes about the
//! instance (modeling choices, surrogate labels), followed by a header row
//! and the body. Floats are written in Rust's shortest round-trip form, so
//! equal values always produce equal bytes.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::HarnessError;

pub struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvFile {
    pub fn create(path: &Path, notes: &[String], header: &[&str]) -> Result<Self, HarnessError> {
        let io = |source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = File::create(path).map_err(io)?;
        for note in notes {
            writeln!(file, "# {note}").map_err(io)?;
        }
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), HarnessError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, HarnessError> {
        self.writer.flush().map_err(|source| HarnessError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(self.path)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf, HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, text).map_err(io)?;
    Ok(path.to_path_buf())
}

/// Blank for `None`.
pub fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// File-name-safe form of a procedure name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}
