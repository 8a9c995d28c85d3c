//! Artifact writing: CSV tables with a fixed column order and full-precision
//! floats, plus a tracked output directory that can be rolled back when a
//! run fails partway.

use std::fs;
use std::path::{Path, PathBuf};

use airnoma_core::{Error, Result};

/// Formats a float with 17 significant digits so parsing the text recovers
/// the exact bit pattern.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// An in-memory CSV with a fixed header. Rows must match the header width.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width {} does not match header width {}",
            row.len(),
            self.header.len()
        );
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// The files one run produces. Children are written through this handle so
/// a failed run can remove everything it managed to produce.
pub struct ArtifactSet {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactSet {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactSet {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, content)?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::config(format!("serializing {name}: {e}")))?;
        self.write_text(name, &format!("{text}\n"))
    }

    /// Removes every file this run wrote, leaving the directory itself (it
    /// may be shared or pre-existing). Used on failure so partial outputs
    /// never look like results.
    pub fn discard_all(&mut self) {
        for path in self.written.drain(..) {
            let _ = fs::remove_file(&path);
        }
        let _ = fs::remove_dir(&self.dir);
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.written
    }
}
