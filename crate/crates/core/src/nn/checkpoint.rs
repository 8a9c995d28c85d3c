//! Weight checkpoints: named parameter blocks with explicit shapes,
//! serialized as JSON. serde_json prints f64 values with shortest
//! round-trip precision, so a save/load cycle reproduces weights exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub format: String,
    pub entries: Vec<CheckpointEntry>,
}

pub const CHECKPOINT_FORMAT: &str = "airnoma-weights-v1";

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        let expect: usize = shape.iter().product();
        assert_eq!(
            expect,
            data.len(),
            "checkpoint entry {name}: shape/data mismatch"
        );
        self.entries.push(CheckpointEntry {
            name: name.to_string(),
            shape,
            data,
        });
    }

    pub fn entry(&self, name: &str) -> Result<&CheckpointEntry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::config(format!("checkpoint missing entry {name}")))
    }

    /// Returns the data of `name` after confirming its recorded shape.
    pub fn take(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let entry = self.entry(name)?;
        if entry.shape != shape {
            return Err(Error::dimension(format!(
                "checkpoint entry {name}: stored shape {:?}, expected {:?}",
                entry.shape, shape
            )));
        }
        Ok(&entry.data)
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string(ckpt)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::config(format!(
            "unsupported checkpoint format {}",
            ckpt.format
        )));
    }
    Ok(ckpt)
}
