//! CSV and JSON emitters. Formats carry `format_version` in every JSON
//! summary; monetary values print in bp with two decimals, probabilities in
//! scientific notation with twelve significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

pub const FORMAT_VERSION: u32 = 1;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path)
            .with_context(|| format!("cannot create output directory {}", path.display()))?;
        Ok(OutDir {
            root: path.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&self, name: &str, content: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, content).with_context(|| format!("cannot write {}", p.display()))?;
        Ok(p)
    }

    pub fn write_json(&self, name: &str, mut value: Value) -> Result<PathBuf> {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("format_version".into(), json!(FORMAT_VERSION));
        }
        self.write_text(name, &format!("{:#}\n", value))
    }
}

/// Monetary amount in bp, two decimals.
pub fn bp(v: f64) -> String {
    format!("{v:.2}")
}

/// Probability-like value, scientific with 12 significant digits.
pub fn prob(v: f64) -> String {
    format!("{v:.11e}")
}
