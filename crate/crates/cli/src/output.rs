//! Output directory handling. Every CSV starts with a provenance comment:
//! `# labelbias <version> seed=<seed> config_sha256=<hash>`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::canonical;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct OutputDir {
    dir: PathBuf,
    header: String,
}

impl OutputDir {
    /// Creates `dir` and writes the resolved config to `config.json`.
    pub fn create<T: Serialize>(dir: &Path, config: &T, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let (json, hash) = canonical(config)?;
        std::fs::write(dir.join("config.json"), format!("{json}\n"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header: format!("# labelbias {VERSION} seed={seed} config_sha256={hash}"),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    /// Opens `name` for writing with the provenance line already emitted.
    pub fn csv(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let mut w = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(w, "{}", self.header)?;
        Ok(w)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(self.path(name), format!("{text}\n"))?;
        Ok(())
    }
}

/// Formats a float for CSV: shortest round-trip form, scientific notation for
/// very small or large magnitudes, empty for non-finite values.
pub fn cell(v: f64) -> String {
    if !v.is_finite() {
        String::new()
    } else if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-4 || v.abs() >= 1e15 {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}
