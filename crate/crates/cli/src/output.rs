//! Output files. Every file carries the tool version and the config hash:
//! CSV files in a leading `#` line, JSON files in a `meta` object.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;

pub const TOOL: &str = "nested-karlin";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
}

impl Meta {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            config_hash: cfg.hash(),
        }
    }
}

#[derive(Serialize)]
struct WithMeta<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

/// 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Collects output files under one directory.
pub struct Sink {
    dir: PathBuf,
    meta: Meta,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(cfg: &ExperimentConfig) -> std::io::Result<Self> {
        fs::create_dir_all(&cfg.out)?;
        Ok(Self {
            dir: cfg.out.clone(),
            meta: Meta::new(cfg),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> std::io::Result<()> {
        let doc = WithMeta { meta: &self.meta, body };
        let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// `header` is the column row; `rows` are already formatted lines.
    pub fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> std::io::Result<()> {
        let mut text = String::new();
        writeln!(
            text,
            "# {} {} config_sha256={}",
            self.meta.tool, self.meta.version, self.meta.config_hash
        )
        .unwrap();
        writeln!(text, "{header}").unwrap();
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }
}
