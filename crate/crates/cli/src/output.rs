use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output directory plus the provenance stamped on every file in it.
pub struct Out {
    dir: PathBuf,
    config_hash: String,
    seed: u64,
}

impl Out {
    pub fn create(dir: &Path, config: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Out { dir: dir.to_path_buf(), config_hash: config.hash(), seed: config.seed })
    }

    pub fn header(&self) -> String {
        format!("# agtrade {VERSION} config={} seed={}", self.config_hash, self.seed)
    }

    pub fn meta(&self) -> Value {
        json!({ "tool": "agtrade", "version": VERSION, "config_hash": self.config_hash, "seed": self.seed })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Opens `name` for writing with the comment header already in place.
    pub fn text(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{}", self.header())?;
        Ok(w)
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
        let mut w = csv::Writer::from_writer(self.text(name)?);
        w.write_record(header)?;
        Ok(w)
    }

    /// Writes `{"meta": …, <body fields>}`; `body` must serialize to an object.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<()> {
        let mut doc = serde_json::Map::new();
        doc.insert("meta".into(), self.meta());
        match serde_json::to_value(body)? {
            Value::Object(fields) => doc.extend(fields),
            other => {
                doc.insert("data".into(), other);
            }
        }
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Warning and error counts for one run; errors make the exit code nonzero.
#[derive(Debug, Default)]
pub struct Status {
    pub warnings: usize,
    pub errors: usize,
}

impl Status {
    pub fn warn(&mut self, message: impl AsRef<str>) {
        log::warn!("{}", message.as_ref());
        self.warnings += 1;
    }

    pub fn error(&mut self, message: impl AsRef<str>) {
        log::error!("{}", message.as_ref());
        self.errors += 1;
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}
