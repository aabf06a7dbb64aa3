//! Result files. Every CSV starts with a `#` metadata comment line and every
//! JSON document has a top-level `meta` object.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hjb_core::fbsde::ValueEstimate;

use crate::config::RunConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Meta {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.mc.seed,
            version: VERSION.to_string(),
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# config_hash={},seed={},version={}\n",
            self.config_hash, self.seed, self.version
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateFile {
    pub meta: Meta,
    pub estimate: ValueEstimate,
}

#[derive(Serialize)]
struct Document<'a, T> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

pub struct OutputDir {
    dir: PathBuf,
    pub meta: Meta,
}

fn io(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl OutputDir {
    /// Creates the directory and writes the resolved configuration into it.
    pub fn create(dir: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let out = Self {
            dir: dir.to_path_buf(),
            meta: Meta::of(cfg),
        };
        let header = format!("# resolved configuration\n{}", out.meta.comment_line());
        out.write_text("config.resolved.toml", &(header + &cfg.to_toml()))?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| io(&p, e))?;
        Ok(p)
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Output(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        let mut text = self.meta.comment_line();
        text.push_str(std::str::from_utf8(&body).map_err(|e| CliError::Output(e.to_string()))?);
        self.write_text(name, &text)
    }

    /// `body` must serialize to a JSON object; its fields sit next to `meta`.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let doc = Document { meta: &self.meta, body };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Output(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

pub fn read_estimate(path: &Path) -> Result<EstimateFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let file: EstimateFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not an estimate file: {e}", path.display())))?;
    file.estimate
        .validate()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(file)
}

/// Parses the metadata line of a CSV written by [`OutputDir::write_csv`].
pub fn parse_comment_line(line: &str) -> Option<Meta> {
    let rest = line.strip_prefix("# ")?.trim_end();
    let mut hash = None;
    let mut seed = None;
    let mut version = None;
    for kv in rest.split(',') {
        let (k, v) = kv.split_once('=')?;
        match k {
            "config_hash" => hash = Some(v.to_string()),
            "seed" => seed = v.parse().ok(),
            "version" => version = Some(v.to_string()),
            _ => return None,
        }
    }
    Some(Meta {
        config_hash: hash?,
        seed: seed?,
        version: version?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comment_line_round_trips() {
        let m = Meta::of(&RunConfig::default());
        assert_eq!(parse_comment_line(&m.comment_line()), Some(m));
    }
}
