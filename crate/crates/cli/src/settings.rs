//! Optional TOML configuration file.
//!
//! Every setting resolves as: command-line flag, then environment variable,
//! then this file, then the built-in default.
//!
//! ```toml
//! port = 8080
//! host = "127.0.0.1"
//! ckpt_dir = "checkpoints"
//! checkpoints = ["models/gnn.ckpt"]
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_HOST: &str = "127.0.0.1";
pub const DEFAULT_CKPT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSettings {
    pub port: Option<u16>,
    pub host: Option<String>,
    pub ckpt_dir: Option<PathBuf>,
    #[serde(default)]
    pub checkpoints: Vec<PathBuf>,
}

impl FileSettings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// `flag_or_env` already folds the flag over the environment (clap does that).
    pub fn port(&self, flag_or_env: Option<u16>) -> u16 {
        flag_or_env.or(self.port).unwrap_or(DEFAULT_PORT)
    }

    pub fn host(&self, flag: Option<String>) -> String {
        flag.or_else(|| self.host.clone()).unwrap_or_else(|| DEFAULT_HOST.to_string())
    }

    pub fn ckpt_dir(&self, flag_or_env: Option<PathBuf>) -> PathBuf {
        flag_or_env.or_else(|| self.ckpt_dir.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_CKPT_DIR))
    }
}
