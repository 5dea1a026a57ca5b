//! Optional TOML configuration file. Every key is a fallback for the flag
//! of the same name; flags and `METABRIDGE_*` variables win.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store: Option<PathBuf>,
    pub serve: ServeConfig,
    pub harvest: HarvestConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub port: Option<u16>,
    pub bind: Option<String>,
    pub name: Option<String>,
    pub base_url: Option<String>,
    pub page_size: Option<usize>,
    pub granularity: Option<String>,
    pub admin_email: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestConfig {
    pub prefix: Option<String>,
    pub retries: Option<u32>,
    pub delay_ms: Option<u64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
