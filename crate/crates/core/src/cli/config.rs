use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;

/// Lowest-precedence settings layer, e.g.
///
/// ```toml
/// broker = "127.0.0.1:4222"
/// store = "/var/lib/paveflow"
/// subject = "site.>"
/// metrics_listen = "127.0.0.1:9102"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Address clients connect to.
    pub broker: Option<String>,
    /// Address the broker binds.
    pub listen: Option<String>,
    pub store: Option<PathBuf>,
    pub subject: Option<String>,
    pub scenario: Option<PathBuf>,
    pub speedup: Option<f64>,
    pub metrics_listen: Option<String>,
    pub max_payload: Option<usize>,
    pub queue: Option<usize>,
}

pub const DEFAULT_BROKER: &str = "127.0.0.1:4222";
pub const DEFAULT_METRICS: &str = "127.0.0.1:9102";
pub const DEFAULT_SUBJECT: &str = "site.>";

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<ConfigFile, CliError> {
        let Some(path) = path else { return Ok(ConfigFile::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

/// Flag/env value, else file value, else nothing.
pub fn layer<T>(arg: Option<T>, file: &Option<T>) -> Option<T>
where
    T: Clone,
{
    arg.or_else(|| file.clone())
}
