use std::path::{Path, PathBuf};

use idstack_core::clock::{Clock, FixedClock, SystemClock, Timestamp};
use serde::Deserialize;

use crate::error::CliError;

pub const HOME_ENV: &str = "IDSTACK_HOME";
pub const CLOCK_ENV: &str = "IDSTACK_CLOCK";

/// `$IDSTACK_HOME/config.json`. Every field is optional; relative paths
/// resolve against the home directory.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ConfigFile {
    store_root: Option<PathBuf>,
    template_dir: Option<PathBuf>,
    trust_anchor_file: Option<PathBuf>,
    weights_file: Option<PathBuf>,
    remote: Option<String>,
}

/// Effective settings after merging flags, config file and defaults.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub store_root: Option<PathBuf>,
    pub template_dir: PathBuf,
    pub trust_anchor_file: Option<PathBuf>,
    pub weights_file: Option<PathBuf>,
    pub remote: Option<String>,
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub home: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub trust: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub remote: Option<String>,
}

impl CliConfig {
    pub fn resolve(overrides: Overrides) -> Result<Self, CliError> {
        let home = overrides.home.clone().unwrap_or_else(|| PathBuf::from("."));
        let file_path = home.join("config.json");
        let file: ConfigFile = match std::fs::read(&file_path) {
            Ok(bytes) => {
                serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", file_path.display())))?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => ConfigFile::default(),
            Err(e) => return Err(CliError::Io(format!("{}: {e}", file_path.display()))),
        };
        let rel = |p: PathBuf| if p.is_relative() { home.join(p) } else { p };
        let default_if_exists = |name: &str| {
            let p = home.join(name);
            p.exists().then_some(p)
        };
        Ok(CliConfig {
            store_root: overrides.store.or(file.store_root.map(rel)),
            template_dir: overrides
                .templates
                .or(file.template_dir.map(rel))
                .unwrap_or_else(|| home.join("templates")),
            trust_anchor_file: overrides
                .trust
                .or(file.trust_anchor_file.map(rel))
                .or_else(|| default_if_exists("trust.json")),
            weights_file: overrides
                .weights
                .or(file.weights_file.map(rel))
                .or_else(|| default_if_exists("weights.json")),
            remote: overrides.remote.or(file.remote),
        })
    }
}

/// `IDSTACK_CLOCK` pins "now" for reproducible output.
pub fn clock() -> Result<Box<dyn Clock>, CliError> {
    match std::env::var(CLOCK_ENV) {
        Ok(text) => Timestamp::parse(&text)
            .map(|ts| Box::new(FixedClock(ts)) as Box<dyn Clock>)
            .map_err(|e| CliError::Usage(format!("{CLOCK_ENV}: {e}"))),
        Err(_) => Ok(Box::new(SystemClock)),
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Replaces `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    use std::io::Write as _;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
