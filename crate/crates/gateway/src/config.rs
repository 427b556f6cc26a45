//! TOML configuration for the gateway binary.

use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ehrguard::clock::{Clock, ManualClock, SystemClock};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("master key file {path}: {source}")]
    KeyFile { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    #[default]
    System,
    /// Starts at `start_ms` and advances `step_ms` per reading, so runs
    /// repeat exactly.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockConfig {
    pub mode: ClockMode,
    pub start_ms: u64,
    pub step_ms: u64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig {
            mode: ClockMode::System,
            start_ms: 0,
            step_ms: 1,
        }
    }
}

impl ClockConfig {
    pub fn build(&self) -> Arc<dyn Clock> {
        match self.mode {
            ClockMode::System => Arc::new(SystemClock),
            ClockMode::Manual => Arc::new(ManualClock::stepping(self.start_ms, self.step_ms)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub listen: SocketAddr,
    /// Block log; in memory when absent.
    pub ledger_path: Option<PathBuf>,
    /// Payload files and journal; in memory when absent.
    pub edge_dir: Option<PathBuf>,
    /// Hex master key for `edge_dir`, created on first start.
    pub edge_master_key_file: Option<PathBuf>,
    pub node_id: String,
    /// 0 disables expiry.
    pub token_ttl_secs: u64,
    /// Seeds session and token generation. Leave unset outside tests.
    pub seed: Option<u64>,
    /// Credential accepted for administrative calls such as blacklisting.
    pub admin_credential: Option<String>,
    pub clock: ClockConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            listen: ([127, 0, 0, 1], 8080).into(),
            ledger_path: None,
            edge_dir: None,
            edge_master_key_file: None,
            node_id: "edge-1".into(),
            token_ttl_secs: 24 * 60 * 60,
            seed: None,
            admin_credential: None,
            clock: ClockConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.edge_dir.is_some() && self.edge_master_key_file.is_none() {
            return Err(ConfigError::Invalid(
                "edge_dir needs edge_master_key_file so the store can be reopened".into(),
            ));
        }
        if self.node_id.is_empty() || self.node_id.contains(['/', '#', ':']) {
            return Err(ConfigError::Invalid(format!("node_id {:?} cannot appear in a URL host", self.node_id)));
        }
        if self.admin_credential.as_deref().is_some_and(str::is_empty) {
            return Err(ConfigError::Invalid("admin_credential must not be empty".into()));
        }
        Ok(())
    }
}

/// Reads the hex key at `path`, or writes a fresh random one there.
pub fn load_or_create_key(path: &Path) -> Result<[u8; 32], ConfigError> {
    let err = |source| ConfigError::KeyFile {
        path: path.to_path_buf(),
        source,
    };
    match fs::read_to_string(path) {
        Ok(text) => {
            let bytes = hex::decode(text.trim()).map_err(|e| err(io::Error::new(io::ErrorKind::InvalidData, e)))?;
            bytes
                .try_into()
                .map_err(|_| err(io::Error::new(io::ErrorKind::InvalidData, "expected 32 bytes of hex")))
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let key: [u8; 32] = rand::random();
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(err)?;
            }
            write_private(path, hex::encode(key).as_bytes()).map_err(err)?;
            Ok(key)
        }
        Err(e) => Err(err(e)),
    }
}

#[cfg(unix)]
fn write_private(path: &Path, bytes: &[u8]) -> io::Result<()> {
    use std::io::Write;
    use std::os::unix::fs::OpenOptionsExt;
    let mut f = fs::OpenOptions::new().write(true).create_new(true).mode(0o600).open(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

#[cfg(not(unix))]
fn write_private(path: &Path, bytes: &[u8]) -> io::Result<()> {
    fs::write(path, bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        let c = Config::from_toml(
            r#"
listen = "0.0.0.0:9000"
token_ttl_secs = 0
seed = 3
[clock]
mode = "manual"
start_ms = 100
"#,
        )
        .unwrap();
        assert_eq!(c.listen.port(), 9000);
        assert_eq!(c.token_ttl_secs, 0);
        assert_eq!(c.clock.mode, ClockMode::Manual);
        let clock = c.clock.build();
        assert_eq!(clock.now_millis(), 100);
        assert_eq!(clock.now_millis(), 101);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(matches!(Config::from_toml("bogus = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(Config::from_toml("edge_dir = \"x\""), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::from_toml("node_id = \"a/b\""), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn key_file_is_created_then_reused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keys").join("edge.key");
        let k1 = load_or_create_key(&path).unwrap();
        let k2 = load_or_create_key(&path).unwrap();
        assert_eq!(k1, k2);
        fs::write(&path, "abcd").unwrap();
        assert!(load_or_create_key(&path).is_err());
    }
}
