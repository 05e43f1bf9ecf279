// SPDX-License-Identifier: Apache-2.0

//! Manager configuration, stored as a line-oriented key=value file.

use std::path::{Path, PathBuf};

use ta_runtime::BackendKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: expected key=value")]
    BadLine(usize),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {reason}")]
    BadValue { key: &'static str, reason: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
}

fn bad(key: &'static str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key,
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManagerConfig {
    pub socket_path: PathBuf,
    pub storage_dir: PathBuf,
    /// Root of the storage key hierarchy; per-TA keys are derived from it.
    pub master_key: [u8; 32],
    pub backend: BackendKind,
    pub page_size: u64,
    pub rule_limit: usize,
}

impl ManagerConfig {
    /// Config rooted at a directory, with defaults for everything tunable.
    pub fn for_dir(dir: &Path, master_key: [u8; 32]) -> Self {
        ManagerConfig {
            socket_path: dir.join("vtee.sock"),
            storage_dir: dir.join("storage"),
            master_key,
            backend: BackendKind::Sgx,
            page_size: 4096,
            rule_limit: 16,
        }
    }

    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let mut socket_path = None;
        let mut storage_dir = None;
        let mut master_key = None;
        let mut backend = BackendKind::Sgx;
        let mut page_size = 4096u64;
        let mut rule_limit = 16usize;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine(i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "socket_path" => socket_path = Some(PathBuf::from(value)),
                "storage_dir" => storage_dir = Some(PathBuf::from(value)),
                "master_key" => {
                    let bytes = hex::decode(value).map_err(|e| bad("master_key", e))?;
                    let arr: [u8; 32] = bytes
                        .try_into()
                        .map_err(|_| bad("master_key", "need 64 hex digits"))?;
                    master_key = Some(arr);
                }
                "backend" => backend = value.parse().map_err(|e| bad("backend", e))?,
                "page_size" => {
                    page_size = value.parse().map_err(|e| bad("page_size", e))?;
                }
                "rule_limit" => {
                    rule_limit = value.parse().map_err(|e| bad("rule_limit", e))?;
                }
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        Ok(ManagerConfig {
            socket_path: socket_path.ok_or(ConfigError::Missing("socket_path"))?,
            storage_dir: storage_dir.ok_or(ConfigError::Missing("storage_dir"))?,
            master_key: master_key.ok_or(ConfigError::Missing("master_key"))?,
            backend,
            page_size,
            rule_limit,
        })
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "socket_path={}\nstorage_dir={}\nmaster_key={}\nbackend={}\npage_size={}\nrule_limit={}\n",
            self.socket_path.display(),
            self.storage_dir.display(),
            hex::encode(self.master_key),
            self.backend,
            self.page_size,
            self.rule_limit,
        )
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        Ok(std::fs::write(path, self.to_kv_string())?)
    }
}
