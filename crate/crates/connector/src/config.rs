//! Connector configuration: TOML file plus `FEDSPACE_*` / `FACADE_*`
//! environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(String),
    #[error("cannot parse config file: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectorRole {
    #[serde(rename = "PROVIDER")]
    Provider,
    #[serde(rename = "CONSUMER")]
    Consumer,
    #[serde(rename = "BOTH")]
    Both,
}

impl ConnectorRole {
    pub fn includes_provider(self) -> bool {
        matches!(self, ConnectorRole::Provider | ConnectorRole::Both)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FacadeSection {
    /// Address of the metadata store behind the facade. The built-in store is
    /// selected with "local"; anything else is rejected at startup (the seam
    /// exists so a remote metadata platform can be slotted in).
    pub store_url: String,
    pub client_id: String,
    pub client_secret: String,
    /// Secret the store-side of the facade expects. Defaults to
    /// `client_secret`; set differently to exercise credential failure paths.
    pub expected_client_secret: Option<String>,
    pub cache_ttl_seconds: u64,
    pub page_size: usize,
    pub session_lifetime_seconds: u64,
}

impl Default for FacadeSection {
    fn default() -> FacadeSection {
        FacadeSection {
            store_url: "local".to_string(),
            client_id: "facade-client".to_string(),
            client_secret: "facade-secret".to_string(),
            expected_client_secret: None,
            cache_ttl_seconds: 30,
            page_size: 50,
            session_lifetime_seconds: 3600,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ConnectorConfig {
    pub role: ConnectorRole,
    pub listen_address: String,
    pub participant_id: String,
    pub data_dir: PathBuf,
    pub admin_token: String,
    /// Directory the toy end system serves dataset files from, resolved via
    /// each dataset's `dataFile` custom property.
    pub serve_files_dir: Option<PathBuf>,
    pub access_token_lifetime_seconds: u64,
    pub negotiation_idle_expiry_seconds: u64,
    pub page_size: usize,
    pub facade: FacadeSection,
}

impl Default for ConnectorConfig {
    fn default() -> ConnectorConfig {
        ConnectorConfig {
            role: ConnectorRole::Both,
            listen_address: "127.0.0.1:7400".to_string(),
            participant_id: "connector".to_string(),
            data_dir: PathBuf::from("./fedspace-data"),
            admin_token: "changeme".to_string(),
            serve_files_dir: None,
            access_token_lifetime_seconds: 900,
            negotiation_idle_expiry_seconds: 3600,
            page_size: 50,
            facade: FacadeSection::default(),
        }
    }
}

impl ConnectorConfig {
    pub fn load(path: &Path) -> Result<ConnectorConfig, ConfigError> {
        let body = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
        let mut config: ConnectorConfig =
            toml::from_str(&body).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.apply_env();
        config.validate()?;
        Ok(config)
    }

    /// `FEDSPACE_*` overrides connector keys, `FACADE_*` the facade section.
    pub fn apply_env(&mut self) {
        let get = |key: &str| std::env::var(key).ok().filter(|v| !v.is_empty());
        if let Some(v) = get("FEDSPACE_ROLE") {
            self.role = match v.as_str() {
                "PROVIDER" => ConnectorRole::Provider,
                "CONSUMER" => ConnectorRole::Consumer,
                _ => ConnectorRole::Both,
            };
        }
        if let Some(v) = get("FEDSPACE_LISTEN_ADDRESS") {
            self.listen_address = v;
        }
        if let Some(v) = get("FEDSPACE_PARTICIPANT_ID") {
            self.participant_id = v;
        }
        if let Some(v) = get("FEDSPACE_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = get("FEDSPACE_ADMIN_TOKEN") {
            self.admin_token = v;
        }
        if let Some(v) = get("FEDSPACE_SERVE_FILES_DIR") {
            self.serve_files_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = get("FEDSPACE_PAGE_SIZE").and_then(|v| v.parse().ok()) {
            self.page_size = v;
        }
        if let Some(v) = get("FACADE_STORE_URL") {
            self.facade.store_url = v;
        }
        if let Some(v) = get("FACADE_CLIENT_ID") {
            self.facade.client_id = v;
        }
        if let Some(v) = get("FACADE_CLIENT_SECRET") {
            self.facade.client_secret = v;
        }
        if let Some(v) = get("FACADE_CACHE_TTL_SECONDS").and_then(|v| v.parse().ok()) {
            self.facade.cache_ttl_seconds = v;
        }
        if let Some(v) = get("FACADE_PAGE_SIZE").and_then(|v| v.parse().ok()) {
            self.facade.page_size = v;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.participant_id.trim().is_empty() {
            return Err(ConfigError::Invalid("participant_id must be non-empty".to_string()));
        }
        if self.facade.store_url != "local" {
            return Err(ConfigError::Invalid(format!(
                "facade.store_url `{}` is not supported; only the built-in \"local\" store exists",
                self.facade.store_url
            )));
        }
        std::fs::create_dir_all(&self.data_dir)
            .map_err(|e| ConfigError::Invalid(format!("data_dir not writable: {e}")))?;
        Ok(())
    }
}
