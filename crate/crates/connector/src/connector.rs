//! Wires the core modules into one deployable connector instance and owns the
//! change-feed pump that keeps the facade cache and policy store in sync with
//! the entity store.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::Utc;
use fedspace_core::facade::{Facade, FacadeConfig, FacadeError, LocalStoreClient, SessionToken};
use fedspace_core::negotiation::{NegotiationError, ProviderEngine};
use fedspace_core::odrl::{PolicyError, PolicyStore};
use fedspace_core::store::{MetadataStore, StoreError};
use fedspace_core::transfer::{DataSource, TransferBook, TransferError};
use fedspace_core::urn::Urn;
use parking_lot::Mutex;
use thiserror::Error;

use crate::config::{ConfigError, ConnectorConfig};

#[derive(Debug, Error)]
pub enum ConnectorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Negotiation(#[from] NegotiationError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Line-oriented structured log: `event=<name> key=value ...` on stderr.
pub fn log_event(event: &str, fields: &[(&str, String)]) {
    let mut line = format!("event={event}");
    for (key, value) in fields {
        if value.contains(' ') || value.is_empty() {
            let _ = write!(line, " {key}=\"{value}\"");
        } else {
            let _ = write!(line, " {key}={value}");
        }
    }
    eprintln!("{line}");
}

/// Toy end system: maps a dataset urn to a file under the configured
/// directory via the dataset's `dataFile` custom property.
pub struct FileDataSource {
    store: Arc<MetadataStore>,
    base: Option<PathBuf>,
}

impl DataSource for FileDataSource {
    fn fetch(&self, urn: &Urn) -> Result<Vec<u8>, String> {
        let base = self
            .base
            .as_ref()
            .ok_or_else(|| "no serve_files_dir configured".to_string())?;
        let record = self
            .store
            .get_entity(urn, false)
            .map_err(|e| e.to_string())?;
        let name = record
            .custom_properties
            .get("dataFile")
            .ok_or_else(|| format!("dataset `{urn}` has no dataFile property"))?;
        if name.contains("..") || name.contains('/') || name.contains('\\') {
            return Err(format!("dataFile `{name}` must be a bare file name"));
        }
        std::fs::read(base.join(name)).map_err(|e| format!("cannot read data file `{name}`: {e}"))
    }
}

pub struct Connector {
    pub config: ConnectorConfig,
    pub store: Arc<MetadataStore>,
    pub store_client: Arc<LocalStoreClient>,
    pub facade: Arc<Facade>,
    pub policies: Arc<PolicyStore>,
    pub negotiations: Arc<ProviderEngine>,
    pub transfers: Arc<TransferBook>,
    data_source: FileDataSource,
    facade_token: Mutex<Option<SessionToken>>,
    feed_cursor: Mutex<u64>,
}

impl Connector {
    /// Build a connector from config, loading persisted state from `data_dir`
    /// (`store/` journal+snapshots, `policies/`, `negotiations/`, `transfers/`).
    pub fn open(config: ConnectorConfig) -> Result<Arc<Connector>, ConnectorError> {
        config.validate()?;
        let store = Arc::new(MetadataStore::open(
            config.participant_id.clone(),
            &config.data_dir.join("store"),
        )?);
        let store_client = Arc::new(LocalStoreClient::new(store.clone()));
        let facade_config = FacadeConfig {
            client_id: config.facade.client_id.clone(),
            client_secret: config
                .facade
                .expected_client_secret
                .clone()
                .unwrap_or_else(|| config.facade.client_secret.clone()),
            token_lifetime_seconds: config.facade.session_lifetime_seconds,
            cache_ttl_seconds: config.facade.cache_ttl_seconds,
            page_size: config.facade.page_size,
        };
        let facade = Arc::new(Facade::new(facade_config, store_client.clone()));
        let policies = Arc::new(PolicyStore::open(&config.data_dir.join("policies"))?);
        facade.set_policy_invalidator(policies.clone());
        let negotiations = Arc::new(
            ProviderEngine::new(config.participant_id.clone(), policies.clone(), facade.clone())
                .with_idle_expiry(config.negotiation_idle_expiry_seconds)
                .with_persistence(&config.data_dir.join("negotiations"))?,
        );
        let transfers = Arc::new(
            TransferBook::new(policies.clone(), facade.clone(), negotiations.clone())
                .with_token_lifetime(config.access_token_lifetime_seconds)
                .with_persistence(&config.data_dir.join("transfers"))?,
        );
        let data_source = FileDataSource {
            store: store.clone(),
            base: config.serve_files_dir.clone(),
        };
        let connector = Arc::new(Connector {
            config,
            store,
            store_client,
            facade,
            policies,
            negotiations,
            transfers,
            data_source,
            facade_token: Mutex::new(None),
            feed_cursor: Mutex::new(0),
        });
        // replay the feed so cache state and policy invalidations catch up
        // with whatever happened before this process started
        connector.drain_changes();
        Ok(connector)
    }

    /// Pump all pending change events through the facade. Called after every
    /// mutation and before protocol reads, so invalidation chains settle
    /// deterministically without a background thread.
    pub fn drain_changes(&self) {
        let mut cursor = self.feed_cursor.lock();
        for event in self.store.events_since(*cursor) {
            self.facade.on_change(&event);
            *cursor = event.seq_no;
        }
    }

    /// Live facade session for catalog queries, re-authenticating when the
    /// cached token is near expiry.
    pub fn facade_session(&self) -> Result<String, FacadeError> {
        let mut guard = self.facade_token.lock();
        if let Some(token) = guard.as_ref() {
            if token.expires_at > Utc::now() + chrono::Duration::seconds(5) {
                return Ok(token.token.clone());
            }
        }
        let token = self
            .facade
            .authenticate(&self.config.facade.client_id, &self.config.facade.client_secret)?;
        let text = token.token.clone();
        *guard = Some(token);
        Ok(text)
    }

    pub fn data_source(&self) -> &dyn DataSource {
        &self.data_source
    }
}
