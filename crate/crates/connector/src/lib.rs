//! Deployable dataspace connector: HTTP routing for the DCAT catalog
//! endpoint, contract negotiation, transfers, the data plane, and admin
//! operations, wired over the core modules with file-backed persistence.

pub mod client;
pub mod config;
mod connector;
pub mod docs;
pub mod http_source;
pub mod service;

pub use config::{ConfigError, ConnectorConfig, ConnectorRole, FacadeSection};
pub use connector::{log_event, Connector, ConnectorError, FileDataSource};
pub use http_source::{encode_urn, HttpSourceStore};
pub use service::{router, serve};

/// Run a connector until the process is stopped.
pub async fn run(config: ConnectorConfig) -> Result<(), ConnectorError> {
    let connector = Connector::open(config)?;
    let (_addr, handle) = serve(connector).await?;
    handle
        .await
        .map_err(|e| ConnectorError::Io(std::io::Error::other(e)))??;
    Ok(())
}
