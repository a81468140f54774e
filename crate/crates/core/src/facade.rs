//! Integration layer between the entity store and the dataspace-facing view:
//! token-gated queries, semantic mapping to DCAT, read-through caching with
//! event-driven invalidation, and the policy invalidation hook for dataset
//! deletions.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::dcat::{DcatCatalog, DcatDataService, DcatDataset, DcatDistribution};
use crate::odrl::{PolicyStore, TargetResolver};
use crate::store::{
    AuthScheme, ChangeEvent, ChangeKind, DatasetAspect, DistributionType, EntityKind,
    EntityRecord, MetadataStore, Page, PageRequest, StoreError,
};
use crate::urn::{Urn, UrnKind};

#[derive(Debug, Error)]
pub enum FacadeError {
    #[error("bad client credentials")]
    BadCredentials,
    #[error("session token expired or unknown")]
    TokenExpired,
    #[error("target `{0}` cannot be resolved")]
    TargetNotFound(Urn),
    #[error("unknown urn `{0}`")]
    UnknownUrn(Urn),
    #[error("store query failed: {0}")]
    Store(String),
}

/// Short-lived bearer token for the store-query surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub expires_at: DateTime<Utc>,
}

/// The narrow field set negotiation and transfer flows need from the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationalMetadata {
    pub urn: Urn,
    pub title: String,
    pub domain_urn: Urn,
    pub distribution_type: DistributionType,
    pub access_endpoint: String,
    pub auth_scheme: AuthScheme,
    pub format_hint: String,
}

/// One row of the catalog listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogSummary {
    pub domain: Urn,
    pub title: String,
    pub dataset_count: usize,
}

/// Query interface the facade consumes. The built-in store implements it
/// in-process; a remote metadata platform can be slotted in behind the same
/// boundary.
pub trait StoreClient: Send + Sync {
    fn list_domains(&self, page: PageRequest) -> Result<Page<EntityRecord>, StoreError>;
    fn get_domain(&self, urn: &Urn) -> Result<EntityRecord, StoreError>;
    fn list_datasets_in_domain(
        &self,
        domain: &Urn,
        page: PageRequest,
    ) -> Result<Page<(EntityRecord, DatasetAspect)>, StoreError>;
    /// Narrow query: only the operational fields. `Ok(None)` means the entity
    /// is live but carries no operational metadata.
    fn get_operational(&self, urn: &Urn) -> Result<Option<OperationalMetadata>, StoreError>;
}

/// In-process client over [`MetadataStore`] counting every underlying query,
/// so cache behavior is observable in tests.
pub struct LocalStoreClient {
    store: Arc<MetadataStore>,
    queries: AtomicU64,
}

impl LocalStoreClient {
    pub fn new(store: Arc<MetadataStore>) -> LocalStoreClient {
        LocalStoreClient {
            store,
            queries: AtomicU64::new(0),
        }
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    fn tick(&self) {
        self.queries.fetch_add(1, Ordering::Relaxed);
    }
}

impl StoreClient for LocalStoreClient {
    fn list_domains(&self, page: PageRequest) -> Result<Page<EntityRecord>, StoreError> {
        self.tick();
        Ok(self.store.list_domains(page))
    }

    fn get_domain(&self, urn: &Urn) -> Result<EntityRecord, StoreError> {
        self.tick();
        let record = self.store.get_entity(urn, false)?;
        if record.kind != EntityKind::Domain {
            return Err(StoreError::UnknownUrn(urn.clone()));
        }
        Ok(record)
    }

    fn list_datasets_in_domain(
        &self,
        domain: &Urn,
        page: PageRequest,
    ) -> Result<Page<(EntityRecord, DatasetAspect)>, StoreError> {
        self.tick();
        self.store.list_datasets_in_domain(domain, page)
    }

    fn get_operational(&self, urn: &Urn) -> Result<Option<OperationalMetadata>, StoreError> {
        self.tick();
        let detail = self.store.get_dataset_detail(urn)?;
        Ok(detail.aspect.map(|aspect| OperationalMetadata {
            urn: detail.record.urn,
            title: detail.record.name,
            domain_urn: aspect.domain_urn,
            distribution_type: aspect.distribution_type,
            access_endpoint: aspect.access_endpoint,
            auth_scheme: aspect.auth_scheme,
            format_hint: aspect.format_hint,
        }))
    }
}

/// Receiver of dataset-deletion notifications; wired to the ODRL engine.
pub trait PolicyInvalidator: Send + Sync {
    fn invalidate_target(&self, urn: &Urn) -> usize;
}

impl PolicyInvalidator for PolicyStore {
    fn invalidate_target(&self, urn: &Urn) -> usize {
        self.invalidate_by_target(urn)
    }
}

#[derive(Debug, Clone)]
pub struct FacadeConfig {
    pub client_id: String,
    pub client_secret: String,
    pub token_lifetime_seconds: u64,
    /// 0 disables caching entirely.
    pub cache_ttl_seconds: u64,
    pub page_size: usize,
}

impl Default for FacadeConfig {
    fn default() -> FacadeConfig {
        FacadeConfig {
            client_id: "facade-client".to_string(),
            client_secret: "facade-secret".to_string(),
            token_lifetime_seconds: 3600,
            cache_ttl_seconds: 30,
            page_size: 50,
        }
    }
}

enum CachedValue {
    Catalogs(Vec<CatalogSummary>),
    Dcat(DcatCatalog),
    Operational(OperationalMetadata),
}

struct CacheEntry {
    value: CachedValue,
    fetched_at: Instant,
    ttl: Duration,
}

impl CacheEntry {
    fn fresh(&self) -> bool {
        self.fetched_at.elapsed() < self.ttl
    }
}

struct CacheState {
    entries: HashMap<String, CacheEntry>,
    /// Highest change-feed seq_no already processed; duplicates below this
    /// watermark are acknowledged without side effects.
    last_seq: u64,
}

pub struct Facade {
    config: FacadeConfig,
    client: Arc<dyn StoreClient>,
    tokens: RwLock<HashMap<String, DateTime<Utc>>>,
    cache: Mutex<CacheState>,
    invalidator: RwLock<Option<Arc<dyn PolicyInvalidator>>>,
}

impl Facade {
    pub fn new(config: FacadeConfig, client: Arc<dyn StoreClient>) -> Facade {
        Facade {
            config,
            client,
            tokens: RwLock::new(HashMap::new()),
            cache: Mutex::new(CacheState {
                entries: HashMap::new(),
                last_seq: 0,
            }),
            invalidator: RwLock::new(None),
        }
    }

    /// Hook the ODRL engine in for DELETE forwarding.
    pub fn set_policy_invalidator(&self, invalidator: Arc<dyn PolicyInvalidator>) {
        *self.invalidator.write() = Some(invalidator);
    }

    /// Exchange configured client credentials for a fresh session token.
    pub fn authenticate(&self, client_id: &str, client_secret: &str) -> Result<SessionToken, FacadeError> {
        if client_id != self.config.client_id || client_secret != self.config.client_secret {
            return Err(FacadeError::BadCredentials);
        }
        let token = SessionToken {
            token: Uuid::new_v4().to_string(),
            expires_at: Utc::now() + chrono::Duration::seconds(self.config.token_lifetime_seconds as i64),
        };
        self.tokens.write().insert(token.token.clone(), token.expires_at);
        Ok(token)
    }

    fn check_token(&self, token: &str) -> Result<(), FacadeError> {
        match self.tokens.read().get(token) {
            Some(expires_at) if Utc::now() < *expires_at => Ok(()),
            _ => Err(FacadeError::TokenExpired),
        }
    }

    fn cache_get(&self, key: &str) -> Option<CachedValue>
    where
        CachedValue: Clone,
    {
        if self.config.cache_ttl_seconds == 0 {
            return None;
        }
        let mut cache = self.cache.lock();
        match cache.entries.get(key) {
            Some(entry) if entry.fresh() => Some(entry.value.clone()),
            Some(_) => {
                cache.entries.remove(key);
                None
            }
            None => None,
        }
    }

    fn cache_put(&self, key: String, value: CachedValue) {
        if self.config.cache_ttl_seconds == 0 {
            return;
        }
        let entry = CacheEntry {
            value,
            fetched_at: Instant::now(),
            ttl: Duration::from_secs(self.config.cache_ttl_seconds),
        };
        self.cache.lock().entries.insert(key, entry);
    }

    /// Summaries of every live domain, served from cache when fresh.
    pub fn list_catalogs(&self, token: &str) -> Result<Vec<CatalogSummary>, FacadeError> {
        self.check_token(token)?;
        if let Some(CachedValue::Catalogs(cached)) = self.cache_get("catalogs") {
            return Ok(cached);
        }
        let domains = self.fetch_all_domains()?;
        let mut summaries = Vec::with_capacity(domains.len());
        for domain in domains {
            let counted = self
                .client
                .list_datasets_in_domain(&domain.urn, PageRequest::first(1))
                .map_err(|e| FacadeError::Store(e.to_string()))?;
            summaries.push(CatalogSummary {
                domain: domain.urn,
                title: domain.name,
                dataset_count: counted.total,
            });
        }
        self.cache_put("catalogs".to_string(), CachedValue::Catalogs(summaries.clone()));
        Ok(summaries)
    }

    /// Operational metadata for one live dataset; the error doubles as the
    /// trigger for policy invalidation upstream.
    pub fn resolve_dataset(&self, token: &str, urn: &Urn) -> Result<OperationalMetadata, FacadeError> {
        self.check_token(token)?;
        self.resolve_internal(urn)
    }

    /// Resolution path shared with in-process callers (policy creation,
    /// negotiation double-check, transfer grant).
    pub fn resolve_internal(&self, urn: &Urn) -> Result<OperationalMetadata, FacadeError> {
        let key = format!("resolve:{urn}");
        if let Some(CachedValue::Operational(cached)) = self.cache_get(&key) {
            return Ok(cached);
        }
        let meta = match self.client.get_operational(urn) {
            Ok(Some(meta)) => meta,
            Ok(None) => return Err(FacadeError::TargetNotFound(urn.clone())),
            Err(StoreError::UnknownUrn(_)) | Err(StoreError::DeletedEntity(_)) => {
                return Err(FacadeError::TargetNotFound(urn.clone()))
            }
            Err(e) => return Err(FacadeError::Store(e.to_string())),
        };
        self.cache_put(key, CachedValue::Operational(meta.clone()));
        Ok(meta)
    }

    /// Map one domain and its datasets to the neutral DCAT view.
    pub fn to_dcat(&self, token: &str, domain: &Urn) -> Result<DcatCatalog, FacadeError> {
        self.check_token(token)?;
        self.to_dcat_internal(domain)
    }

    pub fn to_dcat_internal(&self, domain: &Urn) -> Result<DcatCatalog, FacadeError> {
        let key = format!("dcat:{domain}");
        if let Some(CachedValue::Dcat(cached)) = self.cache_get(&key) {
            return Ok(cached);
        }
        let record = match self.client.get_domain(domain) {
            Ok(record) => record,
            Err(StoreError::UnknownUrn(_)) | Err(StoreError::DeletedEntity(_)) => {
                return Err(FacadeError::UnknownUrn(domain.clone()))
            }
            Err(e) => return Err(FacadeError::Store(e.to_string())),
        };
        let mut datasets = Vec::new();
        let mut services = Vec::new();
        let mut page = PageRequest::first(self.config.page_size.max(1));
        loop {
            let batch = self
                .client
                .list_datasets_in_domain(domain, page)
                .map_err(|e| FacadeError::Store(e.to_string()))?;
            let got = batch.items.len();
            for (entity, aspect) in batch.items {
                let (dataset, service) = map_dataset(&entity, &aspect);
                datasets.push(dataset);
                services.push(service);
            }
            if page.offset + got >= batch.total || got == 0 {
                break;
            }
            page = page.next();
        }
        let catalog = DcatCatalog {
            id: record.urn,
            title: record.name,
            description: record.description,
            datasets,
            services,
        };
        self.cache_put(key, CachedValue::Dcat(catalog.clone()));
        Ok(catalog)
    }

    /// Apply one change-feed event: drop covered cache entries and forward
    /// dataset deletions to the policy engine. Deduplicates by seq_no, so
    /// at-least-once delivery causes at most one invalidation per event.
    pub fn on_change(&self, event: &ChangeEvent) {
        {
            let mut cache = self.cache.lock();
            if event.seq_no <= cache.last_seq {
                return;
            }
            cache.last_seq = event.seq_no;
            match event.urn.kind() {
                UrnKind::Domain => {
                    cache.entries.remove("catalogs");
                    cache.entries.remove(&format!("dcat:{}", event.urn));
                }
                UrnKind::Dataset => {
                    cache.entries.remove("catalogs");
                    cache.entries.remove(&format!("resolve:{}", event.urn));
                    // domain membership is not part of the event; every mapped
                    // catalog view may cover this dataset
                    cache.entries.retain(|key, _| !key.starts_with("dcat:"));
                }
            }
        }
        if event.kind == ChangeKind::Delete && event.urn.kind() == UrnKind::Dataset {
            if let Some(invalidator) = self.invalidator.read().as_ref() {
                invalidator.invalidate_target(&event.urn);
            }
        }
    }

    fn fetch_all_domains(&self) -> Result<Vec<EntityRecord>, FacadeError> {
        let mut out = Vec::new();
        let mut page = PageRequest::first(self.config.page_size.max(1));
        loop {
            let batch = self
                .client
                .list_domains(page)
                .map_err(|e| FacadeError::Store(e.to_string()))?;
            let got = batch.items.len();
            out.extend(batch.items);
            if page.offset + got >= batch.total || got == 0 {
                return Ok(out);
            }
            page = page.next();
        }
    }
}

impl TargetResolver for Facade {
    fn target_live(&self, urn: &Urn) -> bool {
        self.resolve_internal(urn).is_ok()
    }
}

impl Clone for CachedValue {
    fn clone(&self) -> CachedValue {
        match self {
            CachedValue::Catalogs(v) => CachedValue::Catalogs(v.clone()),
            CachedValue::Dcat(v) => CachedValue::Dcat(v.clone()),
            CachedValue::Operational(v) => CachedValue::Operational(v.clone()),
        }
    }
}

pub fn distribution_type_label(d: DistributionType) -> &'static str {
    match d {
        DistributionType::HttpPull => "HTTP_PULL",
        DistributionType::HttpPush => "HTTP_PUSH",
    }
}

pub fn auth_scheme_label(a: AuthScheme) -> &'static str {
    match a {
        AuthScheme::None => "NONE",
        AuthScheme::Bearer => "BEARER",
    }
}

/// The semantic mapping for one dataset: one distribution referencing one
/// data service whose description embeds the auth scheme.
fn map_dataset(entity: &EntityRecord, aspect: &DatasetAspect) -> (DcatDataset, DcatDataService) {
    let service_id = format!("{}#access", entity.urn);
    let dataset = DcatDataset {
        id: entity.urn.clone(),
        title: entity.name.clone(),
        description: entity.description.clone(),
        version: aspect.version_tag.clone(),
        distributions: vec![DcatDistribution {
            format: aspect.format_hint.clone(),
            access_service_id: service_id.clone(),
        }],
    };
    let service = DcatDataService {
        id: service_id,
        endpoint_url: aspect.access_endpoint.clone(),
        endpoint_description: format!(
            "{} endpoint (auth: {})",
            distribution_type_label(aspect.distribution_type),
            auth_scheme_label(aspect.auth_scheme)
        ),
    };
    (dataset, service)
}
