//! Federated metadata graph: ingestion, search, lineage, change feed,
//! pull-based federation, and journal-backed persistence.

mod federation;
mod ingest;
mod journal;
mod types;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use chrono::Utc;
use parking_lot::RwLock;
use thiserror::Error;

use crate::urn::{Urn, UrnError, UrnKind};

pub use federation::{SourceError, SourceStore};
pub use ingest::{parse_ingestion_file, IngestError, IngestRecord, IngestReport};
pub use types::{
    AuthScheme, ChangeEvent, ChangeKind, DatasetAspect, DatasetDetail, DistributionType,
    EntityDraft, EntityKind, EntityRecord, FederationReport, LineageDirection, LineageEdge, Page,
    PageRequest,
};

use journal::{Journal, JournalEntry, JournalPayload};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    MalformedUrn(#[from] UrnError),
    #[error("unknown urn `{0}`")]
    UnknownUrn(Urn),
    #[error("entity `{0}` is deleted")]
    DeletedEntity(Urn),
    #[error("entity `{0}` is already deleted")]
    AlreadyDeleted(Urn),
    #[error("dataset aspect references unknown domain `{0}`")]
    MissingParentDomain(Urn),
    #[error("invalid dataset aspect: {0}")]
    InvalidAspect(String),
    #[error("lineage edge endpoints are equal: `{0}`")]
    SelfLoop(Urn),
    #[error("duplicate lineage edge {0} -> {1}")]
    DuplicateEdge(Urn, Urn),
    #[error("search query is empty")]
    EmptyQuery,
    #[error("source unreachable: {0}")]
    SourceUnreachable(String),
    #[error("store persistence failure: {0}")]
    Persistence(String),
}

struct StoreInner {
    entities: BTreeMap<Urn, EntityRecord>,
    aspects: HashMap<Urn, DatasetAspect>,
    lineage: Vec<LineageEdge>,
    lineage_keys: HashSet<(Urn, Urn)>,
    events: Vec<ChangeEvent>,
    next_seq: u64,
    journal: Option<Journal>,
}

impl StoreInner {
    fn empty() -> StoreInner {
        StoreInner {
            entities: BTreeMap::new(),
            aspects: HashMap::new(),
            lineage: Vec::new(),
            lineage_keys: HashSet::new(),
            events: Vec::new(),
            next_seq: 1,
            journal: None,
        }
    }

    /// Record one mutation: assign its seq_no, remember the event, and append
    /// to the journal when persistence is on. Callers already updated state.
    fn commit(&mut self, urn: Urn, kind: ChangeKind, payload: JournalPayload) -> Result<ChangeEvent, StoreError> {
        let event = ChangeEvent {
            seq_no: self.next_seq,
            urn,
            kind,
            at: Utc::now(),
        };
        self.next_seq += 1;
        self.events.push(event.clone());
        if let Some(journal) = self.journal.as_mut() {
            journal.append(&JournalEntry {
                event: event.clone(),
                payload,
            })?;
            if journal.due_for_snapshot() {
                journal.write_snapshot(
                    event.seq_no,
                    &self.entities,
                    &self.aspects,
                    &self.lineage,
                )?;
            }
        }
        Ok(event)
    }

    fn apply_replayed(&mut self, entry: JournalEntry) {
        match entry.payload {
            JournalPayload::Entity { record, aspect } => {
                if let Some(aspect) = aspect {
                    self.aspects.insert(record.urn.clone(), aspect);
                }
                self.entities.insert(record.urn.clone(), record);
            }
            JournalPayload::Lineage { edge } => {
                self.lineage_keys
                    .insert((edge.upstream.clone(), edge.downstream.clone()));
                self.lineage.push(edge);
            }
            JournalPayload::Delete => {
                if let Some(record) = self.entities.get_mut(&entry.event.urn) {
                    record.deleted = true;
                    record.updated_at = entry.event.at;
                }
            }
        }
        self.next_seq = entry.event.seq_no + 1;
    }

    fn live(&self, urn: &Urn) -> Option<&EntityRecord> {
        self.entities.get(urn).filter(|r| !r.deleted)
    }

    fn live_dataset(&self, urn: &Urn) -> Result<&EntityRecord, StoreError> {
        match self.entities.get(urn) {
            Some(r) if r.deleted => Err(StoreError::DeletedEntity(urn.clone())),
            Some(r) if r.kind == EntityKind::Dataset => Ok(r),
            _ => Err(StoreError::UnknownUrn(urn.clone())),
        }
    }
}

/// Thread-safe metadata store. Readers run concurrently; every mutation goes
/// through the single writer path so seq_no assignment and urn-uniqueness
/// checks are atomic.
pub struct MetadataStore {
    catalog_id: String,
    inner: RwLock<StoreInner>,
}

/// Pull position inside the change feed; advance it with
/// [`MetadataStore::poll_changes`]. Delivery is at-least-once: consumers must
/// deduplicate by `seq_no`.
#[derive(Debug, Clone, Copy)]
pub struct Subscription {
    cursor: u64,
}

impl Subscription {
    pub fn cursor(&self) -> u64 {
        self.cursor
    }
}

impl MetadataStore {
    /// In-memory store without persistence.
    pub fn in_memory(catalog_id: impl Into<String>) -> MetadataStore {
        MetadataStore {
            catalog_id: catalog_id.into(),
            inner: RwLock::new(StoreInner::empty()),
        }
    }

    /// Open (or create) a journal-backed store in `dir`. Existing snapshot and
    /// journal files are replayed before the store accepts operations.
    pub fn open(catalog_id: impl Into<String>, dir: &Path) -> Result<MetadataStore, StoreError> {
        let mut inner = StoreInner::empty();
        let mut journal = Journal::open(dir)?;
        if let Some(snapshot) = journal.load_latest_snapshot()? {
            inner.entities = snapshot.entities;
            inner.aspects = snapshot.aspects;
            for edge in &snapshot.lineage {
                inner
                    .lineage_keys
                    .insert((edge.upstream.clone(), edge.downstream.clone()));
            }
            inner.lineage = snapshot.lineage;
            inner.next_seq = snapshot.last_seq + 1;
        }
        let snapshot_seq = inner.next_seq - 1;
        for entry in journal.read_entries()? {
            inner.events.push(entry.event.clone());
            if entry.event.seq_no > snapshot_seq {
                inner.apply_replayed(entry);
            }
        }
        inner.journal = Some(journal);
        Ok(MetadataStore {
            catalog_id: catalog_id.into(),
            inner: RwLock::new(inner),
        })
    }

    /// Identifier stamped into `source_catalog_id` for locally ingested entities.
    pub fn catalog_id(&self) -> &str {
        &self.catalog_id
    }

    /// Insert or update an entity. Emits CREATE for new urns and UPDATE for
    /// existing ones (including revivals of soft-deleted entities).
    pub fn upsert_entity(
        &self,
        draft: EntityDraft,
        aspect: Option<DatasetAspect>,
    ) -> Result<Urn, StoreError> {
        let mut inner = self.inner.write();
        validate_draft(&draft)?;
        if let Some(aspect) = aspect.as_ref() {
            validate_aspect(&inner, &draft, aspect)?;
        }

        let now = Utc::now();
        let urn = draft.urn.clone();
        let (record, kind) = match inner.entities.get(&urn) {
            Some(existing) => {
                let mut record = existing.clone();
                record.name = draft.name;
                record.description = draft.description;
                record.custom_properties = draft.custom_properties;
                record.deleted = false;
                record.updated_at = now;
                (record, ChangeKind::Update)
            }
            None => (
                EntityRecord {
                    urn: urn.clone(),
                    kind: draft.kind,
                    name: draft.name,
                    description: draft.description,
                    custom_properties: draft.custom_properties,
                    source_catalog_id: self.catalog_id.clone(),
                    created_at: now,
                    updated_at: now,
                    deleted: false,
                },
                ChangeKind::Create,
            ),
        };

        if let Some(aspect) = aspect.clone() {
            inner.aspects.insert(urn.clone(), aspect);
        }
        let stored_aspect = inner.aspects.get(&urn).cloned();
        inner.entities.insert(urn.clone(), record.clone());
        inner.commit(
            urn.clone(),
            kind,
            JournalPayload::Entity {
                record,
                aspect: stored_aspect,
            },
        )?;
        Ok(urn)
    }

    /// Soft-delete an entity. It disappears from listings and search but stays
    /// retrievable through [`MetadataStore::get_entity`] with `include_deleted`.
    pub fn delete_entity(&self, urn: &Urn) -> Result<(), StoreError> {
        let mut inner = self.inner.write();
        match inner.entities.get_mut(urn) {
            None => return Err(StoreError::UnknownUrn(urn.clone())),
            Some(record) if record.deleted => return Err(StoreError::AlreadyDeleted(urn.clone())),
            Some(record) => {
                record.deleted = true;
                record.updated_at = Utc::now();
            }
        }
        inner.commit(urn.clone(), ChangeKind::Delete, JournalPayload::Delete)?;
        Ok(())
    }

    pub fn get_entity(&self, urn: &Urn, include_deleted: bool) -> Result<EntityRecord, StoreError> {
        let inner = self.inner.read();
        match inner.entities.get(urn) {
            None => Err(StoreError::UnknownUrn(urn.clone())),
            Some(record) if record.deleted && !include_deleted => {
                Err(StoreError::DeletedEntity(urn.clone()))
            }
            Some(record) => Ok(record.clone()),
        }
    }

    /// Live domains in ascending urn order.
    pub fn list_domains(&self, page: PageRequest) -> Page<EntityRecord> {
        let inner = self.inner.read();
        let all: Vec<EntityRecord> = inner
            .entities
            .values()
            .filter(|r| !r.deleted && r.kind == EntityKind::Domain)
            .cloned()
            .collect();
        Page::slice(all, page)
    }

    /// Live datasets whose aspect points at `domain`, urn-ordered.
    pub fn list_datasets_in_domain(
        &self,
        domain: &Urn,
        page: PageRequest,
    ) -> Result<Page<(EntityRecord, DatasetAspect)>, StoreError> {
        let inner = self.inner.read();
        let parent = inner
            .live(domain)
            .ok_or_else(|| StoreError::UnknownUrn(domain.clone()))?;
        if parent.kind != EntityKind::Domain {
            return Err(StoreError::UnknownUrn(domain.clone()));
        }
        let all: Vec<(EntityRecord, DatasetAspect)> = inner
            .entities
            .values()
            .filter(|r| !r.deleted && r.kind == EntityKind::Dataset)
            .filter_map(|r| {
                inner
                    .aspects
                    .get(&r.urn)
                    .filter(|a| &a.domain_urn == domain)
                    .map(|a| (r.clone(), a.clone()))
            })
            .collect();
        Ok(Page::slice(all, page))
    }

    /// Record, aspect, and lineage degree of a live dataset.
    pub fn get_dataset_detail(&self, urn: &Urn) -> Result<DatasetDetail, StoreError> {
        let inner = self.inner.read();
        let record = inner.live_dataset(urn)?.clone();
        let upstream_count = inner
            .lineage
            .iter()
            .filter(|e| &e.downstream == urn)
            .count();
        let downstream_count = inner.lineage.iter().filter(|e| &e.upstream == urn).count();
        Ok(DatasetDetail {
            aspect: inner.aspects.get(urn).cloned(),
            record,
            upstream_count,
            downstream_count,
        })
    }

    /// Case-insensitive substring search over dataset name, description, and
    /// custom property values. Results are urn-ordered.
    pub fn search_datasets(
        &self,
        query: &str,
        page: PageRequest,
    ) -> Result<Page<EntityRecord>, StoreError> {
        let needle = query.trim().to_lowercase();
        if needle.is_empty() {
            return Err(StoreError::EmptyQuery);
        }
        let inner = self.inner.read();
        let all: Vec<EntityRecord> = inner
            .entities
            .values()
            .filter(|r| !r.deleted && r.kind == EntityKind::Dataset)
            .filter(|r| {
                r.name.to_lowercase().contains(&needle)
                    || r.description.to_lowercase().contains(&needle)
                    || r.custom_properties
                        .values()
                        .any(|v| v.to_lowercase().contains(&needle))
            })
            .cloned()
            .collect();
        Ok(Page::slice(all, page))
    }

    /// Add a direct lineage edge between two live datasets.
    pub fn add_lineage_edge(&self, upstream: &Urn, downstream: &Urn) -> Result<(), StoreError> {
        let mut inner = self.inner.write();
        if upstream == downstream {
            return Err(StoreError::SelfLoop(upstream.clone()));
        }
        inner
            .live_dataset(upstream)
            .map_err(|_| StoreError::UnknownUrn(upstream.clone()))?;
        inner
            .live_dataset(downstream)
            .map_err(|_| StoreError::UnknownUrn(downstream.clone()))?;
        let key = (upstream.clone(), downstream.clone());
        if inner.lineage_keys.contains(&key) {
            return Err(StoreError::DuplicateEdge(upstream.clone(), downstream.clone()));
        }
        let edge = LineageEdge {
            upstream: upstream.clone(),
            downstream: downstream.clone(),
            created_at: Utc::now(),
        };
        inner.lineage_keys.insert(key);
        inner.lineage.push(edge.clone());
        // the edge changes the downstream dataset's provenance view
        inner.commit(
            downstream.clone(),
            ChangeKind::Update,
            JournalPayload::Lineage { edge },
        )?;
        Ok(())
    }

    /// Direct lineage neighbors (depth 1).
    pub fn get_lineage(&self, urn: &Urn, direction: LineageDirection) -> Result<Vec<Urn>, StoreError> {
        let inner = self.inner.read();
        inner.live_dataset(urn)?;
        let mut neighbors: Vec<Urn> = inner
            .lineage
            .iter()
            .filter_map(|e| match direction {
                LineageDirection::Upstream if &e.downstream == urn => Some(e.upstream.clone()),
                LineageDirection::Downstream if &e.upstream == urn => Some(e.downstream.clone()),
                _ => None,
            })
            .collect();
        neighbors.sort();
        Ok(neighbors)
    }

    /// All change events with `seq_no > cursor`, in order.
    pub fn events_since(&self, cursor: u64) -> Vec<ChangeEvent> {
        let inner = self.inner.read();
        inner
            .events
            .iter()
            .filter(|e| e.seq_no > cursor)
            .cloned()
            .collect()
    }

    /// Start a pull subscription at `cursor`; the first poll replays
    /// everything after it.
    pub fn subscribe(&self, cursor: u64) -> Subscription {
        Subscription { cursor }
    }

    /// New events since the subscription's cursor; advances the cursor.
    pub fn poll_changes(&self, sub: &mut Subscription) -> Vec<ChangeEvent> {
        let events = self.events_since(sub.cursor);
        if let Some(last) = events.last() {
            sub.cursor = last.seq_no;
        }
        events
    }

    /// Highest assigned seq_no (0 when no mutation happened yet).
    pub fn latest_seq(&self) -> u64 {
        self.inner.read().next_seq - 1
    }

    /// Count of live entities, any kind.
    pub fn live_entity_count(&self) -> usize {
        self.inner.read().entities.values().filter(|r| !r.deleted).count()
    }

    /// Urns of all live entities.
    pub fn live_urns(&self) -> Vec<Urn> {
        self.inner
            .read()
            .entities
            .values()
            .filter(|r| !r.deleted)
            .map(|r| r.urn.clone())
            .collect()
    }

    /// Force a snapshot file to be written now (persistent stores only).
    pub fn snapshot(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.write();
        let last_seq = inner.next_seq - 1;
        let StoreInner {
            entities,
            aspects,
            lineage,
            journal,
            ..
        } = &mut *inner;
        if let Some(journal) = journal.as_mut() {
            journal.write_snapshot(last_seq, entities, aspects, lineage)?;
        }
        Ok(())
    }
}

fn validate_draft(draft: &EntityDraft) -> Result<(), StoreError> {
    if !draft.kind.matches(draft.urn.kind()) {
        return Err(StoreError::MalformedUrn(UrnError {
            urn: draft.urn.to_string(),
            reason: format!("urn grammar does not match entity kind {:?}", draft.kind),
        }));
    }
    Ok(())
}

fn validate_aspect(
    inner: &StoreInner,
    draft: &EntityDraft,
    aspect: &DatasetAspect,
) -> Result<(), StoreError> {
    if draft.kind != EntityKind::Dataset {
        return Err(StoreError::InvalidAspect(
            "aspects apply to datasets only".to_string(),
        ));
    }
    if aspect.dataset_urn != draft.urn {
        return Err(StoreError::InvalidAspect(format!(
            "aspect dataset_urn `{}` does not match record urn `{}`",
            aspect.dataset_urn, draft.urn
        )));
    }
    if aspect.domain_urn.kind() != UrnKind::Domain {
        return Err(StoreError::InvalidAspect(format!(
            "aspect domain_urn `{}` is not a domain urn",
            aspect.domain_urn
        )));
    }
    if url::Url::parse(&aspect.access_endpoint).is_err() {
        return Err(StoreError::InvalidAspect(format!(
            "access_endpoint `{}` is not an absolute URL",
            aspect.access_endpoint
        )));
    }
    match inner.live(&aspect.domain_urn) {
        Some(parent) if parent.kind == EntityKind::Domain => Ok(()),
        _ => Err(StoreError::MissingParentDomain(aspect.domain_urn.clone())),
    }
}
