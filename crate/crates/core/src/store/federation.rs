//! Pull-based federation from remote source stores.

use thiserror::Error;

use super::journal::JournalPayload;
use super::types::{
    ChangeKind, DatasetAspect, DatasetDetail, EntityRecord, FederationReport, Page, PageRequest,
};
use super::{MetadataStore, StoreError};
use crate::urn::Urn;

/// Any failure talking to a source store; federation treats the source as
/// unreachable and applies nothing.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct SourceError(pub String);

/// Read interface a source catalog must expose to be federated from.
pub trait SourceStore: Send + Sync {
    fn list_domains(&self, page: PageRequest) -> Result<Page<EntityRecord>, SourceError>;
    fn list_datasets_in_domain(
        &self,
        domain: &Urn,
        page: PageRequest,
    ) -> Result<Page<(EntityRecord, DatasetAspect)>, SourceError>;
    fn get_dataset_detail(&self, urn: &Urn) -> Result<DatasetDetail, SourceError>;
}

/// Every connector's own store doubles as a federation source.
impl SourceStore for MetadataStore {
    fn list_domains(&self, page: PageRequest) -> Result<Page<EntityRecord>, SourceError> {
        Ok(MetadataStore::list_domains(self, page))
    }

    fn list_datasets_in_domain(
        &self,
        domain: &Urn,
        page: PageRequest,
    ) -> Result<Page<(EntityRecord, DatasetAspect)>, SourceError> {
        MetadataStore::list_datasets_in_domain(self, domain, page).map_err(|e| SourceError(e.to_string()))
    }

    fn get_dataset_detail(&self, urn: &Urn) -> Result<DatasetDetail, SourceError> {
        MetadataStore::get_dataset_detail(self, urn).map_err(|e| SourceError(e.to_string()))
    }
}

const FEDERATION_PAGE: usize = 50;

impl MetadataStore {
    /// Pull every live entity of `source` into this store. The pull is
    /// transactional: the full source snapshot is fetched first and nothing is
    /// applied if any fetch fails. Conflicts (same urn from a different source
    /// catalog) resolve last-write-wins by `updated_at`, ties broken by
    /// `source_catalog_id`; source timestamps are preserved on apply.
    pub fn federate_pull(&self, source: &dyn SourceStore) -> Result<FederationReport, StoreError> {
        // fetch phase: snapshot the source before touching local state
        let mut incoming: Vec<(EntityRecord, Option<DatasetAspect>)> = Vec::new();
        let domains = fetch_all(|page| source.list_domains(page))
            .map_err(|e| StoreError::SourceUnreachable(e.to_string()))?;
        for domain in &domains {
            incoming.push((domain.clone(), None));
        }
        for domain in &domains {
            let datasets = fetch_all(|page| source.list_datasets_in_domain(&domain.urn, page))
                .map_err(|e| StoreError::SourceUnreachable(e.to_string()))?;
            for (record, aspect) in datasets {
                incoming.push((record, Some(aspect)));
            }
        }

        // apply phase: single writer-lock acquisition, so concurrent readers
        // never observe a half-applied pull
        let mut inner = self.inner.write();
        let mut report = FederationReport::default();
        for (record, aspect) in incoming {
            let decision = match inner.entities.get(&record.urn) {
                None => Decision::Create,
                Some(existing) if existing.source_catalog_id != record.source_catalog_id => {
                    report.conflicts += 1;
                    let incoming_key = (record.updated_at, record.source_catalog_id.clone());
                    let existing_key =
                        (existing.updated_at, existing.source_catalog_id.clone());
                    if incoming_key > existing_key {
                        Decision::Overwrite
                    } else {
                        Decision::Keep
                    }
                }
                Some(existing) => {
                    let same_record = existing == &record;
                    let same_aspect = inner.aspects.get(&record.urn) == aspect.as_ref();
                    if same_record && same_aspect {
                        Decision::Unchanged
                    } else {
                        Decision::Update
                    }
                }
            };
            match decision {
                Decision::Keep => {}
                Decision::Unchanged => report.unchanged += 1,
                Decision::Create | Decision::Update | Decision::Overwrite => {
                    if matches!(decision, Decision::Create) {
                        report.created += 1;
                    } else if matches!(decision, Decision::Update) {
                        report.updated += 1;
                    }
                    let kind = if matches!(decision, Decision::Create) {
                        ChangeKind::Create
                    } else {
                        ChangeKind::Update
                    };
                    if let Some(aspect) = aspect.clone() {
                        inner.aspects.insert(record.urn.clone(), aspect);
                    }
                    let stored_aspect = inner.aspects.get(&record.urn).cloned();
                    inner.entities.insert(record.urn.clone(), record.clone());
                    inner.commit(
                        record.urn.clone(),
                        kind,
                        JournalPayload::Entity {
                            record,
                            aspect: stored_aspect,
                        },
                    )?;
                }
            }
        }
        Ok(report)
    }
}

enum Decision {
    Create,
    Update,
    Unchanged,
    /// Conflict resolved in favor of the incoming record.
    Overwrite,
    /// Conflict resolved in favor of the existing record.
    Keep,
}

fn fetch_all<T>(
    mut fetch: impl FnMut(PageRequest) -> Result<Page<T>, SourceError>,
) -> Result<Vec<T>, SourceError> {
    let mut out = Vec::new();
    let mut page = PageRequest::first(FEDERATION_PAGE);
    loop {
        let batch = fetch(page)?;
        let got = batch.items.len();
        out.extend(batch.items);
        if page.offset + got >= batch.total || got == 0 {
            return Ok(out);
        }
        page = page.next();
    }
}
