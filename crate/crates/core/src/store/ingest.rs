//! File-based metadata ingestion.
//!
//! An ingestion file is a UTF-8 JSON document holding a top-level list of
//! records with keys `urn`, `kind`, `name`, `description`, `customProperties`,
//! and for datasets an `aspect` object (`domainUrn`, `distributionType`,
//! `accessEndpoint`, `authScheme`, `formatHint`, optional `versionTag`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{
    AuthScheme, DatasetAspect, DistributionType, EntityDraft, EntityKind,
};
use super::{MetadataStore, StoreError};
use crate::urn::Urn;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("ingestion file parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("record {index} (`{urn}`): {source}")]
    Record {
        index: usize,
        urn: String,
        source: StoreError,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestRecord {
    pub urn: Urn,
    pub kind: EntityKind,
    pub name: String,
    pub description: String,
    #[serde(rename = "customProperties", default)]
    pub custom_properties: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<IngestAspect>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestAspect {
    #[serde(rename = "domainUrn")]
    pub domain_urn: Urn,
    #[serde(rename = "distributionType")]
    pub distribution_type: DistributionType,
    #[serde(rename = "accessEndpoint")]
    pub access_endpoint: String,
    #[serde(rename = "authScheme")]
    pub auth_scheme: AuthScheme,
    #[serde(rename = "formatHint")]
    pub format_hint: String,
    #[serde(rename = "versionTag", default, skip_serializing_if = "Option::is_none")]
    pub version_tag: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub created: usize,
    pub updated: usize,
}

/// Parse an ingestion file. Errors carry serde's line/column position.
pub fn parse_ingestion_file(text: &str) -> Result<Vec<IngestRecord>, IngestError> {
    Ok(serde_json::from_str(text)?)
}

impl MetadataStore {
    /// Upsert all records, domains before datasets so intra-file parent
    /// references resolve regardless of record order.
    pub fn ingest(&self, records: &[IngestRecord]) -> Result<IngestReport, IngestError> {
        let mut report = IngestReport::default();
        let mut ordered: Vec<(usize, &IngestRecord)> = records.iter().enumerate().collect();
        ordered.sort_by_key(|(idx, r)| (r.kind == EntityKind::Dataset, *idx));
        for (index, record) in ordered {
            let existed = self.get_entity(&record.urn, true).is_ok();
            let aspect = record.aspect.as_ref().map(|a| DatasetAspect {
                dataset_urn: record.urn.clone(),
                domain_urn: a.domain_urn.clone(),
                distribution_type: a.distribution_type,
                access_endpoint: a.access_endpoint.clone(),
                auth_scheme: a.auth_scheme,
                format_hint: a.format_hint.clone(),
                version_tag: a.version_tag.clone(),
            });
            let draft = EntityDraft {
                urn: record.urn.clone(),
                kind: record.kind,
                name: record.name.clone(),
                description: record.description.clone(),
                custom_properties: record.custom_properties.clone(),
            };
            self.upsert_entity(draft, aspect)
                .map_err(|source| IngestError::Record {
                    index,
                    urn: record.urn.to_string(),
                    source,
                })?;
            if existed {
                report.updated += 1;
            } else {
                report.created += 1;
            }
        }
        Ok(report)
    }
}
