//! Records, aspects, events, and paging primitives of the metadata graph.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::urn::{Urn, UrnKind};

/// Entity classification inside the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityKind {
    #[serde(rename = "DOMAIN")]
    Domain,
    #[serde(rename = "DATASET")]
    Dataset,
}

impl EntityKind {
    pub fn matches(self, kind: UrnKind) -> bool {
        matches!(
            (self, kind),
            (EntityKind::Domain, UrnKind::Domain) | (EntityKind::Dataset, UrnKind::Dataset)
        )
    }
}

/// How a dataset's bytes are handed out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistributionType {
    #[serde(rename = "HTTP_PULL")]
    HttpPull,
    #[serde(rename = "HTTP_PUSH")]
    HttpPush,
}

/// Authentication expected by a dataset's access endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuthScheme {
    #[serde(rename = "NONE")]
    None,
    #[serde(rename = "BEARER")]
    Bearer,
}

/// A node in the metadata graph: a domain or a dataset with key-value aspects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub urn: Urn,
    pub kind: EntityKind,
    pub name: String,
    pub description: String,
    pub custom_properties: BTreeMap<String, String>,
    pub source_catalog_id: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub deleted: bool,
}

/// Caller-supplied part of an upsert; the store fills in provenance and timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDraft {
    pub urn: Urn,
    pub kind: EntityKind,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub custom_properties: BTreeMap<String, String>,
}

/// Operational metadata attached to a dataset entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAspect {
    pub dataset_urn: Urn,
    pub domain_urn: Urn,
    pub distribution_type: DistributionType,
    pub access_endpoint: String,
    pub auth_scheme: AuthScheme,
    pub format_hint: String,
    #[serde(default)]
    pub version_tag: Option<String>,
}

/// Directed provenance relation between two datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEdge {
    pub upstream: Urn,
    pub downstream: Urn,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineageDirection {
    #[serde(rename = "UPSTREAM")]
    Upstream,
    #[serde(rename = "DOWNSTREAM")]
    Downstream,
}

/// What a mutation did to an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChangeKind {
    #[serde(rename = "CREATE")]
    Create,
    #[serde(rename = "UPDATE")]
    Update,
    #[serde(rename = "DELETE")]
    Delete,
}

/// One entry of the store's ordered change feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub seq_no: u64,
    pub urn: Urn,
    pub kind: ChangeKind,
    pub at: DateTime<Utc>,
}

/// Offset/limit window over an ordered listing. `limit` is non-zero by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageRequest {
    pub offset: usize,
    pub limit: NonZeroUsize,
}

impl PageRequest {
    pub fn new(offset: usize, limit: usize) -> Option<PageRequest> {
        NonZeroUsize::new(limit).map(|limit| PageRequest { offset, limit })
    }

    /// First page with the given size; size 0 is clamped to 1.
    pub fn first(limit: usize) -> PageRequest {
        PageRequest {
            offset: 0,
            limit: NonZeroUsize::new(limit.max(1)).unwrap(),
        }
    }

    pub fn next(self) -> PageRequest {
        PageRequest {
            offset: self.offset + self.limit.get(),
            limit: self.limit,
        }
    }
}

/// One window of results plus the total size of the filtered listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub offset: usize,
    pub total: usize,
}

impl<T> Page<T> {
    pub(crate) fn slice(all: Vec<T>, page: PageRequest) -> Page<T> {
        let total = all.len();
        let items = all
            .into_iter()
            .skip(page.offset)
            .take(page.limit.get())
            .collect();
        Page {
            items,
            offset: page.offset,
            total,
        }
    }
}

/// Full view of a dataset: record, aspect if any, and lineage degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDetail {
    pub record: EntityRecord,
    pub aspect: Option<DatasetAspect>,
    pub upstream_count: usize,
    pub downstream_count: usize,
}

/// Outcome of one federation pull. The four counters partition the
/// entities seen in the source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FederationReport {
    pub created: usize,
    pub updated: usize,
    pub unchanged: usize,
    pub conflicts: usize,
}
