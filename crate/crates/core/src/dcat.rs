//! Typed DCAT3 catalog profile: Catalog, Dataset, Distribution, DataService,
//! with deterministic serialization, lenient deserialization, and validation.
//!
//! The wire vocabulary is a closed, flat JSON profile (`@context`, `@type`,
//! `dct:*`, `dcat:*` keys); unknown incoming keys are tolerated and reported
//! as warnings.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::urn::{Urn, UrnKind};

/// Fixed linked-data context emitted on every catalog document.
pub const DCAT_CONTEXT: &str = "https://www.w3.org/ns/dcat#";

pub const TYPE_CATALOG: &str = "dcat:Catalog";
pub const TYPE_DATASET: &str = "dcat:Dataset";
pub const TYPE_DISTRIBUTION: &str = "dcat:Distribution";
pub const TYPE_DATA_SERVICE: &str = "dcat:DataService";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcatCatalog {
    pub id: Urn,
    pub title: String,
    pub description: String,
    pub datasets: Vec<DcatDataset>,
    pub services: Vec<DcatDataService>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcatDataset {
    pub id: Urn,
    pub title: String,
    pub description: String,
    pub version: Option<String>,
    pub distributions: Vec<DcatDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcatDistribution {
    pub format: String,
    pub access_service_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcatDataService {
    pub id: String,
    pub endpoint_url: String,
    pub endpoint_description: String,
}

/// One broken invariant, naming the offending id and the rule it breaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.subject, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum DcatError {
    #[error("catalog violates invariants: {}", format_violations(.0))]
    InvariantViolation(Vec<Violation>),
    #[error("document is not well-formed: {0}")]
    ParseError(String),
    #[error("document shape error: {0}")]
    SchemaError(String),
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Check all catalog invariants; empty result means the catalog serializes.
pub fn validate_catalog(catalog: &DcatCatalog) -> Vec<Violation> {
    let mut violations = Vec::new();
    if catalog.id.kind() != UrnKind::Domain {
        violations.push(Violation {
            subject: catalog.id.to_string(),
            rule: "catalog id must be a domain urn".to_string(),
        });
    }
    let mut seen_datasets = HashSet::new();
    for dataset in &catalog.datasets {
        if !seen_datasets.insert(dataset.id.clone()) {
            violations.push(Violation {
                subject: dataset.id.to_string(),
                rule: "duplicate dataset id within catalog".to_string(),
            });
        }
        if dataset.id.kind() != UrnKind::Dataset {
            violations.push(Violation {
                subject: dataset.id.to_string(),
                rule: "dataset id must be a dataset urn".to_string(),
            });
        }
        for dist in &dataset.distributions {
            if dist.format.is_empty() {
                violations.push(Violation {
                    subject: dataset.id.to_string(),
                    rule: "distribution format must be non-empty".to_string(),
                });
            }
            if !catalog.services.iter().any(|s| s.id == dist.access_service_id) {
                violations.push(Violation {
                    subject: dist.access_service_id.clone(),
                    rule: "distribution references a service absent from the catalog".to_string(),
                });
            }
        }
    }
    let mut seen_services = HashSet::new();
    for service in &catalog.services {
        if !seen_services.insert(service.id.clone()) {
            violations.push(Violation {
                subject: service.id.clone(),
                rule: "duplicate data service id within catalog".to_string(),
            });
        }
        if url::Url::parse(&service.endpoint_url).is_err() {
            violations.push(Violation {
                subject: service.id.clone(),
                rule: format!("endpoint_url `{}` is not an absolute URL", service.endpoint_url),
            });
        }
    }
    violations
}

/// Serialize a valid catalog to its deterministic document form (stable key
/// order, so equal values always yield byte-identical output).
pub fn serialize_catalog(catalog: &DcatCatalog) -> Result<String, DcatError> {
    let violations = validate_catalog(catalog);
    if !violations.is_empty() {
        return Err(DcatError::InvariantViolation(violations));
    }
    let wire = wire::WireCatalog::from_catalog(catalog);
    serde_json::to_string_pretty(&wire).map_err(|e| DcatError::ParseError(e.to_string()))
}

/// Parse a catalog document. Unknown keys are skipped and reported in the
/// returned warning list.
pub fn deserialize_catalog(document: &str) -> Result<(DcatCatalog, Vec<String>), DcatError> {
    let value: serde_json::Value =
        serde_json::from_str(document).map_err(|e| DcatError::ParseError(e.to_string()))?;
    let wire: wire::WireCatalog =
        serde_json::from_value(value).map_err(|e| DcatError::SchemaError(e.to_string()))?;
    wire.into_catalog()
}

mod wire {
    use super::*;

    type Extra = BTreeMap<String, serde_json::Value>;

    #[derive(Serialize, Deserialize)]
    pub(super) struct WireCatalog {
        #[serde(rename = "@context")]
        context: String,
        #[serde(rename = "@type")]
        type_tag: String,
        #[serde(rename = "dct:identifier")]
        identifier: String,
        #[serde(rename = "dct:title")]
        title: String,
        #[serde(rename = "dct:description")]
        description: String,
        #[serde(rename = "dcat:dataset")]
        datasets: Vec<WireDataset>,
        #[serde(rename = "dcat:service")]
        services: Vec<WireService>,
        #[serde(flatten)]
        extra: Extra,
    }

    #[derive(Serialize, Deserialize)]
    struct WireDataset {
        #[serde(rename = "@type")]
        type_tag: String,
        #[serde(rename = "dct:identifier")]
        identifier: String,
        #[serde(rename = "dct:title")]
        title: String,
        #[serde(rename = "dct:description")]
        description: String,
        #[serde(rename = "dcat:version", default, skip_serializing_if = "Option::is_none")]
        version: Option<String>,
        #[serde(rename = "dcat:distribution")]
        distributions: Vec<WireDistribution>,
        #[serde(flatten)]
        extra: Extra,
    }

    #[derive(Serialize, Deserialize)]
    struct WireDistribution {
        #[serde(rename = "@type")]
        type_tag: String,
        #[serde(rename = "dct:format")]
        format: String,
        #[serde(rename = "dcat:accessService")]
        access_service: String,
        #[serde(flatten)]
        extra: Extra,
    }

    #[derive(Serialize, Deserialize)]
    struct WireService {
        #[serde(rename = "@type")]
        type_tag: String,
        #[serde(rename = "dct:identifier")]
        identifier: String,
        #[serde(rename = "dcat:endpointURL")]
        endpoint_url: String,
        #[serde(rename = "dcat:endpointDescription")]
        endpoint_description: String,
        #[serde(flatten)]
        extra: Extra,
    }

    impl WireCatalog {
        pub(super) fn from_catalog(c: &DcatCatalog) -> WireCatalog {
            WireCatalog {
                context: DCAT_CONTEXT.to_string(),
                type_tag: TYPE_CATALOG.to_string(),
                identifier: c.id.to_string(),
                title: c.title.clone(),
                description: c.description.clone(),
                datasets: c
                    .datasets
                    .iter()
                    .map(|d| WireDataset {
                        type_tag: TYPE_DATASET.to_string(),
                        identifier: d.id.to_string(),
                        title: d.title.clone(),
                        description: d.description.clone(),
                        version: d.version.clone(),
                        distributions: d
                            .distributions
                            .iter()
                            .map(|dist| WireDistribution {
                                type_tag: TYPE_DISTRIBUTION.to_string(),
                                format: dist.format.clone(),
                                access_service: dist.access_service_id.clone(),
                                extra: Extra::new(),
                            })
                            .collect(),
                        extra: Extra::new(),
                    })
                    .collect(),
                services: c
                    .services
                    .iter()
                    .map(|s| WireService {
                        type_tag: TYPE_DATA_SERVICE.to_string(),
                        identifier: s.id.clone(),
                        endpoint_url: s.endpoint_url.clone(),
                        endpoint_description: s.endpoint_description.clone(),
                        extra: Extra::new(),
                    })
                    .collect(),
                extra: Extra::new(),
            }
        }

        pub(super) fn into_catalog(self) -> Result<(DcatCatalog, Vec<String>), DcatError> {
            let mut warnings = Vec::new();
            expect_type(&self.type_tag, TYPE_CATALOG, "catalog")?;
            if self.context != DCAT_CONTEXT {
                warnings.push(format!("unexpected @context `{}`", self.context));
            }
            collect_extra(&self.extra, "catalog", &mut warnings);
            let id = parse_urn(&self.identifier, "catalog")?;

            let mut datasets = Vec::with_capacity(self.datasets.len());
            for d in self.datasets {
                expect_type(&d.type_tag, TYPE_DATASET, "dataset")?;
                collect_extra(&d.extra, &format!("dataset {}", d.identifier), &mut warnings);
                let mut distributions = Vec::with_capacity(d.distributions.len());
                for dist in d.distributions {
                    expect_type(&dist.type_tag, TYPE_DISTRIBUTION, "distribution")?;
                    collect_extra(
                        &dist.extra,
                        &format!("distribution of {}", d.identifier),
                        &mut warnings,
                    );
                    distributions.push(DcatDistribution {
                        format: dist.format,
                        access_service_id: dist.access_service,
                    });
                }
                datasets.push(DcatDataset {
                    id: parse_urn(&d.identifier, "dataset")?,
                    title: d.title,
                    description: d.description,
                    version: d.version,
                    distributions,
                });
            }

            let mut services = Vec::with_capacity(self.services.len());
            for s in self.services {
                expect_type(&s.type_tag, TYPE_DATA_SERVICE, "data service")?;
                collect_extra(&s.extra, &format!("service {}", s.identifier), &mut warnings);
                services.push(DcatDataService {
                    id: s.identifier,
                    endpoint_url: s.endpoint_url,
                    endpoint_description: s.endpoint_description,
                });
            }

            Ok((
                DcatCatalog {
                    id,
                    title: self.title,
                    description: self.description,
                    datasets,
                    services,
                },
                warnings,
            ))
        }
    }

    fn expect_type(actual: &str, expected: &str, what: &str) -> Result<(), DcatError> {
        if actual == expected {
            Ok(())
        } else {
            Err(DcatError::SchemaError(format!(
                "{what} @type must be `{expected}`, got `{actual}`"
            )))
        }
    }

    fn parse_urn(text: &str, what: &str) -> Result<Urn, DcatError> {
        Urn::parse(text)
            .map_err(|e| DcatError::SchemaError(format!("{what} identifier: {e}")))
    }

    fn collect_extra(extra: &Extra, at: &str, warnings: &mut Vec<String>) {
        for key in extra.keys() {
            warnings.push(format!("unknown key `{key}` on {at}"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urn::Env;

    fn sample_catalog() -> DcatCatalog {
        let ds_urn = Urn::dataset("postgres", "city.traffic", Env::Prod).unwrap();
        DcatCatalog {
            id: Urn::domain("mobility").unwrap(),
            title: "Mobility".to_string(),
            description: "City mobility catalog".to_string(),
            datasets: vec![DcatDataset {
                id: ds_urn.clone(),
                title: "Traffic".to_string(),
                description: "Traffic counts".to_string(),
                version: Some("v2".to_string()),
                distributions: vec![DcatDistribution {
                    format: "text/csv".to_string(),
                    access_service_id: format!("{ds_urn}#access"),
                }],
            }],
            services: vec![DcatDataService {
                id: format!("{ds_urn}#access"),
                endpoint_url: "http://end-systems.internal/traffic".to_string(),
                endpoint_description: "HTTP_PULL endpoint (auth: BEARER)".to_string(),
            }],
        }
    }

    #[test]
    fn empty_catalog_serializes_with_empty_dataset_list() {
        let catalog = DcatCatalog {
            id: Urn::domain("empty").unwrap(),
            title: "Empty".to_string(),
            description: String::new(),
            datasets: vec![],
            services: vec![],
        };
        let doc = serialize_catalog(&catalog).unwrap();
        assert!(doc.contains("\"dcat:dataset\": []"));
        assert!(doc.contains(DCAT_CONTEXT));
    }

    #[test]
    fn round_trip_identity() {
        let catalog = sample_catalog();
        let doc = serialize_catalog(&catalog).unwrap();
        let (back, warnings) = deserialize_catalog(&doc).unwrap();
        assert_eq!(back, catalog);
        assert!(warnings.is_empty());
    }

    #[test]
    fn serialization_is_deterministic() {
        let catalog = sample_catalog();
        assert_eq!(
            serialize_catalog(&catalog).unwrap(),
            serialize_catalog(&catalog).unwrap()
        );
    }

    #[test]
    fn dangling_service_reference_fails_serialization() {
        let mut catalog = sample_catalog();
        catalog.services.clear();
        let err = serialize_catalog(&catalog).unwrap_err();
        assert!(matches!(err, DcatError::InvariantViolation(_)));
        assert!(!validate_catalog(&catalog).is_empty());
    }

    #[test]
    fn missing_type_on_dataset_is_schema_error() {
        let catalog = sample_catalog();
        let doc = serialize_catalog(&catalog).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&doc).unwrap();
        value["dcat:dataset"][0].as_object_mut().unwrap().remove("@type");
        let err = deserialize_catalog(&value.to_string()).unwrap_err();
        assert!(matches!(err, DcatError::SchemaError(_)));
    }

    #[test]
    fn vendor_keys_become_warnings() {
        let catalog = sample_catalog();
        let doc = serialize_catalog(&catalog).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&doc).unwrap();
        value["x:vendor"] = serde_json::json!("extension");
        value["dcat:dataset"][0]["x:rating"] = serde_json::json!(5);
        let (back, warnings) = deserialize_catalog(&value.to_string()).unwrap();
        assert_eq!(back, catalog);
        assert_eq!(warnings.len(), 2);
        assert!(warnings.iter().any(|w| w.contains("x:vendor")));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            deserialize_catalog("{not json"),
            Err(DcatError::ParseError(_))
        ));
    }

    #[test]
    fn validate_names_duplicate_dataset_ids() {
        let mut catalog = sample_catalog();
        catalog.datasets.push(catalog.datasets[0].clone());
        let violations = validate_catalog(&catalog);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].subject.contains("city.traffic"));
    }

    #[test]
    fn validate_names_bad_endpoint_url() {
        let mut catalog = sample_catalog();
        catalog.services[0].endpoint_url = "not-a-url".to_string();
        let violations = validate_catalog(&catalog);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].rule.contains("absolute URL"));
    }
}
