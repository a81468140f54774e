//! DCAT round-trip properties over randomly generated valid catalogs, and a
//! field-by-field check of the facade mapping against an independent
//! straight-line mapping over the same store contents.

use std::collections::BTreeMap;
use std::sync::Arc;

use fedspace_core::dcat::{
    deserialize_catalog, serialize_catalog, validate_catalog, DcatCatalog, DcatDataService,
    DcatDataset, DcatDistribution,
};
use fedspace_core::facade::{Facade, FacadeConfig, LocalStoreClient};
use fedspace_core::store::{
    AuthScheme, DatasetAspect, DistributionType, EntityDraft, EntityKind, MetadataStore,
    PageRequest,
};
use fedspace_core::urn::{Env, Urn};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    // printable plus a few non-ascii codepoints to exercise JSON escaping
    proptest::string::string_regex("[ -~àéœ☂0-9]{0,18}").unwrap()
}

fn catalog_strategy() -> impl Strategy<Value = DcatCatalog> {
    let service = (0usize..100, text()).prop_map(|(port, desc)| DcatDataService {
        id: String::new(), // filled below with a unique id
        endpoint_url: format!("http://end-systems.internal:{}/data", 1000 + port),
        endpoint_description: desc,
    });
    let services = proptest::collection::vec(service, 0..4);
    let dataset_seed = (
        text(),
        text(),
        proptest::option::of("[a-z0-9.]{1,6}"),
        proptest::collection::vec(("[a-z]{1,8}/[a-z]{1,8}", 0usize..4), 0..3),
    );
    let datasets = proptest::collection::vec(dataset_seed, 0..5);
    ("[a-z]{1,10}", text(), text(), datasets, services).prop_map(
        |(domain, title, description, dataset_seeds, mut services)| {
            for (j, service) in services.iter_mut().enumerate() {
                service.id = format!("svc-{j}");
            }
            let datasets = dataset_seeds
                .into_iter()
                .enumerate()
                .map(|(i, (title, description, version, dists))| DcatDataset {
                    id: Urn::dataset("postgres", &format!("set{i}"), Env::Prod).unwrap(),
                    title,
                    description,
                    version,
                    distributions: if services.is_empty() {
                        vec![]
                    } else {
                        dists
                            .into_iter()
                            .map(|(format, pick)| DcatDistribution {
                                format,
                                access_service_id: services[pick % services.len()].id.clone(),
                            })
                            .collect()
                    },
                })
                .collect();
            DcatCatalog {
                id: Urn::domain(&domain).unwrap(),
                title,
                description,
                datasets,
                services,
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn serialize_deserialize_is_identity(catalog in catalog_strategy()) {
        prop_assert!(validate_catalog(&catalog).is_empty());
        let doc = serialize_catalog(&catalog).unwrap();
        let (back, warnings) = deserialize_catalog(&doc).unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(back, catalog.clone());
        // determinism: byte-identical on repeat
        prop_assert_eq!(serialize_catalog(&catalog).unwrap(), doc);
    }
}

// ---------------------------------------------------------------------------
// Facade mapping against an independent straight-line mapping.

/// The expected mapping, written as a flat transcription of the mapping table,
/// reading the store directly rather than going through the facade.
fn straight_line_map(store: &MetadataStore, domain: &Urn) -> DcatCatalog {
    let record = store.get_entity(domain, false).unwrap();
    let page = PageRequest::new(0, 10_000).unwrap();
    let mut datasets = Vec::new();
    let mut services = Vec::new();
    for (entity, aspect) in store.list_datasets_in_domain(domain, page).unwrap().items {
        let service_id = format!("{}#access", entity.urn);
        datasets.push(DcatDataset {
            id: entity.urn.clone(),
            title: entity.name.clone(),
            description: entity.description.clone(),
            version: aspect.version_tag.clone(),
            distributions: vec![DcatDistribution {
                format: aspect.format_hint.clone(),
                access_service_id: service_id.clone(),
            }],
        });
        let dist = match aspect.distribution_type {
            DistributionType::HttpPull => "HTTP_PULL",
            DistributionType::HttpPush => "HTTP_PUSH",
        };
        let auth = match aspect.auth_scheme {
            AuthScheme::None => "NONE",
            AuthScheme::Bearer => "BEARER",
        };
        services.push(DcatDataService {
            id: service_id,
            endpoint_url: aspect.access_endpoint.clone(),
            endpoint_description: format!("{dist} endpoint (auth: {auth})"),
        });
    }
    DcatCatalog {
        id: record.urn,
        title: record.name,
        description: record.description,
        datasets,
        services,
    }
}

#[derive(Debug, Clone)]
struct SeedDataset {
    name: String,
    domain: u8,
    format: String,
    version: Option<String>,
    auth: bool,
}

fn seed_strategy() -> impl Strategy<Value = (u8, Vec<SeedDataset>)> {
    let dataset = (
        "[a-z]{1,8}",
        0u8..3,
        "[a-z]{1,6}/[a-z]{1,6}",
        proptest::option::of("[0-9].[0-9]"),
        any::<bool>(),
    )
        .prop_map(|(name, domain, format, version, auth)| SeedDataset {
            name,
            domain,
            format,
            version,
            auth,
        });
    (1u8..4, proptest::collection::vec(dataset, 0..8))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn facade_mapping_matches_straight_line_mapping((n_domains, seeds) in seed_strategy()) {
        let store = Arc::new(MetadataStore::in_memory("map"));
        for d in 0..n_domains {
            store
                .upsert_entity(
                    EntityDraft {
                        urn: Urn::domain(&format!("dom{d}")).unwrap(),
                        kind: EntityKind::Domain,
                        name: format!("Domain {d}"),
                        description: format!("domain number {d}"),
                        custom_properties: BTreeMap::new(),
                    },
                    None,
                )
                .unwrap();
        }
        for (i, seed) in seeds.iter().enumerate() {
            let domain = seed.domain % n_domains;
            let urn = Urn::dataset("postgres", &format!("{}.{i}", seed.name), Env::Prod).unwrap();
            store
                .upsert_entity(
                    EntityDraft {
                        urn: urn.clone(),
                        kind: EntityKind::Dataset,
                        name: seed.name.clone(),
                        description: format!("dataset {i}"),
                        custom_properties: BTreeMap::new(),
                    },
                    Some(DatasetAspect {
                        dataset_urn: urn,
                        domain_urn: Urn::domain(&format!("dom{domain}")).unwrap(),
                        distribution_type: DistributionType::HttpPull,
                        access_endpoint: format!("http://end-systems.internal/{i}"),
                        auth_scheme: if seed.auth { AuthScheme::Bearer } else { AuthScheme::None },
                        format_hint: seed.format.clone(),
                        version_tag: seed.version.clone(),
                    }),
                )
                .unwrap();
        }

        let facade = Facade::new(
            FacadeConfig::default(),
            Arc::new(LocalStoreClient::new(store.clone())),
        );
        let token = facade.authenticate("facade-client", "facade-secret").unwrap();

        for d in 0..n_domains {
            let domain = Urn::domain(&format!("dom{d}")).unwrap();
            let mapped = facade.to_dcat(&token.token, &domain).unwrap();
            // always valid
            prop_assert!(validate_catalog(&mapped).is_empty());
            // field-by-field equal to the independent mapping
            let expected = straight_line_map(&store, &domain);
            prop_assert_eq!(&mapped, &expected);
            // totality: every live dataset with an aspect in this domain
            // appears exactly once, and nothing else does
            let in_domain: Vec<Urn> = store
                .list_datasets_in_domain(&domain, PageRequest::new(0, 10_000).unwrap())
                .unwrap()
                .items
                .into_iter()
                .map(|(r, _)| r.urn)
                .collect();
            let mapped_ids: Vec<Urn> = mapped.datasets.iter().map(|ds| ds.id.clone()).collect();
            prop_assert_eq!(mapped_ids, in_domain);
        }
    }
}
