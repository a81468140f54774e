//! Property tests over the metadata store: change-feed completeness under
//! random operation sequences, pagination partition, search soundness, urn
//! uniqueness, and federation idempotence.

use std::collections::{BTreeMap, BTreeSet};

use fedspace_core::store::{
    AuthScheme, ChangeKind, DatasetAspect, DistributionType, EntityDraft, EntityKind,
    MetadataStore, PageRequest,
};
use fedspace_core::urn::{Env, Urn};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    UpsertDomain(u8),
    UpsertDataset { ds: u8, domain: u8 },
    DeleteDomain(u8),
    DeleteDataset(u8),
    Lineage { up: u8, down: u8 },
}

fn domain_urn(i: u8) -> Urn {
    Urn::domain(&format!("dom{i}")).unwrap()
}

fn dataset_urn(i: u8) -> Urn {
    Urn::dataset("postgres", &format!("set{i}"), Env::Prod).unwrap()
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..6).prop_map(Op::UpsertDomain),
        (0u8..12, 0u8..6).prop_map(|(ds, domain)| Op::UpsertDataset { ds, domain }),
        (0u8..6).prop_map(Op::DeleteDomain),
        (0u8..12).prop_map(Op::DeleteDataset),
        (0u8..12, 0u8..12).prop_map(|(up, down)| Op::Lineage { up, down }),
    ]
}

fn apply(store: &MetadataStore, op: &Op) {
    // precondition violations are expected along random sequences; the
    // properties only constrain what succeeded
    let _ = match op {
        Op::UpsertDomain(i) => store
            .upsert_entity(
                EntityDraft {
                    urn: domain_urn(*i),
                    kind: EntityKind::Domain,
                    name: format!("domain {i}"),
                    description: String::new(),
                    custom_properties: BTreeMap::new(),
                },
                None,
            )
            .map(|_| ()),
        Op::UpsertDataset { ds, domain } => store
            .upsert_entity(
                EntityDraft {
                    urn: dataset_urn(*ds),
                    kind: EntityKind::Dataset,
                    name: format!("dataset {ds}"),
                    description: format!("belongs to dom{domain}"),
                    custom_properties: BTreeMap::new(),
                },
                Some(DatasetAspect {
                    dataset_urn: dataset_urn(*ds),
                    domain_urn: domain_urn(*domain),
                    distribution_type: DistributionType::HttpPull,
                    access_endpoint: format!("http://end-systems.internal/set{ds}"),
                    auth_scheme: AuthScheme::None,
                    format_hint: "text/csv".to_string(),
                    version_tag: None,
                }),
            )
            .map(|_| ()),
        Op::DeleteDomain(i) => store.delete_entity(&domain_urn(*i)),
        Op::DeleteDataset(i) => store.delete_entity(&dataset_urn(*i)),
        Op::Lineage { up, down } => store.add_lineage_edge(&dataset_urn(*up), &dataset_urn(*down)),
    };
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Replaying the change feed from cursor 0 reconstructs the exact live set.
    #[test]
    fn event_log_replay_reconstructs_live_urns(ops in proptest::collection::vec(op_strategy(), 0..200)) {
        let store = MetadataStore::in_memory("prop");
        for op in &ops {
            apply(&store, op);
        }

        let mut replayed: BTreeSet<Urn> = BTreeSet::new();
        let mut last_seq = 0;
        for event in store.events_since(0) {
            prop_assert!(event.seq_no > last_seq, "seq_no must strictly increase");
            last_seq = event.seq_no;
            match event.kind {
                ChangeKind::Create | ChangeKind::Update => {
                    replayed.insert(event.urn.clone());
                }
                ChangeKind::Delete => {
                    replayed.remove(&event.urn);
                }
            }
        }
        let live: BTreeSet<Urn> = store.live_urns().into_iter().collect();
        prop_assert_eq!(replayed, live);
    }

    /// The union of all pages with any fixed limit is the unpaginated set,
    /// without duplicates.
    #[test]
    fn pagination_partitions_domain_listing(
        ops in proptest::collection::vec(op_strategy(), 0..80),
        limit in 1usize..7,
    ) {
        let store = MetadataStore::in_memory("prop");
        for op in &ops {
            apply(&store, op);
        }
        let full = store.list_domains(PageRequest::new(0, 10_000).unwrap());

        let mut collected = Vec::new();
        let mut page = PageRequest::new(0, limit).unwrap();
        loop {
            let batch = store.list_domains(page);
            if batch.items.is_empty() {
                break;
            }
            collected.extend(batch.items);
            page = page.next();
        }
        prop_assert_eq!(collected.len(), full.items.len());
        let urns: BTreeSet<_> = collected.iter().map(|r| r.urn.clone()).collect();
        prop_assert_eq!(urns.len(), full.items.len(), "no duplicates across pages");
        prop_assert_eq!(collected, full.items);
    }

    /// Every search hit contains the query case-insensitively in a searched field.
    #[test]
    fn search_is_sound(
        ops in proptest::collection::vec(op_strategy(), 0..80),
        query in "[a-z]{1,6}",
    ) {
        let store = MetadataStore::in_memory("prop");
        for op in &ops {
            apply(&store, op);
        }
        let hits = store
            .search_datasets(&query, PageRequest::new(0, 10_000).unwrap())
            .unwrap();
        let needle = query.to_lowercase();
        for hit in hits.items {
            let found = hit.name.to_lowercase().contains(&needle)
                || hit.description.to_lowercase().contains(&needle)
                || hit.custom_properties.values().any(|v| v.to_lowercase().contains(&needle));
            prop_assert!(found, "{} does not contain {query}", hit.urn);
        }
    }

    /// No two live entities ever share a urn.
    #[test]
    fn live_urns_stay_unique(ops in proptest::collection::vec(op_strategy(), 0..120)) {
        let store = MetadataStore::in_memory("prop");
        for op in &ops {
            apply(&store, op);
        }
        let urns = store.live_urns();
        let unique: BTreeSet<_> = urns.iter().cloned().collect();
        prop_assert_eq!(unique.len(), urns.len());
    }

    /// Pulling an unchanged source twice equals pulling it once.
    #[test]
    fn federation_is_idempotent(ops in proptest::collection::vec(op_strategy(), 0..60)) {
        let source = MetadataStore::in_memory("src");
        for op in &ops {
            apply(&source, op);
        }
        let fed = MetadataStore::in_memory("fed");
        fed.federate_pull(&source).unwrap();
        let state_once = fed.live_urns();
        let seq_once = fed.latest_seq();

        let again = fed.federate_pull(&source).unwrap();
        prop_assert_eq!(again.created, 0);
        prop_assert_eq!(again.updated, 0);
        prop_assert_eq!(again.conflicts, 0);
        prop_assert_eq!(fed.live_urns(), state_once);
        prop_assert_eq!(fed.latest_seq(), seq_once);
    }

    /// parse(render(u)) == u over generated urns.
    #[test]
    fn urn_roundtrip(
        platform in "[a-zA-Z0-9_.:-]{1,12}",
        name in "[a-zA-Z0-9_.:-]{1,16}",
        env_pick in 0u8..3,
        domain in "[a-zA-Z0-9_.:-]{1,16}",
    ) {
        let env = [Env::Prod, Env::Dev, Env::Test][env_pick as usize];
        let ds = Urn::dataset(&platform, &name, env).unwrap();
        prop_assert_eq!(Urn::parse(ds.as_str()).unwrap(), ds);
        let dom = Urn::domain(&domain).unwrap();
        prop_assert_eq!(Urn::parse(dom.as_str()).unwrap(), dom);
    }
}
