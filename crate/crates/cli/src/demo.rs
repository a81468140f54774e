//! The end-to-end demo scenario: two source stores and one federating
//! provider on loopback; ingest, federate, expose via DCAT, create a policy,
//! negotiate, transfer, and verify the fetched bytes against the fixture.

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use fedspace_connector::client::ProviderClient;
use fedspace_connector::{ConnectorConfig, ConnectorRole};
use fedspace_core::negotiation::NegotiationState;
use fedspace_core::odrl::{Action, PolicyDocument, PolicyKind, RuleDocument};
use fedspace_core::store::{parse_ingestion_file, EntityKind};

use crate::output::Failure;

struct Service {
    name: &'static str,
    child: Child,
    base: String,
}

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn free_port() -> Result<u16, Failure> {
    let listener = TcpListener::bind("127.0.0.1:0")
        .map_err(|e| Failure::connectivity(format!("cannot probe free port: {e}")))?;
    Ok(listener
        .local_addr()
        .map_err(|e| Failure::connectivity(e.to_string()))?
        .port())
}

fn spawn_service(
    name: &'static str,
    work_dir: &Path,
    admin_token: &str,
    serve_files_dir: Option<&Path>,
) -> Result<Service, Failure> {
    let port = free_port()?;
    let config = ConnectorConfig {
        role: ConnectorRole::Provider,
        listen_address: format!("127.0.0.1:{port}"),
        participant_id: name.to_string(),
        data_dir: work_dir.join(name).join("data"),
        admin_token: admin_token.to_string(),
        serve_files_dir: serve_files_dir.map(|p| p.to_path_buf()),
        ..ConnectorConfig::default()
    };
    let config_path = work_dir.join(format!("{name}.toml"));
    std::fs::create_dir_all(work_dir).map_err(|e| Failure::usage(e.to_string()))?;
    std::fs::write(&config_path, toml::to_string(&config).expect("config serializes"))
        .map_err(|e| Failure::usage(e.to_string()))?;

    let log = std::fs::File::create(work_dir.join(format!("{name}.log")))
        .map_err(|e| Failure::usage(e.to_string()))?;
    let exe = std::env::current_exe().map_err(|e| Failure::usage(e.to_string()))?;
    let child = Command::new(exe)
        .arg("serve")
        .arg("--config")
        .arg(&config_path)
        .stdout(Stdio::null())
        .stderr(Stdio::from(log))
        .spawn()
        .map_err(|e| Failure::connectivity(format!("cannot spawn {name}: {e}")))?;
    Ok(Service {
        name,
        child,
        base: format!("http://127.0.0.1:{port}"),
    })
}

fn wait_healthy(service: &Service) -> Result<(), Failure> {
    let client = ProviderClient::new(&service.base);
    let deadline = Instant::now() + Duration::from_secs(15);
    while Instant::now() < deadline {
        if client.healthy() {
            return Ok(());
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    Err(Failure::connectivity(format!(
        "{} did not become healthy at {}",
        service.name, service.base
    )))
}

pub fn run_demo(fixtures: &Path, admin_token: &str, json: bool) -> Result<(), Failure> {
    let result = run_demo_inner(fixtures, admin_token, json);
    match &result {
        Ok(()) => println!("PASS"),
        Err(failure) => println!("FAIL: {}", failure.message),
    }
    result
}

fn read_fixture(fixtures: &Path, relative: &str) -> Result<String, Failure> {
    let path = fixtures.join(relative);
    std::fs::read_to_string(&path)
        .map_err(|e| Failure::usage(format!("cannot read fixture {}: {e}", path.display())))
}

fn run_demo_inner(fixtures: &Path, admin_token: &str, json: bool) -> Result<(), Failure> {
    let fixtures: PathBuf = fixtures
        .canonicalize()
        .map_err(|e| Failure::usage(format!("fixtures dir {}: {e}", fixtures.display())))?;
    let catalog_a = read_fixture(&fixtures, "catalog_a/ingestion.json")?;
    let catalog_b = read_fixture(&fixtures, "catalog_b/ingestion.json")?;

    let work = tempfile::tempdir().map_err(|e| Failure::usage(e.to_string()))?;
    println!("[demo] work dir {}", work.path().display());

    let source_a = spawn_service("source-a", work.path(), admin_token, None)?;
    let source_b = spawn_service("source-b", work.path(), admin_token, None)?;
    let provider = spawn_service("provider", work.path(), admin_token, Some(&fixtures.join("data")))?;
    for service in [&source_a, &source_b, &provider] {
        wait_healthy(service)?;
        println!("[demo] {} up at {}", service.name, service.base);
    }

    let a = ProviderClient::new(&source_a.base).with_admin_token(admin_token);
    let b = ProviderClient::new(&source_b.base).with_admin_token(admin_token);
    let p = ProviderClient::new(&provider.base).with_admin_token(admin_token);

    let ra = a.ingest(&catalog_a).map_err(|e| Failure::connectivity(e.to_string()))?;
    let rb = b.ingest(&catalog_b).map_err(|e| Failure::connectivity(e.to_string()))?;
    println!("[demo] ingested catalog_a into source-a: {ra}");
    println!("[demo] ingested catalog_b into source-b: {rb}");

    let fa = p.federate(&source_a.base).map_err(|e| Failure::connectivity(e.to_string()))?;
    let fb = p.federate(&source_b.base).map_err(|e| Failure::connectivity(e.to_string()))?;
    println!("[demo] federated source-a: {fa}");
    println!("[demo] federated source-b: {fb}");

    let catalog = p
        .fetch_catalog(None)
        .map_err(|e| Failure::connectivity(e.to_string()))?;
    let catalogs = catalog["dcat:catalog"].as_array().cloned().unwrap_or_default();
    let dataset_count: usize = catalogs
        .iter()
        .map(|c| c["dcat:dataset"].as_array().map(|a| a.len()).unwrap_or(0))
        .sum();
    println!(
        "[demo] provider DCAT endpoint exposes {} catalogs with {} datasets",
        catalogs.len(),
        dataset_count
    );
    if catalogs.len() != 2 || dataset_count != 7 {
        return Err(Failure::usage(format!(
            "expected 2 catalogs with 7 datasets, found {} with {dataset_count}",
            catalogs.len()
        )));
    }

    // the demo negotiates the first dataset of catalog_a
    let records = parse_ingestion_file(&catalog_a).map_err(|e| Failure::usage(e.to_string()))?;
    let dataset = records
        .iter()
        .find(|r| r.kind == EntityKind::Dataset)
        .ok_or_else(|| Failure::usage("catalog_a fixture has no dataset"))?;
    let data_file = dataset
        .custom_properties
        .get("dataFile")
        .ok_or_else(|| Failure::usage("fixture dataset has no dataFile property"))?;
    let expected_bytes = std::fs::read(fixtures.join("data").join(data_file))
        .map_err(|e| Failure::usage(format!("cannot read expected data file: {e}")))?;

    let offer = PolicyDocument {
        uid: None,
        kind: PolicyKind::Offer,
        target: dataset.urn.clone(),
        assigner: None,
        assignee: None,
        permissions: vec![RuleDocument {
            action: Action::Use,
            constraints: vec![],
        }],
        prohibitions: vec![],
        obligations: vec![],
    };
    let created = p
        .create_policy(&offer)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let offer_uid = created["uid"]
        .as_str()
        .ok_or_else(|| Failure::usage("policy response has no uid"))?
        .to_string();
    println!("[demo] created offer {offer_uid} on {}", dataset.urn);

    let consumer = fedspace_core::negotiation::ConsumerEngine::new("demo-consumer");
    let negotiation = ProviderClient::new(&provider.base)
        .negotiate(&consumer, &offer_uid, "http://consumer.invalid/callback")
        .map_err(|e| Failure::protocol(e.to_string()))?;
    if negotiation.state != NegotiationState::Finalized {
        return Err(Failure::protocol(format!(
            "negotiation ended {:?}: {}",
            negotiation.state,
            negotiation.termination_reason.unwrap_or_default()
        )));
    }
    let agreement_uid = negotiation.agreement_uid.clone().unwrap_or_default();
    println!("[demo] negotiation FINALIZED, agreement {agreement_uid}");

    let outcome = ProviderClient::new(&provider.base)
        .transfer(&agreement_uid, &dataset.aspect.as_ref().unwrap().format_hint, "http://consumer.invalid/callback")
        .map_err(|e| Failure::protocol(e.to_string()))?;
    let bytes = outcome
        .bytes
        .ok_or_else(|| Failure::protocol(format!(
            "transfer ended {} without data: {}",
            outcome.process.state,
            outcome.process.reason.unwrap_or_default()
        )))?;
    println!(
        "[demo] transfer {} {}, fetched {} bytes",
        outcome.process.transfer_id,
        outcome.process.state,
        bytes.len()
    );

    if bytes != expected_bytes {
        return Err(Failure::usage(format!(
            "fetched bytes ({}) differ from fixture {} ({})",
            bytes.len(),
            data_file,
            expected_bytes.len()
        )));
    }
    println!("[demo] fetched bytes are byte-identical to fixture {data_file}");

    if json {
        println!(
            "{}",
            serde_json::json!({
                "result": "PASS",
                "catalogs": catalogs.len(),
                "datasets": dataset_count,
                "offer": offer_uid,
                "agreement": agreement_uid,
                "transfer": outcome.process.transfer_id,
                "bytes": bytes.len(),
            })
        );
    }
    Ok(())
}
