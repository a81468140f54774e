//! CLI behavior: exit codes per failure class and `--json` output that
//! round-trips through the module types.

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use fedspace_connector::client::ProviderClient;
use fedspace_connector::{ConnectorConfig, ConnectorRole};
use fedspace_core::negotiation::NegotiationProcess;
use fedspace_core::store::{DatasetAspect, EntityRecord, FederationReport, Page};
use fedspace_core::urn::Urn;

const ADMIN: &str = "cli-admin";

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

struct Provider {
    child: std::process::Child,
    base: String,
}

impl Drop for Provider {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn spawn_provider(work: &Path) -> Provider {
    let port = {
        let probe = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        probe.local_addr().unwrap().port()
    };
    let config = ConnectorConfig {
        role: ConnectorRole::Provider,
        listen_address: format!("127.0.0.1:{port}"),
        participant_id: "cli-provider".to_string(),
        data_dir: work.join("data"),
        admin_token: ADMIN.to_string(),
        serve_files_dir: Some(repo_root().join("fixtures/data")),
        ..ConnectorConfig::default()
    };
    let config_path = work.join("provider.toml");
    std::fs::write(&config_path, toml::to_string(&config).unwrap()).unwrap();
    let child = Command::new(env!("CARGO_BIN_EXE_fedspace"))
        .arg("serve")
        .arg("--config")
        .arg(&config_path)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let base = format!("http://127.0.0.1:{port}");
    let client = ProviderClient::new(&base);
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline && !client.healthy() {
        std::thread::sleep(Duration::from_millis(50));
    }
    assert!(client.healthy(), "provider did not come up");
    Provider { child, base }
}

fn fedspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedspace"))
        .args(args)
        .env("FEDSPACE_ADMIN_TOKEN", ADMIN)
        .output()
        .unwrap()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn cli_flows_and_exit_codes() {
    let work = tempfile::tempdir().unwrap();
    let provider = spawn_provider(work.path());
    let fixtures = repo_root().join("fixtures");
    let ingestion = fixtures.join("catalog_a/ingestion.json");

    // ingest: success prints counts
    let out = fedspace(&["ingest", "--file", ingestion.to_str().unwrap(), "--store", &provider.base]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("created=4"));

    // ingest: malformed file is a usage failure with a line-numbered error
    let broken = work.path().join("broken.json");
    std::fs::write(&broken, "[{\"urn\": ]").unwrap();
    let out = fedspace(&["ingest", "--file", broken.to_str().unwrap(), "--store", &provider.base]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("line"), "stderr: {}", stderr_of(&out));

    // domains --json round-trips through Page<EntityRecord>
    let out = fedspace(&["domains", "--store", &provider.base, "--json"]);
    assert!(out.status.success());
    let page: Page<EntityRecord> = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(page.items.len(), 1);
    let domain = page.items[0].urn.clone();

    // datasets --json round-trips through Page<(EntityRecord, DatasetAspect)>
    let out = fedspace(&[
        "datasets",
        "--store",
        &provider.base,
        "--domain",
        domain.as_str(),
        "--json",
    ]);
    assert!(out.status.success());
    let page: Page<(EntityRecord, DatasetAspect)> = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(page.items.len(), 3);
    let target = page.items[0].0.urn.clone();
    let target_file = page.items[0].0.custom_properties.get("dataFile").unwrap().clone();

    // search --json round-trips and the table variant prints headers
    let out = fedspace(&["search", "--store", &provider.base, "traffic", "--json"]);
    assert!(out.status.success());
    let hits: Page<EntityRecord> = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(hits.items.len(), 1);
    let out = fedspace(&["search", "--store", &provider.base, "traffic"]);
    assert!(stdout_of(&out).contains("URN"));

    // policy create from a document file, then list
    let policy_file = work.path().join("offer.json");
    std::fs::write(
        &policy_file,
        serde_json::json!({
            "@type": "Offer",
            "target": target.as_str(),
            "permission": [{"action": "use", "constraint": []}],
        })
        .to_string(),
    )
    .unwrap();
    let out = fedspace(&[
        "policy",
        "create",
        "--store",
        &provider.base,
        "--file",
        policy_file.to_str().unwrap(),
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let created: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    let offer_uid = created["uid"].as_str().unwrap().to_string();

    let out = fedspace(&[
        "policy", "list", "--store", &provider.base, "--target", target.as_str(),
    ]);
    assert!(stdout_of(&out).contains(&offer_uid));

    // negotiate --json round-trips through NegotiationProcess
    let out = fedspace(&[
        "negotiate",
        "--provider",
        &provider.base,
        "--offer",
        &offer_uid,
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let process: NegotiationProcess = serde_json::from_str(&stdout_of(&out)).unwrap();
    let agreement_uid = process.agreement_uid.clone().unwrap();

    // transfer writes the fetched bytes
    let out_file = work.path().join("fetched.csv");
    let out = fedspace(&[
        "transfer",
        "--provider",
        &provider.base,
        "--agreement",
        &agreement_uid,
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let fetched = std::fs::read(&out_file).unwrap();
    let expected = std::fs::read(fixtures.join("data").join(&target_file)).unwrap();
    assert_eq!(fetched, expected);

    // deleting the target makes a fresh negotiation terminate: exit 3
    let client = ProviderClient::new(&provider.base).with_admin_token(ADMIN);
    let another = fedspace(&[
        "policy",
        "create",
        "--store",
        &provider.base,
        "--file",
        policy_file.to_str().unwrap(),
        "--json",
    ]);
    let another: serde_json::Value = serde_json::from_str(&stdout_of(&another)).unwrap();
    let second_offer = another["uid"].as_str().unwrap().to_string();
    client.delete_entity(&Urn::parse(target.as_str()).unwrap()).unwrap();

    let out = fedspace(&[
        "negotiate",
        "--provider",
        &provider.base,
        "--offer",
        &second_offer,
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    let stderr = stderr_of(&out);
    assert!(
        stderr.contains("policy invalidated") || stderr.contains("target unresolved"),
        "reason must be printed: {stderr}"
    );

    // connectivity failures exit 2
    let out = fedspace(&["negotiate", "--provider", "http://127.0.0.1:1", "--offer", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn transfer_policy_denial_exits_4() {
    let work = tempfile::tempdir().unwrap();
    let provider = spawn_provider(work.path());
    let fixtures = repo_root().join("fixtures");

    let client = ProviderClient::new(&provider.base).with_admin_token(ADMIN);
    client
        .ingest(&std::fs::read_to_string(fixtures.join("catalog_a/ingestion.json")).unwrap())
        .unwrap();

    // permission window that closed yesterday: negotiation still finalizes,
    // but the transfer-time evaluation denies
    let yesterday = (chrono::Utc::now() - chrono::Duration::days(1)).to_rfc3339();
    let target = "urn:li:dataset:(urn:li:dataPlatform:postgres,mobility.traffic_counts,PROD)";
    let created = client
        .create_policy(
            &serde_json::from_value(serde_json::json!({
                "@type": "Offer",
                "target": target,
                "permission": [{
                    "action": "use",
                    "constraint": [{
                        "leftOperand": "dateTime",
                        "operator": "lteq",
                        "rightOperand": yesterday,
                    }],
                }],
            }))
            .unwrap(),
        )
        .unwrap();
    let offer_uid = created["uid"].as_str().unwrap();

    let out = fedspace(&["negotiate", "--provider", &provider.base, "--offer", offer_uid, "--json"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let process: NegotiationProcess = serde_json::from_str(&stdout_of(&out)).unwrap();
    let agreement = process.agreement_uid.unwrap();

    let out_file = work.path().join("denied.csv");
    let out = fedspace(&[
        "transfer",
        "--provider",
        &provider.base,
        "--agreement",
        &agreement,
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr_of(&out));
    assert!(!out_file.exists());
}

#[test]
fn federate_json_round_trips_report() {
    let work_a = tempfile::tempdir().unwrap();
    let work_b = tempfile::tempdir().unwrap();
    let source = spawn_provider(work_a.path());
    let federator = spawn_provider(work_b.path());
    let fixtures = repo_root().join("fixtures");

    let out = fedspace(&[
        "ingest",
        "--file",
        fixtures.join("catalog_b/ingestion.json").to_str().unwrap(),
        "--store",
        &source.base,
    ]);
    assert!(out.status.success());

    let out = fedspace(&[
        "federate",
        "--source",
        &source.base,
        "--store",
        &federator.base,
        "--json",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: FederationReport = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(report.created, 5);
    assert_eq!(report.conflicts, 0);
}
