//! `fedspace` command line: runs connector services, ingests and federates
//! metadata, manages policies, and drives the consumer-side negotiation and
//! transfer flows.

mod demo;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedspace_connector::client::{ClientError, ProviderClient};
use fedspace_connector::{ConnectorConfig, ConnectorError};
use fedspace_core::negotiation::{ConsumerEngine, NegotiationState};
use fedspace_core::odrl::PolicyDocument;
use fedspace_core::store::{DatasetAspect, EntityRecord, FederationReport, IngestReport, Page};
use fedspace_core::transfer::REASON_POLICY_DENIED;
use fedspace_core::urn::Urn;

use output::{print_table, Failure};

const CALLBACK: &str = "http://consumer.invalid/callback";

#[derive(Parser)]
#[command(
    name = "fedspace",
    version,
    about = "Self-contained dataspace connector: federated metadata catalog, DCAT endpoint, ODRL policies, negotiation and transfer"
)]
struct Cli {
    /// Print machine-readable JSON instead of tables
    #[arg(long, global = true)]
    json: bool,
    /// Token for admin routes of the targeted connector
    #[arg(long, global = true, env = "FEDSPACE_ADMIN_TOKEN", default_value = "changeme")]
    admin_token: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a connector service until interrupted
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Push an ingestion file into a connector's store
    Ingest {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        store: String,
        /// Repeat every N seconds (minimal orchestration)
        #[arg(long)]
        every: Option<u64>,
    },
    /// Make a connector pull a source store into its own
    Federate {
        #[arg(long)]
        source: String,
        #[arg(long)]
        store: String,
        /// Repeat every N seconds (minimal orchestration)
        #[arg(long)]
        every: Option<u64>,
    },
    /// List the domains of a store
    Domains {
        #[arg(long)]
        store: String,
    },
    /// List the datasets of a domain
    Datasets {
        #[arg(long)]
        store: String,
        #[arg(long)]
        domain: String,
    },
    /// Search datasets by free text
    Search {
        #[arg(long)]
        store: String,
        query: String,
    },
    /// Manage ODRL policies
    Policy {
        #[command(subcommand)]
        action: PolicyCommand,
    },
    /// Negotiate a contract for an offer; prints the agreement id
    Negotiate {
        #[arg(long)]
        provider: String,
        #[arg(long)]
        offer: String,
        #[arg(long, default_value = "consumer")]
        participant: String,
    },
    /// Execute a transfer for an agreement and write the fetched bytes
    Transfer {
        #[arg(long)]
        provider: String,
        #[arg(long)]
        agreement: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "text/csv")]
        format: String,
    },
    /// Run the full two-source federation scenario on loopback
    Demo {
        /// Directory holding catalog_a/, catalog_b/, and data/
        #[arg(long, default_value = "fixtures")]
        fixtures: PathBuf,
    },
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Create an offer from a policy document file
    Create {
        #[arg(long)]
        store: String,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        file: PathBuf,
    },
    /// List policies bound to a target
    List {
        #[arg(long)]
        store: String,
        #[arg(long)]
        target: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn client(base: &str, admin_token: &str) -> ProviderClient {
    ProviderClient::new(base).with_admin_token(admin_token)
}

/// Admin/query commands: unreachable is a connectivity failure, a rejection is
/// a usage failure.
fn admin_err(e: ClientError) -> Failure {
    match e {
        ClientError::Unreachable(m) => Failure::connectivity(m),
        other => Failure::usage(other.to_string()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Serve { config } => {
            let config = ConnectorConfig::load(&config).map_err(|e| Failure::usage(e.to_string()))?;
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| Failure::usage(format!("cannot start runtime: {e}")))?;
            runtime
                .block_on(fedspace_connector::run(config))
                .map_err(|e: ConnectorError| Failure::connectivity(e.to_string()))
        }

        Command::Ingest { file, store, every } => {
            let body = std::fs::read_to_string(&file)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", file.display())))?;
            let client = client(&store, &cli.admin_token);
            loop {
                let value = client.ingest(&body).map_err(admin_err)?;
                let report: IngestReport = serde_json::from_value(value)
                    .map_err(|e| Failure::usage(format!("bad store response: {e}")))?;
                if cli.json {
                    println!("{}", serde_json::to_string_pretty(&report).unwrap());
                } else {
                    println!("ingested: created={} updated={}", report.created, report.updated);
                }
                match every {
                    Some(seconds) => std::thread::sleep(std::time::Duration::from_secs(seconds)),
                    None => return Ok(()),
                }
            }
        }

        Command::Federate { source, store, every } => {
            let client = client(&store, &cli.admin_token);
            loop {
                let value = client.federate(&source).map_err(admin_err)?;
                let report: FederationReport = serde_json::from_value(value)
                    .map_err(|e| Failure::usage(format!("bad store response: {e}")))?;
                if cli.json {
                    println!("{}", serde_json::to_string_pretty(&report).unwrap());
                } else {
                    println!(
                        "federated: created={} updated={} unchanged={} conflicts={}",
                        report.created, report.updated, report.unchanged, report.conflicts
                    );
                }
                match every {
                    Some(seconds) => std::thread::sleep(std::time::Duration::from_secs(seconds)),
                    None => return Ok(()),
                }
            }
        }

        Command::Domains { store } => {
            let page: Page<EntityRecord> = get_typed(
                &client(&store, &cli.admin_token),
                "/admin/store/domains?offset=0&limit=1000",
            )?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&page).unwrap());
            } else {
                print_table(
                    &["URN", "NAME", "DESCRIPTION"],
                    page.items
                        .iter()
                        .map(|r| vec![r.urn.to_string(), r.name.clone(), r.description.clone()])
                        .collect(),
                );
            }
            Ok(())
        }

        Command::Datasets { store, domain } => {
            let domain = Urn::parse(&domain).map_err(|e| Failure::usage(e.to_string()))?;
            let path = format!(
                "/admin/store/domains/{}/datasets?offset=0&limit=1000",
                fedspace_connector::encode_urn(&domain)
            );
            let page: Page<(EntityRecord, DatasetAspect)> =
                get_typed(&client(&store, &cli.admin_token), &path)?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&page).unwrap());
            } else {
                print_table(
                    &["URN", "NAME", "FORMAT", "ENDPOINT"],
                    page.items
                        .iter()
                        .map(|(r, a)| {
                            vec![
                                r.urn.to_string(),
                                r.name.clone(),
                                a.format_hint.clone(),
                                a.access_endpoint.clone(),
                            ]
                        })
                        .collect(),
                );
            }
            Ok(())
        }

        Command::Search { store, query } => {
            let path = format!("/admin/store/search?q={}&offset=0&limit=1000", urlencode(&query));
            let page: Page<EntityRecord> = get_typed(&client(&store, &cli.admin_token), &path)?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&page).unwrap());
            } else {
                print_table(
                    &["URN", "NAME", "DESCRIPTION"],
                    page.items
                        .iter()
                        .map(|r| vec![r.urn.to_string(), r.name.clone(), r.description.clone()])
                        .collect(),
                );
            }
            Ok(())
        }

        Command::Policy { action } => match action {
            PolicyCommand::Create { store, target, file } => {
                let body = std::fs::read_to_string(&file)
                    .map_err(|e| Failure::usage(format!("cannot read {}: {e}", file.display())))?;
                let mut doc: PolicyDocument = serde_json::from_str(&body)
                    .map_err(|e| Failure::usage(format!("bad policy document: {e}")))?;
                if let Some(target) = target {
                    doc.target = Urn::parse(&target).map_err(|e| Failure::usage(e.to_string()))?;
                }
                let created = client(&store, &cli.admin_token)
                    .create_policy(&doc)
                    .map_err(admin_err)?;
                if cli.json {
                    println!("{}", serde_json::to_string_pretty(&created).unwrap());
                } else {
                    println!("created policy {}", created["uid"].as_str().unwrap_or("?"));
                }
                Ok(())
            }
            PolicyCommand::List { store, target } => {
                let target = Urn::parse(&target).map_err(|e| Failure::usage(e.to_string()))?;
                let docs = client(&store, &cli.admin_token)
                    .list_policies(&target)
                    .map_err(admin_err)?;
                if cli.json {
                    println!("{}", serde_json::to_string_pretty(&docs).unwrap());
                } else {
                    print_table(
                        &["UID", "TYPE", "STATUS", "CREATED"],
                        docs.iter()
                            .map(|d| {
                                vec![
                                    d["uid"].as_str().unwrap_or("?").to_string(),
                                    d["@type"].as_str().unwrap_or("?").to_string(),
                                    d["status"].as_str().unwrap_or("?").to_string(),
                                    d["createdAt"].as_str().unwrap_or("?").to_string(),
                                ]
                            })
                            .collect(),
                    );
                }
                Ok(())
            }
        },

        Command::Negotiate {
            provider,
            offer,
            participant,
        } => {
            let consumer = ConsumerEngine::new(participant);
            let client = ProviderClient::new(&provider);
            let process = client
                .negotiate(&consumer, &offer, CALLBACK)
                .map_err(flow_err)?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&process).unwrap());
            }
            match process.state {
                NegotiationState::Finalized => {
                    let agreement = process.agreement_uid.clone().unwrap_or_default();
                    if !cli.json {
                        println!("negotiation FINALIZED, agreement {agreement}");
                    }
                    Ok(())
                }
                state => Err(Failure::protocol(format!(
                    "negotiation ended {state:?}: {}",
                    process.termination_reason.as_deref().unwrap_or("no reason given")
                ))),
            }
        }

        Command::Transfer {
            provider,
            agreement,
            out,
            format,
        } => {
            let client = ProviderClient::new(&provider);
            let outcome = client
                .transfer(&agreement, &format, CALLBACK)
                .map_err(flow_err)?;
            match outcome.bytes {
                Some(bytes) => {
                    std::fs::write(&out, &bytes)
                        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", out.display())))?;
                    if cli.json {
                        println!(
                            "{}",
                            serde_json::json!({
                                "process": outcome.process,
                                "bytesWritten": bytes.len(),
                                "out": out.display().to_string(),
                            })
                        );
                    } else {
                        println!(
                            "transfer {} {}: wrote {} bytes to {}",
                            outcome.process.transfer_id,
                            outcome.process.state,
                            bytes.len(),
                            out.display()
                        );
                    }
                    Ok(())
                }
                None => {
                    let reason = outcome.process.reason.clone().unwrap_or_default();
                    if reason == REASON_POLICY_DENIED {
                        Err(Failure::policy_denied(format!("transfer denied: {reason}")))
                    } else {
                        Err(Failure::protocol(format!(
                            "transfer ended {} without data: {reason}",
                            outcome.process.state
                        )))
                    }
                }
            }
        }

        Command::Demo { fixtures } => demo::run_demo(&fixtures, &cli.admin_token, cli.json),
    }
}

/// Flow commands (negotiate/transfer): rejections are protocol failures.
fn flow_err(e: ClientError) -> Failure {
    match e {
        ClientError::Unreachable(m) => Failure::connectivity(m),
        other => Failure::protocol(other.to_string()),
    }
}

fn get_typed<T: serde::de::DeserializeOwned>(client: &ProviderClient, path: &str) -> Result<T, Failure> {
    let value = client.get_admin_json(path).map_err(admin_err)?;
    serde_json::from_value(value).map_err(|e| Failure::usage(format!("bad store response: {e}")))
}

fn urlencode(text: &str) -> String {
    percent_encode(text)
}

fn percent_encode(text: &str) -> String {
    let mut out = String::new();
    for byte in text.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            other => out.push_str(&format!("%{other:02X}")),
        }
    }
    out
}
