//! Consumer-side client: drives the negotiation and transfer flows against a
//! provider over HTTP, mirroring protocol state through the consumer engine.

use std::time::Duration;

use fedspace_core::negotiation::{ConsumerEngine, NegotiationMessage, NegotiationProcess};
use fedspace_core::odrl::PolicyDocument;
use fedspace_core::transfer::TransferMessage;
use fedspace_core::urn::Urn;
use thiserror::Error;

use crate::docs::{NegotiationProcessDoc, TransferProcessDoc};
use crate::http_source::encode_urn;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider returned {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("protocol failure: {0}")]
    Protocol(String),
}

pub struct ProviderClient {
    base: String,
    admin_token: Option<String>,
    http: reqwest::blocking::Client,
}

/// Everything the consumer ends up with after a transfer flow.
pub struct TransferOutcome {
    pub process: TransferProcessDoc,
    pub bytes: Option<Vec<u8>>,
}

impl ProviderClient {
    pub fn new(base: &str) -> ProviderClient {
        ProviderClient {
            base: base.trim_end_matches('/').to_string(),
            admin_token: None,
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(15))
                .build()
                .expect("http client"),
        }
    }

    pub fn with_admin_token(mut self, token: &str) -> ProviderClient {
        self.admin_token = Some(token.to_string());
        self
    }

    fn post_json<T: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &impl serde::Serialize,
        admin: bool,
    ) -> Result<T, ClientError> {
        let url = format!("{}{path}", self.base);
        let mut request = self.http.post(&url).json(body);
        if admin {
            if let Some(token) = &self.admin_token {
                request = request.header("X-Admin-Token", token);
            }
        }
        let response = request.send().map_err(|e| ClientError::Unreachable(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| ClientError::Unreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Rejected {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::BadResponse(format!("{e}: {text}")))
    }

    fn get_json<T: serde::de::DeserializeOwned>(&self, path: &str, admin: bool) -> Result<T, ClientError> {
        let url = format!("{}{path}", self.base);
        let mut request = self.http.get(&url);
        if admin {
            if let Some(token) = &self.admin_token {
                request = request.header("X-Admin-Token", token);
            }
        }
        let response = request.send().map_err(|e| ClientError::Unreachable(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| ClientError::Unreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Rejected {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::BadResponse(format!("{e}: {text}")))
    }

    pub fn healthy(&self) -> bool {
        self.get_json::<serde_json::Value>("/healthz", false).is_ok()
    }

    /// Raw GET against an admin route.
    pub fn get_admin_json(&self, path: &str) -> Result<serde_json::Value, ClientError> {
        self.get_json(path, true)
    }

    pub fn fetch_catalog(&self, filter: Option<&str>) -> Result<serde_json::Value, ClientError> {
        let path = match filter {
            Some(f) => format!("/catalog?filter={f}"),
            None => "/catalog".to_string(),
        };
        self.get_json(&path, false)
    }

    pub fn fetch_dataset(&self, urn: &Urn) -> Result<serde_json::Value, ClientError> {
        self.get_json(&format!("/catalog/datasets/{}", encode_urn(urn)), false)
    }

    pub fn ingest(&self, body: &str) -> Result<serde_json::Value, ClientError> {
        let url = format!("{}/admin/ingest", self.base);
        let mut request = self.http.post(&url).body(body.to_string());
        if let Some(token) = &self.admin_token {
            request = request.header("X-Admin-Token", token);
        }
        let response = request.send().map_err(|e| ClientError::Unreachable(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| ClientError::Unreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Rejected {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::BadResponse(e.to_string()))
    }

    /// Soft-delete an entity through the admin API.
    pub fn delete_entity(&self, urn: &Urn) -> Result<serde_json::Value, ClientError> {
        let url = format!("{}/admin/store/entities/{}", self.base, encode_urn(urn));
        let mut request = self.http.delete(&url);
        if let Some(token) = &self.admin_token {
            request = request.header("X-Admin-Token", token);
        }
        let response = request.send().map_err(|e| ClientError::Unreachable(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| ClientError::Unreachable(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Rejected {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::BadResponse(e.to_string()))
    }

    pub fn federate(&self, source: &str) -> Result<serde_json::Value, ClientError> {
        self.post_json(
            "/admin/federate",
            &serde_json::json!({ "source": source }),
            true,
        )
    }

    pub fn create_policy(&self, doc: &PolicyDocument) -> Result<serde_json::Value, ClientError> {
        self.post_json("/admin/policies", doc, true)
    }

    pub fn list_policies(&self, target: &Urn) -> Result<Vec<serde_json::Value>, ClientError> {
        self.get_json(
            &format!("/admin/policies?target={}", encode_urn(target)),
            true,
        )
    }

    /// Run the full consumer side of a negotiation: request, auto-accept the
    /// echoed offer, verify the agreement, acknowledge finalization. Returns
    /// the consumer's view of the process (FINALIZED or TERMINATED).
    pub fn negotiate(
        &self,
        consumer: &ConsumerEngine,
        offer_uid: &str,
        callback_address: &str,
    ) -> Result<NegotiationProcess, ClientError> {
        let request = consumer.initiate_request(offer_uid, callback_address);
        let doc: NegotiationProcessDoc =
            self.post_json("/negotiations/request", &request, false)?;
        consumer.register_requested(&doc.process_id, &doc.provider_pid, offer_uid, callback_address);
        let process_id = doc.process_id.clone();
        let mut inbound = doc.message;

        while let Some(message) = inbound.take() {
            let (_, outbound) = consumer
                .handle(message)
                .map_err(|e| ClientError::Protocol(e.to_string()))?;
            let Some(outbound) = outbound else { break };
            let path = match &outbound {
                NegotiationMessage::Event { process_id, .. } => {
                    format!("/negotiations/{process_id}/events")
                }
                NegotiationMessage::Verification { process_id } => {
                    format!("/negotiations/{process_id}/agreement/verification")
                }
                NegotiationMessage::Termination { process_id, .. } => {
                    format!("/negotiations/{process_id}/termination")
                }
                other => {
                    return Err(ClientError::Protocol(format!(
                        "consumer produced unexpected outbound {other:?}"
                    )))
                }
            };
            let doc: NegotiationProcessDoc = self.post_json(&path, &outbound, false)?;
            inbound = doc.message;
        }

        consumer
            .get(&process_id)
            .ok_or_else(|| ClientError::Protocol("negotiation process vanished".to_string()))
    }

    /// Run the full transfer flow for a finalized agreement: request, start,
    /// pull the bytes through the provider data plane, complete.
    pub fn transfer(&self, agreement_uid: &str, format: &str, callback_address: &str) -> Result<TransferOutcome, ClientError> {
        let request = TransferMessage::Request {
            agreement_id: agreement_uid.to_string(),
            format: format.to_string(),
            callback_address: callback_address.to_string(),
        };
        let doc: TransferProcessDoc = self.post_json("/transfers/request", &request, false)?;
        if doc.state == "TERMINATED" {
            return Ok(TransferOutcome {
                process: doc,
                bytes: None,
            });
        }
        let started: TransferProcessDoc =
            self.post_json(&format!("/transfers/{}/start", doc.transfer_id), &serde_json::json!({}), false)?;
        if started.state != "STARTED" {
            return Ok(TransferOutcome {
                process: started,
                bytes: None,
            });
        }
        let address = started
            .data_address
            .clone()
            .ok_or_else(|| ClientError::Protocol("started transfer without data address".to_string()))?;
        let token = address
            .access_token
            .ok_or_else(|| ClientError::Protocol("data address without access token".to_string()))?;

        let target = Urn::parse(&started.target)
            .map_err(|e| ClientError::BadResponse(e.to_string()))?;
        let url = format!("{}/data/{}", self.base, encode_urn(&target));
        let response = self
            .http
            .get(&url)
            .header("Authorization", format!("Bearer {token}"))
            .send()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(ClientError::Rejected {
                status: status.as_u16(),
                body,
            });
        }
        let bytes = response
            .bytes()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?
            .to_vec();

        let completed: TransferProcessDoc = self.post_json(
            &format!("/transfers/{}/complete", started.transfer_id),
            &serde_json::json!({}),
            false,
        )?;
        Ok(TransferOutcome {
            process: completed,
            bytes: Some(bytes),
        })
    }
}
