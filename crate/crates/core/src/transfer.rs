//! Transfer-process state machine: agreement validation, policy evaluation at
//! request time, data-address resolution at grant time, token-gated data
//! serving, and the suspend/resume/complete/terminate lifecycle.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::facade::OperationalMetadata;
use crate::odrl::{evaluate, Action, Decision, PolicyKind, PolicyStatus, PolicyStore, RequestContext};
use crate::store::AuthScheme;
use crate::urn::Urn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransferState {
    #[serde(rename = "REQUESTED")]
    Requested,
    #[serde(rename = "STARTED")]
    Started,
    #[serde(rename = "SUSPENDED")]
    Suspended,
    #[serde(rename = "COMPLETED")]
    Completed,
    #[serde(rename = "TERMINATED")]
    Terminated,
}

pub const ALL_TRANSFER_STATES: [TransferState; 5] = [
    TransferState::Requested,
    TransferState::Started,
    TransferState::Suspended,
    TransferState::Completed,
    TransferState::Terminated,
];

impl TransferState {
    pub fn is_absorbing(self) -> bool {
        matches!(self, TransferState::Completed | TransferState::Terminated)
    }

    pub fn label(self) -> &'static str {
        match self {
            TransferState::Requested => "REQUESTED",
            TransferState::Started => "STARTED",
            TransferState::Suspended => "SUSPENDED",
            TransferState::Completed => "COMPLETED",
            TransferState::Terminated => "TERMINATED",
        }
    }
}

/// Lifecycle commands applied to an existing transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferCommand {
    Suspend,
    Resume,
    Complete,
    Terminate,
}

pub const ALL_TRANSFER_COMMANDS: [TransferCommand; 4] = [
    TransferCommand::Suspend,
    TransferCommand::Resume,
    TransferCommand::Complete,
    TransferCommand::Terminate,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transfer transition: {command:?} in state {state:?}")]
pub struct IllegalTransferTransition {
    pub state: TransferState,
    pub command: TransferCommand,
}

/// Pure lifecycle table over 5 states × 4 commands.
pub fn transfer_transition(
    state: TransferState,
    command: TransferCommand,
) -> Result<TransferState, IllegalTransferTransition> {
    use TransferCommand as C;
    use TransferState as S;
    match (state, command) {
        (S::Started, C::Suspend) => Ok(S::Suspended),
        (S::Suspended, C::Resume) => Ok(S::Started),
        (S::Started, C::Complete) => Ok(S::Completed),
        (s, C::Terminate) if !s.is_absorbing() => Ok(S::Terminated),
        _ => Err(IllegalTransferTransition { state, command }),
    }
}

/// Endpoint-plus-credential grant handed to the consumer. The provider data
/// plane realizes the grant with a bearer token scoped to one transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataAddress {
    #[serde(rename = "endpointUrl")]
    pub endpoint_url: String,
    #[serde(rename = "authScheme")]
    pub auth_scheme: AuthScheme,
    #[serde(rename = "accessToken", default, skip_serializing_if = "Option::is_none")]
    pub access_token: Option<String>,
    #[serde(rename = "validUntil")]
    pub valid_until: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferMessageKind {
    Request,
    Start,
    Suspension,
    Completion,
    Termination,
}

impl TransferMessageKind {
    pub fn label(self) -> &'static str {
        match self {
            TransferMessageKind::Request => "TransferRequestMessage",
            TransferMessageKind::Start => "TransferStartMessage",
            TransferMessageKind::Suspension => "TransferSuspensionMessage",
            TransferMessageKind::Completion => "TransferCompletionMessage",
            TransferMessageKind::Termination => "TransferTerminationMessage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferHistoryEntry {
    pub at: DateTime<Utc>,
    pub message: TransferMessageKind,
    pub resulting_state: TransferState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferProcess {
    pub transfer_id: String,
    pub agreement_uid: String,
    pub target: Urn,
    pub consumer_pid: String,
    pub state: TransferState,
    pub requested_format: String,
    pub callback_address: String,
    pub data_address: Option<DataAddress>,
    pub history: Vec<TransferHistoryEntry>,
    pub termination_reason: Option<String>,
}

impl TransferProcess {
    pub fn history_states(&self) -> Vec<TransferState> {
        self.history.iter().map(|h| h.resulting_state).collect()
    }

    fn apply(&mut self, message: TransferMessageKind, next: TransferState) {
        self.state = next;
        if next == TransferState::Terminated {
            self.data_address = None;
        }
        self.history.push(TransferHistoryEntry {
            at: Utc::now(),
            message,
            resulting_state: next,
        });
    }
}

/// Wire envelope of the transfer protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "@type")]
pub enum TransferMessage {
    #[serde(rename = "TransferRequestMessage")]
    Request {
        #[serde(rename = "agreementId")]
        agreement_id: String,
        format: String,
        #[serde(rename = "callbackAddress")]
        callback_address: String,
    },
    #[serde(rename = "TransferStartMessage")]
    Start {
        #[serde(rename = "transferId")]
        transfer_id: String,
        #[serde(rename = "dataAddress")]
        data_address: DataAddress,
    },
    #[serde(rename = "TransferSuspensionMessage")]
    Suspension {
        #[serde(rename = "transferId")]
        transfer_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    #[serde(rename = "TransferCompletionMessage")]
    Completion {
        #[serde(rename = "transferId")]
        transfer_id: String,
    },
    #[serde(rename = "TransferTerminationMessage")]
    Termination {
        #[serde(rename = "transferId")]
        transfer_id: String,
        reason: String,
    },
}

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("unknown agreement `{0}`")]
    UnknownAgreement(String),
    #[error("agreement `{0}` has been invalidated")]
    AgreementInvalidated(String),
    #[error("no finalized negotiation backs agreement `{0}`")]
    NegotiationNotFinalized(String),
    #[error("requested format `{requested}` does not match dataset format `{actual}`")]
    FormatMismatch { requested: String, actual: String },
    #[error("unknown transfer `{0}`")]
    UnknownTransfer(String),
    #[error("{0}")]
    IllegalTransition(String),
    #[error("access token is not valid")]
    InvalidToken,
    #[error("access token has expired")]
    ExpiredToken,
    #[error("access token is bound to a different dataset")]
    WrongTarget,
    #[error("transfer is not in STARTED state")]
    TransferNotStarted,
    #[error("data source failure: {0}")]
    DataUnavailable(String),
    #[error("transfer persistence failure: {0}")]
    Persistence(String),
}

pub const REASON_POLICY_DENIED: &str = "policy denied";
pub const REASON_TARGET_UNRESOLVED: &str = "target unresolved";

/// Resolves a dataset urn to its operational metadata at grant time.
pub trait DatasetResolver: Send + Sync {
    fn resolve_operational(&self, urn: &Urn) -> Result<OperationalMetadata, ResolveFailure>;
}

/// Why a resolution failed; anything other than a live dataset with metadata.
#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct ResolveFailure(pub String);

impl DatasetResolver for crate::facade::Facade {
    fn resolve_operational(&self, urn: &Urn) -> Result<OperationalMetadata, ResolveFailure> {
        self.resolve_internal(urn).map_err(|e| ResolveFailure(e.to_string()))
    }
}

/// Gate confirming an agreement came out of a FINALIZED negotiation; returns
/// the consumer participant the agreement was negotiated for.
pub trait AgreementGate: Send + Sync {
    fn finalized_consumer(&self, agreement_uid: &str) -> Option<String>;
}

impl AgreementGate for crate::negotiation::ProviderEngine {
    fn finalized_consumer(&self, agreement_uid: &str) -> Option<String> {
        self.finalized_process_for_agreement(agreement_uid)
            .map(|p| p.consumer_pid)
    }
}

/// Maps urns to raw bytes; the toy end system behind the provider data plane.
pub trait DataSource: Send + Sync {
    fn fetch(&self, urn: &Urn) -> Result<Vec<u8>, String>;
}

#[derive(Debug, Clone)]
struct TokenRecord {
    transfer_id: String,
    target: Urn,
    valid_until: DateTime<Utc>,
    revoked: bool,
}

pub const DEFAULT_TOKEN_LIFETIME_SECONDS: u64 = 900;

/// Provider-side book of transfer processes and their access tokens.
pub struct TransferBook {
    policies: Arc<PolicyStore>,
    resolver: Arc<dyn DatasetResolver>,
    gate: Arc<dyn AgreementGate>,
    processes: RwLock<HashMap<String, TransferProcess>>,
    tokens: RwLock<HashMap<String, TokenRecord>>,
    token_lifetime_seconds: u64,
    persist_dir: Option<PathBuf>,
}

impl TransferBook {
    pub fn new(
        policies: Arc<PolicyStore>,
        resolver: Arc<dyn DatasetResolver>,
        gate: Arc<dyn AgreementGate>,
    ) -> TransferBook {
        TransferBook {
            policies,
            resolver,
            gate,
            processes: RwLock::new(HashMap::new()),
            tokens: RwLock::new(HashMap::new()),
            token_lifetime_seconds: DEFAULT_TOKEN_LIFETIME_SECONDS,
            persist_dir: None,
        }
    }

    pub fn with_token_lifetime(mut self, seconds: u64) -> TransferBook {
        self.token_lifetime_seconds = seconds;
        self
    }

    /// Persist one document per transfer under `dir`, reloading what is there.
    /// Access tokens are deliberately not persisted: a restart revokes all
    /// outstanding grants.
    pub fn with_persistence(mut self, dir: &Path) -> Result<TransferBook, TransferError> {
        fs::create_dir_all(dir).map_err(|e| TransferError::Persistence(e.to_string()))?;
        let mut processes = HashMap::new();
        for entry in fs::read_dir(dir).map_err(|e| TransferError::Persistence(e.to_string()))? {
            let entry = entry.map_err(|e| TransferError::Persistence(e.to_string()))?;
            if entry.path().extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let body = fs::read_to_string(entry.path())
                .map_err(|e| TransferError::Persistence(e.to_string()))?;
            let process: TransferProcess = serde_json::from_str(&body)
                .map_err(|e| TransferError::Persistence(format!("{}: {e}", entry.path().display())))?;
            processes.insert(process.transfer_id.clone(), process);
        }
        self.processes = RwLock::new(processes);
        self.persist_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn get(&self, transfer_id: &str) -> Option<TransferProcess> {
        self.processes.read().get(transfer_id).cloned()
    }

    fn persist(&self, process: &TransferProcess) -> Result<(), TransferError> {
        if let Some(dir) = &self.persist_dir {
            let body = serde_json::to_string_pretty(process)
                .map_err(|e| TransferError::Persistence(e.to_string()))?;
            fs::write(dir.join(format!("{}.json", process.transfer_id)), body)
                .map_err(|e| TransferError::Persistence(e.to_string()))?;
        }
        Ok(())
    }

    fn store(&self, process: TransferProcess) -> Result<TransferProcess, TransferError> {
        self.persist(&process)?;
        self.processes
            .write()
            .insert(process.transfer_id.clone(), process.clone());
        Ok(process)
    }

    /// Open a transfer for a finalized agreement. The agreement's policy is
    /// evaluated for action `use` under the current context; DENY leaves a
    /// TERMINATED process with reason "policy denied".
    pub fn request_transfer(
        &self,
        agreement_uid: &str,
        requested_format: &str,
        callback_address: &str,
    ) -> Result<TransferProcess, TransferError> {
        let agreement = self
            .policies
            .get(agreement_uid)
            .filter(|p| p.kind == PolicyKind::Agreement)
            .ok_or_else(|| TransferError::UnknownAgreement(agreement_uid.to_string()))?;
        if agreement.status != PolicyStatus::Active {
            return Err(TransferError::AgreementInvalidated(agreement_uid.to_string()));
        }
        let consumer_pid = self
            .gate
            .finalized_consumer(agreement_uid)
            .ok_or_else(|| TransferError::NegotiationNotFinalized(agreement_uid.to_string()))?;

        let mut process = TransferProcess {
            transfer_id: Uuid::new_v4().to_string(),
            agreement_uid: agreement_uid.to_string(),
            target: agreement.target.clone(),
            consumer_pid: consumer_pid.clone(),
            state: TransferState::Requested,
            requested_format: requested_format.to_string(),
            callback_address: callback_address.to_string(),
            data_address: None,
            history: Vec::new(),
            termination_reason: None,
        };
        process.history.push(TransferHistoryEntry {
            at: Utc::now(),
            message: TransferMessageKind::Request,
            resulting_state: TransferState::Requested,
        });

        let meta = match self.resolver.resolve_operational(&agreement.target) {
            Ok(meta) => meta,
            Err(_) => {
                process.termination_reason = Some(REASON_TARGET_UNRESOLVED.to_string());
                process.apply(TransferMessageKind::Termination, TransferState::Terminated);
                return self.store(process);
            }
        };
        if meta.format_hint != requested_format {
            return Err(TransferError::FormatMismatch {
                requested: requested_format.to_string(),
                actual: meta.format_hint,
            });
        }

        let ctx = RequestContext::now(Action::Use, consumer_pid);
        let decision = evaluate(&agreement, &ctx)
            .map_err(|_| TransferError::AgreementInvalidated(agreement_uid.to_string()))?;
        if decision != Decision::Permit {
            process.termination_reason = Some(REASON_POLICY_DENIED.to_string());
            process.apply(TransferMessageKind::Termination, TransferState::Terminated);
        }
        self.store(process)
    }

    /// Grant the data address: resolve the endpoint through the facade now,
    /// mint a scoped access token, and move REQUESTED → STARTED.
    pub fn start_transfer(
        &self,
        transfer_id: &str,
    ) -> Result<(TransferProcess, Option<TransferMessage>), TransferError> {
        let mut process = self.load(transfer_id)?;
        if process.state != TransferState::Requested {
            return Err(TransferError::IllegalTransition(format!(
                "start in state {:?}",
                process.state
            )));
        }
        let meta = match self.resolver.resolve_operational(&process.target) {
            Ok(meta) => meta,
            Err(_) => {
                process.termination_reason = Some(REASON_TARGET_UNRESOLVED.to_string());
                process.apply(TransferMessageKind::Termination, TransferState::Terminated);
                let process = self.store(process)?;
                let message = TransferMessage::Termination {
                    transfer_id: process.transfer_id.clone(),
                    reason: REASON_TARGET_UNRESOLVED.to_string(),
                };
                return Ok((process, Some(message)));
            }
        };
        let address = self.mint_address(&process, meta.access_endpoint);
        process.data_address = Some(address.clone());
        process.apply(TransferMessageKind::Start, TransferState::Started);
        let process = self.store(process)?;
        let message = TransferMessage::Start {
            transfer_id: process.transfer_id.clone(),
            data_address: address,
        };
        Ok((process, Some(message)))
    }

    /// Suspension revokes the outstanding access token until a resume
    /// re-mints it.
    pub fn suspend(&self, transfer_id: &str) -> Result<TransferProcess, TransferError> {
        let mut process = self.load(transfer_id)?;
        self.step(&mut process, TransferCommand::Suspend, TransferMessageKind::Suspension)?;
        self.revoke_tokens_for(transfer_id);
        self.store(process)
    }

    /// Re-mint the access token and move SUSPENDED → STARTED; the endpoint is
    /// kept from the original grant.
    pub fn resume(&self, transfer_id: &str) -> Result<TransferProcess, TransferError> {
        let mut process = self.load(transfer_id)?;
        let endpoint = process
            .data_address
            .as_ref()
            .map(|a| a.endpoint_url.clone())
            .ok_or_else(|| TransferError::IllegalTransition("resume without data address".to_string()))?;
        self.step(&mut process, TransferCommand::Resume, TransferMessageKind::Start)?;
        let address = self.mint_address(&process, endpoint);
        process.data_address = Some(address);
        self.store(process)
    }

    pub fn complete(&self, transfer_id: &str) -> Result<TransferProcess, TransferError> {
        let mut process = self.load(transfer_id)?;
        self.step(&mut process, TransferCommand::Complete, TransferMessageKind::Completion)?;
        self.revoke_tokens_for(transfer_id);
        self.store(process)
    }

    pub fn terminate(&self, transfer_id: &str, reason: &str) -> Result<TransferProcess, TransferError> {
        let mut process = self.load(transfer_id)?;
        self.step(&mut process, TransferCommand::Terminate, TransferMessageKind::Termination)?;
        self.revoke_tokens_for(transfer_id);
        process.termination_reason = Some(reason.to_string());
        self.store(process)
    }

    /// Serve the dataset bytes for a valid, unexpired token bound to a
    /// STARTED transfer of exactly this urn.
    pub fn serve_data(
        &self,
        access_token: &str,
        urn: &Urn,
        source: &dyn DataSource,
    ) -> Result<Vec<u8>, TransferError> {
        let record = self
            .tokens
            .read()
            .get(access_token)
            .cloned()
            .ok_or(TransferError::InvalidToken)?;
        if Utc::now() > record.valid_until {
            return Err(TransferError::ExpiredToken);
        }
        let state = self
            .processes
            .read()
            .get(&record.transfer_id)
            .map(|p| p.state)
            .ok_or(TransferError::InvalidToken)?;
        if state != TransferState::Started {
            return Err(TransferError::TransferNotStarted);
        }
        if &record.target != urn {
            return Err(TransferError::WrongTarget);
        }
        if record.revoked {
            return Err(TransferError::InvalidToken);
        }
        source.fetch(urn).map_err(TransferError::DataUnavailable)
    }

    /// Validity probe for a token without fetching data.
    pub fn token_valid(&self, access_token: &str) -> bool {
        let tokens = self.tokens.read();
        let Some(record) = tokens.get(access_token) else {
            return false;
        };
        if record.revoked || Utc::now() > record.valid_until {
            return false;
        }
        self.processes
            .read()
            .get(&record.transfer_id)
            .map(|p| p.state == TransferState::Started)
            .unwrap_or(false)
    }

    fn load(&self, transfer_id: &str) -> Result<TransferProcess, TransferError> {
        self.processes
            .read()
            .get(transfer_id)
            .cloned()
            .ok_or_else(|| TransferError::UnknownTransfer(transfer_id.to_string()))
    }

    fn step(
        &self,
        process: &mut TransferProcess,
        command: TransferCommand,
        message: TransferMessageKind,
    ) -> Result<(), TransferError> {
        let next = transfer_transition(process.state, command)
            .map_err(|e| TransferError::IllegalTransition(e.to_string()))?;
        process.apply(message, next);
        Ok(())
    }

    fn mint_address(&self, process: &TransferProcess, endpoint_url: String) -> DataAddress {
        let token = Uuid::new_v4().to_string();
        let valid_until = Utc::now() + chrono::Duration::seconds(self.token_lifetime_seconds as i64);
        self.tokens.write().insert(
            token.clone(),
            TokenRecord {
                transfer_id: process.transfer_id.clone(),
                target: process.target.clone(),
                valid_until,
                revoked: false,
            },
        );
        DataAddress {
            endpoint_url,
            auth_scheme: AuthScheme::Bearer,
            access_token: Some(token),
            valid_until,
        }
    }

    fn revoke_tokens_for(&self, transfer_id: &str) {
        for record in self.tokens.write().values_mut() {
            if record.transfer_id == transfer_id {
                record.revoked = true;
            }
        }
    }
}
