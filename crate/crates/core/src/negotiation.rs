//! Contract-negotiation state machine and the provider/consumer engines
//! driving it.
//!
//! The transition function is a pure, total lookup over
//! (state, message kind, sender role); engines layer the double-check against
//! the facade and policy store on top, and mint the Agreement when a
//! negotiation reaches that point.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::odrl::{PolicyDocument, PolicyError, PolicyStore, TargetResolver};
use crate::urn::Urn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NegotiationState {
    #[serde(rename = "REQUESTED")]
    Requested,
    #[serde(rename = "OFFERED")]
    Offered,
    #[serde(rename = "ACCEPTED")]
    Accepted,
    #[serde(rename = "AGREED")]
    Agreed,
    #[serde(rename = "VERIFIED")]
    Verified,
    #[serde(rename = "FINALIZED")]
    Finalized,
    #[serde(rename = "TERMINATED")]
    Terminated,
}

pub const ALL_NEGOTIATION_STATES: [NegotiationState; 7] = [
    NegotiationState::Requested,
    NegotiationState::Offered,
    NegotiationState::Accepted,
    NegotiationState::Agreed,
    NegotiationState::Verified,
    NegotiationState::Finalized,
    NegotiationState::Terminated,
];

impl NegotiationState {
    pub fn is_absorbing(self) -> bool {
        matches!(self, NegotiationState::Finalized | NegotiationState::Terminated)
    }

    pub fn label(self) -> &'static str {
        match self {
            NegotiationState::Requested => "REQUESTED",
            NegotiationState::Offered => "OFFERED",
            NegotiationState::Accepted => "ACCEPTED",
            NegotiationState::Agreed => "AGREED",
            NegotiationState::Verified => "VERIFIED",
            NegotiationState::Finalized => "FINALIZED",
            NegotiationState::Terminated => "TERMINATED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "CONSUMER")]
    Consumer,
    #[serde(rename = "PROVIDER")]
    Provider,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "ACCEPTED")]
    Accepted,
    #[serde(rename = "FINALIZED")]
    Finalized,
}

/// Message kind as seen by the transition function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    Request,
    Offer,
    Event(EventKind),
    Agreement,
    Verification,
    Termination,
}

impl MessageKind {
    pub fn label(self) -> &'static str {
        match self {
            MessageKind::Request => "ContractRequestMessage",
            MessageKind::Offer => "ContractOfferMessage",
            MessageKind::Event(EventKind::Accepted) => "ContractNegotiationEventMessage(ACCEPTED)",
            MessageKind::Event(EventKind::Finalized) => "ContractNegotiationEventMessage(FINALIZED)",
            MessageKind::Agreement => "ContractAgreementMessage",
            MessageKind::Verification => "ContractAgreementVerificationMessage",
            MessageKind::Termination => "ContractNegotiationTerminationMessage",
        }
    }
}

/// `state == None` is the not-yet-created process a flow-initiating message
/// addresses.
pub fn transition(
    state: Option<NegotiationState>,
    message: MessageKind,
    sender: Role,
) -> Result<NegotiationState, IllegalTransition> {
    use MessageKind as M;
    use NegotiationState as S;
    use Role as R;
    let next = match (state, message, sender) {
        (None, M::Request, R::Consumer) => S::Requested,
        (None, M::Offer, R::Provider) => S::Offered,
        (Some(S::Requested), M::Offer, R::Provider) => S::Offered,
        (Some(S::Offered), M::Request, R::Consumer) => S::Requested,
        (Some(S::Offered), M::Event(EventKind::Accepted), R::Consumer) => S::Accepted,
        (Some(S::Requested), M::Agreement, R::Provider) => S::Agreed,
        (Some(S::Accepted), M::Agreement, R::Provider) => S::Agreed,
        (Some(S::Agreed), M::Verification, R::Consumer) => S::Verified,
        (Some(S::Verified), M::Event(EventKind::Finalized), R::Provider) => S::Finalized,
        (Some(s), M::Termination, _) if !s.is_absorbing() => S::Terminated,
        _ => {
            return Err(IllegalTransition {
                state,
                message,
                sender,
            })
        }
    };
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transition: {message:?} from {sender:?} in state {state:?}")]
pub struct IllegalTransition {
    pub state: Option<NegotiationState>,
    pub message: MessageKind,
    pub sender: Role,
}

/// Reference to the offer under negotiation: by uid or inline document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OfferRef {
    Uid(String),
    Inline(PolicyDocument),
}

impl OfferRef {
    pub fn uid(&self) -> Option<&str> {
        match self {
            OfferRef::Uid(uid) => Some(uid),
            OfferRef::Inline(doc) => doc.uid.as_deref(),
        }
    }
}

/// Wire envelope of the negotiation protocol. `@type` selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "@type")]
pub enum NegotiationMessage {
    #[serde(rename = "ContractRequestMessage")]
    ContractRequest {
        #[serde(rename = "processId", default, skip_serializing_if = "Option::is_none")]
        process_id: Option<String>,
        offer: OfferRef,
        #[serde(rename = "callbackAddress")]
        callback_address: String,
        #[serde(rename = "consumerPid")]
        consumer_pid: String,
    },
    #[serde(rename = "ContractOfferMessage")]
    ContractOffer {
        #[serde(rename = "processId", default, skip_serializing_if = "Option::is_none")]
        process_id: Option<String>,
        offer: PolicyDocument,
    },
    #[serde(rename = "ContractNegotiationEventMessage")]
    Event {
        #[serde(rename = "processId")]
        process_id: String,
        event: EventKind,
    },
    #[serde(rename = "ContractAgreementMessage")]
    Agreement {
        #[serde(rename = "processId")]
        process_id: String,
        agreement: PolicyDocument,
    },
    #[serde(rename = "ContractAgreementVerificationMessage")]
    Verification {
        #[serde(rename = "processId")]
        process_id: String,
    },
    #[serde(rename = "ContractNegotiationTerminationMessage")]
    Termination {
        #[serde(rename = "processId")]
        process_id: String,
        reason: String,
    },
}

impl NegotiationMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            NegotiationMessage::ContractRequest { .. } => MessageKind::Request,
            NegotiationMessage::ContractOffer { .. } => MessageKind::Offer,
            NegotiationMessage::Event { event, .. } => MessageKind::Event(*event),
            NegotiationMessage::Agreement { .. } => MessageKind::Agreement,
            NegotiationMessage::Verification { .. } => MessageKind::Verification,
            NegotiationMessage::Termination { .. } => MessageKind::Termination,
        }
    }

    pub fn process_id(&self) -> Option<&str> {
        match self {
            NegotiationMessage::ContractRequest { process_id, .. }
            | NegotiationMessage::ContractOffer { process_id, .. } => process_id.as_deref(),
            NegotiationMessage::Event { process_id, .. }
            | NegotiationMessage::Agreement { process_id, .. }
            | NegotiationMessage::Verification { process_id }
            | NegotiationMessage::Termination { process_id, .. } => Some(process_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub at: DateTime<Utc>,
    pub message: MessageKind,
    pub resulting_state: NegotiationState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationProcess {
    pub process_id: String,
    pub consumer_pid: String,
    pub provider_pid: String,
    pub state: NegotiationState,
    pub offer_uid: String,
    pub agreement_uid: Option<String>,
    pub callback_address: String,
    pub history: Vec<HistoryEntry>,
    /// Reason of the closing termination, when terminated.
    pub termination_reason: Option<String>,
    pub updated_at: DateTime<Utc>,
}

impl NegotiationProcess {
    pub fn history_states(&self) -> Vec<NegotiationState> {
        self.history.iter().map(|h| h.resulting_state).collect()
    }

    fn apply(&mut self, message: MessageKind, next: NegotiationState) {
        self.state = next;
        // agreement_uid is carried only while an agreement is in force
        if !matches!(
            next,
            NegotiationState::Agreed | NegotiationState::Verified | NegotiationState::Finalized
        ) {
            self.agreement_uid = None;
        }
        let now = Utc::now();
        self.updated_at = now;
        self.history.push(HistoryEntry {
            at: now,
            message,
            resulting_state: next,
        });
    }
}

#[derive(Debug, Error)]
pub enum NegotiationError {
    #[error("unknown negotiation process `{0}`")]
    UnknownProcess(String),
    #[error("message does not reference a usable offer: {0}")]
    MalformedMessage(String),
    #[error("illegal negotiation transition on process {process_id:?}: {detail}")]
    IllegalTransition {
        process_id: Option<String>,
        detail: String,
    },
    #[error("agreement does not match the negotiated offer")]
    AgreementMismatch,
    #[error("provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("negotiation persistence failure: {0}")]
    Persistence(String),
}

pub const REASON_TARGET_UNRESOLVED: &str = "target unresolved";
pub const REASON_POLICY_INVALIDATED: &str = "policy invalidated";
pub const REASON_AGREEMENT_MISMATCH: &str = "agreement mismatch";
pub const REASON_ILLEGAL_TRANSITION: &str = "illegal transition";
pub const REASON_IDLE_EXPIRED: &str = "idle expired";

fn persist_process(dir: &Option<PathBuf>, process: &NegotiationProcess) -> Result<(), NegotiationError> {
    if let Some(dir) = dir {
        let body = serde_json::to_string_pretty(process)
            .map_err(|e| NegotiationError::Persistence(e.to_string()))?;
        fs::write(dir.join(format!("{}.json", process.process_id)), body)
            .map_err(|e| NegotiationError::Persistence(e.to_string()))?;
    }
    Ok(())
}

fn load_processes(dir: &Path) -> Result<HashMap<String, NegotiationProcess>, NegotiationError> {
    fs::create_dir_all(dir).map_err(|e| NegotiationError::Persistence(e.to_string()))?;
    let mut out = HashMap::new();
    for entry in fs::read_dir(dir).map_err(|e| NegotiationError::Persistence(e.to_string()))? {
        let entry = entry.map_err(|e| NegotiationError::Persistence(e.to_string()))?;
        if entry.path().extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let body = fs::read_to_string(entry.path())
            .map_err(|e| NegotiationError::Persistence(e.to_string()))?;
        let process: NegotiationProcess = serde_json::from_str(&body)
            .map_err(|e| NegotiationError::Persistence(format!("{}: {e}", entry.path().display())))?;
        out.insert(process.process_id.clone(), process);
    }
    Ok(out)
}

/// Provider half: owns the processes consumers negotiate against, re-checks
/// target and policy before advancing, and auto-advances its own side of the
/// table (offer echo, agreement, finalization) without human approval.
pub struct ProviderEngine {
    provider_pid: String,
    policies: Arc<PolicyStore>,
    resolver: Arc<dyn TargetResolver>,
    processes: RwLock<HashMap<String, NegotiationProcess>>,
    persist_dir: Option<PathBuf>,
    idle_expiry_seconds: Option<u64>,
}

impl ProviderEngine {
    pub fn new(
        provider_pid: impl Into<String>,
        policies: Arc<PolicyStore>,
        resolver: Arc<dyn TargetResolver>,
    ) -> ProviderEngine {
        ProviderEngine {
            provider_pid: provider_pid.into(),
            policies,
            resolver,
            processes: RwLock::new(HashMap::new()),
            persist_dir: None,
            idle_expiry_seconds: None,
        }
    }

    /// Persist one document per process under `dir`, reloading what is there.
    pub fn with_persistence(mut self, dir: &Path) -> Result<ProviderEngine, NegotiationError> {
        self.processes = RwLock::new(load_processes(dir)?);
        self.persist_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    /// Terminate processes idle longer than this before handling new input.
    pub fn with_idle_expiry(mut self, seconds: u64) -> ProviderEngine {
        self.idle_expiry_seconds = Some(seconds);
        self
    }

    pub fn get(&self, process_id: &str) -> Option<NegotiationProcess> {
        self.processes.read().get(process_id).cloned()
    }

    pub fn list(&self) -> Vec<NegotiationProcess> {
        self.processes.read().values().cloned().collect()
    }

    /// Process id of the FINALIZED negotiation that produced `agreement_uid`.
    pub fn finalized_process_for_agreement(&self, agreement_uid: &str) -> Option<NegotiationProcess> {
        self.processes
            .read()
            .values()
            .find(|p| {
                p.state == NegotiationState::Finalized
                    && p.agreement_uid.as_deref() == Some(agreement_uid)
            })
            .cloned()
    }

    /// Handle one consumer-sent message and produce the provider's response
    /// message. Double-check failures respond with a termination message and a
    /// TERMINATED process rather than an error.
    pub fn handle(
        &self,
        message: NegotiationMessage,
    ) -> Result<(NegotiationProcess, Option<NegotiationMessage>), NegotiationError> {
        let mut processes = self.processes.write();
        match message {
            NegotiationMessage::ContractRequest {
                process_id,
                offer,
                callback_address,
                consumer_pid,
            } => {
                let offer_uid = offer
                    .uid()
                    .ok_or_else(|| {
                        NegotiationError::MalformedMessage(
                            "request carries neither offer uid nor inline offer uid".to_string(),
                        )
                    })?
                    .to_string();
                let mut process = match process_id {
                    None => {
                        let mut process = NegotiationProcess {
                            process_id: Uuid::new_v4().to_string(),
                            consumer_pid,
                            provider_pid: self.provider_pid.clone(),
                            state: NegotiationState::Requested,
                            offer_uid: offer_uid.clone(),
                            agreement_uid: None,
                            callback_address,
                            history: Vec::new(),
                            termination_reason: None,
                            updated_at: Utc::now(),
                        };
                        // initial transition is always legal: (∅, Request, C)
                        process.history.push(HistoryEntry {
                            at: Utc::now(),
                            message: MessageKind::Request,
                            resulting_state: NegotiationState::Requested,
                        });
                        process
                    }
                    Some(id) => {
                        let mut process = self.take_live(&mut processes, &id)?;
                        self.step_or_terminate(&mut processes, &mut process, MessageKind::Request)?;
                        process.offer_uid = offer_uid.clone();
                        process
                    }
                };
                let outbound = self.double_check_and_offer(&mut process)?;
                self.store(&mut processes, process.clone())?;
                Ok((process, outbound))
            }

            NegotiationMessage::Event { process_id, event } => {
                let mut process = self.take_live(&mut processes, &process_id)?;
                self.step_or_terminate(&mut processes, &mut process, MessageKind::Event(event))?;
                // consumer accepted: re-run the double check, then agree
                let outbound = self.double_check_and_agree(&mut process)?;
                self.store(&mut processes, process.clone())?;
                Ok((process, outbound))
            }

            NegotiationMessage::Verification { process_id } => {
                let mut process = self.take_live(&mut processes, &process_id)?;
                self.step_or_terminate(&mut processes, &mut process, MessageKind::Verification)?;
                // auto-finalize
                self.step(
                    &mut process,
                    MessageKind::Event(EventKind::Finalized),
                    Role::Provider,
                )?;
                let outbound = NegotiationMessage::Event {
                    process_id: process.process_id.clone(),
                    event: EventKind::Finalized,
                };
                self.store(&mut processes, process.clone())?;
                Ok((process, Some(outbound)))
            }

            NegotiationMessage::Termination { process_id, reason } => {
                let mut process = self.take_live(&mut processes, &process_id)?;
                self.step_or_terminate(&mut processes, &mut process, MessageKind::Termination)?;
                process.termination_reason = Some(reason);
                self.store(&mut processes, process.clone())?;
                Ok((process, None))
            }

            // providers never receive these; reject as protocol violations
            NegotiationMessage::ContractOffer { process_id, .. } => {
                self.reject_foreign(&mut processes, process_id)
            }
            NegotiationMessage::Agreement { process_id, .. } => {
                self.reject_foreign(&mut processes, Some(process_id))
            }
        }
    }

    fn reject_foreign(
        &self,
        processes: &mut HashMap<String, NegotiationProcess>,
        process_id: Option<String>,
    ) -> Result<(NegotiationProcess, Option<NegotiationMessage>), NegotiationError> {
        if let Some(id) = process_id.as_deref() {
            if let Some(mut process) = processes.get(id).cloned() {
                if !process.state.is_absorbing() {
                    self.terminate(&mut process, REASON_ILLEGAL_TRANSITION);
                    self.store(processes, process)?;
                }
            }
        }
        Err(NegotiationError::IllegalTransition {
            process_id,
            detail: "provider endpoints accept consumer messages only".to_string(),
        })
    }

    /// Apply an inbound consumer message; on an illegal transition the live
    /// process is terminated and stored before the error propagates.
    fn step_or_terminate(
        &self,
        processes: &mut HashMap<String, NegotiationProcess>,
        process: &mut NegotiationProcess,
        message: MessageKind,
    ) -> Result<(), NegotiationError> {
        if let Err(e) = self.step(process, message, Role::Consumer) {
            let terminated = self.terminated_for_illegal(process.clone());
            self.store(processes, terminated)?;
            return Err(e);
        }
        Ok(())
    }

    fn take_live(
        &self,
        processes: &mut HashMap<String, NegotiationProcess>,
        id: &str,
    ) -> Result<NegotiationProcess, NegotiationError> {
        let mut process = processes
            .get(id)
            .cloned()
            .ok_or_else(|| NegotiationError::UnknownProcess(id.to_string()))?;
        if let Some(limit) = self.idle_expiry_seconds {
            let idle = Utc::now().signed_duration_since(process.updated_at);
            if !process.state.is_absorbing() && idle.num_seconds() >= limit as i64 {
                self.terminate(&mut process, REASON_IDLE_EXPIRED);
                processes.insert(process.process_id.clone(), process.clone());
                let _ = persist_process(&self.persist_dir, &process);
            }
        }
        Ok(process)
    }

    fn step(
        &self,
        process: &mut NegotiationProcess,
        message: MessageKind,
        sender: Role,
    ) -> Result<(), NegotiationError> {
        let next = transition(Some(process.state), message, sender).map_err(|e| {
            NegotiationError::IllegalTransition {
                process_id: Some(process.process_id.clone()),
                detail: e.to_string(),
            }
        })?;
        process.apply(message, next);
        Ok(())
    }

    /// A live process hit an illegal message: it moves to TERMINATED.
    fn terminated_for_illegal(&self, mut process: NegotiationProcess) -> NegotiationProcess {
        if !process.state.is_absorbing() {
            self.terminate(&mut process, REASON_ILLEGAL_TRANSITION);
        }
        process
    }

    fn terminate(&self, process: &mut NegotiationProcess, reason: &str) {
        process.apply(MessageKind::Termination, NegotiationState::Terminated);
        process.termination_reason = Some(reason.to_string());
    }

    fn store(
        &self,
        processes: &mut HashMap<String, NegotiationProcess>,
        process: NegotiationProcess,
    ) -> Result<(), NegotiationError> {
        persist_process(&self.persist_dir, &process)?;
        processes.insert(process.process_id.clone(), process);
        Ok(())
    }

    /// The double check of a request: re-resolve the target via the facade and
    /// re-fetch the policy; if both are live, echo the offer (OFFERED).
    fn double_check_and_offer(
        &self,
        process: &mut NegotiationProcess,
    ) -> Result<Option<NegotiationMessage>, NegotiationError> {
        match self.double_check(process)? {
            Ok(offer_doc) => {
                self.step(process, MessageKind::Offer, Role::Provider)?;
                Ok(Some(NegotiationMessage::ContractOffer {
                    process_id: Some(process.process_id.clone()),
                    offer: offer_doc,
                }))
            }
            Err(termination) => Ok(Some(termination)),
        }
    }

    fn double_check_and_agree(
        &self,
        process: &mut NegotiationProcess,
    ) -> Result<Option<NegotiationMessage>, NegotiationError> {
        match self.double_check(process)? {
            Ok(_) => {
                let agreement = match self
                    .policies
                    .make_agreement(&process.offer_uid, &process.consumer_pid)
                {
                    Ok(agreement) => agreement,
                    Err(
                        PolicyError::OfferInvalidated(_)
                        | PolicyError::UnknownPolicy(_)
                        | PolicyError::NotAnOffer(_),
                    ) => {
                        self.terminate(process, REASON_POLICY_INVALIDATED);
                        return Ok(Some(self.termination_message(process)));
                    }
                    Err(e) => return Err(NegotiationError::Persistence(e.to_string())),
                };
                self.step(process, MessageKind::Agreement, Role::Provider)?;
                process.agreement_uid = Some(agreement.uid.clone());
                Ok(Some(NegotiationMessage::Agreement {
                    process_id: process.process_id.clone(),
                    agreement: PolicyDocument::from_policy(&agreement),
                }))
            }
            Err(termination) => Ok(Some(termination)),
        }
    }

    /// Ok(offer document) when policy and target are both live; Err carries
    /// the termination message to send back (process already TERMINATED).
    fn double_check(
        &self,
        process: &mut NegotiationProcess,
    ) -> Result<Result<PolicyDocument, NegotiationMessage>, NegotiationError> {
        let policy = self.policies.get(&process.offer_uid);
        let reason = match policy {
            None => Some(REASON_POLICY_INVALIDATED),
            Some(ref p) if p.kind != crate::odrl::PolicyKind::Offer => {
                Some(REASON_POLICY_INVALIDATED)
            }
            Some(ref p) if p.status != crate::odrl::PolicyStatus::Active => {
                Some(REASON_POLICY_INVALIDATED)
            }
            Some(ref p) if !self.resolver.target_live(&p.target) => Some(REASON_TARGET_UNRESOLVED),
            Some(_) => None,
        };
        if let Some(reason) = reason {
            self.terminate(process, reason);
            return Ok(Err(self.termination_message(process)));
        }
        Ok(Ok(PolicyDocument::from_policy(&policy.unwrap())))
    }

    fn termination_message(&self, process: &NegotiationProcess) -> NegotiationMessage {
        NegotiationMessage::Termination {
            process_id: process.process_id.clone(),
            reason: process
                .termination_reason
                .clone()
                .unwrap_or_else(|| REASON_ILLEGAL_TRANSITION.to_string()),
        }
    }
}

/// Consumer half: mirrors the provider's process, auto-accepts offers it asked
/// for, verifies agreements structurally against the requested offer, and
/// terminates on mismatch.
pub struct ConsumerEngine {
    consumer_pid: String,
    processes: RwLock<HashMap<String, ConsumerSide>>,
    persist_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConsumerSide {
    process: NegotiationProcess,
    /// Offer we asked for; `None` for provider-initiated flows until accepted.
    requested_offer_uid: Option<String>,
    /// Offer document seen from the provider, the baseline for agreement checks.
    seen_offer: Option<PolicyDocument>,
}

impl ConsumerEngine {
    pub fn new(consumer_pid: impl Into<String>) -> ConsumerEngine {
        ConsumerEngine {
            consumer_pid: consumer_pid.into(),
            processes: RwLock::new(HashMap::new()),
            persist_dir: None,
        }
    }

    pub fn consumer_pid(&self) -> &str {
        &self.consumer_pid
    }

    pub fn get(&self, process_id: &str) -> Option<NegotiationProcess> {
        self.processes.read().get(process_id).map(|s| s.process.clone())
    }

    /// Build the flow-initiating request message. The provider assigns the
    /// process id; register the mirror with [`ConsumerEngine::register_requested`]
    /// once its response names it.
    pub fn initiate_request(&self, offer_uid: &str, callback_address: &str) -> NegotiationMessage {
        NegotiationMessage::ContractRequest {
            process_id: None,
            offer: OfferRef::Uid(offer_uid.to_string()),
            callback_address: callback_address.to_string(),
            consumer_pid: self.consumer_pid.clone(),
        }
    }

    /// Create the local mirror for a request this consumer just sent.
    pub fn register_requested(
        &self,
        process_id: &str,
        provider_pid: &str,
        offer_uid: &str,
        callback_address: &str,
    ) -> NegotiationProcess {
        let mut process = NegotiationProcess {
            process_id: process_id.to_string(),
            consumer_pid: self.consumer_pid.clone(),
            provider_pid: provider_pid.to_string(),
            state: NegotiationState::Requested,
            offer_uid: offer_uid.to_string(),
            agreement_uid: None,
            callback_address: callback_address.to_string(),
            history: Vec::new(),
            termination_reason: None,
            updated_at: Utc::now(),
        };
        process.history.push(HistoryEntry {
            at: Utc::now(),
            message: MessageKind::Request,
            resulting_state: NegotiationState::Requested,
        });
        let side = ConsumerSide {
            process: process.clone(),
            requested_offer_uid: Some(offer_uid.to_string()),
            seen_offer: None,
        };
        let _ = persist_side(&self.persist_dir, &side);
        self.processes.write().insert(process_id.to_string(), side);
        process
    }

    /// Handle one provider-sent message; returns the updated mirror and the
    /// consumer's next outbound message, if any.
    pub fn handle(
        &self,
        message: NegotiationMessage,
    ) -> Result<(NegotiationProcess, Option<NegotiationMessage>), NegotiationError> {
        let mut processes = self.processes.write();
        match message {
            NegotiationMessage::ContractOffer { process_id, offer } => {
                match process_id {
                    None => Err(NegotiationError::MalformedMessage(
                        "offer without process id".to_string(),
                    )),
                    Some(id) if processes.contains_key(&id) => {
                        let side = processes.get_mut(&id).unwrap();
                        step_mirror(&mut side.process, MessageKind::Offer, Role::Provider)?;
                        side.seen_offer = Some(offer.clone());
                        // auto-accept only what we asked for
                        let outbound = if side.requested_offer_uid.is_some()
                            && offer.uid.as_deref() == side.requested_offer_uid.as_deref()
                        {
                            step_mirror(
                                &mut side.process,
                                MessageKind::Event(EventKind::Accepted),
                                Role::Consumer,
                            )?;
                            Some(NegotiationMessage::Event {
                                process_id: id.clone(),
                                event: EventKind::Accepted,
                            })
                        } else if side.requested_offer_uid.is_some() {
                            side.process.termination_reason =
                                Some("counter-offer declined".to_string());
                            step_mirror(&mut side.process, MessageKind::Termination, Role::Consumer)?;
                            Some(NegotiationMessage::Termination {
                                process_id: id.clone(),
                                reason: "counter-offer declined".to_string(),
                            })
                        } else {
                            // provider-initiated renegotiation; wait for accept()
                            None
                        };
                        let _ = persist_side(&self.persist_dir, side);
                        Ok((side.process.clone(), outbound))
                    }
                    Some(id) => {
                        // provider-initiated flow: mirror begins in OFFERED
                        let mut process = NegotiationProcess {
                            process_id: id.clone(),
                            consumer_pid: self.consumer_pid.clone(),
                            provider_pid: offer.assigner.clone().unwrap_or_default(),
                            state: NegotiationState::Offered,
                            offer_uid: offer.uid.clone().unwrap_or_default(),
                            agreement_uid: None,
                            callback_address: String::new(),
                            history: Vec::new(),
                            termination_reason: None,
                            updated_at: Utc::now(),
                        };
                        process.history.push(HistoryEntry {
                            at: Utc::now(),
                            message: MessageKind::Offer,
                            resulting_state: NegotiationState::Offered,
                        });
                        let side = ConsumerSide {
                            process: process.clone(),
                            requested_offer_uid: None,
                            seen_offer: Some(offer),
                        };
                        let _ = persist_side(&self.persist_dir, &side);
                        processes.insert(id, side);
                        Ok((process, None))
                    }
                }
            }

            NegotiationMessage::Agreement {
                process_id,
                agreement,
            } => {
                let side = processes
                    .get_mut(&process_id)
                    .ok_or_else(|| NegotiationError::UnknownProcess(process_id.clone()))?;
                step_mirror(&mut side.process, MessageKind::Agreement, Role::Provider)?;
                let matches = side.seen_offer.as_ref().is_some_and(|offer| {
                    agreement.permissions == offer.permissions
                        && agreement.prohibitions == offer.prohibitions
                        && agreement.obligations == offer.obligations
                        && agreement.target == offer.target
                        && agreement.assigner == offer.assigner
                });
                let outbound = if matches {
                    side.process.agreement_uid = agreement.uid.clone();
                    step_mirror(&mut side.process, MessageKind::Verification, Role::Consumer)?;
                    Some(NegotiationMessage::Verification {
                        process_id: process_id.clone(),
                    })
                } else {
                    side.process.termination_reason = Some(REASON_AGREEMENT_MISMATCH.to_string());
                    step_mirror(&mut side.process, MessageKind::Termination, Role::Consumer)?;
                    Some(NegotiationMessage::Termination {
                        process_id: process_id.clone(),
                        reason: REASON_AGREEMENT_MISMATCH.to_string(),
                    })
                };
                let _ = persist_side(&self.persist_dir, side);
                Ok((side.process.clone(), outbound))
            }

            NegotiationMessage::Event { process_id, event } => {
                let side = processes
                    .get_mut(&process_id)
                    .ok_or_else(|| NegotiationError::UnknownProcess(process_id.clone()))?;
                step_mirror(&mut side.process, MessageKind::Event(event), Role::Provider)?;
                let _ = persist_side(&self.persist_dir, side);
                Ok((side.process.clone(), None))
            }

            NegotiationMessage::Termination { process_id, reason } => {
                let side = processes
                    .get_mut(&process_id)
                    .ok_or_else(|| NegotiationError::UnknownProcess(process_id.clone()))?;
                if !side.process.state.is_absorbing() {
                    side.process.termination_reason = Some(reason);
                    step_mirror(&mut side.process, MessageKind::Termination, Role::Provider)?;
                }
                let _ = persist_side(&self.persist_dir, side);
                Ok((side.process.clone(), None))
            }

            NegotiationMessage::ContractRequest { process_id, .. } => {
                Err(NegotiationError::IllegalTransition {
                    process_id,
                    detail: "consumer endpoints accept provider messages only".to_string(),
                })
            }
            NegotiationMessage::Verification { process_id } => {
                Err(NegotiationError::IllegalTransition {
                    process_id: Some(process_id),
                    detail: "consumer endpoints accept provider messages only".to_string(),
                })
            }
        }
    }

    /// Explicitly accept a provider-initiated offer.
    pub fn accept(&self, process_id: &str) -> Result<NegotiationMessage, NegotiationError> {
        let mut processes = self.processes.write();
        let side = processes
            .get_mut(process_id)
            .ok_or_else(|| NegotiationError::UnknownProcess(process_id.to_string()))?;
        step_mirror(
            &mut side.process,
            MessageKind::Event(EventKind::Accepted),
            Role::Consumer,
        )?;
        let _ = persist_side(&self.persist_dir, side);
        Ok(NegotiationMessage::Event {
            process_id: process_id.to_string(),
            event: EventKind::Accepted,
        })
    }
}

fn step_mirror(
    process: &mut NegotiationProcess,
    message: MessageKind,
    sender: Role,
) -> Result<(), NegotiationError> {
    let next = transition(Some(process.state), message, sender).map_err(|e| {
        NegotiationError::IllegalTransition {
            process_id: Some(process.process_id.clone()),
            detail: e.to_string(),
        }
    })?;
    process.apply(message, next);
    Ok(())
}

fn persist_side(dir: &Option<PathBuf>, side: &ConsumerSide) -> Result<(), NegotiationError> {
    if let Some(dir) = dir {
        let body = serde_json::to_string_pretty(side)
            .map_err(|e| NegotiationError::Persistence(e.to_string()))?;
        fs::write(dir.join(format!("{}.json", side.process.process_id)), body)
            .map_err(|e| NegotiationError::Persistence(e.to_string()))?;
    }
    Ok(())
}

/// Resolver used when negotiating against targets that must not be re-checked
/// (tests and tooling).
pub struct StaticResolver(pub bool);

impl TargetResolver for StaticResolver {
    fn target_live(&self, _urn: &Urn) -> bool {
        self.0
    }
}

#[cfg(test)]
mod tests;
