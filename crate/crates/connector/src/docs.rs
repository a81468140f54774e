//! Process-state documents returned by the protocol routes and shared with
//! the consumer-side client. Outbound provider messages ride along under the
//! `message` key.

use fedspace_core::negotiation::{NegotiationMessage, NegotiationProcess};
use fedspace_core::odrl::{OdrlPolicy, PolicyDocument};
use fedspace_core::transfer::{DataAddress, TransferMessage, TransferProcess};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NegotiationProcessDoc {
    #[serde(rename = "@type")]
    pub type_tag: String,
    #[serde(rename = "processId")]
    pub process_id: String,
    pub state: String,
    #[serde(rename = "consumerPid")]
    pub consumer_pid: String,
    #[serde(rename = "providerPid")]
    pub provider_pid: String,
    #[serde(rename = "offerId")]
    pub offer_id: String,
    #[serde(rename = "agreementId", default, skip_serializing_if = "Option::is_none")]
    pub agreement_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<NegotiationMessage>,
}

impl NegotiationProcessDoc {
    pub fn new(process: &NegotiationProcess, message: Option<NegotiationMessage>) -> Self {
        NegotiationProcessDoc {
            type_tag: "ContractNegotiation".to_string(),
            process_id: process.process_id.clone(),
            state: process.state.label().to_string(),
            consumer_pid: process.consumer_pid.clone(),
            provider_pid: process.provider_pid.clone(),
            offer_id: process.offer_uid.clone(),
            agreement_id: process.agreement_uid.clone(),
            reason: process.termination_reason.clone(),
            message,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferProcessDoc {
    #[serde(rename = "@type")]
    pub type_tag: String,
    #[serde(rename = "transferId")]
    pub transfer_id: String,
    #[serde(rename = "agreementId")]
    pub agreement_id: String,
    pub target: String,
    pub state: String,
    #[serde(rename = "dataAddress", default, skip_serializing_if = "Option::is_none")]
    pub data_address: Option<DataAddress>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<TransferMessage>,
}

impl TransferProcessDoc {
    pub fn new(process: &TransferProcess, message: Option<TransferMessage>) -> Self {
        TransferProcessDoc {
            type_tag: "TransferProcess".to_string(),
            transfer_id: process.transfer_id.clone(),
            agreement_id: process.agreement_uid.clone(),
            target: process.target.to_string(),
            state: process.state.label().to_string(),
            data_address: process.data_address.clone(),
            reason: process.termination_reason.clone(),
            message,
        }
    }
}

/// Admin view of a policy: the wire document plus audit metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdminPolicyDoc {
    #[serde(flatten)]
    pub policy: PolicyDocument,
    pub status: String,
    #[serde(rename = "createdAt")]
    pub created_at: String,
    #[serde(rename = "sourceOfferId", default, skip_serializing_if = "Option::is_none")]
    pub source_offer_id: Option<String>,
}

impl AdminPolicyDoc {
    pub fn new(policy: &OdrlPolicy) -> Self {
        AdminPolicyDoc {
            policy: PolicyDocument::from_policy(policy),
            status: match policy.status {
                fedspace_core::odrl::PolicyStatus::Active => "ACTIVE".to_string(),
                fedspace_core::odrl::PolicyStatus::Invalidated => "INVALIDATED".to_string(),
            },
            created_at: policy.created_at.to_rfc3339(),
            source_offer_id: policy.source_offer_uid.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorDoc {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FederateRequest {
    pub source: String,
    #[serde(rename = "adminToken", default, skip_serializing_if = "Option::is_none")]
    pub admin_token: Option<String>,
}
