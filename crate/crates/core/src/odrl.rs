//! ODRL 2.2 policy engine: creation, indexing by target, offer-to-agreement
//! conversion, deny-by-default evaluation with prohibition precedence, and
//! target-driven invalidation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::urn::{Urn, UrnKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "Set")]
    Set,
    #[serde(rename = "Offer")]
    Offer,
    #[serde(rename = "Agreement")]
    Agreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyStatus {
    #[serde(rename = "ACTIVE")]
    Active,
    #[serde(rename = "INVALIDATED")]
    Invalidated,
}

/// Closed action vocabulary; the connector's flows need resource-level
/// access/use conditions only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Use,
    Read,
    Distribute,
}

pub const ALL_ACTIONS: [Action; 3] = [Action::Use, Action::Read, Action::Distribute];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LeftOperand {
    DateTime,
    Count,
    Purpose,
    Spatial,
}

pub const ALL_OPERANDS: [LeftOperand; 4] = [
    LeftOperand::DateTime,
    LeftOperand::Count,
    LeftOperand::Purpose,
    LeftOperand::Spatial,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Eq,
    Neq,
    Lt,
    Lteq,
    Gt,
    Gteq,
}

impl Operator {
    pub fn is_ordering(self) -> bool {
        matches!(self, Operator::Lt | Operator::Lteq | Operator::Gt | Operator::Gteq)
    }
}

/// A single comparison over one request attribute. Ordering operators are
/// only valid for `dateTime` and `count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub left_operand: LeftOperand,
    pub operator: Operator,
    pub right_operand: String,
}

impl Constraint {
    pub fn new(
        left_operand: LeftOperand,
        operator: Operator,
        right_operand: impl Into<String>,
    ) -> Result<Constraint, PolicyError> {
        if operator.is_ordering()
            && !matches!(left_operand, LeftOperand::DateTime | LeftOperand::Count)
        {
            return Err(PolicyError::InvalidConstraint(format!(
                "operator {operator:?} requires an orderable operand, got {left_operand:?}"
            )));
        }
        Ok(Constraint {
            left_operand,
            operator,
            right_operand: right_operand.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub action: Action,
    pub constraints: Vec<Constraint>,
}

impl Rule {
    pub fn unconstrained(action: Action) -> Rule {
        Rule {
            action,
            constraints: Vec::new(),
        }
    }
}

/// Permission/prohibition/obligation triple of a policy body.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub permissions: Vec<Rule>,
    pub prohibitions: Vec<Rule>,
    pub obligations: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdrlPolicy {
    pub uid: String,
    pub kind: PolicyKind,
    pub target: Urn,
    pub assigner: String,
    pub assignee: Option<String>,
    pub rules: RuleSet,
    pub status: PolicyStatus,
    pub created_at: DateTime<Utc>,
    /// Offer this agreement was minted from, when applicable.
    pub source_offer_uid: Option<String>,
    /// Store-local insertion counter; breaks created_at ties in listings.
    pub seq: u64,
}

/// Evaluation input: the attempted action plus whatever attributes the caller
/// can vouch for. Missing attributes make constraints unsatisfied, never errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestContext {
    pub action: Action,
    pub participant: String,
    pub attributes: BTreeMap<LeftOperand, String>,
}

impl RequestContext {
    pub fn now(action: Action, participant: impl Into<String>) -> RequestContext {
        let mut attributes = BTreeMap::new();
        attributes.insert(LeftOperand::DateTime, Utc::now().to_rfc3339());
        RequestContext {
            action,
            participant: participant.into(),
            attributes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "PERMIT")]
    Permit,
    #[serde(rename = "DENY")]
    Deny,
    #[serde(rename = "NOT_APPLICABLE")]
    NotApplicable,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("target `{0}` cannot be resolved")]
    TargetNotFound(Urn),
    #[error("policy must carry at least one permission or prohibition")]
    InvalidRuleSet,
    #[error("target `{0}` is not a dataset urn")]
    TargetNotADataset(Urn),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("policy `{0}` is not an offer")]
    NotAnOffer(String),
    #[error("offer `{0}` has been invalidated")]
    OfferInvalidated(String),
    #[error("policy `{0}` has been invalidated")]
    PolicyInvalidated(String),
    #[error("agreements are minted from offers, not created directly")]
    AgreementNotCreatable,
    #[error("invalid policy document: {0}")]
    InvalidDocument(String),
    #[error("policy persistence failure: {0}")]
    Persistence(String),
}

/// Pre-association check the policy engine runs against the catalog facade:
/// the target must exist, be live, and expose operational metadata.
pub trait TargetResolver: Send + Sync {
    fn target_live(&self, urn: &Urn) -> bool;
}

/// Pure evaluation of one policy against one request.
///
/// NOT_APPLICABLE when no permission or prohibition matches the action; DENY
/// when a matching prohibition is satisfied (prohibition precedence) or when
/// nothing permits; PERMIT only from a matching permission whose constraints
/// all hold.
pub fn evaluate(policy: &OdrlPolicy, ctx: &RequestContext) -> Result<Decision, PolicyError> {
    if policy.status != PolicyStatus::Active {
        return Err(PolicyError::PolicyInvalidated(policy.uid.clone()));
    }
    let matching_permissions: Vec<&Rule> = policy
        .rules
        .permissions
        .iter()
        .filter(|r| r.action == ctx.action)
        .collect();
    let matching_prohibitions: Vec<&Rule> = policy
        .rules
        .prohibitions
        .iter()
        .filter(|r| r.action == ctx.action)
        .collect();
    if matching_permissions.is_empty() && matching_prohibitions.is_empty() {
        return Ok(Decision::NotApplicable);
    }
    if matching_prohibitions
        .iter()
        .any(|r| r.constraints.iter().all(|c| constraint_satisfied(c, ctx)))
    {
        return Ok(Decision::Deny);
    }
    if matching_permissions
        .iter()
        .any(|r| r.constraints.iter().all(|c| constraint_satisfied(c, ctx)))
    {
        return Ok(Decision::Permit);
    }
    Ok(Decision::Deny)
}

fn constraint_satisfied(constraint: &Constraint, ctx: &RequestContext) -> bool {
    let Some(actual) = ctx.attributes.get(&constraint.left_operand) else {
        return false;
    };
    match constraint.left_operand {
        LeftOperand::DateTime => {
            let (Ok(lhs), Ok(rhs)) = (
                DateTime::parse_from_rfc3339(actual),
                DateTime::parse_from_rfc3339(&constraint.right_operand),
            ) else {
                return false;
            };
            compare(constraint.operator, lhs.with_timezone(&Utc), rhs.with_timezone(&Utc))
        }
        LeftOperand::Count => {
            let (Ok(lhs), Ok(rhs)) = (
                actual.parse::<i64>(),
                constraint.right_operand.parse::<i64>(),
            ) else {
                return false;
            };
            compare(constraint.operator, lhs, rhs)
        }
        LeftOperand::Purpose | LeftOperand::Spatial => match constraint.operator {
            Operator::Eq => actual == &constraint.right_operand,
            Operator::Neq => actual != &constraint.right_operand,
            // ordering over symbols is rejected at construction; treat as unsatisfied
            _ => false,
        },
    }
}

fn compare<T: Ord>(op: Operator, lhs: T, rhs: T) -> bool {
    match op {
        Operator::Eq => lhs == rhs,
        Operator::Neq => lhs != rhs,
        Operator::Lt => lhs < rhs,
        Operator::Lteq => lhs <= rhs,
        Operator::Gt => lhs > rhs,
        Operator::Gteq => lhs >= rhs,
    }
}

struct PolicyInner {
    policies: HashMap<String, OdrlPolicy>,
    next_seq: u64,
}

/// Policy store with target indexing and optional one-file-per-policy
/// persistence. Creation and invalidation serialize on the inner lock;
/// evaluation never takes it.
pub struct PolicyStore {
    inner: RwLock<PolicyInner>,
    persist_dir: Option<PathBuf>,
}

impl PolicyStore {
    pub fn in_memory() -> PolicyStore {
        PolicyStore {
            inner: RwLock::new(PolicyInner {
                policies: HashMap::new(),
                next_seq: 1,
            }),
            persist_dir: None,
        }
    }

    /// Open a store that keeps one JSON document per policy under `dir`.
    pub fn open(dir: &Path) -> Result<PolicyStore, PolicyError> {
        fs::create_dir_all(dir).map_err(|e| PolicyError::Persistence(e.to_string()))?;
        let mut policies = HashMap::new();
        let mut next_seq = 1;
        for entry in fs::read_dir(dir).map_err(|e| PolicyError::Persistence(e.to_string()))? {
            let entry = entry.map_err(|e| PolicyError::Persistence(e.to_string()))?;
            if entry.path().extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let body = fs::read_to_string(entry.path())
                .map_err(|e| PolicyError::Persistence(e.to_string()))?;
            let policy: OdrlPolicy = serde_json::from_str(&body)
                .map_err(|e| PolicyError::Persistence(format!("{}: {e}", entry.path().display())))?;
            next_seq = next_seq.max(policy.seq + 1);
            policies.insert(policy.uid.clone(), policy);
        }
        Ok(PolicyStore {
            inner: RwLock::new(PolicyInner { policies, next_seq }),
            persist_dir: Some(dir.to_path_buf()),
        })
    }

    fn persist(&self, policy: &OdrlPolicy) -> Result<(), PolicyError> {
        if let Some(dir) = &self.persist_dir {
            let body = serde_json::to_string_pretty(policy)
                .map_err(|e| PolicyError::Persistence(e.to_string()))?;
            fs::write(dir.join(format!("{}.json", policy.uid)), body)
                .map_err(|e| PolicyError::Persistence(e.to_string()))?;
        }
        Ok(())
    }

    /// Create and index a SET or OFFER policy after the resolver confirms the
    /// target is live.
    pub fn create_policy(
        &self,
        kind: PolicyKind,
        target: Urn,
        assigner: impl Into<String>,
        rules: RuleSet,
        resolver: &dyn TargetResolver,
    ) -> Result<OdrlPolicy, PolicyError> {
        if kind == PolicyKind::Agreement {
            return Err(PolicyError::AgreementNotCreatable);
        }
        if target.kind() != UrnKind::Dataset {
            return Err(PolicyError::TargetNotADataset(target));
        }
        if rules.permissions.is_empty() && rules.prohibitions.is_empty() {
            return Err(PolicyError::InvalidRuleSet);
        }
        if !resolver.target_live(&target) {
            return Err(PolicyError::TargetNotFound(target));
        }
        let mut inner = self.inner.write();
        let policy = OdrlPolicy {
            uid: Uuid::new_v4().to_string(),
            kind,
            target,
            assigner: assigner.into(),
            assignee: None,
            rules,
            status: PolicyStatus::Active,
            created_at: Utc::now(),
            source_offer_uid: None,
            seq: inner.next_seq,
        };
        inner.next_seq += 1;
        self.persist(&policy)?;
        inner.policies.insert(policy.uid.clone(), policy.clone());
        Ok(policy)
    }

    pub fn get(&self, uid: &str) -> Option<OdrlPolicy> {
        self.inner.read().policies.get(uid).cloned()
    }

    /// All policies bound to `target`, any status, newest first.
    pub fn list_by_target(&self, target: &Urn) -> Vec<OdrlPolicy> {
        let inner = self.inner.read();
        let mut out: Vec<OdrlPolicy> = inner
            .policies
            .values()
            .filter(|p| &p.target == target)
            .cloned()
            .collect();
        out.sort_by_key(|p| std::cmp::Reverse((p.created_at, p.seq)));
        out
    }

    /// Mint an AGREEMENT from an active offer: identical target, assigner,
    /// and rules; fresh uid; the offer is left untouched.
    pub fn make_agreement(
        &self,
        offer_uid: &str,
        assignee: impl Into<String>,
    ) -> Result<OdrlPolicy, PolicyError> {
        let mut inner = self.inner.write();
        let offer = inner
            .policies
            .get(offer_uid)
            .ok_or_else(|| PolicyError::UnknownPolicy(offer_uid.to_string()))?;
        if offer.kind != PolicyKind::Offer {
            return Err(PolicyError::NotAnOffer(offer_uid.to_string()));
        }
        if offer.status != PolicyStatus::Active {
            return Err(PolicyError::OfferInvalidated(offer_uid.to_string()));
        }
        let agreement = OdrlPolicy {
            uid: Uuid::new_v4().to_string(),
            kind: PolicyKind::Agreement,
            target: offer.target.clone(),
            assigner: offer.assigner.clone(),
            assignee: Some(assignee.into()),
            rules: offer.rules.clone(),
            status: PolicyStatus::Active,
            created_at: Utc::now(),
            source_offer_uid: Some(offer.uid.clone()),
            seq: inner.next_seq,
        };
        inner.next_seq += 1;
        self.persist(&agreement)?;
        inner.policies.insert(agreement.uid.clone(), agreement.clone());
        Ok(agreement)
    }

    /// Invalidate every ACTIVE policy bound to `target`; returns how many
    /// flipped. Idempotent, and INVALIDATED is terminal.
    pub fn invalidate_by_target(&self, target: &Urn) -> usize {
        let mut inner = self.inner.write();
        let mut flipped = Vec::new();
        for policy in inner.policies.values_mut() {
            if &policy.target == target && policy.status == PolicyStatus::Active {
                policy.status = PolicyStatus::Invalidated;
                flipped.push(policy.clone());
            }
        }
        drop(inner);
        for policy in &flipped {
            // best effort: the in-memory flip already happened
            let _ = self.persist(policy);
        }
        flipped.len()
    }

    pub fn count(&self) -> usize {
        self.inner.read().policies.len()
    }
}

// ---------------------------------------------------------------------------
// Wire document form, shared by negotiation messages and the admin API.

/// Policy document with the external key set: `uid`, `@type`, `target`,
/// `assigner`, `assignee`, `permission`, `prohibition`, `obligation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uid: Option<String>,
    #[serde(rename = "@type")]
    pub kind: PolicyKind,
    pub target: Urn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assigner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignee: Option<String>,
    #[serde(rename = "permission", default)]
    pub permissions: Vec<RuleDocument>,
    #[serde(rename = "prohibition", default)]
    pub prohibitions: Vec<RuleDocument>,
    #[serde(rename = "obligation", default)]
    pub obligations: Vec<RuleDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDocument {
    pub action: Action,
    #[serde(rename = "constraint", default)]
    pub constraints: Vec<ConstraintDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDocument {
    #[serde(rename = "leftOperand")]
    pub left_operand: LeftOperand,
    pub operator: Operator,
    #[serde(rename = "rightOperand")]
    pub right_operand: String,
}

impl PolicyDocument {
    pub fn from_policy(policy: &OdrlPolicy) -> PolicyDocument {
        let rules_to_doc = |rules: &[Rule]| {
            rules
                .iter()
                .map(|r| RuleDocument {
                    action: r.action,
                    constraints: r
                        .constraints
                        .iter()
                        .map(|c| ConstraintDocument {
                            left_operand: c.left_operand,
                            operator: c.operator,
                            right_operand: c.right_operand.clone(),
                        })
                        .collect(),
                })
                .collect()
        };
        PolicyDocument {
            uid: Some(policy.uid.clone()),
            kind: policy.kind,
            target: policy.target.clone(),
            assigner: Some(policy.assigner.clone()),
            assignee: policy.assignee.clone(),
            permissions: rules_to_doc(&policy.rules.permissions),
            prohibitions: rules_to_doc(&policy.rules.prohibitions),
            obligations: rules_to_doc(&policy.rules.obligations),
        }
    }

    /// Typed rule set of the document; validates constraint compatibility.
    pub fn rule_set(&self) -> Result<RuleSet, PolicyError> {
        let docs_to_rules = |docs: &[RuleDocument]| -> Result<Vec<Rule>, PolicyError> {
            docs.iter()
                .map(|d| {
                    let constraints = d
                        .constraints
                        .iter()
                        .map(|c| Constraint::new(c.left_operand, c.operator, c.right_operand.clone()))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(Rule {
                        action: d.action,
                        constraints,
                    })
                })
                .collect()
        };
        Ok(RuleSet {
            permissions: docs_to_rules(&self.permissions)?,
            prohibitions: docs_to_rules(&self.prohibitions)?,
            obligations: docs_to_rules(&self.obligations)?,
        })
    }
}
