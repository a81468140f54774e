//! Canonical entity identifiers.
//!
//! Two grammars are accepted:
//! `urn:li:domain:{name}` for domains and
//! `urn:li:dataset:(urn:li:dataPlatform:{platform},{name},{env})` for datasets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const DOMAIN_PREFIX: &str = "urn:li:domain:";
const DATASET_PREFIX: &str = "urn:li:dataset:(";
const PLATFORM_PREFIX: &str = "urn:li:dataPlatform:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed urn `{urn}`: {reason}")]
pub struct UrnError {
    pub urn: String,
    pub reason: String,
}

impl UrnError {
    fn new(urn: &str, reason: impl Into<String>) -> Self {
        UrnError {
            urn: urn.to_string(),
            reason: reason.into(),
        }
    }
}

/// Which grammar an urn belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UrnKind {
    Domain,
    Dataset,
}

/// Deployment environment token of a dataset urn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Env {
    #[serde(rename = "PROD")]
    Prod,
    #[serde(rename = "DEV")]
    Dev,
    #[serde(rename = "TEST")]
    Test,
}

impl Env {
    pub fn as_str(self) -> &'static str {
        match self {
            Env::Prod => "PROD",
            Env::Dev => "DEV",
            Env::Test => "TEST",
        }
    }

    fn parse(s: &str, urn: &str) -> Result<Self, UrnError> {
        match s {
            "PROD" => Ok(Env::Prod),
            "DEV" => Ok(Env::Dev),
            "TEST" => Ok(Env::Test),
            other => Err(UrnError::new(
                urn,
                format!("env `{other}` is not one of PROD, DEV, TEST"),
            )),
        }
    }
}

/// A validated canonical urn. Ordering and equality follow the rendered text,
/// so `Ord` gives the deterministic listing order used throughout the store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Urn {
    text: String,
}

impl Urn {
    /// Parse and validate an urn under either grammar.
    pub fn parse(s: &str) -> Result<Urn, UrnError> {
        if let Some(name) = s.strip_prefix(DOMAIN_PREFIX) {
            check_token(name, s, "domain name")?;
            return Ok(Urn {
                text: s.to_string(),
            });
        }
        if let Some(rest) = s.strip_prefix(DATASET_PREFIX) {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| UrnError::new(s, "missing closing parenthesis"))?;
            let tuple = inner.strip_prefix(PLATFORM_PREFIX).ok_or_else(|| {
                UrnError::new(s, format!("dataset tuple must start with `{PLATFORM_PREFIX}`"))
            })?;
            let mut parts = tuple.split(',');
            let (platform, name, env) = match (parts.next(), parts.next(), parts.next(), parts.next())
            {
                (Some(p), Some(n), Some(e), None) => (p, n, e),
                _ => {
                    return Err(UrnError::new(
                        s,
                        "dataset tuple must have exactly three comma-separated tokens",
                    ))
                }
            };
            check_token(platform, s, "platform")?;
            check_token(name, s, "dataset name")?;
            Env::parse(env, s)?;
            return Ok(Urn {
                text: s.to_string(),
            });
        }
        Err(UrnError::new(
            s,
            "urn must start with `urn:li:domain:` or `urn:li:dataset:(`",
        ))
    }

    /// Build a domain urn from its name token.
    pub fn domain(name: &str) -> Result<Urn, UrnError> {
        Urn::parse(&format!("{DOMAIN_PREFIX}{name}"))
    }

    /// Build a dataset urn from its platform/name/env tokens.
    pub fn dataset(platform: &str, name: &str, env: Env) -> Result<Urn, UrnError> {
        Urn::parse(&format!(
            "{DATASET_PREFIX}{PLATFORM_PREFIX}{platform},{name},{})",
            env.as_str()
        ))
    }

    pub fn kind(&self) -> UrnKind {
        if self.text.starts_with(DOMAIN_PREFIX) {
            UrnKind::Domain
        } else {
            UrnKind::Dataset
        }
    }

    pub fn is_dataset(&self) -> bool {
        self.kind() == UrnKind::Dataset
    }

    pub fn is_domain(&self) -> bool {
        self.kind() == UrnKind::Domain
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Platform, name, and env of a dataset urn; `None` for domains.
    pub fn dataset_parts(&self) -> Option<(&str, &str, Env)> {
        let inner = self
            .text
            .strip_prefix(DATASET_PREFIX)?
            .strip_suffix(')')?
            .strip_prefix(PLATFORM_PREFIX)?;
        let mut parts = inner.split(',');
        let platform = parts.next()?;
        let name = parts.next()?;
        let env = Env::parse(parts.next()?, &self.text).ok()?;
        Some((platform, name, env))
    }

    /// Name token of a domain urn; `None` for datasets.
    pub fn domain_name(&self) -> Option<&str> {
        self.text.strip_prefix(DOMAIN_PREFIX)
    }
}

fn check_token(token: &str, urn: &str, what: &str) -> Result<(), UrnError> {
    if token.is_empty() {
        return Err(UrnError::new(urn, format!("{what} token is empty")));
    }
    if token.contains([',', '(', ')']) {
        return Err(UrnError::new(
            urn,
            format!("{what} token contains a comma or parenthesis"),
        ));
    }
    Ok(())
}

impl fmt::Display for Urn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for Urn {
    type Err = UrnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Urn::parse(s)
    }
}

impl Serialize for Urn {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Urn {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Urn::parse(&s).map_err(serde::de::Error::custom)
    }
}
