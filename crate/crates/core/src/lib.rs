//! Core building blocks of a self-contained data-space connector: a federated
//! metadata graph store, a typed DCAT3 catalog profile, an ODRL 2.2 policy
//! engine, the facade mapping the internal entity model to the neutral DCAT
//! view, and the contract-negotiation and transfer state machines.

pub mod dcat;
pub mod facade;
pub mod negotiation;
pub mod odrl;
pub mod store;
pub mod transfer;
pub mod urn;

pub use urn::{Env, Urn, UrnError, UrnKind};
