//! Risk engine for replicated, diversity-aware deployments.
//!
//! Ingests vulnerability intelligence (CVE feed, EPSS export, exploit
//! index), predicts base scores for not-yet-evaluated CVEs from their
//! descriptions, clusters descriptions to surface the same flaw filed under
//! different ids, reassesses every CVE with age/patch/exploitation factors
//! and EPSS weighting, and ranks candidate node configurations by security
//! and resilience risk.

pub mod cluster;
pub mod configurator;
pub mod corpus;
pub mod error;
pub mod pipeline;
pub mod predictor;
pub mod scoring;
pub mod textfeat;

pub use error::{Error, Result};
