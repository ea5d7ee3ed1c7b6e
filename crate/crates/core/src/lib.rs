//! Measuring how concentrated the web's infrastructure is, country by country.
//!
//! The crate works over per-country lists of popular websites annotated with
//! the provider they use at four layers (hosting, DNS, TLD, certificate
//! authority) and computes:
//!
//! - a centralization score, the earth mover's distance from the observed
//!   provider distribution to a fully decentralized one ([`metrics`], with an
//!   exact transportation solver in [`emd`] as an independent check),
//! - per-provider usage and endemicity, which separate global providers from
//!   regional ones ([`metrics`], [`classify`]),
//! - insularity, the share of sites served by providers based in the same
//!   country ([`metrics`], [`pipeline`]).
//!
//! [`ingest`] parses the raw datasets and joins them into
//! [`ingest::WebsiteRecord`]s; [`pipeline`] turns records into reports.

pub mod classify;
pub mod emd;
pub mod ingest;
pub mod layer;
pub mod metrics;
pub mod pipeline;

pub use layer::Layer;
pub use metrics::{CentralizationScore, ProviderDistribution};
