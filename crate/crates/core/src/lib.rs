//! Federated integer risk scorecards.
//!
//! The pipeline has five stages, each usable on its own:
//!
//! 1. [`ranking`]: per-site random-forest importance, federated by weighted ranks.
//! 2. [`binning`]: quantile cutoffs per site, federated by weighted averaging.
//! 3. [`glm`] + [`protocol`]: logistic regression fitted with a one-shot
//!    surrogate-likelihood exchange, then turned into points by [`scorecard`].
//! 4. [`eval`]: parsimony sweep over model size and plateau-based selection.
//! 5. [`eval`]: per-site test AUC with weighted mean and spread.
//!
//! [`data`] holds the tabular plumbing and [`experiment`] wires everything
//! into the three-arm (local / federated / pooled) comparison driven by the
//! `fedscore` binary.

pub mod binning;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod glm;
pub mod pipeline;
pub mod protocol;
pub mod ranking;
pub mod rng;
pub mod scorecard;

pub use error::{Error, Result};

/// Version stamped into every emitted file schema.
pub const FORMAT_VERSION: u32 = 1;
