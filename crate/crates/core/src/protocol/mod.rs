//! One-shot surrogate-likelihood federation of a logistic regression.
//!
//! The lead site fits `β̄` on its own rows and broadcasts it. Every other
//! site answers once with its sample size and the gradient and Hessian of
//! its average log-likelihood at `β̄`. The lead then maximizes
//!
//! ```text
//! L̃(β) = L₁(β) + (∇L(β̄) − ∇L₁(β̄))ᵀβ + ½(β − β̄)ᵀ(∇²L(β̄) − ∇²L₁(β̄))(β − β̄)
//! ```
//!
//! where `∇L` and `∇²L` are the sample-size weighted averages over all sites.
//! Only the fixed-size payloads in [`messages`] ever cross a site boundary.

mod harness;
pub mod messages;
mod roles;
mod surrogate;

pub use harness::{
    run_one_shot, run_one_shot_with, EncodedSitesTransport, OneShotResult, Stage, Transcript,
    TranscriptEntry, TranscriptKind, Transport,
};
pub use messages::{BroadcastPacket, SiteMessage, PROTOCOL_VERSION};
pub use roles::{aggregate, lead_initialize, remote_summarize, AggregateGradients, EncodedSite};
pub use surrogate::{
    fit_global, surrogate_gradient, surrogate_hessian, surrogate_loglik, Surrogate,
};
