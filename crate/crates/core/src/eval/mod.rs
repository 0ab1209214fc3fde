//! Discrimination metrics, the parsimony sweep and model selection.

mod auc;
mod metrics;
mod parsimony;

pub use auc::{auc, auc_ci, AucInterval};
pub use metrics::{weighted_metrics, EvaluationReport, SiteAuc};
pub use parsimony::{
    candidate_sets, parsimony_sweep, select_model, CandidateEvaluator, CurvePoint, ParsimonyCurve,
    Selection, SkippedCandidate,
};
