//! The five-stage pipeline, run identically by every arm of the comparison.
//!
//! An [`Arm`] decides where data lives: a single site ([`LocalArm`]), all
//! sites concatenated ([`PooledArm`]) or all sites behind a transport with
//! only serialized payloads crossing it ([`FederatedArm`]). [`develop`] then
//! ranks, bins, sweeps model sizes, selects and refits the same way for all.

mod arms;
mod node;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use arms::{FederatedArm, LocalArm, Phase, PooledArm, TranscriptSection};
pub use node::{
    test_auc, validation_auc, Ack, BinningSummary, LocalNetwork, Request, SiteNode, SiteSummary,
    ValidationScore,
};

use crate::binning::{BinningConfig, BinningPlan};
use crate::data::SiteWeights;
use crate::eval::{
    parsimony_sweep, select_model, EvaluationReport, ParsimonyCurve, Selection, SiteAuc,
};
use crate::glm::{CoefficientVector, DesignEncoding, NewtonOptions};
use crate::ranking::ForestParams;
use crate::scorecard::ScoreCard;
use crate::{Error, Result, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub binning: BinningConfig,
    pub forest: ForestParams,
    pub s_max: u32,
    /// Largest model size considered by the sweep.
    pub d_max: usize,
    /// Plateau tolerance on Ψ for selection.
    pub epsilon: f64,
    /// Variables every candidate model must contain.
    pub forced: Vec<String>,
    pub ci_level: f64,
    /// Seed for the ranking forests.
    pub seed: u64,
    pub newton: NewtonOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            binning: BinningConfig::default(),
            forest: ForestParams::default(),
            s_max: 100,
            d_max: 8,
            epsilon: 0.005,
            forced: Vec::new(),
            ci_level: 0.95,
            seed: 20221017,
            newton: NewtonOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.binning.validate()?;
        if self.s_max == 0 {
            return Err(Error::config("S_max must be positive"));
        }
        if self.d_max == 0 {
            return Err(Error::config("D must be at least 1"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::config(format!(
                "confidence level {} outside (0, 1)",
                self.ci_level
            )));
        }
        if self.forest.n_trees == 0 || self.forest.min_leaf == 0 {
            return Err(Error::config(
                "forest needs at least one tree and a positive leaf size",
            ));
        }
        Ok(())
    }
}

/// Which site leads the federated fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadChoice {
    Site(u32),
    Largest,
}

impl Default for LeadChoice {
    fn default() -> Self {
        LeadChoice::Site(1)
    }
}

impl FromStr for LeadChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "largest" => Ok(LeadChoice::Largest),
            other => other
                .parse::<u32>()
                .ok()
                .filter(|&id| id >= 1)
                .map(LeadChoice::Site)
                .ok_or_else(|| {
                    Error::config(format!(
                        "lead must be a site id or `largest`, got `{other}`"
                    ))
                }),
        }
    }
}

/// One way of placing the data.
pub trait Arm: Sync {
    fn name(&self) -> String;
    /// Variables in global rank order, most important first.
    fn rank(&self) -> Result<Vec<String>>;
    /// Computes the binning plan and applies it to every dataset the arm uses.
    fn bin(&self) -> Result<BinningPlan>;
    fn fit(&self, vars: &[String], phase: Phase) -> Result<(CoefficientVector, DesignEncoding)>;
    /// Per-site validation AUC of `card`, ordered like [`Arm::psi_weights`].
    fn validate(&self, card: &ScoreCard, phase: Phase) -> Result<Vec<Option<f64>>>;
    fn psi_weights(&self) -> &SiteWeights;
    /// Test AUC of `card` at every site.
    fn test(&self, card: &ScoreCard) -> Result<Vec<SiteAuc>>;
}

/// Everything an arm produced before touching test rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub format_version: u32,
    pub arm: String,
    pub ranking: Vec<String>,
    pub plan: BinningPlan,
    pub curve: ParsimonyCurve,
    pub selection: Selection,
    pub beta: CoefficientVector,
    pub encoding: DesignEncoding,
    pub card: ScoreCard,
}

/// Fits the final model on the selected variables and derives its card.
pub fn refit_final(
    arm: &dyn Arm,
    vars: &[String],
    s_max: u32,
) -> Result<(CoefficientVector, DesignEncoding, ScoreCard)> {
    let (beta, encoding) = arm.fit(vars, Phase::Refit)?;
    let card = ScoreCard::derive(&beta, &encoding, s_max)?;
    Ok((beta, encoding, card))
}

/// Ranking, binning, parsimony sweep, selection and refit.
pub fn develop(arm: &dyn Arm, cfg: &PipelineConfig) -> Result<ArmModel> {
    let name = arm.name();
    let tag = |stage: &str| {
        let name = name.clone();
        let stage = stage.to_string();
        move |e: Error| e.at_stage(format!("{name}/{stage}"))
    };
    let ranking = arm.rank().map_err(tag("ranking"))?;
    let plan = arm.bin().map_err(tag("binning"))?;
    let evaluator = |vars: &[String]| -> Result<Vec<Option<f64>>> {
        let (beta, encoding) = arm.fit(vars, Phase::Sweep)?;
        let card = ScoreCard::derive(&beta, &encoding, cfg.s_max)?;
        arm.validate(&card, Phase::Sweep)
    };
    let curve = parsimony_sweep(
        &evaluator,
        &ranking,
        &cfg.forced,
        cfg.d_max,
        cfg.epsilon,
        arm.psi_weights(),
    )
    .map_err(tag("selection"))?;
    let selection = select_model(&curve).map_err(tag("selection"))?;
    let (beta, encoding, card) =
        refit_final(arm, &selection.variables, cfg.s_max).map_err(tag("refit"))?;
    Ok(ArmModel {
        format_version: FORMAT_VERSION,
        arm: name,
        ranking,
        plan,
        curve,
        selection,
        beta,
        encoding,
        card,
    })
}

/// Test-set report for a developed model; M1/M2 use `weights`.
pub fn evaluate(
    arm: &dyn Arm,
    model: &ArmModel,
    weights: &SiteWeights,
) -> Result<EvaluationReport> {
    let sites = arm
        .test(&model.card)
        .map_err(|e| e.at_stage(format!("{}/evaluation", model.arm)))?;
    EvaluationReport::new(model.arm.clone(), sites, weights)
}
