use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::node::{
    test_auc, validation_auc, BinningSummary, Request, SiteNode, SiteSummary, ValidationScore,
};
use super::{Arm, LeadChoice, PipelineConfig};
use crate::binning::{transform, BinningPlan};
use crate::data::{SiteDataset, SiteWeights, SplitTag, WeightsMode};
use crate::eval::SiteAuc;
use crate::glm::{fit_mle, CoefficientVector, DesignEncoding};
use crate::protocol::{
    run_one_shot_with, EncodedSite, Stage, Transcript, TranscriptKind, Transport,
};
use crate::ranking::{aggregate_rankings, forest_importance, LocalRanking};
use crate::scorecard::ScoreCard;
use crate::{Error, Result};

/// Where in the pipeline an exchange happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    Ranking,
    Binning,
    Sweep,
    Refit,
    Test,
}

/// Payloads of one exchange round (or one one-shot fit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSection {
    pub phase: Phase,
    /// Candidate variables for fit and validation rounds, else empty.
    pub variables: Vec<String>,
    pub transcript: Transcript,
}

impl TranscriptSection {
    fn sort_key(&self) -> (Phase, usize, Option<Stage>) {
        (
            self.phase,
            self.variables.len(),
            self.transcript.entries.first().map(|e| e.stage),
        )
    }
}

fn fit_local(
    binned: &SiteDataset,
    vars: &[String],
    cfg: &PipelineConfig,
) -> Result<(CoefficientVector, DesignEncoding)> {
    let encoding = DesignEncoding::for_dataset(binned, vars)?;
    let site = EncodedSite::from_dataset(binned, &encoding)?;
    let fit = fit_mle(&site.design.x, &site.design.y, &cfg.newton)?;
    Ok((fit.beta, encoding))
}

fn not_binned() -> Error {
    Error::config("binning must run before fitting")
}

/// Everything on one site: trained, tuned and validated there, tested
/// everywhere.
pub struct LocalArm<'a> {
    sites: &'a [SiteDataset],
    index: usize,
    cfg: &'a PipelineConfig,
    weights: SiteWeights,
    binned: OnceLock<Vec<SiteDataset>>,
}

impl<'a> LocalArm<'a> {
    pub fn new(sites: &'a [SiteDataset], index: usize, cfg: &'a PipelineConfig) -> Result<Self> {
        if index >= sites.len() {
            return Err(Error::config(format!("site index {index} out of range")));
        }
        Ok(Self {
            sites,
            index,
            cfg,
            weights: SiteWeights::single(),
            binned: OnceLock::new(),
        })
    }

    fn binned(&self) -> Result<&[SiteDataset]> {
        self.binned.get().map(Vec::as_slice).ok_or_else(not_binned)
    }
}

impl Arm for LocalArm<'_> {
    fn name(&self) -> String {
        format!("local-{:02}", self.sites[self.index].site_id)
    }

    fn rank(&self) -> Result<Vec<String>> {
        let train = self.sites[self.index].subset(SplitTag::Train);
        Ok(forest_importance(&train, &self.cfg.forest, self.cfg.seed)?.order())
    }

    fn bin(&self) -> Result<BinningPlan> {
        let plan = BinningPlan::local(
            &self.sites[self.index].subset(SplitTag::Train),
            &self.cfg.binning,
        )?;
        let binned = self
            .sites
            .par_iter()
            .map(|s| transform(s, &plan))
            .collect::<Result<Vec<_>>>()?;
        let _ = self.binned.set(binned);
        Ok(plan)
    }

    fn fit(&self, vars: &[String], _phase: Phase) -> Result<(CoefficientVector, DesignEncoding)> {
        fit_local(&self.binned()?[self.index], vars, self.cfg)
    }

    fn validate(&self, card: &ScoreCard, _phase: Phase) -> Result<Vec<Option<f64>>> {
        Ok(vec![validation_auc(&self.binned()?[self.index], card)?])
    }

    fn psi_weights(&self) -> &SiteWeights {
        &self.weights
    }

    fn test(&self, card: &ScoreCard) -> Result<Vec<SiteAuc>> {
        self.binned()?
            .iter()
            .map(|b| test_auc(b, card, self.cfg.ci_level))
            .collect()
    }
}

/// Centralized baseline: training rows of all sites concatenated; tuning
/// and testing per site like the other arms.
pub struct PooledArm<'a> {
    sites: &'a [SiteDataset],
    train: SiteDataset,
    cfg: &'a PipelineConfig,
    weights: SiteWeights,
    binned: OnceLock<(Vec<SiteDataset>, SiteDataset)>,
}

impl<'a> PooledArm<'a> {
    pub fn new(
        sites: &'a [SiteDataset],
        weights: SiteWeights,
        cfg: &'a PipelineConfig,
    ) -> Result<Self> {
        if weights.len() != sites.len() {
            return Err(Error::config("one weight per site is required"));
        }
        let parts: Vec<SiteDataset> = sites.iter().map(|s| s.subset(SplitTag::Train)).collect();
        Ok(Self {
            sites,
            train: SiteDataset::concat(&parts, 0)?,
            cfg,
            weights,
            binned: OnceLock::new(),
        })
    }

    fn binned(&self) -> Result<&(Vec<SiteDataset>, SiteDataset)> {
        self.binned.get().ok_or_else(not_binned)
    }
}

impl Arm for PooledArm<'_> {
    fn name(&self) -> String {
        "pooled".into()
    }

    fn rank(&self) -> Result<Vec<String>> {
        Ok(forest_importance(&self.train, &self.cfg.forest, self.cfg.seed)?.order())
    }

    fn bin(&self) -> Result<BinningPlan> {
        let plan = BinningPlan::local(&self.train, &self.cfg.binning)?;
        let sites = self
            .sites
            .par_iter()
            .map(|s| transform(s, &plan))
            .collect::<Result<Vec<_>>>()?;
        let train = transform(&self.train, &plan)?;
        let _ = self.binned.set((sites, train));
        Ok(plan)
    }

    fn fit(&self, vars: &[String], _phase: Phase) -> Result<(CoefficientVector, DesignEncoding)> {
        fit_local(&self.binned()?.1, vars, self.cfg)
    }

    fn validate(&self, card: &ScoreCard, _phase: Phase) -> Result<Vec<Option<f64>>> {
        self.binned()?
            .0
            .iter()
            .map(|b| validation_auc(b, card))
            .collect()
    }

    fn psi_weights(&self) -> &SiteWeights {
        &self.weights
    }

    fn test(&self, card: &ScoreCard) -> Result<Vec<SiteAuc>> {
        self.binned()?
            .0
            .iter()
            .map(|b| test_auc(b, card, self.cfg.ci_level))
            .collect()
    }
}

/// The federated arm. It holds the lead's own node; every other site is
/// reachable only through `transport`, and everything sent or received is
/// kept in the transcript.
pub struct FederatedArm<'a> {
    lead: &'a SiteNode,
    site_ids: Vec<u32>,
    transport: &'a dyn Transport,
    cfg: &'a PipelineConfig,
    summaries: Vec<SiteSummary>,
    weights: SiteWeights,
    log: Mutex<Vec<TranscriptSection>>,
}

fn parse<T: DeserializeOwned>(site_id: u32, wire: &str) -> Result<T> {
    serde_json::from_str(wire)
        .map_err(|e| Error::protocol(format!("unreadable reply from site {site_id}: {e}")))
}

/// Sends `request` from `lead` to every site (the lead answers itself in
/// place) and returns the replies in site-id order.
fn round(
    lead: &SiteNode,
    site_ids: &[u32],
    transport: &dyn Transport,
    stage: Stage,
    request: &Request,
) -> Result<(Vec<String>, Transcript)> {
    let wire = request.to_wire()?;
    let replies: Vec<Result<String>> = site_ids
        .par_iter()
        .map(|&id| {
            if id == lead.site_id() {
                lead.handle(&wire)
            } else {
                transport.exchange(id, &wire)
            }
        })
        .collect();
    let mut transcript = Transcript::default();
    transcript.push(stage, TranscriptKind::Broadcast, lead.site_id(), wire);
    let mut out = Vec::with_capacity(site_ids.len());
    for (&id, reply) in site_ids.iter().zip(replies) {
        let reply = reply?;
        let kind = if id == lead.site_id() {
            TranscriptKind::LeadLocal
        } else {
            TranscriptKind::Reply
        };
        transcript.push(stage, kind, id, reply.clone());
        out.push(reply);
    }
    Ok((out, transcript))
}

impl<'a> FederatedArm<'a> {
    /// Picks the lead among `nodes` and learns every site's size. Only the
    /// lead's node is used directly; `site_ids` lists all participants.
    pub fn connect(
        nodes: &'a [SiteNode],
        transport: &'a dyn Transport,
        lead: LeadChoice,
        weights_mode: &WeightsMode,
        cfg: &'a PipelineConfig,
    ) -> Result<Self> {
        let mut site_ids: Vec<u32> = nodes.iter().map(SiteNode::site_id).collect();
        site_ids.sort_unstable();
        if site_ids.is_empty() || site_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("sites must be non-empty with distinct ids"));
        }
        let find = |id: u32| {
            nodes
                .iter()
                .find(|n| n.site_id() == id)
                .ok_or_else(|| Error::config(format!("lead site {id} does not exist")))
        };
        // The coordinator of the size round is the requested lead, or the
        // lowest site id when the lead depends on the sizes.
        let coordinator = match lead {
            LeadChoice::Site(id) => find(id)?,
            LeadChoice::Largest => find(site_ids[0])?,
        };
        let (replies, transcript) = round(
            coordinator,
            &site_ids,
            transport,
            Stage::Setup,
            &Request::Describe,
        )?;
        let summaries: Vec<SiteSummary> = site_ids
            .iter()
            .zip(&replies)
            .map(|(&id, r)| parse(id, r))
            .collect::<Result<_>>()?;
        let lead_node = match lead {
            LeadChoice::Site(_) => coordinator,
            LeadChoice::Largest => {
                let best = summaries
                    .iter()
                    .max_by(|a, b| a.n.cmp(&b.n).then(b.site_id.cmp(&a.site_id)))
                    .expect("non-empty");
                find(best.site_id)?
            }
        };
        let sizes: Vec<usize> = summaries.iter().map(|s| s.n).collect();
        let weights = SiteWeights::from_mode(weights_mode, &sizes)?;
        Ok(Self {
            lead: lead_node,
            site_ids,
            transport,
            cfg,
            summaries,
            weights,
            log: Mutex::new(vec![TranscriptSection {
                phase: Phase::Setup,
                variables: Vec::new(),
                transcript,
            }]),
        })
    }

    pub fn lead_id(&self) -> u32 {
        self.lead.site_id()
    }

    pub fn site_ids(&self) -> &[u32] {
        &self.site_ids
    }

    pub fn summaries(&self) -> &[SiteSummary] {
        &self.summaries
    }

    /// Every logged section in a scheduling-independent order.
    pub fn transcript(&self) -> Vec<TranscriptSection> {
        let mut log = self.log.lock().map(|l| l.clone()).unwrap_or_default();
        log.sort_by_key(TranscriptSection::sort_key);
        log
    }

    fn record(&self, phase: Phase, variables: &[String], transcript: Transcript) {
        if let Ok(mut log) = self.log.lock() {
            log.push(TranscriptSection {
                phase,
                variables: variables.to_vec(),
                transcript,
            });
        }
    }

    fn round(&self, stage: Stage, request: &Request) -> Result<(Vec<String>, Transcript)> {
        round(self.lead, &self.site_ids, self.transport, stage, request)
    }

    /// Installs an already computed plan at every site (e.g. to evaluate a
    /// saved model).
    pub fn apply_plan(&self, plan: &BinningPlan) -> Result<()> {
        let (_, transcript) =
            self.round(Stage::Binning, &Request::ApplyPlan { plan: plan.clone() })?;
        self.record(Phase::Binning, &[], transcript);
        Ok(())
    }

    fn remote_ids(&self) -> Vec<u32> {
        self.site_ids
            .iter()
            .copied()
            .filter(|&id| id != self.lead_id())
            .collect()
    }
}

impl Arm for FederatedArm<'_> {
    fn name(&self) -> String {
        "federated".into()
    }

    fn rank(&self) -> Result<Vec<String>> {
        let request = Request::Rank {
            params: self.cfg.forest,
            seed: self.cfg.seed,
        };
        let (replies, transcript) = self.round(Stage::Ranking, &request)?;
        let locals: Vec<LocalRanking> = self
            .site_ids
            .iter()
            .zip(&replies)
            .map(|(&id, r)| parse(id, r))
            .collect::<Result<_>>()?;
        self.record(Phase::Ranking, &[], transcript);
        Ok(aggregate_rankings(&locals, &self.weights)?.order())
    }

    fn bin(&self) -> Result<BinningPlan> {
        let request = Request::Summarize {
            config: self.cfg.binning.clone(),
        };
        let (replies, mut transcript) = self.round(Stage::Binning, &request)?;
        let summaries: Vec<BinningSummary> = self
            .site_ids
            .iter()
            .zip(&replies)
            .map(|(&id, r)| parse(id, r))
            .collect::<Result<_>>()?;
        let cutoffs: Vec<_> = summaries.iter().map(|s| s.cutoffs.clone()).collect();
        let shares: Vec<_> = summaries.iter().map(|s| s.shares.clone()).collect();
        let plan = BinningPlan::federate(
            &cutoffs,
            &shares,
            &self.weights,
            &self.lead.schema().variables,
            &self.cfg.binning,
        )?;
        let (_, applied) =
            self.round(Stage::Binning, &Request::ApplyPlan { plan: plan.clone() })?;
        transcript.extend(applied);
        self.record(Phase::Binning, &[], transcript);
        Ok(plan)
    }

    fn fit(&self, vars: &[String], phase: Phase) -> Result<(CoefficientVector, DesignEncoding)> {
        let (encoding, lead) = self.lead.with_binned(|b| {
            let encoding = DesignEncoding::for_dataset(b, vars)?;
            let site = EncodedSite::from_dataset(b, &encoding)?;
            Ok((encoding, site))
        })?;
        let result =
            run_one_shot_with(&lead, &self.remote_ids(), self.transport, &self.cfg.newton)?;
        self.record(phase, vars, result.transcript);
        Ok((result.fit.beta, encoding))
    }

    fn validate(&self, card: &ScoreCard, phase: Phase) -> Result<Vec<Option<f64>>> {
        let (replies, transcript) =
            self.round(Stage::Evaluation, &Request::Validate { card: card.clone() })?;
        let scores: Vec<ValidationScore> = self
            .site_ids
            .iter()
            .zip(&replies)
            .map(|(&id, r)| parse(id, r))
            .collect::<Result<_>>()?;
        self.record(phase, &card.variable_names(), transcript);
        Ok(scores.into_iter().map(|s| s.auc).collect())
    }

    fn psi_weights(&self) -> &SiteWeights {
        &self.weights
    }

    fn test(&self, card: &ScoreCard) -> Result<Vec<SiteAuc>> {
        let request = Request::Test {
            card: card.clone(),
            level: self.cfg.ci_level,
        };
        let (replies, transcript) = self.round(Stage::Evaluation, &request)?;
        let out = self
            .site_ids
            .iter()
            .zip(&replies)
            .map(|(&id, r)| parse(id, r))
            .collect::<Result<_>>()?;
        self.record(Phase::Test, &card.variable_names(), transcript);
        Ok(out)
    }
}
