//! The site side of the simulation: a node owns its rows and only ever
//! answers serialized requests.

use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::binning::{
    local_category_shares, local_cutoffs, transform, BinningConfig, BinningPlan, CategoryShares,
    CutoffSet,
};
use crate::data::{SiteDataset, SplitTag};
use crate::eval::{auc, auc_ci, SiteAuc};
use crate::protocol::{remote_summarize, BroadcastPacket, EncodedSite, Transport};
use crate::ranking::{forest_importance, ForestParams};
use crate::scorecard::ScoreCard;
use crate::{Error, Result};

/// Requests a lead can send besides the protocol's broadcast packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "request", rename_all = "snake_case")]
pub enum Request {
    Describe,
    Rank { params: ForestParams, seed: u64 },
    Summarize { config: BinningConfig },
    ApplyPlan { plan: BinningPlan },
    Validate { card: ScoreCard },
    Test { card: ScoreCard, level: f64 },
}

impl Request {
    pub fn to_wire(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSummary {
    pub site_id: u32,
    pub n: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSummary {
    pub site_id: u32,
    pub cutoffs: CutoffSet,
    pub shares: CategoryShares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub site_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationScore {
    pub site_id: u32,
    /// `None` when the validation rows hold a single class.
    pub auc: Option<f64>,
}

pub struct SiteNode {
    data: SiteDataset,
    binned: RwLock<Option<SiteDataset>>,
}

impl SiteNode {
    pub fn new(data: SiteDataset) -> Self {
        Self {
            data,
            binned: RwLock::new(None),
        }
    }

    pub fn site_id(&self) -> u32 {
        self.data.site_id
    }

    /// Answers one serialized request with one serialized reply.
    pub fn handle(&self, request: &str) -> Result<String> {
        let value: serde_json::Value = serde_json::from_str(request).map_err(|e| {
            Error::protocol(format!("site {}: unreadable request: {e}", self.site_id()))
        })?;
        if value.get("request").is_none() {
            let packet = BroadcastPacket::from_wire(request)?;
            return self
                .with_binned(|b| {
                    remote_summarize(&packet, &EncodedSite::from_dataset(b, &packet.encoding)?)
                })?
                .to_wire();
        }
        let request: Request = serde_json::from_value(value).map_err(|e| {
            Error::protocol(format!("site {}: unknown request: {e}", self.site_id()))
        })?;
        let id = self.site_id();
        let reply = match request {
            Request::Describe => serde_json::to_string(&self.summary())?,
            Request::Rank { params, seed } => serde_json::to_string(&forest_importance(
                &self.data.subset(SplitTag::Train),
                &params,
                seed,
            )?)?,
            Request::Summarize { config } => {
                let train = self.data.subset(SplitTag::Train);
                serde_json::to_string(&BinningSummary {
                    site_id: id,
                    cutoffs: local_cutoffs(&train, &config)?,
                    shares: local_category_shares(&train),
                })?
            }
            Request::ApplyPlan { plan } => {
                let binned = transform(&self.data, &plan)?;
                *self
                    .binned
                    .write()
                    .map_err(|_| Error::protocol("site state poisoned"))? = Some(binned);
                serde_json::to_string(&Ack { site_id: id })?
            }
            Request::Validate { card } => {
                let auc = self.with_binned(|b| validation_auc(b, &card))?;
                serde_json::to_string(&ValidationScore { site_id: id, auc })?
            }
            Request::Test { card, level } => {
                serde_json::to_string(&self.with_binned(|b| test_auc(b, &card, level))?)?
            }
        };
        Ok(reply)
    }

    /// Variable declarations only; no rows.
    pub fn schema(&self) -> &crate::data::Schema {
        &self.data.schema
    }

    pub fn summary(&self) -> SiteSummary {
        SiteSummary {
            site_id: self.site_id(),
            n: self.data.n_rows(),
            n_train: self.data.count_tag(SplitTag::Train),
            n_validation: self.data.count_tag(SplitTag::Validation),
            n_test: self.data.count_tag(SplitTag::Test),
        }
    }

    pub(crate) fn with_binned<T>(&self, f: impl FnOnce(&SiteDataset) -> Result<T>) -> Result<T> {
        let guard = self
            .binned
            .read()
            .map_err(|_| Error::protocol("site state poisoned"))?;
        let binned = guard.as_ref().ok_or_else(|| {
            Error::protocol(format!("site {} has no binning plan yet", self.site_id()))
        })?;
        f(binned)
    }
}

/// AUC of the card on the validation rows; `None` if they hold one class.
pub fn validation_auc(binned: &SiteDataset, card: &ScoreCard) -> Result<Option<f64>> {
    let rows = binned.subset(SplitTag::Validation);
    if !rows.has_both_classes() {
        return Ok(None);
    }
    let scores: Vec<f64> = card
        .score_dataset(&rows)?
        .into_iter()
        .map(f64::from)
        .collect();
    auc(&scores, &rows.outcome).map(Some)
}

/// AUC and interval of the card on the test rows.
pub fn test_auc(binned: &SiteDataset, card: &ScoreCard, level: f64) -> Result<SiteAuc> {
    let rows = binned.subset(SplitTag::Test);
    let scores: Vec<f64> = card
        .score_dataset(&rows)?
        .into_iter()
        .map(f64::from)
        .collect();
    let ci = auc_ci(&scores, &rows.outcome, level)
        .map_err(|e| e.at_stage(format!("test rows of site {}", binned.site_id)))?;
    Ok(SiteAuc {
        site_id: binned.site_id,
        n: rows.n_rows(),
        auc: ci.auc,
        low: ci.low,
        high: ci.high,
    })
}

/// In-process network: routes each request to the addressed node.
pub struct LocalNetwork<'a> {
    nodes: &'a [SiteNode],
}

impl<'a> LocalNetwork<'a> {
    pub fn new(nodes: &'a [SiteNode]) -> Self {
        Self { nodes }
    }
}

impl Transport for LocalNetwork<'_> {
    fn exchange(&self, site_id: u32, request: &str) -> Result<String> {
        self.nodes
            .iter()
            .find(|n| n.site_id() == site_id)
            .ok_or_else(|| Error::protocol(format!("no route to site {site_id}")))?
            .handle(request)
    }
}
