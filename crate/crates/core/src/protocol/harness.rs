use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::messages::{BroadcastPacket, SiteMessage};
use super::roles::{aggregate, lead_initialize, remote_summarize, AggregateGradients, EncodedSite};
use super::surrogate::fit_global;
use crate::glm::{FitReport, NewtonOptions};
use crate::{Error, Result};

/// Carries a serialized request to one remote site and returns its
/// serialized reply. Implementations decide how the bytes travel; the math
/// on either side only ever sees payload text.
pub trait Transport: Sync {
    fn exchange(&self, site_id: u32, request: &str) -> Result<String>;
}

/// In-process transport over already-encoded sites: answers a broadcast
/// packet with the site's gradient/Hessian reply.
pub struct EncodedSitesTransport<'a> {
    sites: Vec<&'a EncodedSite>,
}

impl<'a> EncodedSitesTransport<'a> {
    pub fn new(sites: impl IntoIterator<Item = &'a EncodedSite>) -> Self {
        Self {
            sites: sites.into_iter().collect(),
        }
    }
}

impl Transport for EncodedSitesTransport<'_> {
    fn exchange(&self, site_id: u32, request: &str) -> Result<String> {
        let site = self
            .sites
            .iter()
            .find(|s| s.site_id == site_id)
            .ok_or_else(|| Error::protocol(format!("no route to site {site_id}")))?;
        let packet = BroadcastPacket::from_wire(request)?;
        remote_summarize(&packet, site)?.to_wire()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Ranking,
    Binning,
    Fit,
    Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptKind {
    /// Lead → every remote site.
    Broadcast,
    /// Remote site → lead.
    Reply,
    /// The lead's own summary, computed in place and logged for audit.
    LeadLocal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub stage: Stage,
    pub kind: TranscriptKind,
    /// Sender (the lead for broadcasts).
    pub site_id: u32,
    pub payload: String,
}

/// Append-only log of every payload exchanged, in site-id order within a
/// stage so it does not depend on scheduling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn push(&mut self, stage: Stage, kind: TranscriptKind, site_id: u32, payload: String) {
        self.entries.push(TranscriptEntry {
            stage,
            kind,
            site_id,
            payload,
        });
    }

    pub fn extend(&mut self, other: Transcript) {
        self.entries.extend(other.entries);
    }

    pub fn count(&self, stage: Stage, kind: TranscriptKind) -> usize {
        self.entries
            .iter()
            .filter(|e| e.stage == stage && e.kind == kind)
            .count()
    }

    pub fn payload_bytes(&self) -> usize {
        self.entries.iter().map(|e| e.payload.len()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct OneShotResult {
    pub fit: FitReport,
    pub lead_fit: FitReport,
    pub aggregate: AggregateGradients,
    pub transcript: Transcript,
}

/// Runs the protocol from the lead's point of view: the lead holds its own
/// encoded rows and reaches everyone else only through `transport`.
pub fn run_one_shot_with(
    lead: &EncodedSite,
    remote_ids: &[u32],
    transport: &dyn Transport,
    opts: &NewtonOptions,
) -> Result<OneShotResult> {
    let mut ids = remote_ids.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) || ids.contains(&lead.site_id) {
        return Err(Error::protocol(
            "remote site ids must be unique and exclude the lead",
        ));
    }

    let (packet, lead_fit) = lead_initialize(lead, opts)?;
    let request = packet.to_wire()?;
    let mut transcript = Transcript::default();
    transcript.push(
        Stage::Fit,
        TranscriptKind::Broadcast,
        lead.site_id,
        request.clone(),
    );

    let own = remote_summarize(&packet, lead)?;
    let own_wire = own.to_wire()?;

    let replies: Vec<Result<String>> = ids
        .par_iter()
        .map(|&id| transport.exchange(id, &request))
        .collect();

    let mut messages = Vec::with_capacity(ids.len() + 1);
    let mut entries = Vec::with_capacity(ids.len() + 1);
    entries.push((lead.site_id, TranscriptKind::LeadLocal, own_wire));
    messages.push(own);
    for (&id, reply) in ids.iter().zip(replies) {
        let wire = reply?;
        let msg = SiteMessage::from_wire(&wire)?;
        if msg.site_id != id {
            return Err(Error::protocol(format!(
                "reply routed to site {id} claims site {}",
                msg.site_id
            )));
        }
        messages.push(msg);
        entries.push((id, TranscriptKind::Reply, wire));
    }
    entries.sort_by_key(|(id, _, _)| *id);
    for (id, kind, wire) in entries {
        transcript.push(Stage::Fit, kind, id, wire);
    }

    let agg = aggregate(&messages)?;
    let fit = fit_global(lead, &packet, &agg, opts)?;
    Ok(OneShotResult {
        fit,
        lead_fit,
        aggregate: agg,
        transcript,
    })
}

/// One-shot federation over in-process sites, `sites[lead_index]` leading.
pub fn run_one_shot(
    sites: &[EncodedSite],
    lead_index: usize,
    opts: &NewtonOptions,
) -> Result<OneShotResult> {
    let lead = sites.get(lead_index).ok_or_else(|| {
        Error::config(format!(
            "lead index {lead_index} out of range for {} sites",
            sites.len()
        ))
    })?;
    let remotes: Vec<&EncodedSite> = sites
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != lead_index)
        .map(|(_, s)| s)
        .collect();
    let ids: Vec<u32> = remotes.iter().map(|s| s.site_id).collect();
    run_one_shot_with(lead, &ids, &EncodedSitesTransport::new(remotes), opts)
}
