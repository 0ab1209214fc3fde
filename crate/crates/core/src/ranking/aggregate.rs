use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::SiteWeights;
use crate::{Error, Result};

/// One site's ranking. Only `site_id` and `ranks` are serialized; the raw
/// importances stay at the site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalRanking {
    pub site_id: u32,
    pub ranks: BTreeMap<String, u32>,
    #[serde(skip)]
    importances: BTreeMap<String, f64>,
}

/// Sorts names by `key` ascending, ties by name, and numbers them from 1.
fn rank_by<F: Fn(&str) -> f64>(
    names: impl Iterator<Item = String>,
    key: F,
) -> BTreeMap<String, u32> {
    let mut names: Vec<String> = names.collect();
    names.sort_by(|a, b| key(a).total_cmp(&key(b)).then_with(|| a.cmp(b)));
    names
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n, i as u32 + 1))
        .collect()
}

impl LocalRanking {
    /// Rank 1 goes to the largest importance; equal importances are ordered
    /// by variable name.
    pub fn from_importances(site_id: u32, importances: Vec<(String, f64)>) -> Self {
        let importances: BTreeMap<String, f64> = importances.into_iter().collect();
        let ranks = rank_by(importances.keys().cloned(), |n| -importances[n]);
        Self {
            site_id,
            ranks,
            importances,
        }
    }

    /// A ranking received over the wire (no importances).
    pub fn from_ranks(site_id: u32, ranks: BTreeMap<String, u32>) -> Result<Self> {
        let mut seen: Vec<u32> = ranks.values().copied().collect();
        seen.sort_unstable();
        if seen.iter().enumerate().any(|(i, &r)| r != i as u32 + 1) {
            return Err(Error::data(format!(
                "site {site_id}: ranks are not a permutation of 1..P"
            )));
        }
        Ok(Self {
            site_id,
            ranks,
            importances: BTreeMap::new(),
        })
    }

    pub fn importances(&self) -> &BTreeMap<String, f64> {
        &self.importances
    }

    /// Variables from most to least important.
    pub fn order(&self) -> Vec<String> {
        order_of(&self.ranks)
    }
}

fn order_of(ranks: &BTreeMap<String, u32>) -> Vec<String> {
    let mut v: Vec<(&String, &u32)> = ranks.iter().collect();
    v.sort_by_key(|(_, &r)| r);
    v.into_iter().map(|(n, _)| n.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRanking {
    pub weighted_sums: BTreeMap<String, f64>,
    pub global_ranks: BTreeMap<String, u32>,
}

impl GlobalRanking {
    pub fn order(&self) -> Vec<String> {
        order_of(&self.global_ranks)
    }
}

/// Orders variables by `Σ_j w_j q_j` ascending (ties by name).
pub fn aggregate_rankings(locals: &[LocalRanking], weights: &SiteWeights) -> Result<GlobalRanking> {
    let first = locals
        .first()
        .ok_or_else(|| Error::data("no local rankings"))?;
    if locals.len() != weights.len() {
        return Err(Error::config(format!(
            "{} rankings but {} weights",
            locals.len(),
            weights.len()
        )));
    }
    for l in &locals[1..] {
        if !l.ranks.keys().eq(first.ranks.keys()) {
            return Err(Error::data(format!(
                "site {} ranks a different variable set than site {}",
                l.site_id, first.site_id
            )));
        }
    }
    let weighted_sums: BTreeMap<String, f64> = first
        .ranks
        .keys()
        .map(|name| {
            // Summing in sorted order makes the total, and so the tie-breaks,
            // independent of the order the sites are listed in.
            let mut terms: Vec<f64> = locals
                .iter()
                .zip(weights.as_slice())
                .map(|(l, w)| w * f64::from(l.ranks[name]))
                .collect();
            terms.sort_by(f64::total_cmp);
            (name.clone(), terms.iter().sum())
        })
        .collect();
    let global_ranks = rank_by(weighted_sums.keys().cloned(), |n| weighted_sums[n]);
    Ok(GlobalRanking {
        weighted_sums,
        global_ranks,
    })
}
