use serde::{Deserialize, Serialize};

use crate::data::SiteWeights;
use crate::{Error, Result, FORMAT_VERSION};

/// Weighted mean (M1) and weighted standard deviation (M2) of per-site AUCs.
pub fn weighted_metrics(mus: &[f64], weights: &SiteWeights) -> Result<(f64, f64)> {
    if mus.len() != weights.len() {
        return Err(Error::config(format!(
            "{} site metrics but {} weights",
            mus.len(),
            weights.len()
        )));
    }
    let w = weights.as_slice();
    let m1: f64 = mus.iter().zip(w).map(|(m, w)| m * w).sum();
    let m2 = mus
        .iter()
        .zip(w)
        .map(|(m, w)| w * (m1 - m).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((m1, m2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAuc {
    pub site_id: u32,
    pub n: usize,
    pub auc: f64,
    pub low: f64,
    pub high: f64,
}

/// Test-set performance of one model across all sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub model: String,
    pub sites: Vec<SiteAuc>,
    pub m1: f64,
    pub m2: f64,
}

impl EvaluationReport {
    pub fn new(
        model: impl Into<String>,
        sites: Vec<SiteAuc>,
        weights: &SiteWeights,
    ) -> Result<Self> {
        let mus: Vec<f64> = sites.iter().map(|s| s.auc).collect();
        let (m1, m2) = weighted_metrics(&mus, weights)?;
        Ok(Self {
            format_version: FORMAT_VERSION,
            model: model.into(),
            sites,
            m1,
            m2,
        })
    }

    /// Unweighted mean and sample SD of the site AUCs.
    pub fn mean_sd(&self) -> (f64, f64) {
        let k = self.sites.len() as f64;
        let mean = self.sites.iter().map(|s| s.auc).sum::<f64>() / k;
        if self.sites.len() < 2 {
            return (mean, 0.0);
        }
        let var = self
            .sites
            .iter()
            .map(|s| (s.auc - mean).powi(2))
            .sum::<f64>()
            / (k - 1.0);
        (mean, var.sqrt())
    }
}
