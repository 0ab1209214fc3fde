use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Site proportions of the ten-site study cohort (3224 … 12092 of 80613).
pub const COHORT_SITE_PROPORTIONS: [f64; 10] =
    [0.04, 0.05, 0.07, 0.09, 0.10, 0.11, 0.12, 0.13, 0.14, 0.15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    #[default]
    Equal,
    SampleSize,
    Custom(Vec<f64>),
}

/// Normalized per-site weights `w_j`, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteWeights(Vec<f64>);

impl SiteWeights {
    pub fn equal(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// `n_j / Σ n`.
    pub fn sample_size(sizes: &[usize]) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        if sizes.is_empty() || total == 0 {
            return Err(Error::config(
                "sample-size weights need at least one non-empty site",
            ));
        }
        Ok(Self(
            sizes.iter().map(|&n| n as f64 / total as f64).collect(),
        ))
    }

    pub fn custom(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(
                "custom weights must be finite and non-negative",
            ));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::config("custom weights must not all be zero"));
        }
        Ok(Self(raw.iter().map(|w| w / total).collect()))
    }

    pub fn from_mode(mode: &WeightsMode, sizes: &[usize]) -> Result<Self> {
        match mode {
            WeightsMode::Equal => {
                if sizes.is_empty() {
                    return Err(Error::config("no sites"));
                }
                Ok(Self::equal(sizes.len()))
            }
            WeightsMode::SampleSize => Self::sample_size(sizes),
            WeightsMode::Custom(w) => {
                if w.len() != sizes.len() {
                    return Err(Error::config(format!(
                        "{} custom weights for {} sites",
                        w.len(),
                        sizes.len()
                    )));
                }
                Self::custom(w)
            }
        }
    }

    pub fn single() -> Self {
        Self(vec![1.0])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub proportions: Vec<f64>,
    pub weights_mode: WeightsMode,
    pub seed: u64,
    /// (train, validation, test)
    pub split_ratios: [f64; 3],
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            proportions: COHORT_SITE_PROPORTIONS.to_vec(),
            weights_mode: WeightsMode::Equal,
            seed: 20221017,
            split_ratios: [0.7, 0.1, 0.2],
        }
    }
}

impl FederationConfig {
    pub fn equal_sites(k: usize, seed: u64) -> Self {
        Self {
            proportions: vec![1.0 / k as f64; k],
            seed,
            ..Self::default()
        }
    }

    pub fn k(&self) -> usize {
        self.proportions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.proportions.is_empty() {
            return Err(Error::config("K must be at least 1"));
        }
        if self
            .proportions
            .iter()
            .any(|p| !(p.is_finite() && *p > 0.0))
        {
            return Err(Error::config("site proportions must be positive"));
        }
        let sum: f64 = self.proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "site proportions sum to {sum}, not 1"
            )));
        }
        if self
            .split_ratios
            .iter()
            .any(|r| !(r.is_finite() && *r >= 0.0))
        {
            return Err(Error::config("split ratios must be non-negative"));
        }
        let s: f64 = self.split_ratios.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split ratios sum to {s}, not 1")));
        }
        if let WeightsMode::Custom(w) = &self.weights_mode {
            if w.len() != self.k() {
                return Err(Error::config("custom weights length differs from K"));
            }
            SiteWeights::custom(w)?;
        }
        Ok(())
    }

    pub fn weights(&self, sizes: &[usize]) -> Result<SiteWeights> {
        SiteWeights::from_mode(&self.weights_mode, sizes)
    }
}
