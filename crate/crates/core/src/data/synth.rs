use rand::Rng as _;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Column, SiteDataset};
use super::schema::{Schema, VariableSpec};
use crate::glm::sigmoid;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

/// How one synthetic feature is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeaturePlan {
    /// Normal(mean, sd); enters the linear predictor with one coefficient.
    Continuous { name: String, mean: f64, sd: f64 },
    /// Multinomial over `probs`; the first category is the reference and
    /// each other category gets its own coefficient.
    Categorical {
        name: String,
        probs: Vec<f64>,
        #[serde(default)]
        labels: Vec<String>,
    },
}

impl FeaturePlan {
    pub fn name(&self) -> &str {
        match self {
            FeaturePlan::Continuous { name, .. } | FeaturePlan::Categorical { name, .. } => name,
        }
    }

    /// Coefficients this feature consumes from `beta_true`.
    pub fn width(&self) -> usize {
        match self {
            FeaturePlan::Continuous { .. } => 1,
            FeaturePlan::Categorical { probs, .. } => probs.len().saturating_sub(1),
        }
    }

    fn spec(&self) -> VariableSpec {
        match self {
            FeaturePlan::Continuous { name, .. } => VariableSpec::continuous(name.clone()),
            FeaturePlan::Categorical {
                name,
                probs,
                labels,
            } => {
                let labels = if labels.is_empty() {
                    (1..=probs.len()).map(|i| format!("c{i}")).collect()
                } else {
                    labels.clone()
                };
                VariableSpec::categorical(name.clone(), labels)
            }
        }
    }
}

/// Draws `n` rows with `y ~ Bernoulli(σ(xᵀβ))`, where `x` is an intercept
/// followed by each feature's encoding (raw value for continuous, indicator
/// columns for non-reference categories). All rows are tagged `train`.
pub fn generate_synthetic(
    n: usize,
    beta_true: &[f64],
    plan: &[FeaturePlan],
    outcome_name: &str,
    seed: u64,
) -> Result<SiteDataset> {
    if n == 0 {
        return Err(Error::config("synthetic dataset needs n >= 1"));
    }
    let width = 1 + plan.iter().map(FeaturePlan::width).sum::<usize>();
    if beta_true.len() != width {
        return Err(Error::config(format!(
            "beta_true has {} entries, feature plan encodes {width} (including intercept)",
            beta_true.len()
        )));
    }
    let schema = Schema::new(plan.iter().map(FeaturePlan::spec).collect(), outcome_name)?;

    let mut rng = rng_from_seed(derive_seed(seed, stream::SYNTH));
    let mut eta = vec![beta_true[0]; n];
    let mut columns = Vec::with_capacity(plan.len());
    let mut offset = 1;
    for feature in plan {
        match feature {
            FeaturePlan::Continuous { name, mean, sd } => {
                let dist = Normal::new(*mean, *sd)
                    .map_err(|e| Error::config(format!("feature `{name}`: {e}")))?;
                let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
                for (e, x) in eta.iter_mut().zip(&xs) {
                    *e += beta_true[offset] * x;
                }
                columns.push(Column::Continuous(xs));
            }
            FeaturePlan::Categorical {
                name,
                probs,
                labels,
            } => {
                if !labels.is_empty() && labels.len() != probs.len() {
                    return Err(Error::config(format!(
                        "feature `{name}`: labels and probs differ in length"
                    )));
                }
                let dist = WeightedIndex::new(probs)
                    .map_err(|e| Error::config(format!("feature `{name}`: {e}")))?;
                let cs: Vec<u32> = (0..n).map(|_| dist.sample(&mut rng) as u32).collect();
                for (e, &c) in eta.iter_mut().zip(&cs) {
                    if c > 0 {
                        *e += beta_true[offset + c as usize - 1];
                    }
                }
                columns.push(Column::Categorical(cs));
            }
        }
        offset += feature.width();
    }
    let outcome: Vec<u8> = eta
        .iter()
        .map(|&e| u8::from(rng.random::<f64>() < sigmoid(e)))
        .collect();
    SiteDataset::new(1, schema, columns, outcome)
}
