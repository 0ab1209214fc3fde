//! Quantile discretization of continuous variables.
//!
//! Each site computes type-7 sample quantiles of its training rows at the
//! configured percentiles; the coordinator averages them with the site
//! weights. Categorical variables pass through, except that rare categories
//! are folded into `Other` when a variable has more than `max_categories`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Column, SiteDataset, SiteWeights, VariableKind, VariableSpec};
use crate::{Error, Result};

pub const OTHER_LABEL: &str = "Other";
pub const SINGLE_LABEL: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinningConfig {
    /// Interior percentiles, strictly increasing in (0, 100).
    pub percentiles: Vec<f64>,
    pub max_categories: usize,
    /// Round shared cutoffs to multiples of this before they leave a site.
    pub share_grid: Option<f64>,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            percentiles: vec![5.0, 20.0, 80.0, 95.0],
            max_categories: 5,
            share_grid: None,
        }
    }
}

impl BinningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.percentiles.is_empty() {
            return Err(Error::config("at least one percentile is required"));
        }
        if self.percentiles.iter().any(|k| !(*k > 0.0 && *k < 100.0)) {
            return Err(Error::config(
                "percentiles must lie strictly between 0 and 100",
            ));
        }
        if self.percentiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("percentiles must be strictly increasing"));
        }
        if self.max_categories < 2 {
            return Err(Error::config("max_categories must be at least 2"));
        }
        if let Some(g) = self.share_grid {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::config("share_grid must be positive"));
            }
        }
        Ok(())
    }
}

/// Interior cutoffs per continuous variable. Serializes as
/// `{"variable": [c1, c2, ...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CutoffSet(pub BTreeMap<String, Vec<f64>>);

impl CutoffSet {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.0.get(name).map(Vec::as_slice)
    }
}

/// Sample quantile of sorted data by linear interpolation between order
/// statistics (Hyndman–Fan type 7): `h = (n−1)·k/100`,
/// `q = x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋])`.
pub fn type7_quantile(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * percentile / 100.0;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Display form of a cutoff: at most four decimals, trailing zeros trimmed.
pub fn format_cutoff(c: f64) -> String {
    let s = format!("{:.4}", c);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Drops cutoffs that repeat their predecessor (including ones that only
/// coincide after display rounding, which would give duplicate labels), then
/// removes the cutoff closest to its left neighbour until at most
/// `max_categories − 1` remain.
pub fn collapse(mut cuts: Vec<f64>, max_categories: usize) -> Vec<f64> {
    cuts.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(cuts.len());
    for c in cuts {
        if out
            .last()
            .is_none_or(|&last| format_cutoff(last) != format_cutoff(c))
        {
            out.push(c);
        }
    }
    let cap = max_categories.saturating_sub(1);
    while out.len() > cap {
        let i = (1..out.len())
            .min_by(|&a, &b| (out[a] - out[a - 1]).total_cmp(&(out[b] - out[b - 1])))
            .unwrap_or(0);
        out.remove(i);
    }
    out
}

/// Interval labels: `<c1`, `[c1,c2)`, …, `>=cm`; `all` when there are no cutoffs.
pub fn interval_labels(cuts: &[f64]) -> Vec<String> {
    if cuts.is_empty() {
        return vec![SINGLE_LABEL.to_string()];
    }
    let mut labels = Vec::with_capacity(cuts.len() + 1);
    labels.push(format!("<{}", format_cutoff(cuts[0])));
    for w in cuts.windows(2) {
        labels.push(format!("[{},{})", format_cutoff(w[0]), format_cutoff(w[1])));
    }
    labels.push(format!(">={}", format_cutoff(cuts[cuts.len() - 1])));
    labels
}

/// Left-closed bin index: the number of cutoffs `<= v`.
pub fn bin_index(cuts: &[f64], v: f64) -> usize {
    cuts.partition_point(|&c| c <= v)
}

/// Cutoffs from one site's training rows.
pub fn local_cutoffs(data: &SiteDataset, config: &BinningConfig) -> Result<CutoffSet> {
    config.validate()?;
    let mut out = BTreeMap::new();
    for (spec, col) in data.schema.variables.iter().zip(&data.columns) {
        let Column::Continuous(values) = col else {
            continue;
        };
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let cuts = match (sorted.first(), sorted.last()) {
            (Some(lo), Some(hi)) if lo < hi => {
                let raw = config
                    .percentiles
                    .iter()
                    .map(|&k| type7_quantile(&sorted, k));
                let raw: Vec<f64> = match config.share_grid {
                    Some(g) => raw.map(|c| (c / g).round() * g).collect(),
                    None => raw.collect(),
                };
                collapse(raw, config.max_categories)
            }
            _ => Vec::new(),
        };
        out.insert(spec.name.clone(), cuts);
    }
    Ok(CutoffSet(out))
}

/// Weighted average of site cutoffs, slot by slot.
///
/// A site whose vector is shorter than the longest one (it collapsed
/// duplicates, or the variable was constant there) has no well-defined slot
/// alignment and sits out; the remaining weights are renormalized.
pub fn federate_cutoffs(locals: &[CutoffSet], weights: &SiteWeights) -> Result<CutoffSet> {
    let first = locals
        .first()
        .ok_or_else(|| Error::data("no site cutoffs"))?;
    if locals.len() != weights.len() {
        return Err(Error::config(format!(
            "{} cutoff sets but {} weights",
            locals.len(),
            weights.len()
        )));
    }
    let mut out = BTreeMap::new();
    for name in first.0.keys() {
        let mut vectors = Vec::with_capacity(locals.len());
        for (j, l) in locals.iter().enumerate() {
            let v = l.get(name).ok_or_else(|| {
                Error::data(format!(
                    "variable `{name}` missing from site {} cutoffs",
                    j + 1
                ))
            })?;
            vectors.push(v);
        }
        let len = vectors.iter().map(|v| v.len()).max().unwrap_or(0);
        let contributing: Vec<usize> = (0..vectors.len())
            .filter(|&j| vectors[j].len() == len)
            .collect();
        let wsum: f64 = contributing.iter().map(|&j| weights.get(j)).sum();
        let merged: Vec<f64> = if len == 0 || wsum <= 0.0 {
            Vec::new()
        } else {
            (0..len)
                .map(|i| {
                    contributing
                        .iter()
                        .map(|&j| weights.get(j) * vectors[j][i])
                        .sum::<f64>()
                        / wsum
                })
                .collect()
        };
        out.insert(name.clone(), collapse(merged, usize::MAX));
    }
    for (j, l) in locals.iter().enumerate() {
        if l.0.len() != first.0.len() || !l.0.keys().all(|k| first.0.contains_key(k)) {
            return Err(Error::data(format!(
                "site {} reports a different variable set",
                j + 1
            )));
        }
    }
    Ok(CutoffSet(out))
}

/// Share of training rows in each category, per categorical variable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryShares(pub BTreeMap<String, Vec<f64>>);

pub fn local_category_shares(data: &SiteDataset) -> CategoryShares {
    let n = data.n_rows().max(1) as f64;
    let mut out = BTreeMap::new();
    for (spec, col) in data.schema.variables.iter().zip(&data.columns) {
        if let Column::Categorical(codes) = col {
            let mut counts = vec![0.0; spec.categories.len()];
            for &c in codes {
                counts[c as usize] += 1.0;
            }
            out.insert(
                spec.name.clone(),
                counts.into_iter().map(|c| c / n).collect(),
            );
        }
    }
    CategoryShares(out)
}

/// Everything a site needs to discretize its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningPlan {
    pub cutoffs: CutoffSet,
    /// Categorical variable → labels folded into `Other`.
    #[serde(default)]
    pub merges: BTreeMap<String, Vec<String>>,
    pub max_categories: usize,
}

impl BinningPlan {
    pub fn from_cutoffs(cutoffs: CutoffSet, max_categories: usize) -> Self {
        Self {
            cutoffs,
            merges: BTreeMap::new(),
            max_categories,
        }
    }

    /// Federates cutoffs and category shares into one plan. Categorical
    /// variables over the cap keep their `max_categories − 1` most common
    /// categories (weighted share across sites) and fold the rest into `Other`.
    pub fn federate(
        cutoffs: &[CutoffSet],
        shares: &[CategoryShares],
        weights: &SiteWeights,
        schema_vars: &[VariableSpec],
        config: &BinningConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut unified = federate_cutoffs(cutoffs, weights)?;
        for cuts in unified.0.values_mut() {
            *cuts = collapse(std::mem::take(cuts), config.max_categories);
        }
        if shares.len() != weights.len() {
            return Err(Error::config(
                "category shares and weights differ in length",
            ));
        }
        let mut merges = BTreeMap::new();
        for spec in schema_vars
            .iter()
            .filter(|v| v.kind == VariableKind::Categorical)
        {
            let k = spec.categories.len();
            if k <= config.max_categories {
                continue;
            }
            let mut pooled = vec![0.0; k];
            for (j, s) in shares.iter().enumerate() {
                let v =
                    s.0.get(&spec.name)
                        .filter(|v| v.len() == k)
                        .ok_or_else(|| {
                            Error::data(format!("site {} lacks shares for `{}`", j + 1, spec.name))
                        })?;
                for (p, x) in pooled.iter_mut().zip(v) {
                    *p += weights.get(j) * x;
                }
            }
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| pooled[b].total_cmp(&pooled[a]).then(a.cmp(&b)));
            let keep = config.max_categories - 1;
            let mut folded: Vec<usize> = order[keep..].to_vec();
            // an existing "Other" category is always folded, never kept apart
            if let Some(o) = spec.category_index(OTHER_LABEL) {
                if let Some(pos) = order[..keep].iter().position(|&c| c == o as usize) {
                    folded.push(order[pos]);
                    folded.retain(|&c| c != order[keep]);
                }
            }
            folded.sort_unstable();
            merges.insert(
                spec.name.clone(),
                folded
                    .into_iter()
                    .map(|c| spec.categories[c].clone())
                    .collect(),
            );
        }
        Ok(Self {
            cutoffs: unified,
            merges,
            max_categories: config.max_categories,
        })
    }

    /// Plan from a single dataset (local and pooled arms).
    pub fn local(data: &SiteDataset, config: &BinningConfig) -> Result<Self> {
        Self::federate(
            &[local_cutoffs(data, config)?],
            &[local_category_shares(data)],
            &SiteWeights::single(),
            &data.schema.variables,
            config,
        )
    }
}

/// Turns every continuous variable into interval categories and applies
/// category folding, yielding an all-categorical dataset.
pub fn transform(data: &SiteDataset, plan: &BinningPlan) -> Result<SiteDataset> {
    let mut vars = Vec::with_capacity(data.schema.len());
    let mut columns = Vec::with_capacity(data.schema.len());
    for (spec, col) in data.schema.variables.iter().zip(&data.columns) {
        match col {
            Column::Continuous(values) => {
                let cuts = plan.cutoffs.get(&spec.name).ok_or_else(|| {
                    Error::data(format!(
                        "no cutoffs for continuous variable `{}`",
                        spec.name
                    ))
                })?;
                let mut v = VariableSpec::categorical(spec.name.clone(), interval_labels(cuts));
                v.forced_include = spec.forced_include;
                vars.push(v);
                columns.push(Column::Categorical(
                    values.iter().map(|&x| bin_index(cuts, x) as u32).collect(),
                ));
            }
            Column::Categorical(codes) => {
                let folded = plan.merges.get(&spec.name);
                match folded {
                    Some(folded) if !folded.is_empty() => {
                        let mut labels: Vec<String> = spec
                            .categories
                            .iter()
                            .filter(|c| !folded.contains(c))
                            .cloned()
                            .collect();
                        labels.push(OTHER_LABEL.to_string());
                        let other = labels.len() as u32 - 1;
                        let remap: Vec<u32> = spec
                            .categories
                            .iter()
                            .map(|c| {
                                labels
                                    .iter()
                                    .position(|l| l == c)
                                    .map_or(other, |p| p as u32)
                            })
                            .collect();
                        let mut v = VariableSpec::categorical(spec.name.clone(), labels);
                        v.forced_include = spec.forced_include;
                        vars.push(v);
                        columns.push(Column::Categorical(
                            codes.iter().map(|&c| remap[c as usize]).collect(),
                        ));
                    }
                    _ => {
                        if spec.categories.len() > plan.max_categories {
                            return Err(Error::data(format!(
                                "`{}` has {} categories (max {}) and no folding plan",
                                spec.name,
                                spec.categories.len(),
                                plan.max_categories
                            )));
                        }
                        vars.push(spec.clone());
                        columns.push(col.clone());
                    }
                }
            }
        }
    }
    let schema = crate::data::Schema {
        variables: vars,
        outcome_name: data.schema.outcome_name.clone(),
    };
    schema.validate_structure()?;
    let out = SiteDataset {
        site_id: data.site_id,
        schema,
        columns,
        outcome: data.outcome.clone(),
        split: data.split.clone(),
    };
    out.check()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Schema;

    fn one_var(values: Vec<f64>) -> SiteDataset {
        let n = values.len();
        SiteDataset::new(
            1,
            Schema::new(vec![VariableSpec::continuous("x")], "y").unwrap(),
            vec![Column::Continuous(values)],
            (0..n).map(|i| (i % 2) as u8).collect(),
        )
        .unwrap()
    }

    #[test]
    fn grid_zero_to_hundred() {
        let c = local_cutoffs(
            &one_var((0..=100).map(f64::from).collect()),
            &BinningConfig::default(),
        )
        .unwrap();
        assert_eq!(c.get("x").unwrap(), &[5.0, 20.0, 80.0, 95.0]);
    }

    #[test]
    fn two_point_interpolation() {
        let c = local_cutoffs(&one_var(vec![10.0, 0.0]), &BinningConfig::default()).unwrap();
        let got = c.get("x").unwrap();
        for (g, e) in got.iter().zip([0.5, 2.0, 8.0, 9.5]) {
            assert!((g - e).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn constant_is_single_category() {
        let ds = one_var(vec![3.0; 7]);
        let c = local_cutoffs(&ds, &BinningConfig::default()).unwrap();
        assert!(c.get("x").unwrap().is_empty());
        let t = transform(&ds, &BinningPlan::from_cutoffs(c, 5)).unwrap();
        assert_eq!(t.schema.variables[0].categories, vec!["all"]);
    }

    #[test]
    fn federation_examples() {
        let a = CutoffSet([("x".to_string(), vec![10.0, 20.0, 80.0, 90.0])].into());
        let b = CutoffSet([("x".to_string(), vec![20.0, 20.0, 80.0, 110.0])].into());
        let f = federate_cutoffs(&[a.clone(), b], &SiteWeights::equal(2)).unwrap();
        assert_eq!(f.get("x").unwrap(), &[15.0, 20.0, 80.0, 100.0]);
        assert_eq!(
            federate_cutoffs(std::slice::from_ref(&a), &SiteWeights::single()).unwrap(),
            a
        );

        let a = CutoffSet([("x".to_string(), vec![0.0])].into());
        let b = CutoffSet([("x".to_string(), vec![4.0])].into());
        let f = federate_cutoffs(&[a, b], &SiteWeights::custom(&[0.25, 0.75]).unwrap()).unwrap();
        assert_eq!(f.get("x").unwrap(), &[3.0]);
    }

    #[test]
    fn shorter_sites_sit_out() {
        let a = CutoffSet([("x".to_string(), vec![1.0, 2.0])].into());
        let b = CutoffSet([("x".to_string(), vec![5.0])].into());
        let c = CutoffSet([("x".to_string(), vec![3.0, 4.0])].into());
        let f = federate_cutoffs(&[a, b, c], &SiteWeights::equal(3)).unwrap();
        assert_eq!(f.get("x").unwrap(), &[2.0, 3.0]);
    }

    #[test]
    fn missing_variable_is_an_error() {
        let a = CutoffSet([("x".to_string(), vec![1.0])].into());
        let b = CutoffSet([("z".to_string(), vec![1.0])].into());
        assert!(federate_cutoffs(&[a, b], &SiteWeights::equal(2)).is_err());
    }

    #[test]
    fn left_closed_bins_and_labels() {
        let cuts = [70.0, 100.0, 120.0];
        let labels = interval_labels(&cuts);
        assert_eq!(labels, vec!["<70", "[70,100)", "[100,120)", ">=120"]);
        assert_eq!(labels[bin_index(&cuts, 70.0)], "[70,100)");
        assert_eq!(bin_index(&cuts, 3.0), 0);
        assert_eq!(bin_index(&cuts, 120.0), 3);
        assert_eq!(interval_labels(&[]), vec!["all"]);
    }

    #[test]
    fn cap_merges_closest_cutoffs() {
        assert_eq!(collapse(vec![1.0, 1.0, 2.0, 10.0], 5), vec![1.0, 2.0, 10.0]);
        assert_eq!(collapse(vec![1.0, 2.0, 10.0, 20.0], 3), vec![1.0, 20.0]);
    }

    #[test]
    fn share_grid_rounds_before_sharing() {
        let cfg = BinningConfig {
            share_grid: Some(10.0),
            ..Default::default()
        };
        let c = local_cutoffs(&one_var((0..=100).map(f64::from).collect()), &cfg).unwrap();
        assert_eq!(c.get("x").unwrap(), &[10.0, 20.0, 80.0, 100.0]);
    }

    #[test]
    fn rare_categories_fold_into_other() {
        let schema = Schema::new(
            vec![VariableSpec::categorical(
                "c",
                ["a", "b", "c", "d", "e", "f", "g"],
            )],
            "y",
        )
        .unwrap();
        let codes: Vec<u32> = [0, 0, 0, 1, 1, 2, 2, 2, 2, 3, 4, 5, 6, 6].to_vec();
        let n = codes.len();
        let ds = SiteDataset::new(1, schema, vec![Column::Categorical(codes)], vec![0; n]).unwrap();
        let plan = BinningPlan::local(&ds, &BinningConfig::default()).unwrap();
        assert_eq!(plan.merges["c"], vec!["d", "e", "f"]);
        let t = transform(&ds, &plan).unwrap();
        assert_eq!(
            t.schema.variables[0].categories,
            vec!["a", "b", "c", "g", "Other"]
        );
        assert_eq!(t.label(0, 9), Some("Other"));
        assert_eq!(t.label(0, 13), Some("g"));
    }
}
