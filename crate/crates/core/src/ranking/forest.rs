use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::LocalRanking;
use crate::data::{Column, SiteDataset};
use crate::rng::{derive_seed, rng_from_seed, stream, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    /// Candidate variables per split; `None` means ⌈√P⌉.
    pub mtry: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_leaf: 5,
            max_depth: None,
            mtry: None,
        }
    }
}

enum Feature<'a> {
    Continuous(&'a [f64]),
    Categorical { codes: &'a [u32], levels: usize },
}

enum Rule {
    Threshold(f64),
    Subset(Vec<bool>),
}

struct Split {
    var: usize,
    /// Weighted child impurity `n_l·G_l + n_r·G_r`.
    child_impurity: f64,
    rule: Rule,
}

/// Grows one tree over a bootstrap sample. Every node is a range `lo..hi`
/// that is shared by `members` and by each continuous feature's presorted
/// sample order; splitting partitions all of them stably, so no node ever
/// re-sorts.
struct TreeBuilder<'a> {
    features: Vec<Feature<'a>>,
    y: &'a [u8],
    boot: Vec<usize>,
    members: Vec<u32>,
    sorted: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    params: ForestParams,
    mtry: usize,
    importance: Vec<f64>,
}

/// `n·G` for a node with `pos` positives out of `n`.
fn scaled_gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    n * 2.0 * p * (1.0 - p)
}

/// Moves the `keep` entries of `v` to the front without reordering either side.
fn stable_partition(v: &mut [u32], keep: &[bool], scratch: &mut Vec<u32>) -> usize {
    scratch.clear();
    let mut w = 0;
    for i in 0..v.len() {
        let s = v[i];
        if keep[s as usize] {
            v[w] = s;
            w += 1;
        } else {
            scratch.push(s);
        }
    }
    v[w..].copy_from_slice(scratch);
    w
}

impl<'a> TreeBuilder<'a> {
    fn new(
        features: Vec<Feature<'a>>,
        y: &'a [u8],
        boot: Vec<usize>,
        params: ForestParams,
        mtry: usize,
    ) -> Self {
        let n = boot.len();
        let sorted = features
            .iter()
            .map(|f| match f {
                Feature::Continuous(xs) => {
                    let mut order: Vec<u32> = (0..n as u32).collect();
                    order.sort_by(|&a, &b| xs[boot[a as usize]].total_cmp(&xs[boot[b as usize]]));
                    order
                }
                Feature::Categorical { .. } => Vec::new(),
            })
            .collect();
        let p = features.len();
        Self {
            features,
            y,
            members: (0..n as u32).collect(),
            boot,
            sorted,
            goes_left: vec![false; n],
            scratch: Vec::with_capacity(n),
            params,
            mtry,
            importance: vec![0.0; p],
        }
    }

    fn label(&self, s: u32) -> u8 {
        self.y[self.boot[s as usize]]
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut Rng) {
        let n = hi - lo;
        let pos = self.members[lo..hi]
            .iter()
            .filter(|&&s| self.label(s) == 1)
            .count();
        if pos == 0 || pos == n || n < 2 * self.params.min_leaf {
            return;
        }
        if self.params.max_depth.is_some_and(|d| depth >= d) {
            return;
        }
        let candidates = index::sample(rng, self.features.len(), self.mtry);
        let mut best: Option<Split> = None;
        for var in candidates.iter() {
            if let Some(split) = self.best_split(var, lo, hi, pos as f64) {
                if best
                    .as_ref()
                    .is_none_or(|b| split.child_impurity < b.child_impurity)
                {
                    best = Some(split);
                }
            }
        }
        let Some(split) = best else { return };
        let parent = scaled_gini(pos as f64, n as f64);
        let gain = parent - split.child_impurity;
        if gain <= 0.0 {
            return;
        }
        self.importance[split.var] += gain;

        for i in lo..hi {
            let s = self.members[i] as usize;
            let r = self.boot[s];
            self.goes_left[s] = match (&self.features[split.var], &split.rule) {
                (Feature::Continuous(xs), Rule::Threshold(t)) => xs[r] <= *t,
                (Feature::Categorical { codes, .. }, Rule::Subset(left)) => left[codes[r] as usize],
                _ => unreachable!("rule kind follows the feature kind"),
            };
        }
        let mid = lo
            + stable_partition(
                &mut self.members[lo..hi],
                &self.goes_left,
                &mut self.scratch,
            );
        for order in self.sorted.iter_mut().filter(|o| !o.is_empty()) {
            stable_partition(&mut order[lo..hi], &self.goes_left, &mut self.scratch);
        }
        self.grow(lo, mid, depth + 1, rng);
        self.grow(mid, hi, depth + 1, rng);
    }

    fn best_split(&self, var: usize, lo: usize, hi: usize, total_pos: f64) -> Option<Split> {
        let min_leaf = self.params.min_leaf;
        let n = hi - lo;
        match &self.features[var] {
            Feature::Continuous(xs) => {
                let order = &self.sorted[var][lo..hi];
                let value = |i: usize| xs[self.boot[order[i] as usize]];
                let mut best: Option<(f64, f64)> = None;
                let mut left_pos = 0.0;
                for (i, &id) in order[..n - 1].iter().enumerate() {
                    left_pos += f64::from(self.label(id));
                    let nl = i + 1;
                    if nl < min_leaf || n - nl < min_leaf || value(i) == value(i + 1) {
                        continue;
                    }
                    let imp = scaled_gini(left_pos, nl as f64)
                        + scaled_gini(total_pos - left_pos, (n - nl) as f64);
                    if best.is_none_or(|(b, _)| imp < b) {
                        best = Some((imp, value(i)));
                    }
                }
                best.map(|(child_impurity, threshold)| Split {
                    var,
                    child_impurity,
                    rule: Rule::Threshold(threshold),
                })
            }
            Feature::Categorical { codes, levels } => {
                let mut count = vec![0usize; *levels];
                let mut positive = vec![0usize; *levels];
                for &s in &self.members[lo..hi] {
                    let c = codes[self.boot[s as usize]] as usize;
                    count[c] += 1;
                    positive[c] += usize::from(self.label(s));
                }
                // Order present categories by positive rate; the best binary
                // partition is a prefix of that order.
                let mut present: Vec<usize> = (0..*levels).filter(|&c| count[c] > 0).collect();
                present.sort_by(|&a, &b| {
                    let ra = positive[a] as f64 / count[a] as f64;
                    let rb = positive[b] as f64 / count[b] as f64;
                    ra.total_cmp(&rb).then(a.cmp(&b))
                });
                let mut best: Option<(f64, usize)> = None;
                let (mut nl, mut pl) = (0usize, 0usize);
                for k in 0..present.len().saturating_sub(1) {
                    nl += count[present[k]];
                    pl += positive[present[k]];
                    if nl < min_leaf || n - nl < min_leaf {
                        continue;
                    }
                    let imp = scaled_gini(pl as f64, nl as f64)
                        + scaled_gini(total_pos - pl as f64, (n - nl) as f64);
                    if best.is_none_or(|(b, _)| imp < b) {
                        best = Some((imp, k));
                    }
                }
                best.map(|(child_impurity, k)| {
                    let mut left = vec![false; *levels];
                    for &c in &present[..=k] {
                        left[c] = true;
                    }
                    Split {
                        var,
                        child_impurity,
                        rule: Rule::Subset(left),
                    }
                })
            }
        }
    }
}

/// Mean decrease in Gini impurity per schema variable, averaged over trees.
///
/// Each tree gets its own stream derived from `seed`, so the result does not
/// depend on how rayon schedules the trees.
pub fn gini_importances(data: &SiteDataset, params: &ForestParams, seed: u64) -> Result<Vec<f64>> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::data("empty training set"));
    }
    if !data.has_both_classes() {
        return Err(Error::SingleClass);
    }
    if params.n_trees == 0 || params.min_leaf == 0 {
        return Err(Error::config("forest needs n_trees >= 1 and min_leaf >= 1"));
    }
    if n > u32::MAX as usize {
        return Err(Error::data("too many rows for the forest"));
    }
    let p = data.schema.len();
    let mtry = params
        .mtry
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p);
    let base = derive_seed(seed, stream::FOREST);

    let per_tree: Vec<Vec<f64>> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(base, t as u64));
            let features = data
                .columns
                .iter()
                .zip(&data.schema.variables)
                .map(|(col, spec)| match col {
                    Column::Continuous(v) => Feature::Continuous(v),
                    Column::Categorical(c) => Feature::Categorical {
                        codes: c,
                        levels: spec.categories.len(),
                    },
                })
                .collect();
            let mut boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            boot.shuffle(&mut rng);
            let mut builder = TreeBuilder::new(features, &data.outcome, boot, *params, mtry);
            builder.grow(0, n, 0, &mut rng);
            let total = n as f64;
            builder.importance.iter().map(|v| v / total).collect()
        })
        .collect();

    let mut mean = vec![0.0; p];
    for tree in &per_tree {
        for (m, v) in mean.iter_mut().zip(tree) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= params.n_trees as f64;
    }
    Ok(mean)
}

/// Ranks the site's variables by forest importance (1 = most important).
/// Callers pass the training rows only.
pub fn forest_importance(
    data: &SiteDataset,
    params: &ForestParams,
    seed: u64,
) -> Result<LocalRanking> {
    let importances = gini_importances(data, params, seed)?;
    let named = data
        .schema
        .variables
        .iter()
        .map(|v| v.name.clone())
        .zip(importances)
        .collect();
    Ok(LocalRanking::from_importances(data.site_id, named))
}
