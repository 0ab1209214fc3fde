use rand::seq::SliceRandom;

use super::dataset::{SiteDataset, SplitTag};
use super::federation::FederationConfig;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

/// Apportions `n` items by `proportions` with the largest-remainder rule:
/// every bucket gets `⌊p_j n⌋`, then the leftover items go one each to the
/// buckets with the largest fractional parts (ties: larger proportion, then
/// lower index).
pub fn largest_remainder_sizes(n: usize, proportions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let leftover = n.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa)
            .then(proportions[b].total_cmp(&proportions[a]))
            .then(a.cmp(&b))
    });
    for &j in order.iter().cycle().take(leftover) {
        sizes[j] += 1;
    }
    sizes
}

/// Randomly divides `data` into `K` disjoint sites (ids `1..=K`).
///
/// Row assignment is an unstratified uniform shuffle; within a site rows keep
/// their original relative order.
pub fn partition_sites(data: &SiteDataset, config: &FederationConfig) -> Result<Vec<SiteDataset>> {
    config.validate()?;
    let n = data.n_rows();
    let k = config.k();
    if n < k {
        return Err(Error::data(format!(
            "cannot split {n} rows across {k} sites"
        )));
    }
    if k == 1 {
        let mut only = data.clone();
        only.site_id = 1;
        return Ok(vec![only]);
    }
    let sizes = largest_remainder_sizes(n, &config.proportions);
    if let Some(j) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::data(format!("site {} would receive no rows", j + 1)));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(
        config.seed,
        stream::PARTITION,
    )));

    let mut sites = Vec::with_capacity(k);
    let mut start = 0;
    for (j, &size) in sizes.iter().enumerate() {
        let mut rows = idx[start..start + size].to_vec();
        rows.sort_unstable();
        start += size;
        let mut site = data.take_rows(&rows);
        site.site_id = j as u32 + 1;
        sites.push(site);
    }
    Ok(sites)
}

/// (train, validation, test) counts: validation and test are floored,
/// the remainder goes to train.
pub fn split_counts(n: usize, ratios: [f64; 3]) -> Result<(usize, usize, usize)> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::config("split ratios must be non-negative"));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios sum to {sum}, not 1")));
    }
    // The epsilon absorbs products such as 0.1 * 30 landing a hair below 3.
    let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let valid = floor(ratios[1]).min(n);
    let test = floor(ratios[2]).min(n - valid);
    Ok((n - valid - test, valid, test))
}

/// Tags every row train / validation / test.
pub fn split_train_valid_test(
    data: &SiteDataset,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SiteDataset> {
    let n = data.n_rows();
    let (train, valid, _) = split_counts(n, ratios)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(seed, stream::SPLIT)));
    let mut out = data.clone();
    for (pos, &row) in idx.iter().enumerate() {
        out.split[row] = if pos < train {
            SplitTag::Train
        } else if pos < train + valid {
            SplitTag::Validation
        } else {
            SplitTag::Test
        };
    }
    Ok(out)
}
