use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// Midranks (1-based) of `scores`, ties sharing the average rank.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::data(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::data("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::data("labels must be 0 or 1"));
    }
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC: the share of positive/negative pairs the scores order
/// correctly, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucInterval {
    pub auc: f64,
    pub low: f64,
    pub high: f64,
}

/// AUC with a DeLong normal interval at `level`, clipped to [0, 1]. A zero
/// variance (e.g. perfect separation) yields the point interval.
pub fn auc_ci(scores: &[f64], labels: &[u8], level: f64) -> Result<AucInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let (pos, neg) = class_counts(scores, labels)?;
    if scores.len() < 10 {
        return Err(Error::data(format!(
            "an AUC interval needs at least 10 rows, got {}",
            scores.len()
        )));
    }
    let split = |cls: u8| -> Vec<f64> {
        scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == cls)
            .map(|(&s, _)| s)
            .collect()
    };
    let (xs, ys) = (split(1), split(0));
    let all = midranks(scores);
    let all_pos: Vec<f64> = all
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&r, _)| r)
        .collect();
    let all_neg: Vec<f64> = all
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&r, _)| r)
        .collect();
    let (m, n) = (pos as f64, neg as f64);

    // structural components: V10 per positive, V01 per negative
    let v10: Vec<f64> = all_pos
        .iter()
        .zip(midranks(&xs))
        .map(|(a, w)| (a - w) / n)
        .collect();
    let v01: Vec<f64> = all_neg
        .iter()
        .zip(midranks(&ys))
        .map(|(a, w)| 1.0 - (a - w) / m)
        .collect();
    let theta = v10.iter().sum::<f64>() / m;
    let var = |v: &[f64], mean: f64| -> f64 {
        if v.len() < 2 {
            return 0.0;
        }
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let variance = var(&v10, theta) / m + var(&v01, theta) / n;
    if !(variance > 0.0 && variance.is_finite()) {
        return Ok(AucInterval {
            auc: theta,
            low: theta,
            high: theta,
        });
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = z * variance.sqrt();
    Ok(AucInterval {
        auc: theta,
        low: (theta - half).max(0.0),
        high: (theta + half).min(1.0),
    })
}
