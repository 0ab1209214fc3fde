//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use fedscore::glm::{sigmoid, Design, DesignEncoding, EncodedVariable, Matrix, Vector};
use fedscore::protocol::EncodedSite;
use fedscore::rng::rng_from_seed;
pub use fedscore::rng::Rng;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

/// Layout for `p` numeric predictors. The protocol only needs the column
/// count and labels to agree, so each predictor is declared as a two-level
/// variable and gets exactly one column.
pub fn numeric_encoding(p: usize) -> DesignEncoding {
    DesignEncoding {
        variables: (1..=p)
            .map(|i| EncodedVariable {
                name: format!("x{i}"),
                categories: vec!["ref".into(), "value".into()],
            })
            .collect(),
    }
}

/// `n` rows with an intercept column and `beta.len() − 1` standard-normal
/// predictors, `y ~ Bernoulli(σ(xᵀβ))`.
pub fn logistic_rows(n: usize, beta: &[f64], rng: &mut Rng) -> (Matrix, Vector) {
    let p = beta.len();
    let mut x = Matrix::zeros(n, p);
    let mut y = Vector::zeros(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        let mut eta = beta[0];
        for j in 1..p {
            let v: f64 = StandardNormal.sample(rng);
            x[(i, j)] = v;
            eta += beta[j] * v;
        }
        y[i] = f64::from(u8::from(rng.random::<f64>() < sigmoid(eta)));
    }
    (x, y)
}

pub fn site(site_id: u32, x: Matrix, y: Vector) -> EncodedSite {
    let p = x.ncols();
    EncodedSite {
        site_id,
        encoding: numeric_encoding(p - 1),
        design: Design { x, y },
    }
}

/// Cuts consecutive blocks of `sizes` rows into sites numbered from 1.
pub fn split_sites(x: &Matrix, y: &Vector, sizes: &[usize]) -> Vec<EncodedSite> {
    let mut at = 0;
    sizes
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let s = site(
                j as u32 + 1,
                x.rows(at, n).into_owned(),
                y.rows(at, n).into_owned(),
            );
            at += n;
            s
        })
        .collect()
}

/// Stacks all sites' rows in order.
pub fn stack(sites: &[EncodedSite]) -> (Matrix, Vector) {
    let n: usize = sites.iter().map(EncodedSite::n).sum();
    let p = sites[0].design.p();
    let mut x = Matrix::zeros(n, p);
    let mut y = Vector::zeros(n);
    let mut at = 0;
    for s in sites {
        x.rows_mut(at, s.n()).copy_from(&s.design.x);
        y.rows_mut(at, s.n()).copy_from(&s.design.y);
        at += s.n();
    }
    (x, y)
}

pub fn rng(seed: u64) -> Rng {
    rng_from_seed(seed)
}

/// Ties are likely: scores are drawn from a handful of levels.
pub fn tied_scores(n: usize, levels: u32, rng: &mut Rng) -> (Vec<f64>, Vec<u8>) {
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
    let scores = labels
        .iter()
        .map(|&l| f64::from(rng.random_range(0..levels) + u32::from(l) * rng.random_range(0..2)))
        .collect();
    (scores, labels)
}

/// O(n²) concordance over every positive–negative pair, ties counted half.
pub fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Type-7 sample quantile written from the textbook definition with 1-based
/// order statistics `x₍ⱼ₎`: `j = ⌊h⌋ + 1`, `h = (n − 1)·p`.
pub fn textbook_type7(values: &[f64], percentile: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    let h = (n - 1) as f64 * percentile / 100.0;
    let j = h.floor() as usize + 1;
    let order = |k: usize| v[k.min(n) - 1];
    order(j) + (h - (j - 1) as f64) * (order(j + 1) - order(j))
}
