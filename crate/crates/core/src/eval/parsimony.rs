use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SiteWeights;
use crate::{Error, Result, FORMAT_VERSION};

/// Builds and scores one candidate model.
pub trait CandidateEvaluator: Sync {
    /// Per-site validation metric of the model restricted to `variables`,
    /// `None` where a site cannot be scored (single-class validation rows).
    fn evaluate(&self, variables: &[String]) -> Result<Vec<Option<f64>>>;
}

impl<F> CandidateEvaluator for F
where
    F: Fn(&[String]) -> Result<Vec<Option<f64>>> + Sync,
{
    fn evaluate(&self, variables: &[String]) -> Result<Vec<Option<f64>>> {
        self(variables)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: usize,
    pub variables: Vec<String>,
    pub psi: f64,
    pub phi: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCandidate {
    pub m: usize,
    pub variables: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsimonyCurve {
    pub format_version: u32,
    pub d_max: usize,
    pub epsilon: f64,
    pub forced: Vec<String>,
    pub points: Vec<CurvePoint>,
    #[serde(default)]
    pub skipped: Vec<SkippedCandidate>,
}

impl ParsimonyCurve {
    /// Curve from bare (m, Ψ) pairs; handy for plotting and selection alone.
    pub fn from_psi(psi: &[f64], epsilon: f64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            d_max: psi.len(),
            epsilon,
            forced: Vec::new(),
            points: psi
                .iter()
                .enumerate()
                .map(|(i, &psi)| CurvePoint {
                    m: i + 1,
                    variables: Vec::new(),
                    psi,
                    phi: Vec::new(),
                })
                .collect(),
            skipped: Vec::new(),
        }
    }
}

/// Nested candidate sets: forced variables first (in the given order), then
/// the global ranking. Forced variables count towards `m`, so sizes start at
/// `max(1, q)` and end at `d_max`.
pub fn candidate_sets(
    order: &[String],
    forced: &[String],
    d_max: usize,
) -> Result<Vec<Vec<String>>> {
    if d_max == 0 {
        return Err(Error::config("D must be at least 1"));
    }
    if d_max > order.len() {
        return Err(Error::config(format!(
            "D = {d_max} exceeds the {} ranked variables",
            order.len()
        )));
    }
    if let Some(f) = forced.iter().find(|f| !order.contains(f)) {
        return Err(Error::config(format!(
            "forced variable `{f}` is not a candidate"
        )));
    }
    if forced.len() > d_max {
        return Err(Error::config(format!(
            "{} forced variables exceed D = {d_max}",
            forced.len()
        )));
    }
    let mut seq: Vec<String> = Vec::with_capacity(order.len());
    for f in forced {
        if !seq.contains(f) {
            seq.push(f.clone());
        }
    }
    seq.extend(order.iter().filter(|v| !forced.contains(v)).cloned());
    Ok((seq.len().min(forced.len()).max(1)..=d_max)
        .map(|m| seq[..m].to_vec())
        .collect())
}

/// Ψ_m = Σ w_i φ_i over the scoreable sites, weights renormalized over them.
fn weighted_psi(phi: &[Option<f64>], weights: &SiteWeights) -> Result<Option<f64>> {
    if phi.len() != weights.len() {
        return Err(Error::config(format!(
            "{} site metrics but {} weights",
            phi.len(),
            weights.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, &w) in phi.iter().zip(weights.as_slice()) {
        if let Some(p) = p {
            num += w * p;
            den += w;
        }
    }
    Ok((den > 0.0).then(|| num / den))
}

/// Evaluates every candidate size. Numerical failures (separation,
/// non-convergence, a degenerate card) mark the candidate skipped; other
/// errors abort.
pub fn parsimony_sweep(
    evaluator: &dyn CandidateEvaluator,
    order: &[String],
    forced: &[String],
    d_max: usize,
    epsilon: f64,
    weights: &SiteWeights,
) -> Result<ParsimonyCurve> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::config(format!(
            "epsilon must be a non-negative number, got {epsilon}"
        )));
    }
    let sets = candidate_sets(order, forced, d_max)?;
    let results: Vec<Result<Vec<Option<f64>>>> =
        sets.par_iter().map(|s| evaluator.evaluate(s)).collect();

    let mut points = Vec::new();
    let mut skipped = Vec::new();
    let mut first_failure = None;
    for (vars, res) in sets.into_iter().zip(results) {
        let m = vars.len();
        match res {
            Ok(phi) => match weighted_psi(&phi, weights)? {
                Some(psi) => points.push(CurvePoint {
                    m,
                    variables: vars,
                    psi,
                    phi,
                }),
                None => skipped.push(SkippedCandidate {
                    m,
                    variables: vars,
                    reason: "no site could be scored".into(),
                }),
            },
            Err(e) if e.is_numerical() => {
                log::warn!("candidate with {m} variables skipped: {e}");
                skipped.push(SkippedCandidate {
                    m,
                    variables: vars,
                    reason: e.to_string(),
                });
                first_failure.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if points.is_empty() {
        return Err(
            first_failure.unwrap_or_else(|| Error::data("no candidate model could be scored"))
        );
    }
    Ok(ParsimonyCurve {
        format_version: FORMAT_VERSION,
        d_max,
        epsilon,
        forced: forced.to_vec(),
        points,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub m_star: usize,
    pub psi_star: f64,
    pub d: usize,
    pub psi_d: f64,
    pub variables: Vec<String>,
}

/// Smallest model within `epsilon` of the best Ψ at or below the argmax
/// (ties at the maximum go to the smaller model).
pub fn select_model(curve: &ParsimonyCurve) -> Result<Selection> {
    let best = curve
        .points
        .iter()
        .fold(None::<&CurvePoint>, |acc, p| match acc {
            Some(a) if a.psi >= p.psi => Some(a),
            _ => Some(p),
        })
        .ok_or_else(|| Error::data("cannot select from an empty parsimony curve"))?;
    let chosen = curve
        .points
        .iter()
        .filter(|p| p.m <= best.m && best.psi - p.psi <= curve.epsilon)
        .min_by_key(|p| p.m)
        .unwrap_or(best);
    Ok(Selection {
        m_star: best.m,
        psi_star: best.psi,
        d: chosen.m,
        psi_d: chosen.psi,
        variables: chosen.variables.clone(),
    })
}
