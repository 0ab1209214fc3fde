//! Integer points tables.
//!
//! Per variable the category coefficients (reference = 0) are shifted so the
//! smallest is zero. With `u = shifted / Σ_v max(shifted_v)` every row's
//! shifted linear predictor lands in [0, 1]; points are
//! `round_half_away(S_max · t · u)` where `t = 1` unless rounding would push
//! the best attainable total above `S_max`, in which case `t` is lowered to
//! the largest value that keeps it within the cap. The intercept is dropped:
//! the card ranks risk, it is not a probability model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::SiteDataset;
use crate::glm::{CoefficientVector, DesignEncoding};
use crate::{Error, Result, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardEntry {
    pub interval: String,
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardVariable {
    pub name: String,
    pub entries: Vec<CardEntry>,
}

impl CardVariable {
    pub fn max_points(&self) -> u32 {
        self.entries.iter().map(|e| e.points).max().unwrap_or(0)
    }

    pub fn points_for(&self, interval: &str) -> Option<u32> {
        self.entries
            .iter()
            .find(|e| e.interval == interval)
            .map(|e| e.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub s_max: u32,
    /// Points per unit of linear predictor.
    pub scale: f64,
    pub variables: Vec<CardVariable>,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

/// Rounds half away from zero.
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

impl ScoreCard {
    /// Builds the card for `beta` laid out by `encoding`.
    pub fn derive(beta: &CoefficientVector, encoding: &DesignEncoding, s_max: u32) -> Result<Self> {
        if beta.len() != encoding.width() {
            return Err(Error::data(format!(
                "{} coefficients for an encoding of width {}",
                beta.len(),
                encoding.width()
            )));
        }
        if !beta.is_finite() {
            return Err(Error::data("coefficients must be finite"));
        }
        if s_max == 0 {
            return Err(Error::config("S_max must be positive"));
        }
        let b = beta.as_slice();
        let mut shifted: Vec<Vec<f64>> = Vec::with_capacity(encoding.variables.len());
        for (var, offset) in encoding.variables.iter().zip(encoding.offsets()) {
            let coefs: Vec<f64> = std::iter::once(0.0)
                .chain(
                    b[offset..offset + var.categories.len().saturating_sub(1)]
                        .iter()
                        .copied(),
                )
                .collect();
            let min = coefs.iter().copied().fold(f64::INFINITY, f64::min);
            shifted.push(coefs.iter().map(|c| c - min).collect());
        }
        let total: f64 = shifted
            .iter()
            .map(|s| s.iter().copied().fold(0.0, f64::max))
            .sum();
        if total <= 0.0 {
            return Err(Error::DegenerateModel);
        }
        let unit: Vec<Vec<f64>> = shifted
            .iter()
            .map(|s| s.iter().map(|v| v / total).collect())
            .collect();
        let unit_max: Vec<f64> = unit
            .iter()
            .map(|u| u.iter().copied().fold(0.0, f64::max))
            .collect();

        let cap = f64::from(s_max);
        let mut t = 1.0;
        loop {
            let best: f64 = unit_max.iter().map(|m| round_half_away(cap * t * m)).sum();
            if best <= cap {
                break;
            }
            // Largest t at which some variable's rounded maximum drops by one.
            let next = unit_max
                .iter()
                .filter(|&&m| m > 0.0)
                .map(|&m| {
                    let r = round_half_away(cap * t * m);
                    (r - 0.5) / (cap * m)
                })
                .fold(0.0, f64::max);
            t = next * (1.0 - 4.0 * f64::EPSILON);
        }

        let variables = encoding
            .variables
            .iter()
            .zip(&unit)
            .map(|(var, u)| CardVariable {
                name: var.name.clone(),
                entries: var
                    .categories
                    .iter()
                    .zip(u)
                    .map(|(label, v)| CardEntry {
                        interval: label.clone(),
                        points: round_half_away(cap * t * v) as u32,
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            format_version: FORMAT_VERSION,
            s_max,
            scale: cap * t / total,
            variables,
        })
    }

    /// Highest attainable total.
    pub fn max_total(&self) -> u32 {
        self.variables.iter().map(CardVariable::max_points).sum()
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    /// Total points for one row given as variable → category label.
    pub fn apply(&self, row: &BTreeMap<String, String>) -> Result<u32> {
        let mut total = 0;
        for v in &self.variables {
            let label = row
                .get(&v.name)
                .ok_or_else(|| Error::data(format!("row lacks variable `{}`", v.name)))?;
            total += v.points_for(label).ok_or_else(|| {
                Error::data(format!(
                    "category `{label}` of `{}` is not on the card",
                    v.name
                ))
            })?;
        }
        Ok(total)
    }

    /// Scores every row of an all-categorical dataset.
    pub fn score_dataset(&self, data: &SiteDataset) -> Result<Vec<u32>> {
        let mut totals = vec![0u32; data.n_rows()];
        for v in &self.variables {
            let idx = data.schema.index_of(&v.name).ok_or_else(|| {
                Error::data(format!("site {} lacks variable `{}`", data.site_id, v.name))
            })?;
            let spec = &data.schema.variables[idx];
            let lookup: Vec<Option<u32>> =
                spec.categories.iter().map(|c| v.points_for(c)).collect();
            let crate::data::Column::Categorical(codes) = &data.columns[idx] else {
                return Err(Error::data(format!("variable `{}` is not binned", v.name)));
            };
            for (t, &c) in totals.iter_mut().zip(codes) {
                *t += lookup[c as usize].ok_or_else(|| {
                    Error::data(format!(
                        "category `{}` of `{}` is not on the card",
                        spec.categories[c as usize], v.name
                    ))
                })?;
            }
        }
        Ok(totals)
    }

    /// Markdown `Variable | Interval | Point` table; the variable name is
    /// printed on its first row only. A trailing comment keeps `S_max` and
    /// the scale so the table parses back losslessly.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Variable | Interval | Point |\n|---|---|---|\n");
        for v in &self.variables {
            for (i, e) in v.entries.iter().enumerate() {
                let name = if i == 0 {
                    escape(&v.name)
                } else {
                    String::new()
                };
                let _ = writeln!(out, "| {} | {} | {} |", name, escape(&e.interval), e.points);
            }
        }
        let _ = writeln!(
            out,
            "\n<!-- s_max={} scale={:?} -->",
            self.s_max, self.scale
        );
        out
    }

    pub fn from_markdown(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::data(format!("scorecard table: {m}"));
        let mut variables: Vec<CardVariable> = Vec::new();
        let mut s_max = None;
        let mut scale = None;
        for line in text.lines().map(str::trim) {
            if let Some(meta) = line
                .strip_prefix("<!--")
                .and_then(|l| l.strip_suffix("-->"))
            {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("s_max", v)) => {
                            s_max = Some(v.parse::<u32>().map_err(|_| bad("bad s_max"))?)
                        }
                        Some(("scale", v)) => {
                            scale = Some(v.parse::<f64>().map_err(|_| bad("bad scale"))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !line.starts_with('|')
                || line.starts_with("|---")
                || line.starts_with("| Variable |")
            {
                continue;
            }
            let cells = split_row(line);
            if cells.len() != 3 {
                return Err(bad(&format!("expected 3 cells in `{line}`")));
            }
            let points: u32 = cells[2]
                .parse()
                .map_err(|_| bad(&format!("bad points `{}`", cells[2])))?;
            let entry = CardEntry {
                interval: cells[1].clone(),
                points,
            };
            if cells[0].is_empty() {
                variables
                    .last_mut()
                    .ok_or_else(|| bad("continuation row before any variable"))?
                    .entries
                    .push(entry);
            } else {
                variables.push(CardVariable {
                    name: cells[0].clone(),
                    entries: vec![entry],
                });
            }
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            s_max: s_max.ok_or_else(|| bad("missing s_max"))?,
            scale: scale.ok_or_else(|| bad("missing scale"))?,
            variables,
        })
    }
}

/// Free-function form of [`ScoreCard::derive`].
pub fn derive_points(
    beta: &CoefficientVector,
    encoding: &DesignEncoding,
    s_max: u32,
) -> Result<ScoreCard> {
    ScoreCard::derive(beta, encoding, s_max)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('|', "\\|")
}

fn split_row(line: &str) -> Vec<String> {
    let inner = line.trim().trim_start_matches('|');
    let inner = inner.strip_suffix('|').unwrap_or(inner);
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                if let Some(n) = chars.next() {
                    cur.push(n);
                }
            }
            '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
            _ => cur.push(c),
        }
    }
    cells.push(cur.trim().to_string());
    cells
}
