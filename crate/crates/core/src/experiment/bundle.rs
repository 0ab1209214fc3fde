use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{plot, report, ExperimentConfig};
use crate::eval::EvaluationReport;
use crate::pipeline::{ArmModel, SiteSummary, TranscriptSection};
use crate::protocol::TranscriptKind;
use crate::{Error, Result, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// The resolved configuration, without the output directory.
    pub config: ExperimentConfig,
    pub lead_site: u32,
    pub sites: Vec<SiteSummary>,
    pub arms: Vec<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(
        cfg: &ExperimentConfig,
        sites: Vec<SiteSummary>,
        lead_site: u32,
        models: &[ArmModel],
    ) -> Self {
        let mut config = cfg.clone();
        config.out = None;
        let arms: Vec<String> = models.iter().map(|m| m.arm.clone()).collect();
        let mut files: Vec<String> = [
            "manifest.json",
            "evaluation.json",
            "transcript.json",
            "report.md",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for a in &arms {
            files.extend([
                format!("models/{a}.json"),
                format!("cards/{a}.json"),
                format!("cards/{a}.md"),
                format!("curves/{a}.json"),
                format!("curves/{a}.svg"),
            ]);
        }
        Self {
            format_version: FORMAT_VERSION,
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config,
            lead_site,
            sites,
            arms,
            files,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub format_version: u32,
    /// Site weights used for M1 and M2.
    pub weights: Vec<f64>,
    pub arms: Vec<EvaluationReport>,
}

impl EvaluationSummary {
    pub fn arm(&self, name: &str) -> Option<&EvaluationReport> {
        self.arms.iter().find(|r| r.model == name)
    }
}

/// Every payload the federated arm exchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptFile {
    pub format_version: u32,
    pub lead_site: u32,
    pub site_ids: Vec<u32>,
    pub sections: Vec<TranscriptSection>,
}

/// Checks that every section consists of complete one-shot rounds: each
/// broadcast from the lead is matched by the lead's own in-place summary and
/// exactly one reply from every other site.
pub fn audit_transcript(t: &TranscriptFile) -> Result<()> {
    let remotes: BTreeSet<u32> = t
        .site_ids
        .iter()
        .copied()
        .filter(|&id| id != t.lead_site)
        .collect();
    for (i, section) in t.sections.iter().enumerate() {
        let entries = &section.transcript.entries;
        let mut rounds = 0;
        let mut pos = 0;
        while pos < entries.len() {
            let head = &entries[pos];
            let from_lead = head.site_id == t.lead_site
                || (i == 0
                    && head.kind == TranscriptKind::Broadcast
                    && t.site_ids.contains(&head.site_id));
            if head.kind != TranscriptKind::Broadcast || !from_lead {
                return Err(Error::protocol(format!(
                    "section {i}: round {rounds} does not open with a broadcast"
                )));
            }
            let replies = &entries[pos + 1..(pos + 1 + t.site_ids.len()).min(entries.len())];
            let mut seen = BTreeSet::new();
            let mut local = 0;
            for e in replies {
                match e.kind {
                    TranscriptKind::Reply
                        if remotes.contains(&e.site_id) || e.site_id == t.lead_site =>
                    {
                        if !seen.insert(e.site_id) {
                            return Err(Error::protocol(format!(
                                "section {i}: site {} replied twice",
                                e.site_id
                            )));
                        }
                    }
                    TranscriptKind::LeadLocal => local += 1,
                    _ => {
                        return Err(Error::protocol(format!(
                            "section {i}: unexpected entry from site {}",
                            e.site_id
                        )))
                    }
                }
            }
            if local != 1 || seen.len() + 1 != t.site_ids.len() {
                return Err(Error::protocol(format!(
                    "section {i}: round {rounds} has {local} lead summaries and {} replies for {} sites",
                    seen.len(),
                    t.site_ids.len()
                )));
            }
            pos += 1 + replies.len();
            rounds += 1;
        }
    }
    Ok(())
}

/// A complete experiment: manifest, one model per arm, test evaluation and
/// the federated transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub models: Vec<ArmModel>,
    pub evaluation: EvaluationSummary,
    pub transcript: TranscriptFile,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write(dir: &Path, rel: &str, contents: &str) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn read<T: DeserializeOwned>(dir: &Path, rel: &str) -> Result<T> {
    let path = dir.join(rel);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

impl Bundle {
    pub fn model(&self, arm: &str) -> Option<&ArmModel> {
        self.models.iter().find(|m| m.arm == arm)
    }

    /// Writes every file listed in the manifest.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write(dir, "manifest.json", &to_json(&self.manifest)?)?;
        write(dir, "evaluation.json", &to_json(&self.evaluation)?)?;
        write(dir, "transcript.json", &to_json(&self.transcript)?)?;
        for m in &self.models {
            let a = &m.arm;
            write(dir, &format!("models/{a}.json"), &to_json(m)?)?;
            write(dir, &format!("cards/{a}.json"), &to_json(&m.card)?)?;
            write(dir, &format!("cards/{a}.md"), &m.card.to_markdown())?;
            write(dir, &format!("curves/{a}.json"), &to_json(&m.curve)?)?;
            write(
                dir,
                &format!("curves/{a}.svg"),
                &plot::plot_parsimony(&m.curve)?,
            )?;
        }
        write(dir, "report.md", &report::render_report(self))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read(dir, "manifest.json")?;
        let models = manifest
            .arms
            .iter()
            .map(|a| read(dir, &format!("models/{a}.json")))
            .collect::<Result<Vec<ArmModel>>>()?;
        Ok(Self {
            evaluation: read(dir, "evaluation.json")?,
            transcript: read(dir, "transcript.json")?,
            manifest,
            models,
        })
    }
}
