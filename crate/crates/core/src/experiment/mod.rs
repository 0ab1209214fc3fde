//! Desk-scale reproduction of the three-arm study: local models per site, one
//! federated model and one pooled model, all on shared splits.

mod bundle;
mod plot;
mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bundle::{audit_transcript, Bundle, EvaluationSummary, Manifest, TranscriptFile};
pub use plot::{plot_parsimony, write_parsimony_svg};
pub use report::{parse_report_cards, render_report, report};

use crate::data::{
    generate_synthetic, load_csv, load_csv_with, partition_sites, split_train_valid_test,
    write_csv, FeaturePlan, FederationConfig, IngestOptions, RowFilter, Schema, SiteDataset,
    SiteWeights,
};
use crate::pipeline::{
    develop, evaluate, Arm, FederatedArm, LeadChoice, LocalArm, LocalNetwork, PipelineConfig,
    PooledArm, SiteNode,
};
use crate::rng::derive_seed;
use crate::{Error, Result, FORMAT_VERSION};

/// Parameters of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub outcome_name: String,
    pub features: Vec<FeaturePlan>,
    /// Intercept first, then each feature's encoded coefficients in order.
    pub beta_true: Vec<f64>,
}

impl Default for SynthSpec {
    /// An emergency-department flavoured cohort: eleven candidates, seven
    /// of which carry signal, prevalence around one in four.
    fn default() -> Self {
        let cont = |name: &str, mean: f64, sd: f64| FeaturePlan::Continuous {
            name: name.into(),
            mean,
            sd,
        };
        let cat = |name: &str, probs: &[f64], labels: &[&str]| FeaturePlan::Categorical {
            name: name.into(),
            probs: probs.to_vec(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        };
        Self {
            n: 50_000,
            outcome_name: "outcome".into(),
            features: vec![
                cont("age", 60.0, 15.0),
                cont("heart_rate", 90.0, 20.0),
                cont("resp_rate", 20.0, 5.0),
                cont("systolic_bp", 130.0, 25.0),
                cont("temperature", 37.0, 0.8),
                cont("creatinine", 100.0, 30.0),
                cont("sodium", 138.0, 4.0),
                cat("triage", &[0.3, 0.4, 0.2, 0.1], &["P4", "P3", "P2", "P1"]),
                cat("sex", &[0.5, 0.5], &["F", "M"]),
                cat("ward", &[0.6, 0.25, 0.15], &["A", "B", "C"]),
                cat("comorbidity", &[0.5, 0.3, 0.2], &["none", "mild", "severe"]),
            ],
            beta_true: vec![
                -6.8, // intercept
                0.04, 0.02, 0.08, -0.015, 0.0, 0.01, 0.0, // continuous
                0.4, 0.9, 1.5, // triage
                0.1, // sex
                0.0, 0.0, // ward
                0.3, 0.8, // comorbidity
            ],
        }
    }
}

impl SynthSpec {
    pub fn generate(&self, seed: u64) -> Result<SiteDataset> {
        generate_synthetic(
            self.n,
            &self.beta_true,
            &self.features,
            &self.outcome_name,
            seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Synthetic(SynthSpec),
    Csv {
        path: PathBuf,
        schema: PathBuf,
        /// Row filters such as `age>=18`.
        #[serde(default)]
        filters: Vec<String>,
    },
}

impl Default for InputSource {
    fn default() -> Self {
        InputSource::Synthetic(SynthSpec::default())
    }
}

/// One experiment. The top-level `seed` drives every random stream and
/// overrides the seeds nested in `federation` and `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub input: InputSource,
    pub federation: FederationConfig,
    pub pipeline: PipelineConfig,
    pub lead: LeadChoice,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            seed: 20221017,
            input: InputSource::default(),
            federation: FederationConfig::default(),
            pipeline: PipelineConfig::default(),
            lead: LeadChoice::default(),
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("experiment config: {e}")))?;
        if cfg.format_version != FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported config format_version {}",
                cfg.format_version
            )));
        }
        Ok(cfg.resolved())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Copies the master seed into the nested configs.
    pub fn resolved(mut self) -> Self {
        self.federation.seed = self.seed;
        self.pipeline.seed = self.seed;
        self
    }

    pub fn k(&self) -> usize {
        self.federation.k()
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        self.federation.validate()?;
        self.pipeline.validate()?;
        if let LeadChoice::Site(id) = self.lead {
            if id as usize > self.k() {
                return Err(Error::config(format!(
                    "lead site {id} but only {} sites",
                    self.k()
                )));
            }
        }
        match &self.input {
            InputSource::Synthetic(s) => {
                if s.n < self.k() {
                    return Err(Error::config(format!(
                        "{} synthetic rows cannot fill {} sites",
                        s.n,
                        self.k()
                    )));
                }
            }
            InputSource::Csv { filters, .. } => {
                for f in filters {
                    f.parse::<RowFilter>()?;
                }
            }
        }
        Ok(())
    }

    /// Checks the preconditions that depend on the schema.
    pub fn validate_schema(&self, schema: &Schema) -> Result<()> {
        let p = schema.len();
        if self.pipeline.d_max > p {
            return Err(Error::config(format!(
                "D = {} exceeds the {p} candidate variables",
                self.pipeline.d_max
            )));
        }
        for f in &self.pipeline.forced {
            if schema.index_of(f).is_none() {
                return Err(Error::config(format!(
                    "forced variable `{f}` is not in the schema"
                )));
            }
        }
        if self.forced(schema).len() > self.pipeline.d_max {
            return Err(Error::config("more forced variables than D"));
        }
        Ok(())
    }

    /// Forced variables from the config followed by those flagged in the schema.
    pub fn forced(&self, schema: &Schema) -> Vec<String> {
        let mut out = self.pipeline.forced.clone();
        for f in schema.forced() {
            if !out.contains(&f) {
                out.push(f);
            }
        }
        out
    }

    pub fn pipeline_config(&self, schema: &Schema) -> PipelineConfig {
        let mut p = self.pipeline.clone();
        p.seed = self.seed;
        p.forced = self.forced(schema);
        p
    }
}

/// Loads or draws the cohort (all rows tagged train).
pub fn load_input(cfg: &ExperimentConfig) -> Result<SiteDataset> {
    match &cfg.input {
        InputSource::Synthetic(spec) => spec.generate(cfg.seed),
        InputSource::Csv {
            path,
            schema,
            filters,
        } => {
            let schema = Schema::load(schema)?;
            let filters = filters
                .iter()
                .map(|f| f.parse())
                .collect::<Result<Vec<RowFilter>>>()?;
            let (data, report) = load_csv_with(path, &schema, &IngestOptions { filters })?;
            log::info!(
                "{}: kept {} of {} rows ({} with missing values, {} filtered)",
                path.display(),
                report.rows_kept,
                report.rows_read,
                report.excluded_missing,
                report.excluded_by_filter
            );
            Ok(data)
        }
    }
}

/// Partitions the cohort into sites and tags each site's rows.
pub fn prepare_sites(
    data: &SiteDataset,
    federation: &FederationConfig,
    seed: u64,
) -> Result<Vec<SiteDataset>> {
    let mut fed = federation.clone();
    fed.seed = seed;
    partition_sites(data, &fed)?
        .iter()
        .map(|s| {
            split_train_valid_test(s, fed.split_ratios, derive_seed(seed, u64::from(s.site_id)))
        })
        .collect()
}

/// File name of site `id` inside a site directory.
pub fn site_file_name(id: u32) -> String {
    format!("site_{id:02}.csv")
}

/// Writes `schema.json` and one tagged CSV per site.
pub fn write_sites(dir: &Path, sites: &[SiteDataset]) -> Result<()> {
    let schema = &sites
        .first()
        .ok_or_else(|| Error::data("no sites to write"))?
        .schema;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("schema.json");
    std::fs::write(&path, schema.to_json()).map_err(|e| Error::io(&path, e))?;
    for s in sites {
        write_csv(&dir.join(site_file_name(s.site_id)), s)?;
    }
    Ok(())
}

/// Reads a directory written by [`write_sites`]: `schema.json` plus
/// `site_NN.csv` files, site ids taken from the file names.
pub fn load_sites(dir: &Path) -> Result<Vec<SiteDataset>> {
    let schema = Schema::load(&dir.join("schema.json"))?;
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name
            .strip_prefix("site_")
            .and_then(|r| r.strip_suffix(".csv"))
            .and_then(|r| r.parse::<u32>().ok())
        {
            found.push((id, entry.path()));
        }
    }
    if found.is_empty() {
        return Err(Error::data(format!(
            "no site_NN.csv files in {}",
            dir.display()
        )));
    }
    found.sort();
    found
        .into_iter()
        .map(|(id, path)| {
            let (mut data, _) = load_csv(&path, &schema)?;
            data.site_id = id;
            Ok(data)
        })
        .collect()
}

/// Runs all arms and gathers the bundle in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Bundle> {
    let cfg = cfg.clone().resolved();
    cfg.validate()?;
    let data = load_input(&cfg).map_err(|e| e.at_stage("input"))?;
    cfg.validate_schema(&data.schema)?;
    let sites =
        prepare_sites(&data, &cfg.federation, cfg.seed).map_err(|e| e.at_stage("partition"))?;
    run_on_sites(&cfg, &sites)
}

/// Runs all arms on already partitioned and tagged sites.
pub fn run_on_sites(cfg: &ExperimentConfig, sites: &[SiteDataset]) -> Result<Bundle> {
    let schema = &sites.first().ok_or_else(|| Error::data("no sites"))?.schema;
    cfg.validate_schema(schema)?;
    let pcfg = cfg.pipeline_config(schema);
    let sizes: Vec<usize> = sites.iter().map(SiteDataset::n_rows).collect();
    let weights = SiteWeights::from_mode(&cfg.federation.weights_mode, &sizes)?;

    let locals = (0..sites.len())
        .map(|j| LocalArm::new(sites, j, &pcfg))
        .collect::<Result<Vec<_>>>()?;
    let pooled = PooledArm::new(sites, weights.clone(), &pcfg)?;
    let nodes: Vec<SiteNode> = sites.iter().cloned().map(SiteNode::new).collect();
    let network = LocalNetwork::new(&nodes);
    let federated = FederatedArm::connect(
        &nodes,
        &network,
        cfg.lead,
        &cfg.federation.weights_mode,
        &pcfg,
    )
    .map_err(|e| e.at_stage("federated/setup"))?;

    let mut arms: Vec<&dyn Arm> = locals.iter().map(|a| a as &dyn Arm).collect();
    arms.push(&federated);
    arms.push(&pooled);
    let results = arms
        .par_iter()
        .map(|arm| {
            let model = develop(*arm, &pcfg)?;
            let report = evaluate(*arm, &model, &weights)?;
            Ok((model, report))
        })
        .collect::<Result<Vec<_>>>()?;

    let transcript = TranscriptFile {
        format_version: FORMAT_VERSION,
        lead_site: federated.lead_id(),
        site_ids: federated.site_ids().to_vec(),
        sections: federated.transcript(),
    };
    audit_transcript(&transcript)?;
    let (models, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(Bundle {
        manifest: Manifest::new(
            cfg,
            federated.summaries().to_vec(),
            federated.lead_id(),
            &models,
        ),
        models,
        evaluation: EvaluationSummary {
            format_version: FORMAT_VERSION,
            weights: weights.as_slice().to_vec(),
            arms: reports,
        },
        transcript,
    })
}
