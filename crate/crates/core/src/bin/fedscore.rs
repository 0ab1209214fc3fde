//! `fedscore` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fedscore::data::{load_csv, Schema, SiteDataset, SiteWeights};
use fedscore::eval::ParsimonyCurve;
use fedscore::experiment::{
    load_sites, prepare_sites, run_experiment, write_parsimony_svg, write_sites, Bundle,
    ExperimentConfig, InputSource,
};
use fedscore::pipeline::{
    develop, evaluate, Arm, ArmModel, FederatedArm, LocalNetwork, Phase, PipelineConfig, SiteNode,
    TranscriptSection,
};
use fedscore::scorecard::ScoreCard;
use fedscore::{Error, Result, FORMAT_VERSION};

#[derive(Parser)]
#[command(
    name = "fedscore",
    version,
    about = "Federated integer risk scorecards"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sites; anything other than the configured count switches to
    /// equal site proportions.
    #[arg(long)]
    sites: Option<usize>,
    /// Largest model size in the parsimony sweep.
    #[arg(long = "d-max")]
    d_max: Option<usize>,
    /// Plateau tolerance for model selection.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Maximum total score.
    #[arg(long = "s-max")]
    s_max: Option<u32>,
    /// Lead site id, or `largest`.
    #[arg(long)]
    lead: Option<String>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic cohort: writes data.csv and schema.json.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Row count (overrides the config).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Split a cohort into tagged site files.
    Partition {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Federated variable ranking over a site directory.
    Rank(SiteArgs),
    /// Federated binning plan over a site directory.
    Bin(SiteArgs),
    /// Federated fit and scorecard for a fixed variable list.
    Fit {
        #[command(flatten)]
        site: SiteArgs,
        /// Comma-separated variables.
        #[arg(long, value_delimiter = ',', required = true)]
        vars: Vec<String>,
    },
    /// Federated ranking, binning, parsimony sweep, selection and refit.
    Select(SiteArgs),
    /// Test AUC of a saved federated model at every site.
    Evaluate {
        #[command(flatten)]
        site: SiteArgs,
        /// model.json written by `select`.
        #[arg(long)]
        model: PathBuf,
    },
    /// End-to-end three-arm experiment; writes a bundle directory.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Render a parsimony curve to SVG.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        curve: PathBuf,
    },
    /// Print the Markdown report of a bundle directory.
    Report {
        #[arg(long)]
        bundle: PathBuf,
    },
}

#[derive(Args, Clone)]
struct SiteArgs {
    #[command(flatten)]
    common: Common,
    /// Directory with schema.json and site_NN.csv files.
    #[arg(long = "data-dir")]
    data_dir: PathBuf,
}

fn config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(k) = common.sites {
        if k == 0 {
            return Err(Error::config("--sites must be at least 1"));
        }
        if k != cfg.federation.k() {
            cfg.federation.proportions = vec![1.0 / k as f64; k];
        }
    }
    if let Some(d) = common.d_max {
        cfg.pipeline.d_max = d;
    }
    if let Some(e) = common.epsilon {
        cfg.pipeline.epsilon = e;
    }
    if let Some(s) = common.s_max {
        cfg.pipeline.s_max = s;
    }
    if let Some(l) = &common.lead {
        cfg.lead = l.parse()?;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    let cfg = cfg.resolved();
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, default: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

#[derive(Serialize)]
struct Transcripts<'a> {
    format_version: u32,
    lead_site: u32,
    sections: &'a [TranscriptSection],
}

/// A federated session over a site directory.
struct Session {
    cfg: ExperimentConfig,
    pcfg: PipelineConfig,
    nodes: Vec<SiteNode>,
    weights_sizes: Vec<usize>,
    out: PathBuf,
}

impl Session {
    fn open(args: &SiteArgs, default_out: &str) -> Result<Self> {
        let cfg = config(&args.common)?;
        let sites = load_sites(&args.data_dir)?;
        let schema = sites[0].schema.clone();
        cfg.validate_schema(&schema)?;
        let pcfg = cfg.pipeline_config(&schema);
        Ok(Self {
            out: out_dir(&cfg, default_out),
            weights_sizes: sites.iter().map(SiteDataset::n_rows).collect(),
            nodes: sites.into_iter().map(SiteNode::new).collect(),
            pcfg,
            cfg,
        })
    }

    fn with_arm<T>(&self, f: impl FnOnce(&FederatedArm) -> Result<T>) -> Result<T> {
        let network = LocalNetwork::new(&self.nodes);
        let arm = FederatedArm::connect(
            &self.nodes,
            &network,
            self.cfg.lead,
            &self.cfg.federation.weights_mode,
            &self.pcfg,
        )?;
        let value = f(&arm)?;
        let sections = arm.transcript();
        write_json(
            &self.out.join("transcript.json"),
            &Transcripts {
                format_version: FORMAT_VERSION,
                lead_site: arm.lead_id(),
                sections: &sections,
            },
        )?;
        Ok(value)
    }

    fn weights(&self) -> Result<SiteWeights> {
        SiteWeights::from_mode(&self.cfg.federation.weights_mode, &self.weights_sizes)
    }
}

#[derive(Serialize)]
struct RankingFile {
    format_version: u32,
    order: Vec<String>,
}

#[derive(Serialize)]
struct FitFile<'a> {
    format_version: u32,
    variables: &'a [String],
    beta: &'a fedscore::glm::CoefficientVector,
    encoding: &'a fedscore::glm::DesignEncoding,
}

fn write_card(dir: &Path, card: &ScoreCard) -> Result<()> {
    write_json(&dir.join("card.json"), card)?;
    write_text(&dir.join("card.md"), &card.to_markdown())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, n } => {
            let mut cfg = config(&common)?;
            let InputSource::Synthetic(spec) = &mut cfg.input else {
                return Err(Error::config("synth needs a synthetic input spec"));
            };
            if let Some(n) = n {
                spec.n = n;
            }
            let data = spec.generate(cfg.seed)?;
            let out = out_dir(&cfg, "synth");
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_text(&out.join("schema.json"), &data.schema.to_json())?;
            fedscore::data::write_csv(&out.join("data.csv"), &data)?;
            eprintln!("wrote {} rows to {}", data.n_rows(), out.display());
        }
        Command::Partition {
            common,
            input,
            schema,
        } => {
            let cfg = config(&common)?;
            let schema = Schema::load(&schema)?;
            let (data, report) = load_csv(&input, &schema)?;
            if report.excluded_missing > 0 {
                eprintln!(
                    "excluded {} rows with missing values",
                    report.excluded_missing
                );
            }
            let sites = prepare_sites(&data, &cfg.federation, cfg.seed)?;
            let out = out_dir(&cfg, "sites");
            write_sites(&out, &sites)?;
            eprintln!("wrote {} sites to {}", sites.len(), out.display());
        }
        Command::Rank(args) => {
            let s = Session::open(&args, "rank")?;
            let order = s.with_arm(|arm| arm.rank())?;
            write_json(
                &s.out.join("ranking.json"),
                &RankingFile {
                    format_version: FORMAT_VERSION,
                    order,
                },
            )?;
        }
        Command::Bin(args) => {
            let s = Session::open(&args, "bin")?;
            let plan = s.with_arm(|arm| arm.bin())?;
            write_json(&s.out.join("plan.json"), &plan)?;
        }
        Command::Fit { site, vars } => {
            let s = Session::open(&site, "fit")?;
            let (plan, beta, encoding) = s.with_arm(|arm| {
                let plan = arm.bin()?;
                let (beta, encoding) = arm.fit(&vars, Phase::Refit)?;
                Ok((plan, beta, encoding))
            })?;
            let card = ScoreCard::derive(&beta, &encoding, s.pcfg.s_max)?;
            write_json(&s.out.join("plan.json"), &plan)?;
            write_json(
                &s.out.join("fit.json"),
                &FitFile {
                    format_version: FORMAT_VERSION,
                    variables: &vars,
                    beta: &beta,
                    encoding: &encoding,
                },
            )?;
            write_card(&s.out, &card)?;
        }
        Command::Select(args) => {
            let s = Session::open(&args, "select")?;
            let model = s.with_arm(|arm| develop(arm, &s.pcfg))?;
            write_json(&s.out.join("model.json"), &model)?;
            write_json(&s.out.join("curve.json"), &model.curve)?;
            write_json(&s.out.join("selection.json"), &model.selection)?;
            write_parsimony_svg(&model.curve, &s.out.join("parsimony.svg"))?;
            write_card(&s.out, &model.card)?;
            eprintln!("selected {}", model.selection.variables.join(", "));
        }
        Command::Evaluate { site, model } => {
            let s = Session::open(&site, "evaluate")?;
            let text = std::fs::read_to_string(&model).map_err(|e| Error::io(&model, e))?;
            let model: ArmModel = serde_json::from_str(&text)
                .map_err(|e| Error::data(format!("{}: {e}", "model file")))?;
            let weights = s.weights()?;
            let report = s.with_arm(|arm| {
                arm.apply_plan(&model.plan)?;
                evaluate(arm as &dyn Arm, &model, &weights)
            })?;
            write_json(&s.out.join("evaluation.json"), &report)?;
        }
        Command::Run { common } => {
            let cfg = config(&common)?;
            let out = out_dir(&cfg, "bundle");
            let bundle = run_experiment(&cfg)?;
            bundle.write(&out)?;
            for r in &bundle.evaluation.arms {
                eprintln!("{:<10} M1 {:.4}  M2 {:.4}", r.model, r.m1, r.m2);
            }
            eprintln!("bundle written to {}", out.display());
        }
        Command::Plot { common, curve } => {
            let text = std::fs::read_to_string(&curve).map_err(|e| Error::io(&curve, e))?;
            let parsed: ParsimonyCurve = serde_json::from_str(&text)
                .map_err(|e| Error::data(format!("{}: {e}", curve.display())))?;
            let out = common.out.unwrap_or_else(|| curve.with_extension("svg"));
            write_parsimony_svg(&parsed, &out)?;
        }
        Command::Report { bundle } => {
            print!(
                "{}",
                fedscore::experiment::render_report(&Bundle::load(&bundle)?)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
