use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::Bundle;
use crate::scorecard::ScoreCard;
use crate::{Error, Result};

const CARDS_HEADING: &str = "## Scorecards";

/// Markdown summary: per-site test AUC for every model (one row per model),
/// weighted metrics, selections and every scorecard.
pub fn render_report(bundle: &Bundle) -> String {
    let m = &bundle.manifest;
    let mut s = String::from("# FedScore experiment report\n\n");
    let _ = writeln!(
        s,
        "Seed {}, {} sites, lead site {}, tool version {}.\n",
        m.seed,
        m.sites.len(),
        m.lead_site,
        m.version
    );

    s.push_str("## Sites\n\n| Site | Rows | Train | Validation | Test |\n|---|---|---|---|---|\n");
    for site in &m.sites {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            site.site_id, site.n, site.n_train, site.n_validation, site.n_test
        );
    }

    s.push_str("\n## Test AUC by site\n\nEach cell is AUC [95% CI].\n\n| Model |");
    for site in &m.sites {
        let _ = write!(s, " Site {} |", site.site_id);
    }
    s.push_str(" Mean | SD |\n|---|");
    for _ in 0..m.sites.len() + 2 {
        s.push_str("---|");
    }
    s.push('\n');
    for r in &bundle.evaluation.arms {
        let _ = write!(s, "| {} |", r.model);
        for site in &r.sites {
            let _ = write!(s, " {:.4} [{:.4}, {:.4}] |", site.auc, site.low, site.high);
        }
        let (mean, sd) = r.mean_sd();
        let _ = writeln!(s, " {mean:.4} | {sd:.4} |");
    }

    s.push_str("\n## Weighted summary\n\n| Model | M1 | M2 |\n|---|---|---|\n");
    for r in &bundle.evaluation.arms {
        let _ = writeln!(s, "| {} | {:.4} | {:.4} |", r.model, r.m1, r.m2);
    }

    s.push_str("\n## Model selection\n\n| Model | Best m | Selected m | Ψ selected | Variables |\n|---|---|---|---|---|\n");
    for model in &bundle.models {
        let sel = &model.selection;
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.4} | {} |",
            model.arm,
            sel.m_star,
            sel.d,
            sel.psi_d,
            sel.variables.join(", ")
        );
    }

    let _ = writeln!(s, "\n{CARDS_HEADING}\n");
    for model in &bundle.models {
        let _ = writeln!(s, "### {}\n\n{}", model.arm, model.card.to_markdown());
    }
    s
}

/// Renders the report of a bundle on disk.
pub fn report(dir: &Path) -> Result<String> {
    Ok(render_report(&Bundle::load(dir)?))
}

/// Reads the scorecards back out of a rendered report, keyed by model.
pub fn parse_report_cards(markdown: &str) -> Result<BTreeMap<String, ScoreCard>> {
    let (_, cards) = markdown
        .split_once(CARDS_HEADING)
        .ok_or_else(|| Error::data("report has no scorecard section"))?;
    let mut out = BTreeMap::new();
    for block in cards.split("\n### ").skip(1) {
        let (name, body) = block.split_once('\n').unwrap_or((block, ""));
        out.insert(name.trim().to_string(), ScoreCard::from_markdown(body)?);
    }
    Ok(out)
}
