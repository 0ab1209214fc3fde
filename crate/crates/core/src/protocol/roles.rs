use serde::{Deserialize, Serialize};

use super::messages::{BroadcastPacket, SiteMessage, PROTOCOL_VERSION};
use crate::data::{SiteDataset, SplitTag};
use crate::glm::{self, fit_mle, Design, DesignEncoding, FitReport, Matrix, NewtonOptions, Vector};
use crate::{Error, Result};

/// A site's encoded training rows. Never leaves the site.
#[derive(Debug, Clone)]
pub struct EncodedSite {
    pub site_id: u32,
    pub encoding: DesignEncoding,
    pub design: Design,
}

impl EncodedSite {
    /// Encodes the training rows of an all-categorical dataset.
    pub fn from_dataset(data: &SiteDataset, encoding: &DesignEncoding) -> Result<Self> {
        let train = data.subset(SplitTag::Train);
        Self::from_rows(&train, encoding)
    }

    /// Encodes every row of `data`, whatever its split tag.
    pub fn from_rows(data: &SiteDataset, encoding: &DesignEncoding) -> Result<Self> {
        Ok(Self {
            site_id: data.site_id,
            encoding: encoding.clone(),
            design: glm::encode_with(data, encoding)?,
        })
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }
}

/// Fits `β̄` on the lead's rows and packages it for broadcast.
pub fn lead_initialize(
    lead: &EncodedSite,
    opts: &NewtonOptions,
) -> Result<(BroadcastPacket, FitReport)> {
    let fit = fit_mle(&lead.design.x, &lead.design.y, opts)?;
    let packet = BroadcastPacket {
        version: PROTOCOL_VERSION,
        encoding: lead.encoding.clone(),
        beta_bar: fit.beta.as_slice().to_vec(),
    };
    Ok((packet, fit))
}

/// Gradient and Hessian of the site's average log-likelihood at `β̄`.
pub fn remote_summarize(packet: &BroadcastPacket, site: &EncodedSite) -> Result<SiteMessage> {
    packet.validate()?;
    if packet.encoding != site.encoding {
        return Err(Error::protocol(format!(
            "site {} encodes a different variable/category layout than the broadcast",
            site.site_id
        )));
    }
    if site.n() == 0 {
        return Err(Error::protocol(format!(
            "site {} has no training rows",
            site.site_id
        )));
    }
    let beta = Vector::from_column_slice(&packet.beta_bar);
    let g = glm::gradient(&beta, &site.design.x, &site.design.y);
    let h = glm::hessian(&beta, &site.design.x, &site.design.y);
    Ok(SiteMessage {
        site_id: site.site_id,
        n: site.n() as u64,
        grad: g.as_slice().to_vec(),
        hess: h.row_iter().map(|r| r.iter().copied().collect()).collect(),
    })
}

/// `∇L(β̄) = Σ n_j ∇L_j(β̄) / N` and the same for the Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateGradients {
    pub n_total: u64,
    pub grad_bar: Vec<f64>,
    pub hess_bar: Vec<Vec<f64>>,
}

impl AggregateGradients {
    pub fn grad_vector(&self) -> Vector {
        Vector::from_column_slice(&self.grad_bar)
    }

    pub fn hess_matrix(&self) -> Matrix {
        let p = self.grad_bar.len();
        Matrix::from_fn(p, p, |a, b| self.hess_bar[a][b])
    }
}

/// Sample-size weighted averages of all replies (the lead's own included).
/// Summation runs in site-id order, so the result ignores message order.
pub fn aggregate(messages: &[SiteMessage]) -> Result<AggregateGradients> {
    let first = messages
        .first()
        .ok_or_else(|| Error::protocol("no site messages to aggregate"))?;
    let p = first.p();
    let mut sorted: Vec<&SiteMessage> = messages.iter().collect();
    sorted.sort_by_key(|m| m.site_id);
    for w in sorted.windows(2) {
        if w[0].site_id == w[1].site_id {
            return Err(Error::protocol(format!(
                "duplicate message from site {}",
                w[0].site_id
            )));
        }
    }
    for m in &sorted {
        m.validate()?;
        if m.p() != p {
            return Err(Error::protocol(format!(
                "site {} sent dimension {} (expected {p})",
                m.site_id,
                m.p()
            )));
        }
    }
    if let [only] = sorted.as_slice() {
        return Ok(AggregateGradients {
            n_total: only.n,
            grad_bar: only.grad.clone(),
            hess_bar: only.hess.clone(),
        });
    }
    let n_total: u64 = sorted.iter().map(|m| m.n).sum();
    let total = n_total as f64;
    let mut grad_bar = vec![0.0; p];
    let mut hess_bar = vec![vec![0.0; p]; p];
    for m in &sorted {
        let nj = m.n as f64;
        for (acc, g) in grad_bar.iter_mut().zip(&m.grad) {
            *acc += nj * g;
        }
        for (acc_row, row) in hess_bar.iter_mut().zip(&m.hess) {
            for (acc, h) in acc_row.iter_mut().zip(row) {
                *acc += nj * h;
            }
        }
    }
    for g in &mut grad_bar {
        *g /= total;
    }
    for row in &mut hess_bar {
        for h in row.iter_mut() {
            *h /= total;
        }
    }
    Ok(AggregateGradients {
        n_total,
        grad_bar,
        hess_bar,
    })
}
