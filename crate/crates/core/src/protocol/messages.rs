//! Wire format.
//!
//! Payloads are JSON, but every number is written right-aligned in a
//! fixed-width field (JSON permits the padding whitespace). A reply's byte
//! length therefore depends only on `p`, never on the site's row count or the
//! values it carries.

use serde::{Deserialize, Serialize};

use crate::glm::DesignEncoding;
use crate::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

/// Width of a float field: `-d.dddddddddddddddde-ddd`.
const FLOAT_WIDTH: usize = 24;
const ID_WIDTH: usize = 10;
const COUNT_WIDTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastPacket {
    pub version: u32,
    pub encoding: DesignEncoding,
    pub beta_bar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMessage {
    pub site_id: u32,
    pub n: u64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
}

fn push_float(out: &mut String, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::protocol("non-finite value in payload"));
    }
    // 17 significant digits round-trip every f64.
    let s = format!("{x:.16e}");
    out.push_str(&format!("{s:>FLOAT_WIDTH$}"));
    Ok(())
}

fn push_floats(out: &mut String, xs: &[f64]) -> Result<()> {
    out.push('[');
    for (i, &x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_float(out, x)?;
    }
    out.push(']');
    Ok(())
}

impl BroadcastPacket {
    pub fn p(&self) -> usize {
        self.beta_bar.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PROTOCOL_VERSION {
            return Err(Error::protocol(format!(
                "unsupported protocol version {}",
                self.version
            )));
        }
        if self.beta_bar.len() != self.encoding.width() {
            return Err(Error::protocol(
                "beta_bar length does not match the encoding",
            ));
        }
        if self.beta_bar.iter().any(|b| !b.is_finite()) {
            return Err(Error::protocol("beta_bar has non-finite entries"));
        }
        Ok(())
    }

    pub fn to_wire(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::new();
        out.push_str(&format!("{{\"version\":{},\"encoding\":", self.version));
        out.push_str(&serde_json::to_string(&self.encoding)?);
        out.push_str(",\"beta_bar\":");
        push_floats(&mut out, &self.beta_bar)?;
        out.push('}');
        Ok(out)
    }

    pub fn from_wire(text: &str) -> Result<Self> {
        let packet: Self = serde_json::from_str(text)
            .map_err(|e| Error::protocol(format!("bad broadcast packet: {e}")))?;
        packet.validate()?;
        Ok(packet)
    }
}

impl SiteMessage {
    pub fn p(&self) -> usize {
        self.grad.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.grad.len();
        if self.n == 0 {
            return Err(Error::protocol(format!(
                "site {} reports zero rows",
                self.site_id
            )));
        }
        if self.hess.len() != p || self.hess.iter().any(|r| r.len() != p) {
            return Err(Error::protocol(format!(
                "site {}: hessian is not {p}x{p}",
                self.site_id
            )));
        }
        let finite = self
            .grad
            .iter()
            .chain(self.hess.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::protocol(format!(
                "site {}: non-finite entries",
                self.site_id
            )));
        }
        for a in 0..p {
            for b in a + 1..p {
                let (x, y) = (self.hess[a][b], self.hess[b][a]);
                if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
                    return Err(Error::protocol(format!(
                        "site {}: hessian is not symmetric",
                        self.site_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_wire(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::new();
        out.push_str(&format!(
            "{{\"site_id\":{:>ID_WIDTH$},\"n\":{:>COUNT_WIDTH$},\"grad\":",
            self.site_id, self.n
        ));
        push_floats(&mut out, &self.grad)?;
        out.push_str(",\"hess\":[");
        for (i, row) in self.hess.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            push_floats(&mut out, row)?;
        }
        out.push_str("]}");
        Ok(out)
    }

    pub fn from_wire(text: &str) -> Result<Self> {
        let msg: Self = serde_json::from_str(text)
            .map_err(|e| Error::protocol(format!("bad site message: {e}")))?;
        msg.validate()?;
        Ok(msg)
    }
}
