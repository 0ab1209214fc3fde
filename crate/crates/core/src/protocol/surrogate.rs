use super::messages::BroadcastPacket;
use super::roles::{AggregateGradients, EncodedSite};
use crate::glm::{self, newton_maximize, FitReport, Matrix, NewtonOptions, Objective, Vector};
use crate::{Error, Result};

/// The lead's surrogate of the pooled average log-likelihood.
pub struct Surrogate<'a> {
    lead: &'a EncodedSite,
    beta_bar: Vector,
    /// `∇L(β̄) − ∇L₁(β̄)`
    grad_shift: Vector,
    /// `∇²L(β̄) − ∇²L₁(β̄)`
    hess_shift: Matrix,
}

impl<'a> Surrogate<'a> {
    pub fn new(
        lead: &'a EncodedSite,
        packet: &BroadcastPacket,
        agg: &AggregateGradients,
    ) -> Result<Self> {
        let p = packet.p();
        if lead.design.p() != p || agg.grad_bar.len() != p {
            return Err(Error::protocol("surrogate dimensions disagree"));
        }
        let beta_bar = Vector::from_column_slice(&packet.beta_bar);
        let (x, y) = (&lead.design.x, &lead.design.y);
        let grad_shift = agg.grad_vector() - glm::gradient(&beta_bar, x, y);
        let hess_shift = agg.hess_matrix() - glm::hessian(&beta_bar, x, y);
        Ok(Self {
            lead,
            beta_bar,
            grad_shift,
            hess_shift,
        })
    }

    pub fn beta_bar(&self) -> &Vector {
        &self.beta_bar
    }

    pub fn gradient(&self, beta: &Vector) -> Vector {
        let d = beta - &self.beta_bar;
        glm::gradient(beta, &self.lead.design.x, &self.lead.design.y)
            + &self.grad_shift
            + &self.hess_shift * d
    }

    pub fn hessian(&self, beta: &Vector) -> Matrix {
        glm::hessian(beta, &self.lead.design.x, &self.lead.design.y) + &self.hess_shift
    }
}

impl Objective for Surrogate<'_> {
    fn value(&self, beta: &Vector) -> f64 {
        let d = beta - &self.beta_bar;
        glm::log_likelihood(beta, &self.lead.design.x, &self.lead.design.y)
            + self.grad_shift.dot(beta)
            + 0.5 * d.dot(&(&self.hess_shift * &d))
    }

    fn derivatives(&self, beta: &Vector) -> (f64, Vector, Matrix) {
        (self.value(beta), self.gradient(beta), self.hessian(beta))
    }
}

pub fn surrogate_loglik(
    beta: &Vector,
    lead: &EncodedSite,
    packet: &BroadcastPacket,
    agg: &AggregateGradients,
) -> Result<f64> {
    Ok(Surrogate::new(lead, packet, agg)?.value(beta))
}

pub fn surrogate_gradient(
    beta: &Vector,
    lead: &EncodedSite,
    packet: &BroadcastPacket,
    agg: &AggregateGradients,
) -> Result<Vector> {
    Ok(Surrogate::new(lead, packet, agg)?.gradient(beta))
}

pub fn surrogate_hessian(
    beta: &Vector,
    lead: &EncodedSite,
    packet: &BroadcastPacket,
    agg: &AggregateGradients,
) -> Result<Matrix> {
    Ok(Surrogate::new(lead, packet, agg)?.hessian(beta))
}

/// Maximizes the surrogate by damped Newton starting at `β̄`.
pub fn fit_global(
    lead: &EncodedSite,
    packet: &BroadcastPacket,
    agg: &AggregateGradients,
    opts: &NewtonOptions,
) -> Result<FitReport> {
    let s = Surrogate::new(lead, packet, agg)?;
    let start = s.beta_bar().clone();
    let fit = newton_maximize(&s, &start, opts)?;
    if fit.max_ridge > 0.0 {
        log::info!(
            "surrogate fit needed ridge damping up to {:e}",
            fit.max_ridge
        );
    }
    Ok(fit)
}
