//! Logistic-regression core: dummy encoding, average log-likelihood with
//! its analytic gradient and Hessian, and a damped Newton maximizer shared
//! by the plain MLE and the federated surrogate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Column, SiteDataset};
use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + eˣ) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedVariable {
    pub name: String,
    /// The first category is the reference and gets no column.
    pub categories: Vec<String>,
}

/// Column layout: intercept first, then `c − 1` indicators per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEncoding {
    pub variables: Vec<EncodedVariable>,
}

impl DesignEncoding {
    pub fn width(&self) -> usize {
        1 + self
            .variables
            .iter()
            .map(|v| v.categories.len().saturating_sub(1))
            .sum::<usize>()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["(intercept)".to_string()];
        for v in &self.variables {
            for c in v.categories.iter().skip(1) {
                names.push(format!("{}={}", v.name, c));
            }
        }
        names
    }

    /// First coefficient index of each variable's indicator block.
    pub fn offsets(&self) -> Vec<usize> {
        let mut at = 1;
        self.variables
            .iter()
            .map(|v| {
                let o = at;
                at += v.categories.len().saturating_sub(1);
                o
            })
            .collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    /// Encoding of `vars` as declared in an all-categorical dataset.
    pub fn for_dataset(data: &SiteDataset, vars: &[String]) -> Result<Self> {
        let mut variables = Vec::with_capacity(vars.len());
        for name in vars {
            let spec = data
                .schema
                .variable(name)
                .ok_or_else(|| Error::data(format!("unknown variable `{name}`")))?;
            if spec.is_continuous() {
                return Err(Error::data(format!(
                    "variable `{name}` is continuous; bin it before encoding"
                )));
            }
            variables.push(EncodedVariable {
                name: name.clone(),
                categories: spec.categories.clone(),
            });
        }
        Ok(Self { variables })
    }
}

/// Encoded rows of one site.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: Matrix,
    pub y: Vector,
}

impl Design {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.y.iter().filter(|&&v| v > 0.5).count();
        pos > 0 && pos < self.n()
    }
}

/// Encodes `vars` of an all-categorical dataset with the lowest-index
/// category of each as reference.
pub fn encode(data: &SiteDataset, vars: &[String]) -> Result<(Design, DesignEncoding)> {
    let encoding = DesignEncoding::for_dataset(data, vars)?;
    let design = encode_with(data, &encoding)?;
    Ok((design, encoding))
}

/// Encodes rows against a fixed (e.g. broadcast) encoding, matching
/// categories by label.
pub fn encode_with(data: &SiteDataset, encoding: &DesignEncoding) -> Result<Design> {
    let n = data.n_rows();
    let mut x = Matrix::zeros(n, encoding.width());
    x.column_mut(0).fill(1.0);
    for (var, offset) in encoding.variables.iter().zip(encoding.offsets()) {
        let idx = data.schema.index_of(&var.name).ok_or_else(|| {
            Error::data(format!(
                "variable `{}` missing at site {}",
                var.name, data.site_id
            ))
        })?;
        let spec = &data.schema.variables[idx];
        let Column::Categorical(codes) = &data.columns[idx] else {
            return Err(Error::data(format!(
                "variable `{}` is not categorical",
                var.name
            )));
        };
        // local code -> encoding position
        let mut map = Vec::with_capacity(spec.categories.len());
        for label in &spec.categories {
            map.push(var.categories.iter().position(|c| c == label));
        }
        for (row, &code) in codes.iter().enumerate() {
            let pos = map[code as usize].ok_or_else(|| {
                Error::data(format!(
                    "unseen category `{}` for `{}` at site {}",
                    spec.categories[code as usize], var.name, data.site_id
                ))
            })?;
            if pos > 0 {
                x[(row, offset + pos - 1)] = 1.0;
            }
        }
    }
    let y = Vector::from_iterator(n, data.outcome.iter().map(|&v| f64::from(v)));
    Ok(Design { x, y })
}

/// Intercept and slope coefficients aligned to a [`DesignEncoding`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientVector(#[serde(with = "vector_serde")] Vector);

mod vector_serde {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Ok(Vector::from_vec(v))
    }
}

impl CoefficientVector {
    pub fn new(v: Vector) -> Self {
        Self(v)
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self(Vector::from_column_slice(v))
    }

    pub fn zeros(p: usize) -> Self {
        Self(Vector::zeros(p))
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.0 - &other.0).amax()
    }
}

fn check_dims(beta: &Vector, x: &Matrix, y: &Vector) {
    assert_eq!(
        beta.len(),
        x.ncols(),
        "coefficient length must equal design width"
    );
    assert_eq!(x.nrows(), y.len(), "design rows must equal outcome length");
}

/// Average log-likelihood `(1/n) Σ [y xᵀβ − log(1 + exp(xᵀβ))]`.
pub fn log_likelihood(beta: &Vector, x: &Matrix, y: &Vector) -> f64 {
    check_dims(beta, x, y);
    let eta = x * beta;
    let total: f64 = eta
        .iter()
        .zip(y.iter())
        .map(|(&e, &t)| t * e - softplus(e))
        .sum();
    total / y.len() as f64
}

/// `(1/n) Σ (y − σ(xᵀβ)) x`.
pub fn gradient(beta: &Vector, x: &Matrix, y: &Vector) -> Vector {
    check_dims(beta, x, y);
    let eta = x * beta;
    let resid = Vector::from_iterator(
        y.len(),
        eta.iter().zip(y.iter()).map(|(&e, &t)| t - sigmoid(e)),
    );
    x.tr_mul(&resid) / y.len() as f64
}

/// `−(1/n) Σ σ(1 − σ) x xᵀ`, exactly symmetric.
pub fn hessian(beta: &Vector, x: &Matrix, y: &Vector) -> Matrix {
    check_dims(beta, x, y);
    let eta = x * beta;
    weighted_gram(
        x,
        eta.iter().map(|&e| {
            let s = sigmoid(e);
            s * (1.0 - s)
        }),
        -1.0 / y.len() as f64,
    )
}

/// `scale · Xᵀ diag(w) X`, upper triangle accumulated then mirrored.
fn weighted_gram(x: &Matrix, weights: impl Iterator<Item = f64>, scale: f64) -> Matrix {
    let p = x.ncols();
    let mut h = Matrix::zeros(p, p);
    let mut row = vec![0.0; p];
    for (i, w) in weights.enumerate() {
        if w == 0.0 {
            continue;
        }
        for (a, r) in row.iter_mut().enumerate() {
            *r = x[(i, a)];
        }
        for a in 0..p {
            let wa = w * row[a];
            if wa == 0.0 {
                continue;
            }
            for b in a..p {
                h[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = h[(a, b)] * scale;
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    h
}

/// Value, gradient and Hessian of a smooth concave objective.
pub trait Objective {
    fn value(&self, beta: &Vector) -> f64;
    fn derivatives(&self, beta: &Vector) -> (f64, Vector, Matrix);
}

/// The site log-likelihood as an [`Objective`].
pub struct LogLikelihood<'a> {
    pub x: &'a Matrix,
    pub y: &'a Vector,
}

impl Objective for LogLikelihood<'_> {
    fn value(&self, beta: &Vector) -> f64 {
        log_likelihood(beta, self.x, self.y)
    }

    fn derivatives(&self, beta: &Vector) -> (f64, Vector, Matrix) {
        (
            log_likelihood(beta, self.x, self.y),
            gradient(beta, self.x, self.y),
            hessian(beta, self.x, self.y),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Converged when every step component is below this...
    pub tol: f64,
    /// ...and the gradient sup-norm is below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Coefficient norm beyond which a non-converged fit is declared separated.
    pub separation_norm: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            grad_tol: 1e-6,
            max_iter: 100,
            separation_norm: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub beta: CoefficientVector,
    pub iterations: usize,
    pub objective: f64,
    pub grad_sup_norm: f64,
    /// Largest ridge added to the negated Hessian along the way (0 if none).
    pub max_ridge: f64,
}

const RIDGE_START: f64 = 1e-8;
const RIDGE_LIMIT: f64 = 1e8;

/// Newton ascent with ridge damping and Armijo step halving.
pub fn newton_maximize(
    obj: &dyn Objective,
    start: &Vector,
    opts: &NewtonOptions,
) -> Result<FitReport> {
    let p = start.len();
    let mut beta = start.clone();
    let (mut f, mut g, mut h) = obj.derivatives(&beta);
    let mut max_ridge: f64 = 0.0;
    if !f.is_finite() {
        return Err(Error::NonConvergence(0));
    }

    for iter in 1..=opts.max_iter {
        let g_sup = g.amax();
        let (dir, ridge) = ascent_direction(&g, &h, p)?;
        if ridge > 0.0 {
            log::debug!(
                "newton iteration {iter}: ridge {ridge:e} added to keep the step ascending"
            );
        }
        max_ridge = max_ridge.max(ridge);

        if dir.amax() < opts.tol && g_sup < opts.grad_tol {
            let beta = beta + dir;
            separation_check(&beta, iter, opts)?;
            return Ok(FitReport {
                objective: obj.value(&beta),
                beta: CoefficientVector(beta),
                iterations: iter,
                grad_sup_norm: g_sup,
                max_ridge,
            });
        }

        let slope = g.dot(&dir);
        let mut t = 1.0;
        let accepted = loop {
            let cand = &beta + &dir * t;
            let fc = obj.value(&cand);
            if fc.is_finite() && fc >= f + 1e-4 * t * slope {
                break Some((cand, fc));
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        let Some((next, f_next)) = accepted else {
            if g_sup < opts.grad_tol {
                // Flat to machine precision; nothing left to gain.
                separation_check(&beta, iter, opts)?;
                return Ok(FitReport {
                    objective: f,
                    beta: CoefficientVector(beta),
                    iterations: iter,
                    grad_sup_norm: g_sup,
                    max_ridge,
                });
            }
            return Err(Error::NonConvergence(iter));
        };
        // In a poorly conditioned direction (a sparse bin) roundoff can hold
        // the step above `tol` forever. Once the gradient is within tolerance
        // and a full step no longer moves the objective beyond its
        // floating-point resolution, there is nothing left to take.
        if g_sup < opts.grad_tol && (f_next - f).abs() <= 16.0 * f64::EPSILON * f.abs().max(1.0) {
            separation_check(&next, iter, opts)?;
            return Ok(FitReport {
                objective: f_next,
                beta: CoefficientVector(next),
                iterations: iter,
                grad_sup_norm: g_sup,
                max_ridge,
            });
        }
        beta = next;
        (f, g, h) = obj.derivatives(&beta);
        let norm = beta.norm();
        if norm > opts.separation_norm && g.amax() >= opts.grad_tol {
            return Err(Error::QuasiSeparation {
                iterations: iter,
                norm,
            });
        }
    }
    Err(Error::NonConvergence(opts.max_iter))
}

/// Under separation the gradient underflows to zero long before the
/// coefficients stop growing, so a large norm at "convergence" is itself the
/// symptom.
fn separation_check(beta: &Vector, iterations: usize, opts: &NewtonOptions) -> Result<()> {
    let norm = beta.norm();
    if norm > opts.separation_norm {
        return Err(Error::QuasiSeparation { iterations, norm });
    }
    Ok(())
}

/// Solves `(−H + λI) d = g`, raising λ from zero (then 1e-8, doubling)
/// until the factorization succeeds and `d` ascends.
fn ascent_direction(g: &Vector, h: &Matrix, p: usize) -> Result<(Vector, f64)> {
    if g.iter().all(|&v| v == 0.0) {
        return Ok((Vector::zeros(p), 0.0));
    }
    let neg_h = -h;
    let mut ridge = 0.0;
    loop {
        let mut a = neg_h.clone();
        for i in 0..p {
            a[(i, i)] += ridge;
        }
        if let Some(chol) = a.cholesky() {
            let d = chol.solve(g);
            if d.iter().all(|v| v.is_finite()) && g.dot(&d) > 0.0 {
                return Ok((d, ridge));
            }
        }
        ridge = if ridge == 0.0 {
            RIDGE_START
        } else {
            ridge * 2.0
        };
        if ridge > RIDGE_LIMIT {
            return Err(Error::SingularHessian {
                max_ridge: RIDGE_LIMIT,
            });
        }
    }
}

/// Maximum-likelihood fit by Newton's method from β = 0.
pub fn fit_mle(x: &Matrix, y: &Vector, opts: &NewtonOptions) -> Result<FitReport> {
    if x.nrows() != y.len() {
        return Err(Error::data("design rows and outcome length differ"));
    }
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    newton_maximize(&LogLikelihood { x, y }, &Vector::zeros(x.ncols()), opts)
}
