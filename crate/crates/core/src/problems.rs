//! Composite per-agent objectives `f_i = s_i + r_i`.
//!
//! Each objective exposes the gradient of its smooth part `s_i`, the
//! proximal operator of its nonsmooth part `r_i`, and a Lipschitz constant
//! `L_i` for `∇s_i`. Matrices are serialized row-major.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::serde_mat;
use crate::{Error, Result};

/// `sign(u_t)·max(|u_t| − lam, 0)` componentwise.
pub fn prox_l1(u: &DVector<f64>, lam: f64) -> Result<DVector<f64>> {
    if !(lam > 0.0) {
        return Err(Error::NonPositiveScale(lam));
    }
    Ok(u.map(|t| t.signum() * (t.abs() - lam).max(0.0)))
}

/// Exact prox of `r(x) = ‖x − b‖₂`: snap to `b` inside the ball of radius
/// `lam`, otherwise shrink radially toward `b` by `lam`.
pub fn prox_l2norm(u: &DVector<f64>, b: &DVector<f64>, lam: f64) -> Result<DVector<f64>> {
    if !(lam > 0.0) {
        return Err(Error::NonPositiveScale(lam));
    }
    if u.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "point has length {}, center has length {}",
            u.len(),
            b.len()
        )));
    }
    let diff = u - b;
    let dist = diff.norm();
    if dist <= lam {
        Ok(b.clone())
    } else {
        Ok(u - diff * (lam / dist))
    }
}

/// Prox of `r(X) = ½‖X − target‖_F²`: `(U + lam·target)/(1 + lam)`.
pub fn prox_quadratic_matrix(
    u: &DMatrix<f64>,
    target: &DMatrix<f64>,
    lam: f64,
) -> Result<DMatrix<f64>> {
    if u.shape() != target.shape() {
        return Err(Error::DimensionMismatch(format!(
            "U is {:?}, target is {:?}",
            u.shape(),
            target.shape()
        )));
    }
    if !(lam > 0.0) {
        return Err(Error::NonPositiveScale(lam));
    }
    Ok((u + target * lam) / (1.0 + lam))
}

/// Numerically stable `ln(1 + e^t)`.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Numerically stable logistic function `1/(1 + e^{−t})`.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let s = a.clone().svd(false, false).singular_values;
    let top = s.iter().copied().fold(0.0, f64::max);
    top * top
}

/// One agent's private objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentObjective {
    /// `s(x) = ½‖Ax − b‖²`, `r(x) = θ‖x‖₁`.
    LeastSquaresL1 {
        #[serde(with = "serde_mat::matrix")]
        a: DMatrix<f64>,
        #[serde(with = "serde_mat::vector")]
        b: DVector<f64>,
        theta: f64,
        lipschitz: f64,
    },
    /// `s(x) = (1/m) Σ ln(1 + exp(−d_j h_jᵀx))`, `r(x) = θ‖x‖₁`. Rows of
    /// `features` are the `h_j`.
    LogisticL1 {
        #[serde(with = "serde_mat::matrix")]
        features: DMatrix<f64>,
        labels: Vec<f64>,
        theta: f64,
        lipschitz: f64,
    },
    /// `s ≡ 0`, `r(x) = ‖x − b‖₂`.
    GeometricMedian {
        #[serde(with = "serde_mat::vector")]
        anchor: DVector<f64>,
    },
    /// `s ≡ 0`, `r(x) = ½‖x − t‖²`; a flattened matrix consensus target.
    QuadraticTarget {
        #[serde(with = "serde_mat::vector")]
        target: DVector<f64>,
    },
}

/// `½‖A x − b‖² + θ‖x‖₁` with `L = σ_max(A)²`.
pub fn least_squares_l1(a: DMatrix<f64>, b: DVector<f64>, theta: f64) -> Result<AgentObjective> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "A has {} rows, b has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    if !(theta >= 0.0) {
        return Err(Error::Config(format!("θ must be nonnegative, got {theta}")));
    }
    let lipschitz = spectral_norm_sq(&a);
    Ok(AgentObjective::LeastSquaresL1 {
        a,
        b,
        theta,
        lipschitz,
    })
}

/// Sparse logistic regression on the samples `(h_j, d_j)`, `d_j ∈ {±1}`.
/// `L = λ_max((1/(4m)) Σ h_j h_jᵀ)`.
pub fn logistic_l1(features: DMatrix<f64>, labels: Vec<f64>, theta: f64) -> Result<AgentObjective> {
    if features.nrows() == 0 {
        return Err(Error::DimensionMismatch("logistic objective needs a sample".into()));
    }
    if features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows, {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if let Some(d) = labels.iter().find(|d| **d != 1.0 && **d != -1.0) {
        return Err(Error::Config(format!("labels must be ±1, got {d}")));
    }
    if !(theta >= 0.0) {
        return Err(Error::Config(format!("θ must be nonnegative, got {theta}")));
    }
    let m = features.nrows() as f64;
    let lipschitz = spectral_norm_sq(&features) / (4.0 * m);
    Ok(AgentObjective::LogisticL1 {
        features,
        labels,
        theta,
        lipschitz,
    })
}

pub fn geometric_median(anchor: DVector<f64>) -> AgentObjective {
    AgentObjective::GeometricMedian { anchor }
}

pub fn quadratic_target(target: DVector<f64>) -> AgentObjective {
    AgentObjective::QuadraticTarget { target }
}

impl AgentObjective {
    pub fn dim(&self) -> usize {
        match self {
            AgentObjective::LeastSquaresL1 { a, .. } => a.ncols(),
            AgentObjective::LogisticL1 { features, .. } => features.ncols(),
            AgentObjective::GeometricMedian { anchor } => anchor.len(),
            AgentObjective::QuadraticTarget { target } => target.len(),
        }
    }

    /// Lipschitz constant of `∇s`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            AgentObjective::LeastSquaresL1 { lipschitz, .. }
            | AgentObjective::LogisticL1 { lipschitz, .. } => *lipschitz,
            AgentObjective::GeometricMedian { .. } | AgentObjective::QuadraticTarget { .. } => 0.0,
        }
    }

    pub fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        match self {
            AgentObjective::LeastSquaresL1 { a, b, .. } => 0.5 * (a * x - b).norm_squared(),
            AgentObjective::LogisticL1 {
                features, labels, ..
            } => {
                let margins = features * x;
                let total: f64 = margins
                    .iter()
                    .zip(labels)
                    .map(|(z, d)| softplus(-d * z))
                    .sum();
                total / labels.len() as f64
            }
            AgentObjective::GeometricMedian { .. } | AgentObjective::QuadraticTarget { .. } => 0.0,
        }
    }

    pub fn nonsmooth_value(&self, x: &DVector<f64>) -> f64 {
        match self {
            AgentObjective::LeastSquaresL1 { theta, .. }
            | AgentObjective::LogisticL1 { theta, .. } => theta * x.lp_norm(1),
            AgentObjective::GeometricMedian { anchor } => (x - anchor).norm(),
            AgentObjective::QuadraticTarget { target } => 0.5 * (x - target).norm_squared(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.smooth_value(x) + self.nonsmooth_value(x)
    }

    pub fn grad_smooth(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            AgentObjective::LeastSquaresL1 { a, b, .. } => a.tr_mul(&(a * x - b)),
            AgentObjective::LogisticL1 {
                features, labels, ..
            } => {
                let margins = features * x;
                let m = labels.len() as f64;
                let weights = DVector::from_iterator(
                    labels.len(),
                    margins
                        .iter()
                        .zip(labels)
                        .map(|(z, d)| -d * logistic(-d * z) / m),
                );
                features.tr_mul(&weights)
            }
            AgentObjective::GeometricMedian { .. } | AgentObjective::QuadraticTarget { .. } => {
                DVector::zeros(self.dim())
            }
        }
    }

    /// An element of `∂f(x)`, taking 0 where `r` is not differentiable.
    pub fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let g = self.grad_smooth(x);
        match self {
            AgentObjective::LeastSquaresL1 { theta, .. }
            | AgentObjective::LogisticL1 { theta, .. } => {
                g + x.map(|v| if v == 0.0 { 0.0 } else { theta * v.signum() })
            }
            AgentObjective::GeometricMedian { anchor } => {
                let d = x - anchor;
                let norm = d.norm();
                if norm == 0.0 {
                    g
                } else {
                    g + d / norm
                }
            }
            AgentObjective::QuadraticTarget { target } => g + (x - target),
        }
    }

    /// `prox_{scale·r}(u)`.
    pub fn prox(&self, u: &DVector<f64>, scale: f64) -> Result<DVector<f64>> {
        if !(scale > 0.0) {
            return Err(Error::NonPositiveScale(scale));
        }
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has length {}, objective has dimension {}",
                u.len(),
                self.dim()
            )));
        }
        match self {
            AgentObjective::LeastSquaresL1 { theta, .. }
            | AgentObjective::LogisticL1 { theta, .. } => {
                if *theta == 0.0 {
                    Ok(u.clone())
                } else {
                    prox_l1(u, scale * theta)
                }
            }
            AgentObjective::GeometricMedian { anchor } => prox_l2norm(u, anchor, scale),
            AgentObjective::QuadraticTarget { target } => Ok((u + target * scale) / (1.0 + scale)),
        }
    }
}

/// The consensus problem `min (1/n) Σ f_i(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub p: usize,
    pub objectives: Vec<AgentObjective>,
    #[serde(default, with = "serde_mat::opt_vector")]
    pub reference: Option<DVector<f64>>,
}

impl ProblemInstance {
    pub fn new(objectives: Vec<AgentObjective>) -> Result<Self> {
        let p = objectives
            .first()
            .map(AgentObjective::dim)
            .ok_or_else(|| Error::DimensionMismatch("no objectives".into()))?;
        if let Some((i, o)) = objectives.iter().enumerate().find(|(_, o)| o.dim() != p) {
            return Err(Error::DimensionMismatch(format!(
                "objective {i} has dimension {}, expected {p}",
                o.dim()
            )));
        }
        Ok(ProblemInstance {
            p,
            objectives,
            reference: None,
        })
    }

    pub fn n(&self) -> usize {
        self.objectives.len()
    }

    /// `L = max_i L_i`.
    pub fn max_lipschitz(&self) -> f64 {
        self.objectives
            .iter()
            .map(AgentObjective::lipschitz)
            .fold(0.0, f64::max)
    }

    /// `f̄(x) = (1/n) Σ f_i(x)`.
    pub fn mean_value(&self, x: &DVector<f64>) -> f64 {
        self.objectives.iter().map(|o| o.value(x)).sum::<f64>() / self.n() as f64
    }

    pub fn with_reference(mut self, x: DVector<f64>) -> Self {
        self.reference = Some(x);
        self
    }
}
