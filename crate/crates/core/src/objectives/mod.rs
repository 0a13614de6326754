//! Task-agnostic perception objectives and their weighted composite
//!
//! `L_perc = β·L_inv + 1[nce]·L_NCE + w_var·Φ_var + w_cov·Φ_cov + w_eq·Φ_eq`
//!
//! The diversity terms `Φ_var` and `Φ_cov` are averaged over the two views.
//! None of these terms ever sees a label.

pub mod terms;

use alloc::vec::Vec;

pub use terms::Similarity;

use crate::error::{contract, Result};
use crate::numerics::gradient::backprop;
use crate::numerics::{CodeGrad, CodeLoss, Codes, Encoder, Matrix};
use crate::worlds::{TransformFamily, ViewBatch};

/// Weights and hyperparameters selecting the terms of `L_perc`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub beta_inv: f64,
    pub use_nce: bool,
    pub tau: f64,
    pub symmetric_nce: bool,
    pub sim: Similarity,
    pub gamma: f64,
    pub w_var: f64,
    pub w_cov: f64,
    pub w_eq: f64,
    /// Target for `E‖f(x) − f(T_δ x)‖²`. Reported, not enforced.
    pub epsilon_inv: f64,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self {
            beta_inv: 1.0,
            use_nce: true,
            tau: 0.5,
            symmetric_nce: true,
            sim: Similarity::Cosine,
            gamma: 1.0,
            w_var: 1.0,
            w_cov: 0.1,
            w_eq: 0.0,
            epsilon_inv: 0.1,
        }
    }
}

impl ObjectiveSpec {
    /// Every term switched off.
    pub fn zero() -> Self {
        Self {
            beta_inv: 0.0,
            use_nce: false,
            w_var: 0.0,
            w_cov: 0.0,
            w_eq: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(contract("tau must be a positive finite number"));
        }
        let weights = [
            ("beta_inv", self.beta_inv),
            ("gamma", self.gamma),
            ("w_var", self.w_var),
            ("w_cov", self.w_cov),
            ("w_eq", self.w_eq),
            ("epsilon_inv", self.epsilon_inv),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(contract(alloc::format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// `L_inv` as a [`CodeLoss`].
pub struct Invariance;

impl CodeLoss for Invariance {
    fn evaluate(&self, c: &Codes<'_>) -> Result<CodeGrad> {
        terms::invariance(c.z, c.z_plus)
    }
}

/// `Φ_eq` with `ρ` supplied per group parameter.
pub struct Equivariance<R> {
    pub rho: R,
}

impl<R: Fn(f64, usize) -> Result<Matrix>> CodeLoss for Equivariance<R> {
    fn evaluate(&self, c: &Codes<'_>) -> Result<CodeGrad> {
        let rhos = c
            .deltas
            .iter()
            .map(|&d| (self.rho)(d, c.z.cols()))
            .collect::<Result<Vec<_>>>()?;
        terms::equivariance(c.z, c.z_plus, &rhos)
    }
}

/// In-batch InfoNCE.
pub struct InfoNce {
    pub tau: f64,
    pub sim: Similarity,
    pub symmetric: bool,
}

impl CodeLoss for InfoNce {
    fn evaluate(&self, c: &Codes<'_>) -> Result<CodeGrad> {
        terms::infonce(c.z, c.z_plus, self.tau, self.sim, self.symmetric)
    }
}

/// `Φ_var` averaged over both views.
pub struct VarianceFloor {
    pub gamma: f64,
}

impl CodeLoss for VarianceFloor {
    fn evaluate(&self, c: &Codes<'_>) -> Result<CodeGrad> {
        Ok(terms::mean_pair(
            terms::variance_floor(c.z, self.gamma)?,
            terms::variance_floor(c.z_plus, self.gamma)?,
        ))
    }
}

/// `Φ_cov` averaged over both views.
pub struct CovariancePenalty;

impl CodeLoss for CovariancePenalty {
    fn evaluate(&self, c: &Codes<'_>) -> Result<CodeGrad> {
        Ok(terms::mean_pair(
            terms::covariance_penalty(c.z)?,
            terms::covariance_penalty(c.z_plus)?,
        ))
    }
}

/// Unweighted term values and weighted contributions of one `L_perc`
/// evaluation. `total == Σ contributions`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Components {
    pub inv: f64,
    pub nce: f64,
    pub var: f64,
    pub cov: f64,
    pub eq: f64,
}

impl Components {
    pub fn sum(&self) -> f64 {
        self.inv + self.nce + self.var + self.cov + self.eq
    }

    pub const NAMES: [&'static str; 5] = ["inv", "nce", "var", "cov", "eq"];

    pub fn as_array(&self) -> [f64; 5] {
        [self.inv, self.nce, self.var, self.cov, self.eq]
    }
}

/// The composite objective bound to a transform family (for `ρ`).
pub struct PercLoss<'a> {
    pub spec: &'a ObjectiveSpec,
    pub transforms: &'a TransformFamily,
}

struct Term {
    weight: f64,
    grad: CodeGrad,
}

impl PercLoss<'_> {
    fn terms(&self, c: &Codes<'_>) -> Result<[Option<Term>; 5]> {
        self.spec.validate()?;
        let s = self.spec;
        let eval = |w: f64, active: bool, loss: &dyn CodeLoss| -> Result<Option<Term>> {
            if !active {
                return Ok(None);
            }
            Ok(Some(Term {
                weight: w,
                grad: loss.evaluate(c)?,
            }))
        };
        let family = self.transforms;
        Ok([
            eval(s.beta_inv, s.beta_inv > 0.0, &Invariance)?,
            eval(
                1.0,
                s.use_nce,
                &InfoNce {
                    tau: s.tau,
                    sim: s.sim,
                    symmetric: s.symmetric_nce,
                },
            )?,
            eval(s.w_var, s.w_var > 0.0, &VarianceFloor { gamma: s.gamma })?,
            eval(s.w_cov, s.w_cov > 0.0, &CovariancePenalty)?,
            eval(
                s.w_eq,
                s.w_eq > 0.0,
                &Equivariance {
                    rho: |d: f64, dz: usize| family.rho(d, dz),
                },
            )?,
        ])
    }

    /// Weighted contribution of every term.
    pub fn components(&self, c: &Codes<'_>) -> Result<Components> {
        Ok(Self::split(&self.terms(c)?))
    }

    fn split(t: &[Option<Term>; 5]) -> Components {
        let val = |o: &Option<Term>| o.as_ref().map_or(0.0, |t| t.weight * t.grad.value);
        Components {
            inv: val(&t[0]),
            nce: val(&t[1]),
            var: val(&t[2]),
            cov: val(&t[3]),
            eq: val(&t[4]),
        }
    }

    fn combine(t: &[Option<Term>; 5], c: &Codes<'_>) -> CodeGrad {
        let mut total = CodeGrad::zero(c);
        for t in t.iter().flatten() {
            total.add_scaled(t.weight, &t.grad);
        }
        total
    }
}

impl CodeLoss for PercLoss<'_> {
    fn evaluate(&self, c: &Codes<'_>) -> Result<CodeGrad> {
        Ok(Self::combine(&self.terms(c)?, c))
    }
}

fn codes_of(enc: &Encoder, views: &ViewBatch) -> Result<(Matrix, Matrix)> {
    Ok((enc.forward(&views.x)?, enc.forward(&views.x_plus)?))
}

/// `E‖f(x) − f(T_δ x)‖²` on the batch.
pub fn invariance_loss(enc: &Encoder, views: &ViewBatch) -> Result<f64> {
    let (z, zp) = codes_of(enc, views)?;
    Ok(terms::invariance(&z, &zp)?.value)
}

/// `E‖f(T_δ x) − ρ(δ) f(x)‖²` for an explicit `ρ`.
pub fn equivariance_loss(enc: &Encoder, views: &ViewBatch, rho: impl Fn(f64, usize) -> Result<Matrix>) -> Result<f64> {
    let (z, zp) = codes_of(enc, views)?;
    let c = Codes {
        z: &z,
        z_plus: &zp,
        deltas: &views.deltas,
    };
    Ok(Equivariance { rho }.evaluate(&c)?.value)
}

/// Symmetric in-batch InfoNCE.
pub fn infonce_loss(enc: &Encoder, views: &ViewBatch, tau: f64, sim: Similarity) -> Result<f64> {
    let (z, zp) = codes_of(enc, views)?;
    Ok(terms::infonce(&z, &zp, tau, sim, true)?.value)
}

pub fn variance_floor(z: &Matrix, gamma: f64) -> Result<f64> {
    terms::variance_floor(z, gamma).map(|(v, _)| v)
}

pub fn covariance_penalty(z: &Matrix) -> Result<f64> {
    terms::covariance_penalty(z).map(|(v, _)| v)
}

/// One evaluation of `L_perc`: total, per-term contributions and the exact
/// parameter gradient.
#[derive(Debug, Clone)]
pub struct PercEval {
    pub total: f64,
    pub components: Components,
    pub grad: Vec<f64>,
}

pub fn perc_loss(
    enc: &Encoder,
    views: &ViewBatch,
    spec: &ObjectiveSpec,
    transforms: &TransformFamily,
) -> Result<PercEval> {
    let loss = PercLoss { spec, transforms };
    let (z, zp) = codes_of(enc, views)?;
    let c = Codes {
        z: &z,
        z_plus: &zp,
        deltas: &views.deltas,
    };
    let terms = loss.terms(&c)?;
    let g = PercLoss::combine(&terms, &c);
    Ok(PercEval {
        total: g.value,
        components: PercLoss::split(&terms),
        grad: backprop(enc, &g, &views.x, &views.x_plus)?,
    })
}

/// Weighted parameter gradient of every term separately, in
/// [`Components::NAMES`] order. Inactive terms give zero vectors.
pub fn perc_component_grads(
    enc: &Encoder,
    views: &ViewBatch,
    spec: &ObjectiveSpec,
    transforms: &TransformFamily,
) -> Result<[Vec<f64>; 5]> {
    let loss = PercLoss { spec, transforms };
    let (z, zp) = codes_of(enc, views)?;
    let c = Codes {
        z: &z,
        z_plus: &zp,
        deltas: &views.deltas,
    };
    let terms = loss.terms(&c)?;
    let mut out: [Vec<f64>; 5] = Default::default();
    for (slot, t) in out.iter_mut().zip(terms.iter()) {
        *slot = match t {
            Some(t) => {
                let mut g = CodeGrad::zero(&c);
                g.add_scaled(t.weight, &t.grad);
                backprop(enc, &g, &views.x, &views.x_plus)?
            }
            None => alloc::vec![0.0; enc.param_count()],
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
