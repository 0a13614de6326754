use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Distribution of rotation angles used when sampling views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSampler {
    /// Uniform on `[0, 2π)`.
    Uniform,
    /// `δ ~ N(0, σ²)`.
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Rotation2d,
    FlipV,
    DiscreteSet,
}

/// A family `G` of admissible input transforms together with its sampling
/// measure and, where declared, a linear representation `ρ` on code space.
///
/// Group parameters `δ` are plain `f64`: an angle for rotations, an element
/// index (`0` = identity) for the finite families.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformFamily {
    /// The trivial group `{id}`.
    Identity,
    /// Planar rotations `R_δ`.
    Rotation2d { sampler: AngleSampler },
    /// `{id, τ}` with `τ` flipping the bit at `coord`: `v ↦ 1 − v`.
    FlipV { coord: usize },
    /// `{id, 180° rotation}`, i.e. `x ↦ −x`.
    HalfTurn,
}

impl TransformFamily {
    pub fn kind(&self) -> TransformKind {
        match self {
            TransformFamily::Rotation2d { .. } => TransformKind::Rotation2d,
            TransformFamily::FlipV { .. } => TransformKind::FlipV,
            TransformFamily::Identity | TransformFamily::HalfTurn => TransformKind::DiscreteSet,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransformFamily::Identity => "identity",
            TransformFamily::Rotation2d { .. } => "rotation2d",
            TransformFamily::FlipV { .. } => "flip_v",
            TransformFamily::HalfTurn => "half_turn",
        }
    }

    /// Elements of a finite family, `None` for continuous ones.
    pub fn elements(&self) -> Option<Vec<f64>> {
        match self {
            TransformFamily::Identity => Some(vec![0.0]),
            TransformFamily::FlipV { .. } | TransformFamily::HalfTurn => Some(vec![0.0, 1.0]),
            TransformFamily::Rotation2d { .. } => None,
        }
    }

    /// Draws `δ ~ μ_G`. Finite families are sampled uniformly.
    pub fn sample_delta(&self, rng: &mut Rng) -> f64 {
        match self {
            TransformFamily::Identity => 0.0,
            TransformFamily::Rotation2d { sampler } => match sampler {
                AngleSampler::Uniform => rng.uniform_in(0.0, 2.0 * PI),
                AngleSampler::Gaussian { sigma } => sigma * rng.normal(),
            },
            TransformFamily::FlipV { .. } | TransformFamily::HalfTurn => rng.below(2) as f64,
        }
    }

    pub fn apply_into(&self, delta: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        match self {
            TransformFamily::Identity => {}
            TransformFamily::Rotation2d { .. } => {
                let (s, c) = (libm::sin(delta), libm::cos(delta));
                out[0] = c * x[0] - s * x[1];
                out[1] = s * x[0] + c * x[1];
            }
            TransformFamily::FlipV { coord } => {
                if delta != 0.0 {
                    out[*coord] = 1.0 - x[*coord];
                }
            }
            TransformFamily::HalfTurn => {
                if delta != 0.0 {
                    out.iter_mut().for_each(|v| *v = -*v);
                }
            }
        }
    }

    pub fn apply(&self, delta: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(delta, x, &mut out);
        out
    }

    pub fn inverse(&self, delta: f64) -> f64 {
        match self {
            TransformFamily::Rotation2d { .. } => -delta,
            // every non-trivial finite element here is an involution
            _ => delta,
        }
    }

    /// Parameter of `T_{δ1} ∘ T_{δ2}`.
    pub fn compose(&self, d1: f64, d2: f64) -> f64 {
        match self {
            TransformFamily::Identity => 0.0,
            TransformFamily::Rotation2d { .. } => d1 + d2,
            TransformFamily::FlipV { .. } | TransformFamily::HalfTurn => ((d1 as u8) ^ (d2 as u8)) as f64,
        }
    }

    /// `ρ(δ)` acting on `d_z`-dimensional codes, when declared.
    ///
    /// Rotations act block-diagonally on consecutive coordinate pairs and
    /// need an even `d_z`; the half-turn acts as `−I`.
    pub fn rho(&self, delta: f64, d_z: usize) -> Result<Matrix> {
        match self {
            TransformFamily::Identity => Ok(Matrix::identity(d_z)),
            TransformFamily::HalfTurn => Ok(Matrix::identity(d_z).scaled(if delta != 0.0 { -1.0 } else { 1.0 })),
            TransformFamily::Rotation2d { .. } => {
                if !d_z.is_multiple_of(2) {
                    return Err(Error::Config(alloc::format!(
                        "rotation representation needs even code dimension, got {d_z}"
                    )));
                }
                let (s, c) = (libm::sin(delta), libm::cos(delta));
                let mut m = Matrix::zeros(d_z, d_z);
                for b in (0..d_z).step_by(2) {
                    m[(b, b)] = c;
                    m[(b, b + 1)] = -s;
                    m[(b + 1, b)] = s;
                    m[(b + 1, b + 1)] = c;
                }
                Ok(m)
            }
            TransformFamily::FlipV { .. } => Err(Error::Config("flip_v declares no code-space representation".into())),
        }
    }

    pub fn declares_rho(&self) -> bool {
        !matches!(self, TransformFamily::FlipV { .. })
    }

    /// Whether the family is a smooth one-parameter group, so that
    /// transform magnitude and derivatives at the identity make sense.
    pub fn is_smooth(&self) -> bool {
        matches!(self, TransformFamily::Rotation2d { .. })
    }

    /// Applies the transform of magnitude `alpha` (rotation by `alpha`).
    pub fn apply_magnitude(&self, alpha: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_smooth() {
            return Err(Error::NotApplicable(alloc::format!(
                "{} is not parameterised by a continuous magnitude",
                self.name()
            )));
        }
        Ok(self.apply(alpha, x))
    }
}
