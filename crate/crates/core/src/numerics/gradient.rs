//! Loss-on-codes abstraction, backpropagation to encoder parameters, and the
//! central-difference oracle used to check every analytic gradient.

use alloc::vec;
use alloc::vec::Vec;

use super::encoder::Encoder;
use super::matrix::Matrix;
use crate::error::{check_dim, Result};

/// Codes of a paired-view batch: `z = f(x)`, `z_plus = f(T_δ x)`.
pub struct Codes<'a> {
    pub z: &'a Matrix,
    pub z_plus: &'a Matrix,
    pub deltas: &'a [f64],
}

/// Loss value with its gradient with respect to both code matrices.
#[derive(Debug, Clone)]
pub struct CodeGrad {
    pub value: f64,
    pub dz: Matrix,
    pub dz_plus: Matrix,
}

impl CodeGrad {
    pub fn zero(codes: &Codes<'_>) -> Self {
        Self {
            value: 0.0,
            dz: Matrix::zeros(codes.z.rows(), codes.z.cols()),
            dz_plus: Matrix::zeros(codes.z_plus.rows(), codes.z_plus.cols()),
        }
    }

    /// `self += w · other`.
    pub fn add_scaled(&mut self, w: f64, other: &CodeGrad) {
        self.value += w * other.value;
        for (a, b) in self.dz.as_mut_slice().iter_mut().zip(other.dz.as_slice()) {
            *a += w * b;
        }
        for (a, b) in self.dz_plus.as_mut_slice().iter_mut().zip(other.dz_plus.as_slice()) {
            *a += w * b;
        }
    }
}

/// A differentiable batch loss defined on the codes of two aligned views.
pub trait CodeLoss {
    fn evaluate(&self, codes: &Codes<'_>) -> Result<CodeGrad>;
}

/// A loss that ignores its input.
pub struct ConstantLoss(pub f64);

impl CodeLoss for ConstantLoss {
    fn evaluate(&self, codes: &Codes<'_>) -> Result<CodeGrad> {
        let mut g = CodeGrad::zero(codes);
        g.value = self.0;
        Ok(g)
    }
}

/// Value of `loss` on the encoder's codes for the paired views.
pub fn loss_value(enc: &Encoder, loss: &dyn CodeLoss, x: &Matrix, x_plus: &Matrix, deltas: &[f64]) -> Result<f64> {
    let z = enc.forward(x)?;
    let z_plus = enc.forward(x_plus)?;
    let codes = Codes {
        z: &z,
        z_plus: &z_plus,
        deltas,
    };
    Ok(loss.evaluate(&codes)?.value)
}

/// Exact `∇_φ loss` by backpropagating the code gradients through both views.
///
/// Returns `(loss value, flat gradient)`; the gradient has the same layout as
/// [`Encoder::params`].
pub fn param_gradient(
    enc: &Encoder,
    loss: &dyn CodeLoss,
    x: &Matrix,
    x_plus: &Matrix,
    deltas: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_dim("param_gradient views", x.rows(), x_plus.rows())?;
    let z = enc.forward(x)?;
    let z_plus = enc.forward(x_plus)?;
    let codes = Codes {
        z: &z,
        z_plus: &z_plus,
        deltas,
    };
    let g = loss.evaluate(&codes)?;
    let grad = backprop(enc, &g, x, x_plus)?;
    Ok((g.value, grad))
}

/// Pushes a [`CodeGrad`] back to parameter space.
pub fn backprop(enc: &Encoder, g: &CodeGrad, x: &Matrix, x_plus: &Matrix) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; enc.param_count()];
    enc.backward_into(x, &g.dz, &mut grad)?;
    enc.backward_into(x_plus, &g.dz_plus, &mut grad)?;
    Ok(grad)
}

/// Central-difference gradient estimate of a scalar functional.
///
/// # Panics
/// If `step` is not strictly positive.
pub fn finite_diff(f: impl Fn(&[f64]) -> f64, params: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = f(&p);
        p[i] = orig - step;
        let down = f(&p);
        p[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    out
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn relative_l2_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    libm::sqrt(num) / libm::sqrt(den).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = finite_diff(|p| 0.5 * (p[0] * p[0] + p[1] * p[1]), &[1.0, 2.0], 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn constant_and_product() {
        let g = finite_diff(|_| 3.0, &[1.0, 2.0, 3.0], 1e-5);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        let g = finite_diff(|p| p[0] * p[1], &[3.0, 5.0], 1e-5);
        assert!((g[0] - 5.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    #[should_panic]
    fn rejects_zero_step() {
        finite_diff(|p| p[0], &[1.0], 0.0);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut rng = crate::Rng::new(2);
        let enc = Encoder::random(crate::Arch::Mlp1, 2, 4, 2, 1.0, &mut rng);
        let x = Matrix::from_fn(5, 2, |_, _| rng.normal());
        let (v, g) = param_gradient(&enc, &ConstantLoss(2.5), &x, &x, &[0.0; 5]).unwrap();
        assert_eq!(v, 2.5);
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
