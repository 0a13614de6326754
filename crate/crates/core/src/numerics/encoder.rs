use alloc::vec;
use alloc::vec::Vec;

use super::matrix::Matrix;
use super::rng::Rng;
use crate::error::{check_dim, contract, Result};

/// Anything that maps an input vector to a code vector.
///
/// Implemented by [`Encoder`] and by the fixed maps used in the theory checks
/// (coordinate projections, orbit-statistic links).
pub trait Representation {
    fn input_dim(&self) -> usize;
    fn code_dim(&self) -> usize;
    fn encode_into(&self, x: &[f64], out: &mut [f64]);

    fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.code_dim()];
        self.encode_into(x, &mut out);
        out
    }

    fn encode_batch(&self, x: &Matrix) -> Result<Matrix> {
        check_dim("encode_batch input", self.input_dim(), x.cols())?;
        let mut z = Matrix::zeros(x.rows(), self.code_dim());
        for i in 0..x.rows() {
            self.encode_into(x.row(i), z.row_mut(i));
        }
        Ok(z)
    }

    /// Bit pattern of every parameter. Used to audit that frozen
    /// representations are not mutated.
    fn param_snapshot(&self) -> Vec<u64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Linear,
    Mlp1,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Linear => "linear",
            Arch::Mlp1 => "mlp1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Arch::Linear),
            "mlp1" => Some(Arch::Mlp1),
            _ => None,
        }
    }
}

/// The sensory encoder `x ↦ z`.
///
/// `Linear`: `z = W1 x + b1` with `W1: d_z × d_x`.
/// `Mlp1`: `z = W2 tanh(W1 x + b1) + b2` with `W1: d_hidden × d_x`.
///
/// Flattened parameter order is `W1, b1, W2, b2` (row-major). Every mutation
/// goes through [`Encoder::set_params`], which bumps `revision`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    arch: Arch,
    d_x: usize,
    d_hidden: usize,
    d_z: usize,
    w1: Matrix,
    b1: Vec<f64>,
    w2: Option<Matrix>,
    b2: Vec<f64>,
    revision: u64,
}

impl Encoder {
    pub fn linear(w1: Matrix, b1: Vec<f64>) -> Result<Self> {
        check_dim("linear bias", w1.rows(), b1.len())?;
        ensure_finite(&b1)?;
        Ok(Self {
            arch: Arch::Linear,
            d_x: w1.cols(),
            d_hidden: 0,
            d_z: w1.rows(),
            w1,
            b1,
            w2: None,
            b2: Vec::new(),
            revision: 0,
        })
    }

    pub fn mlp1(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        check_dim("mlp1 hidden bias", w1.rows(), b1.len())?;
        check_dim("mlp1 output weight", w1.rows(), w2.cols())?;
        check_dim("mlp1 output bias", w2.rows(), b2.len())?;
        ensure_finite(&b1)?;
        ensure_finite(&b2)?;
        Ok(Self {
            arch: Arch::Mlp1,
            d_x: w1.cols(),
            d_hidden: w1.rows(),
            d_z: w2.rows(),
            w1,
            b1,
            w2: Some(w2),
            b2,
            revision: 0,
        })
    }

    /// Linear identity map on `d` dimensions.
    pub fn identity(d: usize) -> Self {
        Self::linear(Matrix::identity(d), vec![0.0; d]).expect("identity is well formed")
    }

    /// Zero weights, given output bias.
    pub fn constant(d_x: usize, value: &[f64]) -> Self {
        Self::linear(Matrix::zeros(value.len(), d_x), value.to_vec()).expect("constant map")
    }

    /// Gaussian initialisation with standard deviation `scale / sqrt(fan_in)`
    /// for weights and zero biases. `d_hidden` is ignored for `Linear`.
    pub fn random(arch: Arch, d_x: usize, d_hidden: usize, d_z: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut gauss = |rows: usize, cols: usize| {
            let s = scale / libm::sqrt(cols.max(1) as f64);
            Matrix::from_fn(rows, cols, |_, _| s * rng.normal())
        };
        match arch {
            Arch::Linear => Self::linear(gauss(d_z, d_x), vec![0.0; d_z]).expect("shapes"),
            Arch::Mlp1 => {
                let w1 = gauss(d_hidden, d_x);
                let w2 = gauss(d_z, d_hidden);
                Self::mlp1(w1, vec![0.0; d_hidden], w2, vec![0.0; d_z]).expect("shapes")
            }
        }
    }

    /// Rebuilds an encoder from its architecture, dimensions and flat
    /// parameters (the inverse of [`Encoder::params`]).
    pub fn from_params(arch: Arch, d_x: usize, d_hidden: usize, d_z: usize, params: &[f64]) -> Result<Self> {
        let mut enc = match arch {
            Arch::Linear => Self::linear(Matrix::zeros(d_z, d_x), vec![0.0; d_z])?,
            Arch::Mlp1 => Self::mlp1(
                Matrix::zeros(d_hidden, d_x),
                vec![0.0; d_hidden],
                Matrix::zeros(d_z, d_hidden),
                vec![0.0; d_z],
            )?,
        };
        enc.set_params(params)?;
        enc.revision = 0;
        Ok(enc)
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_hidden(&self) -> usize {
        self.d_hidden
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn param_count(&self) -> usize {
        let first = self.w1.rows() * self.w1.cols() + self.b1.len();
        first + self.w2.as_ref().map_or(0, |w| w.rows() * w.cols()) + self.b2.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(self.w1.as_slice());
        p.extend_from_slice(&self.b1);
        if let Some(w2) = &self.w2 {
            p.extend_from_slice(w2.as_slice());
        }
        p.extend_from_slice(&self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim("Encoder::set_params", self.param_count(), p.len())?;
        ensure_finite(p)?;
        let mut rest = p;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(self.w1.as_mut_slice());
        take(&mut self.b1);
        if let Some(w2) = &mut self.w2 {
            take(w2.as_mut_slice());
        }
        take(&mut self.b2);
        self.revision += 1;
        Ok(())
    }

    /// Returns a copy with every weight matrix and bias of the output layer
    /// scaled so that codes scale by `c` (linear: `W1, b1`; mlp1: `W2, b2`).
    pub fn with_output_scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        match &mut out.w2 {
            None => {
                out.w1 = out.w1.scaled(c);
                out.b1.iter_mut().for_each(|v| *v *= c);
            }
            Some(w2) => {
                *w2 = w2.scaled(c);
                out.b2.iter_mut().for_each(|v| *v *= c);
            }
        }
        out
    }

    fn hidden_into(&self, x: &[f64], h: &mut [f64]) {
        for (k, hk) in h.iter_mut().enumerate() {
            let a: f64 = self.w1.row(k).iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.b1[k];
            *hk = libm::tanh(a);
        }
    }

    fn forward_into(&self, x: &[f64], z: &mut [f64], h: &mut [f64]) {
        match &self.w2 {
            None => {
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk = self.w1.row(k).iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.b1[k];
                }
            }
            Some(w2) => {
                self.hidden_into(x, h);
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk = w2.row(k).iter().zip(h.iter()).map(|(w, hi)| w * hi).sum::<f64>() + self.b2[k];
                }
            }
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        check_dim("Encoder::forward", self.d_x, x.cols())?;
        let mut z = Matrix::zeros(x.rows(), self.d_z);
        let mut h = vec![0.0; self.d_hidden];
        for i in 0..x.rows() {
            self.forward_into(x.row(i), z.row_mut(i), &mut h);
        }
        Ok(z)
    }

    /// Exact `∂z/∂x` at `x`, shape `d_z × d_x`.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        check_dim("Encoder::input_jacobian", self.d_x, x.len())?;
        match &self.w2 {
            None => Ok(self.w1.clone()),
            Some(w2) => {
                let mut h = vec![0.0; self.d_hidden];
                self.hidden_into(x, &mut h);
                let scaled = Matrix::from_fn(self.d_hidden, self.d_x, |k, j| (1.0 - h[k] * h[k]) * self.w1[(k, j)]);
                w2.matmul(&scaled)
            }
        }
    }

    /// Accumulates `∂L/∂φ` into `grad` given `dz = ∂L/∂Z` for the batch `x`.
    pub fn backward_into(&self, x: &Matrix, dz: &Matrix, grad: &mut [f64]) -> Result<()> {
        check_dim("Encoder::backward input", self.d_x, x.cols())?;
        check_dim("Encoder::backward rows", x.rows(), dz.rows())?;
        check_dim("Encoder::backward codes", self.d_z, dz.cols())?;
        check_dim("Encoder::backward grad", self.param_count(), grad.len())?;
        let (d_x, d_h, d_z) = (self.d_x, self.d_hidden, self.d_z);
        match &self.w2 {
            None => {
                let (gw1, rest) = grad.split_at_mut(d_z * d_x);
                let gb1 = &mut rest[..d_z];
                for i in 0..x.rows() {
                    let (xi, di) = (x.row(i), dz.row(i));
                    for k in 0..d_z {
                        let g = di[k];
                        if g == 0.0 {
                            continue;
                        }
                        gb1[k] += g;
                        for (w, xv) in gw1[k * d_x..(k + 1) * d_x].iter_mut().zip(xi) {
                            *w += g * xv;
                        }
                    }
                }
            }
            Some(w2) => {
                let (gw1, rest) = grad.split_at_mut(d_h * d_x);
                let (gb1, rest) = rest.split_at_mut(d_h);
                let (gw2, gb2) = rest.split_at_mut(d_z * d_h);
                let mut h = vec![0.0; d_h];
                let mut da = vec![0.0; d_h];
                for i in 0..x.rows() {
                    let (xi, di) = (x.row(i), dz.row(i));
                    self.hidden_into(xi, &mut h);
                    da.iter_mut().for_each(|v| *v = 0.0);
                    for k in 0..d_z {
                        let g = di[k];
                        if g == 0.0 {
                            continue;
                        }
                        gb2[k] += g;
                        let w2k = w2.row(k);
                        for m in 0..d_h {
                            gw2[k * d_h + m] += g * h[m];
                            da[m] += g * w2k[m];
                        }
                    }
                    for m in 0..d_h {
                        let a = da[m] * (1.0 - h[m] * h[m]);
                        if a == 0.0 {
                            continue;
                        }
                        gb1[m] += a;
                        for (w, xv) in gw1[m * d_x..(m + 1) * d_x].iter_mut().zip(xi) {
                            *w += a * xv;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl Representation for Encoder {
    fn input_dim(&self) -> usize {
        self.d_x
    }

    fn code_dim(&self) -> usize {
        self.d_z
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        let mut h = vec![0.0; self.d_hidden];
        self.forward_into(x, out, &mut h);
    }

    fn encode_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x)
    }

    fn param_snapshot(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.params().iter().map(|v| v.to_bits()).collect();
        s.push(self.revision);
        s
    }
}

/// Selects a subset of input coordinates, e.g. `Z = U` in the two-bit world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    d_x: usize,
    coords: Vec<usize>,
}

impl Projection {
    pub fn new(d_x: usize, coords: Vec<usize>) -> Result<Self> {
        if coords.iter().any(|&c| c >= d_x) {
            return Err(contract("projection coordinate out of range"));
        }
        Ok(Self { d_x, coords })
    }
}

impl Representation for Projection {
    fn input_dim(&self) -> usize {
        self.d_x
    }

    fn code_dim(&self) -> usize {
        self.coords.len()
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, &c) in out.iter_mut().zip(&self.coords) {
            *o = x[c];
        }
    }

    fn param_snapshot(&self) -> Vec<u64> {
        self.coords.iter().map(|&c| c as u64).collect()
    }
}

/// Wraps a plain function as a [`Representation`].
pub struct FnRepresentation<F> {
    d_x: usize,
    d_z: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnRepresentation<F> {
    pub fn new(d_x: usize, d_z: usize, f: F) -> Self {
        Self { d_x, d_z, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> Representation for FnRepresentation<F> {
    fn input_dim(&self) -> usize {
        self.d_x
    }

    fn code_dim(&self) -> usize {
        self.d_z
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

fn ensure_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(contract("non-finite parameter"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradient::finite_diff;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        libm::sqrt(num) / libm::sqrt(den).max(1e-12)
    }

    #[test]
    fn linear_identity_and_constant() {
        let x = Matrix::from_rows(&[[0.3, -0.7]]).unwrap();
        assert_eq!(Encoder::identity(2).forward(&x).unwrap().as_slice(), &[0.3, -0.7]);
        let c = Encoder::constant(2, &[1.0, 1.0]);
        assert_eq!(c.forward(&x).unwrap().as_slice(), &[1.0, 1.0]);
        assert_eq!(c.input_jacobian(&[0.3, -0.7]).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn zero_mlp_outputs_bias() {
        let enc = Encoder::mlp1(Matrix::zeros(3, 2), vec![0.0; 3], Matrix::zeros(2, 3), vec![0.5, -2.0]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [-4.0, 0.1]]).unwrap();
        let z = enc.forward(&x).unwrap();
        assert_eq!(z.row(0), &[0.5, -2.0]);
        assert_eq!(z.row(1), &[0.5, -2.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let enc = Encoder::identity(2);
        assert!(enc.forward(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn linear_jacobian_is_w1() {
        let mut rng = Rng::new(1);
        let enc = Encoder::random(Arch::Linear, 3, 0, 2, 1.0, &mut rng);
        assert_eq!(&enc.input_jacobian(&[1.0, -1.0, 0.2]).unwrap(), enc.w1());
    }

    #[test]
    fn mlp_jacobian_matches_finite_differences() {
        let mut rng = Rng::new(9);
        for _ in 0..20 {
            let enc = Encoder::random(Arch::Mlp1, 3, 5, 2, 1.5, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let jac = enc.input_jacobian(&x).unwrap();
            for k in 0..2 {
                let fd = finite_diff(|p: &[f64]| enc.encode(p)[k], &x, 1e-5);
                let row = jac.row(k);
                assert!(rel_err(row, &fd) <= 1e-6, "row {k}: {row:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn params_round_trip_and_revision() {
        let mut rng = Rng::new(3);
        let mut enc = Encoder::random(Arch::Mlp1, 2, 4, 3, 1.0, &mut rng);
        let p = enc.params();
        let rebuilt = Encoder::from_params(Arch::Mlp1, 2, 4, 3, &p).unwrap();
        assert_eq!(rebuilt.params(), p);
        assert_eq!(rebuilt.revision(), 0);
        enc.set_params(&p).unwrap();
        assert_eq!(enc.revision(), 1);
        assert!(enc.set_params(&p[1..]).is_err());
    }

    #[test]
    fn forward_is_bitwise_pure() {
        let mut rng = Rng::new(5);
        let enc = Encoder::random(Arch::Mlp1, 2, 8, 3, 1.0, &mut rng);
        let x = Matrix::from_fn(16, 2, |_, _| rng.normal());
        let a = enc.forward(&x).unwrap();
        let b = enc.forward(&x).unwrap();
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
