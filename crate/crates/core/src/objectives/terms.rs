//! Loss terms evaluated on code matrices, each returning its value and the
//! exact gradient with respect to the codes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, contract, Result};
use crate::numerics::{CodeGrad, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Dot,
    Cosine,
}

impl Similarity {
    pub fn name(self) -> &'static str {
        match self {
            Similarity::Dot => "dot",
            Similarity::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dot" => Some(Similarity::Dot),
            "cosine" => Some(Similarity::Cosine),
            _ => None,
        }
    }
}

fn same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    check_dim("paired code rows", a.rows(), b.rows())?;
    check_dim("paired code cols", a.cols(), b.cols())
}

/// `mean_i ‖z_i − z⁺_i‖²`.
pub fn invariance(z: &Matrix, zp: &Matrix) -> Result<CodeGrad> {
    same_shape(z, zp)?;
    let n = z.rows().max(1) as f64;
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    let mut value = 0.0;
    for (o, (a, b)) in dz.as_mut_slice().iter_mut().zip(z.as_slice().iter().zip(zp.as_slice())) {
        let d = a - b;
        value += d * d;
        *o = 2.0 * d / n;
    }
    let dz_plus = dz.scaled(-1.0);
    Ok(CodeGrad {
        value: value / n,
        dz,
        dz_plus,
    })
}

/// `mean_i ‖z⁺_i − ρ(δ_i) z_i‖²` with one representation matrix per row.
pub fn equivariance(z: &Matrix, zp: &Matrix, rhos: &[Matrix]) -> Result<CodeGrad> {
    same_shape(z, zp)?;
    check_dim("equivariance rho count", z.rows(), rhos.len())?;
    let n = z.rows().max(1) as f64;
    let d = z.cols();
    let mut dz = Matrix::zeros(z.rows(), d);
    let mut dzp = Matrix::zeros(z.rows(), d);
    let mut value = 0.0;
    for (i, rho) in rhos.iter().enumerate() {
        check_dim("equivariance rho size", d, rho.rows())?;
        check_dim("equivariance rho size", d, rho.cols())?;
        let rz = rho.mul_vec(z.row(i))?;
        let r: Vec<f64> = zp.row(i).iter().zip(&rz).map(|(a, b)| a - b).collect();
        for v in &r {
            value += v * v;
        }
        for (o, rv) in dzp.row_mut(i).iter_mut().zip(&r) {
            *o = 2.0 * rv / n;
        }
        // dz = -2 ρᵀ r / n
        let out = dz.row_mut(i);
        for (a, &ra) in r.iter().enumerate() {
            for (b, o) in out.iter_mut().enumerate() {
                *o -= 2.0 * rho[(a, b)] * ra / n;
            }
        }
    }
    Ok(CodeGrad {
        value: value / n,
        dz,
        dz_plus: dzp,
    })
}

/// InfoNCE on a logit matrix `S` (row `i` = anchor `i`, column `j` =
/// candidate `j`, positives on the diagonal). Returns the loss and `∂L/∂S`.
///
/// The symmetric variant averages the anchor→candidate direction (row
/// softmax) and the candidate→anchor direction (column softmax).
pub fn infonce_logits(s: &Matrix, symmetric: bool) -> Result<(f64, Matrix)> {
    check_dim("infonce logits square", s.rows(), s.cols())?;
    let n = s.rows();
    if n < 2 {
        return Err(contract("InfoNCE needs a batch of at least two rows"));
    }
    let nf = n as f64;
    let mut g = Matrix::zeros(n, n);
    let mut forward = 0.0;
    let mut p = vec![0.0; n];
    for i in 0..n {
        let row = s.row(i);
        let lse = softmax_into(row, &mut p);
        forward += lse - row[i];
        for (j, (o, pj)) in g.row_mut(i).iter_mut().zip(&p).enumerate() {
            *o = (pj - if i == j { 1.0 } else { 0.0 }) / nf;
        }
    }
    forward /= nf;
    if !symmetric {
        return Ok((forward, g));
    }
    let st = s.transpose();
    let mut backward = 0.0;
    for i in 0..n {
        let col = st.row(i);
        let lse = softmax_into(col, &mut p);
        backward += lse - col[i];
        for (j, pj) in p.iter().enumerate() {
            let gb = (pj - if i == j { 1.0 } else { 0.0 }) / nf;
            g[(j, i)] = 0.5 * (g[(j, i)] + gb);
        }
    }
    backward /= nf;
    Ok((0.5 * (forward + backward), g))
}

/// Writes `softmax(v)` into `out` and returns `log Σ exp v`.
fn softmax_into(v: &[f64], out: &mut [f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, x) in out.iter_mut().zip(v) {
        *o = libm::exp(x - m);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    m + libm::log(sum)
}

const NORM_FLOOR: f64 = 1e-12;

fn normalized_rows(z: &Matrix) -> (Matrix, Vec<f64>) {
    let norms: Vec<f64> = z
        .iter_rows()
        .map(|r| crate::numerics::norm(r).max(NORM_FLOOR))
        .collect();
    let zn = Matrix::from_fn(z.rows(), z.cols(), |i, j| z[(i, j)] / norms[i]);
    (zn, norms)
}

/// Back through `ẑ = z / ‖z‖`.
fn unnormalize_grad(zn: &Matrix, norms: &[f64], dzn: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(zn.rows(), zn.cols());
    for (i, &nrm) in norms.iter().enumerate() {
        let u = zn.row(i);
        let g = dzn.row(i);
        let proj: f64 = u.iter().zip(g).map(|(a, b)| a * b).sum();
        for (o, (gv, uv)) in out.row_mut(i).iter_mut().zip(g.iter().zip(u)) {
            *o = (gv - uv * proj) / nrm;
        }
    }
    out
}

/// In-batch InfoNCE between `z` and `z⁺`: for anchor `i` the positive is
/// `z⁺_i` and the negatives are `z⁺_j`, `j ≠ i`.
pub fn infonce(z: &Matrix, zp: &Matrix, tau: f64, sim: Similarity, symmetric: bool) -> Result<CodeGrad> {
    same_shape(z, zp)?;
    if !(tau > 0.0) {
        return Err(contract("temperature must be positive"));
    }
    let (a, b, norms) = match sim {
        Similarity::Dot => (z.clone(), zp.clone(), None),
        Similarity::Cosine => {
            let (a, na) = normalized_rows(z);
            let (b, nb) = normalized_rows(zp);
            (a, b, Some((na, nb)))
        }
    };
    let s = a.matmul(&b.transpose())?.scaled(1.0 / tau);
    let (value, gs) = infonce_logits(&s, symmetric)?;
    let da = gs.matmul(&b)?.scaled(1.0 / tau);
    let db = gs.transpose().matmul(&a)?.scaled(1.0 / tau);
    let (dz, dz_plus) = match norms {
        None => (da, db),
        Some((na, nb)) => (unnormalize_grad(&a, &na, &da), unnormalize_grad(&b, &nb, &db)),
    };
    Ok(CodeGrad { value, dz, dz_plus })
}

/// `Σ_d max(0, γ − Var(Z_d))` with unbiased variance, and its gradient.
///
/// At the kink `Var(Z_d) = γ` the hinge is treated as inactive (zero
/// subgradient).
pub fn variance_floor(z: &Matrix, gamma: f64) -> Result<(f64, Matrix)> {
    let n = z.rows();
    if n < 2 {
        return Err(contract("variance floor needs at least two rows"));
    }
    let mu = z.column_means();
    let denom = (n - 1) as f64;
    let mut dz = Matrix::zeros(n, z.cols());
    let mut value = 0.0;
    for j in 0..z.cols() {
        let var = (0..n)
            .map(|i| {
                let c = z[(i, j)] - mu[j];
                c * c
            })
            .sum::<f64>()
            / denom;
        let short = gamma - var;
        if short > 0.0 {
            value += short;
            for i in 0..n {
                dz[(i, j)] = -2.0 * (z[(i, j)] - mu[j]) / denom;
            }
        }
    }
    Ok((value, dz))
}

/// Per-dimension unbiased variances.
pub fn per_dim_variance(z: &Matrix) -> Result<Vec<f64>> {
    let cov = z.covariance()?;
    Ok((0..z.cols()).map(|j| cov[(j, j)]).collect())
}

/// `Σ_{i≠j} Cov(Z_i, Z_j)²` (both ordered pairs) and its gradient.
pub fn covariance_penalty(z: &Matrix) -> Result<(f64, Matrix)> {
    let n = z.rows();
    if n < 2 {
        return Err(contract("covariance penalty needs at least two rows"));
    }
    let cov = z.covariance()?;
    let d = z.cols();
    let mut value = 0.0;
    let mut off = Matrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            if a != b {
                value += cov[(a, b)] * cov[(a, b)];
                off[(a, b)] = cov[(a, b)];
            }
        }
    }
    // ∂/∂Z = 4 Zc C_off / (n − 1); column sums of Zc vanish so centring adds nothing
    let zc = z.centered();
    let dz = zc.matmul(&off)?.scaled(4.0 / (n - 1) as f64);
    Ok((value, dz))
}

pub(crate) fn mean_pair(a: (f64, Matrix), b: (f64, Matrix)) -> CodeGrad {
    CodeGrad {
        value: 0.5 * (a.0 + b.0),
        dz: a.1.scaled(0.5),
        dz_plus: b.1.scaled(0.5),
    }
}
