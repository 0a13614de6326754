use alloc::vec::Vec;

use crate::error::{check_dim, contract, Error, Result};
use crate::numerics::{norm, sq_dist, Encoder, Matrix, Representation, Rng};
use crate::objectives::terms;
use crate::worlds::{sample_inputs, World};

/// `E‖∂f/∂x‖_F²` over `n` world inputs.
pub fn smoothness(enc: &Encoder, world: &World, n: usize, rng: &mut Rng) -> Result<f64> {
    let x = sample_inputs(world, n, rng)?;
    let mut acc = 0.0;
    for row in x.iter_rows() {
        acc += enc.input_jacobian(row)?.frobenius_sq();
    }
    Ok(acc / n as f64)
}

/// Step of the central difference in the group parameter.
pub const FISHER_STEP: f64 = 1e-4;

/// `E‖∂f(T_δ x)/∂δ |_{δ=0}‖²` by central differences in `δ`.
pub fn fisher_trace(rep: &dyn Representation, world: &World, n: usize, rng: &mut Rng) -> Result<f64> {
    let family = world.transforms();
    if !family.is_smooth() {
        return Err(Error::NotApplicable(alloc::format!(
            "Fisher trace needs a smooth transform family, {} is discrete",
            family.name()
        )));
    }
    let x = sample_inputs(world, n, rng)?;
    let h = FISHER_STEP;
    let mut acc = 0.0;
    for row in x.iter_rows() {
        let up = rep.encode(&family.apply_magnitude(h, row)?);
        let down = rep.encode(&family.apply_magnitude(-h, row)?);
        acc += sq_dist(&up, &down) / (4.0 * h * h);
    }
    Ok(acc / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryDiagnostics {
    /// `Σ_d max(0, γ − Var(Z_d))`.
    pub var_floor_violation: f64,
    /// `Σ_{i≠j} Cov(Z_i, Z_j)²`.
    pub cov_offdiag: f64,
    pub per_dim_variance: Vec<f64>,
}

pub fn geometry_diagnostics(z: &Matrix, gamma: f64) -> Result<GeometryDiagnostics> {
    Ok(GeometryDiagnostics {
        var_floor_violation: terms::variance_floor(z, gamma)?.0,
        cov_offdiag: terms::covariance_penalty(z)?.0,
        per_dim_variance: terms::per_dim_variance(z)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Separability {
    /// `‖μ_a − μ_b‖² / (tr Σ_a + tr Σ_b)`, `+∞` with zero within-scatter.
    pub fisher_ratio: f64,
    /// The same ratio computed on `‖z‖` alone.
    pub radial_fisher: f64,
    /// Unbiased RBF-kernel MMD².
    pub mmd2: f64,
    /// Kernel bandwidth from the median heuristic.
    pub bandwidth: f64,
}

fn fisher_ratio(a: &Matrix, b: &Matrix) -> Result<f64> {
    let (ma, mb) = (a.column_means(), b.column_means());
    let num = sq_dist(&ma, &mb);
    let trace = |m: &Matrix| -> Result<f64> {
        let c = m.covariance()?;
        Ok((0..m.cols()).map(|j| c[(j, j)]).sum())
    };
    let den = trace(a)? + trace(b)?;
    Ok(if den > 0.0 { num / den } else { f64::INFINITY })
}

fn norms(m: &Matrix) -> Result<Matrix> {
    Matrix::column_vector(&m.iter_rows().map(norm).collect::<Vec<_>>())
}

/// Rows used for the median heuristic are capped at this many per group.
const BANDWIDTH_SUBSAMPLE: usize = 500;

/// Median pairwise distance over the pooled samples (1 if all coincide).
pub fn median_bandwidth(a: &Matrix, b: &Matrix) -> f64 {
    let pick = |m: &Matrix| -> Vec<Vec<f64>> {
        let stride = (m.rows() / BANDWIDTH_SUBSAMPLE).max(1);
        m.iter_rows().step_by(stride).map(|r| r.to_vec()).collect()
    };
    let mut pts = pick(a);
    pts.extend(pick(b));
    let mut d = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let v = libm::sqrt(sq_dist(&pts[i], &pts[j]));
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Unbiased MMD² with an RBF kernel of bandwidth `sigma`.
pub fn mmd2_unbiased(a: &Matrix, b: &Matrix, sigma: f64) -> Result<f64> {
    check_dim("mmd2 dims", a.cols(), b.cols())?;
    let (m, n) = (a.rows(), b.rows());
    if m < 2 || n < 2 {
        return Err(contract("MMD² needs at least two rows per group"));
    }
    let g = 1.0 / (2.0 * sigma * sigma);
    let k = |x: &[f64], y: &[f64]| libm::exp(-g * sq_dist(x, y));
    let within = |s: &Matrix| {
        let mut acc = 0.0;
        for i in 0..s.rows() {
            for j in i + 1..s.rows() {
                acc += k(s.row(i), s.row(j));
            }
        }
        2.0 * acc / (s.rows() * (s.rows() - 1)) as f64
    };
    let mut cross = 0.0;
    for i in 0..m {
        for j in 0..n {
            cross += k(a.row(i), b.row(j));
        }
    }
    Ok(within(a) + within(b) - 2.0 * cross / (m * n) as f64)
}

pub fn separability(a: &Matrix, b: &Matrix) -> Result<Separability> {
    check_dim("separability dims", a.cols(), b.cols())?;
    if a.rows() < 20 || b.rows() < 20 {
        return Err(contract("separability needs at least 20 rows per group"));
    }
    let bandwidth = median_bandwidth(a, b);
    Ok(Separability {
        fisher_ratio: fisher_ratio(a, b)?,
        radial_fisher: fisher_ratio(&norms(a)?, &norms(b)?)?,
        mmd2: mmd2_unbiased(a, b, bandwidth)?,
        bandwidth,
    })
}
