use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::numerics::{sq_dist, Representation, Rng};
use crate::worlds::{sample_inputs, World};

/// `D(α)` sampled on a grid, with its trapezoidal area.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub auc: f64,
}

impl Curve {
    pub fn new(alphas: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if alphas.len() != values.len() || alphas.is_empty() {
            return Err(contract("curve needs one value per grid point"));
        }
        if alphas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(contract("curve grid must be strictly increasing"));
        }
        let auc = trapezoid(&alphas, &values);
        Ok(Self { alphas, values, auc })
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1]))
        .sum()
}

/// `points` evenly spaced magnitudes on `[0, π]`.
pub fn default_grid(points: usize) -> Vec<f64> {
    let m = points.max(2) - 1;
    (0..=m).map(|k| core::f64::consts::PI * k as f64 / m as f64).collect()
}

/// Monte Carlo `D(α) = E‖f(x) − f(τ_α x)‖²` using the same `n` inputs at
/// every grid point.
pub fn invariance_curve(
    rep: &dyn Representation,
    world: &World,
    grid: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Result<Curve> {
    if !grid.contains(&0.0) {
        return Err(contract("invariance grid must include 0"));
    }
    let x = sample_inputs(world, n, rng)?;
    let z = rep.encode_batch(&x)?;
    let family = world.transforms();
    let mut values = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let mut acc = 0.0;
        for (i, row) in x.iter_rows().enumerate() {
            let moved = family.apply_magnitude(alpha, row)?;
            acc += sq_dist(z.row(i), &rep.encode(&moved));
        }
        values.push(acc / n as f64);
    }
    Curve::new(grid.to_vec(), values)
}
