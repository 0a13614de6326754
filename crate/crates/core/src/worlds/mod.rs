//! Synthetic worlds with known group structure.
//!
//! Each [`World`] bundles an input sampler, a [`TransformFamily`], an orbit
//! map `π`, a discrete nuisance, generative factors and a label. Labels are
//! only reachable through [`sample_batch`] and [`sample_labeled`]; the
//! perception trainer uses [`sample_views`], which never produces them.

mod transforms;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use transforms::{AngleSampler, TransformFamily, TransformKind};

use crate::error::{contract, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub enum WorldKind {
    /// `x = r (cos θ, sin θ)` with `r ~ U[lo, hi]`, `θ ~ U[0, 2π)`.
    Rotation { radius_lo: f64, radius_hi: f64 },
    /// `x = (u, v)` with independent fair bits, label `y = v`.
    BernoulliUv,
    /// Two isotropic Gaussian clusters at `±center`; class 0 at `+center`.
    SixNine { center: [f64; 2], sigma: f64 },
}

/// One draw from a world: input, label and generative factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub x: Vec<f64>,
    pub y: usize,
    pub factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    name: String,
    kind: WorldKind,
    transforms: TransformFamily,
    label_invariant: bool,
}

/// Planar rotation world. The orbit statistic is the radius, the nuisance
/// is the polar angle, and the label `1[r > median]` is rotation invariant.
pub fn make_rotation_world(radius_lo: f64, radius_hi: f64, sampler: AngleSampler) -> Result<World> {
    if !(radius_lo > 0.0 && radius_hi >= radius_lo && radius_hi.is_finite()) {
        return Err(contract("rotation world needs 0 < radius_lo <= radius_hi"));
    }
    Ok(World {
        name: "rotation".into(),
        kind: WorldKind::Rotation { radius_lo, radius_hi },
        transforms: TransformFamily::Rotation2d { sampler },
        label_invariant: true,
    })
}

/// `X = (U, V)`, `Y = V`, `G = {id, τ}` with `τ(u, v) = (u, 1 − v)`.
pub fn make_bernoulli_uv_world() -> World {
    World {
        name: "bernoulli_uv".into(),
        kind: WorldKind::BernoulliUv,
        transforms: TransformFamily::FlipV { coord: 1 },
        label_invariant: false,
    }
}

/// Antipodal clusters exchanged by the half-turn, so the label is not
/// invariant under the group.
pub fn make_six_nine_world(center: [f64; 2], sigma: f64) -> Result<World> {
    if !(sigma > 0.0) || center == [0.0, 0.0] {
        return Err(contract("six_nine world needs sigma > 0 and a non-zero center"));
    }
    Ok(World {
        name: "six_nine".into(),
        kind: WorldKind::SixNine { center, sigma },
        transforms: TransformFamily::HalfTurn,
        label_invariant: false,
    })
}

impl World {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &WorldKind {
        &self.kind
    }

    pub fn d_x(&self) -> usize {
        2
    }

    pub fn classes(&self) -> usize {
        2
    }

    pub fn transforms(&self) -> &TransformFamily {
        &self.transforms
    }

    /// Same world with a different transform sampler (rotation world only;
    /// other worlds are returned unchanged).
    pub fn with_angle_sampler(&self, sampler: AngleSampler) -> World {
        let mut w = self.clone();
        if let TransformFamily::Rotation2d { .. } = w.transforms {
            w.transforms = TransformFamily::Rotation2d { sampler };
        }
        w
    }

    /// Replaces the transform family. Used to build identity-only controls.
    pub fn with_transforms(&self, transforms: TransformFamily) -> World {
        let mut w = self.clone();
        w.transforms = transforms;
        w
    }

    /// Whether `P(Y | X)` is declared invariant under the group (A1).
    pub fn label_invariant(&self) -> bool {
        self.label_invariant
    }

    pub fn draw(&self, rng: &mut Rng) -> Draw {
        match &self.kind {
            WorldKind::Rotation { radius_lo, radius_hi } => {
                let r = rng.uniform_in(*radius_lo, *radius_hi);
                let theta = rng.uniform_in(0.0, 2.0 * PI);
                let x = vec![r * libm::cos(theta), r * libm::sin(theta)];
                let y = usize::from(r > self.radius_median());
                Draw {
                    x,
                    y,
                    factors: vec![r, theta],
                }
            }
            WorldKind::BernoulliUv => {
                let u = rng.below(2) as f64;
                let v = rng.below(2) as f64;
                Draw {
                    x: vec![u, v],
                    y: v as usize,
                    factors: vec![u, v],
                }
            }
            WorldKind::SixNine { center, sigma } => {
                let y = rng.below(2);
                let sign = if y == 0 { 1.0 } else { -1.0 };
                let x = vec![
                    sign * center[0] + sigma * rng.normal(),
                    sign * center[1] + sigma * rng.normal(),
                ];
                Draw {
                    x,
                    y,
                    factors: vec![y as f64],
                }
            }
        }
    }

    pub fn radius_median(&self) -> f64 {
        match &self.kind {
            WorldKind::Rotation { radius_lo, radius_hi } => 0.5 * (radius_lo + radius_hi),
            _ => f64::NAN,
        }
    }

    /// The orbit map `π`: radius for rotations, `u` for the two-bit world,
    /// the lexicographically larger of `{x, −x}` for the half-turn world.
    pub fn orbit(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            WorldKind::Rotation { .. } => vec![libm::hypot(x[0], x[1])],
            WorldKind::BernoulliUv => vec![x[0]],
            WorldKind::SixNine { .. } => {
                let neg = [-x[0], -x[1]];
                let larger = x[0] > neg[0] || (x[0] == neg[0] && x[1] >= neg[1]);
                if larger {
                    x.to_vec()
                } else {
                    neg.to_vec()
                }
            }
        }
    }

    pub fn orbit_dim(&self) -> usize {
        match &self.kind {
            WorldKind::SixNine { .. } => 2,
            _ => 1,
        }
    }

    /// Whether orbit identities are discrete (compare exactly) or continuous.
    pub fn orbit_is_discrete(&self) -> bool {
        matches!(self.kind, WorldKind::BernoulliUv)
    }

    /// Discrete nuisance attached to an input: the angular quadrant for the
    /// rotation world, the bit `v` for the two-bit world, and for the
    /// half-turn world whether `x` is the negated orbit representative.
    pub fn nuisance_class(&self, x: &[f64]) -> usize {
        match &self.kind {
            WorldKind::Rotation { .. } => {
                let mut a = libm::atan2(x[1], x[0]);
                if a < 0.0 {
                    a += 2.0 * PI;
                }
                ((a / (0.5 * PI)) as usize).min(3)
            }
            WorldKind::BernoulliUv => x[1] as usize,
            WorldKind::SixNine { .. } => usize::from(self.orbit(x).as_slice() != x),
        }
    }

    pub fn nuisance_classes(&self) -> usize {
        match &self.kind {
            WorldKind::Rotation { .. } => 4,
            _ => 2,
        }
    }

    /// The label as a function of the input: exact for the rotation and
    /// two-bit worlds, the Bayes-optimal label for the Gaussian clusters.
    pub fn label_of(&self, x: &[f64]) -> usize {
        match &self.kind {
            WorldKind::Rotation { .. } => usize::from(libm::hypot(x[0], x[1]) > self.radius_median()),
            WorldKind::BernoulliUv => x[1] as usize,
            WorldKind::SixNine { center, .. } => usize::from(x[0] * center[0] + x[1] * center[1] < 0.0),
        }
    }

    /// `P(Y = · | X = x)`.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            WorldKind::SixNine { center, sigma } => {
                // log p1/p0 = -2 c·x / σ²
                let lr = -2.0 * (x[0] * center[0] + x[1] * center[1]) / (sigma * sigma);
                let p1 = 1.0 / (1.0 + libm::exp(-lr));
                vec![1.0 - p1, p1]
            }
            _ => {
                let mut p = vec![0.0; 2];
                p[self.label_of(x)] = 1.0;
                p
            }
        }
    }

    /// Exact support of `P_X` with probabilities, for enumerable worlds.
    pub fn support(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        match &self.kind {
            WorldKind::BernoulliUv => Some(
                [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
                    .iter()
                    .map(|x| (x.to_vec(), 0.25))
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Paired views `x` and `x⁺ = T_δ x`, row aligned. Carries no labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBatch {
    pub x: Matrix,
    pub x_plus: Matrix,
    pub deltas: Vec<f64>,
}

impl ViewBatch {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

/// Full batch: views plus nuisance, orbit statistics, labels and factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub views: ViewBatch,
    pub v: Vec<usize>,
    pub t: Matrix,
    pub y: Vec<usize>,
    pub factors: Matrix,
}

fn draw_views(world: &World, n: usize, rng: &mut Rng) -> Result<(Vec<Draw>, ViewBatch)> {
    if n == 0 {
        return Err(contract("batch size must be at least 1"));
    }
    let d = world.d_x();
    let mut draws = Vec::with_capacity(n);
    let mut x = Matrix::zeros(n, d);
    let mut xp = Matrix::zeros(n, d);
    let mut deltas = Vec::with_capacity(n);
    for i in 0..n {
        let draw = world.draw(rng);
        let delta = world.transforms.sample_delta(rng);
        x.row_mut(i).copy_from_slice(&draw.x);
        world.transforms.apply_into(delta, &draw.x, xp.row_mut(i));
        deltas.push(delta);
        draws.push(draw);
    }
    Ok((draws, ViewBatch { x, x_plus: xp, deltas }))
}

/// Label-free paired views for perception training.
pub fn sample_views(world: &World, n: usize, rng: &mut Rng) -> Result<ViewBatch> {
    draw_views(world, n, rng).map(|(_, v)| v)
}

/// Full i.i.d. batch with `δ ~ μ_G` per row. Uses the same random stream
/// as [`sample_views`], so both agree on `x`, `x⁺` and `δ` for equal seeds.
pub fn sample_batch(world: &World, n: usize, rng: &mut Rng) -> Result<Batch> {
    let (draws, views) = draw_views(world, n, rng)?;
    let v = views.x.iter_rows().map(|r| world.nuisance_class(r)).collect();
    let t = Matrix::from_rows(&views.x.iter_rows().map(|r| world.orbit(r)).collect::<Vec<_>>())?;
    let y = draws.iter().map(|d| d.y).collect();
    let factors = Matrix::from_rows(&draws.iter().map(|d| d.factors.clone()).collect::<Vec<_>>())?;
    Ok(Batch {
        views,
        v,
        t,
        y,
        factors,
    })
}

/// Inputs and labels only, for decision heads and probes.
pub fn sample_labeled(world: &World, n: usize, rng: &mut Rng) -> Result<(Matrix, Vec<usize>)> {
    if n == 0 {
        return Err(contract("sample size must be at least 1"));
    }
    let mut x = Matrix::zeros(n, world.d_x());
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let d = world.draw(rng);
        x.row_mut(i).copy_from_slice(&d.x);
        y.push(d.y);
    }
    Ok((x, y))
}

/// Inputs only.
pub fn sample_inputs(world: &World, n: usize, rng: &mut Rng) -> Result<Matrix> {
    sample_labeled(world, n, rng).map(|(x, _)| x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot() -> World {
        make_rotation_world(0.5, 1.5, AngleSampler::Uniform).unwrap()
    }

    #[test]
    fn rotation_orbit_and_half_turn() {
        let w = rot();
        assert_eq!(w.orbit(&[0.0, 1.0]), vec![1.0]);
        let y = w.transforms().apply(PI, &[1.0, 0.0]);
        assert!((y[0] + 1.0).abs() < 1e-15 && y[1].abs() < 1e-15);
    }

    #[test]
    fn rotation_label_is_invariant() {
        let w = rot();
        let mut rng = Rng::new(1);
        let b = sample_batch(&w, 10_000, &mut rng).unwrap();
        let violations = (0..b.views.len())
            .filter(|&i| w.label_of(b.views.x.row(i)) != w.label_of(b.views.x_plus.row(i)))
            .count();
        assert_eq!(violations, 0);
    }

    #[test]
    fn orbit_map_is_constant_on_orbits() {
        let mut rng = Rng::new(2);
        let worlds = [
            rot(),
            make_bernoulli_uv_world(),
            make_six_nine_world([3.0, 0.0], 0.5).unwrap(),
        ];
        for w in &worlds {
            let b = sample_batch(w, 1000, &mut rng).unwrap();
            for i in 0..1000 {
                let a = w.orbit(b.views.x.row(i));
                let c = w.orbit(b.views.x_plus.row(i));
                if w.orbit_is_discrete() || matches!(w.kind(), WorldKind::SixNine { .. }) {
                    assert_eq!(a, c);
                } else {
                    assert!((a[0] - c[0]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn bernoulli_world_facts() {
        let w = make_bernoulli_uv_world();
        assert_eq!(w.transforms().apply(1.0, &[0.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(w.orbit(&[1.0, 0.0]), w.orbit(&[1.0, 1.0]));
        assert!(!w.label_invariant());
        // P(Y=1 | U=u) from the exact support
        let s = w.support().unwrap();
        for u in [0.0, 1.0] {
            let pu: f64 = s.iter().filter(|(x, _)| x[0] == u).map(|(_, p)| p).sum();
            let py: f64 = s
                .iter()
                .filter(|(x, _)| x[0] == u && w.label_of(x) == 1)
                .map(|(_, p)| p)
                .sum();
            assert_eq!(py / pu, 0.5);
        }
        let mut rng = Rng::new(3);
        let b = sample_batch(&w, 10_000, &mut rng).unwrap();
        let pu = b.views.x.column(0).iter().sum::<f64>() / 10_000.0;
        assert!((0.48..=0.52).contains(&pu), "{pu}");
        // a violating pair exists among 1000 samples
        assert!((0..1000).any(|i| w.label_of(b.views.x.row(i)) != w.label_of(b.views.x_plus.row(i))));
    }

    #[test]
    fn six_nine_half_turn_swaps_clusters() {
        let w = make_six_nine_world([3.0, 0.0], 0.5).unwrap();
        assert!(!w.label_invariant());
        assert_eq!(w.orbit(&[0.4, -2.0]), w.orbit(&[-0.4, 2.0]));
        let mut rng = Rng::new(4);
        let mut hits = 0;
        let n = 10_000;
        for _ in 0..n {
            let d = loop {
                let d = w.draw(&mut rng);
                if d.y == 0 {
                    break d;
                }
            };
            let y = w.transforms().apply(1.0, &d.x);
            // within 3σ of -c on every coordinate: mass 0.9973² ≈ 0.9946
            if (y[0] + 3.0).abs() <= 1.5 && y[1].abs() <= 1.5 {
                hits += 1;
            }
        }
        assert!(hits as f64 / n as f64 >= 0.99, "{hits}");
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_empty() {
        let w = rot();
        let a = sample_batch(&w, 64, &mut Rng::new(9)).unwrap();
        let b = sample_batch(&w, 64, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let v = sample_views(&w, 64, &mut Rng::new(9)).unwrap();
        assert_eq!(v, a.views);
        assert!(sample_batch(&w, 0, &mut Rng::new(9)).is_err());
    }
}
