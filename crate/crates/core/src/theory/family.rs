use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::numerics::{Matrix, Representation, Rng};
use crate::worlds::{sample_views, World, WorldKind};

/// Two sampled orbit values closer than this in code space count as merged.
pub const MERGE_CODE_TOL: f64 = 1e-9;
/// Orbit values at least this far apart are considered distinct.
pub const DISTINCT_ORBIT_TOL: f64 = 1e-3;

/// A parametric encoder family `ψ ↦ f_ψ` used to probe the Bayes risk
/// along perception updates.
pub trait ProbeFamily {
    fn name(&self) -> &'static str;
    fn world(&self) -> &World;
    fn psi0(&self) -> Vec<f64>;
    fn code_dim(&self) -> usize;
    fn encode(&self, psi: &[f64], x: &[f64], out: &mut [f64]);

    /// Paired views on which `L_inv` is measured.
    fn views(&self, n: usize, rng: &mut Rng) -> Result<crate::worlds::ViewBatch> {
        sample_views(self.world(), n, rng)
    }

    /// `L_inv(ψ)` on `views` and its exact gradient in `ψ`.
    fn invariance(&self, psi: &[f64], views: &crate::worlds::ViewBatch) -> (f64, Vec<f64>);

    /// Probe direction at `ψ` (not normalised). Defaults to the descent
    /// direction `−∇L_inv`.
    fn direction(&self, _psi: &[f64], g_inv: &[f64]) -> Vec<f64> {
        g_inv.iter().map(|g| -g).collect()
    }

    /// Number of sampled input pairs whose orbit values are distinct but
    /// whose codes coincide.
    fn witness_violations(&self, psi: &[f64], x: &Matrix) -> usize {
        let world = self.world();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = x
            .iter_rows()
            .map(|r| {
                let mut z = vec![0.0; self.code_dim()];
                self.encode(psi, r, &mut z);
                (world.orbit(r), z)
            })
            .collect();
        let mut bad = 0;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let dt = crate::numerics::sq_dist(&rows[i].0, &rows[j].0);
                let dz = crate::numerics::sq_dist(&rows[i].1, &rows[j].1);
                if dt >= DISTINCT_ORBIT_TOL * DISTINCT_ORBIT_TOL && dz <= MERGE_CODE_TOL * MERGE_CODE_TOL {
                    bad += 1;
                }
            }
        }
        bad
    }
}

/// `f_ψ` at a fixed `ψ`, usable wherever a [`Representation`] is expected.
pub struct AtParams<'a, F: ?Sized> {
    pub family: &'a F,
    pub psi: Vec<f64>,
}

impl<F: ProbeFamily + ?Sized> Representation for AtParams<'_, F> {
    fn input_dim(&self) -> usize {
        self.family.world().d_x()
    }

    fn code_dim(&self) -> usize {
        self.family.code_dim()
    }

    fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        self.family.encode(&self.psi, x, out)
    }

    fn param_snapshot(&self) -> Vec<u64> {
        self.psi.iter().map(|v| v.to_bits()).collect()
    }
}

/// Counts adjacent pairs, in order of the scalar orbit value, whose codes
/// are not strictly increasing.
fn monotone_violations(world: &World, x: &Matrix, code: impl Fn(&[f64]) -> f64) -> usize {
    let mut pts: Vec<(f64, f64)> = x.iter_rows().map(|r| (world.orbit(r)[0], code(r))).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2)
        .filter(|w| w[1].0 - w[0].0 > 0.0 && !(w[1].1 > w[0].1))
        .count()
}

/// Views for the radial families: rotated copies whose radius is also
/// jittered multiplicatively, so that `L_inv` has a non-zero gradient
/// inside the factor-through-radius family.
fn jittered_views(world: &World, jitter: f64, n: usize, rng: &mut Rng) -> Result<crate::worlds::ViewBatch> {
    let mut v = sample_views(world, n, rng)?;
    for i in 0..v.x_plus.rows() {
        let s = 1.0 + jitter * rng.normal();
        for c in v.x_plus.row_mut(i) {
            *c *= s;
        }
    }
    Ok(v)
}

fn radius(x: &[f64]) -> f64 {
    libm::hypot(x[0], x[1])
}

/// Strictly increasing link of the radius,
/// `h_ψ(r) = ψ₀ + e^{ψ₁} r + Σ_k e^{ψ_{k+1}} tanh(4(r − c_k))`.
///
/// Every `ψ` gives an injective `h_ψ`, so the whole family factors through
/// the orbit statistic.
pub struct RadialLink {
    world: World,
    centers: Vec<f64>,
    pub jitter: f64,
}

impl RadialLink {
    pub fn new(world: World) -> Self {
        let (lo, hi) = match world.kind() {
            WorldKind::Rotation { radius_lo, radius_hi } => (*radius_lo, *radius_hi),
            _ => (0.0, 1.0),
        };
        let centers = (1..=3).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect();
        Self {
            world,
            centers,
            jitter: 0.05,
        }
    }

    /// `h_ψ(r)` and `∂h/∂ψ`.
    pub fn link(&self, psi: &[f64], r: f64) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; psi.len()];
        g[0] = 1.0;
        g[1] = libm::exp(psi[1]) * r;
        let mut h = psi[0] + g[1];
        for (k, c) in self.centers.iter().enumerate() {
            let term = libm::exp(psi[k + 2]) * libm::tanh(4.0 * (r - c));
            g[k + 2] = term;
            h += term;
        }
        (h, g)
    }
}

impl ProbeFamily for RadialLink {
    fn name(&self) -> &'static str {
        "radial_link"
    }

    fn world(&self) -> &World {
        &self.world
    }

    fn psi0(&self) -> Vec<f64> {
        let mut p = vec![0.0, 0.0];
        p.extend(self.centers.iter().map(|_| -1.0));
        p
    }

    fn code_dim(&self) -> usize {
        1
    }

    fn encode(&self, psi: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = self.link(psi, radius(x)).0;
    }

    fn views(&self, n: usize, rng: &mut Rng) -> Result<crate::worlds::ViewBatch> {
        jittered_views(&self.world, self.jitter, n, rng)
    }

    fn invariance(&self, psi: &[f64], views: &crate::worlds::ViewBatch) -> (f64, Vec<f64>) {
        let n = views.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; psi.len()];
        for (a, b) in views.x.iter_rows().zip(views.x_plus.iter_rows()) {
            let (ha, ga) = self.link(psi, radius(a));
            let (hb, gb) = self.link(psi, radius(b));
            let d = ha - hb;
            value += d * d / n;
            for (o, (p, q)) in grad.iter_mut().zip(ga.iter().zip(&gb)) {
                *o += 2.0 * d * (p - q) / n;
            }
        }
        (value, grad)
    }

    fn witness_violations(&self, psi: &[f64], x: &Matrix) -> usize {
        monotone_violations(&self.world, x, |r| self.link(psi, radius(r)).0)
    }
}

/// `h_s(r) = (1 − s)(r − m) + s|r − m|` around the label threshold `m`.
/// Injective for `s < ½`; from `s = ½` on it merges radii on either side of
/// `m`, which carry different labels.
pub struct FoldLink {
    world: World,
    pub jitter: f64,
}

impl FoldLink {
    pub fn new(world: World) -> Self {
        Self { world, jitter: 0.05 }
    }

    fn link(&self, s: f64, r: f64) -> (f64, f64) {
        let c = r - self.world.radius_median();
        ((1.0 - s) * c + s * libm::fabs(c), libm::fabs(c) - c)
    }
}

impl ProbeFamily for FoldLink {
    fn name(&self) -> &'static str {
        "fold_link"
    }

    fn world(&self) -> &World {
        &self.world
    }

    fn psi0(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn code_dim(&self) -> usize {
        1
    }

    fn encode(&self, psi: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = self.link(psi[0], radius(x)).0;
    }

    fn views(&self, n: usize, rng: &mut Rng) -> Result<crate::worlds::ViewBatch> {
        jittered_views(&self.world, self.jitter, n, rng)
    }

    fn invariance(&self, psi: &[f64], views: &crate::worlds::ViewBatch) -> (f64, Vec<f64>) {
        let n = views.len() as f64;
        let (mut value, mut g) = (0.0, 0.0);
        for (a, b) in views.x.iter_rows().zip(views.x_plus.iter_rows()) {
            let (ha, da) = self.link(psi[0], radius(a));
            let (hb, db) = self.link(psi[0], radius(b));
            value += (ha - hb) * (ha - hb) / n;
            g += 2.0 * (ha - hb) * (da - db) / n;
        }
        (value, vec![g])
    }

    /// Always moves towards the fold.
    fn direction(&self, _psi: &[f64], _g_inv: &[f64]) -> Vec<f64> {
        vec![1.0]
    }

    fn witness_violations(&self, psi: &[f64], x: &Matrix) -> usize {
        monotone_violations(&self.world, x, |r| self.link(psi[0], radius(r)).0)
    }
}

/// Codes `(e^a u, ψ_v v)` on the two-bit world. The invariance loss under
/// the flip of `v` is proportional to `ψ_v²`, so its descent direction
/// shrinks the `v` channel.
pub struct TwoBitScale {
    world: World,
}

impl TwoBitScale {
    pub fn new(world: World) -> Self {
        Self { world }
    }
}

impl ProbeFamily for TwoBitScale {
    fn name(&self) -> &'static str {
        "two_bit_scale"
    }

    fn world(&self) -> &World {
        &self.world
    }

    fn psi0(&self) -> Vec<f64> {
        vec![0.0, 1.0]
    }

    fn code_dim(&self) -> usize {
        2
    }

    fn encode(&self, psi: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = libm::exp(psi[0]) * x[0];
        out[1] = psi[1] * x[1];
    }

    fn invariance(&self, psi: &[f64], views: &crate::worlds::ViewBatch) -> (f64, Vec<f64>) {
        let n = views.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; 2];
        for (a, b) in views.x.iter_rows().zip(views.x_plus.iter_rows()) {
            let du = libm::exp(psi[0]) * (a[0] - b[0]);
            let dv = a[1] - b[1];
            value += (du * du + psi[1] * psi[1] * dv * dv) / n;
            grad[0] += 2.0 * du * du / n;
            grad[1] += 2.0 * psi[1] * dv * dv / n;
        }
        (value, grad)
    }
}
