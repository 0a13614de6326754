//! Bayes-risk oracles and numerical checks of the separation results.
//!
//! `F(φ)` is the Bayes risk of deciding from `Z = f_φ(X)`. The
//! orthogonality check moves an encoder along a perception update inside a
//! parametric family and measures how `F` responds; the assumption audit
//! tests the group-invariance hypotheses on samples.

mod family;
mod risk;

pub use family::{AtParams, FoldLink, ProbeFamily, RadialLink, TwoBitScale, DISTINCT_ORBIT_TOL, MERGE_CODE_TOL};
pub use risk::{
    bayes_risk, bayes_risk_through_encoder, cut_representation, nats_to_bits, task_risk, Cut, Loss, Resolution,
    RiskEstimate, RiskOracle, TaskRisk,
};

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::numerics::{dot, finite_diff, norm, FnRepresentation, Representation, Rng};
use crate::objectives::terms;
use crate::trainer::{train_head, HeadConfig};
use crate::worlds::{sample_inputs, sample_views, World, WorldKind};

/// One measured quantity against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `true` when the value must stay at or below the tolerance, `false`
    /// when it must exceed it.
    pub upper_bound: bool,
    pub ok: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            upper_bound: true,
            ok: value <= tolerance,
        }
    }

    pub fn above(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            upper_bound: false,
            ok: value > tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryVerdict {
    pub name: String,
    pub checks: Vec<Check>,
    /// All checks passed.
    pub pass: bool,
    pub diagnostics: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl TheoryVerdict {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            checks: Vec::new(),
            pass: true,
            diagnostics: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, c: Check) {
        self.pass &= c.ok;
        self.checks.push(c);
    }

    fn diag(&mut self, name: &str, v: f64) {
        self.diagnostics.push((name.into(), v));
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.iter().find(|d| d.0 == name).map(|d| d.1)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthoConfig {
    pub tolerance: f64,
    /// Central-difference step along the unit probe direction.
    pub fd_step: f64,
    /// Finite steps at which `F` must stay constant.
    pub steps: Vec<f64>,
    /// The path probe covers `t ∈ (0, path_max]` in `path_points` steps.
    pub path_max: f64,
    pub path_points: usize,
    pub loss: Loss,
    pub resolution: Resolution,
    pub n_views: usize,
    pub n_witness: usize,
    /// `‖∇F‖` below this is treated as zero and the cosine is not asserted.
    pub grad_floor: f64,
    pub seed: u64,
}

impl Default for OrthoConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            fd_step: 1e-3,
            steps: vec![-0.05, -0.01, 0.01, 0.05],
            path_max: 1.0,
            path_points: 20,
            loss: Loss::Log,
            resolution: Resolution::default(),
            n_views: 2000,
            n_witness: 1000,
            grad_floor: 1e-6,
            seed: 0,
        }
    }
}

fn axpy(psi: &[f64], t: f64, v: &[f64]) -> Vec<f64> {
    psi.iter().zip(v).map(|(p, d)| p + t * d).collect()
}

/// Fraction of sampled `(x, δ)` with `label(x) ≠ label(T_δ x)`.
pub fn label_invariance_violations(world: &World, n: usize, rng: &mut Rng) -> Result<f64> {
    let v = sample_views(world, n, rng)?;
    let bad =
        v.x.iter_rows()
            .zip(v.x_plus.iter_rows())
            .filter(|(a, b)| world.label_of(a) != world.label_of(b))
            .count();
    Ok(bad as f64 / n as f64)
}

/// Moves `f_ψ` along the family's probe direction and checks that the
/// Bayes risk does not respond.
///
/// Passes iff every check holds: the directional derivative, constancy at
/// the finite steps, no risk increase along the whole path, the
/// injectivity witness at every probed point, resolution stability of the
/// derivative, sampled label invariance, and (when `∇F` is above the noise
/// floor) orthogonality of `∇F` and `∇L_inv`.
pub fn orthogonality_check(family: &dyn ProbeFamily, cfg: &OrthoConfig) -> Result<TheoryVerdict> {
    let world = family.world();
    let mut rng = Rng::new(cfg.seed).split(0x6f72_7468);
    let psi = family.psi0();
    let views = family.views(cfg.n_views, &mut rng)?;
    let (l_inv, g_inv) = family.invariance(&psi, &views);
    let raw = family.direction(&psi, &g_inv);
    let dir_norm = norm(&raw);
    let mut v = TheoryVerdict::new(&alloc::format!("orthogonality/{}", family.name()));
    v.diag("l_inv", l_inv);
    v.diag("grad_inv_norm", norm(&g_inv));
    v.check(Check::above("probe_direction_norm", dir_norm, 0.0));
    if !(dir_norm > 0.0) {
        v.notes.push("probe direction vanished; nothing to test".into());
        return Ok(v);
    }
    let unit: Vec<f64> = raw.iter().map(|d| d / dir_norm).collect();

    let oracle = RiskOracle::new(world, cfg.loss, &cfg.resolution)?;
    let cells = cfg.resolution.cells;
    let f_at = |p: &[f64], cells: usize| -> Result<f64> {
        oracle.risk(
            &AtParams {
                family,
                psi: p.to_vec(),
            },
            cells,
        )
    };
    let f0 = f_at(&psi, cells)?;
    v.diag("risk", f0);

    let h = cfg.fd_step;
    let dvf = |cells: usize| -> Result<f64> {
        Ok((f_at(&axpy(&psi, h, &unit), cells)? - f_at(&axpy(&psi, -h, &unit), cells)?) / (2.0 * h))
    };
    let d1 = dvf(cells)?;
    let d2 = dvf(2 * cells)?;
    v.check(Check::at_most("directional_derivative", libm::fabs(d1), cfg.tolerance));

    let mut constancy = 0.0f64;
    let mut probed = vec![psi.clone()];
    for &t in &cfg.steps {
        let p = axpy(&psi, t, &unit);
        constancy = constancy.max(libm::fabs(f_at(&p, cells)? - f0));
        probed.push(p);
    }
    v.check(Check::at_most("finite_step_constancy", constancy, cfg.tolerance));

    let mut increase = 0.0f64;
    for k in 1..=cfg.path_points {
        let t = cfg.path_max * k as f64 / cfg.path_points as f64;
        let p = axpy(&psi, t, &unit);
        increase = increase.max(f_at(&p, cells)? - f0);
        probed.push(p);
    }
    v.check(Check::at_most("path_risk_increase", increase, cfg.tolerance));
    v.diag("risk_increase", increase);

    let xw = sample_inputs(world, cfg.n_witness, &mut rng)?;
    let violations: usize = probed.iter().map(|p| family.witness_violations(p, &xw)).sum();
    v.check(Check::at_most("injectivity_witness_violations", violations as f64, 0.0));

    v.check(Check::at_most(
        "resolution_stability",
        libm::fabs(d2 - d1),
        0.5 * cfg.tolerance,
    ));
    v.diag("directional_derivative_2x", d2);

    let a1 = label_invariance_violations(world, cfg.n_views, &mut rng)?;
    v.check(Check::at_most("label_invariance_violation_rate", a1, 0.0));

    let g_f = {
        let f = |p: &[f64]| f_at(p, cells).unwrap_or(f64::NAN);
        finite_diff(f, &psi, h)
    };
    let gf_norm = norm(&g_f);
    v.diag("grad_risk_norm", gf_norm);
    let gi_norm = norm(&g_inv);
    if gf_norm > cfg.grad_floor && gi_norm > 0.0 {
        let cos = libm::fabs(dot(&g_f, &g_inv)) / (gf_norm * gi_norm);
        v.diag("abs_cosine", cos);
        v.check(Check::at_most("gradient_cosine", cos, cfg.tolerance));
    } else {
        v.notes.push("grad F below noise floor; cosine not asserted".into());
    }
    if !cfg.loss.strictly_proper() {
        v.notes
            .push(alloc::format!("{} loss is not strictly proper", cfg.loss.name()));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageConfig {
    pub head: HeadConfig,
    pub n_test: usize,
    pub gap: f64,
    pub loss: Loss,
    pub resolution: Resolution,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        Self {
            head: HeadConfig::default(),
            n_test: 10_000,
            gap: 0.03,
            loss: Loss::ZeroOne,
            resolution: Resolution::default(),
        }
    }
}

/// Trains a head on frozen codes and compares its held-out risk with the
/// Bayes risk of the full input.
pub fn two_stage_check(world: &World, enc: &dyn Representation, cfg: &TwoStageConfig) -> Result<TheoryVerdict> {
    let fit = train_head(enc, world, &cfg.head)?;
    let mut rng = Rng::new(cfg.head.seed).split(0x7465_7374);
    let risk = task_risk(enc, &fit.head, world, cfg.loss, cfg.n_test, &mut rng)?;
    let bayes = bayes_risk(world, Cut::Full, cfg.loss, &cfg.resolution)?.value;
    let mut v = TheoryVerdict::new("two_stage");
    v.diag("task_risk", risk.mean);
    v.diag("task_risk_std_err", risk.std_err);
    v.diag("bayes_risk_full", bayes);
    v.check(Check::at_most("excess_risk", risk.mean - bayes, cfg.gap));
    v.check(Check::at_most(
        "separation_audit_changes",
        f64::from(u8::from(!fit.audit.unchanged)),
        0.0,
    ));
    if !world.label_invariant() {
        v.notes.push("world does not declare a group-invariant label".into());
    }
    Ok(v)
}

/// Canonical factor-through-orbit representation of a world, paired with
/// the link applied to orbit values.
type Link<'a> = alloc::boxed::Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>;

fn orbit_factor(world: &World) -> (alloc::boxed::Box<dyn Representation + '_>, Link<'_>) {
    match world.kind() {
        WorldKind::Rotation { .. } => {
            let fam = RadialLink::new(world.clone());
            let psi = fam.psi0();
            let link = {
                let fam = RadialLink::new(world.clone());
                let psi = psi.clone();
                move |t: &[f64]| vec![fam.link(&psi, t[0]).0]
            };
            (
                alloc::boxed::Box::new(OwnedAt { fam, psi }),
                alloc::boxed::Box::new(link),
            )
        }
        _ => {
            let d = world.orbit_dim();
            let rep = FnRepresentation::new(world.d_x(), d, move |x: &[f64], o: &mut [f64]| {
                o.copy_from_slice(&world.orbit(x))
            });
            (
                alloc::boxed::Box::new(rep),
                alloc::boxed::Box::new(|t: &[f64]| t.to_vec()),
            )
        }
    }
}

struct OwnedAt {
    fam: RadialLink,
    psi: Vec<f64>,
}

impl Representation for OwnedAt {
    fn input_dim(&self) -> usize {
        2
    }
    fn code_dim(&self) -> usize {
        1
    }
    fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        self.fam.encode(&self.psi, x, out)
    }
}

/// Sample-level checks of the five assumptions for one world.
pub fn assumption_audit(world: &World, loss: Loss, n: usize, rng: &mut Rng) -> Result<Vec<TheoryVerdict>> {
    let mut out = Vec::new();

    let mut a1 = TheoryVerdict::new("A1_group_invariant_target");
    let rate = label_invariance_violations(world, n, rng)?;
    a1.diag("violations", libm::round(rate * n as f64));
    a1.check(Check::at_most("violation_rate", rate, 0.0));
    out.push(a1);

    let mut a2 = TheoryVerdict::new("A2_orbit_map_constant");
    let views = sample_views(world, n, rng)?;
    let worst = views
        .x
        .iter_rows()
        .zip(views.x_plus.iter_rows())
        .map(|(a, b)| libm::sqrt(crate::numerics::sq_dist(&world.orbit(a), &world.orbit(b))))
        .fold(0.0, f64::max);
    a2.check(Check::at_most("max_orbit_shift", worst, 1e-9));
    out.push(a2);

    let mut a3 = TheoryVerdict::new("A3_strictly_proper_loss");
    // min over p ≠ q of E_p ℓ(q) − E_p ℓ(p) on a grid of binary posteriors
    let grid: Vec<f64> = (1..20).map(|k| k as f64 / 20.0).collect();
    let mut margin = f64::INFINITY;
    for &p in &grid {
        let expected = |q: f64| p * loss.pointwise(&[1.0 - q, q], 1) + (1.0 - p) * loss.pointwise(&[1.0 - q, q], 0);
        let own = expected(p);
        for &q in grid.iter().filter(|&&q| q != p) {
            margin = margin.min(expected(q) - own);
        }
    }
    a3.check(Check::above("propriety_margin", margin, 0.0));
    a3.notes.push(alloc::format!("loss = {}", loss.name()));
    out.push(a3);

    let (rep, link) = orbit_factor(world);
    let mut a4 = TheoryVerdict::new("A4_invariance_minimum");
    let z = rep.encode_batch(&views.x)?;
    let zp = rep.encode_batch(&views.x_plus)?;
    let l_inv = terms::invariance(&z, &zp)?.value;
    a4.check(Check::at_most("invariance_loss_of_orbit_encoder", l_inv, 1e-12));
    out.push(a4);

    let mut a5 = TheoryVerdict::new("A5_factor_through_orbit");
    let x = sample_inputs(world, n, rng)?;
    let residual = x
        .iter_rows()
        .map(|r| libm::sqrt(crate::numerics::sq_dist(&rep.encode(r), &link(&world.orbit(r)))))
        .fold(0.0, f64::max);
    a5.check(Check::at_most("factorisation_residual", residual, 1e-12));
    a5.notes.push(world.name().to_string());
    out.push(a5);
    Ok(out)
}
