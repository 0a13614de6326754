//! Theory checks driven from a configuration: the risk table, assumption
//! audits, the two-stage check, and the orthogonality scenarios.

use pel_core::numerics::Representation;
use pel_core::theory::{
    assumption_audit, bayes_risk, bayes_risk_through_encoder, nats_to_bits, orthogonality_check, two_stage_check,
    Check, Cut, FoldLink, Loss, OrthoConfig, ProbeFamily, RadialLink, Resolution, TheoryVerdict, TwoBitScale,
    TwoStageConfig,
};
use pel_core::worlds::{make_bernoulli_uv_world, WorldKind};
use pel_core::{Rng, World};

use crate::config::{ExperimentConfig, Scenario};
use crate::error::{PelError, Result};
use crate::report::{MetricEntry, VerdictRecord};

const EXACT_TOL: f64 = 1e-12;

fn verdict(name: &str) -> TheoryVerdict {
    TheoryVerdict {
        name: name.into(),
        checks: Vec::new(),
        pass: true,
        diagnostics: Vec::new(),
        notes: Vec::new(),
    }
}

fn push(v: &mut TheoryVerdict, c: Check) {
    v.pass &= c.ok;
    v.checks.push(c);
}

/// Bayes risks of the full input and the named good and bad cuts under
/// zero-one and log loss, plus the risk through `enc` when given.
///
/// The verdict asserts that no cut beats the full input. On the two-bit
/// world it also asserts the exact table: zero-one risks `(0, 0, ½)` and
/// conditional entropies `H(Y|V) = 0`, `H(Y|U) = 1` bit.
pub fn risk_table(
    world: &World,
    enc: Option<&dyn Representation>,
    res: &Resolution,
) -> Result<(MetricEntry, VerdictRecord)> {
    let mut entry = MetricEntry::ok().meta("cells", res.cells).meta("samples", res.samples);
    let mut v = verdict("risk_table");
    let mut exact = true;
    for loss in [Loss::ZeroOne, Loss::Log] {
        let unit = |x: f64| if loss == Loss::Log { nats_to_bits(x) } else { x };
        let prefix = if loss == Loss::Log { "log_bits" } else { "zero_one" };
        let mut vals = [0.0; 3];
        for (i, (label, cut)) in [("full", Cut::Full), ("good", Cut::Good), ("bad", Cut::Bad)]
            .into_iter()
            .enumerate()
        {
            let r = bayes_risk(world, cut, loss, res)?;
            exact &= r.exact;
            if let Some(w) = r.warning {
                entry = entry.note(format!("{prefix}_{label}: {w}"));
            }
            vals[i] = unit(r.value);
            entry = entry.value(&format!("{prefix}_{label}"), vals[i]);
        }
        let tol = if exact { EXACT_TOL } else { res.tolerance };
        push(
            &mut v,
            Check::at_most(&format!("{prefix}_full_minus_good"), vals[0] - vals[1], tol),
        );
        push(
            &mut v,
            Check::at_most(&format!("{prefix}_full_minus_bad"), vals[0] - vals[2], tol),
        );
        if matches!(world.kind(), WorldKind::BernoulliUv) {
            let expected = if loss == Loss::Log {
                [0.0, 0.0, 1.0]
            } else {
                [0.0, 0.0, 0.5]
            };
            for (k, label) in ["full", "good", "bad"].iter().enumerate() {
                let name = format!("{prefix}_{label}_error");
                push(&mut v, Check::at_most(&name, (vals[k] - expected[k]).abs(), EXACT_TOL));
            }
        }
        if let Some(rep) = enc {
            let r = bayes_risk_through_encoder(rep, world, loss, res)?;
            if let Some(w) = r.warning {
                entry = entry.note(format!("{prefix}_encoder: {w}"));
            }
            entry = entry.value(&format!("{prefix}_encoder"), unit(r.value));
        }
    }
    entry = entry.meta(
        "method",
        if exact {
            "enumeration"
        } else {
            "equal-mass cells with exact posteriors"
        },
    );
    entry = entry.note("zero-one loss is not strictly proper; log loss is reported in bits");
    Ok((entry, VerdictRecord::new(&v, true)))
}

/// Assumption audits. A1 is expected to hold only when the world declares
/// a group-invariant label, A3 only for a strictly proper loss.
pub fn audit(world: &World, loss: Loss, n: usize, seed: u64) -> Result<Vec<VerdictRecord>> {
    let mut rng = Rng::new(seed).split(0x6175_6469);
    let verdicts = assumption_audit(world, loss, n, &mut rng)?;
    Ok(verdicts
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let expected = match i {
                0 => world.label_invariant(),
                2 => loss.strictly_proper(),
                _ => true,
            };
            VerdictRecord::new(v, expected)
        })
        .collect())
}

pub fn two_stage(world: &World, enc: &dyn Representation, cfg: &ExperimentConfig) -> Result<VerdictRecord> {
    let tcfg = TwoStageConfig {
        head: cfg.head.clone(),
        n_test: cfg.head_test_n,
        resolution: cfg.theory.resolution.clone(),
        ..TwoStageConfig::default()
    };
    Ok(VerdictRecord::new(&two_stage_check(world, enc, &tcfg)?, true))
}

fn ortho_config(cfg: &ExperimentConfig) -> OrthoConfig {
    OrthoConfig {
        tolerance: cfg.theory.tolerance,
        loss: cfg.theory.loss,
        resolution: cfg.theory.resolution.clone(),
        seed: cfg.seed,
        ..OrthoConfig::default()
    }
}

fn ortho(family: &dyn ProbeFamily, cfg: &ExperimentConfig, expected: bool) -> Result<VerdictRecord> {
    Ok(VerdictRecord::new(
        &orthogonality_check(family, &ortho_config(cfg))?,
        expected,
    ))
}

/// The orthogonality probe for the configured world: the radial link family
/// on rotations (expected to pass), the two-bit scale family on the two-bit
/// world (expected to fail). `None` for worlds without a family.
pub fn orthogonality_for_world(world: &World, cfg: &ExperimentConfig) -> Result<Option<VerdictRecord>> {
    Ok(match world.kind() {
        WorldKind::Rotation { .. } => Some(ortho(&RadialLink::new(world.clone()), cfg, true)?),
        WorldKind::BernoulliUv => Some(ortho(&TwoBitScale::new(world.clone()), cfg, false)?),
        WorldKind::SixNine { .. } => None,
    })
}

fn rotation_world(world: &World, scenario: Scenario) -> Result<World> {
    match world.kind() {
        WorldKind::Rotation { .. } => Ok(world.clone()),
        _ => Err(PelError::Usage(format!(
            "scenario {} needs world = rotation",
            scenario.name()
        ))),
    }
}

/// Verdicts of a scenario plus any metric entries it produced.
pub type ScenarioOutput = (Vec<VerdictRecord>, Vec<(String, MetricEntry)>);

/// Verdicts of a named scenario. Every verdict carries the outcome the
/// theory predicts for it.
pub fn scenario(cfg: &ExperimentConfig, s: Scenario) -> Result<ScenarioOutput> {
    let world = cfg.make_world()?;
    match s {
        Scenario::OrthogonalityRotation => {
            let w = rotation_world(&world, s)?;
            Ok((vec![ortho(&RadialLink::new(w), cfg, true)?], Vec::new()))
        }
        Scenario::MergedOrbits => {
            let w = rotation_world(&world, s)?;
            Ok((vec![ortho(&FoldLink::new(w), cfg, false)?], Vec::new()))
        }
        Scenario::OverInvarianceBernoulli => {
            if !matches!(world.kind(), WorldKind::BernoulliUv) {
                return Err(PelError::Usage(format!(
                    "scenario {} needs world = bernoulli_uv",
                    s.name()
                )));
            }
            let w = make_bernoulli_uv_world();
            let (entry, table) = risk_table(&w, None, &cfg.theory.resolution)?;
            let flip = ortho(&TwoBitScale::new(w), cfg, false)?;
            Ok((vec![table, flip], vec![("bayes_risk".into(), entry)]))
        }
    }
}
