//! Perception training and decision-head fitting.
//!
//! `train_perception` only ever sees label-free [`ViewBatch`]es. `train_head`
//! takes the representation by shared reference and audits its parameters
//! before and after fitting.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{contract, Error, Result};
use crate::numerics::Encoder;
use crate::numerics::{fit_softmax, FitConfig, Matrix, Representation, Rng, SoftmaxHead};
use crate::objectives::{perc_loss, Components, ObjectiveSpec};
use crate::worlds::{sample_labeled, sample_views, AngleSampler, TransformFamily, World};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub objective: ObjectiveSpec,
    /// Observer cadence in steps; 0 calls it only after the last step.
    pub eval_every: usize,
    /// Standard deviation of Gaussian view angles. `None` keeps the world's
    /// own sampler.
    pub sigma_aug: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 256,
            lr: 1e-3,
            optimizer: Optimizer::ADAM,
            seed: 0,
            objective: ObjectiveSpec::default(),
            eval_every: 0,
            sigma_aug: None,
        }
    }
}

impl TrainConfig {
    /// `lr = 0` is accepted so that a frozen run can be expressed.
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be finite and >= 0".into()));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(Error::Config("adam needs 0 <= beta < 1 and eps > 0".into()));
            }
        }
        if let Some(s) = self.sigma_aug {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("sigma_aug must be positive".into()));
            }
        }
        self.objective
            .validate()
            .map_err(|e| Error::Config(alloc::format!("{e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub components: Components,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    /// Steps at which the observer was called.
    pub snapshots: Vec<usize>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// The world whose views are used for training, with the augmentation
/// sampler applied to rotations.
pub fn training_world(world: &World, cfg: &TrainConfig) -> World {
    match (cfg.sigma_aug, world.transforms()) {
        (Some(sigma), TransformFamily::Rotation2d { .. }) => world.with_angle_sampler(AngleSampler::Gaussian { sigma }),
        _ => world.clone(),
    }
}

/// Minimises `L_perc` over the encoder parameters. `observe` is called with
/// the step count every `eval_every` steps and after the final step.
pub fn train_perception(
    world: &World,
    init: &Encoder,
    cfg: &TrainConfig,
    observe: &mut dyn FnMut(usize, &Encoder) -> Result<()>,
) -> Result<(Encoder, TrainLog)> {
    cfg.validate()?;
    let world = training_world(world, cfg);
    let mut enc = init.clone();
    let mut params = enc.params();
    let mut rng = Rng::new(cfg.seed).split(0x7261_696e);
    let mut log = TrainLog::default();
    let mut adam = Adam {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    for step in 1..=cfg.steps {
        let views = sample_views(&world, cfg.batch_size, &mut rng)?;
        let eval = perc_loss(&enc, &views, &cfg.objective, world.transforms())?;
        if !eval.total.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
            let last = log
                .steps
                .last()
                .map_or(String::from("none"), |r| alloc::format!("{:?}", r.components));
            return Err(Error::Diverged {
                step,
                detail: alloc::format!(
                    "loss {} with components {:?}; last finite components {last}",
                    eval.total,
                    eval.components
                ),
            });
        }
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(&eval.grad) {
                    *p -= cfg.lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                adam.t += 1;
                let c1 = 1.0 - libm::pow(beta1, adam.t as f64);
                let c2 = 1.0 - libm::pow(beta2, adam.t as f64);
                for (i, (p, g)) in params.iter_mut().zip(&eval.grad).enumerate() {
                    adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * g;
                    adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * g * g;
                    let mh = adam.m[i] / c1;
                    let vh = adam.v[i] / c2;
                    *p -= cfg.lr * mh / (libm::sqrt(vh) + eps);
                }
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                step,
                detail: alloc::format!("parameters left the finite range after loss {}", eval.total),
            });
        }
        enc.set_params(&params)?;
        log.steps.push(StepRecord {
            step,
            components: eval.components,
            total: eval.total,
        });
        if (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps {
            observe(step, &enc)?;
            log.snapshots.push(step);
        }
    }
    Ok((enc, log))
}

static HEAD_CALLS: AtomicUsize = AtomicUsize::new(0);
static HEAD_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

/// Process-wide `(train_head calls, calls that saw the representation
/// change)`.
pub fn separation_audit_totals() -> (usize, usize) {
    (
        HEAD_CALLS.load(Ordering::SeqCst),
        HEAD_VIOLATIONS.load(Ordering::SeqCst),
    )
}

/// Record of one frozen-representation audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparationAudit {
    /// Number of parameter words compared.
    pub words: usize,
    pub unchanged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub label_budget: usize,
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            label_budget: 4096,
            fit: FitConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeadFit {
    pub head: SoftmaxHead,
    pub audit: SeparationAudit,
}

/// Fits a linear-softmax head on frozen codes of `label_budget` labelled
/// draws.
pub fn train_head(frozen: &dyn Representation, world: &World, cfg: &HeadConfig) -> Result<HeadFit> {
    let before = frozen.param_snapshot();
    let mut rng = Rng::new(cfg.seed).split(0x6865_6164);
    let (x, y) = sample_labeled(world, cfg.label_budget, &mut rng)?;
    let z = frozen.encode_batch(&x)?;
    let head = fit_softmax(&z, &y, world.classes(), &cfg.fit, &mut rng)?;
    let after = frozen.param_snapshot();
    let audit = SeparationAudit {
        words: before.len(),
        unchanged: before == after,
    };
    HEAD_CALLS.fetch_add(1, Ordering::SeqCst);
    if !audit.unchanged {
        HEAD_VIOLATIONS.fetch_add(1, Ordering::SeqCst);
        return Err(contract("representation parameters changed during head training"));
    }
    Ok(HeadFit { head, audit })
}

/// Held-out accuracy of `head` on fresh draws.
pub fn head_accuracy(
    rep: &dyn Representation,
    head: &SoftmaxHead,
    world: &World,
    n: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let (x, y) = sample_labeled(world, n, rng)?;
    let z: Matrix = rep.encode_batch(&x)?;
    Ok(head.accuracy(&z, &y))
}

#[cfg(test)]
mod tests;
