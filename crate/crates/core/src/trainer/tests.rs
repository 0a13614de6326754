use core::cell::Cell;

use super::*;
use crate::metrics::{default_grid, invariance_curve};
use crate::numerics::{Arch, Projection};
use crate::objectives::invariance_loss;
use crate::worlds::{make_bernoulli_uv_world, make_rotation_world};

fn rotation() -> World {
    make_rotation_world(0.5, 1.5, AngleSampler::Uniform).unwrap()
}

fn init(seed: u64) -> Encoder {
    Encoder::random(Arch::Mlp1, 2, 16, 3, 1.0, &mut Rng::new(seed))
}

fn short(seed: u64) -> TrainConfig {
    TrainConfig {
        steps: 40,
        batch_size: 64,
        lr: 1e-2,
        seed,
        ..TrainConfig::default()
    }
}

fn quiet() -> impl FnMut(usize, &Encoder) -> Result<()> {
    |_, _| Ok(())
}

#[test]
fn training_is_deterministic() {
    let w = rotation();
    let (a, la) = train_perception(&w, &init(1), &short(7), &mut quiet()).unwrap();
    let (b, lb) = train_perception(&w, &init(1), &short(7), &mut quiet()).unwrap();
    let bits = |e: &Encoder| e.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(la, lb);
    let (c, _) = train_perception(&w, &init(1), &short(8), &mut quiet()).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn zero_learning_rate_leaves_encoder_bitwise_unchanged() {
    let w = rotation();
    for optimizer in [Optimizer::Sgd, Optimizer::ADAM] {
        let cfg = TrainConfig {
            lr: 0.0,
            optimizer,
            ..short(3)
        };
        let (e, _) = train_perception(&w, &init(2), &cfg, &mut quiet()).unwrap();
        assert_eq!(e.params(), init(2).params());
    }
}

#[test]
fn zero_objective_is_a_no_op_under_sgd() {
    let cfg = TrainConfig {
        optimizer: Optimizer::Sgd,
        objective: ObjectiveSpec::zero(),
        ..short(3)
    };
    let (e, log) = train_perception(&rotation(), &init(4), &cfg, &mut quiet()).unwrap();
    assert_eq!(e.params(), init(4).params());
    assert!(log.steps.iter().all(|r| r.total == 0.0));
}

#[test]
fn logged_components_sum_to_total() {
    let cfg = TrainConfig {
        objective: ObjectiveSpec {
            w_eq: 0.5,
            ..ObjectiveSpec::default()
        },
        ..short(5)
    };
    let (_, log) = train_perception(
        &rotation(),
        &Encoder::random(Arch::Mlp1, 2, 8, 2, 1.0, &mut Rng::new(1)),
        &cfg,
        &mut quiet(),
    )
    .unwrap();
    assert_eq!(log.steps.len(), 40);
    for r in &log.steps {
        assert!((r.components.sum() - r.total).abs() <= 1e-9);
    }
}

#[test]
fn observer_cadence() {
    let mut seen = Vec::new();
    let cfg = TrainConfig {
        eval_every: 15,
        ..short(1)
    };
    let (_, log) = train_perception(&rotation(), &init(1), &cfg, &mut |s, _| {
        seen.push(s);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![15, 30, 40]);
    assert_eq!(log.snapshots, seen);
}

#[test]
fn divergence_is_reported() {
    let cfg = TrainConfig {
        lr: 1e200,
        optimizer: Optimizer::Sgd,
        objective: ObjectiveSpec {
            use_nce: false,
            ..ObjectiveSpec::default()
        },
        ..short(1)
    };
    let r = train_perception(&rotation(), &init(1), &cfg, &mut quiet());
    assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
}

#[test]
fn config_validation() {
    assert!(TrainConfig { steps: 0, ..short(1) }.validate().is_err());
    assert!(TrainConfig { lr: -1.0, ..short(1) }.validate().is_err());
    assert!(TrainConfig {
        sigma_aug: Some(0.0),
        ..short(1)
    }
    .validate()
    .is_err());
    assert!(short(1).validate().is_ok());
}

#[test]
fn training_shrinks_invariance_loss() {
    let w = rotation();
    let enc0 = Encoder::random(Arch::Mlp1, 2, 32, 4, 1.0, &mut Rng::new(0));
    let cfg = TrainConfig {
        lr: 1e-2,
        ..TrainConfig::default()
    };
    let (enc, _) = train_perception(&w, &enc0, &cfg, &mut quiet()).unwrap();
    let views = crate::worlds::sample_views(&w, 4000, &mut Rng::new(77)).unwrap();
    let before = invariance_loss(&enc0, &views).unwrap();
    let after = invariance_loss(&enc, &views).unwrap();
    assert!(after <= 0.1 * before, "{before} -> {after}");
    let grid = default_grid(33);
    let a0 = invariance_curve(&enc0, &w, &grid, 2000, &mut Rng::new(1)).unwrap().auc;
    let a1 = invariance_curve(&enc, &w, &grid, 2000, &mut Rng::new(1)).unwrap().auc;
    assert!(a1 <= 0.5 * a0);
}

#[test]
fn head_on_full_code_and_on_u() {
    let w = make_bernoulli_uv_world();
    let full = Projection::new(2, vec![0, 1]).unwrap();
    let u = Projection::new(2, vec![0]).unwrap();
    let cfg = HeadConfig {
        label_budget: 2000,
        ..HeadConfig::default()
    };
    let fit = train_head(&full, &w, &cfg).unwrap();
    assert!(fit.audit.unchanged);
    assert!(head_accuracy(&full, &fit.head, &w, 4000, &mut Rng::new(1)).unwrap() >= 0.99);
    let fit = train_head(&u, &w, &cfg).unwrap();
    let acc = head_accuracy(&u, &fit.head, &w, 10_000, &mut Rng::new(2)).unwrap();
    assert!((0.45..=0.55).contains(&acc), "{acc}");
}

#[test]
fn head_training_leaves_encoder_bitwise_unchanged() {
    let enc = init(3);
    let before = enc.param_snapshot();
    let fit = train_head(&enc, &rotation(), &HeadConfig::default()).unwrap();
    assert_eq!(enc.param_snapshot(), before);
    assert!(fit.audit.unchanged && fit.audit.words == before.len());
}

/// A representation that mutates itself when encoding.
struct Leaky {
    touched: Cell<u64>,
}

impl Representation for Leaky {
    fn input_dim(&self) -> usize {
        2
    }
    fn code_dim(&self) -> usize {
        2
    }
    fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        self.touched.set(self.touched.get() + 1);
        out.copy_from_slice(x);
    }
    fn param_snapshot(&self) -> Vec<u64> {
        vec![self.touched.get()]
    }
}

#[test]
fn mutation_during_head_training_is_caught() {
    let leaky = Leaky { touched: Cell::new(0) };
    let (_, v0) = separation_audit_totals();
    let r = train_head(&leaky, &rotation(), &HeadConfig::default());
    assert!(matches!(r, Err(Error::Contract(_))));
    let (_, v1) = separation_audit_totals();
    assert!(v1 > v0);
}
