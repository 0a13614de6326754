use pel_core::metrics::{default_grid, invariance_curve, normalized_mi, reparameterize, sufficiency_exact};
use pel_core::theory::{bayes_risk, Cut, Loss, Resolution};
use pel_core::trainer::{train_head, train_perception, HeadConfig, TrainConfig};
use pel_core::worlds::{make_bernoulli_uv_world, make_rotation_world, make_six_nine_world, AngleSampler};
use pel_core::{Arch, Encoder, Matrix, Representation, Rng, World};
use proptest::prelude::*;

fn rotation() -> World {
    make_rotation_world(0.5, 1.5, AngleSampler::Uniform).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn short_run(seed: u64, lr: f64) -> TrainConfig {
    TrainConfig {
        steps: 40,
        batch_size: 32,
        lr,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible_bit_for_bit() {
    let w = rotation();
    let init = Encoder::random(Arch::Mlp1, 2, 8, 4, 1.0, &mut Rng::new(3));
    let (a, la) = train_perception(&w, &init, &short_run(7, 1e-2), &mut |_, _| Ok(())).unwrap();
    let (b, lb) = train_perception(&w, &init, &short_run(7, 1e-2), &mut |_, _| Ok(())).unwrap();
    assert_eq!(bits(&a.params()), bits(&b.params()));
    assert_eq!(la, lb);
    let (c, _) = train_perception(&w, &init, &short_run(8, 1e-2), &mut |_, _| Ok(())).unwrap();
    assert_ne!(bits(&a.params()), bits(&c.params()));
}

#[test]
fn zero_learning_rate_freezes_the_encoder() {
    let w = rotation();
    let init = Encoder::random(Arch::Linear, 2, 0, 2, 1.0, &mut Rng::new(1));
    let (out, log) = train_perception(&w, &init, &short_run(0, 0.0), &mut |_, _| Ok(())).unwrap();
    assert_eq!(bits(&out.params()), bits(&init.params()));
    assert_eq!(log.steps.len(), 40);
}

#[test]
fn observer_sees_every_cadence_step() {
    let w = rotation();
    let init = Encoder::random(Arch::Linear, 2, 0, 2, 1.0, &mut Rng::new(1));
    let cfg = TrainConfig {
        eval_every: 10,
        ..short_run(0, 1e-3)
    };
    let mut seen = Vec::new();
    let (_, log) = train_perception(&w, &init, &cfg, &mut |s, _| {
        seen.push(s);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![10, 20, 30, 40]);
    assert_eq!(log.snapshots, seen);
}

#[test]
fn no_cut_beats_the_full_input() {
    let res = Resolution {
        samples: 5000,
        ..Resolution::default()
    };
    for w in [
        rotation(),
        make_bernoulli_uv_world(),
        make_six_nine_world([1.0, 0.5], 0.7).unwrap(),
    ] {
        for loss in [Loss::ZeroOne, Loss::Log] {
            let full = bayes_risk(&w, Cut::Full, loss, &res).unwrap().value;
            for cut in [Cut::Good, Cut::Bad] {
                let r = bayes_risk(&w, cut, loss, &res).unwrap().value;
                assert!(r >= full - res.tolerance, "{} {loss:?}: {r} < {full}", w.name());
            }
        }
    }
}

#[test]
fn head_training_keeps_the_encoder_frozen() {
    let w = rotation();
    let enc = Encoder::random(Arch::Mlp1, 2, 6, 3, 1.0, &mut Rng::new(2));
    let before = enc.param_snapshot();
    let fit = train_head(
        &enc,
        &w,
        &HeadConfig {
            label_budget: 256,
            ..HeadConfig::default()
        },
    )
    .unwrap();
    assert!(fit.audit.unchanged);
    assert_eq!(fit.audit.words, before.len());
    assert_eq!(enc.param_snapshot(), before);
}

#[test]
fn sufficiency_is_exact_on_the_two_bit_world() {
    let w = make_bernoulli_uv_world();
    assert_eq!(sufficiency_exact(&Encoder::identity(2), &w).unwrap(), 1.0);
    let dropped_v = Encoder::linear(Matrix::from_fn(1, 2, |_, j| if j == 0 { 1.0 } else { 0.0 }), vec![0.0]).unwrap();
    assert_eq!(sufficiency_exact(&dropped_v, &w).unwrap(), 0.0);
    assert!(sufficiency_exact(&Encoder::identity(2), &rotation()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn curve_starts_at_zero_and_is_non_negative(seed in 0u64..1000, dim in 1usize..5) {
        let w = rotation();
        let enc = Encoder::random(Arch::Mlp1, 2, 5, dim, 1.0, &mut Rng::new(seed));
        let c = invariance_curve(&enc, &w, &default_grid(9), 300, &mut Rng::new(seed + 1)).unwrap();
        prop_assert_eq!(c.values[0], 0.0);
        prop_assert!(c.values.iter().all(|&v| v >= 0.0));
        prop_assert!(c.auc >= 0.0);
    }

    #[test]
    fn nmi_ignores_invertible_affine_maps(seed in 0u64..1000, scale in 0.2f64..5.0, shift in -3.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let n = 600;
        let v: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
        let z = Matrix::from_fn(n, 2, |i, j| if j == 0 { v[i] as f64 + rng.normal() } else { rng.normal() });
        let a = Matrix::from_fn(2, 2, |i, j| if i == j { scale } else { 0.0 });
        let moved = reparameterize(&z, &a, &[shift, -shift]).unwrap();
        let m0 = normalized_mi(&z, &v, 8).unwrap();
        let m1 = normalized_mi(&moved, &v, 8).unwrap();
        prop_assert!((m0 - m1).abs() <= 1e-12, "{} vs {}", m0, m1);
    }
}
