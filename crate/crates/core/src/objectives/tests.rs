use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::numerics::gradient::{loss_value, relative_l2_error};
use crate::numerics::{finite_diff, param_gradient, Arch, ConstantLoss, Rng};
use crate::worlds::{make_rotation_world, sample_views, AngleSampler};

fn rotation_views(n: usize, seed: u64) -> (crate::World, ViewBatch) {
    let w = make_rotation_world(0.5, 1.5, AngleSampler::Uniform).unwrap();
    let v = sample_views(&w, n, &mut Rng::new(seed)).unwrap();
    (w, v)
}

fn m(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

#[test]
fn invariance_examples() {
    let (w, views) = rotation_views(32, 1);
    let id_world = w.with_transforms(TransformFamily::Identity);
    let id_views = sample_views(&id_world, 32, &mut Rng::new(1)).unwrap();
    let mut rng = Rng::new(2);
    let enc = Encoder::random(Arch::Mlp1, 2, 6, 3, 1.0, &mut rng);
    assert_eq!(invariance_loss(&enc, &id_views).unwrap(), 0.0);
    assert_eq!(
        invariance_loss(&Encoder::constant(2, &[1.0, -3.0]), &views).unwrap(),
        0.0
    );

    let x = m(&[&[1.0, 0.0]]);
    let half = ViewBatch {
        x_plus: Matrix::from_rows(&[w.transforms().apply(PI, &[1.0, 0.0])]).unwrap(),
        x,
        deltas: vec![PI],
    };
    assert!((invariance_loss(&Encoder::identity(2), &half).unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn equivariance_examples() {
    let (w, views) = rotation_views(64, 3);
    let fam = w.transforms().clone();
    let eq = equivariance_loss(&Encoder::identity(2), &views, |d, dz| fam.rho(d, dz)).unwrap();
    assert!(eq < 1e-24, "{eq}");

    let mut rng = Rng::new(4);
    let enc = Encoder::random(Arch::Mlp1, 2, 5, 2, 1.0, &mut rng);
    let eq_id = equivariance_loss(&enc, &views, |_, dz| Ok(Matrix::identity(dz))).unwrap();
    assert_eq!(eq_id, invariance_loss(&enc, &views).unwrap());

    let c = Encoder::constant(2, &[1.0, 0.0]);
    let one = ViewBatch {
        x: m(&[&[0.3, 0.2]]),
        x_plus: m(&[&[-0.3, -0.2]]),
        deltas: vec![1.0],
    };
    let v = equivariance_loss(&c, &one, |d, dz| TransformFamily::HalfTurn.rho(d, dz)).unwrap();
    assert_eq!(v, 4.0);
}

#[test]
fn equivariance_without_rho_is_a_config_error() {
    let spec = ObjectiveSpec {
        w_eq: 1.0,
        ..ObjectiveSpec::zero()
    };
    let (_, views) = rotation_views(8, 5);
    let r = perc_loss(
        &Encoder::identity(2),
        &views,
        &spec,
        &TransformFamily::FlipV { coord: 1 },
    );
    assert!(matches!(r, Err(crate::Error::Config(_))));
}

#[test]
fn infonce_uniform_logits_give_log_n() {
    for n in [2usize, 5, 17] {
        let s = Matrix::from_fn(n, n, |_, _| 0.7);
        for sym in [false, true] {
            let (v, _) = terms::infonce_logits(&s, sym).unwrap();
            assert!((v - libm::log(n as f64)).abs() < 1e-12);
        }
    }
}

#[test]
fn infonce_two_by_two_hand_value() {
    // sim(z_i, z⁺_i) = 1 and cross similarities 0
    let z = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let expected = -libm::log(core::f64::consts::E / (core::f64::consts::E + 1.0));
    assert!((expected - 0.31326).abs() < 1e-5);
    for sym in [false, true] {
        let g = terms::infonce(&z, &z, 1.0, Similarity::Dot, sym).unwrap();
        assert!((g.value - expected).abs() < 1e-12);
    }
}

#[test]
fn infonce_cosine_is_scale_invariant() {
    let mut rng = Rng::new(8);
    let z = Matrix::from_fn(10, 3, |_, _| rng.normal());
    let zp = Matrix::from_fn(10, 3, |_, _| rng.normal());
    let a = terms::infonce(&z, &zp, 0.3, Similarity::Cosine, true).unwrap().value;
    let b = terms::infonce(&z.scaled(7.5), &zp.scaled(7.5), 0.3, Similarity::Cosine, true)
        .unwrap()
        .value;
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn infonce_rejects_single_row() {
    let z = m(&[&[1.0, 0.0]]);
    assert!(terms::infonce(&z, &z, 1.0, Similarity::Dot, true).is_err());
}

#[test]
fn variance_floor_examples() {
    let spread = m(&[&[0.0, 0.0], &[3.0, -3.0]]);
    assert_eq!(variance_floor(&spread, 1.0).unwrap(), 0.0);
    assert_eq!(variance_floor(&Matrix::from_fn(5, 4, |_, _| 2.0), 1.0).unwrap(), 4.0);
    let one_low = m(&[&[0.0, 0.0], &[libm::sqrt(0.5), 10.0]]);
    assert!((variance_floor(&one_low, 1.0).unwrap() - 0.75).abs() < 1e-12);
    assert!(variance_floor(&m(&[&[1.0]]), 1.0).is_err());
}

#[test]
fn variance_floor_kink_is_inactive() {
    // Var = 2 exactly at gamma = 2
    let z = m(&[&[0.0], &[2.0]]);
    let (v, dz) = terms::variance_floor(&z, 2.0).unwrap();
    assert_eq!(v, 0.0);
    assert!(dz.as_slice().iter().all(|&g| g == 0.0));
}

#[test]
fn covariance_examples() {
    let decorrelated = m(&[&[1.0, 1.0], &[1.0, -1.0], &[-1.0, 1.0], &[-1.0, -1.0]]);
    assert_eq!(covariance_penalty(&decorrelated).unwrap(), 0.0);
    let half = m(&[&[0.0, 0.0], &[1.0, 1.0]]);
    assert!((covariance_penalty(&half).unwrap() - 0.5).abs() < 1e-15);
    let dup = m(&[&[0.0, 0.0], &[libm::sqrt(2.0), libm::sqrt(2.0)]]);
    assert!((covariance_penalty(&dup).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn perc_loss_zero_spec_and_composition() {
    let (w, views) = rotation_views(32, 9);
    let mut rng = Rng::new(10);
    let enc = Encoder::random(Arch::Mlp1, 2, 6, 2, 1.0, &mut rng);
    let e = perc_loss(&enc, &views, &ObjectiveSpec::zero(), w.transforms()).unwrap();
    assert_eq!(e.total, 0.0);
    assert!(e.grad.iter().all(|&g| g == 0.0));

    let only_inv = ObjectiveSpec {
        beta_inv: 1.0,
        ..ObjectiveSpec::zero()
    };
    let e = perc_loss(&enc, &views, &only_inv, w.transforms()).unwrap();
    assert_eq!(e.total, invariance_loss(&enc, &views).unwrap());
}

#[test]
fn perc_loss_is_linear_in_weights() {
    let (w, views) = rotation_views(32, 11);
    let mut rng = Rng::new(12);
    let enc = Encoder::random(Arch::Mlp1, 2, 6, 2, 1.0, &mut rng);
    let spec = ObjectiveSpec {
        w_eq: 0.3,
        ..ObjectiveSpec::default()
    };
    let doubled = ObjectiveSpec {
        beta_inv: 2.0 * spec.beta_inv,
        ..spec.clone()
    };
    let a = perc_loss(&enc, &views, &spec, w.transforms()).unwrap();
    let b = perc_loss(&enc, &views, &doubled, w.transforms()).unwrap();
    assert!((b.components.inv - 2.0 * a.components.inv).abs() < 1e-12);
    assert!((b.total - a.total - a.components.inv).abs() < 1e-9);
    assert!((a.total - a.components.sum()).abs() < 1e-9);
}

#[test]
fn component_gradients_sum_to_total() {
    let (w, views) = rotation_views(40, 13);
    let mut rng = Rng::new(14);
    let enc = Encoder::random(Arch::Mlp1, 2, 8, 4, 1.0, &mut rng);
    let spec = ObjectiveSpec {
        w_eq: 0.5,
        ..ObjectiveSpec::default()
    };
    let total = perc_loss(&enc, &views, &spec, w.transforms()).unwrap().grad;
    let parts = perc_component_grads(&enc, &views, &spec, w.transforms()).unwrap();
    for (k, t) in total.iter().enumerate() {
        let s: f64 = parts.iter().map(|p| p[k]).sum();
        assert!((s - t).abs() <= 1e-9, "param {k}: {s} vs {t}");
    }
}

/// Analytic gradient vs central differences for one (encoder, loss, batch).
fn fd_check(enc: &Encoder, loss: &dyn CodeLoss, views: &ViewBatch) -> f64 {
    let (_, analytic) = param_gradient(enc, loss, &views.x, &views.x_plus, &views.deltas).unwrap();
    let fd = finite_diff(
        |p| {
            let mut e = enc.clone();
            e.set_params(p).unwrap();
            loss_value(&e, loss, &views.x, &views.x_plus, &views.deltas).unwrap()
        },
        &enc.params(),
        1e-5,
    );
    relative_l2_error(&analytic, &fd, 1e-8)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = Rng::new(2024);
    let world = make_rotation_world(0.5, 1.5, AngleSampler::Gaussian { sigma: 0.8 }).unwrap();
    let fam = world.transforms().clone();
    for config in 0..20 {
        let arch = if config % 2 == 0 { Arch::Mlp1 } else { Arch::Linear };
        let enc = Encoder::random(arch, 2, 5, 4, 1.3, &mut rng);
        let views = sample_views(&world, 12, &mut rng.split(config)).unwrap();
        let spec = ObjectiveSpec {
            w_eq: 0.7,
            gamma: 2.0,
            sim: if config % 3 == 0 {
                Similarity::Dot
            } else {
                Similarity::Cosine
            },
            symmetric_nce: config % 4 != 1,
            ..ObjectiveSpec::default()
        };
        let composite = PercLoss {
            spec: &spec,
            transforms: &fam,
        };
        let eq = Equivariance {
            rho: |d: f64, dz: usize| fam.rho(d, dz),
        };
        let nce = InfoNce {
            tau: 0.4,
            sim: spec.sim,
            symmetric: spec.symmetric_nce,
        };
        let losses: [(&str, &dyn CodeLoss); 6] = [
            ("inv", &Invariance),
            ("eq", &eq),
            ("nce", &nce),
            ("var", &VarianceFloor { gamma: 2.0 }),
            ("cov", &CovariancePenalty),
            ("perc", &composite),
        ];
        for (name, loss) in losses {
            let err = fd_check(&enc, loss, &views);
            assert!(err <= 1e-4, "config {config} {name}: rel err {err}");
        }
    }
}

#[test]
fn invariant_encoder_has_zero_invariance_gradient() {
    let (w, _) = rotation_views(1, 0);
    let id_world = w.with_transforms(TransformFamily::Identity);
    let views = sample_views(&id_world, 16, &mut Rng::new(15)).unwrap();
    let mut rng = Rng::new(16);
    let enc = Encoder::random(Arch::Mlp1, 2, 4, 2, 1.0, &mut rng);
    let (v, g) = param_gradient(&enc, &Invariance, &views.x, &views.x_plus, &views.deltas).unwrap();
    assert_eq!(v, 0.0);
    assert!(g.iter().all(|&x| x == 0.0));
    let (_, g) = param_gradient(&enc, &ConstantLoss(1.0), &views.x, &views.x_plus, &views.deltas).unwrap();
    assert!(g.iter().all(|&x| x == 0.0));
}

fn codes_strategy() -> impl Strategy<Value = (Matrix, Matrix)> {
    (2usize..8, 1usize..4).prop_flat_map(|(n, d)| {
        (
            proptest::collection::vec(-3.0f64..3.0, n * d),
            proptest::collection::vec(-3.0f64..3.0, n * d),
        )
            .prop_map(move |(a, b)| (Matrix::new(n, d, a).unwrap(), Matrix::new(n, d, b).unwrap()))
    })
}

proptest! {
    #[test]
    fn all_terms_are_non_negative((z, zp) in codes_strategy(), gamma in 0.0f64..3.0, tau in 0.05f64..2.0) {
        prop_assert!(terms::invariance(&z, &zp).unwrap().value >= 0.0);
        prop_assert!(terms::infonce(&z, &zp, tau, Similarity::Dot, true).unwrap().value >= 0.0);
        prop_assert!(terms::infonce(&z, &zp, tau, Similarity::Cosine, false).unwrap().value >= 0.0);
        prop_assert!(terms::variance_floor(&z, gamma).unwrap().0 >= 0.0);
        prop_assert!(terms::covariance_penalty(&z).unwrap().0 >= 0.0);
    }

    #[test]
    fn invariance_zero_iff_codes_coincide((z, zp) in codes_strategy()) {
        let v = terms::invariance(&z, &zp).unwrap().value;
        prop_assert_eq!(v == 0.0, z == zp);
        prop_assert_eq!(terms::invariance(&z, &z).unwrap().value, 0.0);
    }

    #[test]
    fn identity_rho_reduces_to_invariance((z, zp) in codes_strategy()) {
        let rhos: Vec<Matrix> = (0..z.rows()).map(|_| Matrix::identity(z.cols())).collect();
        let eq = terms::equivariance(&z, &zp, &rhos).unwrap().value;
        prop_assert_eq!(eq, terms::invariance(&z, &zp).unwrap().value);
    }

    #[test]
    fn perturbing_a_uniform_logit_changes_the_loss(
        n in 2usize..9, i in 0usize..9, j in 0usize..9, eps in 1e-3f64..1.0, neg in any::<bool>(), sym in any::<bool>()
    ) {
        let (i, j) = (i % n, j % n);
        let base = Matrix::from_fn(n, n, |_, _| 0.25);
        let mut s = base.clone();
        s[(i, j)] += if neg { -eps } else { eps };
        let (v0, _) = terms::infonce_logits(&base, sym).unwrap();
        let (v1, _) = terms::infonce_logits(&s, sym).unwrap();
        prop_assert!((v0 - libm::log(n as f64)).abs() < 1e-12);
        prop_assert!(v1 != v0);
    }
}

#[test]
fn perc_eval_matches_generic_backprop() {
    let (w, v) = rotation_views(32, 9);
    let enc = Encoder::random(Arch::Mlp1, 2, 5, 2, 1.0, &mut Rng::new(3));
    let spec = ObjectiveSpec {
        w_eq: 0.3,
        ..ObjectiveSpec::default()
    };
    let e = perc_loss(&enc, &v, &spec, w.transforms()).unwrap();
    let loss = PercLoss {
        spec: &spec,
        transforms: w.transforms(),
    };
    let (total, grad) = param_gradient(&enc, &loss, &v.x, &v.x_plus, &v.deltas).unwrap();
    assert_eq!(e.total, total);
    assert_eq!(e.grad, grad);
    assert_eq!(e.total, e.components.sum());
}
