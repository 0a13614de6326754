use std::collections::BTreeMap;

use pel::formats::{read_embeddings, read_params, write_embeddings, write_params, Embeddings, Provenance};
use pel::report::{MetricEntry, MetricReport, Status, Value};
use pel_core::{Arch, Encoder, Matrix, Rng};
use proptest::prelude::*;

fn prov() -> Provenance {
    Provenance {
        config_hash: "ab".repeat(32),
        seed: 11,
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn params_round_trip_bitwise() {
    for (arch, hidden) in [(Arch::Linear, 0), (Arch::Mlp1, 7)] {
        let enc = Encoder::random(arch, 3, hidden, 4, 1.3, &mut Rng::new(5));
        let text = write_params(&enc, &prov());
        assert!(text.contains("config_hash="));
        let back = read_params(&text).unwrap();
        assert_eq!(back.arch(), arch);
        assert_eq!(bits(&back.params()), bits(&enc.params()));
    }
}

#[test]
fn params_reject_wrong_count() {
    let enc = Encoder::random(Arch::Linear, 2, 0, 2, 1.0, &mut Rng::new(1));
    let mut text = write_params(&enc, &prov());
    text.push_str("0.5\n");
    assert!(read_params(&text).is_err());
}

fn embeddings(n: usize, vals: &[f64]) -> Embeddings {
    Embeddings {
        z: Matrix::from_fn(n, 2, |i, j| vals[(2 * i + j) % vals.len()]),
        x: Some(Matrix::from_fn(n, 2, |i, j| vals[(i + 3 * j + 1) % vals.len()])),
        t: Some(Matrix::from_fn(n, 1, |i, _| i as f64 * 0.25)),
        v: Some((0..n).map(|i| i % 2).collect()),
        y: Some((0..n).map(|i| i % 3).collect()),
        alpha: Some((0..n).map(|i| vals[i % vals.len()].abs()).collect()),
    }
}

proptest! {
    #[test]
    fn embeddings_round_trip_bitwise(n in 1usize..20, vals in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let e = embeddings(n, &vals);
        let back = read_embeddings(&write_embeddings(&e, &prov())).unwrap();
        prop_assert_eq!(bits(back.z.as_slice()), bits(e.z.as_slice()));
        prop_assert_eq!(back, e);
    }

    #[test]
    fn report_values_survive_json(xs in prop::collection::vec(prop_oneof![
        any::<f64>(),
        Just(f64::INFINITY),
        Just(f64::NEG_INFINITY),
        Just(f64::NAN),
    ], 1..12)) {
        let mut entry = MetricEntry::ok();
        for (i, &x) in xs.iter().enumerate() {
            entry = entry.value(&format!("v{i}"), x);
        }
        let mut report = MetricReport::new("t", "h", 1, &[("seed", "1")]);
        report.metrics.insert("m".into(), entry);
        let back = MetricReport::from_json(&report.to_json()).unwrap();
        let m = back.metric("m").unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let got = m.get(&format!("v{i}")).unwrap();
            if x.is_nan() {
                prop_assert!(got.is_nan());
            } else {
                prop_assert_eq!(got.to_bits(), (x + 0.0).to_bits());
            }
        }
    }
}

#[test]
fn sentinels_are_strings_in_json() {
    let entry = MetricEntry::ok()
        .value("a", f64::INFINITY)
        .value("b", f64::NAN)
        .value("c", -f64::INFINITY);
    let mut report = MetricReport::new("t", "h", 1, &[]);
    report.metrics.insert("m".into(), entry);
    let json = report.to_json();
    for s in ["\"+inf\"", "\"nan\"", "\"-inf\""] {
        assert!(json.contains(s), "{s} missing");
    }
    assert_eq!(Value::real(-0.0), Value::Num(0.0));
}

#[test]
fn not_applicable_round_trips() {
    let mut report = MetricReport::new("t", "h", 1, &[]);
    report
        .metrics
        .insert("s".into(), MetricEntry::not_applicable("needs t"));
    let back = MetricReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back.metric("s").unwrap().status, Status::NotApplicable);
    assert!(report.to_json().contains("\"not_applicable\""));
    assert_eq!(back, report);
}

#[test]
fn malformed_embeddings_point_at_row_and_column() {
    let cases: BTreeMap<&str, (usize, usize)> = [
        ("z_0,z_1,v\n1,2,0\n3,oops,1\n", (3, 2)),
        ("z_0,v\n1,0\n2\n", (3, 0)),
        ("z_0,w\n1,0\n", (1, 2)),
        ("z_0,z_0\n1,2\n", (1, 2)),
        ("z_0,v\n1,-1\n", (2, 2)),
        ("z_0,v\ninf,1\n", (2, 1)),
        ("# only a comment\nz_0,v\n", (3, 0)),
        ("v\n1\n", (1, 0)),
        ("z_0,z_2\n1,2\n", (1, 0)),
    ]
    .into_iter()
    .collect();
    for (text, (row, col)) in cases {
        let err = read_embeddings(text).unwrap_err();
        assert_eq!((err.row, err.column), (row, col), "{text:?}: {err}");
    }
}

#[test]
fn embeddings_need_only_z() {
    let e = read_embeddings("# c\nz_0,z_1\n1,2\n3,4\n").unwrap();
    assert_eq!(e.rows(), 2);
    assert!(e.t.is_none() && e.v.is_none() && e.x.is_none());
}
