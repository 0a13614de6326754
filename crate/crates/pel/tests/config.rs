use pel::bundled::BUNDLED;
use pel::config::{schema_text, MetricKind, SCHEMA};
use pel::ExperimentConfig;

#[test]
fn empty_text_gives_defaults() {
    let cfg = ExperimentConfig::parse("").unwrap();
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.name, "experiment");
    for (k, v) in cfg.echo() {
        let key = SCHEMA.iter().find(|s| s.name == k).unwrap();
        assert_eq!(v, key.default, "{k}");
    }
}

#[test]
fn comments_and_blank_lines_are_skipped() {
    let text = "# header\n\n  seed = 7  \n# trailing\n";
    assert_eq!(ExperimentConfig::parse(text).unwrap().seed, 7);
}

#[test]
fn unknown_key_names_its_line() {
    let err = ExperimentConfig::parse("seed = 1\n\ntrain.stepz = 5\n").unwrap_err();
    assert_eq!(err.line, 3);
    assert!(err.message.contains("train.stepz"), "{}", err.message);
}

#[test]
fn bad_values_name_their_line() {
    for (text, line) in [
        ("seed = -1\n", 1),
        ("name = a\ntrain.lr = fast\n", 2),
        ("world = torus\n", 1),
        ("metrics.enabled = curve, wobble\n", 1),
        ("a line without equals\n", 1),
    ] {
        let err = ExperimentConfig::parse(text).unwrap_err();
        assert_eq!(err.line, line, "{text:?}: {err}");
    }
}

#[test]
fn duplicate_key_is_rejected() {
    let err = ExperimentConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
    assert_eq!(err.line, 2);
}

#[test]
fn hash_is_stable_and_tracks_values() {
    let a = ExperimentConfig::parse("seed = 3\ntrain.steps = 10\n").unwrap();
    let b = ExperimentConfig::parse("train.steps = 10\n# reordered\nseed = 3\n").unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    let c = ExperimentConfig::parse("seed = 3\ntrain.steps = 11\n").unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn seed_override_changes_hash_output_dir_does_not() {
    let base = ExperimentConfig::parse("seed = 3\n").unwrap();
    let reseeded = base.clone().with_seed(4);
    assert_eq!(reseeded.seed, 4);
    assert_eq!(reseeded.train.seed, 4);
    assert_ne!(base.hash(), reseeded.hash());
    assert_eq!(reseeded, ExperimentConfig::parse("seed = 4\n").unwrap());
    let moved = base.clone().with_output_dir("elsewhere");
    assert_eq!(moved.output_dir, "elsewhere");
    assert_eq!(base.hash(), moved.hash());
}

#[test]
fn schema_lists_every_key_once() {
    let text = schema_text();
    for k in SCHEMA {
        let hits = text
            .lines()
            .filter(|l| l.starts_with(&format!("{} = ", k.name)))
            .count();
        assert_eq!(hits, 1, "{}", k.name);
    }
}

#[test]
fn bundled_configs_parse() {
    for (name, text) in BUNDLED {
        let cfg = ExperimentConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cfg.name, *name);
        cfg.make_world().unwrap();
    }
}

#[test]
fn metric_list_defaults_to_every_metric_and_accepts_none() {
    let all = ExperimentConfig::parse("").unwrap();
    assert_eq!(all.metrics.enabled, MetricKind::ALL.to_vec());
    let none = ExperimentConfig::parse("metrics.enabled = none\n").unwrap();
    assert!(none.metrics.enabled.is_empty());
}
