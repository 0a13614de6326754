//! Configurations shipped with the binary. `--config NAME` resolves to one
//! of these when no file of that name exists.

pub const BUNDLED: &[(&str, &str)] = &[
    ("rotation_pel", include_str!("../configs/rotation_pel.conf")),
    (
        "bernoulli_counterexample",
        include_str!("../configs/bernoulli_counterexample.conf"),
    ),
    (
        "orthogonality_rotation",
        include_str!("../configs/orthogonality_rotation.conf"),
    ),
    (
        "over_invariance_bernoulli",
        include_str!("../configs/over_invariance_bernoulli.conf"),
    ),
    ("merged_orbits", include_str!("../configs/merged_orbits.conf")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    let name = name.strip_prefix("bundled:").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
