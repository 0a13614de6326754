//! The certification suite: every enabled metric evaluated on a frozen
//! encoder or on externally supplied codes.
//!
//! Metrics run concurrently on a rayon pool. Each metric draws from its own
//! stream split off the seed, so results do not depend on scheduling.

use std::collections::BTreeMap;

use pel_core::metrics::{
    default_grid, disentanglement_nmi, fisher_trace, geometry_diagnostics, invariance_curve, leakage_probe,
    normalized_mi, probe_accuracy_curve, probe_data_efficiency, separability, smoothness, sufficiency_exact,
    sufficiency_surrogate, Curve, PROBE_TEST_FRACTION,
};
use pel_core::objectives::invariance_loss;
use pel_core::worlds::{sample_batch, sample_views, Batch};
use pel_core::{Encoder, Error, Matrix, Representation, Rng, World};
use rayon::prelude::*;

use crate::config::{MetricKind, MetricsConfig};
use crate::formats::Embeddings;
use crate::report::MetricEntry;

/// Worker pool honouring `PEL_THREADS`.
pub fn thread_pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("PEL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}

const METRIC_STREAM: u64 = 0x6d65_7472_6963;
pub const CURVE_STREAM: u64 = 0x6375_7276;
const BATCH_STREAM: u64 = 0x6261_7463;

const EUCLIDEAN_NOTE: &str = "Euclidean functional of the codes; not invariant under reparameterisation";

fn metric_rng(seed: u64, kind: MetricKind) -> Rng {
    let idx = MetricKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64;
    Rng::new(seed).split(METRIC_STREAM + idx)
}

/// Maps an estimator error to a report entry: inapplicable and undefined
/// quantities are `not_applicable`, everything else `failed`.
fn entry_from_error(e: &Error) -> MetricEntry {
    match e {
        Error::NotApplicable(m) | Error::Undefined(m) => MetricEntry::not_applicable(m.clone()),
        other => MetricEntry::failed(other.to_string()),
    }
}

fn settle(r: pel_core::Result<MetricEntry>) -> MetricEntry {
    r.unwrap_or_else(|e| entry_from_error(&e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutput {
    pub metrics: BTreeMap<String, MetricEntry>,
    pub curve: Option<Curve>,
}

/// Invariance curve used both before and after training: same grid, same
/// inputs.
pub fn curve_for(rep: &dyn Representation, world: &World, cfg: &MetricsConfig, seed: u64) -> pel_core::Result<Curve> {
    invariance_curve(
        rep,
        world,
        &default_grid(cfg.curve_points),
        cfg.curve_n,
        &mut Rng::new(seed).split(CURVE_STREAM),
    )
}

fn curve_entry(c: &Curve, cfg: &MetricsConfig) -> MetricEntry {
    MetricEntry::ok()
        .value("auc", c.auc)
        .value("d_at_pi", *c.values.last().unwrap_or(&0.0))
        .meta("grid_points", cfg.curve_points)
        .meta("grid_max", std::f64::consts::PI)
        .meta("n", cfg.curve_n)
        .note(EUCLIDEAN_NOTE)
}

struct Shared<'a> {
    enc: &'a Encoder,
    world: &'a World,
    cfg: &'a MetricsConfig,
    gamma: f64,
    epsilon_inv: f64,
    seed: u64,
    batch: Batch,
    z: Matrix,
}

fn encoder_metric(s: &Shared<'_>, kind: MetricKind) -> (MetricEntry, Option<Curve>) {
    let mut rng = metric_rng(s.seed, kind);
    let n = s.cfg.n;
    let entry = match kind {
        MetricKind::Curve => match curve_for(s.enc, s.world, s.cfg, s.seed) {
            Ok(c) => return (curve_entry(&c, s.cfg), Some(c)),
            Err(e) => entry_from_error(&e),
        },
        MetricKind::Leakage => settle(leakage_probe(&s.z, &s.batch.v, &mut rng).map(|r| leakage_entry(&r, n))),
        MetricKind::Nmi => settle(nmi_entry(&s.z, &s.batch.v, s.cfg.bins)),
        MetricKind::Smoothness => settle(smoothness(s.enc, s.world, n, &mut rng).map(|v| {
            MetricEntry::ok()
                .value("jacobian_sq_frobenius", v)
                .meta("n", n)
                .note(EUCLIDEAN_NOTE)
        })),
        MetricKind::Geometry => settle(geometry_entry(&s.z, s.gamma).and_then(|e| {
            let views = sample_views(s.world, n, &mut rng)?;
            Ok(e.value("invariance_loss", invariance_loss(s.enc, &views)?)
                .meta("epsilon_inv_target", s.epsilon_inv))
        })),
        MetricKind::Disentanglement => settle(disentanglement_entry(&s.z, &s.batch.factors, s.cfg.bins)),
        MetricKind::Fisher => settle(fisher_trace(s.enc, s.world, n, &mut rng).map(|v| {
            MetricEntry::ok()
                .value("trace", v)
                .meta("n", n)
                .meta("step", pel_core::metrics::FISHER_STEP)
                .note(EUCLIDEAN_NOTE)
        })),
        MetricKind::Sufficiency => settle(if s.world.support().is_some() {
            sufficiency_exact(s.enc, s.world).map(|v| {
                MetricEntry::ok()
                    .value("conditional_mi_bits", v)
                    .meta("estimator", "enumeration")
            })
        } else {
            sufficiency_surrogate(&s.z, &s.batch.views.x, &s.batch.t).map(|v| {
                MetricEntry::ok()
                    .value("conditional_mi_bits", v)
                    .meta("estimator", "plug_in")
                    .meta("n", n)
            })
        }),
        MetricKind::Separability => settle(separability_entry(&s.z, &s.batch.y)),
        MetricKind::Probe => settle(
            probe_data_efficiency(
                s.enc,
                s.world,
                &s.cfg.probe_budgets,
                s.cfg.probe_pool,
                s.cfg.probe_test,
                &mut rng,
            )
            .map(|acc| {
                probe_entry(&s.cfg.probe_budgets, &acc)
                    .meta("pool", s.cfg.probe_pool)
                    .meta("n_test", s.cfg.probe_test)
            }),
        ),
    };
    (entry, None)
}

/// Runs every enabled metric on a frozen encoder.
pub fn run_encoder_suite(
    enc: &Encoder,
    world: &World,
    cfg: &MetricsConfig,
    gamma: f64,
    epsilon_inv: f64,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> pel_core::Result<SuiteOutput> {
    let batch = sample_batch(world, cfg.n, &mut Rng::new(seed).split(BATCH_STREAM))?;
    let z = enc.encode_batch(&batch.views.x)?;
    let shared = Shared {
        enc,
        world,
        cfg,
        gamma,
        epsilon_inv,
        seed,
        batch,
        z,
    };
    let results: Vec<(MetricKind, (MetricEntry, Option<Curve>))> = pool.install(|| {
        cfg.enabled
            .par_iter()
            .map(|&k| (k, encoder_metric(&shared, k)))
            .collect()
    });
    let mut out = SuiteOutput {
        metrics: BTreeMap::new(),
        curve: None,
    };
    for (k, (entry, curve)) in results {
        out.metrics.insert(k.name().into(), entry);
        if curve.is_some() {
            out.curve = curve;
        }
    }
    Ok(out)
}

fn leakage_entry(r: &pel_core::metrics::LeakageReport, n: usize) -> MetricEntry {
    MetricEntry::ok()
        .value("auc", r.auc)
        .value("leakage", r.leakage)
        .value("error_rate", r.error_rate)
        .meta("n", n)
        .meta("n_train", r.n_train)
        .meta("n_test", r.n_test)
        .meta("probe", "linear softmax, one-vs-rest macro AUC")
        .note("leakage = |auc - 0.5| * 2; raw AUC kept alongside")
}

fn nmi_entry(z: &Matrix, v: &[usize], bins: usize) -> pel_core::Result<MetricEntry> {
    let m = normalized_mi(z, v, bins)?;
    Ok(MetricEntry::ok()
        .value("normalized_mi", m)
        .meta("bins", bins)
        .meta("n", z.rows()))
}

fn geometry_entry(z: &Matrix, gamma: f64) -> pel_core::Result<MetricEntry> {
    let g = geometry_diagnostics(z, gamma)?;
    let mut e = MetricEntry::ok()
        .value("var_floor_violation", g.var_floor_violation)
        .value("cov_offdiag", g.cov_offdiag)
        .value(
            "min_dim_variance",
            g.per_dim_variance.iter().copied().fold(f64::INFINITY, f64::min),
        )
        .meta("gamma", gamma)
        .meta("n", z.rows());
    for (j, v) in g.per_dim_variance.iter().enumerate() {
        e = e.value(&format!("variance_{j}"), *v);
    }
    Ok(e)
}

fn disentanglement_entry(z: &Matrix, factors: &Matrix, bins: usize) -> pel_core::Result<MetricEntry> {
    let d = disentanglement_nmi(z, factors, bins)?;
    let mut e = MetricEntry::ok()
        .value("score", d.score)
        .meta("bins", bins)
        .meta("n", z.rows());
    for (k, best) in d.best_nmi.iter().enumerate() {
        if let Some(b) = best {
            e = e.value(&format!("best_nmi_factor_{k}"), *b);
        }
    }
    for k in d.skipped {
        e = e.note(format!("factor {k} is constant and was skipped"));
    }
    Ok(e)
}

fn separability_entry(z: &Matrix, y: &[usize]) -> pel_core::Result<MetricEntry> {
    let classes: std::collections::BTreeSet<usize> = y.iter().copied().collect();
    if classes.len() != 2 {
        return Err(Error::NotApplicable(format!(
            "separability compares two label groups, found {}",
            classes.len()
        )));
    }
    let first = *classes.iter().next().unwrap_or(&0);
    let (a, b): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| y[i] == first);
    let s = separability(&z.select_rows(&a), &z.select_rows(&b))?;
    Ok(MetricEntry::ok()
        .value("fisher_ratio", s.fisher_ratio)
        .value("radial_fisher", s.radial_fisher)
        .value("mmd2", s.mmd2)
        .meta("bandwidth", s.bandwidth)
        .meta("n", z.rows())
        .note("radial_fisher is the Fisher ratio of the code norm alone (an interpretation)"))
}

fn probe_entry(budgets: &[usize], acc: &[f64]) -> MetricEntry {
    let mut e = MetricEntry::ok().meta("role", "secondary");
    for (b, a) in budgets.iter().zip(acc) {
        e = e.value(&format!("accuracy_at_{b}"), *a);
    }
    e
}

/// Metrics computable from an embeddings file. `nuisance` names the class
/// column (`v` or `y`) used for leakage and normalised MI.
pub fn run_embedding_suite(
    e: &Embeddings,
    nuisance: &str,
    cfg: &MetricsConfig,
    gamma: f64,
    seed: u64,
    pool: &rayon::ThreadPool,
) -> SuiteOutput {
    let nuis = match nuisance {
        "y" => e.y.as_ref(),
        _ => e.v.as_ref(),
    };
    let results: Vec<(MetricKind, MetricEntry, Option<Curve>)> = pool.install(|| {
        cfg.enabled
            .par_iter()
            .map(|&k| {
                let (entry, curve) = embedding_metric(e, nuis, nuisance, k, cfg, gamma, &mut metric_rng(seed, k));
                (k, entry, curve)
            })
            .collect()
    });
    let mut out = SuiteOutput {
        metrics: BTreeMap::new(),
        curve: None,
    };
    for (k, entry, curve) in results {
        out.metrics.insert(k.name().into(), entry);
        if curve.is_some() {
            out.curve = curve;
        }
    }
    out
}

fn missing(cols: &str, metric: &str) -> MetricEntry {
    MetricEntry::not_applicable(format!("{metric} needs column(s) {cols}"))
}

fn embedding_metric(
    e: &Embeddings,
    nuis: Option<&Vec<usize>>,
    nuis_name: &str,
    kind: MetricKind,
    cfg: &MetricsConfig,
    gamma: f64,
    rng: &mut Rng,
) -> (MetricEntry, Option<Curve>) {
    let n = e.rows();
    let entry = match kind {
        MetricKind::Curve => match (&e.t, &e.alpha) {
            (Some(t), Some(alpha)) => match curve_from_rows(&e.z, t, alpha) {
                Ok(c) => {
                    let entry = MetricEntry::ok()
                        .value("auc", c.auc)
                        .meta("grid_points", c.alphas.len())
                        .meta("n", n)
                        .note("rows sharing t form an orbit; the alpha = 0 row is its anchor")
                        .note(EUCLIDEAN_NOTE);
                    return (entry, Some(c));
                }
                Err(err) => entry_from_error(&err),
            },
            _ => missing("t, alpha", "invariance curve"),
        },
        MetricKind::Leakage => match nuis {
            Some(v) => settle(leakage_probe(&e.z, v, rng).map(|r| leakage_entry(&r, n).meta("column", nuis_name))),
            None => missing(nuis_name, "leakage probe"),
        },
        MetricKind::Nmi => match nuis {
            Some(v) => settle(nmi_entry(&e.z, v, cfg.bins).map(|x| x.meta("column", nuis_name))),
            None => missing(nuis_name, "normalized MI"),
        },
        MetricKind::Smoothness | MetricKind::Fisher => {
            MetricEntry::not_applicable("needs the encoder itself, not only its codes")
        }
        MetricKind::Geometry => settle(geometry_entry(&e.z, gamma)),
        MetricKind::Disentanglement => {
            let mut cols: Vec<Vec<f64>> = Vec::new();
            if let Some(t) = &e.t {
                cols.extend((0..t.cols()).map(|j| t.column(j)));
            }
            if let Some(v) = &e.v {
                cols.push(v.iter().map(|&c| c as f64).collect());
            }
            if cols.is_empty() {
                missing("t or v", "disentanglement")
            } else {
                let factors = Matrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
                settle(disentanglement_entry(&e.z, &factors, cfg.bins))
            }
        }
        MetricKind::Sufficiency => match (&e.x, &e.t) {
            (Some(x), Some(t)) => settle(sufficiency_surrogate(&e.z, x, t).map(|v| {
                MetricEntry::ok()
                    .value("conditional_mi_bits", v)
                    .meta("estimator", "plug_in")
                    .meta("n", n)
            })),
            (None, _) if e.t.is_none() => missing("t", "sufficiency"),
            _ => missing("x_*, t", "sufficiency"),
        },
        MetricKind::Separability => match &e.y {
            Some(y) => settle(separability_entry(&e.z, y)),
            None => missing("y", "separability"),
        },
        MetricKind::Probe => match &e.y {
            Some(y) => settle(embedding_probe(e, y, cfg, rng)),
            None => missing("y", "probe data efficiency"),
        },
    };
    (entry, None)
}

fn embedding_probe(e: &Embeddings, y: &[usize], cfg: &MetricsConfig, rng: &mut Rng) -> pel_core::Result<MetricEntry> {
    let n = e.rows();
    let perm = rng.permutation(n);
    let n_test = (PROBE_TEST_FRACTION * n as f64).ceil() as usize;
    let (test, train) = perm.split_at(n_test);
    let budgets: Vec<usize> = cfg
        .probe_budgets
        .iter()
        .copied()
        .filter(|&b| b <= train.len())
        .collect();
    if budgets.is_empty() {
        return Err(Error::NotApplicable(format!(
            "no probe budget fits the {} training rows",
            train.len()
        )));
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let ytr: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let yte: Vec<usize> = test.iter().map(|&i| y[i]).collect();
    let acc = probe_accuracy_curve(
        &e.z.select_rows(train),
        &ytr,
        &e.z.select_rows(test),
        &yte,
        classes.max(2),
        &budgets,
        rng,
    )?;
    let mut entry = probe_entry(&budgets, &acc).meta("n_test", n_test);
    if budgets.len() < cfg.probe_budgets.len() {
        entry = entry.note("budgets larger than the training split were skipped");
    }
    Ok(entry)
}

/// `D(α)` from rows grouped into orbits by `t`: the mean squared distance
/// between each row and the `α = 0` row of its orbit, per distinct `α`.
pub fn curve_from_rows(z: &Matrix, t: &Matrix, alpha: &[f64]) -> pel_core::Result<Curve> {
    let key = |i: usize| t.row(i).iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let mut anchors: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    for (i, &a) in alpha.iter().enumerate() {
        if a == 0.0 {
            anchors.entry(key(i)).or_insert(i);
        }
    }
    if anchors.is_empty() {
        return Err(Error::NotApplicable("no row has alpha = 0 to anchor an orbit".into()));
    }
    let mut sums: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for (i, &a) in alpha.iter().enumerate() {
        let a = if a == 0.0 { 0.0 } else { a };
        let Some(&anchor) = anchors.get(&key(i)) else { continue };
        let d = pel_core::numerics::sq_dist(z.row(i), z.row(anchor));
        let k = ordered_key(a);
        let e = sums.entry(k).or_insert((a, 0.0, 0));
        e.1 += d;
        e.2 += 1;
    }
    let (alphas, values): (Vec<f64>, Vec<f64>) = sums.values().map(|(a, s, c)| (*a, s / *c as f64)).unzip();
    if alphas.len() < 2 {
        return Err(Error::NotApplicable("need at least two distinct alpha values".into()));
    }
    pel_core::metrics::Curve::new(alphas, values)
}

/// Maps an `f64` to a `u64` whose unsigned order matches numeric order.
fn ordered_key(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}
