//! End-to-end commands: train, certify, verify, and write every output.

use std::fs;
use std::path::{Path, PathBuf};

use pel_core::metrics::Curve;
use pel_core::objectives::{invariance_loss, Components};
use pel_core::theory::{task_risk, Loss};
use pel_core::trainer::{head_accuracy, train_head, train_perception, TrainLog};
use pel_core::worlds::{sample_batch, sample_views};
use pel_core::{Encoder, Representation, Rng, World};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, MetricKind, TheoryCheck};
use crate::error::{PelError, Result};
use crate::formats::{self, Embeddings, Provenance};
use crate::report::{CurveRecord, MetricEntry, MetricReport, SnapshotRef, Status};
use crate::suite::{self, curve_for};
use crate::svg::{line_chart, Series};
use crate::verify;

const INIT_STREAM: u64 = 0x696e_6974;
const EXPORT_STREAM: u64 = 0x6578_706f;
const SNAPSHOT_STREAM: u64 = 0x736e_6170;
const HEAD_TEST_STREAM: u64 = 0x6865_7374;
/// Rows written to `embeddings.csv` and `batch.csv`.
pub const EXPORT_ROWS: usize = 1000;

/// Result of a command: the report, the files written, and whether every
/// asserted outcome held.
#[derive(Debug)]
pub struct Outcome {
    pub report: MetricReport,
    pub files: Vec<PathBuf>,
    pub success: bool,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| PelError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| PelError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| PelError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

pub fn provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance {
        config_hash: cfg.hash(),
        seed: cfg.seed,
    }
}

fn new_report(cfg: &ExperimentConfig) -> MetricReport {
    MetricReport::new(&cfg.name, &cfg.hash(), cfg.seed, &cfg.echo())
}

pub fn initial_encoder(cfg: &ExperimentConfig, world: &World) -> Encoder {
    let e = &cfg.encoder;
    Encoder::random(
        e.arch,
        world.d_x(),
        e.hidden,
        e.dim,
        e.init_scale,
        &mut Rng::new(cfg.seed).split(INIT_STREAM),
    )
}

fn snapshot(cfg: &ExperimentConfig, world: &World, step: usize, enc: &Encoder) -> pel_core::Result<MetricReport> {
    let mut r = new_report(cfg);
    let views = sample_views(world, 512, &mut Rng::new(cfg.seed).split(SNAPSHOT_STREAM))?;
    let z = enc.encode_batch(&views.x)?;
    let var = pel_core::objectives::terms::per_dim_variance(&z)?;
    let mut e = MetricEntry::ok()
        .value("step", step)
        .value("invariance_loss", invariance_loss(enc, &views)?)
        .value("min_dim_variance", var.iter().copied().fold(f64::INFINITY, f64::min))
        .meta("n", 512usize);
    if cfg.metrics.has(MetricKind::Curve) && world.transforms().is_smooth() {
        e = e.value("curve_auc", curve_for(enc, world, &cfg.metrics, cfg.seed)?.auc);
    }
    r.metrics.insert("snapshot".into(), e);
    Ok(r)
}

fn training_entry(cfg: &ExperimentConfig, log: &TrainLog) -> MetricEntry {
    let t = &cfg.train;
    let mut e = MetricEntry::ok()
        .meta("steps", t.steps)
        .meta("batch_size", t.batch_size)
        .meta("lr", t.lr)
        .meta("optimizer", t.optimizer.name())
        .meta(
            "sigma_aug",
            t.sigma_aug
                .map_or(crate::report::Value::text("none"), crate::report::Value::real),
        );
    if let crate::report::Value::Text(_) = e.meta["sigma_aug"] {
        e = e.note("training views use the world's own transform sampler");
    }
    if let pel_core::trainer::Optimizer::Adam { beta1, beta2, eps } = t.optimizer {
        e = e
            .meta("adam_beta1", beta1)
            .meta("adam_beta2", beta2)
            .meta("adam_eps", eps);
    }
    if let (Some(first), Some(last)) = (log.steps.first(), log.steps.last()) {
        e = e.value("initial_total", first.total).value("final_total", last.total);
        for (name, (a, b)) in Components::NAMES
            .iter()
            .zip(first.components.as_array().into_iter().zip(last.components.as_array()))
        {
            e = e
                .value(&format!("initial_{name}"), a)
                .value(&format!("final_{name}"), b);
        }
    }
    e
}

fn curve_svg(before: Option<&Curve>, after: Option<&Curve>, after_label: &str, prov: &Provenance) -> String {
    let mut series = Vec::new();
    if let Some(c) = before {
        series.push(Series {
            label: "before training",
            x: &c.alphas,
            y: &c.values,
        });
    }
    if let Some(c) = after {
        series.push(Series {
            label: after_label,
            x: &c.alphas,
            y: &c.values,
        });
    }
    line_chart(
        "Invariance curve",
        "alpha (rad)",
        "D(alpha)",
        &series,
        prov.line().trim(),
    )
}

fn loss_svg(log: &TrainLog, prov: &Provenance) -> String {
    let steps: Vec<f64> = log.steps.iter().map(|r| r.step as f64).collect();
    let total: Vec<f64> = log.steps.iter().map(|r| r.total).collect();
    let inv: Vec<f64> = log.steps.iter().map(|r| r.components.inv).collect();
    line_chart(
        "Perception loss",
        "step",
        "loss",
        &[
            Series {
                label: "total",
                x: &steps,
                y: &total,
            },
            Series {
                label: "invariance",
                x: &steps,
                y: &inv,
            },
        ],
        prov.line().trim(),
    )
}

/// Sample of codes with their side columns, as consumed by `certify`.
pub fn export_embeddings(enc: &Encoder, world: &World, seed: u64) -> pel_core::Result<(Embeddings, pel_core::Batch)> {
    let b = sample_batch(world, EXPORT_ROWS, &mut Rng::new(seed).split(EXPORT_STREAM))?;
    let e = Embeddings {
        z: enc.encode_batch(&b.views.x)?,
        x: Some(b.views.x.clone()),
        t: Some(b.t.clone()),
        v: Some(b.v.clone()),
        y: Some(b.y.clone()),
        alpha: None,
    };
    Ok((e, b))
}

fn add_theory(report: &mut MetricReport, cfg: &ExperimentConfig, world: &World, enc: &Encoder) -> Result<()> {
    for check in &cfg.theory.checks {
        match check {
            TheoryCheck::RiskTable => {
                let (entry, v) = verify::risk_table(world, Some(enc), &cfg.theory.resolution)?;
                report.metrics.insert("bayes_risk".into(), entry);
                report.theory.push(v);
            }
            TheoryCheck::Audit => {
                report
                    .theory
                    .extend(verify::audit(world, cfg.theory.loss, cfg.metrics.n, cfg.seed)?);
            }
            TheoryCheck::TwoStage => report.theory.push(verify::two_stage(world, enc, cfg)?),
            TheoryCheck::Orthogonality => match verify::orthogonality_for_world(world, cfg)? {
                Some(v) => report.theory.push(v),
                None => report.warnings.push(format!(
                    "no orthogonality family is defined for the {} world",
                    world.name()
                )),
            },
        }
    }
    if let Some(s) = cfg.theory.scenario {
        let (verdicts, entries) = verify::scenario(cfg, s)?;
        report.theory.extend(verdicts);
        for (k, e) in entries {
            report.metrics.entry(k).or_insert(e);
        }
    }
    Ok(())
}

fn finish(report: MetricReport, mut w: Writer, success_extra: bool) -> Result<Outcome> {
    w.write("report.json", &report.to_json())?;
    let failed = report.metrics.values().any(|m| m.status == Status::Failed);
    let success = success_extra && !failed && report.verdicts_as_expected();
    Ok(Outcome {
        report,
        files: w.files,
        success,
    })
}

/// `run`: train, certify, check the theory, write everything under `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path, progress: &dyn Fn(&str)) -> Result<Outcome> {
    let mut w = Writer::new(out)?;
    let prov = provenance(cfg);
    let world = cfg.make_world()?;
    let pool = suite::thread_pool();
    let mut report = new_report(cfg);
    let init = initial_encoder(cfg, &world);

    let curve_wanted = cfg.metrics.has(MetricKind::Curve) && world.transforms().is_smooth();
    let before = if curve_wanted {
        Some(curve_for(&init, &world, &cfg.metrics, cfg.seed)?)
    } else {
        None
    };

    let (enc, log) = if cfg.train_enabled {
        progress(&format!("training {} steps on {}", cfg.train.steps, world.name()));
        let mut snaps: Vec<(usize, MetricReport)> = Vec::new();
        let every = cfg.train.eval_every;
        let mut observe = |step: usize, e: &Encoder| -> pel_core::Result<()> {
            if every > 0 {
                snaps.push((step, snapshot(cfg, &world, step, e)?));
            }
            Ok(())
        };
        let (enc, log) = train_perception(&world, &init, &cfg.train, &mut observe)?;
        for (step, r) in snaps {
            let rel = format!("snapshots/step_{step:06}.json");
            w.write(&rel, &r.to_json())?;
            report.snapshots.push(SnapshotRef { step, path: rel });
        }
        w.write("trainlog.csv", &formats::write_train_log(&log, &prov))?;
        w.write("loss.svg", &loss_svg(&log, &prov))?;
        report.metrics.insert("training".into(), training_entry(cfg, &log));
        (enc, log)
    } else {
        (init.clone(), TrainLog::default())
    };
    debug_assert!(cfg.train_enabled || log.steps.is_empty());

    progress("running the metric suite");
    let out_suite = suite::run_encoder_suite(
        &enc,
        &world,
        &cfg.metrics,
        cfg.train.objective.gamma,
        cfg.train.objective.epsilon_inv,
        cfg.seed,
        &pool,
    )?;
    report.metrics.extend(out_suite.metrics);
    if let Some(b) = &before {
        w.write("curve_before.csv", &formats::write_curve(b, &prov))?;
        report
            .curves
            .insert("invariance_before".into(), CurveRecord::new(b, "curve_before.csv"));
    }
    if let Some(a) = &out_suite.curve {
        w.write("curve_after.csv", &formats::write_curve(a, &prov))?;
        report
            .curves
            .insert("invariance_after".into(), CurveRecord::new(a, "curve_after.csv"));
        if let (Some(b), Some(m)) = (&before, report.metrics.get_mut("curve")) {
            m.values.insert("auc_before".into(), b.auc.into());
            m.values.insert("auc_ratio".into(), (a.auc / b.auc).into());
        }
    }
    if before.is_some() || out_suite.curve.is_some() {
        w.write(
            "invariance_curve.svg",
            &curve_svg(before.as_ref(), out_suite.curve.as_ref(), "after training", &prov),
        )?;
    }

    if cfg.head_enabled {
        progress("fitting the decision head on frozen codes");
        let fit = train_head(&enc, &world, &cfg.head)?;
        let mut rng = Rng::new(cfg.seed).split(HEAD_TEST_STREAM);
        let acc = head_accuracy(&enc, &fit.head, &world, cfg.head_test_n, &mut rng)?;
        let zo = task_risk(&enc, &fit.head, &world, Loss::ZeroOne, cfg.head_test_n, &mut rng)?;
        let ll = task_risk(&enc, &fit.head, &world, Loss::Log, cfg.head_test_n, &mut rng)?;
        report.metrics.insert(
            "decision_head".into(),
            MetricEntry::ok()
                .value("accuracy", acc)
                .value("zero_one_risk", zo.mean)
                .value("log_risk_nats", ll.mean)
                .value("log_risk_std_err", ll.std_err)
                .value("params_unchanged", f64::from(u8::from(fit.audit.unchanged)))
                .meta("label_budget", cfg.head.label_budget)
                .meta("n_test", cfg.head_test_n)
                .meta("audited_words", fit.audit.words),
        );
    }

    progress("checking the theory");
    add_theory(&mut report, cfg, &world, &enc)?;

    w.write("params.txt", &formats::write_params(&enc, &prov))?;
    let (emb, batch) = export_embeddings(&enc, &world, cfg.seed)?;
    w.write("embeddings.csv", &formats::write_embeddings(&emb, &prov))?;
    w.write("batch.csv", &formats::write_batch(&batch, &prov))?;
    finish(report, w, true)
}

/// `verify-theory`: the configured scenario's verdicts.
pub fn verify_theory(cfg: &ExperimentConfig, out: &Path, progress: &dyn Fn(&str)) -> Result<Outcome> {
    let scenario = cfg
        .theory
        .scenario
        .ok_or_else(|| PelError::Usage("verify-theory needs a config with theory.scenario set".into()))?;
    let w = Writer::new(out)?;
    let mut report = new_report(cfg);
    progress(&format!("scenario {}", scenario.name()));
    let (verdicts, entries) = verify::scenario(cfg, scenario)?;
    report.theory = verdicts;
    report.metrics.extend(entries);
    let all_pass = report.theory.iter().all(|v| v.pass);
    report.metrics.insert(
        "scenario".into(),
        MetricEntry::ok()
            .value("all_pass", f64::from(u8::from(all_pass)))
            .meta("name", scenario.name())
            .meta("expected", if scenario.expect_pass() { "pass" } else { "fail" }),
    );
    finish(report, w, true)
}

/// `certify`: metrics on externally produced codes.
pub fn certify(
    csv_path: &Path,
    nuisance: &str,
    cfg: &ExperimentConfig,
    out: &Path,
    progress: &dyn Fn(&str),
) -> Result<Outcome> {
    if !matches!(nuisance, "v" | "y") {
        return Err(PelError::Usage(format!(
            "nuisance column must be v or y, got {nuisance:?}"
        )));
    }
    let text = fs::read_to_string(csv_path).map_err(|e| PelError::io(csv_path, e))?;
    let emb = formats::read_embeddings(&text).map_err(|source| PelError::Csv {
        path: csv_path.to_path_buf(),
        source,
    })?;
    let mut w = Writer::new(out)?;
    let prov = provenance(cfg);
    let mut report = new_report(cfg);
    progress(&format!("certifying {} rows of {}-d codes", emb.rows(), emb.z.cols()));
    let pool = suite::thread_pool();
    let res = suite::run_embedding_suite(&emb, nuisance, &cfg.metrics, cfg.train.objective.gamma, cfg.seed, &pool);
    report.metrics.extend(res.metrics);
    report.metrics.insert(
        "input".into(),
        MetricEntry::ok()
            .value("rows", emb.rows())
            .value("code_dim", emb.z.cols())
            .meta("sha256", format!("{:x}", Sha256::digest(text.as_bytes())).as_str())
            .meta("nuisance_column", nuisance),
    );
    if let Some(c) = &res.curve {
        w.write("curve.csv", &formats::write_curve(c, &prov))?;
        w.write("invariance_curve.svg", &curve_svg(None, Some(c), "codes", &prov))?;
        report
            .curves
            .insert("invariance".into(), CurveRecord::new(c, "curve.csv"));
    }
    finish(report, w, true)
}
