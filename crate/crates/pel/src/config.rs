//! Experiment configuration in a flat `key = value` text format.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Lines starting with `#` are comments. Unknown and repeated keys are
//! rejected with the offending line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use pel_core::numerics::{Arch, FitConfig};
use pel_core::objectives::{ObjectiveSpec, Similarity};
use pel_core::theory::{Loss, Resolution};
use pel_core::trainer::{HeadConfig, Optimizer, TrainConfig};
use pel_core::worlds::{make_bernoulli_uv_world, make_rotation_world, make_six_nine_world, AngleSampler};
use pel_core::World;
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

/// One schema entry: key, default value, description.
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

pub const SCHEMA: &[Key] = &[
    key("name", "experiment", "label copied into every output"),
    key("seed", "0", "master seed; every random stream is split from it"),
    key("world", "rotation", "rotation | bernoulli_uv | six_nine"),
    key("world.radius_lo", "0.5", "rotation: smallest radius"),
    key("world.radius_hi", "1.5", "rotation: largest radius"),
    key(
        "world.center_x",
        "1.0",
        "six_nine: first coordinate of the class-0 center",
    ),
    key(
        "world.center_y",
        "0.0",
        "six_nine: second coordinate of the class-0 center",
    ),
    key("world.sigma", "1.0", "six_nine: cluster standard deviation"),
    key("encoder.arch", "mlp1", "linear | mlp1 (one tanh hidden layer)"),
    key("encoder.hidden", "32", "hidden width for mlp1"),
    key("encoder.dim", "4", "code dimension"),
    key("encoder.init_scale", "1.0", "scale of the random initialisation"),
    key("train.enabled", "true", "train the encoder before certification"),
    key("train.steps", "2000", "optimizer steps"),
    key("train.batch_size", "256", "views per step"),
    key("train.lr", "0.01", "learning rate (0 freezes the encoder)"),
    key("train.optimizer", "adam", "sgd | adam"),
    key("train.adam_beta1", "0.9", "adam first-moment decay"),
    key("train.adam_beta2", "0.999", "adam second-moment decay"),
    key("train.adam_eps", "1e-8", "adam denominator floor"),
    key(
        "train.eval_every",
        "0",
        "snapshot cadence in steps; 0 snapshots only the final encoder",
    ),
    key(
        "train.sigma_aug",
        "none",
        "none, or the std of Gaussian view angles for rotation training",
    ),
    key("objective.beta_inv", "1.0", "weight of the invariance loss"),
    key("objective.use_nce", "true", "include InfoNCE"),
    key("objective.tau", "0.5", "InfoNCE temperature"),
    key("objective.symmetric_nce", "true", "average both InfoNCE directions"),
    key("objective.sim", "cosine", "cosine | dot"),
    key("objective.gamma", "1.0", "per-dimension variance floor"),
    key("objective.w_var", "1.0", "weight of the variance floor"),
    key("objective.w_cov", "0.1", "weight of the covariance penalty"),
    key("objective.w_eq", "0.0", "weight of the equivariance loss"),
    key("objective.epsilon_inv", "0.1", "reported invariance target"),
    key(
        "metrics.enabled",
        "curve,leakage,nmi,smoothness,geometry,disentanglement,fisher,sufficiency,separability,probe",
        "comma-separated metric list",
    ),
    key("metrics.n", "4000", "sample size for metrics without their own size"),
    key(
        "metrics.curve_points",
        "33",
        "grid points of the invariance curve on [0, pi]",
    ),
    key("metrics.curve_n", "2000", "inputs per invariance-curve grid point"),
    key("metrics.bins", "8", "equal-mass bins for information metrics"),
    key(
        "metrics.probe_budgets",
        "16,64,256,1024",
        "label budgets for the data-efficiency probe",
    ),
    key(
        "metrics.probe_pool",
        "2048",
        "labelled pool the probe budgets draw from",
    ),
    key(
        "metrics.probe_test",
        "2000",
        "held-out size for the data-efficiency probe",
    ),
    key("head.enabled", "true", "fit a decision head on the frozen codes"),
    key("head.label_budget", "4096", "labelled draws for the decision head"),
    key("head.epochs", "200", "decision-head epochs"),
    key("head.lr", "1.0", "decision-head learning rate"),
    key("head.test_n", "10000", "held-out draws for head accuracy and task risk"),
    key(
        "theory.checks",
        "risk_table",
        "comma list of risk_table, audit, two_stage, orthogonality (or none)",
    ),
    key(
        "theory.scenario",
        "none",
        "none | orthogonality_rotation | over_invariance_bernoulli | merged_orbits",
    ),
    key(
        "theory.loss",
        "log",
        "log | zero_one for orthogonality and audit checks",
    ),
    key(
        "theory.cells",
        "64",
        "equal-mass cells per code dimension for continuous Bayes risk",
    ),
    key("theory.samples", "20000", "inputs used for continuous Bayes risk"),
    key("theory.tolerance", "1e-3", "orthogonality tolerance"),
    key("output.dir", "out", "output directory (overridden by --out)"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricKind {
    Curve,
    Leakage,
    Nmi,
    Smoothness,
    Geometry,
    Disentanglement,
    Fisher,
    Sufficiency,
    Separability,
    Probe,
}

impl MetricKind {
    pub const ALL: [MetricKind; 10] = [
        MetricKind::Curve,
        MetricKind::Leakage,
        MetricKind::Nmi,
        MetricKind::Smoothness,
        MetricKind::Geometry,
        MetricKind::Disentanglement,
        MetricKind::Fisher,
        MetricKind::Sufficiency,
        MetricKind::Separability,
        MetricKind::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Curve => "curve",
            MetricKind::Leakage => "leakage",
            MetricKind::Nmi => "nmi",
            MetricKind::Smoothness => "smoothness",
            MetricKind::Geometry => "geometry",
            MetricKind::Disentanglement => "disentanglement",
            MetricKind::Fisher => "fisher",
            MetricKind::Sufficiency => "sufficiency",
            MetricKind::Separability => "separability",
            MetricKind::Probe => "probe",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoryCheck {
    RiskTable,
    Audit,
    TwoStage,
    Orthogonality,
}

impl TheoryCheck {
    pub fn name(self) -> &'static str {
        match self {
            TheoryCheck::RiskTable => "risk_table",
            TheoryCheck::Audit => "audit",
            TheoryCheck::TwoStage => "two_stage",
            TheoryCheck::Orthogonality => "orthogonality",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            TheoryCheck::RiskTable,
            TheoryCheck::Audit,
            TheoryCheck::TwoStage,
            TheoryCheck::Orthogonality,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    OrthogonalityRotation,
    OverInvarianceBernoulli,
    MergedOrbits,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::OrthogonalityRotation,
        Scenario::OverInvarianceBernoulli,
        Scenario::MergedOrbits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::OrthogonalityRotation => "orthogonality_rotation",
            Scenario::OverInvarianceBernoulli => "over_invariance_bernoulli",
            Scenario::MergedOrbits => "merged_orbits",
        }
    }

    /// Whether the scenario lies inside the theorem's assumptions.
    pub fn expect_pass(self) -> bool {
        matches!(self, Scenario::OrthogonalityRotation)
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorldChoice {
    Rotation { radius_lo: f64, radius_hi: f64 },
    BernoulliUv,
    SixNine { center: [f64; 2], sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub arch: Arch,
    pub hidden: usize,
    pub dim: usize,
    pub init_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub enabled: Vec<MetricKind>,
    pub n: usize,
    pub curve_points: usize,
    pub curve_n: usize,
    pub bins: usize,
    pub probe_budgets: Vec<usize>,
    pub probe_pool: usize,
    pub probe_test: usize,
}

impl MetricsConfig {
    pub fn has(&self, m: MetricKind) -> bool {
        self.enabled.contains(&m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConfig {
    pub checks: Vec<TheoryCheck>,
    pub scenario: Option<Scenario>,
    pub loss: Loss,
    pub resolution: Resolution,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub world: WorldChoice,
    pub encoder: EncoderConfig,
    pub train_enabled: bool,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub head_enabled: bool,
    pub head: HeadConfig,
    pub head_test_n: usize,
    pub theory: TheoryConfig,
    pub output_dir: String,
    values: BTreeMap<&'static str, String>,
}

struct Raw {
    values: BTreeMap<&'static str, (String, usize)>,
}

impl Raw {
    fn get(&self, k: &str) -> (&str, usize) {
        let (v, l) = &self.values[k];
        (v.as_str(), *l)
    }

    fn parse<T: std::str::FromStr>(&self, k: &str, what: &str) -> Result<T, ConfigError> {
        let (v, line) = self.get(k);
        v.parse()
            .map_err(|_| ConfigError::at(line, format!("{k}: expected {what}, got {v:?}")))
    }

    fn real(&self, k: &str) -> Result<f64, ConfigError> {
        let x: f64 = self.parse(k, "a number")?;
        if !x.is_finite() {
            return Err(self.err(k, "must be finite"));
        }
        Ok(x)
    }

    fn count(&self, k: &str, min: usize) -> Result<usize, ConfigError> {
        let x: usize = self.parse(k, "a non-negative integer")?;
        if x < min {
            return Err(self.err(k, &format!("must be >= {min}")));
        }
        Ok(x)
    }

    fn flag(&self, k: &str) -> Result<bool, ConfigError> {
        self.parse(k, "true or false")
    }

    fn err(&self, k: &str, msg: &str) -> ConfigError {
        ConfigError::at(self.get(k).1, format!("{k}: {msg}"))
    }

    fn list(&self, k: &str) -> Vec<&str> {
        let v = self.get(k).0;
        if v == "none" {
            return Vec::new();
        }
        v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
    }
}

fn schema_key(name: &str) -> Option<&'static str> {
    SCHEMA.iter().find(|k| k.name == name).map(|k| k.name)
}

impl ExperimentConfig {
    /// Parses config text. Line 0 in an error refers to a default value.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values: BTreeMap<&'static str, (String, usize)> =
            SCHEMA.iter().map(|k| (k.name, (k.default.to_string(), 0))).collect();
        let mut seen: BTreeMap<&'static str, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(ConfigError::at(
                    line,
                    format!("expected `key = value`, got {content:?}"),
                ));
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(name) = schema_key(k) else {
                return Err(ConfigError::at(line, format!("unknown key {k:?}")));
            };
            if let Some(first) = seen.insert(name, line) {
                return Err(ConfigError::at(line, format!("{k} already set on line {first}")));
            }
            if v.is_empty() {
                return Err(ConfigError::at(line, format!("{k}: empty value")));
            }
            values.insert(name, (v.to_string(), line));
        }
        Self::build(Raw { values })
    }

    fn build(r: Raw) -> Result<Self, ConfigError> {
        let world = match r.get("world").0 {
            "rotation" => WorldChoice::Rotation {
                radius_lo: r.real("world.radius_lo")?,
                radius_hi: r.real("world.radius_hi")?,
            },
            "bernoulli_uv" => WorldChoice::BernoulliUv,
            "six_nine" => WorldChoice::SixNine {
                center: [r.real("world.center_x")?, r.real("world.center_y")?],
                sigma: r.real("world.sigma")?,
            },
            other => return Err(r.err("world", &format!("unknown world {other:?}"))),
        };
        let arch =
            Arch::parse(r.get("encoder.arch").0).ok_or_else(|| r.err("encoder.arch", "expected linear or mlp1"))?;
        let encoder = EncoderConfig {
            arch,
            hidden: r.count("encoder.hidden", 1)?,
            dim: r.count("encoder.dim", 1)?,
            init_scale: r.real("encoder.init_scale")?,
        };
        let optimizer = match r.get("train.optimizer").0 {
            "sgd" => Optimizer::Sgd,
            "adam" => Optimizer::Adam {
                beta1: r.real("train.adam_beta1")?,
                beta2: r.real("train.adam_beta2")?,
                eps: r.real("train.adam_eps")?,
            },
            _ => return Err(r.err("train.optimizer", "expected sgd or adam")),
        };
        let sigma_aug = match r.get("train.sigma_aug").0 {
            "none" => None,
            _ => Some(r.real("train.sigma_aug")?),
        };
        let objective = ObjectiveSpec {
            beta_inv: r.real("objective.beta_inv")?,
            use_nce: r.flag("objective.use_nce")?,
            tau: r.real("objective.tau")?,
            symmetric_nce: r.flag("objective.symmetric_nce")?,
            sim: Similarity::parse(r.get("objective.sim").0)
                .ok_or_else(|| r.err("objective.sim", "expected cosine or dot"))?,
            gamma: r.real("objective.gamma")?,
            w_var: r.real("objective.w_var")?,
            w_cov: r.real("objective.w_cov")?,
            w_eq: r.real("objective.w_eq")?,
            epsilon_inv: r.real("objective.epsilon_inv")?,
        };
        let seed: u64 = r.parse("seed", "a non-negative integer")?;
        let train = TrainConfig {
            steps: r.count("train.steps", 1)?,
            batch_size: r.count("train.batch_size", 2)?,
            lr: r.real("train.lr")?,
            optimizer,
            seed,
            objective,
            eval_every: r.count("train.eval_every", 0)?,
            sigma_aug,
        };
        // attribute validation failures to the section's first key
        train.validate().map_err(|e| r.err("train.lr", &e.to_string()))?;

        let mut enabled = Vec::new();
        for m in r.list("metrics.enabled") {
            let kind =
                MetricKind::parse(m).ok_or_else(|| r.err("metrics.enabled", &format!("unknown metric {m:?}")))?;
            if !enabled.contains(&kind) {
                enabled.push(kind);
            }
        }
        enabled.sort();
        let mut budgets = Vec::new();
        for b in r.list("metrics.probe_budgets") {
            let v: usize = b
                .parse()
                .map_err(|_| r.err("metrics.probe_budgets", &format!("bad budget {b:?}")))?;
            if v < 2 {
                return Err(r.err("metrics.probe_budgets", "budgets must be >= 2"));
            }
            budgets.push(v);
        }
        let metrics = MetricsConfig {
            enabled,
            n: r.count("metrics.n", 100)?,
            curve_points: r.count("metrics.curve_points", 2)?,
            curve_n: r.count("metrics.curve_n", 1)?,
            bins: r.count("metrics.bins", 2)?,
            probe_budgets: budgets,
            probe_pool: r.count("metrics.probe_pool", 2)?,
            probe_test: r.count("metrics.probe_test", 1)?,
        };
        if metrics.probe_budgets.iter().any(|&b| b > metrics.probe_pool) {
            return Err(r.err("metrics.probe_budgets", "a budget exceeds metrics.probe_pool"));
        }
        let head = HeadConfig {
            label_budget: r.count("head.label_budget", 2)?,
            fit: FitConfig {
                epochs: r.count("head.epochs", 1)?,
                lr: r.real("head.lr")?,
                ..FitConfig::default()
            },
            seed,
        };
        let mut checks = Vec::new();
        for c in r.list("theory.checks") {
            checks.push(TheoryCheck::parse(c).ok_or_else(|| r.err("theory.checks", &format!("unknown check {c:?}")))?);
        }
        let scenario = match r.get("theory.scenario").0 {
            "none" => None,
            s => Some(Scenario::parse(s).ok_or_else(|| r.err("theory.scenario", &format!("unknown scenario {s:?}")))?),
        };
        let theory = TheoryConfig {
            checks,
            scenario,
            loss: Loss::parse(r.get("theory.loss").0)
                .ok_or_else(|| r.err("theory.loss", "expected log or zero_one"))?,
            resolution: Resolution {
                cells: r.count("theory.cells", 1)?,
                samples: r.count("theory.samples", 2)?,
                seed,
                ..Resolution::default()
            },
            tolerance: r.real("theory.tolerance")?,
        };
        let world_line = r.get("world").1;
        let cfg = ExperimentConfig {
            name: r.get("name").0.to_string(),
            seed,
            world,
            encoder,
            train_enabled: r.flag("train.enabled")?,
            train,
            metrics,
            head_enabled: r.flag("head.enabled")?,
            head,
            head_test_n: r.count("head.test_n", 2)?,
            theory,
            output_dir: r.get("output.dir").0.to_string(),
            values: r.values.into_iter().map(|(k, (v, _))| (k, v)).collect(),
        };
        cfg.make_world()
            .map_err(|e| ConfigError::at(world_line, format!("world: {e}")))?;
        Ok(cfg)
    }

    pub fn make_world(&self) -> pel_core::Result<World> {
        match &self.world {
            WorldChoice::Rotation { radius_lo, radius_hi } => {
                make_rotation_world(*radius_lo, *radius_hi, AngleSampler::Uniform)
            }
            WorldChoice::BernoulliUv => Ok(make_bernoulli_uv_world()),
            WorldChoice::SixNine { center, sigma } => make_six_nine_world(*center, *sigma),
        }
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self.head.seed = seed;
        self.theory.resolution.seed = seed;
        self.values.insert("seed", seed.to_string());
        self
    }

    pub fn with_output_dir(mut self, dir: &str) -> Self {
        dir.clone_into(&mut self.output_dir);
        self.values.insert("output.dir", dir.to_string());
        self
    }

    /// Effective values of every key in schema order. The output
    /// directory is left out: it does not affect any result, and leaving it
    /// out keeps reports written to different directories identical.
    pub fn echo(&self) -> Vec<(&'static str, &str)> {
        SCHEMA
            .iter()
            .filter(|k| k.name != "output.dir")
            .map(|k| (k.name, self.values[k.name].as_str()))
            .collect()
    }

    /// Canonical text form: one `key = value` line per schema key.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.echo() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.canonical()))
    }
}

/// The schema as printed by `print-config-schema`.
pub fn schema_text() -> String {
    let mut s = String::from("# key = default    # description\n");
    for k in SCHEMA {
        let _ = writeln!(s, "{} = {}    # {}", k.name, k.default, k.help);
    }
    s
}
