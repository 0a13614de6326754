use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Error, Result};
use crate::metrics::info::quantile_cells;
use crate::numerics::{FnRepresentation, Matrix, Projection, Representation, Rng, SoftmaxHead};
use crate::worlds::{sample_inputs, sample_labeled, World, WorldKind};

/// Decision loss. `Log` is measured in nats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    ZeroOne,
    Log,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::ZeroOne => "zero_one",
            Loss::Log => "log",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero_one" => Some(Loss::ZeroOne),
            "log" => Some(Loss::Log),
            _ => None,
        }
    }

    /// Only the log-loss is strictly proper; zero-one has many Bayes acts.
    pub fn strictly_proper(self) -> bool {
        matches!(self, Loss::Log)
    }

    /// Expected loss of the Bayes act under posterior `p`: `1 − max p` or
    /// the entropy of `p`.
    pub fn bayes_value(self, p: &[f64]) -> f64 {
        match self {
            Loss::ZeroOne => 1.0 - p.iter().copied().fold(0.0, f64::max),
            Loss::Log => -p.iter().filter(|&&q| q > 0.0).map(|&q| q * libm::log(q)).sum::<f64>(),
        }
    }

    /// Loss of reporting `q` when the label is `y`.
    pub fn pointwise(self, q: &[f64], y: usize) -> f64 {
        match self {
            Loss::ZeroOne => f64::from(crate::numerics::head::argmax(q) != y),
            Loss::Log => -libm::log(q[y].max(f64::MIN_POSITIVE)),
        }
    }
}

pub fn nats_to_bits(v: f64) -> f64 {
    v / core::f64::consts::LN_2
}

/// Discretisation used for continuous worlds.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    /// Equal-mass cells per code dimension.
    pub cells: usize,
    /// Inputs drawn to estimate cell posteriors.
    pub samples: usize,
    pub seed: u64,
    /// Largest accepted change when `cells` is doubled.
    pub tolerance: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            cells: 64,
            samples: 20_000,
            seed: 0,
            tolerance: 0.01,
        }
    }
}

/// A Bayes-risk value with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    pub value: f64,
    /// True when computed by enumeration or from exact posteriors.
    pub exact: bool,
    /// Cells per dimension used (0 when exact).
    pub cells: usize,
    pub samples: usize,
    /// Set when doubling the resolution moved the value by more than the
    /// tolerance.
    pub warning: Option<String>,
}

fn zero_signed(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn cell_risk(cells: BTreeMap<Vec<u64>, (f64, Vec<f64>)>, loss: Loss) -> f64 {
    let total: f64 = cells.values().map(|(m, _)| m).sum();
    cells
        .values()
        .map(|(m, py)| {
            let post: Vec<f64> = py.iter().map(|v| v / m).collect();
            (m / total) * loss.bayes_value(&post)
        })
        .sum()
}

/// Bayes risk `F` of deciding from a representation of one world.
///
/// Enumerable worlds are handled exactly: the posterior of every distinct
/// code is assembled from the support. Continuous worlds use a fixed
/// sample, exact per-input posteriors and equal-mass cells over each code
/// dimension; the cells depend only on the ranks of the codes, so any
/// strictly monotone per-dimension reparameterisation leaves `F` unchanged.
pub struct RiskOracle<'w> {
    world: &'w World,
    loss: Loss,
    inputs: Vec<(Vec<f64>, f64, Vec<f64>)>,
    exact: bool,
}

impl<'w> RiskOracle<'w> {
    pub fn new(world: &'w World, loss: Loss, res: &Resolution) -> Result<Self> {
        let (inputs, exact) = match world.support() {
            Some(s) => (
                s.into_iter()
                    .map(|(x, p)| {
                        let post = world.posterior(&x);
                        (x, p, post)
                    })
                    .collect(),
                true,
            ),
            None => {
                if res.samples < 2 || res.cells < 1 {
                    return Err(contract("resolution needs samples >= 2 and cells >= 1"));
                }
                let x = sample_inputs(world, res.samples, &mut Rng::new(res.seed).split(0x7269_736b))?;
                let w = 1.0 / res.samples as f64;
                (
                    x.iter_rows().map(|r| (r.to_vec(), w, world.posterior(r))).collect(),
                    false,
                )
            }
        };
        Ok(Self {
            world,
            loss,
            inputs,
            exact,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn world(&self) -> &World {
        self.world
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    /// `E L(P(Y | X))`: the risk of the full input.
    pub fn full(&self) -> f64 {
        let total: f64 = self.inputs.iter().map(|i| i.1).sum();
        self.inputs
            .iter()
            .map(|(_, w, p)| w / total * self.loss.bayes_value(p))
            .sum()
    }

    /// `F` of `rep` at `cells` equal-mass cells per code dimension.
    pub fn risk(&self, rep: &dyn Representation, cells: usize) -> Result<f64> {
        if rep.input_dim() != self.world.d_x() {
            return Err(Error::Dimension {
                context: "risk oracle input",
                expected: self.world.d_x(),
                got: rep.input_dim(),
            });
        }
        let codes: Vec<Vec<f64>> = self.inputs.iter().map(|(x, _, _)| rep.encode(x)).collect();
        if codes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(contract("representation produced non-finite codes"));
        }
        let keys: Vec<Vec<u64>> = if self.exact {
            codes
                .iter()
                .map(|c| c.iter().map(|&v| zero_signed(v)).collect())
                .collect()
        } else {
            let d = rep.code_dim();
            let per_dim: Vec<Vec<usize>> = (0..d)
                .map(|j| quantile_cells(&codes.iter().map(|c| c[j]).collect::<Vec<_>>(), cells))
                .collect();
            (0..codes.len())
                .map(|i| per_dim.iter().map(|b| b[i] as u64).collect())
                .collect()
        };
        let classes = self.world.classes();
        let mut table: BTreeMap<Vec<u64>, (f64, Vec<f64>)> = BTreeMap::new();
        for (k, (_, w, post)) in keys.into_iter().zip(&self.inputs) {
            let e = table.entry(k).or_insert_with(|| (0.0, vec![0.0; classes]));
            e.0 += w;
            for (a, p) in e.1.iter_mut().zip(post) {
                *a += w * p;
            }
        }
        Ok(cell_risk(table, self.loss))
    }

    /// `F` with the resolution-doubling sensitivity check.
    pub fn estimate(&self, rep: &dyn Representation, res: &Resolution) -> Result<RiskEstimate> {
        let value = self.risk(rep, res.cells)?;
        let mut warning = None;
        if !self.exact {
            let fine = self.risk(rep, 2 * res.cells)?;
            if libm::fabs(fine - value) > res.tolerance {
                warning = Some(alloc::format!(
                    "risk moved from {value} to {fine} when cells doubled to {}",
                    2 * res.cells
                ));
            }
        }
        Ok(RiskEstimate {
            value,
            exact: self.exact,
            cells: if self.exact { 0 } else { res.cells },
            samples: self.inputs.len(),
            warning,
        })
    }
}

/// Named representations of a world.
#[derive(Clone, Copy)]
pub enum Cut<'a> {
    /// `Z = X`.
    Full,
    /// A representation keeping the label information: `V` in the two-bit
    /// world, the radius for rotations, `X` itself for the clusters.
    Good,
    /// A representation invariant to the group: `U` in the two-bit world,
    /// the polar angle for rotations, the half-turn orbit for the clusters.
    Bad,
    Encoder(&'a dyn Representation),
}

/// The concrete map behind a [`Cut`] other than `Full`.
pub fn cut_representation<'a>(world: &World, cut: Cut<'a>) -> Result<Box<dyn Representation + 'a>> {
    let w = world.clone();
    Ok(match (cut, world.kind()) {
        (Cut::Encoder(_), _) | (Cut::Full, _) => Box::new(Projection::new(world.d_x(), (0..world.d_x()).collect())?),
        (Cut::Good, WorldKind::BernoulliUv) => Box::new(Projection::new(2, vec![1])?),
        (Cut::Bad, WorldKind::BernoulliUv) => Box::new(Projection::new(2, vec![0])?),
        (Cut::Good, WorldKind::Rotation { .. }) => Box::new(FnRepresentation::new(2, 1, |x: &[f64], o: &mut [f64]| {
            o[0] = libm::hypot(x[0], x[1])
        })),
        (Cut::Bad, WorldKind::Rotation { .. }) => Box::new(FnRepresentation::new(2, 1, |x: &[f64], o: &mut [f64]| {
            o[0] = libm::atan2(x[1], x[0])
        })),
        (Cut::Good, WorldKind::SixNine { .. }) => Box::new(Projection::new(2, vec![0, 1])?),
        (Cut::Bad, WorldKind::SixNine { .. }) => {
            Box::new(FnRepresentation::new(2, 2, move |x: &[f64], o: &mut [f64]| {
                o.copy_from_slice(&w.orbit(x))
            }))
        }
    })
}

/// Exact (or finely discretised) Bayes risk of predicting `Y` from `cut`.
pub fn bayes_risk(world: &World, cut: Cut<'_>, loss: Loss, res: &Resolution) -> Result<RiskEstimate> {
    let oracle = RiskOracle::new(world, loss, res)?;
    match cut {
        Cut::Full if !oracle.is_exact() => Ok(RiskEstimate {
            value: oracle.full(),
            exact: true,
            cells: 0,
            samples: oracle.inputs.len(),
            warning: None,
        }),
        Cut::Encoder(rep) => oracle.estimate(rep, res),
        other => oracle.estimate(cut_representation(world, other)?.as_ref(), res),
    }
}

/// `F(φ) = inf_θ R(φ, θ)` for an encoder.
pub fn bayes_risk_through_encoder(
    rep: &dyn Representation,
    world: &World,
    loss: Loss,
    res: &Resolution,
) -> Result<RiskEstimate> {
    bayes_risk(world, Cut::Encoder(rep), loss, res)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskRisk {
    pub mean: f64,
    /// Standard error of the mean.
    pub std_err: f64,
    pub n: usize,
}

/// Monte Carlo `R(φ, θ) = E ℓ(g_θ(f_φ(X)), Y)`.
pub fn task_risk(
    rep: &dyn Representation,
    head: &SoftmaxHead,
    world: &World,
    loss: Loss,
    n: usize,
    rng: &mut Rng,
) -> Result<TaskRisk> {
    if n < 2 {
        return Err(contract("task risk needs n >= 2"));
    }
    let (x, y): (Matrix, Vec<usize>) = sample_labeled(world, n, rng)?;
    let z = rep.encode_batch(&x)?;
    let losses: Vec<f64> = z
        .iter_rows()
        .zip(&y)
        .map(|(r, &c)| loss.pointwise(&head.probs(r), c))
        .collect();
    let mean = losses.iter().sum::<f64>() / n as f64;
    let var = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(TaskRisk {
        mean,
        std_err: libm::sqrt(var / n as f64),
        n,
    })
}
