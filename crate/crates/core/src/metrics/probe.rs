use alloc::vec::Vec;

use crate::error::{check_dim, contract, Error, Result};
use crate::numerics::{fit_softmax, FitConfig, Matrix, Representation, Rng};
use crate::worlds::{sample_labeled, World};

/// Mann-Whitney AUC of `scores` for the positive set, ties counted half.
/// `None` when either class is empty.
pub fn auc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // average ranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Macro one-vs-rest AUC over the classes present in `y`.
pub fn macro_auc(probs: &[Vec<f64>], y: &[usize], classes: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let pos: Vec<bool> = y.iter().map(|&v| v == c).collect();
        if let Some(a) = auc_binary(&scores, &pos) {
            total += a;
            count += 1;
        }
        if classes == 2 {
            // both one-vs-rest AUCs coincide for two classes
            break;
        }
    }
    (count > 0).then(|| total / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageReport {
    /// Held-out macro one-vs-rest AUC of the linear probe.
    pub auc: f64,
    /// `|AUC − 0.5|·2`: 0 at chance, 1 when fully decodable either way.
    pub leakage: f64,
    pub error_rate: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Fraction of rows held out for evaluating the leakage probe.
pub const PROBE_TEST_FRACTION: f64 = 0.3;

/// Linear logistic probe `V ← Z` trained on a random split.
pub fn leakage_probe(z: &Matrix, v: &[usize], rng: &mut Rng) -> Result<LeakageReport> {
    check_dim("leakage_probe", z.rows(), v.len())?;
    let n = z.rows();
    if n < 100 {
        return Err(contract(alloc::format!("leakage probe needs n >= 100, got {n}")));
    }
    let classes = v.iter().max().map_or(0, |m| m + 1);
    if v.iter().all(|&c| c == v[0]) {
        return Err(Error::Undefined("AUC undefined: nuisance takes a single value".into()));
    }
    let perm = rng.permutation(n);
    let n_test = libm::ceil(PROBE_TEST_FRACTION * n as f64) as usize;
    let (test_idx, train_idx) = perm.split_at(n_test);
    let vtr: Vec<usize> = train_idx.iter().map(|&i| v[i]).collect();
    let vte: Vec<usize> = test_idx.iter().map(|&i| v[i]).collect();
    if vtr.iter().all(|&c| c == vtr[0]) || vte.iter().all(|&c| c == vte[0]) {
        return Err(Error::Undefined(
            "AUC undefined: a split saw a single nuisance value".into(),
        ));
    }
    let head = fit_softmax(&z.select_rows(train_idx), &vtr, classes, &FitConfig::default(), rng)?;
    let zte = z.select_rows(test_idx);
    let probs: Vec<Vec<f64>> = zte.iter_rows().map(|r| head.probs(r)).collect();
    let auc = macro_auc(&probs, &vte, classes).ok_or_else(|| Error::Undefined("AUC undefined".into()))?;
    Ok(LeakageReport {
        auc,
        leakage: libm::fabs(auc - 0.5) * 2.0,
        error_rate: 1.0 - head.accuracy(&zte, &vte),
        n_train: train_idx.len(),
        n_test,
    })
}

/// Held-out accuracy of a linear probe trained on the first `b` rows of
/// `(z, y)` for every budget `b`, evaluated on `(z_test, y_test)`.
pub fn probe_accuracy_curve(
    z: &Matrix,
    y: &[usize],
    z_test: &Matrix,
    y_test: &[usize],
    classes: usize,
    budgets: &[usize],
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_dim("probe labels", z.rows(), y.len())?;
    check_dim("probe test labels", z_test.rows(), y_test.len())?;
    let mut out = Vec::with_capacity(budgets.len());
    for &b in budgets {
        if b > z.rows() {
            return Err(contract(alloc::format!(
                "label budget {b} exceeds the {} available samples",
                z.rows()
            )));
        }
        if b < 2 {
            return Err(contract("label budget must be at least 2"));
        }
        let idx: Vec<usize> = (0..b).collect();
        let head = fit_softmax(&z.select_rows(&idx), &y[..b], classes, &FitConfig::default(), rng)?;
        out.push(head.accuracy(z_test, y_test));
    }
    Ok(out)
}

/// Accuracy versus number of labels for a frozen representation. `pool`
/// labelled samples are available for training; a budget above `pool` is a
/// contract violation.
pub fn probe_data_efficiency(
    rep: &dyn Representation,
    world: &World,
    budgets: &[usize],
    pool: usize,
    n_test: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if let Some(&b) = budgets.iter().find(|&&b| b > pool) {
        return Err(contract(alloc::format!(
            "label budget {b} exceeds the {pool} available samples"
        )));
    }
    let (x, y) = sample_labeled(world, pool, rng)?;
    let (xt, yt) = sample_labeled(world, n_test, rng)?;
    let z = rep.encode_batch(&x)?;
    let zt = rep.encode_batch(&xt)?;
    probe_accuracy_curve(&z, &y, &zt, &yt, world.classes(), budgets, rng)
}
