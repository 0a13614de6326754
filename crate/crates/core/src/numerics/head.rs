//! Linear-softmax heads on frozen codes, shared by the decision head trainer
//! and the linear probes of the certification suite.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::Matrix;
use super::rng::Rng;
use crate::error::{check_dim, contract, Result};

/// `p(y | z) = softmax(W z + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    w: Matrix,
    b: Vec<f64>,
}

impl SoftmaxHead {
    pub fn new(w: Matrix, b: Vec<f64>) -> Result<Self> {
        check_dim("SoftmaxHead bias", w.rows(), b.len())?;
        if w.rows() < 2 {
            return Err(contract("softmax head needs at least two classes"));
        }
        Ok(Self { w, b })
    }

    /// All-zero head: uniform predictive distribution.
    pub fn uniform(d: usize, classes: usize) -> Self {
        Self {
            w: Matrix::zeros(classes, d),
            b: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.w.rows()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        self.w
            .iter_rows()
            .zip(&self.b)
            .map(|(r, b)| r.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    pub fn probs(&self, z: &[f64]) -> Vec<f64> {
        softmax(&self.logits(z))
    }

    /// Most probable class; ties resolve to the lowest index.
    pub fn predict(&self, z: &[f64]) -> usize {
        argmax(&self.logits(z))
    }

    /// Mean negative log-likelihood in nats.
    pub fn log_loss(&self, z: &Matrix, y: &[usize]) -> f64 {
        let n = z.rows().max(1) as f64;
        z.iter_rows()
            .zip(y)
            .map(|(r, &c)| {
                let l = self.logits(r);
                log_sum_exp(&l) - l[c]
            })
            .sum::<f64>()
            / n
    }

    pub fn accuracy(&self, z: &Matrix, y: &[usize]) -> f64 {
        let hits = z.iter_rows().zip(y).filter(|(r, &c)| self.predict(r) == c).count();
        hits as f64 / z.rows().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Fraction of the training rows held out for early stopping.
    pub val_fraction: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1.0,
            val_fraction: 0.2,
        }
    }
}

/// Fits a softmax head by full-batch gradient descent on standardised codes,
/// keeping the parameters with the best validation log-loss.
pub fn fit_softmax(z: &Matrix, y: &[usize], classes: usize, cfg: &FitConfig, rng: &mut Rng) -> Result<SoftmaxHead> {
    check_dim("fit_softmax labels", z.rows(), y.len())?;
    if classes < 2 {
        return Err(contract("need at least two classes"));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
        return Err(contract(alloc::format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    if z.rows() == 0 {
        return Err(contract("empty training set"));
    }
    let n = z.rows();
    let d = z.cols();
    let perm = rng.permutation(n);
    let n_val = if n >= 10 {
        libm::ceil(cfg.val_fraction * n as f64) as usize
    } else {
        0
    };
    let (val_idx, train_idx) = perm.split_at(n_val.min(n - 1));

    let ztr = z.select_rows(train_idx);
    let ytr: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
    let mean = ztr.column_means();
    let mut scale = vec![1.0; d];
    for (j, s) in scale.iter_mut().enumerate() {
        let var = ztr
            .iter_rows()
            .map(|r| (r[j] - mean[j]) * (r[j] - mean[j]))
            .sum::<f64>()
            / ztr.rows() as f64;
        let sd = libm::sqrt(var);
        if sd > 1e-12 {
            *s = sd;
        }
    }
    let standardize = |m: &Matrix| Matrix::from_fn(m.rows(), d, |i, j| (m[(i, j)] - mean[j]) / scale[j]);
    let xs = standardize(&ztr);
    let zval = z.select_rows(val_idx);
    let xval = standardize(&zval);
    let yval: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();

    let mut head = SoftmaxHead::uniform(d, classes);
    let mut best = head.clone();
    let mut best_val = if val_idx.is_empty() {
        f64::INFINITY
    } else {
        head.log_loss(&xval, &yval)
    };
    let nt = xs.rows() as f64;
    let mut gw = Matrix::zeros(classes, d);
    let mut gb = vec![0.0; classes];
    for _ in 0..cfg.epochs {
        gw.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        gb.iter_mut().for_each(|v| *v = 0.0);
        for (r, &c) in xs.iter_rows().zip(&ytr) {
            let mut p = head.probs(r);
            p[c] -= 1.0;
            for (k, pk) in p.iter().enumerate() {
                gb[k] += pk;
                for (g, v) in gw.row_mut(k).iter_mut().zip(r) {
                    *g += pk * v;
                }
            }
        }
        let step = cfg.lr / nt;
        for (w, g) in head.w.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *w -= step * g;
        }
        for (b, g) in head.b.iter_mut().zip(&gb) {
            *b -= step * g;
        }
        if val_idx.is_empty() {
            best = head.clone();
        } else {
            let v = head.log_loss(&xval, &yval);
            if v < best_val {
                best_val = v;
                best = head.clone();
            }
        }
    }

    // fold the standardisation into the head so it acts on raw codes
    let w = Matrix::from_fn(classes, d, |k, j| best.w[(k, j)] / scale[j]);
    let b = (0..classes)
        .map(|k| best.b[k] - (0..d).map(|j| w[(k, j)] * mean[j]).sum::<f64>())
        .collect();
    SoftmaxHead::new(w, b)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| libm::exp(l - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(v.iter().map(|x| libm::exp(x - m)).sum::<f64>())
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_head_log_loss_is_log_k() {
        let h = SoftmaxHead::uniform(3, 2);
        let z = Matrix::from_fn(4, 3, |i, j| (i + j) as f64);
        assert!((h.log_loss(&z, &[0, 1, 1, 0]) - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn separable_problem_is_learned() {
        let mut rng = Rng::new(4);
        let z = Matrix::from_fn(400, 1, |i, _| if i % 2 == 0 { 10.0 } else { 20.0 });
        let y: Vec<usize> = (0..400).map(|i| i % 2).collect();
        let h = fit_softmax(&z, &y, 2, &FitConfig::default(), &mut rng).unwrap();
        assert_eq!(h.accuracy(&z, &y), 1.0);
    }

    #[test]
    fn constant_codes_predict_majority() {
        let mut rng = Rng::new(4);
        let z = Matrix::zeros(300, 2);
        let y: Vec<usize> = (0..300).map(|i| usize::from(i % 3 == 0)).collect();
        let h = fit_softmax(&z, &y, 2, &FitConfig::default(), &mut rng).unwrap();
        assert!((h.accuracy(&z, &y) - 200.0 / 300.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_labels() {
        let mut rng = Rng::new(1);
        let z = Matrix::zeros(3, 1);
        assert!(fit_softmax(&z, &[0, 1, 2], 2, &FitConfig::default(), &mut rng).is_err());
    }
}
