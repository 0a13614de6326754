//! Discretisation and plug-in information measures (bits).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::numerics::{symmetric_eigen, Matrix};

/// Default number of quantile bins per dimension.
pub const DEFAULT_BINS: usize = 8;

/// Maps each value to a bin index.
///
/// With at most `bins` distinct values every value keeps its own bin.
/// Otherwise bins are empirical quantile cells: edges are the order
/// statistics at ranks `⌊k n / bins⌋`, and a value's bin is the number of
/// edges strictly below it. Ties always share a bin, and the assignment is
/// unchanged by any strictly increasing transform of the values.
pub fn discretize(values: &[f64], bins: usize) -> Vec<usize> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() <= bins {
        return values
            .iter()
            .map(|v| sorted.partition_point(|s| s.total_cmp(v).is_lt()))
            .collect();
    }
    quantile_cells(values, bins)
}

/// Equal-mass cells over the sampled support (see [`discretize`]), without
/// the small-support shortcut.
pub fn quantile_cells(values: &[f64], cells: usize) -> Vec<usize> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..cells).map(|k| sorted[(k * n / cells).min(n - 1)]).collect();
    values
        .iter()
        .map(|v| edges.partition_point(|e| e.total_cmp(v).is_lt()))
        .collect()
}

/// Joint cell id per row after discretising every column.
pub fn joint_cells(z: &Matrix, bins: usize) -> Vec<usize> {
    let cols: Vec<Vec<usize>> = (0..z.cols()).map(|j| discretize(&z.column(j), bins)).collect();
    (0..z.rows())
        .map(|i| cols.iter().fold(0usize, |acc, c| acc * (bins + 1) + c[i]))
        .collect()
}

/// Projection of `z` on its (at most) two leading principal directions.
/// Codes with two or fewer dimensions are returned unchanged.
pub fn leading_components(z: &Matrix, k: usize) -> Result<Matrix> {
    if z.cols() <= k {
        return Ok(z.clone());
    }
    let cov = z.covariance()?;
    let (_, vecs) = symmetric_eigen(&cov)?;
    let dirs = vecs.select_cols(&(0..k).collect::<Vec<_>>());
    z.centered().matmul(&dirs)
}

fn entropy_of_weights<'a>(weights: impl Iterator<Item = &'a f64>, total: f64) -> f64 {
    let mut h = 0.0;
    for &w in weights {
        if w > 0.0 {
            let p = w / total;
            h -= p * libm::log2(p);
        }
    }
    h
}

/// Entropy in bits of the empirical distribution of `labels`.
pub fn entropy<K: Ord + Clone>(labels: &[K]) -> f64 {
    let mut counts: BTreeMap<K, f64> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.clone()).or_insert(0.0) += 1.0;
    }
    entropy_of_weights(counts.values(), labels.len() as f64)
}

/// Plug-in mutual information in bits.
pub fn mutual_information<A: Ord + Clone, B: Ord + Clone>(a: &[A], b: &[B]) -> Result<f64> {
    check_dim("mutual_information", a.len(), b.len())?;
    let joint: Vec<(A, B)> = a.iter().cloned().zip(b.iter().cloned()).collect();
    Ok((entropy(a) + entropy(b) - entropy(&joint)).max(0.0))
}

/// `I / sqrt(H_a H_b)`, zero when either side is constant.
pub fn nmi<A: Ord + Clone, B: Ord + Clone>(a: &[A], b: &[B]) -> Result<f64> {
    let (ha, hb) = (entropy(a), entropy(b));
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    Ok(mutual_information(a, b)? / libm::sqrt(ha * hb))
}

/// Weighted plug-in conditional mutual information `I(A; B | C)` in bits.
///
/// Weights need not be normalised. Exact when fed an enumerated support
/// with its probabilities.
pub fn conditional_mi_weighted<A, B, C>(rows: &[(A, B, C, f64)]) -> f64
where
    A: Ord + Clone,
    B: Ord + Clone,
    C: Ord + Clone,
{
    let total: f64 = rows.iter().map(|r| r.3).sum();
    let mut ac: BTreeMap<(A, C), f64> = BTreeMap::new();
    let mut bc: BTreeMap<(B, C), f64> = BTreeMap::new();
    let mut abc: BTreeMap<(A, B, C), f64> = BTreeMap::new();
    let mut c: BTreeMap<C, f64> = BTreeMap::new();
    for (a, b, cc, w) in rows {
        *ac.entry((a.clone(), cc.clone())).or_insert(0.0) += w;
        *bc.entry((b.clone(), cc.clone())).or_insert(0.0) += w;
        *abc.entry((a.clone(), b.clone(), cc.clone())).or_insert(0.0) += w;
        *c.entry(cc.clone()).or_insert(0.0) += w;
    }
    let v = entropy_of_weights(ac.values(), total) + entropy_of_weights(bc.values(), total)
        - entropy_of_weights(abc.values(), total)
        - entropy_of_weights(c.values(), total);
    v.max(0.0)
}

/// `Î(Z; V) / Ĥ(V)` with `Z` reduced to at most two principal directions
/// and quantile-binned per direction.
pub fn normalized_mi(z: &Matrix, v: &[usize], bins: usize) -> Result<f64> {
    check_dim("normalized_mi", z.rows(), v.len())?;
    let hv = entropy(v);
    if hv <= 0.0 {
        return Err(Error::Undefined("H(V) = 0: nuisance is constant".into()));
    }
    let reduced = leading_components(z, 2)?;
    let cells = joint_cells(&reduced, bins);
    Ok(mutual_information(&cells, v)? / hv)
}

/// Result of the factor-alignment score.
#[derive(Debug, Clone, PartialEq)]
pub struct Disentanglement {
    /// `Σ_u min_d (1 − NMI(Z_d, u))` over non-constant factors.
    pub score: f64,
    /// Best NMI per factor, `None` when the factor was skipped.
    pub best_nmi: Vec<Option<f64>>,
    /// Indices of constant factors that were skipped.
    pub skipped: Vec<usize>,
}

pub fn disentanglement_nmi(z: &Matrix, factors: &Matrix, bins: usize) -> Result<Disentanglement> {
    check_dim("disentanglement_nmi", z.rows(), factors.rows())?;
    let zbins: Vec<Vec<usize>> = (0..z.cols()).map(|d| discretize(&z.column(d), bins)).collect();
    let mut score = 0.0;
    let mut best_nmi = Vec::new();
    let mut skipped = Vec::new();
    for u in 0..factors.cols() {
        let fb = discretize(&factors.column(u), bins);
        if entropy(&fb) <= 0.0 {
            skipped.push(u);
            best_nmi.push(None);
            continue;
        }
        let mut best = 0.0f64;
        for zb in &zbins {
            best = best.max(nmi(zb, &fb)?);
        }
        score += 1.0 - best;
        best_nmi.push(Some(best));
    }
    Ok(Disentanglement {
        score,
        best_nmi,
        skipped,
    })
}

/// Largest number of distinct values accepted as a discrete variable.
pub const MAX_DISCRETE: usize = 256;

fn exact_keys(m: &Matrix) -> Vec<Vec<u64>> {
    m.iter_rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect()
}

fn distinct<K: Ord + Clone>(keys: &[K]) -> usize {
    let mut s: Vec<K> = keys.to_vec();
    s.sort();
    s.dedup();
    s.len()
}

/// Plug-in `I(X; Z | T)` in bits.
///
/// `X` and `T` must be discrete (at most [`MAX_DISCRETE`] distinct rows);
/// `Z` is used exactly when discrete and quantile-binned per dimension
/// otherwise.
pub fn sufficiency_surrogate(z: &Matrix, x: &Matrix, t: &Matrix) -> Result<f64> {
    check_dim("sufficiency rows", z.rows(), x.rows())?;
    check_dim("sufficiency rows", z.rows(), t.rows())?;
    let xk = exact_keys(x);
    let tk = exact_keys(t);
    if distinct(&xk) > MAX_DISCRETE {
        return Err(Error::NotApplicable("I(X;Z|T) needs discrete X".into()));
    }
    if distinct(&tk) > MAX_DISCRETE {
        return Err(Error::NotApplicable("I(X;Z|T) needs discrete orbit ids".into()));
    }
    let zk = exact_keys(z);
    let zk: Vec<Vec<u64>> = if distinct(&zk) <= MAX_DISCRETE {
        zk
    } else {
        joint_cells(z, DEFAULT_BINS)
            .into_iter()
            .map(|c| alloc::vec![c as u64])
            .collect()
    };
    let w = 1.0 / z.rows().max(1) as f64;
    let rows: Vec<_> = xk.into_iter().zip(zk).zip(tk).map(|((a, b), c)| (a, b, c, w)).collect();
    Ok(conditional_mi_weighted(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use alloc::vec;

    #[test]
    fn quantile_bins_are_monotone_invariant() {
        let mut rng = Rng::new(1);
        let v: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
        let g: Vec<f64> = v.iter().map(|x| libm::exp(3.0 * x) + 2.0 * x).collect();
        assert_eq!(discretize(&v, 8), discretize(&g, 8));
        let b = discretize(&v, 8);
        for k in 0..8 {
            let c = b.iter().filter(|&&x| x == k).count();
            assert!((c as i64 - 125).abs() <= 1, "{c}");
        }
    }

    #[test]
    fn small_support_keeps_values_apart() {
        let v = [1.0, 0.0, 1.0, 1.0, 0.0];
        assert_eq!(discretize(&v, 8), vec![1, 0, 1, 1, 0]);
    }

    #[test]
    fn nmi_of_identical_is_one_and_of_constant_is_zero() {
        let a = [0usize, 1, 2, 0, 1, 2];
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&a, &[5usize; 6]).unwrap(), 0.0);
    }

    #[test]
    fn normalized_mi_binary_copy_is_one() {
        let v: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let z = Matrix::from_fn(100, 1, |i, _| v[i] as f64);
        assert!((normalized_mi(&z, &v, 8).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(normalized_mi(&z, &[0; 100], 8), Err(Error::Undefined(_))));
    }

    #[test]
    fn cmi_on_enumerated_support() {
        // X = (U, V) uniform, T = U, Z = (U, V): I(X; Z | T) = 1 bit
        let mut rows = Vec::new();
        for u in 0..2u8 {
            for v in 0..2u8 {
                rows.push(((u, v), (u, v), u, 0.25));
            }
        }
        assert_eq!(conditional_mi_weighted(&rows), 1.0);
    }
}
