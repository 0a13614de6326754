//! Certification metrics computed on frozen representations.
//!
//! Every function here only reads the encoder. Information quantities are
//! in bits, probe losses in nats.

mod curve;
mod geometry;
pub mod info;
mod probe;

pub use curve::{default_grid, invariance_curve, trapezoid, Curve};
pub use geometry::{
    fisher_trace, geometry_diagnostics, median_bandwidth, mmd2_unbiased, separability, smoothness, GeometryDiagnostics,
    Separability, FISHER_STEP,
};
pub use info::{disentanglement_nmi, normalized_mi, sufficiency_surrogate, Disentanglement, DEFAULT_BINS};
pub use probe::{
    auc_binary, leakage_probe, macro_auc, probe_accuracy_curve, probe_data_efficiency, LeakageReport,
    PROBE_TEST_FRACTION,
};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Representation};
use crate::worlds::World;

/// Exact `I(X; Z | π(X))` in bits over an enumerable world's support.
pub fn sufficiency_exact(rep: &dyn Representation, world: &World) -> Result<f64> {
    let support = world
        .support()
        .ok_or_else(|| Error::NotApplicable(alloc::format!("{} has continuous inputs", world.name())))?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    let rows: Vec<_> = support
        .iter()
        .map(|(x, p)| (bits(x), bits(&rep.encode(x)), bits(&world.orbit(x)), *p))
        .collect();
    Ok(info::conditional_mi_weighted(&rows))
}

/// Codes after the injective affine map `z ↦ z A + c`.
pub fn reparameterize(z: &Matrix, a: &Matrix, c: &[f64]) -> Result<Matrix> {
    let mut out = z.matmul(a)?;
    for i in 0..out.rows() {
        for (o, ci) in out.row_mut(i).iter_mut().zip(c) {
            *o += ci;
        }
    }
    Ok(out)
}
