use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

use crate::error::{GllvmError, Result};

fn centered(x: ArrayView2<f64>) -> DMatrix<f64> {
    let (n, d) = x.dim();
    let mut out = DMatrix::from_fn(n, d, |i, k| x[(i, k)]);
    for k in 0..d {
        let mean = out.column(k).mean();
        out.column_mut(k).add_scalar_mut(-mean);
    }
    out
}

/// Procrustes discrepancy after centering both configurations, scaling the
/// target to unit sum of squares, and fitting the candidate by the best
/// orthogonal transform and isotropic scale. The result lies in [0, 1].
pub fn procrustes_error(target: ArrayView2<f64>, candidate: ArrayView2<f64>) -> Result<f64> {
    let (n, d) = target.dim();
    if candidate.dim() != (n, d) {
        return Err(GllvmError::Dimension(format!(
            "target {:?} and candidate {:?} differ in shape",
            target.dim(),
            candidate.dim()
        )));
    }
    if d == 0 || n < d + 1 {
        return Err(GllvmError::Dimension(format!("need at least d + 1 points, got {n} for d = {d}")));
    }
    if target.iter().chain(candidate.iter()).any(|v| !v.is_finite()) {
        return Err(GllvmError::Validation("configurations must be finite".into()));
    }
    let x = centered(target);
    let y = centered(candidate);
    let (sx, sy) = (x.norm_squared(), y.norm_squared());
    let scale = sx.max(sy).max(f64::MIN_POSITIVE);
    if sx <= 1e-24 * scale || sy <= 1e-24 * scale || sx == 0.0 || sy == 0.0 {
        return Err(GllvmError::Degenerate("configuration has zero variance".into()));
    }
    let cross = x.transpose() * &y;
    let trace: f64 = cross.singular_values().iter().sum();
    let err = 1.0 - trace * trace / (sx * sy);
    Ok(err.clamp(0.0, 1.0))
}

/// Candidate rotated, reflected and scaled onto the centred target.
pub fn procrustes_align(target: ArrayView2<f64>, candidate: ArrayView2<f64>) -> Result<Array2<f64>> {
    procrustes_error(target, candidate)?;
    let (n, d) = target.dim();
    let x = centered(target);
    let y = centered(candidate);
    let svd = (x.transpose() * &y).svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let q = vt.transpose() * u.transpose();
    let c = svd.singular_values.sum() / y.norm_squared();
    let fitted = y * q * c;
    Ok(Array2::from_shape_fn((n, d), |(i, k)| fitted[(i, k)]))
}
