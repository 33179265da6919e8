//! Gaussian, Markov-normalized and diffusion kernels over point clouds,
//! automatic bandwidth selection, and out-of-sample kernel expansions.

mod bandwidth;
mod model;
mod sparse;

pub use bandwidth::{
    pairwise_squared_distances, quantile, select_bandwidth, subsample_indices, BandwidthPolicy,
    DEFAULT_SUBSAMPLE_FRACTION, DEFAULT_THETA_ZERO,
};
pub use model::{diffusion_model, DiffusionMatrices, Evaluation, KernelKind, KernelModel, Section};
pub use sparse::{SparseKernelMatrix, SparseRow};

use crate::error::{Error, Result};
use crate::points::{check_dim, squared_distance, Points};

pub(crate) use sparse::gaussian_rows;

/// `exp(-|x - y|^2 / epsilon)`.
pub fn gaussian(x: &[f64], y: &[f64], epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_dim(x.len(), y.len())?;
    Ok((-squared_distance(x, y) / epsilon).exp())
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {epsilon}"
        )))
    }
}

pub(crate) fn check_theta_zero(theta_zero: f64) -> Result<()> {
    if theta_zero > 0.0 && theta_zero < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "theta_zero must lie in (0,1), got {theta_zero}"
        )))
    }
}

/// Row-normalized Gaussian kernel between `rows` and `cols`: the empirical
/// measure on `cols` plays the role of the normalizing measure. Raw values
/// below `theta_zero` are dropped before normalization.
pub fn markov_matrix(
    rows: &Points,
    cols: &Points,
    epsilon: f64,
    theta_zero: f64,
) -> Result<SparseKernelMatrix> {
    check_epsilon(epsilon)?;
    check_theta_zero(theta_zero)?;
    check_dim(rows.dim(), cols.dim())?;
    if cols.is_empty() {
        return Err(Error::InvalidParameter(
            "markov kernel needs at least one column point".into(),
        ));
    }
    let mut raw = gaussian_rows(rows, cols, epsilon, theta_zero);
    for (i, row) in raw.iter_mut().enumerate() {
        if row.is_empty() {
            return Err(Error::IsolatedPoint { row: i });
        }
        let total = row.sum();
        for v in &mut row.values {
            *v /= total;
        }
    }
    Ok(SparseKernelMatrix::from_rows(cols.len(), raw))
}

/// Thresholded (unnormalized) Gaussian kernel matrix.
pub fn gaussian_matrix(
    rows: &Points,
    cols: &Points,
    epsilon: f64,
    theta_zero: f64,
) -> Result<SparseKernelMatrix> {
    check_epsilon(epsilon)?;
    check_theta_zero(theta_zero)?;
    check_dim(rows.dim(), cols.dim())?;
    Ok(SparseKernelMatrix::from_rows(
        cols.len(),
        gaussian_rows(rows, cols, epsilon, theta_zero),
    ))
}
