use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::points::{squared_distance, Points};

/// One row of a sparse matrix, column indices ascending.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&j, &v)| v * x[j])
            .sum()
    }
}

/// Compressed sparse row storage for kernel matrices. Only entries that
/// survived thresholding are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseKernelMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseKernelMatrix {
    pub fn from_rows(cols: usize, rows: Vec<SparseRow>) -> Self {
        let nnz = rows.iter().map(|r| r.indices.len()).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in &rows {
            debug_assert!(row.indices.windows(2).all(|w| w[0] < w[1]));
            debug_assert!(row.indices.iter().all(|&j| j < cols));
            col_idx.extend_from_slice(&row.indices);
            values.extend_from_slice(&row.values);
            row_ptr.push(col_idx.len());
        }
        SparseKernelMatrix {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| SparseRow {
                indices: vec![i],
                values: vec![1.0],
            })
            .collect();
        SparseKernelMatrix::from_rows(n, rows)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Fraction of entries that are stored.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.rows as f64 * self.cols as f64)
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, vals) = self.row(i);
        match idx.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .into_par_iter()
            .map(|i| {
                let (idx, vals) = self.row(i);
                idx.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect())
    }

    /// Dense product `self * other` where `other` is sparse.
    pub fn mul_sparse_dense(&self, other: &SparseKernelMatrix) -> Result<DMatrix<f64>> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let rows: Vec<Vec<f64>> = (0..self.rows)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; other.cols];
                let (idx, vals) = self.row(i);
                for (&k, &a) in idx.iter().zip(vals) {
                    let (jdx, bvals) = other.row(k);
                    for (&j, &b) in jdx.iter().zip(bvals) {
                        acc[j] += a * b;
                    }
                }
                acc
            })
            .collect();
        Ok(DMatrix::from_fn(self.rows, other.cols, |i, j| rows[i][j]))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (idx, vals) = self.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Largest |A_ij - A_ji| over the stored pattern and its transpose.
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "asymmetry needs a square matrix");
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            let (idx, vals) = self.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub(crate) fn map_rows(&self, f: impl Fn(usize, &[usize], &[f64]) -> Vec<f64> + Sync) -> Self {
        let values: Vec<f64> = (0..self.rows)
            .into_par_iter()
            .flat_map_iter(|i| {
                let (idx, vals) = self.row(i);
                f(i, idx, vals)
            })
            .collect();
        debug_assert_eq!(values.len(), self.values.len());
        SparseKernelMatrix {
            values,
            ..self.clone()
        }
    }
}

/// Gaussian values `exp(-|x - c|^2 / epsilon)` of one point against every
/// center, keeping only values at or above `theta_zero`.
pub(crate) fn gaussian_row(
    x: &[f64],
    centers: &Points,
    epsilon: f64,
    theta_zero: f64,
) -> SparseRow {
    // exp(-s/eps) >= theta_zero  <=>  s <= eps * ln(1/theta_zero); the slack
    // only guards the prefilter, the kept set is decided by the value test.
    let cutoff = epsilon * (1.0 / theta_zero).ln() * (1.0 + 1e-9);
    let mut row = SparseRow::default();
    for (j, c) in centers.iter().enumerate() {
        let s = squared_distance(x, c);
        if s <= cutoff {
            let v = (-s / epsilon).exp();
            if v >= theta_zero {
                row.indices.push(j);
                row.values.push(v);
            }
        }
    }
    row
}

pub(crate) fn gaussian_rows(
    rows: &Points,
    cols: &Points,
    epsilon: f64,
    theta_zero: f64,
) -> Vec<SparseRow> {
    (0..rows.len())
        .into_par_iter()
        .map(|i| gaussian_row(rows.row(i), cols, epsilon, theta_zero))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_accessors() {
        let m = SparseKernelMatrix::from_rows(
            3,
            vec![
                SparseRow {
                    indices: vec![0, 2],
                    values: vec![1.0, 2.0],
                },
                SparseRow::default(),
            ],
        );
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 2), 2.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]).unwrap(), vec![3.0, 0.0]);
        assert_eq!(m.row_sums(), vec![3.0, 0.0]);
        assert!(m.mul_vec(&[1.0]).is_err());
    }

    #[test]
    fn sparse_times_sparse_matches_dense() {
        let a = SparseKernelMatrix::from_rows(
            2,
            vec![
                SparseRow {
                    indices: vec![0, 1],
                    values: vec![1.0, 2.0],
                },
                SparseRow {
                    indices: vec![1],
                    values: vec![3.0],
                },
            ],
        );
        let b = SparseKernelMatrix::from_rows(
            3,
            vec![
                SparseRow {
                    indices: vec![2],
                    values: vec![4.0],
                },
                SparseRow {
                    indices: vec![0, 2],
                    values: vec![5.0, 6.0],
                },
            ],
        );
        let prod = a.mul_sparse_dense(&b).unwrap();
        assert_eq!(prod, a.to_dense() * b.to_dense());
    }
}
