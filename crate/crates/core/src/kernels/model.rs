use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sparse::{gaussian_row, gaussian_rows, SparseKernelMatrix, SparseRow};
use super::{check_epsilon, check_theta_zero};
use crate::error::{Error, Result};
use crate::points::{check_dim, squared_distance, Points};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-|x - c|^2 / epsilon)`.
    Gaussian,
    /// Gaussian normalized to unit mass over the centers.
    MarkovGaussian,
    /// Gaussian divided by left and right degree functions.
    Diffusion,
}

/// A fitted kernel over a fixed set of centers.
///
/// For the diffusion kind the degrees are taken against the empirical
/// measure of the centers:
///
/// ```text
/// deg_r(x) = mean_c k(x, c)
/// deg_l(x) = mean_c k(x, c) / deg_r(c)
/// k_diff(x, y) = k(x, y) / (deg_l(x) deg_r(y))
/// ```
///
/// and `w_n = (deg_r(c_n) deg_l(c_n))^(-1/2)` are the weights of the
/// symmetrized kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelModelRepr")]
pub struct KernelModel {
    kind: KernelKind,
    epsilon: f64,
    theta_zero: f64,
    centers: Points,
    #[serde(default)]
    deg_r: Vec<f64>,
    #[serde(default)]
    deg_l: Vec<f64>,
    #[serde(default)]
    w: Vec<f64>,
}

#[derive(Deserialize)]
struct KernelModelRepr {
    kind: KernelKind,
    epsilon: f64,
    theta_zero: f64,
    centers: Points,
    #[serde(default)]
    deg_r: Vec<f64>,
    #[serde(default)]
    deg_l: Vec<f64>,
    #[serde(default)]
    w: Vec<f64>,
}

impl TryFrom<KernelModelRepr> for KernelModel {
    type Error = Error;

    fn try_from(r: KernelModelRepr) -> Result<Self> {
        let model = KernelModel {
            kind: r.kind,
            epsilon: r.epsilon,
            theta_zero: r.theta_zero,
            centers: r.centers,
            deg_r: r.deg_r,
            deg_l: r.deg_l,
            w: r.w,
        };
        model.validate()?;
        Ok(model)
    }
}

/// The row `r(x)` over the centers with `expansion(x) = r(x) . a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub row: SparseRow,
    /// Set when every raw Gaussian value fell below the zero threshold and
    /// the row of the nearest center was substituted.
    pub extrapolated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub extrapolated: bool,
}

/// Matrices of a diffusion kernel over its own centers.
#[derive(Clone, Debug)]
pub struct DiffusionMatrices {
    /// Thresholded Gaussian kernel.
    pub gaussian: SparseKernelMatrix,
    /// `k_diff(x_i, x_j)`; not symmetric in general.
    pub k_diff: SparseKernelMatrix,
    /// Symmetrized `k(x_i, x_j) w_i w_j`.
    pub k_sym: SparseKernelMatrix,
}

/// Fits a diffusion kernel on `data` and returns it with its matrices.
pub fn diffusion_model(
    data: &Points,
    epsilon: f64,
    theta_zero: f64,
) -> Result<(KernelModel, DiffusionMatrices)> {
    check_epsilon(epsilon)?;
    check_theta_zero(theta_zero)?;
    if data.len() < 2 {
        return Err(Error::InvalidParameter(
            "diffusion kernel needs at least two points".into(),
        ));
    }
    let n = data.len() as f64;
    let rows = gaussian_rows(data, data, epsilon, theta_zero);
    let gaussian = SparseKernelMatrix::from_rows(data.len(), rows);

    let mut deg_r = Vec::with_capacity(data.len());
    for (i, s) in gaussian.row_sums().into_iter().enumerate() {
        if s <= 0.0 {
            return Err(Error::IsolatedPoint { row: i });
        }
        deg_r.push(s / n);
    }
    let deg_l: Vec<f64> = (0..data.len())
        .map(|i| {
            let (idx, vals) = gaussian.row(i);
            idx.iter()
                .zip(vals)
                .map(|(&j, &v)| v / deg_r[j])
                .sum::<f64>()
                / n
        })
        .collect();
    let w: Vec<f64> = deg_r
        .iter()
        .zip(&deg_l)
        .map(|(r, l)| 1.0 / (r * l).sqrt())
        .collect();

    let k_diff = gaussian.map_rows(|i, idx, vals| {
        idx.iter()
            .zip(vals)
            .map(|(&j, &v)| v / (deg_l[i] * deg_r[j]))
            .collect()
    });
    let k_sym = gaussian.map_rows(|i, idx, vals| {
        idx.iter()
            .zip(vals)
            .map(|(&j, &v)| v * w[i] * w[j])
            .collect()
    });

    let model = KernelModel {
        kind: KernelKind::Diffusion,
        epsilon,
        theta_zero,
        centers: data.clone(),
        deg_r,
        deg_l,
        w,
    };
    model.validate()?;
    Ok((
        model,
        DiffusionMatrices {
            gaussian,
            k_diff,
            k_sym,
        },
    ))
}

impl KernelModel {
    pub fn gaussian(centers: Points, epsilon: f64, theta_zero: f64) -> Result<Self> {
        Self::plain(KernelKind::Gaussian, centers, epsilon, theta_zero)
    }

    pub fn markov_gaussian(centers: Points, epsilon: f64, theta_zero: f64) -> Result<Self> {
        Self::plain(KernelKind::MarkovGaussian, centers, epsilon, theta_zero)
    }

    fn plain(kind: KernelKind, centers: Points, epsilon: f64, theta_zero: f64) -> Result<Self> {
        let model = KernelModel {
            kind,
            epsilon,
            theta_zero,
            centers,
            deg_r: Vec::new(),
            deg_l: Vec::new(),
            w: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        check_theta_zero(self.theta_zero)?;
        if self.centers.is_empty() {
            return Err(Error::InvalidParameter(
                "kernel model has no centers".into(),
            ));
        }
        if self.kind == KernelKind::Diffusion {
            let m = self.centers.len();
            if self.deg_r.len() != m || self.deg_l.len() != m || self.w.len() != m {
                return Err(Error::InvalidParameter(
                    "diffusion kernel needs one degree and weight per center".into(),
                ));
            }
            let positive = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x.is_finite());
            if !positive(&self.deg_r) || !positive(&self.deg_l) || !positive(&self.w) {
                return Err(Error::InvalidParameter(
                    "diffusion degrees and weights must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn theta_zero(&self) -> f64 {
        self.theta_zero
    }

    pub fn centers(&self) -> &Points {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    pub fn deg_r(&self) -> &[f64] {
        &self.deg_r
    }

    pub fn deg_l(&self) -> &[f64] {
        &self.deg_l
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Index of the closest center, lowest index on ties.
    pub fn nearest_center(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (j, c) in self.centers.iter().enumerate() {
            let s = squared_distance(x, c);
            if s < best.1 {
                best = (j, s);
            }
        }
        best.0
    }

    /// Raw thresholded Gaussian row, falling back to the nearest center's
    /// row when nothing survives the threshold.
    fn raw_row(&self, x: &[f64]) -> Result<(SparseRow, bool)> {
        check_dim(self.dim(), x.len())?;
        let row = gaussian_row(x, &self.centers, self.epsilon, self.theta_zero);
        if !row.is_empty() {
            return Ok((row, false));
        }
        let nearest = self.centers.row(self.nearest_center(x));
        Ok((
            gaussian_row(nearest, &self.centers, self.epsilon, self.theta_zero),
            true,
        ))
    }

    /// Degree functions `(rho_r(x), rho_l(x))` of an arbitrary point against
    /// the centers (diffusion kind). Zero when `x` is far from every center.
    pub fn degree_functions(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.require_diffusion()?;
        check_dim(self.dim(), x.len())?;
        let row = gaussian_row(x, &self.centers, self.epsilon, self.theta_zero);
        let m = self.len() as f64;
        let rho_r = row.sum() / m;
        let rho_l = row
            .indices
            .iter()
            .zip(&row.values)
            .map(|(&j, &v)| v / self.deg_r[j])
            .sum::<f64>()
            / m;
        Ok((rho_r, rho_l))
    }

    fn require_diffusion(&self) -> Result<()> {
        if self.kind == KernelKind::Diffusion {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "operation needs a diffusion kernel".into(),
            ))
        }
    }

    /// Section row of the expansion at `x`.
    ///
    /// Gaussian: `k(x, c_n)`. Markov: `k(x, c_n) / sum_m k(x, c_m)`.
    /// Diffusion: `k_diff(x, c_n) / M`, which is row-stochastic.
    pub fn section(&self, x: &[f64]) -> Result<Section> {
        let (mut row, extrapolated) = self.raw_row(x)?;
        match self.kind {
            KernelKind::Gaussian => {}
            KernelKind::MarkovGaussian => {
                let total = row.sum();
                row.values.iter_mut().for_each(|v| *v /= total);
            }
            KernelKind::Diffusion => {
                for (v, &j) in row.values.iter_mut().zip(&row.indices) {
                    *v /= self.deg_r[j];
                }
                let total = row.sum();
                row.values.iter_mut().for_each(|v| *v /= total);
            }
        }
        Ok(Section { row, extrapolated })
    }

    /// Section row of the symmetrized diffusion kernel,
    /// `(1/M) [rho_l(x) rho_r(x)]^(-1/2) k(x, c_n) w_n`.
    pub fn symmetric_section(&self, x: &[f64]) -> Result<Section> {
        self.require_diffusion()?;
        let (mut row, extrapolated) = self.raw_row(x)?;
        let m = self.len() as f64;
        let rho_r = row.sum() / m;
        let rho_l = row
            .indices
            .iter()
            .zip(&row.values)
            .map(|(&j, &v)| v / self.deg_r[j])
            .sum::<f64>()
            / m;
        let scale = 1.0 / (m * (rho_r * rho_l).sqrt());
        for (v, &j) in row.values.iter_mut().zip(&row.indices) {
            *v *= self.w[j] * scale;
        }
        Ok(Section { row, extrapolated })
    }

    pub fn evaluate_expansion(&self, coefficients: &[f64], x: &[f64]) -> Result<Evaluation> {
        check_dim(self.len(), coefficients.len())?;
        let section = self.section(x)?;
        Ok(Evaluation {
            value: section.row.dot(coefficients),
            extrapolated: section.extrapolated,
        })
    }

    /// Section rows for many points, with their extrapolation flags.
    pub fn sections(&self, points: &Points) -> Result<(SparseKernelMatrix, Vec<bool>)> {
        check_dim(self.dim(), points.dim())?;
        let sections: Vec<Section> = (0..points.len())
            .into_par_iter()
            .map(|i| self.section(points.row(i)))
            .collect::<Result<_>>()?;
        let flags = sections.iter().map(|s| s.extrapolated).collect();
        let rows = sections.into_iter().map(|s| s.row).collect();
        Ok((SparseKernelMatrix::from_rows(self.len(), rows), flags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gaussian, select_bandwidth, BandwidthPolicy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, d: usize, seed: u64) -> Points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Points::new(d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    struct DenseDiffusion {
        deg_r: Vec<f64>,
        deg_l: Vec<f64>,
        k: Vec<Vec<f64>>,
    }

    /// Degrees and Gaussian matrix without any thresholding.
    fn dense_diffusion(data: &Points, eps: f64) -> DenseDiffusion {
        let n = data.len();
        let k: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| gaussian(data.row(i), data.row(j), eps).unwrap())
                    .collect()
            })
            .collect();
        let deg_r: Vec<f64> = k.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
        let deg_l: Vec<f64> = k
            .iter()
            .map(|r| r.iter().zip(&deg_r).map(|(v, d)| v / d).sum::<f64>() / n as f64)
            .collect();
        DenseDiffusion { deg_r, deg_l, k }
    }

    #[test]
    fn two_point_algebra() {
        let d = 0.7f64;
        let eps = 0.5;
        let data = Points::from_rows(&[vec![0.0, 0.0], vec![d, 0.0]]).unwrap();
        let (model, mats) = diffusion_model(&data, eps, 1e-14).unwrap();
        let g = (-d * d / eps).exp();
        // deg_r = (1 + g)/2 for both points, deg_l = 1.
        for i in 0..2 {
            assert!((model.deg_r()[i] - (1.0 + g) / 2.0).abs() < 1e-15);
            assert!((model.deg_l()[i] - 1.0).abs() < 1e-15);
            let ksym = mats.k_sym.get(i, i);
            assert!((ksym * model.deg_r()[i] * model.deg_l()[i] - 1.0).abs() < 1e-14);
        }
        assert!(mats.k_sym.max_asymmetry() < 1e-15);
    }

    #[test]
    fn equilateral_diffusion_is_uniform_off_diagonal() {
        let h = 3f64.sqrt() / 2.0;
        let data = Points::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]]).unwrap();
        let (_, mats) = diffusion_model(&data, 0.8, 1e-14).unwrap();
        let off = mats.k_diff.get(0, 1);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((mats.k_diff.get(i, j) - off).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn similarity_transform_identity() {
        let data = cloud(200, 3, 21);
        let eps = select_bandwidth(&data, &BandwidthPolicy::new(0.05).unwrap()).unwrap();
        let (model, mats) = diffusion_model(&data, eps, 1e-14).unwrap();
        let rho: Vec<f64> = model
            .deg_l()
            .iter()
            .zip(model.deg_r())
            .map(|(l, r)| (l / r).sqrt())
            .collect();
        for i in 0..200 {
            let (idx, vals) = mats.k_diff.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                let lhs = rho[i] * v / rho[j];
                let rhs = mats.k_sym.get(i, j);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }
        }
        assert!(mats.k_sym.max_asymmetry() < 1e-12);
        assert!(mats.k_diff.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn diffusion_expansion_matches_dense_oracle() {
        let data = cloud(120, 2, 4);
        let eps = select_bandwidth(&data, &BandwidthPolicy::new(0.1).unwrap()).unwrap();
        let (model, _) = diffusion_model(&data, eps, 1e-14).unwrap();
        let dense = dense_diffusion(&data, eps);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let coeffs: Vec<f64> = (0..120).map(|_| rng.random_range(-2.0..2.0)).collect();
        let n = 120.0;
        for i in (0..120).step_by(7) {
            let oracle: f64 = (0..120)
                .map(|j| coeffs[j] * dense.k[i][j] / (dense.deg_l[i] * dense.deg_r[j]))
                .sum::<f64>()
                / n;
            let got = model.evaluate_expansion(&coeffs, data.row(i)).unwrap();
            assert!(!got.extrapolated);
            assert!(
                (got.value - oracle).abs() < 1e-10,
                "{} vs {oracle}",
                got.value
            );

            // The symmetric section follows the same oracle through k~.
            let sym_oracle: f64 = (0..120)
                .map(|j| {
                    coeffs[j] * dense.k[i][j]
                        / (dense.deg_r[i] * dense.deg_r[j] * dense.deg_l[i] * dense.deg_l[j]).sqrt()
                })
                .sum::<f64>()
                / n;
            let sym = model
                .symmetric_section(data.row(i))
                .unwrap()
                .row
                .dot(&coeffs);
            assert!((sym - sym_oracle).abs() < 1e-10 * sym_oracle.abs().max(1.0));
        }
    }

    #[test]
    fn out_of_sample_similarity_identity() {
        let data = cloud(150, 2, 8);
        let eps = select_bandwidth(&data, &BandwidthPolicy::new(0.05).unwrap()).unwrap();
        let (model, _) = diffusion_model(&data, eps, 1e-14).unwrap();
        let x = [0.13, -0.42];
        let (rho_r, rho_l) = model.degree_functions(&x).unwrap();
        let rho_x = (rho_l / rho_r).sqrt();
        let plain = model.section(&x).unwrap().row;
        let sym = model.symmetric_section(&x).unwrap().row;
        assert_eq!(plain.indices, sym.indices);
        for (k, &j) in plain.indices.iter().enumerate() {
            let rho_c = (model.deg_l()[j] / model.deg_r()[j]).sqrt();
            assert!(
                (rho_x * plain.values[k] / rho_c - sym.values[k]).abs()
                    < 1e-12 * sym.values[k].max(1.0)
            );
        }
    }

    #[test]
    fn gaussian_one_hot_at_center() {
        let centers = cloud(30, 3, 2);
        let model = KernelModel::gaussian(centers.clone(), 0.4, 1e-14).unwrap();
        let mut a = vec![0.0; 30];
        a[17] = 1.0;
        let e = model.evaluate_expansion(&a, centers.row(17)).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(!e.extrapolated);
        let e = model.evaluate_expansion(&a, centers.row(3)).unwrap();
        let expected = gaussian(centers.row(3), centers.row(17), 0.4).unwrap();
        assert_eq!(e.value, if expected >= 1e-14 { expected } else { 0.0 });
    }

    #[test]
    fn far_field_falls_back_to_nearest_center() {
        let data = cloud(80, 2, 6);
        let eps = 0.05;
        let (model, _) = diffusion_model(&data, eps, 1e-14).unwrap();
        let coeffs: Vec<f64> = (0..80).map(|j| (j as f64).sin()).collect();
        // Squared distance at least 1e4 * eps from every center.
        let far = [30.0, 0.0];
        for c in data.iter() {
            assert!(squared_distance(&far, c) >= 1e4 * eps);
        }
        let got = model.evaluate_expansion(&coeffs, &far).unwrap();
        assert!(got.extrapolated);
        let nearest = model.nearest_center(&far);
        let at_center = model
            .evaluate_expansion(&coeffs, data.row(nearest))
            .unwrap();
        assert_eq!(got.value, at_center.value);
        assert!(!at_center.extrapolated);
    }

    #[test]
    fn markov_kind_reproduces_constants() {
        let centers = cloud(40, 2, 3);
        let model = KernelModel::markov_gaussian(centers, 0.2, 1e-14).unwrap();
        let e = model.evaluate_expansion(&[2.5; 40], &[0.1, 0.1]).unwrap();
        assert!((e.value - 2.5).abs() < 1e-14);
    }

    #[test]
    fn model_json_round_trip() {
        let data = cloud(25, 2, 1);
        let (model, _) = diffusion_model(&data, 0.3, 1e-14).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        for key in [
            "\"kind\":\"diffusion\"",
            "\"epsilon\"",
            "\"theta_zero\"",
            "\"centers\"",
            "\"deg_r\"",
            "\"deg_l\"",
            "\"w\"",
        ] {
            assert!(json.contains(key), "{key}");
        }
        let back: KernelModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["epsilon"] = serde_json::json!(-1.0);
        assert!(serde_json::from_value::<KernelModel>(value).is_err());
    }

    #[test]
    fn errors() {
        let data = cloud(10, 2, 1);
        assert!(diffusion_model(&data, 0.0, 1e-14).is_err());
        assert!(diffusion_model(&data.select(&[0]), 0.1, 1e-14).is_err());
        let (model, _) = diffusion_model(&data, 0.3, 1e-14).unwrap();
        assert!(model.evaluate_expansion(&[1.0; 9], &[0.0, 0.0]).is_err());
        assert!(model.evaluate_expansion(&[1.0; 10], &[0.0]).is_err());
        let g = KernelModel::gaussian(data, 0.3, 1e-14).unwrap();
        assert!(g.symmetric_section(&[0.0, 0.0]).is_err());
    }
}
