//! Conditional expectation `E[Y | X = x]` represented as a kernel expansion
//! over subsampled centers.
//!
//! Given pairs `(x_n, y_n)` the fit builds
//!
//! * `G`: Markov-normalized Gaussian over the inputs (bandwidth `eps1`),
//! * `P`: Markov-normalized Gaussian over the inputs (bandwidth `eps3`),
//! * `K`: diffusion-kernel sections `k(x_n, c_m)` at `M` centers (`eps2`),
//!
//! and returns `a = argmin |P K a - P G y|^2 + delta |a|^2`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    diffusion_model, markov_matrix, select_bandwidth, BandwidthPolicy, Evaluation, KernelModel,
    SparseKernelMatrix, DEFAULT_SUBSAMPLE_FRACTION, DEFAULT_THETA_ZERO,
};
use crate::points::{check_dim, Points};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CenterSelection {
    /// Every `floor(N / M)`-th input.
    Strided,
    /// `M` distinct inputs drawn uniformly.
    Random { seed: u64 },
    /// Exactly these inputs; overrides the center count.
    Indices { indices: Vec<usize> },
}

/// Bandwidths of the smoothing kernel, the RKHS kernel and the Markov kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub smoothing: f64,
    pub rkhs: f64,
    pub markov: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondExpParams {
    /// Retained-entry fraction for the smoothing kernel `G`.
    pub eta1: f64,
    /// Retained-entry fraction for the RKHS kernel `k`.
    pub eta2: f64,
    /// Retained-entry fraction for the Markov kernel `P`.
    pub eta3: f64,
    /// Ridge parameter.
    pub delta: f64,
    /// Number of centers `M`.
    pub centers: usize,
    pub center_selection: CenterSelection,
    pub theta_zero: f64,
    pub subsample_fraction: f64,
    /// Use `eps2 = 2 eps1` instead of selecting `eps2` from `eta2`.
    #[serde(default)]
    pub rkhs_twice_smoothing: bool,
    /// Skip bandwidth selection and use these values.
    #[serde(default)]
    pub bandwidths: Option<Bandwidths>,
}

impl Default for CondExpParams {
    fn default() -> Self {
        CondExpParams {
            eta1: 0.003,
            eta2: 0.01,
            eta3: 0.01,
            delta: 0.1,
            centers: 500,
            center_selection: CenterSelection::Strided,
            theta_zero: DEFAULT_THETA_ZERO,
            subsample_fraction: DEFAULT_SUBSAMPLE_FRACTION,
            rkhs_twice_smoothing: false,
            bandwidths: None,
        }
    }
}

impl CondExpParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, eta) in [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta3", self.eta3),
        ] {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0,1), got {eta}"
                )));
            }
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta must be >= 0, got {}",
                self.delta
            )));
        }
        let m = self.center_count();
        if m == 0 || m > n {
            return Err(Error::InvalidParameter(format!(
                "center count must lie in [1, {n}], got {m}"
            )));
        }
        if let Some(b) = &self.bandwidths {
            for eps in [b.smoothing, b.rkhs, b.markov] {
                crate::kernels::gaussian(&[0.0], &[0.0], eps)?;
            }
        }
        self.policy(self.eta1).validate()
    }

    fn center_count(&self) -> usize {
        match &self.center_selection {
            CenterSelection::Indices { indices } => indices.len(),
            _ => self.centers,
        }
    }

    fn policy(&self, eta: f64) -> BandwidthPolicy {
        BandwidthPolicy {
            eta,
            theta_zero: self.theta_zero,
            subsample_fraction: self.subsample_fraction,
        }
    }

    /// Bandwidths for `inputs`, either fixed or selected from the etas.
    pub fn resolve_bandwidths(&self, inputs: &Points) -> Result<Bandwidths> {
        if let Some(b) = self.bandwidths {
            return Ok(b);
        }
        let smoothing = select_bandwidth(inputs, &self.policy(self.eta1))?;
        let rkhs = if self.rkhs_twice_smoothing {
            2.0 * smoothing
        } else {
            select_bandwidth(inputs, &self.policy(self.eta2))?
        };
        let markov = select_bandwidth(inputs, &self.policy(self.eta3))?;
        Ok(Bandwidths {
            smoothing,
            rkhs,
            markov,
        })
    }

    pub fn center_indices(&self, n: usize) -> Result<Vec<usize>> {
        let m = self.center_count();
        match &self.center_selection {
            CenterSelection::Strided => {
                let stride = n / m;
                Ok((0..m).map(|k| k * stride).collect())
            }
            CenterSelection::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                Ok(idx)
            }
            CenterSelection::Indices { indices } => {
                let mut sorted = indices.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != indices.len() || sorted.last().is_some_and(|&i| i >= n) {
                    return Err(Error::InvalidParameter(
                        "center indices must be distinct and within the data".into(),
                    ));
                }
                Ok(indices.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Cholesky,
    /// Pseudo-inverse through an SVD, used when the normal matrix is not
    /// numerically positive definite.
    Svd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub bandwidths: Bandwidths,
    pub n_samples: usize,
    pub n_centers: usize,
    /// `|P K a - P G y|`.
    pub residual_norm: f64,
    /// `|P G y|`.
    pub rhs_norm: f64,
    pub solver: SolverKind,
    /// Ratio of the extreme diagonal entries of the normal matrix's
    /// Cholesky factor, squared; a cheap lower bound on its condition number.
    pub condition_estimate: f64,
    /// Fractions of stored entries in `G`, `P` and `K`.
    pub density: [f64; 3],
    /// Training inputs whose kernel section used the nearest-center fallback.
    pub extrapolated_inputs: usize,
}

/// The least-squares part of the fit: `min |P B a - r|^2 + delta |a|^2`
/// with `B = K` given as sections and `r = P g`.
pub struct RidgeSystem {
    markov: SparseKernelMatrix,
    design: DMatrix<f64>,
    normal: DMatrix<f64>,
    factor: Factor,
    delta: f64,
}

enum Factor {
    Cholesky(Cholesky<f64, nalgebra::Dyn>),
    Svd(nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Coefficients of one solve and the attained residual.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeSolution {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub rhs_norm: f64,
}

impl RidgeSystem {
    pub fn new(
        markov: SparseKernelMatrix,
        sections: &SparseKernelMatrix,
        delta: f64,
    ) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta must be >= 0, got {delta}"
            )));
        }
        let design = markov.mul_sparse_dense(sections)?;
        let mut normal = design.tr_mul(&design);
        for i in 0..normal.nrows() {
            normal[(i, i)] += delta;
        }
        let factor = match Cholesky::new(normal.clone()) {
            Some(c)
                if c.l_dirty()
                    .diagonal()
                    .iter()
                    .all(|&d| d > 0.0 && d.is_finite()) =>
            {
                Factor::Cholesky(c)
            }
            _ => Factor::Svd(normal.clone().svd(true, true)),
        };
        Ok(RidgeSystem {
            markov,
            design,
            normal,
            factor,
            delta,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn solver(&self) -> SolverKind {
        match self.factor {
            Factor::Cholesky(_) => SolverKind::Cholesky,
            Factor::Svd(_) => SolverKind::Svd,
        }
    }

    pub fn condition_estimate(&self) -> f64 {
        match &self.factor {
            Factor::Cholesky(c) => {
                let d = c.l_dirty().diagonal();
                (d.max() / d.min()).powi(2)
            }
            Factor::Svd(svd) => svd.singular_values.max() / svd.singular_values.min(),
        }
    }

    fn apply_inverse(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.factor {
            Factor::Cholesky(c) => Ok(c.solve(rhs)),
            Factor::Svd(svd) => {
                let tol = svd.singular_values.max() * f64::EPSILON * self.normal.nrows() as f64;
                svd.solve(rhs, tol)
                    .map_err(|e| Error::Solver(e.to_string()))
            }
        }
    }

    /// Solves with right-hand side `P g`, where `g` is the already smoothed
    /// target `G y`.
    pub fn solve(&self, smoothed: &[f64]) -> Result<RidgeSolution> {
        let rhs = DVector::from_vec(self.markov.mul_vec(smoothed)?);
        let projected = self.design.tr_mul(&rhs);
        let mut a = self.apply_inverse(&projected)?;
        // One step of iterative refinement on the normal equations.
        let correction = self.apply_inverse(&(&projected - &self.normal * &a))?;
        a += correction;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!(
                "non-finite coefficients ({:?} solver, condition estimate {:e})",
                self.solver(),
                self.condition_estimate()
            )));
        }
        let residual_norm = (&self.design * &a - &rhs).norm();
        Ok(RidgeSolution {
            coefficients: a.as_slice().to_vec(),
            residual_norm,
            rhs_norm: rhs.norm(),
        })
    }
}

/// Everything of a fit that does not depend on the targets; shared by the
/// coordinates of a vector field.
pub struct Regression {
    smoothing: SparseKernelMatrix,
    ridge: RidgeSystem,
    kernel: KernelModel,
    bandwidths: Bandwidths,
    extrapolated_inputs: usize,
    density: [f64; 3],
}

impl Regression {
    pub fn new(inputs: &Points, params: &CondExpParams) -> Result<Self> {
        let n = inputs.len();
        params.validate(n)?;
        if !inputs.all_finite() {
            return Err(Error::InvalidParameter("inputs must be finite".into()));
        }
        let bandwidths = params.resolve_bandwidths(inputs)?;
        let smoothing = markov_matrix(inputs, inputs, bandwidths.smoothing, params.theta_zero)?;
        let markov = markov_matrix(inputs, inputs, bandwidths.markov, params.theta_zero)?;
        let centers = inputs.select(&params.center_indices(n)?);
        let kernel = if centers.len() >= 2 {
            diffusion_model(&centers, bandwidths.rkhs, params.theta_zero)?.0
        } else {
            KernelModel::markov_gaussian(centers, bandwidths.rkhs, params.theta_zero)?
        };
        let (sections, flags) = kernel.sections(inputs)?;
        let density = [smoothing.density(), markov.density(), sections.density()];
        let ridge = RidgeSystem::new(markov, &sections, params.delta)?;
        Ok(Regression {
            smoothing,
            ridge,
            kernel,
            bandwidths,
            extrapolated_inputs: flags.iter().filter(|&&f| f).count(),
            density,
        })
    }

    pub fn kernel(&self) -> &KernelModel {
        &self.kernel
    }

    pub fn bandwidths(&self) -> Bandwidths {
        self.bandwidths
    }

    pub fn n_samples(&self) -> usize {
        self.smoothing.shape().0
    }

    /// Coefficients for one target vector, with diagnostics.
    pub fn solve(&self, targets: &[f64]) -> Result<(Vec<f64>, FitDiagnostics)> {
        let rows = self.n_samples();
        check_dim(rows, targets.len())?;
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("targets must be finite".into()));
        }
        let smoothed = self.smoothing.mul_vec(targets)?;
        let solution = self.ridge.solve(&smoothed)?;
        let diagnostics = FitDiagnostics {
            bandwidths: self.bandwidths,
            n_samples: rows,
            n_centers: self.kernel.len(),
            residual_norm: solution.residual_norm,
            rhs_norm: solution.rhs_norm,
            solver: self.ridge.solver(),
            condition_estimate: self.ridge.condition_estimate(),
            density: self.density,
            extrapolated_inputs: self.extrapolated_inputs,
        };
        Ok((solution.coefficients, diagnostics))
    }

    pub fn fit(&self, targets: &[f64]) -> Result<CondExpModel> {
        let (coefficients, diagnostics) = self.solve(targets)?;
        Ok(CondExpModel {
            kernel: self.kernel.clone(),
            coefficients,
            diagnostics,
        })
    }
}

/// A fitted conditional expectation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondExpModel {
    pub kernel: KernelModel,
    pub coefficients: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl CondExpModel {
    pub fn predict(&self, x: &[f64]) -> Result<Evaluation> {
        self.kernel.evaluate_expansion(&self.coefficients, x)
    }
}

/// Fits `E[Y | X]` from pairs `(inputs[n], targets[n])`.
pub fn fit(inputs: &Points, targets: &[f64], params: &CondExpParams) -> Result<CondExpModel> {
    check_dim(inputs.len(), targets.len())?;
    Regression::new(inputs, params)?.fit(targets)
}
