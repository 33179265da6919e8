//! Error metrics for estimated fields and deterministic orbit comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::points::{check_dim, Points};
use crate::systems::{simulate, SimulationOptions, SystemSpec, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `sqrt(sum |V_hat - V|^2) / sqrt(sum |V|^2)` over the test points.
    pub relative_l2: f64,
    pub per_coordinate_rmse: Vec<f64>,
    pub n_test: usize,
    pub extrapolated_fraction: f64,
}

/// Prediction, truth and extrapolation flag at one test point.
type EvaluatedPair = (Vec<f64>, Vec<f64>, bool);

/// Both fields at every test point, in order.
fn evaluate_pairs<P, T>(predict: &P, truth: &T, points: &Points) -> Result<Vec<EvaluatedPair>>
where
    P: VectorField + ?Sized,
    T: VectorField + ?Sized,
{
    check_dim(truth.dim(), predict.dim())?;
    check_dim(truth.dim(), points.dim())?;
    (0..points.len())
        .into_par_iter()
        .map(|n| {
            let x = points.row(n);
            let p = predict.evaluate(x)?;
            let t = truth.evaluate(x)?;
            Ok((p.value, t.value, p.extrapolated))
        })
        .collect()
}

pub fn relative_l2_error<P, T>(predict: &P, truth: &T, test_points: &Points) -> Result<ErrorReport>
where
    P: VectorField + ?Sized,
    T: VectorField + ?Sized,
{
    if test_points.is_empty() {
        return Err(Error::InvalidParameter("no test points".into()));
    }
    let d = truth.dim();
    let pairs = evaluate_pairs(predict, truth, test_points)?;
    let mut per_coordinate = vec![0.0; d];
    let mut truth_sq = 0.0;
    let mut extrapolated = 0usize;
    for (p, t, flag) in &pairs {
        for i in 0..d {
            per_coordinate[i] += (p[i] - t[i]).powi(2);
            truth_sq += t[i] * t[i];
        }
        extrapolated += usize::from(*flag);
    }
    if truth_sq == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let n = pairs.len() as f64;
    let error_sq: f64 = per_coordinate.iter().sum();
    Ok(ErrorReport {
        relative_l2: error_sq.sqrt() / truth_sq.sqrt(),
        per_coordinate_rmse: per_coordinate.iter().map(|s| (s / n).sqrt()).collect(),
        n_test: pairs.len(),
        extrapolated_fraction: extrapolated as f64 / n,
    })
}

/// `|V_hat_i(x_n) - V_i(x_n)|` for every test point and coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseErrors {
    pub points: Points,
    pub errors: Points,
    pub extrapolated: Vec<bool>,
}

impl PointwiseErrors {
    /// Index of the point with the largest error norm.
    pub fn worst(&self) -> Option<usize> {
        let norm = |e: &[f64]| e.iter().map(|v| v * v).sum::<f64>();
        (0..self.errors.len())
            .max_by(|&a, &b| norm(self.errors.row(a)).total_cmp(&norm(self.errors.row(b))))
    }

    /// Columns `x0..,err0..,extrapolated`.
    pub fn to_csv(&self) -> String {
        let d = self.points.dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        header.extend((0..d).map(|i| format!("err{i}")));
        header.push("extrapolated".into());
        let mut out = header.join(",");
        out.push('\n');
        for n in 0..self.points.len() {
            let fields: Vec<String> = self
                .points
                .row(n)
                .iter()
                .chain(self.errors.row(n))
                .map(|v| v.to_string())
                .collect();
            out.push_str(&fields.join(","));
            out.push_str(if self.extrapolated[n] { ",1\n" } else { ",0\n" });
        }
        out
    }
}

pub fn pointwise_errors<P, T>(
    predict: &P,
    truth: &T,
    test_points: &Points,
) -> Result<PointwiseErrors>
where
    P: VectorField + ?Sized,
    T: VectorField + ?Sized,
{
    let pairs = evaluate_pairs(predict, truth, test_points)?;
    let mut errors = Points::with_capacity(truth.dim(), pairs.len());
    let mut extrapolated = Vec::with_capacity(pairs.len());
    for (p, t, flag) in &pairs {
        let e: Vec<f64> = p.iter().zip(t).map(|(a, b)| (a - b).abs()).collect();
        errors.push(&e)?;
        extrapolated.push(*flag);
    }
    Ok(PointwiseErrors {
        points: test_points.clone(),
        errors,
        extrapolated,
    })
}

/// Noise-free Euler orbits of the true and the estimated field from a
/// common initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitComparison {
    pub truth: Trajectory,
    pub estimate: Trajectory,
    /// Whether the estimated field used the nearest-center fallback at each
    /// recorded state of the estimated orbit.
    pub extrapolated: Vec<bool>,
}

impl OrbitComparison {
    /// Euclidean distance between the orbits at each recorded time.
    pub fn divergence(&self) -> Vec<f64> {
        self.truth
            .points()
            .iter()
            .zip(self.estimate.points().iter())
            .map(|(a, b)| crate::points::squared_distance(a, b).sqrt())
            .collect()
    }

    pub fn extrapolated_fraction(&self) -> f64 {
        self.extrapolated.iter().filter(|&&f| f).count() as f64 / self.extrapolated.len() as f64
    }

    /// Columns `t,true_x0..,est_x0..,extrapolated`.
    pub fn to_csv(&self) -> String {
        let d = self.truth.dim();
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("true_x{i}")));
        header.extend((0..d).map(|i| format!("est_x{i}")));
        header.push("extrapolated".into());
        let mut out = header.join(",");
        out.push('\n');
        let dt = self.truth.dt();
        for n in 0..self.truth.len() {
            let mut fields = vec![(n as f64 * dt).to_string()];
            fields.extend(self.truth.points().row(n).iter().map(|v| v.to_string()));
            fields.extend(self.estimate.points().row(n).iter().map(|v| v.to_string()));
            fields.push(if self.extrapolated[n] {
                "1".into()
            } else {
                "0".into()
            });
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Integrates both fields with Euler steps `dt` over `horizon` time units.
/// The true orbit is exactly the noise-free simulation with one substep.
pub fn compare_orbits<F>(
    spec: &SystemSpec,
    model: &F,
    x0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<OrbitComparison>
where
    F: VectorField + ?Sized,
{
    check_dim(spec.dim(), model.dim())?;
    check_dim(spec.dim(), x0.len())?;
    if !(horizon > 0.0 && dt > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(
            "horizon and dt must be positive".into(),
        ));
    }
    let n = (horizon / dt).round() as usize + 1;
    let deterministic = SystemSpec {
        noise: 0.0,
        ..spec.clone()
    };
    let opts = SimulationOptions {
        n_samples: n,
        dt,
        seed: 0,
        burn_in: 0,
        substeps: 1,
    };
    let truth = simulate(&deterministic, x0, &opts)?;

    let mut state = x0.to_vec();
    let mut path = Points::with_capacity(x0.len(), n);
    let mut extrapolated = Vec::with_capacity(n);
    for k in 0..n {
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { index: k });
        }
        path.push(&state)?;
        let v = model.evaluate(&state)?;
        extrapolated.push(v.extrapolated);
        if k + 1 < n {
            for (s, vi) in state.iter_mut().zip(&v.value) {
                *s += vi * dt;
            }
        }
    }
    Ok(OrbitComparison {
        truth,
        estimate: Trajectory::new(dt, path, None)?,
        extrapolated,
    })
}
