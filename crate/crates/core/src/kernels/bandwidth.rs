use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{squared_distance, Points};

pub const DEFAULT_THETA_ZERO: f64 = 1e-14;
pub const DEFAULT_SUBSAMPLE_FRACTION: f64 = 0.1;

/// Picks a Gaussian bandwidth so that a target fraction of kernel values
/// over a subsample stays at or above the zero threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPolicy {
    /// Target fraction of retained kernel entries, in (0, 1).
    pub eta: f64,
    pub theta_zero: f64,
    /// Share of the data used to estimate pairwise distances.
    pub subsample_fraction: f64,
}

impl BandwidthPolicy {
    pub fn new(eta: f64) -> Result<Self> {
        let policy = BandwidthPolicy {
            eta,
            theta_zero: DEFAULT_THETA_ZERO,
            subsample_fraction: DEFAULT_SUBSAMPLE_FRACTION,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must lie in (0,1), got {}",
                self.eta
            )));
        }
        if !(self.theta_zero > 0.0 && self.theta_zero < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta_zero must lie in (0,1), got {}",
                self.theta_zero
            )));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "subsample fraction must lie in (0,1], got {}",
                self.subsample_fraction
            )));
        }
        Ok(())
    }

    /// theta = 1 / ln(1 / theta_zero).
    pub fn threshold(&self) -> f64 {
        1.0 / (1.0 / self.theta_zero).ln()
    }
}

/// Indices of an evenly spread subsample of `fraction * n` points (at least
/// two when `n >= 2`).
pub fn subsample_indices(n: usize, fraction: f64) -> Vec<usize> {
    let m = ((fraction * n as f64).ceil() as usize).max(2).min(n);
    (0..m).map(|k| k * n / m).collect()
}

/// Pairwise squared distances `|x_i - x_j|^2` for `i < j`.
pub fn pairwise_squared_distances(points: &Points) -> Vec<f64> {
    let n = points.len();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = points.row(i);
            (i + 1..n).map(move |j| squared_distance(xi, points.row(j)))
        })
        .collect()
}

/// The `eta`-quantile as an order statistic: the smallest `s` in `values`
/// with at least `ceil(eta * len)` elements `<= s`.
pub fn quantile(values: &mut [f64], eta: f64) -> f64 {
    assert!(!values.is_empty());
    let k = ((eta * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    *kth
}

/// Returns `epsilon = theta * q_eta(S)` where `S` holds the pairwise squared
/// distances of the subsample, so that `exp(-s / epsilon) >= theta_zero`
/// exactly when `s <= q_eta(S)`.
pub fn select_bandwidth(data: &Points, policy: &BandwidthPolicy) -> Result<f64> {
    policy.validate()?;
    if data.len() < 2 {
        return Err(Error::InvalidParameter(
            "bandwidth selection needs at least two points".into(),
        ));
    }
    let sub = data.select(&subsample_indices(data.len(), policy.subsample_fraction));
    let mut distances = pairwise_squared_distances(&sub);
    let q = quantile(&mut distances, policy.eta);
    if q <= 0.0 {
        return Err(Error::DegenerateBandwidth { eta: policy.eta });
    }
    Ok(policy.threshold() * q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full(eta: f64) -> BandwidthPolicy {
        BandwidthPolicy {
            eta,
            theta_zero: 1e-14,
            subsample_fraction: 1.0,
        }
    }

    fn cloud(n: usize, d: usize, seed: u64) -> Points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Points::new(d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn two_points_unit_distance() {
        let data = Points::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let eps = select_bandwidth(&data, &full(0.999)).unwrap();
        let expected = 1.0 / (14.0 * std::f64::consts::LN_10);
        assert!((eps - expected).abs() < 1e-15);
        assert!((eps - 0.031022).abs() < 1e-6);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let data = Points::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(
            select_bandwidth(&data, &full(0.5)),
            Err(Error::DegenerateBandwidth { .. })
        ));
    }

    #[test]
    fn bandwidth_scales_quadratically() {
        let data = cloud(300, 3, 1);
        let policy = BandwidthPolicy::new(0.05).unwrap();
        let eps = select_bandwidth(&data, &policy).unwrap();
        let eps3 = select_bandwidth(&data.scaled(3.0), &policy).unwrap();
        assert!((eps3 / eps - 9.0).abs() < 1e-12);
    }

    #[test]
    fn retained_fraction_matches_eta() {
        let data = cloud(400, 2, 7);
        for eta in [0.003, 0.01, 0.1, 0.5] {
            let policy = full(eta);
            let eps = select_bandwidth(&data, &policy).unwrap();
            let s = pairwise_squared_distances(&data);
            let kept = s
                .iter()
                .filter(|&&s| (-s / eps).exp() >= policy.theta_zero)
                .count();
            let frac = kept as f64 / s.len() as f64;
            assert!(
                (frac - eta).abs() <= 2.0 / s.len() as f64,
                "eta {eta}: {frac}"
            );
        }
    }

    #[test]
    fn invalid_policies() {
        assert!(BandwidthPolicy::new(0.0).is_err());
        assert!(BandwidthPolicy::new(1.0).is_err());
        let bad = BandwidthPolicy {
            subsample_fraction: 0.0,
            ..BandwidthPolicy::new(0.1).unwrap()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn subsample_is_spread_out() {
        assert_eq!(
            subsample_indices(100, 0.1),
            vec![0, 10, 20, 30, 40, 50, 60, 70, 80, 90]
        );
        assert_eq!(subsample_indices(3, 0.1), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn monotone_in_eta(seed in 0u64..50, a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let data = cloud(60, 2, seed);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let e_lo = select_bandwidth(&data, &full(lo)).unwrap();
            let e_hi = select_bandwidth(&data, &full(hi)).unwrap();
            prop_assert!(e_lo <= e_hi);
        }
    }
}
