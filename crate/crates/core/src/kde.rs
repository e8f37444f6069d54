//! One-dimensional Gaussian kernel density estimation with the Silverman
//! bandwidth rule, used for marginal posterior bound curves.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Density curve tabulated on a uniform grid.
#[derive(Debug, Clone)]
pub struct KdeCurve<F> {
    pub grid: Vec<F>,
    pub values: Vec<F>,
    pub bandwidth: F,
}

/// Silverman's rule of thumb: `0.9 min(sd, iqr/1.34) n^{-1/5}`.
pub fn silverman_bandwidth<F: Scalar>(samples: &[F]) -> Result<F> {
    if samples.len() < 8 {
        return Err(CoreError::BandwidthFailure(
            "need at least 8 samples".into(),
        ));
    }
    let n = samples.len();
    let mean = samples.iter().cloned().fold(F::zero(), |a, b| a + b) / F::of(n as f64);
    let var = samples
        .iter()
        .map(|x| (*x - mean) * (*x - mean))
        .fold(F::zero(), |a, b| a + b)
        / F::of((n - 1) as f64);
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| -> F {
        let idx = (p * (n - 1) as f64).round() as usize;
        sorted[idx.min(n - 1)]
    };
    let iqr = q(0.75) - q(0.25);
    let spread = var.sqrt().min(iqr / F::of(1.34));
    let h = F::of(0.9) * spread * F::of((n as f64).powf(-0.2));
    if !(h > F::zero()) || !h.is_finite() {
        return Err(CoreError::BandwidthFailure(format!(
            "degenerate sample spread (sd {}, iqr {})",
            var.sqrt().f64(),
            iqr.f64()
        )));
    }
    Ok(h)
}

/// Evaluation grid spanning the 0.1%-99.9% sample quantiles padded by
/// three bandwidths.
pub fn default_grid<F: Scalar>(samples: &[F], bandwidth: F, nodes: usize) -> Vec<F> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let q = |p: f64| -> F {
        let idx = (p * (n - 1) as f64).round() as usize;
        sorted[idx.min(n - 1)]
    };
    let pad = F::of(3.0) * bandwidth;
    let lo = q(0.001) - pad;
    let hi = q(0.999) + pad;
    let step = (hi - lo) / F::of((nodes - 1) as f64);
    (0..nodes).map(|i| lo + step * F::of(i as f64)).collect()
}

/// Evaluate the Gaussian KDE of `samples` on `grid`.
pub fn evaluate_on<F: Scalar>(samples: &[F], bandwidth: F, grid: &[F]) -> Vec<F> {
    let norm = F::of(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    let inv_h = F::one() / bandwidth;
    let scale = norm * inv_h / F::of(samples.len() as f64);
    let half = F::of(0.5);
    grid.iter()
        .map(|g| {
            let mut acc = F::zero();
            for x in samples {
                let z = (*g - *x) * inv_h;
                acc += (-half * z * z).exp();
            }
            acc * scale
        })
        .collect()
}

/// KDE with Silverman bandwidth on the default 512-node grid.
pub fn kde_curve<F: Scalar>(samples: &[F], nodes: usize) -> Result<KdeCurve<F>> {
    let bandwidth = silverman_bandwidth(samples)?;
    let grid = default_grid(samples, bandwidth, nodes);
    let values = evaluate_on(samples, bandwidth, &grid);
    Ok(KdeCurve {
        grid,
        values,
        bandwidth,
    })
}

/// Trapezoid integral of a curve on its (uniform) grid.
pub fn curve_mass<F: Scalar>(grid: &[F], values: &[F]) -> F {
    let mut acc = F::zero();
    for i in 1..grid.len() {
        acc += (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]) * F::of(0.5);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn kde_of_normal_sample_integrates_to_one() {
        let mut rng = Stream::new(4).derive("kde");
        let samples: Vec<f64> = (0..10_000).map(|_| rng.normal::<f64>()).collect();
        let curve = kde_curve(&samples, 512).unwrap();
        let mass = curve_mass(&curve.grid, &curve.values);
        assert!((mass - 1.0).abs() < 0.01, "mass {mass}");
        // peak close to the standard normal density at 0
        let peak = curve.values.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 0.3989).abs() < 0.03, "peak {peak}");
    }

    #[test]
    fn degenerate_samples_fail() {
        let samples = vec![2.0f64; 100];
        assert!(matches!(
            kde_curve(&samples, 64),
            Err(CoreError::BandwidthFailure(_))
        ));
    }
}
