//! Worst-case reconstruction when a participant's key leaks.
//!
//! Two linear estimators are provided:
//!
//! * [`min_norm_estimate`]: `A+ y`, the least-norm solution of `A x = y`
//!   where `A` is the effective projection (with the `1/sqrt(k)` factor when
//!   scaled). Exact when `k = d`. Over random keys with `k < d` it is
//!   the orthogonal projection of `x` onto a uniformly random `k`-dimensional
//!   subspace, so its ensemble mean is `(k/d) x`.
//! * [`transpose_estimate`]: `(1/k) R^T R x`, recovered from `y` as
//!   `(1/(k s)) R^T y` for scale factor `s`. Its ensemble mean is `x` and its
//!   per-element variance is `(1/k)(||x||^2 + x_i^2)`, the figure returned by
//!   [`predicted_variance`].

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Matrix};
use crate::projection::{generate_projection, project, ProjectionKey};
use crate::rng::Rng64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    MinimumNorm,
    Transpose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionReport {
    pub estimate: Vec<f64>,
    pub per_element_variance: Vec<f64>,
    pub mean_variance: f64,
    pub l2_error: Option<f64>,
}

fn check_len(key: &ProjectionKey, y: &[f64]) -> Result<()> {
    if y.len() != key.k() {
        return Err(Error::InvalidDimension(format!(
            "projection of length {} for a key with k={}",
            y.len(),
            key.k()
        )));
    }
    Ok(())
}

pub fn min_norm_estimate(key: &ProjectionKey, y: &[f64]) -> Result<Vec<f64>> {
    check_len(key, y)?;
    let pinv = key.effective_matrix().pseudoinverse()?;
    let mut out = vec![0.0; key.d()];
    pinv.matvec_into(y, &mut out);
    Ok(out)
}

pub fn transpose_estimate(key: &ProjectionKey, y: &[f64]) -> Result<Vec<f64>> {
    check_len(key, y)?;
    let mut out = vec![0.0; key.d()];
    key.matrix().matvec_transpose_into(y, &mut out);
    let c = 1.0 / (key.k() as f64 * key.scale_factor());
    out.iter_mut().for_each(|v| *v *= c);
    Ok(out)
}

pub fn estimate(key: &ProjectionKey, y: &[f64], estimator: Estimator) -> Result<Vec<f64>> {
    match estimator {
        Estimator::MinimumNorm => min_norm_estimate(key, y),
        Estimator::Transpose => transpose_estimate(key, y),
    }
}

/// `(2/k) x_i^2 + (1/k) sum_{j != i} x_j^2`, i.e. `(||x||^2 + x_i^2) / k`.
pub fn predicted_variance(x: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidDimension("k must be positive".to_string()));
    }
    let total = norm_sq(x);
    let k = k as f64;
    Ok(x.iter().map(|&xi| (total + xi * xi) / k).collect())
}

/// Reconstructs `y` with `key` and attaches the predicted error profile.
/// When `truth` is given, the variance is evaluated at it and the L2 error
/// is reported; otherwise the estimate stands in for the unknown vector.
pub fn reconstruct(
    key: &ProjectionKey,
    y: &[f64],
    estimator: Estimator,
    truth: Option<&[f64]>,
) -> Result<ReconstructionReport> {
    let est = estimate(key, y, estimator)?;
    let reference = truth.unwrap_or(&est);
    if reference.len() != key.d() {
        return Err(Error::InvalidDimension(format!(
            "ground truth of length {} for d={}",
            reference.len(),
            key.d()
        )));
    }
    let var = predicted_variance(reference, key.k())?;
    let mean_variance = var.iter().sum::<f64>() / var.len() as f64;
    let l2_error = truth.map(|t| {
        t.iter()
            .zip(&est)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    });
    Ok(ReconstructionReport {
        estimate: est,
        per_element_variance: var,
        mean_variance,
        l2_error,
    })
}

/// Per-element sample mean and variance of an estimator over independent
/// keys. Trial `t` uses the key seeded by stream `t` of `seed`; sums are
/// accumulated in trial order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalReconstruction {
    pub trials: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl EmpiricalReconstruction {
    /// Standard error of the per-element mean.
    pub fn standard_error(&self) -> Vec<f64> {
        self.variance
            .iter()
            .map(|v| (v / self.trials as f64).sqrt())
            .collect()
    }
}

pub fn empirical_reconstruction(
    x: &[f64],
    k: usize,
    trials: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<EmpiricalReconstruction> {
    let d = x.len();
    if trials < 2 {
        return Err(Error::Config("at least two trials are needed".to_string()));
    }
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    for t in 0..trials {
        let key_seed = Rng64::derive(seed, t as u64).next_seed();
        let key = generate_projection(k, d, key_seed)?;
        let y = project(&key, x)?;
        let est = estimate(&key, &y, estimator)?;
        let n = (t + 1) as f64;
        for i in 0..d {
            let delta = est[i] - mean[i];
            mean[i] += delta / n;
            m2[i] += delta * (est[i] - mean[i]);
        }
    }
    let variance = m2.iter().map(|v| v / (trials - 1) as f64).collect();
    Ok(EmpiricalReconstruction {
        trials,
        mean,
        variance,
    })
}

/// Per-element sample variance of the reconstruction over `trials` keys.
pub fn empirical_reconstruction_variance(
    x: &[f64],
    k: usize,
    trials: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<Vec<f64>> {
    Ok(empirical_reconstruction(x, k, trials, seed, estimator)?.variance)
}

/// `A x` residual check helper: `||A x_hat - y|| / max(||y||, tiny)`.
pub fn consistency_residual(key: &ProjectionKey, x_hat: &[f64], y: &[f64]) -> Result<f64> {
    let a: Matrix = key.effective_matrix();
    let mut ax = vec![0.0; key.k()];
    a.matvec_into(x_hat, &mut ax);
    let num = ax
        .iter()
        .zip(y)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    Ok(num / norm_sq(y).sqrt().max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicted_variance_examples() {
        let mut e1 = vec![0.0; 5];
        e1[0] = 1.0;
        assert_eq!(
            predicted_variance(&e1, 2).unwrap(),
            vec![1.0, 0.5, 0.5, 0.5, 0.5]
        );
        assert_eq!(predicted_variance(&[0.0; 4], 3).unwrap(), vec![0.0; 4]);
        assert!(predicted_variance(&[1.0], 0).is_err());
    }

    #[test]
    fn square_key_recovers_exactly() {
        let key = generate_projection(6, 6, 13).unwrap();
        let x = [0.3, -1.2, 4.0, 0.0, 2.5, -0.7];
        let y = project(&key, &x).unwrap();
        let xh = min_norm_estimate(&key, &y).unwrap();
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in x.iter().zip(&xh) {
            assert!((a - b).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn wide_key_is_consistent_and_min_norm() {
        let key = generate_projection(4, 9, 21).unwrap();
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let y = project(&key, &x).unwrap();
        let xh = min_norm_estimate(&key, &y).unwrap();
        assert!(consistency_residual(&key, &xh, &y).unwrap() < 1e-9);
        assert!(norm_sq(&xh) <= norm_sq(&x));
    }

    #[test]
    fn dimension_mismatch() {
        let key = generate_projection(2, 4, 1).unwrap();
        assert!(min_norm_estimate(&key, &[1.0]).is_err());
        assert!(transpose_estimate(&key, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn transpose_estimate_unscaled_matches_scaled() {
        let key = generate_projection(3, 5, 6).unwrap();
        let raw = key.clone().with_scaling(false);
        let x = [1.0, 2.0, -1.0, 0.5, 0.0];
        let a = transpose_estimate(&key, &project(&key, &x).unwrap()).unwrap();
        let b = transpose_estimate(&raw, &project(&raw, &x).unwrap()).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_vector_has_zero_empirical_variance() {
        let v =
            empirical_reconstruction_variance(&[0.0; 4], 2, 1000, 3, Estimator::Transpose).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn report_fields() {
        let key = generate_projection(3, 3, 2).unwrap();
        let x = [1.0, 0.0, 2.0];
        let y = project(&key, &x).unwrap();
        let r = reconstruct(&key, &y, Estimator::MinimumNorm, Some(&x)).unwrap();
        assert!(r.l2_error.unwrap() < 1e-9);
        let want = predicted_variance(&x, 3).unwrap();
        assert_eq!(r.per_element_variance, want);
        assert!((r.mean_variance - want.iter().sum::<f64>() / 3.0).abs() < 1e-15);
    }
}
