//! Additive Laplace noise for the epsilon-DP baseline.

use crate::error::{Error, Result};
use crate::rng::Rng64;

/// Privacy loss `epsilon`, L1 global sensitivity and the derived Laplace
/// scale `sensitivity / epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseBudget {
    epsilon: f64,
    sensitivity: f64,
    scale: f64,
}

impl NoiseBudget {
    pub fn new(epsilon: f64, sensitivity: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidBudget(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(sensitivity > 0.0) || !sensitivity.is_finite() {
            return Err(Error::InvalidBudget(format!(
                "sensitivity must be positive, got {sensitivity}"
            )));
        }
        Ok(Self {
            epsilon,
            sensitivity,
            scale: sensitivity / epsilon,
        })
    }

    /// Budget with a fixed Laplace scale. Epsilon is reported relative to
    /// the given sensitivity.
    pub fn from_scale(scale: f64, sensitivity: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidScale(scale));
        }
        Self::new(sensitivity / scale, sensitivity).map(|b| Self { scale, ..b })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Per-element noise variance, `2 * scale^2`.
    pub fn noise_variance(&self) -> f64 {
        2.0 * self.scale * self.scale
    }
}

/// One zero-mean Laplace draw by inverse CDF:
/// `x = -scale * sign(u) * ln(1 - 2|u|)` with `u` uniform on `(-1/2, 1/2)`.
pub fn laplace_sample(scale: f64, rng: &mut Rng64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidScale(scale));
    }
    Ok(laplace_unchecked(scale, rng))
}

fn laplace_unchecked(scale: f64, rng: &mut Rng64) -> f64 {
    let u = loop {
        let u = rng.uniform() - 0.5;
        if u != -0.5 {
            break u;
        }
    };
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// L1 diameter of a box domain, the global sensitivity of the identity
/// query over it.
pub fn identity_query_sensitivity(lower: &[f64], upper: &[f64]) -> Result<f64> {
    if lower.is_empty() || lower.len() != upper.len() {
        return Err(Error::InvalidBounds(format!(
            "bounds of lengths {} and {}",
            lower.len(),
            upper.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&lo, &hi)) in lower.iter().zip(upper).enumerate() {
        if !(hi >= lo) {
            return Err(Error::InvalidBounds(format!(
                "upper {hi} < lower {lo} in coordinate {i}"
            )));
        }
        total += hi - lo;
    }
    if !(total > 0.0) {
        return Err(Error::InvalidBounds("domain has zero width".to_string()));
    }
    Ok(total)
}

/// `x + n` with fresh i.i.d. `Lap(budget.scale)` noise per element.
pub fn noisify(x: &[f64], budget: &NoiseBudget, rng: &mut Rng64) -> Vec<f64> {
    x.iter()
        .map(|&v| v + laplace_unchecked(budget.scale, rng))
        .collect()
}

pub fn noisify_in_place(x: &mut [f64], budget: &NoiseBudget, rng: &mut Rng64) {
    for v in x {
        *v += laplace_unchecked(budget.scale, rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(scale: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng64::new(seed);
        (0..n)
            .map(|_| laplace_sample(scale, &mut rng).unwrap())
            .collect()
    }

    #[test]
    fn rejects_nonpositive_scale() {
        let mut rng = Rng64::new(1);
        assert!(matches!(
            laplace_sample(0.0, &mut rng),
            Err(Error::InvalidScale(_))
        ));
        assert!(matches!(
            laplace_sample(-1.0, &mut rng),
            Err(Error::InvalidScale(_))
        ));
    }

    #[test]
    fn moments_median_and_tail() {
        // Laplace(l): mean 0, variance 2 l^2, median 0, P(|x| > l ln 2) = 1/2.
        let scale = 1.7;
        let n = 1_000_000;
        let mut xs = draws(scale, n, 11);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(
            mean.abs() <= 5.0 * scale / (n as f64 * 0.5).sqrt(),
            "mean {mean}"
        );
        assert!(
            (var / (2.0 * scale * scale) - 1.0).abs() <= 0.05,
            "var {var}"
        );
        let tail = xs.iter().filter(|x| x.abs() > scale * 2f64.ln()).count() as f64 / n as f64;
        assert!((tail - 0.5).abs() <= 0.01, "tail {tail}");
        xs.sort_by(f64::total_cmp);
        let median = xs[n / 2];
        assert!(median.abs() <= 0.01 * scale, "median {median}");
    }

    #[test]
    fn sensitivity_examples() {
        assert_eq!(
            identity_query_sensitivity(&[0.0; 784], &[1.0; 784]).unwrap(),
            784.0
        );
        assert_eq!(identity_query_sensitivity(&[0.0], &[255.0]).unwrap(), 255.0);
        assert!(identity_query_sensitivity(&[0.0, 1.0], &[1.0, 0.5]).is_err());
        assert!(identity_query_sensitivity(&[], &[]).is_err());
    }

    #[test]
    fn budget_scale_is_ratio() {
        let b = NoiseBudget::new(18.89, 270.5).unwrap();
        assert_eq!(b.scale(), 270.5 / 18.89);
        assert!(NoiseBudget::new(0.0, 1.0).is_err());
        assert!(NoiseBudget::new(1.0, -1.0).is_err());
    }

    #[test]
    fn matched_variance_scale() {
        // 2 l^2 = 410  =>  l = sqrt(205).
        let b = NoiseBudget::from_scale(205f64.sqrt(), 784.0).unwrap();
        assert!((b.scale() - 14.3178).abs() < 1e-4);
        assert!((b.noise_variance() - 410.0).abs() < 1e-9);
    }

    #[test]
    fn vanishing_noise_keeps_vector() {
        let b = NoiseBudget::new(1e9, 1.0).unwrap();
        let mut rng = Rng64::new(5);
        let x = [0.1, 0.5, 0.9];
        let y = noisify(&x, &b, &mut rng);
        assert_eq!(y.len(), 3);
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-6);
        }
    }

    #[test]
    fn pure_noise_variance() {
        let b = NoiseBudget::new(2.0, 3.0).unwrap();
        let mut rng = Rng64::new(8);
        let mut sum = [0.0; 4];
        let mut sumsq = [0.0; 4];
        let m = 100_000;
        for _ in 0..m {
            let y = noisify(&[0.0; 4], &b, &mut rng);
            for i in 0..4 {
                sum[i] += y[i];
                sumsq[i] += y[i] * y[i];
            }
        }
        for i in 0..4 {
            let mean = sum[i] / m as f64;
            let var = sumsq[i] / m as f64 - mean * mean;
            assert!((var / b.noise_variance() - 1.0).abs() < 0.05);
            assert!(mean.abs() < 5.0 * (b.noise_variance() / m as f64).sqrt());
        }
    }
}
