use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng64;

/// Two Gaussian classes with identity covariance: class 0 centred at
/// `-m * 1`, class 1 at `+m * 1`. Samples alternate 0,1,0,1,...
pub fn synth_gaussian_two_class(
    d: usize,
    mean_magnitude: f64,
    n_per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    if d == 0 || n_per_class == 0 {
        return Err(Error::InvalidDimension(format!(
            "need d >= 1 and n_per_class >= 1, got d={d}, n={n_per_class}"
        )));
    }
    let mut rng = Rng64::new(seed);
    let mut values = Vec::with_capacity(2 * n_per_class * d);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        for class in 0..2 {
            let centre = if class == 0 {
                -mean_magnitude
            } else {
                mean_magnitude
            };
            values.extend((0..d).map(|_| centre + rng.normal()));
            labels.push(class);
        }
    }
    Dataset::new(
        d,
        values,
        labels,
        2,
        format!("gauss2(d={d},m={mean_magnitude},n={n_per_class},seed={seed})"),
    )
}
