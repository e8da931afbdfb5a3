//! Noise-replication augmentation for small tabular datasets.

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng64;

/// Standard deviation of the Gaussian noise added to replicas.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum AugmentNoise {
    /// Same std for every feature.
    Absolute(f64),
    /// Per-feature std = factor x that feature's training-split std.
    FeatureRelative(f64),
}

/// Fraction of the base data held out for testing before augmentation.
pub const BASE_TEST_FRACTION: f64 = 0.1;

/// Splits `ds` 90/10 (seeded), then grows each split to its target.
///
/// Each split is ordered so that every prefix is class-stratified. Output
/// position `t` copies base sample `t mod n`; the first pass (`t < n`) is an
/// exact copy and later passes add zero-mean Gaussian noise. A target below
/// the base size takes a stratified prefix.
pub fn augment_gaussian(
    ds: &Dataset,
    noise: AugmentNoise,
    target_train: usize,
    target_test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if ds.len() < 2 {
        return Err(Error::EmptyDataset(
            "augmentation needs at least two samples".into(),
        ));
    }
    for target in [target_train, target_test] {
        if target == 0 {
            return Err(Error::AugmentTarget {
                target,
                base: ds.len(),
            });
        }
    }
    let mut rng = Rng64::new(seed);
    let order = rng.permutation(ds.len());
    let n_test = ((ds.len() as f64 * BASE_TEST_FRACTION).round() as usize).clamp(1, ds.len() - 1);
    let (test_idx, train_idx) = order.split_at(n_test);
    let base_train = ds.subset(train_idx);
    let base_test = ds.subset(test_idx);

    let feature_std = feature_std(&base_train);
    let std: Vec<f64> = match noise {
        AugmentNoise::Absolute(s) => vec![s; ds.dim()],
        AugmentNoise::FeatureRelative(f) => feature_std.iter().map(|s| f * s).collect(),
    };
    if std.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Config("noise std must be non-negative".into()));
    }

    let mut train_rng = Rng64::derive(seed, 1);
    let mut test_rng = Rng64::derive(seed, 2);
    let train = replicate(&base_train, &std, target_train, &mut train_rng, "aug-train")?;
    let test = replicate(&base_test, &std, target_test, &mut test_rng, "aug-test")?;
    Ok((train, test))
}

fn feature_std(ds: &Dataset) -> Vec<f64> {
    let n = ds.len() as f64;
    let d = ds.dim();
    let mut mean = vec![0.0; d];
    for (x, _) in ds.iter() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for (x, _) in ds.iter() {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter()
        .map(|s| (s / (n - 1.0).max(1.0)).sqrt())
        .collect()
}

/// Interleaves classes so that any prefix holds each class in proportion,
/// within one sample.
fn stratified_order(ds: &Dataset, rng: &mut Rng64) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for i in rng.permutation(ds.len()) {
        by_class[ds.label(i)].push(i);
    }
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(ds.len());
    for (c, members) in by_class.iter().enumerate() {
        let n = members.len() as f64;
        for (j, &i) in members.iter().enumerate() {
            keyed.push(((j as f64 + 0.5) / n, c, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

fn replicate(
    base: &Dataset,
    std: &[f64],
    target: usize,
    rng: &mut Rng64,
    tag: &str,
) -> Result<Dataset> {
    let order = stratified_order(base, rng);
    let n = order.len();
    let d = base.dim();
    let mut values = Vec::with_capacity(target * d);
    let mut labels = Vec::with_capacity(target);
    for t in 0..target {
        let src = order[t % n];
        let x = base.sample(src);
        if t < n {
            values.extend_from_slice(x);
        } else {
            values.extend(x.iter().zip(std).map(|(v, s)| v + s * rng.normal()));
        }
        labels.push(base.label(src));
    }
    Dataset::new(
        d,
        values,
        labels,
        base.class_count(),
        format!("{}|{tag}({target})", base.provenance()),
    )
}
