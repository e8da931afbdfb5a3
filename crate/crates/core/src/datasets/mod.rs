//! Labeled datasets: loaders, synthetic generators, augmentation,
//! normalization and sharding.

mod augment;
mod idx;
mod shard;
mod synth;
mod tabular;

pub use augment::{augment_gaussian, AugmentNoise};
pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use shard::{shard, ShardPlan};
pub use synth::synth_gaussian_two_class;
pub use tabular::{load_csv, write_csv, LabelColumn};

use std::path::PathBuf;

use crate::error::{Error, Result};

/// Environment variable naming the dataset directory.
pub const DATA_DIR_ENV: &str = "GRPC0LL_DATA_DIR";

/// Dataset directory from [`DATA_DIR_ENV`], if set.
pub fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

/// Samples stored row-major with a common dimension, labels in
/// `[0, class_count)`, and per-dimension domain bounds containing every
/// stored value.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
    labels: Vec<usize>,
    class_count: usize,
    bounds: Vec<(f64, f64)>,
    provenance: String,
}

impl Dataset {
    /// Builds a dataset whose bounds are the observed per-dimension range.
    pub fn new(
        dim: usize,
        values: Vec<f64>,
        labels: Vec<usize>,
        class_count: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(
                "dataset dimension must be positive".into(),
            ));
        }
        if values.len() != labels.len() * dim {
            return Err(Error::InvalidDimension(format!(
                "{} values for {} samples of dimension {dim}",
                values.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: class_count,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDimension(
                "dataset has non-finite values".into(),
            ));
        }
        let bounds = observed_bounds(dim, &values);
        Ok(Self {
            dim,
            values,
            labels,
            class_count,
            bounds,
            provenance: provenance.into(),
        })
    }

    /// Replaces the bounds with declared ones, which must contain the data.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dim {
            return Err(Error::InvalidBounds(format!(
                "{} bounds for dimension {}",
                bounds.len(),
                self.dim
            )));
        }
        for (i, (&(lo, hi), &(olo, ohi))) in bounds.iter().zip(&self.bounds).enumerate() {
            if !(hi >= lo) {
                return Err(Error::InvalidBounds(format!(
                    "upper < lower in dimension {i}"
                )));
            }
            if !self.is_empty() && (olo < lo || ohi > hi) {
                return Err(Error::InvalidBounds(format!(
                    "dimension {i} holds values in [{olo}, {ohi}] outside [{lo}, {hi}]"
                )));
            }
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.values
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    pub fn set_provenance(&mut self, p: impl Into<String>) {
        self.provenance = p.into();
    }

    /// Samples at `indices`, in that order. Declared bounds are kept.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            dim: self.dim,
            values,
            labels,
            class_count: self.class_count,
            bounds: self.bounds.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Concatenates datasets of equal dimension and class count; bounds are
    /// the union of the parts' bounds.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::EmptyInput("nothing to concatenate".into()))?;
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut bounds = first.bounds.clone();
        for p in parts {
            if p.dim != first.dim || p.class_count != first.class_count {
                return Err(Error::InvalidDimension(format!(
                    "cannot concatenate dim {}/{} classes with dim {}/{} classes",
                    first.dim, first.class_count, p.dim, p.class_count
                )));
            }
            values.extend_from_slice(&p.values);
            labels.extend_from_slice(&p.labels);
            for (b, pb) in bounds.iter_mut().zip(&p.bounds) {
                b.0 = b.0.min(pb.0);
                b.1 = b.1.max(pb.1);
            }
        }
        Ok(Dataset {
            dim: first.dim,
            values,
            labels,
            class_count: first.class_count,
            bounds,
            provenance: first.provenance.clone(),
        })
    }

    /// Maps every value through `f`; bounds are recomputed from the result.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> Result<Dataset> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Dataset::new(
            self.dim,
            values,
            self.labels.clone(),
            self.class_count,
            self.provenance.clone(),
        )
    }

    /// Rounds every value to single precision, as the wire format does.
    pub fn quantize_f32(&self) -> Dataset {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = *v as f32 as f64);
        out.bounds = observed_bounds(self.dim, &out.values);
        out
    }

    /// Count of samples per class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

fn observed_bounds(dim: usize, values: &[f64]) -> Vec<(f64, f64)> {
    if values.is_empty() {
        return vec![(0.0, 0.0); dim];
    }
    let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for row in values.chunks_exact(dim) {
        for (bb, &v) in b.iter_mut().zip(row) {
            bb.0 = bb.0.min(v);
            bb.1 = bb.1.max(v);
        }
    }
    b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    UnitRange,
    None,
}

/// Outcome of [`normalize`]: the rescaled data and the dimensions left
/// untouched because their bounds have zero width.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub dataset: Dataset,
    pub constant_dimensions: Vec<usize>,
}

/// Affinely maps each dimension from its domain bounds onto `[0, 1]`.
pub fn normalize(ds: &Dataset, mode: NormalizeMode) -> Result<Normalized> {
    normalize_with_bounds(ds, mode, ds.bounds())
}

/// Like [`normalize`] but with externally supplied bounds (e.g. the
/// training split's), values outside them are clamped.
pub fn normalize_with_bounds(
    ds: &Dataset,
    mode: NormalizeMode,
    bounds: &[(f64, f64)],
) -> Result<Normalized> {
    if mode == NormalizeMode::None {
        return Ok(Normalized {
            dataset: ds.clone(),
            constant_dimensions: Vec::new(),
        });
    }
    if bounds.len() != ds.dim() {
        return Err(Error::InvalidBounds(format!(
            "{} bounds for dimension {}",
            bounds.len(),
            ds.dim()
        )));
    }
    let constant: Vec<usize> = bounds
        .iter()
        .enumerate()
        .filter(|(_, (lo, hi))| !(hi > lo))
        .map(|(i, _)| i)
        .collect();
    let mut values = ds.values().to_vec();
    for row in values.chunks_exact_mut(ds.dim()) {
        for (v, &(lo, hi)) in row.iter_mut().zip(bounds) {
            if hi > lo {
                *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0);
            }
        }
    }
    let new_bounds = bounds
        .iter()
        .map(|&(lo, hi)| if hi > lo { (0.0, 1.0) } else { (lo, hi) })
        .collect();
    let dataset = Dataset::new(
        ds.dim(),
        values,
        ds.labels().to_vec(),
        ds.class_count(),
        format!("{}|unit_range", ds.provenance()),
    )?
    .with_bounds(new_bounds)?;
    Ok(Normalized {
        dataset,
        constant_dimensions: constant,
    })
}
