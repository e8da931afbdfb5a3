//! Dataset ids, presets and the train/test pairs the experiments run on.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::{
    augment_gaussian, data_dir, load_csv, load_idx, normalize, normalize_with_bounds,
    synth_gaussian_two_class, AugmentNoise, Dataset, LabelColumn, NormalizeMode, DATA_DIR_ENV,
};
use crate::error::{Error, Result};
use crate::nn::{ModelSpec, TrainConfig, SPAM_DROPOUT};
use crate::rng::Rng64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    Mnist,
    Spambase,
    /// Two 2-D Gaussian classes centred at -2 and +2.
    Toy2d,
    /// The same construction in 10 dimensions.
    Gauss10,
}

impl DatasetId {
    pub fn name(self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::Spambase => "spambase",
            DatasetId::Toy2d => "toy2d",
            DatasetId::Gauss10 => "gauss10",
        }
    }

    /// Natural input dimension.
    pub fn dim(self) -> usize {
        match self {
            DatasetId::Mnist => 784,
            DatasetId::Spambase => 57,
            DatasetId::Toy2d => 2,
            DatasetId::Gauss10 => 10,
        }
    }

    pub fn default_model(self) -> ModelSpec {
        match self {
            DatasetId::Mnist => ModelSpec::Cnn,
            DatasetId::Spambase => ModelSpec::SpamMlp {
                dropout: SPAM_DROPOUT,
            },
            DatasetId::Toy2d | DatasetId::Gauss10 => ModelSpec::Mlp {
                hidden: vec![30, 40],
            },
        }
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetId::Mnist),
            "spambase" => Ok(DatasetId::Spambase),
            "toy2d" => Ok(DatasetId::Toy2d),
            "gauss10" => Ok(DatasetId::Gauss10),
            _ => Err(Error::UnknownId {
                kind: "dataset",
                id: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 10% of the samples and short training, for CI.
    Smoke,
    Full,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Preset::Smoke),
            "full" => Ok(Preset::Full),
            _ => Err(Error::UnknownId {
                kind: "preset",
                id: s.to_string(),
            }),
        }
    }
}

/// Everything that determines one training run apart from the obfuscation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub dataset: DatasetId,
    /// Fraction of the full train and test sets used.
    pub fraction: f64,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Seeds synthetic data, augmentation, shard plans and keys.
    pub seed: u64,
    /// Feature-relative noise of the spambase augmentation.
    pub augment_noise: f64,
}

/// Noise of the spambase augmentation, relative to each feature's std.
pub const SPAM_AUGMENT_NOISE: f64 = 0.05;
/// Augmented spambase sizes.
pub const SPAM_TRAIN: usize = 40_000;
pub const SPAM_TEST: usize = 400;
/// Per-class sample counts of the synthetic Gaussian sets.
pub const SYNTH_TRAIN_PER_CLASS: usize = 5_000;
pub const SYNTH_TEST_PER_CLASS: usize = 1_000;

impl RunSettings {
    pub fn preset(dataset: DatasetId, preset: Preset, seed: u64) -> Self {
        let smoke = preset == Preset::Smoke;
        let (learning_rate, epochs) = match dataset {
            DatasetId::Mnist => (0.05, if smoke { 3 } else { 10 }),
            DatasetId::Spambase => (0.1, if smoke { 10 } else { 40 }),
            DatasetId::Toy2d | DatasetId::Gauss10 => (0.01, if smoke { 10 } else { 30 }),
        };
        Self {
            dataset,
            fraction: if smoke { 0.1 } else { 1.0 },
            model: dataset.default_model(),
            train: TrainConfig {
                learning_rate,
                batch_size: 64,
                epochs,
                lambda: 0.0,
                seed,
                shuffle: true,
            },
            seed,
            augment_noise: SPAM_AUGMENT_NOISE,
        }
    }
}

/// A train/test pair ready for training. MNIST and spambase are rescaled to
/// `[0, 1]`, spambase with the training split's bounds.
#[derive(Clone, Debug)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
}

fn dir_for(name: &str) -> Result<PathBuf> {
    let dir = data_dir().ok_or_else(|| {
        Error::Config(format!(
            "{DATA_DIR_ENV} is not set; it must name the dataset directory"
        ))
    })?;
    Ok(dir.join(name))
}

fn scaled(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).max(1)
}

pub fn load_mnist_raw() -> Result<(Dataset, Dataset)> {
    let dir = dir_for("mnist")?;
    let train = load_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
    )?;
    let test = load_idx(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
    )?;
    Ok((train, test))
}

pub fn load_spambase_raw() -> Result<Dataset> {
    load_csv(dir_for("spambase")?.join("spambase.csv"), LabelColumn::Last)
}

pub fn load_split(settings: &RunSettings) -> Result<DataSplit> {
    let f = settings.fraction;
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Config(format!(
            "sample fraction must be in (0, 1], got {f}"
        )));
    }
    let seed = settings.seed;
    match settings.dataset {
        DatasetId::Mnist => {
            let (train, test) = load_mnist_raw()?;
            let train = train.take(scaled(train.len(), f));
            let test = test.take(scaled(test.len(), f));
            Ok(DataSplit {
                train: normalize(&train, NormalizeMode::UnitRange)?.dataset,
                test: normalize(&test, NormalizeMode::UnitRange)?.dataset,
            })
        }
        DatasetId::Spambase => {
            let base = load_spambase_raw()?;
            let (train, test) = augment_gaussian(
                &base,
                AugmentNoise::FeatureRelative(settings.augment_noise),
                scaled(SPAM_TRAIN, f),
                scaled(SPAM_TEST, f),
                seed,
            )?;
            let bounds = train.bounds().to_vec();
            Ok(DataSplit {
                train: normalize_with_bounds(&train, NormalizeMode::UnitRange, &bounds)?.dataset,
                test: normalize_with_bounds(&test, NormalizeMode::UnitRange, &bounds)?.dataset,
            })
        }
        DatasetId::Toy2d | DatasetId::Gauss10 => {
            let d = settings.dataset.dim();
            let mut rng = Rng64::derive(seed, 7);
            let train = synth_gaussian_two_class(
                d,
                2.0,
                scaled(SYNTH_TRAIN_PER_CLASS, f),
                rng.next_seed(),
            )?;
            let test =
                synth_gaussian_two_class(d, 2.0, scaled(SYNTH_TEST_PER_CLASS, f), rng.next_seed())?;
            Ok(DataSplit { train, test })
        }
    }
}
