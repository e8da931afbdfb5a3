use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use grpcoll::attack::{empirical_reconstruction, predicted_variance, Estimator};
use grpcoll::bench::{
    exp_attack, exp_compression, exp_condition, exp_dp, exp_overhead, exp_scaling, load_split,
    AttackConfig, CompressionConfig, ConditionConfig, DatasetId, DpConfig, ExperimentReport,
    OverheadConfig, Preset, RunSettings, ScalingConfig,
};
use grpcoll::datasets::{write_csv, ShardPlan};
use grpcoll::nn::save_model;
use grpcoll::privacy::{identity_query_sensitivity, NoiseBudget};
use grpcoll::projection::inner_product_monte_carlo;
use grpcoll::protocol::{
    run_participant_with, shard_seeds, Coordinator, CoordinatorConfig, ParticipantOptions, Scheme,
};
use grpcoll::rng::Rng64;

#[derive(Parser)]
#[command(
    name = "grpcoll",
    version,
    about = "Collaborative learning on randomly projected data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a prepared train/test pair as CSV (label in the last column).
    GenData {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "data-out")]
        out: PathBuf,
    },
    /// Accuracy versus number of participants.
    ExpScaling {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "40,100,280,400")]
        participants: Vec<usize>,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Also train one model per participant.
        #[arg(long)]
        ncl: bool,
        /// Also train on unobfuscated data.
        #[arg(long)]
        plain: bool,
    },
    /// Accuracy versus compression ratio d/k.
    ExpCompression {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2.33")]
        rhos: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        participants: usize,
    },
    /// Laplace-noise baseline versus epsilon.
    ExpDp {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "10,50,100,500")]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        participants: usize,
        /// L1 sensitivity; defaults to the L1 diameter of the data bounds.
        #[arg(long)]
        sensitivity: Option<f64>,
        /// Extra run at this Laplace scale, paired with GRP at k = d - 1.
        #[arg(long)]
        matched_scale: Option<f64>,
    },
    /// Single-participant accuracy versus key condition number.
    ExpCondition {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "10,30,100,300")]
        conditions: Vec<f64>,
    },
    /// Reconstruction variance on raw MNIST pixels.
    ExpAttack {
        #[arg(long, default_value_t = 783)]
        k: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Images averaged for the predicted variance (default: all).
        #[arg(long)]
        images: Option<usize>,
        #[arg(long, default_value_t = 1)]
        empirical_images: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Loopback TCP run with time and byte accounting.
    ExpOverhead {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 14)]
        participants: usize,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
    },
    /// Run the coordinator.
    Serve {
        #[arg(long, default_value = "0.0.0.0:7878")]
        bind: String,
        #[arg(long)]
        participants: usize,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
        #[command(flatten)]
        run: RunArgs,
        /// Save the trained model here.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Run one participant: shard `index` of `participants` of the dataset.
    Participate {
        #[arg(long)]
        connect: SocketAddr,
        #[arg(long)]
        participants: usize,
        #[arg(long)]
        index: usize,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Also classify this participant's test shard.
        #[arg(long)]
        test: bool,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
    },
    /// Monte Carlo check of the projection estimator properties.
    VerifyProperties {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// mnist, spambase, toy2d or gauss10 (default depends on the command).
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, default_value = "smoke")]
    preset: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// L2 penalty weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Fraction of the samples to use, overriding the preset.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, default_value = "reports")]
    out_dir: PathBuf,
}

impl RunArgs {
    fn settings(&self) -> Result<RunSettings> {
        self.settings_or(DatasetId::Mnist)
    }

    fn settings_or(&self, default: DatasetId) -> Result<RunSettings> {
        let dataset = match &self.dataset {
            Some(name) => name.parse()?,
            None => default,
        };
        let preset: Preset = self.preset.parse()?;
        let mut s = RunSettings::preset(dataset, preset, self.seed);
        if let Some(e) = self.epochs {
            s.train.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            s.train.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            s.train.batch_size = b;
        }
        if let Some(l) = self.lambda {
            s.train.lambda = l;
        }
        if let Some(f) = self.fraction {
            s.fraction = f;
        }
        Ok(s)
    }
}

#[derive(Args, Clone)]
struct SchemeArgs {
    /// One of grp, none, dp.
    #[arg(long, default_value = "grp")]
    scheme: String,
    /// Projected dimension (default: the data dimension).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
}

impl SchemeArgs {
    fn scheme(&self, d: usize, sensitivity: f64) -> Result<Scheme> {
        Ok(match self.scheme.as_str() {
            "grp" => Scheme::Grp {
                k: self.k.unwrap_or(d),
            },
            "none" => Scheme::None,
            "dp" => {
                let eps = self
                    .epsilon
                    .context("--epsilon is required with --scheme dp")?;
                Scheme::Dp {
                    budget: NoiseBudget::new(eps, sensitivity)?,
                }
            }
            other => bail!("unknown scheme {other:?}"),
        })
    }
}

fn emit(report: &ExperimentReport, dir: &Path) -> Result<()> {
    for path in report.write(dir)? {
        eprintln!("wrote {}", path.display());
    }
    for r in &report.runs {
        match r.accuracy {
            Some(a) => println!("{:<28} accuracy {a:.4}", r.run),
            None => println!("{:<28} {:?}", r.run, r.metrics),
        }
    }
    Ok(())
}

/// Unit-range data have L1 diameter `d`.
fn unit_sensitivity(d: usize) -> f64 {
    d as f64
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { run, out } => {
            let split = load_split(&run.settings()?)?;
            std::fs::create_dir_all(&out)?;
            let name = run.settings()?.dataset.name();
            for (part, ds) in [("train", &split.train), ("test", &split.test)] {
                let path = out.join(format!("{name}-{part}.csv"));
                write_csv(ds, std::fs::File::create(&path)?)?;
                eprintln!("wrote {} ({} samples)", path.display(), ds.len());
            }
        }
        Command::ExpScaling {
            run,
            participants,
            scheme,
            ncl,
            plain,
        } => {
            let settings = run.settings()?;
            let d = settings.dataset.dim();
            let config = ScalingConfig {
                scheme: scheme.scheme(d, unit_sensitivity(d))?,
                settings,
                participants,
                non_collaborative: ncl,
                plain_reference: plain,
            };
            emit(&exp_scaling(&config)?, &run.out_dir)?;
        }
        Command::ExpCompression {
            run,
            rhos,
            participants,
        } => {
            let config = CompressionConfig {
                settings: run.settings()?,
                rhos,
                participants,
            };
            emit(&exp_compression(&config)?, &run.out_dir)?;
        }
        Command::ExpDp {
            run,
            epsilons,
            participants,
            sensitivity,
            matched_scale,
        } => {
            let config = DpConfig {
                settings: run.settings()?,
                epsilons,
                participants,
                sensitivity,
                matched_scale,
                image_dir: Some(run.out_dir.clone()),
            };
            emit(&exp_dp(&config)?, &run.out_dir)?;
        }
        Command::ExpCondition { run, conditions } => {
            let config = ConditionConfig {
                settings: run.settings_or(DatasetId::Gauss10)?,
                conditions,
            };
            emit(&exp_condition(&config)?, &run.out_dir)?;
        }
        Command::ExpAttack {
            k,
            trials,
            images,
            empirical_images,
            seed,
            out,
        } => {
            let config = AttackConfig {
                k,
                trials,
                images,
                empirical_images,
                seed,
            };
            emit(&exp_attack(&config)?, &out)?;
        }
        Command::ExpOverhead {
            run,
            participants,
            scheme,
            timeout_secs,
        } => {
            let settings = run.settings()?;
            let d = settings.dataset.dim();
            let config = OverheadConfig {
                scheme: scheme.scheme(d, unit_sensitivity(d))?,
                settings,
                participants,
                timeout_secs,
            };
            emit(&exp_overhead(&config)?, &run.out_dir)?;
        }
        Command::Serve {
            bind,
            participants,
            timeout_secs,
            run,
            save_model: save,
        } => {
            let settings = run.settings()?;
            let config = CoordinatorConfig {
                expected_participants: participants,
                timeout: Duration::from_secs(timeout_secs),
                model: settings.model.clone(),
                model_seed: settings.seed,
                train: settings.train.clone(),
            };
            let coordinator = Coordinator::bind(bind.as_str(), config)?;
            eprintln!("listening on {}", coordinator.local_addr()?);
            let outcome = coordinator.run()?;
            if let Some(path) = save {
                std::fs::write(&path, save_model(&outcome.model))?;
                eprintln!("saved model to {}", path.display());
            }
            let summary = json!({
                "k": outcome.k,
                "assembled_samples": outcome.assembled_samples,
                "assembly_secs": outcome.assembly_secs,
                "train_secs": outcome.train_secs,
                "history": outcome.history,
                "sessions": outcome.sessions,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Participate {
            connect,
            participants,
            index,
            run,
            scheme,
            test,
            timeout_secs,
        } => {
            if index >= participants {
                bail!("index {index} out of range for {participants} participants");
            }
            let settings = run.settings()?;
            let split = load_split(&settings)?;
            let d = split.train.dim();
            let (lo, hi): (Vec<f64>, Vec<f64>) = split.train.bounds().iter().copied().unzip();
            let scheme = scheme.scheme(d, identity_query_sensitivity(&lo, &hi)?)?;
            let obfuscation = scheme.for_participant(d, index, settings.seed)?;
            let (train_seed, test_seed) = shard_seeds(settings.seed);
            let shard = ShardPlan::new(split.train.len(), participants, train_seed)?
                .split(&split.train)
                .swap_remove(index);
            let test_shard = ShardPlan::new(split.test.len(), participants, test_seed)?
                .split(&split.test)
                .swap_remove(index);
            let options = ParticipantOptions {
                timeout: Duration::from_secs(timeout_secs),
                train_wait: None,
            };
            let report = run_participant_with(
                connect,
                &shard,
                test.then_some(&test_shard),
                &obfuscation,
                &options,
            )?;
            let q = report.queries.as_ref();
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "bytes_sent": report.bytes_sent,
                    "samples_sent": report.samples_sent,
                    "k": report.k,
                    "obfuscation_secs": report.obfuscation_secs,
                    "transmission_secs": report.transmission_secs,
                    "trained_samples": report.trained_samples,
                    "queries": q.map(|q| q.queries),
                    "correct": q.map(|q| q.correct),
                }))?
            );
        }
        Command::VerifyProperties { trials, d, k, seed } => {
            let mut rng = Rng64::new(seed);
            let unit = |rng: &mut Rng64| {
                let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
            };
            let (x1, x2) = (unit(&mut rng), unit(&mut rng));
            let (dot, dist) = inner_product_monte_carlo(&x1, &x2, k, trials, seed)?;
            let true_dot: f64 = x1.iter().zip(&x2).map(|(a, b)| a * b).sum();
            let true_dist: f64 = x1.iter().zip(&x2).map(|(a, b)| (a - b) * (a - b)).sum();
            let r = empirical_reconstruction(&x1, k, trials, seed, Estimator::Transpose)?;
            let pred = predicted_variance(&x1, k)?;
            let worst_rel = r
                .variance
                .iter()
                .zip(&pred)
                .map(|(e, p)| (e - p).abs() / p)
                .fold(0.0, f64::max);
            let out = json!({
                "trials": trials, "d": d, "k": k,
                "dot": { "truth": true_dot, "mean": dot.mean, "z": (dot.mean - true_dot) / dot.standard_error(),
                         "variance": dot.variance, "bound": 2.0 / k as f64 },
                "distance": { "truth": true_dist, "mean": dist.mean, "z": (dist.mean - true_dist) / dist.standard_error(),
                              "variance": dist.variance, "bound": 32.0 / k as f64 },
                "reconstruction": { "estimator": "transpose", "worst_relative_variance_error": worst_rel },
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(())
}
