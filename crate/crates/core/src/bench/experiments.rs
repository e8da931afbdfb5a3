//! The experiment drivers. Each returns an [`ExperimentReport`] whose
//! config echo is sufficient to rerun it.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::data::{load_mnist_raw, load_split, DataSplit, RunSettings};
use super::grid::write_dp_grid;
use super::report::{round4, ExperimentReport, ParticipantRecord, RunRecord};
use crate::attack::{empirical_reconstruction, min_norm_estimate, predicted_variance, Estimator};
use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::privacy::{identity_query_sensitivity, NoiseBudget};
use crate::projection::{generate_projection, k_for_ratio, project};
use crate::protocol::{
    simulate, simulate_networked, Collaboration, Scheme, SimulationConfig, SimulationOutcome,
};

/// Reference volume per participant and projection time quoted for the
/// 14-device deployment, reported beside the measured figures.
pub const REFERENCE_BYTES_PER_PARTICIPANT: f64 = 33.6e6;
pub const REFERENCE_PROJECTION_SECS: f64 = 0.96;

fn seeds(settings: &RunSettings) -> BTreeMap<String, u64> {
    BTreeMap::from([
        ("run".to_string(), settings.seed),
        ("model".to_string(), settings.seed),
        ("train_order".to_string(), settings.train.seed),
    ])
}

fn sim_config(
    settings: &RunSettings,
    scheme: Scheme,
    participants: usize,
    mode: Collaboration,
) -> SimulationConfig {
    SimulationConfig {
        participants,
        scheme,
        model: settings.model.clone(),
        model_seed: settings.seed,
        train: settings.train.clone(),
        seed: settings.seed,
        mode,
    }
}

fn record(
    report: &mut ExperimentReport,
    label: String,
    settings: &RunSettings,
    scheme: &Scheme,
    out: &SimulationOutcome,
) -> usize {
    let d = settings.dataset.dim();
    let (epsilon, noise_scale) = match scheme {
        Scheme::Dp { budget } => (Some(budget.epsilon()), Some(budget.scale())),
        _ => (None, None),
    };
    let condition = match scheme {
        Scheme::Conditioned { condition } => Some(*condition),
        _ => None,
    };
    let ncl = out.model.is_none();
    report.runs.push(RunRecord {
        run: label.clone(),
        dataset: settings.dataset.name().to_string(),
        scheme: scheme.name().to_string(),
        participants: out.participants.len(),
        k: out.k,
        rho: d as f64 / out.k as f64,
        epsilon,
        noise_scale,
        condition,
        accuracy: Some(round4(out.accuracy)),
        min_accuracy: Some(round4(out.min_accuracy)),
        mean_accuracy: Some(round4(out.mean_accuracy)),
        max_accuracy: Some(round4(out.max_accuracy)),
        train_secs: out.train_secs,
        obfuscation_secs: out.participants.iter().map(|p| p.obfuscation_secs).sum(),
        bytes_on_wire: out.participants.iter().map(|p| p.bytes_sent).sum(),
        metrics: if ncl {
            BTreeMap::from([("non_collaborative".to_string(), 1.0)])
        } else {
            BTreeMap::new()
        },
    });
    report.participants.extend(
        out.participants
            .iter()
            .map(|p| ParticipantRecord::from_outcome(&label, p)),
    );
    report.runs.len() - 1
}

fn check_participants(ns: &[usize]) -> Result<()> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::Config(
            "participant counts must be a nonempty list of positive integers".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub settings: RunSettings,
    pub participants: Vec<usize>,
    pub scheme: Scheme,
    pub non_collaborative: bool,
    pub plain_reference: bool,
}

/// Collaborative accuracy per N, optionally with the per-participant
/// baseline and an unobfuscated single-participant reference.
pub fn exp_scaling(config: &ScalingConfig) -> Result<ExperimentReport> {
    check_participants(&config.participants)?;
    let s = &config.settings;
    let data = load_split(s)?;
    let mut report = ExperimentReport::new("scaling", config, seeds(s))?;
    if config.plain_reference {
        let out = simulate(
            &data.train,
            &data.test,
            &sim_config(s, Scheme::None, 1, Collaboration::Collaborative),
        )?;
        record(&mut report, "plain".into(), s, &Scheme::None, &out);
    }
    for &n in &config.participants {
        let out = simulate(
            &data.train,
            &data.test,
            &sim_config(s, config.scheme.clone(), n, Collaboration::Collaborative),
        )?;
        record(
            &mut report,
            format!("{}-dnn/n={n}", config.scheme.name()),
            s,
            &config.scheme,
            &out,
        );
        if config.non_collaborative {
            let cfg = sim_config(s, config.scheme.clone(), n, Collaboration::NonCollaborative);
            let out = simulate(&data.train, &data.test, &cfg)?;
            record(
                &mut report,
                format!("{}-ncl/n={n}", config.scheme.name()),
                s,
                &config.scheme,
                &out,
            );
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub settings: RunSettings,
    pub rhos: Vec<f64>,
    pub participants: usize,
}

/// Collaborative GRP accuracy per compression ratio `rho = d / k`.
pub fn exp_compression(config: &CompressionConfig) -> Result<ExperimentReport> {
    check_participants(&[config.participants])?;
    let s = &config.settings;
    let d = s.dataset.dim();
    let ks = config
        .rhos
        .iter()
        .map(|&rho| k_for_ratio(d, rho))
        .collect::<Result<Vec<_>>>()?;
    let data = load_split(s)?;
    let mut report = ExperimentReport::new("compression", config, seeds(s))?;
    for (&rho, &k) in config.rhos.iter().zip(&ks) {
        let scheme = Scheme::Grp { k };
        let out = simulate(
            &data.train,
            &data.test,
            &sim_config(
                s,
                scheme.clone(),
                config.participants,
                Collaboration::Collaborative,
            ),
        )?;
        let i = record(&mut report, format!("grp-dnn/rho={rho}"), s, &scheme, &out);
        report.runs[i].metrics.insert("requested_rho".into(), rho);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub settings: RunSettings,
    pub epsilons: Vec<f64>,
    pub participants: usize,
    /// L1 sensitivity; defaults to the L1 diameter of the training bounds.
    pub sensitivity: Option<f64>,
    /// Extra run with this Laplace scale (in the training representation),
    /// paired with a single-participant GRP run at `k = d - 1`.
    pub matched_scale: Option<f64>,
    /// Directory for the noise-added sample grid, image datasets only.
    pub image_dir: Option<PathBuf>,
}

fn clean_accuracy(out: &SimulationOutcome, data: &DataSplit) -> Result<f64> {
    match &out.model {
        Some(m) => Ok(round4(m.evaluate(&data.test.quantize_f32())?)),
        None => Err(Error::Config(
            "clean-query accuracy needs a collaborative model".into(),
        )),
    }
}

/// Laplace-noise baseline: accuracy per epsilon with noised queries, plus
/// the accuracy of the same model on clean queries.
pub fn exp_dp(config: &DpConfig) -> Result<ExperimentReport> {
    check_participants(&[config.participants])?;
    for &e in &config.epsilons {
        NoiseBudget::new(e, 1.0)?;
    }
    let s = &config.settings;
    let data = load_split(s)?;
    let (lo, hi): (Vec<f64>, Vec<f64>) = data.train.bounds().iter().copied().unzip();
    let sensitivity = match config.sensitivity {
        Some(v) => v,
        None => identity_query_sensitivity(&lo, &hi)?,
    };
    let mut report = ExperimentReport::new("dp", config, seeds(s))?;
    let n = config.participants;
    let mut budgets = Vec::new();
    for &eps in &config.epsilons {
        let budget = NoiseBudget::new(eps, sensitivity)?;
        budgets.push(budget);
        let scheme = Scheme::Dp { budget };
        let out = simulate(
            &data.train,
            &data.test,
            &sim_config(s, scheme.clone(), n, Collaboration::Collaborative),
        )?;
        let i = record(&mut report, format!("dp-dnn/eps={eps}"), s, &scheme, &out);
        report.runs[i]
            .metrics
            .insert("clean_query_accuracy".into(), clean_accuracy(&out, &data)?);
        report.runs[i]
            .metrics
            .insert("sensitivity".into(), sensitivity);
    }
    if let Some(scale) = config.matched_scale {
        let budget = NoiseBudget::from_scale(scale, sensitivity)?;
        let scheme = Scheme::Dp { budget };
        let out = simulate(
            &data.train,
            &data.test,
            &sim_config(s, scheme.clone(), n, Collaboration::Collaborative),
        )?;
        let i = record(
            &mut report,
            format!("dp-dnn/scale={scale}"),
            s,
            &scheme,
            &out,
        );
        report.runs[i]
            .metrics
            .insert("clean_query_accuracy".into(), clean_accuracy(&out, &data)?);
        report.runs[i]
            .metrics
            .insert("sensitivity".into(), sensitivity);

        let k = data.train.dim() - 1;
        let scheme = Scheme::Grp { k };
        let out = simulate(
            &data.train,
            &data.test,
            &sim_config(s, scheme.clone(), 1, Collaboration::Collaborative),
        )?;
        record(&mut report, format!("grp-dnn/n=1,k={k}"), s, &scheme, &out);
    }
    if let Some(dir) = &config.image_dir {
        if let Some(path) = write_dp_grid(dir, &data.test, &budgets, s.seed)? {
            report.artifacts.push(path.display().to_string());
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionConfig {
    pub settings: RunSettings,
    pub conditions: Vec<f64>,
}

/// Single-participant runs through square keys of prescribed Frobenius
/// condition number, plus the unprojected reference.
pub fn exp_condition(config: &ConditionConfig) -> Result<ExperimentReport> {
    let s = &config.settings;
    let d = s.dataset.dim();
    if let Some(&bad) = config.conditions.iter().find(|&&c| !(c >= d as f64)) {
        return Err(Error::UnachievableCondition { target: bad, d });
    }
    let data = load_split(s)?;
    let mut report = ExperimentReport::new("condition", config, seeds(s))?;
    let out = simulate(
        &data.train,
        &data.test,
        &sim_config(s, Scheme::None, 1, Collaboration::Collaborative),
    )?;
    record(&mut report, "plain".into(), s, &Scheme::None, &out);
    for &condition in &config.conditions {
        let scheme = Scheme::Conditioned { condition };
        let out = simulate(
            &data.train,
            &data.test,
            &sim_config(s, scheme.clone(), 1, Collaboration::Collaborative),
        )?;
        record(
            &mut report,
            format!("conditioned/kappa={condition}"),
            s,
            &scheme,
            &out,
        );
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub k: usize,
    /// Keys drawn per image for the Monte Carlo estimate.
    pub trials: usize,
    /// Images averaged for the predicted variance; `None` means all.
    pub images: Option<usize>,
    /// Images used for the Monte Carlo estimate.
    pub empirical_images: usize,
    pub seed: u64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Worst-case reconstruction on raw MNIST pixels in `[0, 255]`.
pub fn exp_attack(config: &AttackConfig) -> Result<ExperimentReport> {
    let (train, _) = load_mnist_raw()?;
    let d = train.dim();
    if config.k == 0 || config.k > d {
        return Err(Error::InvalidDimension(format!(
            "k must be in [1, {d}], got {}",
            config.k
        )));
    }
    let count = config.images.unwrap_or(train.len()).min(train.len()).max(1);
    let mut report = ExperimentReport::new(
        "attack",
        config,
        BTreeMap::from([("run".to_string(), config.seed)]),
    )?;

    let mut predicted = 0.0;
    for i in 0..count {
        predicted += mean(&predicted_variance(train.sample(i), config.k)?);
    }
    predicted /= count as f64;
    let matched_scale = (predicted / 2.0).sqrt();
    let (lo, hi): (Vec<f64>, Vec<f64>) = train.bounds().iter().copied().unzip();
    let sensitivity = identity_query_sensitivity(&lo, &hi)?;

    let mut metrics = BTreeMap::from([
        ("images".to_string(), count as f64),
        ("mean_predicted_variance".to_string(), predicted),
        ("matched_laplace_scale".to_string(), matched_scale),
        ("sensitivity".to_string(), sensitivity),
        ("matched_epsilon".to_string(), sensitivity / matched_scale),
        ("mean_squared_pixel".to_string(), {
            let mut m = 0.0;
            for i in 0..count {
                m += norm_sq(train.sample(i)) / d as f64;
            }
            m / count as f64
        }),
    ]);

    if config.empirical_images > 0 && config.trials >= 2 {
        let (mut emp, mut pred, mut bias) = (0.0, 0.0, 0.0);
        let m = config.empirical_images.min(train.len());
        for i in 0..m {
            let x = train.sample(i);
            let r = empirical_reconstruction(
                x,
                config.k,
                config.trials,
                config.seed.wrapping_add(i as u64),
                Estimator::Transpose,
            )?;
            emp += mean(&r.variance);
            pred += mean(&predicted_variance(x, config.k)?);
            let se = r.standard_error();
            bias = f64::max(
                bias,
                r.mean
                    .iter()
                    .zip(x)
                    .zip(&se)
                    .map(|((e, t), s)| if *s > 0.0 { (e - t).abs() / s } else { 0.0 })
                    .fold(0.0, f64::max),
            );
        }
        metrics.insert("empirical_variance".into(), emp / m as f64);
        metrics.insert("predicted_variance_same_images".into(), pred / m as f64);
        metrics.insert("max_bias_in_standard_errors".into(), bias);
        metrics.insert("trials".into(), config.trials as f64);
    }

    // With a leaked square key the minimum-norm estimate inverts exactly.
    let key = generate_projection(d, d, config.seed)?;
    let x = train.sample(0);
    let x_hat = min_norm_estimate(&key, &project(&key, x)?)?;
    let err = x
        .iter()
        .zip(&x_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    metrics.insert("square_key_relative_error".into(), err / norm_sq(x).sqrt());

    report.runs.push(RunRecord {
        run: format!("attack/k={}", config.k),
        dataset: "mnist".into(),
        scheme: "grp".into(),
        participants: 1,
        k: config.k,
        rho: d as f64 / config.k as f64,
        metrics,
        ..RunRecord::default()
    });
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadConfig {
    pub settings: RunSettings,
    pub participants: usize,
    pub scheme: Scheme,
    pub timeout_secs: u64,
}

/// A loopback TCP run with every cost measured: per-participant
/// obfuscation time and wire bytes, coordinator training and answering time.
pub fn exp_overhead(config: &OverheadConfig) -> Result<ExperimentReport> {
    check_participants(&[config.participants])?;
    let s = &config.settings;
    let data = load_split(s)?;
    let cfg = sim_config(
        s,
        config.scheme.clone(),
        config.participants,
        Collaboration::Collaborative,
    );
    let start = Instant::now();
    let (out, coord) = simulate_networked(
        &data.train,
        &data.test,
        &cfg,
        Duration::from_secs(config.timeout_secs),
    )?;
    let wall = start.elapsed().as_secs_f64();
    let mut report = ExperimentReport::new("overhead", config, seeds(s))?;
    let label = format!("{}-dnn/n={}", config.scheme.name(), config.participants);
    let i = record(&mut report, label, s, &config.scheme, &out);
    let received: u64 = coord.sessions.iter().map(|x| x.bytes_received).sum();
    let answering: f64 = coord.sessions.iter().map(|x| x.classify_secs).sum();
    let obf: Vec<f64> = out
        .participants
        .iter()
        .map(|p| p.obfuscation_secs)
        .collect();
    let m = &mut report.runs[i].metrics;
    m.insert("coordinator_bytes_received".into(), received as f64);
    m.insert("coordinator_assembly_secs".into(), coord.assembly_secs);
    m.insert("coordinator_train_secs".into(), coord.train_secs);
    m.insert("coordinator_test_secs".into(), answering);
    m.insert(
        "max_participant_obfuscation_secs".into(),
        obf.iter().copied().fold(0.0, f64::max),
    );
    m.insert("mean_participant_obfuscation_secs".into(), mean(&obf));
    m.insert(
        "mean_participant_bytes".into(),
        out.participants
            .iter()
            .map(|p| p.bytes_sent as f64)
            .sum::<f64>()
            / obf.len() as f64,
    );
    m.insert(
        "reference_bytes_per_participant".into(),
        REFERENCE_BYTES_PER_PARTICIPANT,
    );
    m.insert(
        "reference_projection_secs".into(),
        REFERENCE_PROJECTION_SECS,
    );
    m.insert("wall_secs".into(), wall);
    Ok(report)
}
