//! In-process runs of the collaborative pipeline, with or without sockets.
//!
//! Both paths shard the data the same way, derive each participant's
//! obfuscation from the run seed, quantize to wire precision and assemble
//! with [`assemble`]. With equal seeds they therefore train on identical
//! data and produce identical models.

use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::assembly::{assemble, ReceivedShard};
use super::coordinator::{Coordinator, CoordinatorConfig, CoordinatorOutcome};
use super::participant::{
    prepare_shard, run_participant_with, shard_seeds, ParticipantOptions, Purpose, Scheme,
};
use super::wire::dataset_phase_bytes;
use crate::datasets::{Dataset, ShardPlan};
use crate::error::{Error, Result};
use crate::nn::{train, EpochStats, ModelSpec, NetworkModel, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collaboration {
    /// One model on the union of all participants' data.
    Collaborative,
    /// One model per participant, each tested on that participant's queries.
    NonCollaborative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub participants: usize,
    pub scheme: Scheme,
    pub model: ModelSpec,
    pub model_seed: u64,
    pub train: TrainConfig,
    /// Seeds shard plans and every participant's key or noise.
    pub seed: u64,
    pub mode: Collaboration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantOutcome {
    pub index: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub obfuscation_secs: f64,
    /// Dataset-phase wire bytes (measured on sockets, exact formula otherwise).
    pub bytes_sent: u64,
}

#[derive(Clone, Debug)]
pub struct SimulationOutcome {
    /// Pooled test accuracy (collaborative) or mean per-participant accuracy.
    pub accuracy: f64,
    pub min_accuracy: f64,
    pub mean_accuracy: f64,
    pub max_accuracy: f64,
    pub k: usize,
    pub train_secs: f64,
    pub history: Vec<EpochStats>,
    pub participants: Vec<ParticipantOutcome>,
    /// The trained model of a collaborative run.
    pub model: Option<NetworkModel>,
}

struct Split {
    train: Vec<Dataset>,
    test: Vec<Dataset>,
}

fn split(train: &Dataset, test: &Dataset, config: &SimulationConfig) -> Result<Split> {
    if config.participants == 0 {
        return Err(Error::Config("participant count must be at least 1".into()));
    }
    if train.dim() != test.dim() {
        return Err(Error::InvalidDimension(format!(
            "train dim {} vs test dim {}",
            train.dim(),
            test.dim()
        )));
    }
    let (train_seed, test_seed) = shard_seeds(config.seed);
    let n = config.participants;
    Ok(Split {
        train: ShardPlan::new(train.len(), n, train_seed)?.split(train),
        test: ShardPlan::new(test.len(), n, test_seed)?.split(test),
    })
}

/// Correct argmax predictions over a wire-precision shard.
pub fn score(model: &NetworkModel, shard: &ReceivedShard, k: usize) -> Result<usize> {
    let mut correct = 0;
    let mut x = vec![0.0; k];
    for (row, &y) in shard.values.chunks_exact(k).zip(&shard.labels) {
        for (d, s) in x.iter_mut().zip(row) {
            *d = f64::from(*s);
        }
        if model.classify(&x)?.0 == y as usize {
            correct += 1;
        }
    }
    Ok(correct)
}

fn fraction(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

fn summarize(
    accuracy: f64,
    k: usize,
    train_secs: f64,
    history: Vec<EpochStats>,
    participants: Vec<ParticipantOutcome>,
    model: Option<NetworkModel>,
) -> SimulationOutcome {
    let accs: Vec<f64> = participants.iter().map(|p| p.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len().max(1) as f64;
    SimulationOutcome {
        accuracy,
        min_accuracy: accs.iter().copied().fold(f64::INFINITY, f64::min),
        mean_accuracy: mean,
        max_accuracy: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        k,
        train_secs,
        history,
        participants,
        model,
    }
}

/// Shard, obfuscate, aggregate, train and test without sockets.
pub fn simulate(
    train_set: &Dataset,
    test_set: &Dataset,
    config: &SimulationConfig,
) -> Result<SimulationOutcome> {
    let parts = split(train_set, test_set, config)?;
    let classes = train_set.class_count();
    let d = train_set.dim();
    let mut prepared = Vec::with_capacity(config.participants);
    let mut k = config.scheme.output_dim(d);
    for (p, (tr, te)) in parts.train.iter().zip(&parts.test).enumerate() {
        let obf = config.scheme.for_participant(d, p, config.seed)?;
        let (wire_train, kk, secs) = prepare_shard(tr, &obf, Purpose::Training)?;
        let (wire_test, _, _) = prepare_shard(te, &obf, Purpose::Query)?;
        k = kk;
        prepared.push((wire_train, wire_test, secs));
    }

    match config.mode {
        Collaboration::Collaborative => {
            let t = Instant::now();
            let assembled = assemble(prepared.iter().map(|p| p.0.clone()).collect(), k, classes)?;
            let model = config.model.build(k, classes, config.model_seed)?;
            let (model, history) = train(model, &assembled, &config.train)?;
            let train_secs = t.elapsed().as_secs_f64();
            let mut participants = Vec::with_capacity(prepared.len());
            let (mut correct, mut total) = (0, 0);
            for (index, (wtr, wte, secs)) in prepared.iter().enumerate() {
                let c = score(&model, wte, k)?;
                correct += c;
                total += wte.len();
                participants.push(ParticipantOutcome {
                    index,
                    train_samples: wtr.len(),
                    test_samples: wte.len(),
                    correct: c,
                    accuracy: fraction(c, wte.len()),
                    obfuscation_secs: secs.as_secs_f64(),
                    bytes_sent: dataset_phase_bytes(wtr.len(), k) as u64,
                });
            }
            Ok(summarize(
                fraction(correct, total),
                k,
                train_secs,
                history,
                participants,
                Some(model),
            ))
        }
        Collaboration::NonCollaborative => {
            let t = Instant::now();
            let mut participants = Vec::with_capacity(prepared.len());
            for (index, (wtr, wte, secs)) in prepared.into_iter().enumerate() {
                let n = wtr.len();
                let own = assemble(vec![wtr], k, classes)?;
                let model = config.model.build(k, classes, config.model_seed)?;
                let (model, _) = train(model, &own, &config.train)?;
                let c = score(&model, &wte, k)?;
                participants.push(ParticipantOutcome {
                    index,
                    train_samples: n,
                    test_samples: wte.len(),
                    correct: c,
                    accuracy: fraction(c, wte.len()),
                    obfuscation_secs: secs.as_secs_f64(),
                    bytes_sent: dataset_phase_bytes(n, k) as u64,
                });
            }
            let train_secs = t.elapsed().as_secs_f64();
            let mean =
                participants.iter().map(|p| p.accuracy).sum::<f64>() / participants.len() as f64;
            Ok(summarize(
                mean,
                k,
                train_secs,
                Vec::new(),
                participants,
                None,
            ))
        }
    }
}

/// The collaborative run over loopback TCP: a coordinator thread plus one
/// thread per participant. Returns the participants' view and the
/// coordinator's.
pub fn simulate_networked(
    train_set: &Dataset,
    test_set: &Dataset,
    config: &SimulationConfig,
    timeout: Duration,
) -> Result<(SimulationOutcome, CoordinatorOutcome)> {
    if config.mode != Collaboration::Collaborative {
        return Err(Error::Config(
            "networked runs are collaborative only".into(),
        ));
    }
    let parts = split(train_set, test_set, config)?;
    let d = train_set.dim();
    let coordinator = Coordinator::bind(
        "127.0.0.1:0",
        CoordinatorConfig {
            expected_participants: config.participants,
            timeout,
            model: config.model.clone(),
            model_seed: config.model_seed,
            train: config.train.clone(),
        },
    )?;
    let addr = coordinator.local_addr()?;
    let server = thread::spawn(move || coordinator.run());
    let options = ParticipantOptions {
        timeout,
        train_wait: None,
    };
    let mut workers = Vec::with_capacity(config.participants);
    for (p, (tr, te)) in parts.train.into_iter().zip(parts.test).enumerate() {
        let obf = config.scheme.for_participant(d, p, config.seed)?;
        let options = options.clone();
        workers.push(thread::spawn(move || {
            run_participant_with(addr, &tr, Some(&te), &obf, &options).map(|r| (r, te.len()))
        }));
    }
    let mut participants = Vec::with_capacity(workers.len());
    let mut first_err = None;
    for (index, w) in workers.into_iter().enumerate() {
        match w.join().expect("participant thread panicked") {
            Ok((report, test_len)) => {
                let q = report.queries.clone().unwrap_or_default();
                participants.push(ParticipantOutcome {
                    index,
                    train_samples: report.samples_sent,
                    test_samples: test_len,
                    correct: q.correct,
                    accuracy: fraction(q.correct, q.queries),
                    obfuscation_secs: report.obfuscation_secs,
                    bytes_sent: report.bytes_sent,
                });
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let coord = server.join().expect("coordinator thread panicked")?;
    if let Some(e) = first_err {
        return Err(e);
    }
    let correct: usize = participants.iter().map(|p| p.correct).sum();
    let total: usize = participants.iter().map(|p| p.test_samples).sum();
    let outcome = summarize(
        fraction(correct, total),
        coord.k,
        coord.train_secs,
        coord.history.clone(),
        participants,
        Some(coord.model.clone()),
    );
    Ok((outcome, coord))
}

/// Convenience for building a config with the usual defaults.
pub fn collaborative(
    participants: usize,
    scheme: Scheme,
    model: ModelSpec,
    train: TrainConfig,
    seed: u64,
) -> SimulationConfig {
    SimulationConfig {
        participants,
        scheme,
        model,
        model_seed: seed,
        train,
        seed,
        mode: Collaboration::Collaborative,
    }
}
