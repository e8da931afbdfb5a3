//! Participant side: obfuscate a local shard and stream it to the coordinator.

use std::io::ErrorKind;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::assembly::ReceivedShard;
use super::wire::{self, Hello, MsgType, WireMessage, CHUNK_SAMPLES};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::privacy::{noisify_in_place, NoiseBudget};
use crate::projection::{
    generate_conditioned_matrix, generate_projection, project_dataset, ProjectionKey,
};
use crate::rng::Rng64;

/// What a participant does to its data before release.
#[derive(Clone, Debug, PartialEq)]
pub enum Obfuscation {
    None,
    Grp(ProjectionKey),
    /// Fresh Laplace noise per vector, drawn from streams of `seed`.
    Dp {
        budget: NoiseBudget,
        seed: u64,
    },
}

/// Which release a noise stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Training = 0,
    Query = 1,
}

impl Obfuscation {
    pub fn name(&self) -> &'static str {
        match self {
            Obfuscation::None => "none",
            Obfuscation::Grp(_) => "grp",
            Obfuscation::Dp { .. } => "dp",
        }
    }

    /// Released dimension for `d`-dimensional input.
    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            Obfuscation::Grp(key) => key.k(),
            _ => d,
        }
    }

    pub fn apply(&self, ds: &Dataset, purpose: Purpose) -> Result<Dataset> {
        match self {
            Obfuscation::None => Ok(ds.clone()),
            Obfuscation::Grp(key) => project_dataset(key, ds),
            Obfuscation::Dp { budget, seed } => {
                let mut rng = Rng64::derive(*seed, purpose as u64);
                let mut values = ds.values().to_vec();
                for x in values.chunks_mut(ds.dim()) {
                    noisify_in_place(x, budget, &mut rng);
                }
                Dataset::new(
                    ds.dim(),
                    values,
                    ds.labels().to_vec(),
                    ds.class_count(),
                    format!("{}|laplace(scale={})", ds.provenance(), budget.scale()),
                )
            }
        }
    }
}

/// Obfuscation recipe shared by every participant of a run. Each participant
/// instantiates it with its own seed, so keys and noise streams differ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scheme {
    None,
    /// Gaussian projection to `k` dimensions, scaled by `1/sqrt(k)`.
    Grp {
        k: usize,
    },
    /// Square `d x d` key with a prescribed Frobenius condition number.
    Conditioned {
        condition: f64,
    },
    Dp {
        budget: NoiseBudget,
    },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Grp { .. } => "grp",
            Scheme::Conditioned { .. } => "conditioned",
            Scheme::Dp { .. } => "dp",
        }
    }

    pub fn output_dim(&self, d: usize) -> usize {
        match self {
            Scheme::Grp { k } => *k,
            _ => d,
        }
    }

    pub fn for_participant(&self, d: usize, index: usize, run_seed: u64) -> Result<Obfuscation> {
        let seed = participant_seed(run_seed, index);
        Ok(match self {
            Scheme::None => Obfuscation::None,
            Scheme::Grp { k } => Obfuscation::Grp(generate_projection(*k, d, seed)?),
            Scheme::Conditioned { condition } => {
                let m: Matrix = generate_conditioned_matrix(d, *condition, seed)?;
                Obfuscation::Grp(ProjectionKey::from_matrix(m, false)?.with_seed(seed))
            }
            Scheme::Dp { budget } => Obfuscation::Dp {
                budget: *budget,
                seed,
            },
        })
    }
}

/// Seed of participant `index`'s key or noise.
pub fn participant_seed(run_seed: u64, index: usize) -> u64 {
    Rng64::derive(run_seed, index as u64 + 1).next_seed()
}

/// Shuffle seeds for the training and test shard plans of a run.
pub fn shard_seeds(run_seed: u64) -> (u64, u64) {
    let mut rng = Rng64::new(run_seed);
    (rng.next_seed(), rng.next_seed())
}

/// Obfuscates `ds` and converts it to wire precision. Returns the shard and
/// the time spent obfuscating.
pub fn prepare_shard(
    ds: &Dataset,
    obfuscation: &Obfuscation,
    purpose: Purpose,
) -> Result<(ReceivedShard, usize, Duration)> {
    let start = Instant::now();
    let out = obfuscation.apply(ds, purpose)?;
    let elapsed = start.elapsed();
    let labels = out
        .labels()
        .iter()
        .map(|&l| {
            u16::try_from(l).map_err(|_| Error::LabelOutOfRange {
                label: l,
                classes: u16::MAX as usize,
            })
        })
        .collect::<Result<Vec<u16>>>()?;
    let shard = ReceivedShard {
        values: out.values().iter().map(|&v| v as f32).collect(),
        labels,
    };
    Ok((shard, out.dim(), elapsed))
}

#[derive(Clone, Debug)]
pub struct ParticipantOptions {
    /// Connect and per-read/write timeout during the dataset phase.
    pub timeout: Duration,
    /// How long to wait for TRAIN_ACK after DATASET_END; `None` waits
    /// indefinitely, since training can take minutes.
    pub train_wait: Option<Duration>,
}

impl Default for ParticipantOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(60),
            train_wait: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub queries: usize,
    pub correct: usize,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub obfuscation_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Bytes written in the dataset phase: HELLO, chunks and DATASET_END.
    pub bytes_sent: u64,
    pub samples_sent: usize,
    pub k: usize,
    pub obfuscation_secs: f64,
    pub transmission_secs: f64,
    /// Training-set size reported in TRAIN_ACK.
    pub trained_samples: u32,
    pub queries: Option<QueryReport>,
}

/// Streams `shard` and waits for training to finish.
pub fn run_participant(
    address: impl ToSocketAddrs,
    shard: &Dataset,
    obfuscation: &Obfuscation,
) -> Result<TransferReport> {
    run_participant_with(
        address,
        shard,
        None,
        obfuscation,
        &ParticipantOptions::default(),
    )
}

/// As [`run_participant`], then classifies `test` (obfuscated the same way)
/// through the coordinator and counts correct answers.
pub fn run_participant_with(
    address: impl ToSocketAddrs,
    shard: &Dataset,
    test: Option<&Dataset>,
    obfuscation: &Obfuscation,
    options: &ParticipantOptions,
) -> Result<TransferReport> {
    if shard.is_empty() {
        return Err(Error::EmptyDataset("participant shard is empty".into()));
    }
    let (wire_shard, k, obf_time) = prepare_shard(shard, obfuscation, Purpose::Training)?;
    let mut stream = connect(address, options.timeout)?;
    let start = Instant::now();
    let sent = send_dataset(&mut stream, &wire_shard, k, shard.class_count())
        .map_err(|e| remote_error_or(&mut stream, e))?;
    let transmission = start.elapsed();

    stream.set_read_timeout(options.train_wait)?;
    let trained_samples = match expect(&mut stream, MsgType::TrainAck)? {
        Some(msg) => wire::parse_train_ack(&msg.payload)?,
        None => {
            return Err(Error::Protocol(
                "coordinator closed before TRAIN_ACK".into(),
            ))
        }
    };
    stream.set_read_timeout(Some(options.timeout))?;

    let queries = match test {
        Some(test) if !test.is_empty() => Some(query_all(&mut stream, test, obfuscation)?),
        _ => None,
    };
    Ok(TransferReport {
        bytes_sent: sent as u64,
        samples_sent: wire_shard.len(),
        k,
        obfuscation_secs: obf_time.as_secs_f64(),
        transmission_secs: transmission.as_secs_f64(),
        trained_samples,
        queries,
    })
}

fn connect(address: impl ToSocketAddrs, timeout: Duration) -> Result<TcpStream> {
    let mut last = None;
    for addr in address.to_socket_addrs()? {
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(s) => {
                s.set_nodelay(true)?;
                s.set_read_timeout(Some(timeout))?;
                s.set_write_timeout(Some(timeout))?;
                return Ok(s);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last
        .unwrap_or_else(|| std::io::Error::new(ErrorKind::NotFound, "address resolved to nothing"))
        .into())
}

fn send_dataset(
    stream: &mut TcpStream,
    shard: &ReceivedShard,
    k: usize,
    classes: usize,
) -> Result<usize> {
    let hello = Hello {
        k: k as u32,
        class_count: classes as u16,
        sample_count: shard.len() as u32,
    };
    let mut sent = wire::write_message(stream, &hello.to_message())?;
    for (values, labels) in shard
        .values
        .chunks(CHUNK_SAMPLES * k)
        .zip(shard.labels.chunks(CHUNK_SAMPLES))
    {
        sent += wire::write_message(stream, &wire::chunk_message(values, labels, k))?;
    }
    sent += wire::write_message(stream, &wire::end_message())?;
    Ok(sent)
}

/// After a failed write the coordinator may have explained itself with an
/// ERROR frame before closing; prefer that over the transport error.
fn remote_error_or(stream: &mut TcpStream, err: Error) -> Error {
    if !matches!(err, Error::Transport(_)) {
        return err;
    }
    let _ = stream.set_read_timeout(Some(Duration::from_millis(500)));
    match wire::read_message(stream) {
        Ok(Some((msg, _))) if msg.msg_type == MsgType::Error => into_remote(&msg),
        _ => err,
    }
}

fn into_remote(msg: &WireMessage) -> Error {
    match wire::parse_error(&msg.payload) {
        Ok((code, message)) => Error::Remote { code, message },
        Err(e) => e,
    }
}

/// Reads one message, turning ERROR frames into [`Error::Remote`].
fn expect(stream: &mut TcpStream, want: MsgType) -> Result<Option<WireMessage>> {
    match wire::read_message(stream)? {
        None => Ok(None),
        Some((msg, _)) if msg.msg_type == want => Ok(Some(msg)),
        Some((msg, _)) if msg.msg_type == MsgType::Error => Err(into_remote(&msg)),
        Some((msg, _)) => Err(Error::Protocol(format!(
            "expected {want:?}, got {:?}",
            msg.msg_type
        ))),
    }
}

fn query_all(
    stream: &mut TcpStream,
    test: &Dataset,
    obfuscation: &Obfuscation,
) -> Result<QueryReport> {
    let (queries, k, obf_time) = prepare_shard(test, obfuscation, Purpose::Query)?;
    let mut report = QueryReport {
        obfuscation_secs: obf_time.as_secs_f64(),
        ..QueryReport::default()
    };
    for (x, &y) in queries.values.chunks_exact(k).zip(&queries.labels) {
        report.bytes_sent += wire::write_message(stream, &wire::classify_request(x))? as u64;
        let (msg, n) = wire::read_message(stream)?
            .ok_or_else(|| Error::Protocol("coordinator closed during classification".into()))?;
        report.bytes_received += n as u64;
        match msg.msg_type {
            MsgType::ClassifyResp => {
                let resp = wire::ClassifyResponse::parse(&msg.payload)?;
                report.queries += 1;
                if resp.class == y {
                    report.correct += 1;
                }
            }
            MsgType::Error => return Err(into_remote(&msg)),
            other => {
                return Err(Error::Protocol(format!(
                    "expected CLASSIFY_RESP, got {other:?}"
                )))
            }
        }
    }
    Ok(report)
}

/// Sends one classification request on an open connection.
pub fn classify_remote(stream: &mut TcpStream, x: &[f32]) -> Result<wire::ClassifyResponse> {
    wire::write_message(stream, &wire::classify_request(x))?;
    let msg = expect(stream, MsgType::ClassifyResp)?
        .ok_or_else(|| Error::Protocol("coordinator closed during classification".into()))?;
    wire::ClassifyResponse::parse(&msg.payload)
}
