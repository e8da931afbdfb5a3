//! Coordinator service: collects obfuscated shards, trains once all
//! participants have finished, then answers classification requests.
//!
//! The coordinator only ever sees wire vectors. It has no access to any
//! participant's obfuscation parameters.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::assembly::{assemble, ReceivedShard};
use super::wire::{self, ErrorCode, Hello, MsgType, WireMessage};
use crate::error::{Error, Result};
use crate::nn::{train, EpochStats, ModelSpec, NetworkModel, TrainConfig};

#[derive(Clone, Debug)]
pub struct CoordinatorConfig {
    pub expected_participants: usize,
    /// Longest silence tolerated while waiting for participant data, and the
    /// idle limit on each connection.
    pub timeout: Duration,
    pub model: ModelSpec,
    pub model_seed: u64,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub session: usize,
    pub samples: usize,
    /// Bytes read in the dataset phase (HELLO through DATASET_END).
    pub bytes_received: u64,
    pub classify_requests: usize,
    /// Time spent computing classifications for this session.
    pub classify_secs: f64,
    pub completed: bool,
}

#[derive(Clone, Debug)]
pub struct CoordinatorOutcome {
    pub model: NetworkModel,
    pub history: Vec<EpochStats>,
    pub k: usize,
    pub assembled_samples: usize,
    pub assembly_secs: f64,
    pub train_secs: f64,
    /// Sessions that delivered a complete dataset, ordered by session id.
    pub sessions: Vec<SessionStats>,
}

struct State {
    k: Option<usize>,
    classes: Option<usize>,
    completed: Vec<ReceivedShard>,
    ended: usize,
    model: Option<Arc<NetworkModel>>,
    trained_samples: u32,
    aborted: bool,
    last_progress: Instant,
    finished_sessions: Vec<SessionStats>,
}

struct Shared {
    state: Mutex<State>,
    changed: Condvar,
    timeout: Duration,
}

impl Shared {
    fn progress(&self) {
        self.state.lock().unwrap().last_progress = Instant::now();
    }
}

pub struct Coordinator {
    listener: TcpListener,
    config: CoordinatorConfig,
}

impl Coordinator {
    pub fn bind(address: impl ToSocketAddrs, config: CoordinatorConfig) -> Result<Self> {
        if config.expected_participants == 0 {
            return Err(Error::Config(
                "expected participant count must be at least 1".into(),
            ));
        }
        config.train.validate()?;
        Ok(Self {
            listener: TcpListener::bind(address)?,
            config,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves until the model is trained and every participant that
    /// contributed data has disconnected.
    pub fn run(self) -> Result<CoordinatorOutcome> {
        let n = self.config.expected_participants;
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                k: None,
                classes: None,
                completed: Vec::new(),
                ended: 0,
                model: None,
                trained_samples: 0,
                aborted: false,
                last_progress: Instant::now(),
                finished_sessions: Vec::new(),
            }),
            changed: Condvar::new(),
            timeout: self.config.timeout,
        });
        let stop = Arc::new(AtomicBool::new(false));
        self.listener.set_nonblocking(true)?;
        let acceptor = {
            let (shared, stop) = (Arc::clone(&shared), Arc::clone(&stop));
            let listener = self.listener;
            thread::spawn(move || accept_loop(listener, shared, stop))
        };
        let result = coordinate(&shared, &self.config, n);
        if result.is_err() {
            let mut st = shared.state.lock().unwrap();
            st.aborted = true;
            shared.changed.notify_all();
        }
        stop.store(true, Ordering::SeqCst);
        let _ = acceptor.join();
        result
    }
}

/// Binds, serves and returns the outcome.
pub fn serve_coordinator(
    address: impl ToSocketAddrs,
    config: CoordinatorConfig,
) -> Result<CoordinatorOutcome> {
    Coordinator::bind(address, config)?.run()
}

fn coordinate(shared: &Shared, config: &CoordinatorConfig, n: usize) -> Result<CoordinatorOutcome> {
    let (shards, k, classes) = {
        let mut st = shared.state.lock().unwrap();
        while st.ended < n {
            let idle = st.last_progress.elapsed();
            if idle >= shared.timeout {
                return Err(Error::PartialData(format!(
                    "{} of {n} participants finished before a {:?} silence",
                    st.ended, shared.timeout
                )));
            }
            st = shared
                .changed
                .wait_timeout(st, shared.timeout - idle)
                .unwrap()
                .0;
        }
        let shards = std::mem::take(&mut st.completed);
        (shards, st.k.unwrap(), st.classes.unwrap())
    };

    let t = Instant::now();
    let train_set = assemble(shards, k, classes)?;
    let assembly_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let model = config.model.build(k, classes, config.model_seed)?;
    let (model, history) = train(model, &train_set, &config.train)?;
    let train_secs = t.elapsed().as_secs_f64();

    let model = Arc::new(model);
    let mut st = shared.state.lock().unwrap();
    st.model = Some(Arc::clone(&model));
    st.trained_samples = train_set.len() as u32;
    shared.changed.notify_all();
    while st.finished_sessions.len() < n {
        st = shared.changed.wait(st).unwrap();
    }
    let mut sessions = std::mem::take(&mut st.finished_sessions);
    sessions.sort_by_key(|s| s.session);
    drop(st);
    Ok(CoordinatorOutcome {
        model: Arc::try_unwrap(model).unwrap_or_else(|m| (*m).clone()),
        history,
        k,
        assembled_samples: train_set.len(),
        assembly_secs,
        train_secs,
        sessions,
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, stop: Arc<AtomicBool>) {
    let mut next_id = 0;
    let mut handlers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                shared.progress();
                let shared = Arc::clone(&shared);
                let id = next_id;
                next_id += 1;
                handlers.push(thread::spawn(move || {
                    let _ = handle_session(stream, id, &shared);
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5))
            }
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
    // Handlers finish on their own when peers disconnect or idle out.
    drop(handlers);
}

enum Phase {
    Fresh,
    Receiving { hello: Hello, data: ReceivedShard },
    Trained,
}

fn send_error(stream: &mut TcpStream, code: ErrorCode, text: &str) -> Result<()> {
    wire::write_message(stream, &wire::error_message(code, text)).map(|_| ())
}

fn handle_session(mut stream: TcpStream, id: usize, shared: &Shared) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(shared.timeout))?;
    stream.set_write_timeout(Some(shared.timeout))?;
    let mut phase = Phase::Fresh;
    let mut stats = SessionStats {
        session: id,
        ..SessionStats::default()
    };
    let result = session_loop(&mut stream, shared, &mut phase, &mut stats);
    if stats.completed {
        let mut st = shared.state.lock().unwrap();
        st.finished_sessions.push(stats);
        shared.changed.notify_all();
    }
    result
}

fn session_loop(
    stream: &mut TcpStream,
    shared: &Shared,
    phase: &mut Phase,
    stats: &mut SessionStats,
) -> Result<()> {
    loop {
        let Some((msg, len)) = wire::read_message(stream)? else {
            return Ok(());
        };
        if !matches!(phase, Phase::Trained) {
            stats.bytes_received += len as u64;
        }
        match (&mut *phase, msg.msg_type) {
            (Phase::Fresh, MsgType::Hello) => {
                let hello = Hello::parse(&msg.payload)?;
                if let Err((code, text)) = register(shared, &hello) {
                    send_error(stream, code, &text)?;
                    return Err(Error::Protocol(text));
                }
                *phase = Phase::Receiving {
                    hello,
                    data: ReceivedShard::default(),
                };
                shared.progress();
            }
            (Phase::Receiving { hello, data }, MsgType::DatasetChunk) => {
                let k = hello.k as usize;
                let (values, labels) = match wire::parse_chunk(&msg.payload, k) {
                    Ok(v) => v,
                    Err(e) => {
                        send_error(stream, ErrorCode::DimensionMismatch, &e.to_string())?;
                        return Err(e);
                    }
                };
                if let Some(&bad) = labels.iter().find(|&&l| l >= hello.class_count) {
                    let text = format!("label {bad} with {} classes", hello.class_count);
                    send_error(stream, ErrorCode::BadLabel, &text)?;
                    return Err(Error::Protocol(text));
                }
                if data.len() + labels.len() > hello.sample_count as usize {
                    let text = format!("more than the {} declared samples", hello.sample_count);
                    send_error(stream, ErrorCode::Protocol, &text)?;
                    return Err(Error::Protocol(text));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    let text = "non-finite value in chunk".to_string();
                    send_error(stream, ErrorCode::Protocol, &text)?;
                    return Err(Error::Protocol(text));
                }
                data.append(&values, &labels);
                shared.progress();
            }
            (Phase::Receiving { hello, data }, MsgType::DatasetEnd) => {
                if data.len() != hello.sample_count as usize {
                    let text = format!(
                        "declared {} samples, sent {}",
                        hello.sample_count,
                        data.len()
                    );
                    send_error(stream, ErrorCode::Protocol, &text)?;
                    return Err(Error::Protocol(text));
                }
                stats.samples = data.len();
                stats.completed = true;
                let model = {
                    let mut st = shared.state.lock().unwrap();
                    st.completed.push(std::mem::take(data));
                    st.ended += 1;
                    st.last_progress = Instant::now();
                    shared.changed.notify_all();
                    while st.model.is_none() && !st.aborted {
                        st = shared.changed.wait(st).unwrap();
                    }
                    st.model.clone()
                };
                let Some(_) = model else {
                    send_error(
                        stream,
                        ErrorCode::PartialData,
                        "coordinator aborted before training",
                    )?;
                    return Err(Error::PartialData("aborted".into()));
                };
                let total = shared.state.lock().unwrap().trained_samples;
                wire::write_message(stream, &wire::train_ack_message(total))?;
                *phase = Phase::Trained;
            }
            (Phase::Trained, MsgType::DatasetEnd) => {
                send_error(stream, ErrorCode::Protocol, "duplicate DATASET_END")?;
                return Err(Error::Protocol("duplicate DATASET_END".into()));
            }
            (Phase::Fresh | Phase::Trained, MsgType::ClassifyReq) => {
                let model = shared.state.lock().unwrap().model.clone();
                let Some(model) = model else {
                    send_error(stream, ErrorCode::NotReady, "model is not trained yet")?;
                    continue;
                };
                stats.classify_requests += 1;
                let start = Instant::now();
                answer(stream, &model, &msg)?;
                stats.classify_secs += start.elapsed().as_secs_f64();
            }
            (_, other) => {
                let text = format!("unexpected {other:?} in this session state");
                send_error(stream, ErrorCode::Protocol, &text)?;
                return Err(Error::Protocol(text));
            }
        }
    }
}

/// Fixes the run's dimension and class count on the first HELLO and checks
/// later sessions against them.
fn register(shared: &Shared, hello: &Hello) -> std::result::Result<(), (ErrorCode, String)> {
    if hello.k == 0 || hello.sample_count == 0 || hello.class_count < 2 {
        return Err((ErrorCode::Protocol, format!("invalid HELLO {hello:?}")));
    }
    let mut st = shared.state.lock().unwrap();
    if st.model.is_some() {
        return Err((ErrorCode::Protocol, "training has already finished".into()));
    }
    match st.k {
        Some(k) if k != hello.k as usize => {
            return Err((
                ErrorCode::DimensionMismatch,
                format!("k={} but the run uses k={k}", hello.k),
            ))
        }
        _ => st.k = Some(hello.k as usize),
    }
    match st.classes {
        Some(c) if c != hello.class_count as usize => Err((
            ErrorCode::Protocol,
            format!("{} classes but the run uses {c}", hello.class_count),
        )),
        _ => {
            st.classes = Some(hello.class_count as usize);
            Ok(())
        }
    }
}

fn answer(stream: &mut TcpStream, model: &NetworkModel, msg: &WireMessage) -> Result<()> {
    let x = match wire::bytes_to_f32s(&msg.payload) {
        Ok(x) if x.len() == model.input_dim() => x,
        _ => {
            let text = format!(
                "query of {} bytes for a {}-dimensional model",
                msg.payload.len(),
                model.input_dim()
            );
            return send_error(stream, ErrorCode::DimensionMismatch, &text);
        }
    };
    let x: Vec<f64> = x.into_iter().map(f64::from).collect();
    let (class, p) = model.classify(&x)?;
    let resp = wire::ClassifyResponse {
        class: class as u16,
        probabilities: p.into_iter().map(|v| v as f32).collect(),
    };
    wire::write_message(stream, &resp.to_message()).map(|_| ())
}
