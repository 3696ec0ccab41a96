//! Execution-time estimators.

use std::collections::HashMap;
use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{self, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::adg::Adg;
use crate::encode::{encode, serialize_graph};
use crate::path::ActionPath;
use crate::penalty::AgentEstimate;
use crate::protocol::{read_response, write_request, ProtocolError, Response};
use crate::sim::{planned_cost, simulate, NoiseModel, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("estimator cannot handle a cyclic dependency graph (cycle {cycle:?})")]
    Cyclic { cycle: Vec<usize> },
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("predictor request {id}: {reason}")]
    Protocol { id: u64, reason: String },
    #[error("predictor request {id} failed remotely: {message}")]
    Remote { id: u64, message: String },
    #[error("predictor request {id} timed out after {timeout:?}")]
    Timeout { id: u64, timeout: Duration },
    #[error("predictor i/o: {0}")]
    Io(#[from] io::Error),
}

/// Produces one estimate per agent for a plan and its dependency graph.
pub trait Estimator: Send + Sync {
    fn name(&self) -> String;

    fn estimate(&self, plan: &[ActionPath], adg: &Adg) -> Result<Vec<AgentEstimate>, EstimateError>;
}

/// Constant execution-adjusted speed `k_u * v_max`.
#[derive(Debug, Clone, Copy)]
pub struct ConstExec {
    pub k_u: f64,
    pub cfg: SimConfig,
}

impl ConstExec {
    pub fn new(k_u: f64, cfg: SimConfig) -> Self {
        assert!(k_u > 0.0, "speed factor must be positive");
        ConstExec { k_u, cfg }
    }

    /// Estimated seconds for a path of `len` timesteps.
    pub fn time_for(&self, len: usize) -> f64 {
        (len as f64 * self.cfg.cell_size) / (self.k_u * self.cfg.limits.v_max)
    }
}

impl Estimator for ConstExec {
    fn name(&self) -> String {
        format!("ConstExec({})", self.k_u)
    }

    fn estimate(&self, plan: &[ActionPath], _adg: &Adg) -> Result<Vec<AgentEstimate>, EstimateError> {
        Ok(plan
            .iter()
            .map(|p| AgentEstimate::Point(self.time_for(planned_cost(p))))
            .collect())
    }
}

/// Ground truth from the noise-free simulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOracle {
    pub cfg: SimConfig,
}

impl Estimator for SimOracle {
    fn name(&self) -> String {
        "SimOracle".to_string()
    }

    fn estimate(&self, _plan: &[ActionPath], adg: &Adg) -> Result<Vec<AgentEstimate>, EstimateError> {
        if let Some(cycle) = adg.find_cycle() {
            return Err(EstimateError::Cyclic { cycle });
        }
        let out = simulate(adg, &self.cfg, &NoiseModel::ideal())?;
        Ok(out.arrival.into_iter().map(AgentEstimate::Point).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnedMode {
    /// Point predictions; distribution replies are reduced to their median.
    Point,
    /// Log-normal predictions are required.
    Dist,
}

struct Channel {
    writer: Box<dyn Write + Send>,
    responses: Receiver<Result<Response, String>>,
    next_id: u64,
    child: Option<Child>,
}

/// Client for an out-of-process predictor speaking the line protocol.
///
/// Requests are serialized over the single channel, so the client may be
/// shared between threads. Replies are cached by graph content.
pub struct LearnedClient {
    mode: LearnedMode,
    timeout: Duration,
    channel: Mutex<Channel>,
    cache: Mutex<HashMap<u64, Vec<AgentEstimate>>>,
}

impl LearnedClient {
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        mode: LearnedMode,
        timeout: Duration,
    ) -> Self {
        Self::with_child(Box::new(reader), Box::new(writer), None, mode, timeout)
    }

    /// Starts the predictor as a child process talking over stdin/stdout.
    pub fn spawn(mut command: Command, mode: LearnedMode, timeout: Duration) -> io::Result<Self> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self::with_child(Box::new(stdout), Box::new(stdin), Some(child), mode, timeout))
    }

    #[cfg(unix)]
    pub fn connect_unix(path: &std::path::Path, mode: LearnedMode, timeout: Duration) -> io::Result<Self> {
        let stream = std::os::unix::net::UnixStream::connect(path)?;
        let reader = stream.try_clone()?;
        Ok(Self::from_streams(reader, stream, mode, timeout))
    }

    fn with_child(
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
        mode: LearnedMode,
        timeout: Duration,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let msg = read_response(&mut reader).map_err(|e| e.to_string());
                let stop = matches!(msg, Err(_));
                if tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });
        LearnedClient {
            mode,
            timeout,
            channel: Mutex::new(Channel {
                writer,
                responses: rx,
                next_id: 1,
                child,
            }),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn mode(&self) -> LearnedMode {
        self.mode
    }

    /// Sends one serialized graph and waits for its reply.
    pub fn predict_graph(&self, graph: &str, agents: usize) -> Result<Vec<AgentEstimate>, EstimateError> {
        let key = {
            let mut h = DefaultHasher::new();
            graph.hash(&mut h);
            h.finish()
        };
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let estimates = {
            let mut ch = self.channel.lock().expect("channel lock");
            let id = ch.next_id;
            ch.next_id += 1;
            write_request(&mut ch.writer, id, graph)?;
            loop {
                match ch.responses.recv_timeout(self.timeout) {
                    Ok(Ok(resp)) if resp.id() != id => continue, // late reply to an abandoned request
                    Ok(Ok(Response::Result { estimates, .. })) => break self.check(id, estimates, agents)?,
                    Ok(Ok(Response::Error { message, .. })) => return Err(EstimateError::Remote { id, message }),
                    Ok(Err(reason)) => return Err(EstimateError::Protocol { id, reason }),
                    Err(RecvTimeoutError::Timeout) => {
                        return Err(EstimateError::Timeout {
                            id,
                            timeout: self.timeout,
                        })
                    }
                    Err(RecvTimeoutError::Disconnected) => {
                        return Err(EstimateError::Protocol {
                            id,
                            reason: ProtocolError::Closed.to_string(),
                        })
                    }
                }
            }
        };
        self.cache.lock().expect("cache lock").insert(key, estimates.clone());
        Ok(estimates)
    }

    fn check(&self, id: u64, estimates: Vec<AgentEstimate>, agents: usize) -> Result<Vec<AgentEstimate>, EstimateError> {
        if estimates.len() != agents {
            return Err(EstimateError::Protocol {
                id,
                reason: format!("{} estimates for {agents} agents", estimates.len()),
            });
        }
        estimates
            .into_iter()
            .map(|e| match (self.mode, e) {
                (LearnedMode::Point, AgentEstimate::LogNormal { mu, .. }) => Ok(AgentEstimate::Point(mu.exp())),
                (LearnedMode::Dist, AgentEstimate::Point(_)) => Err(EstimateError::Protocol {
                    id,
                    reason: "point estimate where a distribution was expected".into(),
                }),
                (_, e) => Ok(e),
            })
            .collect()
    }
}

impl Drop for LearnedClient {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            if let Some(child) = ch.child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

impl Estimator for LearnedClient {
    fn name(&self) -> String {
        match self.mode {
            LearnedMode::Point => "LearnedPoint".into(),
            LearnedMode::Dist => "LearnedDist".into(),
        }
    }

    fn estimate(&self, _plan: &[ActionPath], adg: &Adg) -> Result<Vec<AgentEstimate>, EstimateError> {
        self.predict_graph(&serialize_graph(&encode(adg)), adg.num_agents())
    }
}

/// Estimator selection as written in configs and on the command line:
/// `const:<k_u>`, `sim`, `learned-point`, `learned-dist`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    ConstExec(f64),
    SimOracle,
    LearnedPoint,
    LearnedDist,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::ConstExec(k) => write!(f, "const:{k}"),
            EstimatorKind::SimOracle => f.write_str("sim"),
            EstimatorKind::LearnedPoint => f.write_str("learned-point"),
            EstimatorKind::LearnedDist => f.write_str("learned-dist"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "sim" => Ok(EstimatorKind::SimOracle),
            "learned-point" => Ok(EstimatorKind::LearnedPoint),
            "learned-dist" => Ok(EstimatorKind::LearnedDist),
            other => {
                let k = other
                    .strip_prefix("const:")
                    .and_then(|k| k.parse::<f64>().ok())
                    .ok_or_else(|| format!("unknown estimator {other:?}"))?;
                if k > 0.0 && k.is_finite() {
                    Ok(EstimatorKind::ConstExec(k))
                } else {
                    Err(format!("speed factor must be positive, got {k}"))
                }
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MapeError {
    #[error("{0} predictions for {1} labels")]
    LengthMismatch(usize, usize),
    #[error("label {index} is {value}; labels must be positive")]
    NonPositiveLabel { index: usize, value: f64 },
}

/// Mean absolute percentage error, in percent.
pub fn mape(predictions: &[f64], labels: &[f64]) -> Result<f64, MapeError> {
    if predictions.len() != labels.len() {
        return Err(MapeError::LengthMismatch(predictions.len(), labels.len()));
    }
    if let Some((index, &value)) = labels.iter().enumerate().find(|(_, l)| **l <= 0.0) {
        return Err(MapeError::NonPositiveLabel { index, value });
    }
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, l)| (l - p).abs() / l)
        .sum();
    Ok(100.0 * sum / labels.len().max(1) as f64)
}
