//! Unit-job arrival traces: generators for the adversarial patterns, a
//! seeded Poisson generator, and the JSON-lines on-disk format.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{fp, Real};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line 1: missing or malformed server-count header: {0}")]
    BadHeader(String),
    #[error("line {line}: malformed arrival record: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: arrivals unsorted (time decreased)")]
    Unsorted { line: usize },
    #[error("line {line}: arrival time is negative or not finite")]
    BadTime { line: usize },
    #[error("server count must be at least 1")]
    BadServerCount,
}

/// A sorted sequence of unit-job arrival times plus the tandem length `K`.
/// Every job has size 1 on every server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace<T: Real> {
    arrivals: Vec<T>,
    servers: usize,
}

impl<T: Real> Trace<T> {
    pub fn new(arrivals: Vec<T>, servers: usize) -> Result<Self, TraceError> {
        if servers == 0 {
            return Err(TraceError::BadServerCount);
        }
        for (i, pair) in arrivals.windows(2).enumerate() {
            if pair[1] < pair[0] {
                return Err(TraceError::Unsorted { line: i + 3 });
            }
        }
        if let Some(i) = arrivals
            .iter()
            .position(|t| !t.is_finite() || *t < T::zero())
        {
            return Err(TraceError::BadTime { line: i + 2 });
        }
        Ok(Self { arrivals, servers })
    }

    pub fn arrivals(&self) -> &[T] {
        &self.arrivals
    }

    pub fn servers(&self) -> usize {
        self.servers
    }

    pub fn job_count(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }
}

/// `n` jobs all released at `t0`.
pub fn gen_batch<T: Real>(n: usize, t0: T, servers: usize) -> Trace<T> {
    Trace::new(vec![t0; n], servers).expect("batch parameters valid")
}

/// One job at 0, one at `gap`, then `burst` jobs just after the second
/// arrival (offset `gap * 1e-6`). The shape on which speed replication
/// blocks the second job behind the first.
pub fn gen_trickle_then_burst<T: Real>(gap: T, burst: usize, servers: usize) -> Trace<T> {
    assert!(gap > T::zero(), "gap must be positive");
    let mut arrivals = Vec::with_capacity(burst + 2);
    arrivals.push(T::zero());
    arrivals.push(gap);
    let burst_at = gap + gap * fp(1e-6);
    arrivals.extend(std::iter::repeat_n(burst_at, burst));
    Trace::new(arrivals, servers).expect("trickle-burst parameters valid")
}

/// Seeded exponential inter-arrivals at the given rate, truncated at the
/// horizon. Identical seeds yield identical traces.
pub fn gen_poisson<T: Real>(rate: T, horizon: T, seed: u64, servers: usize) -> Trace<T> {
    assert!(rate > T::zero(), "rate must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arrivals = Vec::new();
    let mut t = T::zero();
    loop {
        let u: f64 = rng.gen();
        t -= (T::one() - fp::<T>(u)).ln() / rate;
        if t > horizon {
            break;
        }
        arrivals.push(t);
    }
    Trace::new(arrivals, servers).expect("poisson arrivals sorted by construction")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    #[serde(rename = "K")]
    k: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobLine<T> {
    t: T,
}

/// Serialize a trace in the JSON-lines format: `{"K": k}` header, then one
/// `{"t": x}` record per job in arrival order.
pub fn emit_string<T: Real + Serialize>(trace: &Trace<T>) -> String {
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&HeaderLine { k: trace.servers }).unwrap());
    out.push('\n');
    for &t in &trace.arrivals {
        out.push_str(&serde_json::to_string(&JobLine { t }).unwrap());
        out.push('\n');
    }
    out
}

pub fn emit<T: Real + Serialize>(trace: &Trace<T>, path: &Path) -> Result<(), TraceError> {
    let mut file = fs::File::create(path)?;
    file.write_all(emit_string(trace).as_bytes())?;
    Ok(())
}

/// Parse the JSON-lines trace format; errors name the offending line.
pub fn parse_str<T: Real + serde::de::DeserializeOwned>(
    input: &str,
) -> Result<Trace<T>, TraceError> {
    let mut lines = input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| TraceError::BadHeader("empty file".into()))?;
    let header: HeaderLine =
        serde_json::from_str(header).map_err(|e| TraceError::BadHeader(e.to_string()))?;
    if header.k == 0 {
        return Err(TraceError::BadServerCount);
    }
    let mut arrivals: Vec<T> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let job: JobLine<T> = serde_json::from_str(line).map_err(|e| TraceError::Malformed {
            line: lineno,
            msg: e.to_string(),
        })?;
        if !job.t.is_finite() || job.t < T::zero() {
            return Err(TraceError::BadTime { line: lineno });
        }
        if let Some(&prev) = arrivals.last() {
            if job.t < prev {
                return Err(TraceError::Unsorted { line: lineno });
            }
        }
        arrivals.push(job.t);
    }
    Ok(Trace {
        arrivals,
        servers: header.k,
    })
}

pub fn parse<T: Real + serde::de::DeserializeOwned>(path: &Path) -> Result<Trace<T>, TraceError> {
    parse_str(&fs::read_to_string(path)?)
}
