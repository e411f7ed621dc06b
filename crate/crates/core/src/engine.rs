//! Deterministic event-driven simulator of K tandem servers processing
//! unit jobs under a pluggable speed policy.
//!
//! Between events each server's head job depletes at the policy speed; the
//! next event time is computed analytically as the minimum over the next
//! arrival, each server's head completion, and the policy's own speed-change
//! horizon. Ties within `merge_tol` are processed as one batch: completions
//! and transfers from the highest-indexed server downward, then arrivals.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::policies::{PolicyError, SpeedPolicy};
use crate::scalar::{count, fp, Real};
use crate::workload::Trace;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("policy assigned speed {speed} to empty server {server}")]
    SpeedOnEmptyServer { server: usize, speed: f64 },
    #[error("policy returned invalid speed {speed} for server {server}")]
    BadSpeed { server: usize, speed: f64 },
    #[error("policy returned {got} speeds for {expected} servers")]
    WrongArity { got: usize, expected: usize },
    #[error("no progress possible at time {0}: all speeds zero and no pending arrival")]
    Stalled(f64),
    #[error("event budget of {0} steps exceeded; input may not terminate")]
    EventLimit(u64),
    #[error("job {job} left server {server} with residual work {residual}")]
    WorkConservation {
        job: usize,
        server: usize,
        residual: f64,
    },
    #[error("trajectory incomplete: job {0} never departed")]
    Incomplete(usize),
    #[error("flow accumulator {integral} disagrees with per-job flow {summed}")]
    InconsistentFlow { integral: f64, summed: f64 },
}

/// Live view of the tandem system exposed to speed policies.
#[derive(Debug)]
pub struct SystemState<T: Real> {
    clock: T,
    queues: Vec<VecDeque<usize>>,
    head_remaining: Vec<T>,
    head_elapsed: Vec<T>,
    profiles: Vec<Vec<(T, T)>>,
}

/// Head-of-line job on one server: id, remaining work, service time so far.
#[derive(Debug, Clone, Copy)]
pub struct HeadView<T> {
    pub job: usize,
    pub remaining: T,
    pub elapsed: T,
}

impl<T: Real> SystemState<T> {
    fn new(servers: usize, jobs: usize) -> Self {
        Self {
            clock: T::zero(),
            queues: vec![VecDeque::new(); servers],
            head_remaining: vec![T::zero(); servers],
            head_elapsed: vec![T::zero(); servers],
            profiles: vec![Vec::new(); jobs],
        }
    }

    pub fn clock(&self) -> T {
        self.clock
    }

    pub fn server_count(&self) -> usize {
        self.queues.len()
    }

    pub fn queue_len(&self, server: usize) -> usize {
        self.queues[server].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.queues.iter().map(|q| q.len()).collect()
    }

    pub fn head(&self, server: usize) -> Option<HeadView<T>> {
        self.queues[server].front().map(|&job| HeadView {
            job,
            remaining: self.head_remaining[server],
            elapsed: self.head_elapsed[server],
        })
    }

    /// Speed segments `(duration, speed)` the job has been served with on
    /// server 1 so far.
    pub fn recorded_profile(&self, job: usize) -> &[(T, T)] {
        &self.profiles[job]
    }

    fn set_fresh_head(&mut self, server: usize) {
        if !self.queues[server].is_empty() {
            self.head_remaining[server] = T::one();
            self.head_elapsed[server] = T::zero();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    Transfer,
    Departure,
    SpeedChange,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EventRecord<T> {
    pub time: T,
    pub kind: EventKind,
    /// Job involved; `None` for pure speed changes.
    pub job: Option<usize>,
    /// Server the job left (transfer origin, departure server, or arrival
    /// target 0); `None` for pure speed changes.
    pub server: Option<usize>,
}

/// Piecewise-constant slice of the run between two consecutive events.
/// `head_remaining` holds each head job's remaining work at `start`.
#[derive(Debug, Clone, Serialize)]
pub struct Segment<T> {
    pub start: T,
    pub end: T,
    pub speeds: Vec<T>,
    pub queue_lens: Vec<usize>,
    pub head_remaining: Vec<Option<T>>,
}

/// Complete reconstructible record of a simulation run.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory<T: Real> {
    pub servers: usize,
    pub arrivals: Vec<T>,
    pub finishes: Vec<Option<T>>,
    pub events: Vec<EventRecord<T>>,
    pub segments: Vec<Segment<T>>,
    /// Accumulated `integral of n(t) dt`.
    pub flow_integral: T,
    /// Accumulated `integral of sum_k P(s_k(t)) dt`.
    pub energy_integral: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport<T> {
    pub flow_time: T,
    pub energy: T,
    pub total: T,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions<T> {
    /// Abort the run after this many event batches.
    pub max_events: u64,
    /// Events closer than this are treated as simultaneous.
    pub merge_tol: T,
}

impl<T: Real> Default for SimOptions<T> {
    fn default() -> Self {
        Self {
            max_events: 10_000_000,
            merge_tol: fp(1e-12),
        }
    }
}

/// Which one-sided limit to take when reconstructing state at an event time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Before,
    After,
}

/// Queue contents of one system at a fixed time: per-server job counts and
/// the head job's remaining work.
#[derive(Debug, Clone, PartialEq)]
pub struct PointState<T> {
    pub counts: Vec<usize>,
    pub head_remaining: Vec<Option<T>>,
}

impl<T: Real> PointState<T> {
    pub fn empty(servers: usize) -> Self {
        Self {
            counts: vec![0; servers],
            head_remaining: vec![None; servers],
        }
    }

    /// Number of jobs on `server` with remaining work at least `q`, for
    /// `q` in `(0, 1]`: queued jobs all count, the head only while its
    /// remaining work is at least `q`.
    pub fn jobs_at_least(&self, server: usize, q: T) -> usize {
        let n = self.counts[server];
        if n == 0 {
            return 0;
        }
        let head_counts = match self.head_remaining[server] {
            Some(rem) => q <= rem,
            None => false,
        };
        n - 1 + usize::from(head_counts)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn simulate<T: Real>(
    trace: &Trace<T>,
    policy: &dyn SpeedPolicy<T>,
    opts: &SimOptions<T>,
) -> Result<Trajectory<T>, EngineError> {
    let servers = trace.servers();
    let jobs = trace.job_count();
    let arrivals = trace.arrivals();
    let mut state = SystemState::new(servers, jobs);
    let mut traj = Trajectory {
        servers,
        arrivals: arrivals.to_vec(),
        finishes: vec![None; jobs],
        events: Vec::new(),
        segments: Vec::new(),
        flow_integral: T::zero(),
        energy_integral: T::zero(),
    };
    let mut next_arrival = 0usize;
    let mut steps: u64 = 0;
    let last = servers - 1;

    loop {
        let busy = state.queues.iter().any(|q| !q.is_empty());
        if !busy && next_arrival >= jobs {
            break;
        }
        steps += 1;
        if steps > opts.max_events {
            return Err(EngineError::EventLimit(opts.max_events));
        }

        let (speeds, valid_for) = if busy {
            let assignment = policy.assign(&state)?;
            if assignment.speeds.len() != servers {
                return Err(EngineError::WrongArity {
                    got: assignment.speeds.len(),
                    expected: servers,
                });
            }
            for (k, &s) in assignment.speeds.iter().enumerate() {
                if !s.is_finite() || s < T::zero() {
                    return Err(EngineError::BadSpeed {
                        server: k,
                        speed: s.to_f64().unwrap_or(f64::NAN),
                    });
                }
                if s > T::zero() && state.queues[k].is_empty() {
                    return Err(EngineError::SpeedOnEmptyServer {
                        server: k,
                        speed: s.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
            (assignment.speeds, assignment.valid_for)
        } else {
            (vec![T::zero(); servers], None)
        };

        // Next event: arrival, any head completion, or policy horizon.
        let mut dt_min: Option<T> = None;
        let mut consider = |d: T| {
            let d = d.max(T::zero());
            dt_min = Some(match dt_min {
                Some(cur) if cur <= d => cur,
                _ => d,
            });
        };
        if next_arrival < jobs {
            consider(arrivals[next_arrival] - state.clock);
        }
        for (k, &s) in speeds.iter().enumerate() {
            if s > T::zero() && !state.queues[k].is_empty() {
                consider(state.head_remaining[k] / s);
            }
        }
        if busy {
            if let Some(v) = valid_for {
                consider(v);
            }
        }
        let dt = match dt_min {
            Some(d) => d,
            None => {
                return Err(EngineError::Stalled(
                    state.clock.to_f64().unwrap_or(f64::NAN),
                ))
            }
        };

        // Completion set fixed against the pre-advance state.
        let completing: Vec<usize> = (0..servers)
            .rev()
            .filter(|&k| {
                speeds[k] > T::zero()
                    && !state.queues[k].is_empty()
                    && state.head_remaining[k] / speeds[k] <= dt + opts.merge_tol
            })
            .collect();

        if dt > T::zero() {
            traj.segments.push(Segment {
                start: state.clock,
                end: state.clock + dt,
                speeds: speeds.clone(),
                queue_lens: state.counts(),
                head_remaining: (0..servers)
                    .map(|k| state.head(k).map(|h| h.remaining))
                    .collect(),
            });
            let outstanding: usize = state.queues.iter().map(|q| q.len()).sum();
            traj.flow_integral += count::<T>(outstanding) * dt;
            for (k, &s) in speeds.iter().enumerate() {
                if s > T::zero() {
                    traj.energy_integral += policy.power(s) * dt;
                    state.head_remaining[k] -= s * dt;
                    state.head_elapsed[k] += dt;
                } else if !state.queues[k].is_empty() {
                    state.head_elapsed[k] += dt;
                }
            }
            if speeds[0] > T::zero() {
                if let Some(&job) = state.queues[0].front() {
                    match state.profiles[job].last_mut() {
                        Some(piece) if piece.1 == speeds[0] => piece.0 += dt,
                        _ => state.profiles[job].push((dt, speeds[0])),
                    }
                }
            }
            state.clock += dt;
        }

        let mut progressed = false;
        for &srv in &completing {
            let job = state.queues[srv]
                .pop_front()
                .expect("completing head exists");
            let residual = state.head_remaining[srv];
            if residual.abs() > fp(1e-9) {
                return Err(EngineError::WorkConservation {
                    job,
                    server: srv,
                    residual: residual.to_f64().unwrap_or(f64::NAN),
                });
            }
            state.set_fresh_head(srv);
            if srv == last {
                traj.finishes[job] = Some(state.clock);
                traj.events.push(EventRecord {
                    time: state.clock,
                    kind: EventKind::Departure,
                    job: Some(job),
                    server: Some(srv),
                });
            } else {
                state.queues[srv + 1].push_back(job);
                if state.queues[srv + 1].len() == 1 {
                    state.set_fresh_head(srv + 1);
                }
                traj.events.push(EventRecord {
                    time: state.clock,
                    kind: EventKind::Transfer,
                    job: Some(job),
                    server: Some(srv),
                });
            }
            progressed = true;
        }

        while next_arrival < jobs && arrivals[next_arrival] <= state.clock + opts.merge_tol {
            let job = next_arrival;
            state.queues[0].push_back(job);
            if state.queues[0].len() == 1 {
                state.set_fresh_head(0);
            }
            traj.events.push(EventRecord {
                time: state.clock,
                kind: EventKind::Arrival,
                job: Some(job),
                server: Some(0),
            });
            next_arrival += 1;
            progressed = true;
        }

        if !progressed {
            if dt <= opts.merge_tol {
                return Err(EngineError::Stalled(
                    state.clock.to_f64().unwrap_or(f64::NAN),
                ));
            }
            traj.events.push(EventRecord {
                time: state.clock,
                kind: EventKind::SpeedChange,
                job: None,
                server: None,
            });
        }
    }

    Ok(traj)
}

/// Flow time, energy, and their sum for a completed run. The per-job flow
/// sum is cross-checked against the accumulated `integral of n(t) dt`.
pub fn cost<T: Real>(traj: &Trajectory<T>) -> Result<CostReport<T>, EngineError> {
    let mut flow = T::zero();
    for (job, finish) in traj.finishes.iter().enumerate() {
        match finish {
            Some(f) => flow += *f - traj.arrivals[job],
            None => return Err(EngineError::Incomplete(job)),
        }
    }
    let drift = (flow - traj.flow_integral).abs();
    if drift > fp::<T>(1e-9) * flow.abs().max(T::one()) {
        return Err(EngineError::InconsistentFlow {
            integral: traj.flow_integral.to_f64().unwrap_or(f64::NAN),
            summed: flow.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(CostReport {
        flow_time: flow,
        energy: traj.energy_integral,
        total: flow + traj.energy_integral,
    })
}

impl<T: Real> Trajectory<T> {
    /// Time of the last recorded event (0 for an empty run).
    pub fn end_time(&self) -> T {
        self.events.last().map(|e| e.time).unwrap_or_else(T::zero)
    }

    /// Distinct event times in increasing order, merging times closer
    /// than `tol`.
    pub fn event_times(&self, tol: T) -> Vec<T> {
        let mut times: Vec<T> = self.events.iter().map(|e| e.time).collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite event times"));
        times.dedup_by(|a, b| (*a - *b).abs() <= tol);
        times
    }

    fn segment_index(&self, t: T, side: Side) -> Option<usize> {
        let idx = self.segments.partition_point(|seg| seg.start < t);
        match side {
            // Want start < t <= end: candidate is the segment before idx.
            Side::Before => idx.checked_sub(1).filter(|&i| t <= self.segments[i].end),
            // Want start <= t < end: candidate is idx (start == t) or idx-1.
            Side::After => {
                if idx < self.segments.len() && self.segments[idx].start == t {
                    Some(idx)
                } else {
                    idx.checked_sub(1).filter(|&i| t < self.segments[i].end)
                }
            }
        }
    }

    /// Queue contents at time `t`, taking the one-sided limit given by
    /// `side` at event boundaries. Outside the simulated span the system
    /// is empty.
    pub fn point_state(&self, t: T, side: Side) -> PointState<T> {
        let Some(idx) = self.segment_index(t, side) else {
            return PointState::empty(self.servers);
        };
        let seg = &self.segments[idx];
        let elapsed = t - seg.start;
        let head_remaining = (0..self.servers)
            .map(|k| {
                seg.head_remaining[k].map(|rem| (rem - seg.speeds[k] * elapsed).max(T::zero()))
            })
            .collect();
        PointState {
            counts: seg.queue_lens.clone(),
            head_remaining,
        }
    }

    /// Per-server speeds at time `t`, intended for times strictly inside
    /// an inter-event interval.
    pub fn speeds_at(&self, t: T) -> Vec<T> {
        match self.segment_index(t, Side::After) {
            Some(idx) => self.segments[idx].speeds.clone(),
            None => vec![T::zero(); self.servers],
        }
    }
}
