//! The drift potential for a (policy run, enhanced-OPT schedule) pair, and
//! the three audits built on it: the running inequality between events, the
//! budget on upward jumps at events, and the integrated cost bound.
//!
//! The potential has two kinds of terms. The server-1 term charges the
//! excess of the algorithm's server-1 backlog over the offline schedule's,
//! spread over all K servers in steps of 1/K; each downstream term charges
//! the jobs stacked between server 2 and that server, normalized by the
//! number of active servers plus one. Both integrate cumulative
//! marginal-power weights over the remaining-work coordinate, where the
//! integrand is piecewise constant with breakpoints at the head jobs'
//! remaining work. Everything here evaluates those integrals exactly.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{cost, EngineError, EventKind, PointState, Side, Trajectory};
use crate::offline::OptSchedule;
use crate::power::{PowerCurve, PowerError};
use crate::scalar::{count, fp, Real};

/// Default charge multiplier in the audits; the integrated bound is stated
/// with this value.
pub const DEFAULT_CHARGE: f64 = 6.0;

const EVENT_MERGE_TOL: f64 = 1e-12;
const MIN_INTERVAL: f64 = 1e-9;
const FD_STEP_FRACTION: f64 = 1e-3;
const DRIFT_SLACK: f64 = 1e-6;
const JUMP_TOL: f64 = 1e-9;
const BOUND_REL_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("trajectory and offline schedule cover different traces")]
    TraceMismatch,
    #[error("trajectory does not end empty: job {0} never departed")]
    NotEmpty(usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// All potential terms at one instant.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialSnapshot<T> {
    pub time: T,
    /// Server-1 term (appears once per server in the total).
    pub server1: T,
    /// Downstream terms for servers 2..K in order.
    pub downstream: Vec<T>,
    pub total: T,
    /// Number of active downstream servers.
    pub active: usize,
    /// Active downstream servers in increasing index order; a server's rank
    /// is its position here plus one.
    pub active_servers: Vec<usize>,
}

/// Integrate a piecewise-constant function of the remaining-work coordinate
/// over (0, 1], given the interior breakpoints where it may change value.
fn piecewise_integral<T: Real>(breaks: &[Option<T>], value_at: impl Fn(T) -> T) -> T {
    let mut cuts: Vec<T> = vec![T::zero(), T::one()];
    for b in breaks.iter().flatten() {
        if *b > T::zero() && *b < T::one() {
            cuts.push(*b);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    let mut acc = T::zero();
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi > lo {
            acc += (hi - lo) * value_at((lo + hi) * fp(0.5));
        }
    }
    acc
}

/// Prefix table of cumulative weights: entry `i` is the sum of the first
/// `i` marginal powers at levels `j / scale`. One table serves every piece
/// of an integrand, avoiding repeated power evaluations.
fn weight_prefix<T: Real, P: PowerCurve<T>>(pf: &P, max_steps: usize, scale: usize) -> Vec<T> {
    let mut prefix = Vec::with_capacity(max_steps + 1);
    prefix.push(T::zero());
    let denom = count::<T>(scale);
    let mut acc = T::zero();
    for j in 1..=max_steps {
        acc += pf
            .marginal_power(count::<T>(j) / denom)
            .expect("nonnegative weight level");
        prefix.push(acc);
    }
    prefix
}

/// Server-1 term: charge times the integral over remaining work of the
/// cumulative weight of the algorithm's backlog excess over the offline
/// schedule, in steps of 1/K.
pub fn server1_potential<T: Real, P: PowerCurve<T>>(
    alg: &PointState<T>,
    opt: &PointState<T>,
    pf: &P,
    charge: T,
) -> T {
    let servers = alg.counts.len();
    let prefix = weight_prefix(pf, alg.counts[0], servers);
    let integral = piecewise_integral(&[alg.head_remaining[0], opt.head_remaining[0]], |q| {
        let excess = alg
            .jobs_at_least(0, q)
            .saturating_sub(opt.jobs_at_least(0, q));
        prefix[excess]
    });
    charge * integral
}

/// Downstream term for `server` (0-based, at least 1): charge times the
/// integral of the cumulative weight of the jobs stacked on servers
/// 2..=server, normalized by the number of active servers plus one.
pub fn downstream_potential<T: Real, P: PowerCurve<T>>(
    alg: &PointState<T>,
    server: usize,
    pf: &P,
    charge: T,
) -> T {
    debug_assert!(server >= 1);
    let active = alg.counts[1..].iter().filter(|&&c| c > 0).count();
    let upstream: usize = alg.counts[1..server].iter().sum();
    let prefix = weight_prefix(pf, upstream + alg.counts[server], active + 1);
    let integral = piecewise_integral(&[alg.head_remaining[server]], |q| {
        prefix[upstream + alg.jobs_at_least(server, q)]
    });
    charge * integral
}

/// Evaluate every term of the potential for the given pair of point states.
pub fn snapshot_of<T: Real, P: PowerCurve<T>>(
    time: T,
    alg: &PointState<T>,
    opt: &PointState<T>,
    pf: &P,
    charge: T,
) -> PotentialSnapshot<T> {
    let servers = alg.counts.len();
    let server1 = server1_potential(alg, opt, pf, charge);
    let downstream: Vec<T> = (1..servers)
        .map(|k| downstream_potential(alg, k, pf, charge))
        .collect();
    let active_servers: Vec<usize> = (1..servers).filter(|&k| alg.counts[k] > 0).collect();
    let total = count::<T>(servers) * server1 + downstream.iter().copied().sum::<T>();
    PotentialSnapshot {
        time,
        server1,
        downstream,
        total,
        active: active_servers.len(),
        active_servers,
    }
}

/// Potential at time `t` on the requested side of any event there.
pub fn snapshot_at<T: Real, P: PowerCurve<T>>(
    traj: &Trajectory<T>,
    opt: &OptSchedule<T>,
    pf: &P,
    charge: T,
    t: T,
    side: Side,
) -> PotentialSnapshot<T> {
    let alg = traj.point_state(t, side);
    let opt_state = opt.point_state(t, side);
    snapshot_of(t, &alg, &opt_state, pf, charge)
}

fn check_pair<T: Real>(traj: &Trajectory<T>, opt: &OptSchedule<T>) -> Result<(), AuditError> {
    if traj.arrivals != opt.arrivals {
        return Err(AuditError::TraceMismatch);
    }
    if let Some(job) = traj.finishes.iter().position(|f| f.is_none()) {
        return Err(AuditError::NotEmpty(job));
    }
    Ok(())
}

fn merged_event_times<T: Real>(traj: &Trajectory<T>, opt: &OptSchedule<T>) -> Vec<T> {
    let tol = fp::<T>(EVENT_MERGE_TOL);
    let mut times = traj.event_times(tol);
    times.extend(opt.event_times(tol));
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup_by(|a, b| (*a - *b).abs() <= tol);
    times
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DriftViolation<T> {
    pub time: T,
    pub lhs: T,
    pub rhs: T,
}

/// Result of checking the running inequality
/// `n + sum P(s_k) + dPhi/dt <= charge * (n_o + K P(s_o))`
/// at the midpoint of every maximal event-free interval.
#[derive(Debug, Clone, Serialize)]
pub struct DriftReport<T> {
    pub charge: T,
    pub sampled: usize,
    pub violations: Vec<DriftViolation<T>>,
    /// Largest `lhs - rhs` seen (negative when comfortably passing).
    pub worst_margin: T,
    pub pass: bool,
}

pub fn audit_drift<T: Real, P: PowerCurve<T>>(
    traj: &Trajectory<T>,
    opt: &OptSchedule<T>,
    pf: &P,
    charge: T,
) -> Result<DriftReport<T>, AuditError> {
    check_pair(traj, opt)?;
    let servers = count::<T>(traj.servers);
    let times = merged_event_times(traj, opt);
    let mut report = DriftReport {
        charge,
        sampled: 0,
        violations: Vec::new(),
        worst_margin: T::neg_infinity(),
        pass: true,
    };
    for pair in times.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        let len = t1 - t0;
        if len <= fp(MIN_INTERVAL) {
            continue;
        }
        let mid = (t0 + t1) * fp(0.5);
        let h = len * fp(FD_STEP_FRACTION);

        let alg = traj.point_state(mid, Side::After);
        let outstanding = count::<T>(alg.total());
        let power: T = traj
            .speeds_at(mid)
            .iter()
            .map(|&s| {
                if s == T::zero() {
                    T::zero()
                } else {
                    pf.eval(s).expect("trajectory speed in curve domain")
                }
            })
            .sum();
        let phi_plus = snapshot_at(traj, opt, pf, charge, mid + h, Side::After).total;
        let phi_minus = snapshot_at(traj, opt, pf, charge, mid - h, Side::After).total;
        let dphi = (phi_plus - phi_minus) / (h + h);

        let opt_state = opt.point_state(mid, Side::After);
        let opt_speed = opt.speed_at(mid, Side::After);
        let opt_power = if opt_speed == T::zero() {
            T::zero()
        } else {
            pf.eval(opt_speed).expect("schedule speed in curve domain")
        };
        let rhs = charge * (count::<T>(opt_state.total()) + servers * opt_power);
        let lhs = outstanding + power + dphi;

        report.sampled += 1;
        report.worst_margin = report.worst_margin.max(lhs - rhs);
        if lhs > rhs + fp::<T>(DRIFT_SLACK) * (T::one() + rhs.abs()) {
            report.violations.push(DriftViolation {
                time: mid,
                lhs,
                rhs,
            });
        }
    }
    if report.sampled == 0 {
        report.worst_margin = T::zero();
    }
    report.pass = report.violations.is_empty();
    Ok(report)
}

/// Result of measuring the potential's discontinuities at every event.
#[derive(Debug, Clone, Serialize)]
pub struct JumpReport<T> {
    pub charge: T,
    pub events: usize,
    /// Sum of positive jumps.
    pub total_increase: T,
    /// Bound on the sum: `2 * charge * n * K * Delta(1)`.
    pub budget: T,
    pub max_single: T,
    /// Bound on any one event's jump: `charge * K * Delta(1)`.
    pub single_budget: T,
    pub arrival_events: usize,
    /// Times of arrival-only events whose jump was not zero.
    pub arrival_jump_violations: Vec<T>,
    /// Potential before the first and after the last event (both must be 0).
    pub boundary_start: T,
    pub boundary_end: T,
    pub pass: bool,
}

pub fn audit_jumps<T: Real, P: PowerCurve<T>>(
    traj: &Trajectory<T>,
    opt: &OptSchedule<T>,
    pf: &P,
    charge: T,
) -> Result<JumpReport<T>, AuditError> {
    check_pair(traj, opt)?;
    let tol = fp::<T>(EVENT_MERGE_TOL);
    let jump_tol = fp::<T>(JUMP_TOL);
    let n = count::<T>(traj.arrivals.len());
    let k = count::<T>(traj.servers);
    let delta_one = pf.marginal_power(T::one())?;
    let times = merged_event_times(traj, opt);

    let mut report = JumpReport {
        charge,
        events: times.len(),
        total_increase: T::zero(),
        budget: fp::<T>(2.0) * charge * n * k * delta_one,
        max_single: T::zero(),
        single_budget: charge * k * delta_one,
        arrival_events: 0,
        arrival_jump_violations: Vec::new(),
        boundary_start: T::zero(),
        boundary_end: T::zero(),
        pass: true,
    };

    for &t in &times {
        let before = snapshot_at(traj, opt, pf, charge, t, Side::Before).total;
        let after = snapshot_at(traj, opt, pf, charge, t, Side::After).total;
        let jump = after - before;
        if jump > T::zero() {
            report.total_increase += jump;
            report.max_single = report.max_single.max(jump);
        }
        let kinds: Vec<EventKind> = traj
            .events
            .iter()
            .filter(|e| (e.time - t).abs() <= tol)
            .map(|e| e.kind)
            .collect();
        let arrival_only = !kinds.is_empty() && kinds.iter().all(|&k| k == EventKind::Arrival);
        if arrival_only {
            report.arrival_events += 1;
            if jump.abs() > jump_tol {
                report.arrival_jump_violations.push(t);
            }
        }
    }

    if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
        report.boundary_start = snapshot_at(traj, opt, pf, charge, first, Side::Before).total;
        report.boundary_end = snapshot_at(traj, opt, pf, charge, last, Side::After).total;
    }

    report.pass = report.total_increase <= report.budget + jump_tol
        && report.max_single <= report.single_budget + jump_tol
        && report.arrival_jump_violations.is_empty()
        && report.boundary_start.abs() <= jump_tol
        && report.boundary_end.abs() <= jump_tol;
    Ok(report)
}

/// Result of checking the end-to-end cost bound
/// `alg_cost <= 6 opt_cost + 12 Delta(1) n K`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntegratedReport<T> {
    pub alg_cost: T,
    pub opt_cost: T,
    pub jump_allowance: T,
    pub bound: T,
    /// `bound - alg_cost`; nonnegative when the bound holds.
    pub slack: T,
    pub pass: bool,
}

pub fn audit_integrated<T: Real, P: PowerCurve<T>>(
    traj: &Trajectory<T>,
    opt: &OptSchedule<T>,
    pf: &P,
) -> Result<IntegratedReport<T>, AuditError> {
    check_pair(traj, opt)?;
    let report = cost(traj)?;
    let n = count::<T>(traj.arrivals.len());
    let k = count::<T>(traj.servers);
    let allowance = fp::<T>(12.0) * pf.marginal_power(T::one())? * n * k;
    let bound = fp::<T>(DEFAULT_CHARGE) * opt.cost + allowance;
    let slack = bound - report.total;
    Ok(IntegratedReport {
        alg_cost: report.total,
        opt_cost: opt.cost,
        jump_allowance: allowance,
        bound,
        slack,
        pass: report.total <= bound + fp::<T>(BOUND_REL_SLACK) * (T::one() + bound.abs()),
    })
}

/// The full audit pipeline: drift, jumps, and the integrated bound.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport<T> {
    pub drift: DriftReport<T>,
    pub jumps: JumpReport<T>,
    pub integrated: IntegratedReport<T>,
    pub pass: bool,
}

pub fn audit_all<T: Real, P: PowerCurve<T>>(
    traj: &Trajectory<T>,
    opt: &OptSchedule<T>,
    pf: &P,
    charge: T,
) -> Result<AuditReport<T>, AuditError> {
    let drift = audit_drift(traj, opt, pf, charge)?;
    let jumps = audit_jumps(traj, opt, pf, charge)?;
    let integrated = audit_integrated(traj, opt, pf)?;
    let pass = drift.pass && jumps.pass && integrated.pass;
    Ok(AuditReport {
        drift,
        jumps,
        integrated,
        pass,
    })
}
