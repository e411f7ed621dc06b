//! Offline lower bounds: the closed-form per-job bound `n * K * P'(s*)` and
//! the enhanced-OPT relaxation, in which every arriving job is copied onto
//! all K servers and served in parallel. The latter reduces to scheduling a
//! single virtual server: FIFO order and one constant speed per job are
//! optimal for unit jobs (exchange argument plus strict convexity of energy
//! in the service duration), leaving `n` finish times to optimize — a convex
//! program solved by cyclic coordinate descent with golden-section steps.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{PointState, Side};
use crate::power::PowerCurve;
use crate::scalar::{count, fp, Real};
use crate::workload::Trace;

#[derive(Debug, Error)]
pub enum OfflineError {
    #[error("ratios undefined: zero lower bound on a nonempty trace")]
    ZeroDenominator,
}

/// Closed-form lower bound on the offline cost: each of the `n` unit jobs
/// must be processed by all `servers` servers, and one unit of work on one
/// server costs at least `per_job_optimal_cost`.
pub fn closed_form_lb<T: Real, P: PowerCurve<T>>(n: usize, servers: usize, pf: &P) -> T {
    count::<T>(n) * count::<T>(servers) * pf.per_job_optimal_cost()
}

/// Enhanced-OPT schedule on the single virtual server: per-job service
/// start, finish, and constant speed, plus the total flow-plus-energy cost
/// with the energy counted on all K copies.
#[derive(Debug, Clone, Serialize)]
pub struct OptSchedule<T: Real> {
    pub servers: usize,
    pub arrivals: Vec<T>,
    pub starts: Vec<T>,
    pub finishes: Vec<T>,
    pub speeds: Vec<T>,
    pub cost: T,
}

const GOLDEN_REL_TOL: f64 = 1e-9;
const SWEEP_REL_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 20_000;

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
fn golden_min<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, rel_tol: T) -> (T, T) {
    let ratio = fp::<T>((5f64.sqrt() - 1.0) / 2.0);
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > rel_tol * (T::one() + hi.abs()) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    let mid = (lo + hi) * fp(0.5);
    (mid, f(mid))
}

/// Energy of serving one unit job over a window of length `tau` on all
/// `servers` copies.
fn window_energy<T: Real, P: PowerCurve<T>>(pf: &P, servers: usize, tau: T) -> T {
    count::<T>(servers) * tau * pf.eval(tau.recip()).expect("positive service speed")
}

fn schedule_cost<T: Real, P: PowerCurve<T>>(
    arrivals: &[T],
    finishes: &[T],
    servers: usize,
    pf: &P,
) -> T {
    let mut total = T::zero();
    let mut prev_finish = T::zero();
    for (j, (&a, &f)) in arrivals.iter().zip(finishes).enumerate() {
        let start = if j == 0 { a } else { a.max(prev_finish) };
        total += f - a + window_energy(pf, servers, f - start);
        prev_finish = f;
    }
    total
}

pub fn enhanced_opt<T: Real, P: PowerCurve<T>>(trace: &Trace<T>, pf: &P) -> OptSchedule<T> {
    let servers = trace.servers();
    let arrivals = trace.arrivals();
    let n = trace.job_count();
    if n == 0 {
        return OptSchedule {
            servers,
            arrivals: Vec::new(),
            starts: Vec::new(),
            finishes: Vec::new(),
            speeds: Vec::new(),
            cost: T::zero(),
        };
    }

    // Initial guess: the duration that is optimal for a job served in
    // isolation, found by expanding a bracket around the unimodal
    // per-window objective tau + K tau P(1/tau).
    let isolated = |tau: T| tau + window_energy(pf, servers, tau);
    let mut hi = T::one();
    while isolated(hi + hi) < isolated(hi) {
        hi = hi + hi;
    }
    let (tau_star, _) = golden_min(isolated, fp(1e-9), hi + hi, fp(GOLDEN_REL_TOL));

    let mut finishes: Vec<T> = Vec::with_capacity(n);
    let mut prev = T::zero();
    for (j, &a) in arrivals.iter().enumerate() {
        let start = if j == 0 { a } else { a.max(prev) };
        prev = start + tau_star;
        finishes.push(prev);
    }

    // Cyclic coordinate descent over finish times. Moving f_j changes its
    // own service window and, through the start time, the window of job
    // j + 1; both energy terms are convex in f_j, so each coordinate slice
    // is unimodal.
    let mut current = schedule_cost(arrivals, &finishes, servers, pf);
    for _ in 0..MAX_SWEEPS {
        for j in 0..n {
            let lower = if j == 0 {
                arrivals[0]
            } else {
                arrivals[j].max(finishes[j - 1])
            };
            let local = |f_j: T| {
                let mut value = f_j - arrivals[j] + window_energy(pf, servers, f_j - lower);
                if j + 1 < n {
                    let next_start = arrivals[j + 1].max(f_j);
                    value += window_energy(pf, servers, finishes[j + 1] - next_start);
                }
                value
            };
            let span_guard = fp::<T>(1e-12) * (T::one() + lower.abs());
            let upper = if j + 1 < n {
                finishes[j + 1] - span_guard
            } else {
                // Expand until the isolated tail objective turns upward.
                let mut probe = lower + tau_star;
                while local(probe + (probe - lower)) < local(probe) {
                    probe = probe + (probe - lower);
                }
                probe + (probe - lower)
            };
            if upper <= lower + span_guard {
                continue;
            }
            let (best_f, best_v) = golden_min(local, lower + span_guard, upper, fp(GOLDEN_REL_TOL));
            if best_v < local(finishes[j]) {
                finishes[j] = best_f;
            }
        }
        let improved = schedule_cost(arrivals, &finishes, servers, pf);
        if current - improved < fp::<T>(SWEEP_REL_TOL) * current.abs().max(T::one()) {
            current = improved;
            break;
        }
        current = improved;
    }

    let mut starts = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n);
    let mut prev = T::zero();
    for (j, &a) in arrivals.iter().enumerate() {
        let start = if j == 0 { a } else { a.max(prev) };
        starts.push(start);
        speeds.push((finishes[j] - start).recip());
        prev = finishes[j];
    }
    OptSchedule {
        servers,
        arrivals: arrivals.to_vec(),
        starts,
        finishes,
        speeds,
        cost: current,
    }
}

impl<T: Real> OptSchedule<T> {
    pub fn job_count(&self) -> usize {
        self.arrivals.len()
    }

    pub fn end_time(&self) -> T {
        self.finishes.last().copied().unwrap_or_else(T::zero)
    }

    /// Times at which the schedule's queue content changes shape: arrivals,
    /// service starts, finishes.
    pub fn event_times(&self, tol: T) -> Vec<T> {
        let mut times: Vec<T> = self
            .arrivals
            .iter()
            .chain(&self.starts)
            .chain(&self.finishes)
            .copied()
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        times.dedup_by(|a, b| (*a - *b).abs() <= tol);
        times
    }

    /// Virtual-server queue content at time `t` as a single-server point
    /// state (count of outstanding jobs, head job's remaining work).
    pub fn point_state(&self, t: T, side: Side) -> PointState<T> {
        let mut outstanding = 0usize;
        let mut head: Option<T> = None;
        for j in 0..self.job_count() {
            let arrived = match side {
                Side::Before => self.arrivals[j] < t,
                Side::After => self.arrivals[j] <= t,
            };
            let gone = match side {
                Side::Before => self.finishes[j] < t,
                Side::After => self.finishes[j] <= t,
            };
            if !arrived || gone {
                continue;
            }
            outstanding += 1;
            let serving = match side {
                Side::Before => self.starts[j] < t && t <= self.finishes[j],
                Side::After => self.starts[j] <= t && t < self.finishes[j],
            };
            if serving {
                let rem = T::one() - self.speeds[j] * (t - self.starts[j]);
                head = Some(rem.max(T::zero()).min(T::one()));
            }
        }
        // Jobs that have arrived but not started service sit at remaining
        // work 1; if nothing is in service the oldest of them is the head.
        if head.is_none() && outstanding > 0 {
            head = Some(T::one());
        }
        PointState {
            counts: vec![outstanding],
            head_remaining: vec![head],
        }
    }

    /// Service speed of the virtual server at time `t` (0 when idle).
    pub fn speed_at(&self, t: T, side: Side) -> T {
        for j in 0..self.job_count() {
            let serving = match side {
                Side::Before => self.starts[j] < t && t <= self.finishes[j],
                Side::After => self.starts[j] <= t && t < self.finishes[j],
            };
            if serving {
                return self.speeds[j];
            }
        }
        T::zero()
    }
}

/// Instance-level cost ratios of an algorithm run against the two offline
/// lower bounds. Both denominators bound the true offline optimum from
/// below, so each ratio upper-bounds the instance's true competitive ratio.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostRatios<T> {
    pub vs_opt_e: Option<T>,
    pub vs_closed_form: Option<T>,
    /// Margin left in `alg <= 6 opt_e + 12 Delta(1) n K` (nonnegative when
    /// the bound holds).
    pub finalbound_slack: T,
}

pub fn empirical_ratios<T: Real, P: PowerCurve<T>>(
    trace: &Trace<T>,
    pf: &P,
    alg_cost: T,
) -> Result<CostRatios<T>, OfflineError> {
    let opt = enhanced_opt(trace, pf);
    ratios_against(trace, pf, alg_cost, &opt)
}

/// Same as [`empirical_ratios`] but reusing an already-computed schedule.
pub fn ratios_against<T: Real, P: PowerCurve<T>>(
    trace: &Trace<T>,
    pf: &P,
    alg_cost: T,
    opt: &OptSchedule<T>,
) -> Result<CostRatios<T>, OfflineError> {
    let n = trace.job_count();
    let closed = closed_form_lb(n, trace.servers(), pf);
    let delta_one = pf.marginal_power(T::one()).expect("unit load in domain");
    let allowance = fp::<T>(12.0) * delta_one * count::<T>(n) * count::<T>(trace.servers());
    let slack = fp::<T>(6.0) * opt.cost + allowance - alg_cost;
    if n == 0 {
        return Ok(CostRatios {
            vs_opt_e: None,
            vs_closed_form: None,
            finalbound_slack: slack,
        });
    }
    if opt.cost <= T::zero() || closed <= T::zero() {
        return Err(OfflineError::ZeroDenominator);
    }
    Ok(CostRatios {
        vs_opt_e: Some(alg_cost / opt.cost),
        vs_closed_form: Some(alg_cost / closed),
        finalbound_slack: slack,
    })
}
