//! Speed policies for the tandem engine: the coupled rule that keeps total
//! power one above the number of outstanding jobs, plus the two single-server
//! extensions it is compared against (autonomous per-queue speeds and
//! server-1 profile replication).

use thiserror::Error;

use crate::engine::SystemState;
use crate::power::{PowerCurve, PowerError};
use crate::scalar::{count, fp, Real};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("job {job} reached server {server} without a recorded speed profile")]
    MissingProfile { job: usize, server: usize },
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// Per-server speeds plus an optional expiry: the assignment is valid for at
/// most `valid_for` time even if no queue event occurs (used by profile
/// replay, whose speeds change mid-interval).
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedAssignment<T> {
    pub speeds: Vec<T>,
    pub valid_for: Option<T>,
}

pub trait SpeedPolicy<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    fn assign(&self, state: &SystemState<T>) -> Result<SpeedAssignment<T>, PolicyError>;

    /// Power drawn at the given speed; idle servers (speed 0) draw nothing.
    fn power(&self, speed: T) -> T;
}

/// Coupled speed rule. With `n1` jobs on server 1 and `a` active downstream
/// servers, server 1 and every active server run at the speed whose power is
/// `(n1 + a + 1) / (a + 1)`; when server 1 is empty, active servers run at
/// the speed of power 2. Total power is thus `n1 + a + 1` (or `2a`).
pub fn proposed_speeds<T: Real, P: PowerCurve<T>>(
    counts: &[usize],
    pf: &P,
) -> Result<Vec<T>, PowerError> {
    let n1 = counts[0];
    let active = counts[1..].iter().filter(|&&c| c > 0).count();
    let mut speeds = vec![T::zero(); counts.len()];
    if n1 > 0 {
        let per_server =
            (count::<T>(n1) + count::<T>(active) + T::one()) / (count::<T>(active) + T::one());
        let s = pf.inverse(per_server)?;
        speeds[0] = s;
        for (k, &c) in counts.iter().enumerate().skip(1) {
            if c > 0 {
                speeds[k] = s;
            }
        }
    } else {
        let s = pf.inverse(fp(2.0))?;
        for (k, &c) in counts.iter().enumerate().skip(1) {
            if c > 0 {
                speeds[k] = s;
            }
        }
    }
    Ok(speeds)
}

/// Each busy server independently runs at the speed whose power draw is one
/// more than its own queue length; empty servers idle.
pub fn autonomous_speeds<T: Real, P: PowerCurve<T>>(
    counts: &[usize],
    pf: &P,
) -> Result<Vec<T>, PowerError> {
    counts
        .iter()
        .map(|&c| {
            if c > 0 {
                pf.inverse(count::<T>(c) + T::one())
            } else {
                Ok(T::zero())
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ProposedPolicy<T: Real, P: PowerCurve<T>> {
    pf: P,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real, P: PowerCurve<T>> ProposedPolicy<T, P> {
    pub fn new(pf: P) -> Self {
        Self {
            pf,
            _scalar: std::marker::PhantomData,
        }
    }
}

impl<T: Real, P: PowerCurve<T>> SpeedPolicy<T> for ProposedPolicy<T, P> {
    fn name(&self) -> &'static str {
        "proposed"
    }

    fn assign(&self, state: &SystemState<T>) -> Result<SpeedAssignment<T>, PolicyError> {
        Ok(SpeedAssignment {
            speeds: proposed_speeds(&state.counts(), &self.pf)?,
            valid_for: None,
        })
    }

    fn power(&self, speed: T) -> T {
        if speed == T::zero() {
            T::zero()
        } else {
            self.pf
                .eval(speed)
                .expect("policy speed within curve domain")
        }
    }
}

#[derive(Debug, Clone)]
pub struct AutonomousPolicy<T: Real, P: PowerCurve<T>> {
    pf: P,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real, P: PowerCurve<T>> AutonomousPolicy<T, P> {
    pub fn new(pf: P) -> Self {
        Self {
            pf,
            _scalar: std::marker::PhantomData,
        }
    }
}

impl<T: Real, P: PowerCurve<T>> SpeedPolicy<T> for AutonomousPolicy<T, P> {
    fn name(&self) -> &'static str {
        "autonomous"
    }

    fn assign(&self, state: &SystemState<T>) -> Result<SpeedAssignment<T>, PolicyError> {
        Ok(SpeedAssignment {
            speeds: autonomous_speeds(&state.counts(), &self.pf)?,
            valid_for: None,
        })
    }

    fn power(&self, speed: T) -> T {
        if speed == T::zero() {
            T::zero()
        } else {
            self.pf
                .eval(speed)
                .expect("policy speed within curve domain")
        }
    }
}

/// Server 1 runs its head at the speed of power `n1 + 1` while the engine
/// records each job's server-1 speed segments; every downstream server
/// replays its head job's recorded profile from the moment the job reaches
/// head of line there.
#[derive(Debug, Clone)]
pub struct ReplicationPolicy<T: Real, P: PowerCurve<T>> {
    pf: P,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real, P: PowerCurve<T>> ReplicationPolicy<T, P> {
    pub fn new(pf: P) -> Self {
        Self {
            pf,
            _scalar: std::marker::PhantomData,
        }
    }
}

/// Speed the profile prescribes after `elapsed` time of replay, plus how
/// long that piece still lasts. Near-exhausted pieces (within `tol`) are
/// skipped; past the recorded end the final speed is held.
fn profile_at<T: Real>(profile: &[(T, T)], elapsed: T, tol: T) -> (T, Option<T>) {
    let mut cursor = T::zero();
    for &(duration, speed) in profile {
        let end = cursor + duration;
        if elapsed < end - tol {
            return (speed, Some(end - elapsed));
        }
        cursor = end;
    }
    let last = profile.last().expect("profile nonempty").1;
    (last, None)
}

impl<T: Real, P: PowerCurve<T>> SpeedPolicy<T> for ReplicationPolicy<T, P> {
    fn name(&self) -> &'static str {
        "replication"
    }

    fn assign(&self, state: &SystemState<T>) -> Result<SpeedAssignment<T>, PolicyError> {
        let servers = state.server_count();
        let mut speeds = vec![T::zero(); servers];
        let mut valid_for: Option<T> = None;
        let n1 = state.queue_len(0);
        if n1 > 0 {
            speeds[0] = self.pf.inverse(count::<T>(n1) + T::one())?;
        }
        for (k, speed_slot) in speeds.iter_mut().enumerate().skip(1) {
            if let Some(head) = state.head(k) {
                let profile = state.recorded_profile(head.job);
                if profile.is_empty() {
                    return Err(PolicyError::MissingProfile {
                        job: head.job,
                        server: k,
                    });
                }
                let (speed, piece_left) = profile_at(profile, head.elapsed, fp(1e-12));
                *speed_slot = speed;
                if let Some(left) = piece_left {
                    valid_for = Some(match valid_for {
                        Some(cur) if cur <= left => cur,
                        _ => left,
                    });
                }
            }
        }
        Ok(SpeedAssignment { speeds, valid_for })
    }

    fn power(&self, speed: T) -> T {
        if speed == T::zero() {
            T::zero()
        } else {
            self.pf
                .eval(speed)
                .expect("policy speed within curve domain")
        }
    }
}

/// Look up a policy by its CLI name.
pub fn by_name<T: Real, P: PowerCurve<T> + 'static>(
    name: &str,
    pf: P,
) -> Option<Box<dyn SpeedPolicy<T>>> {
    match name {
        "proposed" => Some(Box::new(ProposedPolicy::new(pf))),
        "autonomous" => Some(Box::new(AutonomousPolicy::new(pf))),
        "replication" => Some(Box::new(ReplicationPolicy::new(pf))),
        _ => None,
    }
}

/// A violation of the guarantees the coupled rule maintains on its own runs.
#[derive(Debug, Clone)]
pub struct InvariantViolation {
    pub time: f64,
    pub message: String,
}

/// Check, segment by segment, the two structural guarantees of the coupled
/// rule: every downstream server holds at most one job, and total power
/// equals `n1 + a + 1` while server 1 is busy (or `2a` when it is empty).
pub fn verify_proposed_invariants<T: Real, P: PowerCurve<T>>(
    traj: &crate::engine::Trajectory<T>,
    pf: &P,
) -> Result<(), Vec<InvariantViolation>> {
    let mut violations = Vec::new();
    let tol = fp::<T>(1e-9);
    for seg in &traj.segments {
        let time = seg.start.to_f64().unwrap_or(f64::NAN);
        for (k, &len) in seg.queue_lens.iter().enumerate().skip(1) {
            if len > 1 {
                violations.push(InvariantViolation {
                    time,
                    message: format!("server {k} holds {len} jobs"),
                });
            }
        }
        let n1 = seg.queue_lens[0];
        let active = seg.queue_lens[1..].iter().filter(|&&c| c > 0).count();
        let expected = if n1 > 0 {
            count::<T>(n1 + active + 1)
        } else {
            count::<T>(2 * active)
        };
        let total_power: T = seg
            .speeds
            .iter()
            .map(|&s| {
                if s == T::zero() {
                    T::zero()
                } else {
                    pf.eval(s).expect("segment speed within curve domain")
                }
            })
            .sum();
        if (total_power - expected).abs() > tol {
            violations.push(InvariantViolation {
                time,
                message: format!(
                    "instantaneous power {} differs from {}",
                    total_power.to_f64().unwrap_or(f64::NAN),
                    expected.to_f64().unwrap_or(f64::NAN)
                ),
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{cost, simulate, SimOptions};
    use crate::power::PowerFunction;
    use crate::workload::{gen_batch, gen_poisson, gen_trickle_then_burst};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sq() -> PowerFunction<f64> {
        PowerFunction::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn proposed_examples() {
        let r2 = 2f64.sqrt();
        // Three jobs on server 1, two active downstream: everyone at power 2.
        let s = proposed_speeds(&[3, 1, 1], &sq()).unwrap();
        assert_relative_eq!(s[0], r2);
        assert_relative_eq!(s[1], r2);
        assert_relative_eq!(s[2], r2);

        // Empty server 1: the active server coasts at power 2.
        let s = proposed_speeds(&[0, 1], &sq()).unwrap();
        assert_eq!(s[0], 0.0);
        assert_relative_eq!(s[1], r2);

        // Single server reduces to power n + 1.
        let s = proposed_speeds(&[5], &sq()).unwrap();
        assert_relative_eq!(s[0], 6f64.sqrt());
    }

    #[test]
    fn proposed_inactive_servers_idle() {
        let s = proposed_speeds(&[2, 0, 1, 0], &sq()).unwrap();
        assert_eq!(s[1], 0.0);
        assert_eq!(s[3], 0.0);
        assert!(s[0] > 0.0 && s[2] > 0.0);
        assert_eq!(s[0], s[2]);
    }

    #[test]
    fn proposed_power_identity() {
        let pf = sq();
        for counts in [vec![4, 1, 0, 1], vec![1, 1, 1, 1], vec![7], vec![0, 1, 1]] {
            let speeds = proposed_speeds(&counts, &pf).unwrap();
            let total: f64 = speeds
                .iter()
                .map(|&s| if s > 0.0 { pf.eval(s).unwrap() } else { 0.0 })
                .sum();
            let n1 = counts[0];
            let a = counts[1..].iter().filter(|&&c| c > 0).count();
            let expected = if n1 > 0 {
                (n1 + a + 1) as f64
            } else {
                2.0 * a as f64
            };
            assert_relative_eq!(total, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn autonomous_examples() {
        let s = autonomous_speeds(&[4, 1], &sq()).unwrap();
        assert_relative_eq!(s[0], 5f64.sqrt());
        assert_relative_eq!(s[1], 2f64.sqrt());

        let s = autonomous_speeds(&[0, 0], &sq()).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);

        let cube = PowerFunction::new(1.0, 3.0).unwrap();
        let s = autonomous_speeds(&[7, 1, 0], &cube).unwrap();
        assert_relative_eq!(s[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(s[1], 2f64.powf(1.0 / 3.0), max_relative = 1e-12);
        assert_eq!(s[2], 0.0);
    }

    #[test]
    fn replication_single_job_matches_proposed() {
        let trace = gen_batch(1, 0.0, 2);
        let rep = cost(
            &simulate(
                &trace,
                &ReplicationPolicy::new(sq()),
                &SimOptions::default(),
            )
            .unwrap(),
        )
        .unwrap();
        assert_relative_eq!(rep.total, 3.0 * 2f64.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn replication_blocks_second_job_behind_slow_replay() {
        // Job 2 arrives alone, then a burst lands right behind it. Under
        // replication job 1 keeps replaying its slow solo profile on server
        // 2, so job 2 finishes strictly later than under the coupled rule.
        let trace = gen_trickle_then_burst(1.0, 20, 2);
        let opts = SimOptions::default();
        let rep = simulate(&trace, &ReplicationPolicy::new(sq()), &opts).unwrap();
        let prop = simulate(&trace, &ProposedPolicy::new(sq()), &opts).unwrap();
        let rep_f2 = rep.finishes[1].unwrap() - trace.arrivals()[1];
        let prop_f2 = prop.finishes[1].unwrap() - trace.arrivals()[1];
        assert!(
            rep_f2 > prop_f2,
            "replication flow {rep_f2} vs proposed {prop_f2}"
        );
    }

    #[test]
    fn replication_idle_system_zero_cost() {
        let trace = gen_batch(0, 0.0, 3);
        let traj =
            simulate(&trace, &ReplicationPolicy::new(sq()), &SimOptions::default()).unwrap();
        let report = cost(&traj).unwrap();
        assert_eq!(report.total, 0.0);
    }

    #[test]
    fn replication_completes_bursty_trace() {
        let trace = gen_trickle_then_burst(0.7, 9, 3);
        let traj = simulate(
            &trace,
            &ReplicationPolicy::new(sq()),
            &SimOptions::default(),
        )
        .unwrap();
        assert!(traj.finishes.iter().all(|f| f.is_some()));
        cost(&traj).unwrap();
    }

    #[test]
    fn proposed_invariants_on_random_runs() {
        let pf = sq();
        for seed in 0..5u64 {
            let trace = gen_poisson(1.5, 12.0, seed, 4);
            let traj = simulate(&trace, &ProposedPolicy::new(pf), &SimOptions::default()).unwrap();
            verify_proposed_invariants(&traj, &pf).unwrap();
        }
        let traj = simulate(
            &gen_batch(30, 0.0, 5),
            &ProposedPolicy::new(pf),
            &SimOptions::default(),
        )
        .unwrap();
        verify_proposed_invariants(&traj, &pf).unwrap();
    }

    #[test]
    fn by_name_lookup() {
        assert!(by_name::<f64, _>("proposed", sq()).is_some());
        assert!(by_name::<f64, _>("autonomous", sq()).is_some());
        assert!(by_name::<f64, _>("replication", sq()).is_some());
        assert!(by_name::<f64, _>("fastest", sq()).is_none());
    }

    #[test]
    fn profile_lookup_walks_pieces() {
        let profile = vec![(0.5, 1.0), (0.25, 2.0)];
        let (s, left) = profile_at(&profile, 0.0, 1e-12);
        assert_eq!((s, left.unwrap()), (1.0, 0.5));
        let (s, left) = profile_at(&profile, 0.6, 1e-12);
        assert_eq!(s, 2.0);
        assert_relative_eq!(left.unwrap(), 0.15);
        // Past the end the final speed is held with no expiry.
        let (s, left) = profile_at(&profile, 0.75, 1e-12);
        assert_eq!((s, left), (2.0, None));
    }

    proptest! {
        #[test]
        fn proposed_active_speeds_equal(
            counts in proptest::collection::vec(0usize..4, 1..8),
            head in 1usize..20,
        ) {
            let mut counts = counts;
            counts[0] = head;
            let speeds = proposed_speeds(&counts, &sq()).unwrap();
            let nonzero: Vec<f64> = speeds.iter().copied().filter(|&s| s > 0.0).collect();
            for w in nonzero.windows(2) {
                prop_assert_eq!(w[0], w[1]);
            }
        }

        #[test]
        fn proposed_speed_monotone_in_backlog(
            n1 in 1usize..60,
            active in 0usize..6,
        ) {
            let mut counts = vec![0usize; active + 2];
            counts[0] = n1;
            for c in counts[1..=active].iter_mut() {
                *c = 1;
            }
            let lo = proposed_speeds(&counts, &sq()).unwrap()[0];
            counts[0] = n1 + 1;
            let hi = proposed_speeds(&counts, &sq()).unwrap()[0];
            prop_assert!(hi >= lo);
        }
    }
}
