//! Layered-parallel stochastic model: Poisson arrivals feed K tandem layers
//! of parallel servers, jobs are routed uniformly at random within a layer,
//! and every server runs gated static — a fixed speed while busy, zero when
//! idle. Under this policy each server is an M/M/1 queue and every layer
//! sees Poisson arrivals, which gives closed-form costs. This module
//! provides those closed forms, the two lower bounds valid for any policy,
//! the layer and network competitive-ratio certificates, and an event-driven
//! Monte-Carlo simulator that validates the closed forms.

use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{count, fp, Real};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("arrival rate must be positive, got {0}")]
    BadLambda(f64),
    #[error("layer {layer}: server count must be at least 1")]
    BadServerCount { layer: usize },
    #[error("layer {layer}: service rate must be positive, got {mu}")]
    BadMu { layer: usize, mu: f64 },
    #[error("layer {layer}: power coefficient must be positive, got {c}")]
    BadCoefficient { layer: usize, c: f64 },
    #[error("layer {layer}: power exponent must exceed 1, got {alpha}")]
    BadExponent { layer: usize, alpha: f64 },
    #[error("network must have at least one layer")]
    NoLayers,
    #[error("horizon must exceed warmup and both must be positive")]
    BadHorizon,
}

/// One layer: `m` identical parallel servers, exponential service
/// requirements with mean `1/mu`, and power curve `c * s^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub m: usize,
    pub mu: T,
    pub c: T,
    pub alpha: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig<T> {
    pub lambda: T,
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> NetworkConfig<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.lambda.is_finite() || self.lambda <= T::zero() {
            return Err(ConfigError::BadLambda(
                self.lambda.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if self.layers.is_empty() {
            return Err(ConfigError::NoLayers);
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.m == 0 {
                return Err(ConfigError::BadServerCount { layer: i });
            }
            if !layer.mu.is_finite() || layer.mu <= T::zero() {
                return Err(ConfigError::BadMu {
                    layer: i,
                    mu: layer.mu.to_f64().unwrap_or(f64::NAN),
                });
            }
            if !layer.c.is_finite() || layer.c <= T::zero() {
                return Err(ConfigError::BadCoefficient {
                    layer: i,
                    c: layer.c.to_f64().unwrap_or(f64::NAN),
                });
            }
            if !layer.alpha.is_finite() || layer.alpha <= T::one() {
                return Err(ConfigError::BadExponent {
                    layer: i,
                    alpha: layer.alpha.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    /// Offered load to layer `i`: lambda / mu_i.
    pub fn offered_load(&self, i: usize) -> T {
        self.lambda / self.layers[i].mu
    }

    /// Gated static speed for layer `i`: one plus the per-server load, so
    /// each server is stable by construction.
    pub fn gated_speed(&self, i: usize) -> T {
        T::one() + self.offered_load(i) / count(self.layers[i].m)
    }

    /// Closed-form cost rate of the gated static policy in layer `i`
    /// (arrival rate times mean response-plus-energy per job):
    /// `rho + c rho (1 + rho/m)^(alpha-1)`.
    pub fn layer_closed_form(&self, i: usize) -> T {
        let layer = &self.layers[i];
        let rho = self.offered_load(i);
        rho + layer.c * rho * (T::one() + rho / count(layer.m)).powf(layer.alpha - T::one())
    }

    /// Energy-only lower bound on any policy's cost rate in layer `i`:
    /// `c rho^alpha / m^(alpha-1)`.
    pub fn layer_lb_energy(&self, i: usize) -> T {
        let layer = &self.layers[i];
        let rho = self.offered_load(i);
        layer.c * rho.powf(layer.alpha) / count::<T>(layer.m).powf(layer.alpha - T::one())
    }

    /// Single-job-in-isolation lower bound on any policy's cost rate in
    /// layer `i`: `c^(1/alpha) rho alpha (alpha-1)^(1/alpha - 1)`.
    pub fn layer_lb_isolation(&self, i: usize) -> T {
        let layer = &self.layers[i];
        let rho = self.offered_load(i);
        layer.c.powf(layer.alpha.recip())
            * rho
            * layer.alpha
            * (layer.alpha - T::one()).powf(layer.alpha.recip() - T::one())
    }

    /// Competitive-ratio certificate for layer `i`; depends only on the
    /// power curve `(c, alpha)`:
    /// `(1 + c 2^(alpha-1)) / min(c^(1/alpha) alpha (alpha-1)^(1/alpha-1), c)`.
    pub fn layer_certificate(&self, i: usize) -> T {
        layer_certificate(&self.layers[i])
    }

    /// Network-wide certificate: the worst layer certificate.
    pub fn network_certificate(&self) -> T {
        (0..self.layers.len())
            .map(|i| self.layer_certificate(i))
            .fold(T::zero(), T::max)
    }
}

/// Layer certificate from the power curve alone.
pub fn layer_certificate<T: Real>(layer: &Layer<T>) -> T {
    let two = fp::<T>(2.0);
    let numerator = T::one() + layer.c * two.powf(layer.alpha - T::one());
    let isolation = layer.c.powf(layer.alpha.recip())
        * layer.alpha
        * (layer.alpha - T::one()).powf(layer.alpha.recip() - T::one());
    numerator / isolation.min(layer.c)
}

/// Per-layer simulation estimates and certificates.
#[derive(Debug, Clone, Serialize)]
pub struct LayerReport<T> {
    pub gated_speed: T,
    /// Closed-form lambda * C_i of the gated static policy.
    pub closed_form: T,
    /// Simulated mean response time in the layer.
    pub mean_response: T,
    pub response_halfwidth: T,
    /// Simulated mean energy per job in the layer.
    pub energy_per_job: T,
    pub energy_halfwidth: T,
    /// Simulated `lambda * (E[T] + E[E])`.
    pub sim_cost: T,
    pub lb_energy: T,
    pub lb_isolation: T,
    pub certificate: T,
    pub completed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StochasticReport<T> {
    pub lambda: T,
    pub horizon: T,
    pub warmup: T,
    pub seed: u64,
    pub layers: Vec<LayerReport<T>>,
    pub total_closed_form: T,
    pub total_sim_cost: T,
    pub network_certificate: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EvKind {
    ExternalArrival,
    Completion { layer: usize, server: usize },
}

struct Ev<T> {
    time: T,
    seq: u64,
    kind: EvKind,
}

impl<T: Real> PartialEq for Ev<T> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl<T: Real> Eq for Ev<T> {}
impl<T: Real> PartialOrd for Ev<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Ev<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed for a min-heap; ties broken by insertion order.
        other
            .time
            .partial_cmp(&self.time)
            .expect("finite event times")
            .then(other.seq.cmp(&self.seq))
    }
}

struct ServerSim<T> {
    queue: VecDeque<(u64, T)>,
    busy_since: Option<T>,
}

/// Batch-means estimate: mean plus a 95% half-width from 20 batches.
fn batch_means<T: Real>(samples: &[T]) -> (T, T) {
    if samples.is_empty() {
        return (T::zero(), T::zero());
    }
    let n = samples.len();
    let mean = samples.iter().copied().sum::<T>() / count(n);
    let batches = 20usize.min(n);
    if batches < 2 {
        return (mean, T::zero());
    }
    let per = n / batches;
    let used = per * batches;
    let mut batch_avgs = Vec::with_capacity(batches);
    for b in 0..batches {
        let slice = &samples[b * per..(b + 1) * per];
        batch_avgs.push(slice.iter().copied().sum::<T>() / count(per));
    }
    let grand = batch_avgs.iter().copied().sum::<T>() / count(batches);
    let var = batch_avgs
        .iter()
        .map(|&x| (x - grand) * (x - grand))
        .sum::<T>()
        / count(batches - 1);
    // Student t quantile at 97.5% for 19 degrees of freedom.
    let t_quantile = fp::<T>(2.093);
    let halfwidth = t_quantile * (var / count(batches)).sqrt();
    let _ = used;
    (mean, halfwidth)
}

/// Event-driven simulation of the layered network under random routing and
/// gated static speeds. Deterministic for a fixed seed. Arrivals stop at
/// `horizon`; in-flight jobs drain afterwards. Jobs completing a layer
/// before `warmup` are excluded from that layer's statistics.
pub fn simulate_network<T: Real>(
    cfg: &NetworkConfig<T>,
    horizon: T,
    warmup: T,
    seed: u64,
) -> Result<StochasticReport<T>, ConfigError> {
    cfg.validate()?;
    if !horizon.is_finite() || horizon <= warmup || warmup < T::zero() {
        return Err(ConfigError::BadHorizon);
    }
    let layer_count = cfg.layers.len();
    let speeds: Vec<T> = (0..layer_count).map(|i| cfg.gated_speed(i)).collect();
    let powers: Vec<T> = cfg
        .layers
        .iter()
        .zip(&speeds)
        .map(|(l, &s)| l.c * s.powf(l.alpha))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exp_sample = |rng: &mut ChaCha8Rng, rate: T| -> T {
        let u: f64 = rng.gen();
        -(T::one() - fp::<T>(u)).ln() / rate
    };

    let mut servers: Vec<Vec<ServerSim<T>>> = cfg
        .layers
        .iter()
        .map(|l| {
            (0..l.m)
                .map(|_| ServerSim {
                    queue: VecDeque::new(),
                    busy_since: None,
                })
                .collect()
        })
        .collect();
    let mut response_samples: Vec<Vec<T>> = vec![Vec::new(); layer_count];
    let mut energy_samples: Vec<Vec<T>> = vec![Vec::new(); layer_count];
    let mut completed: Vec<u64> = vec![0; layer_count];

    let mut heap: BinaryHeap<Ev<T>> = BinaryHeap::new();
    let mut seq = 0u64;
    let push = |heap: &mut BinaryHeap<Ev<T>>, seq: &mut u64, time: T, kind: EvKind| {
        *seq += 1;
        heap.push(Ev {
            time,
            seq: *seq,
            kind,
        });
    };

    let first = exp_sample(&mut rng, cfg.lambda);
    if first <= horizon {
        push(&mut heap, &mut seq, first, EvKind::ExternalArrival);
    }
    let mut next_job_id = 0u64;

    while let Some(ev) = heap.pop() {
        let now = ev.time;
        match ev.kind {
            EvKind::ExternalArrival => {
                let next = now + exp_sample(&mut rng, cfg.lambda);
                if next <= horizon {
                    push(&mut heap, &mut seq, next, EvKind::ExternalArrival);
                }
                let job = next_job_id;
                next_job_id += 1;
                dispatch(
                    cfg,
                    &speeds,
                    &mut rng,
                    &mut exp_sample,
                    &mut servers,
                    &mut heap,
                    &mut seq,
                    0,
                    job,
                    now,
                );
            }
            EvKind::Completion { layer, server } => {
                let srv = &mut servers[layer][server];
                let (job, entered) = srv.queue.pop_front().expect("completion on busy server");
                let started = srv.busy_since.take().expect("busy server has a start time");
                if now > warmup {
                    completed[layer] += 1;
                    response_samples[layer].push(now - entered);
                    // Energy attributed to a job: its own service span times
                    // the layer's busy power, clipped to the post-warmup
                    // window.
                    let span = now - started.max(warmup);
                    energy_samples[layer].push(span.max(T::zero()) * powers[layer]);
                }
                if let Some(&(_, _)) = srv.queue.front() {
                    srv.busy_since = Some(now);
                    let size = exp_sample(&mut rng, cfg.layers[layer].mu);
                    let done = now + size / speeds[layer];
                    push(
                        &mut heap,
                        &mut seq,
                        done,
                        EvKind::Completion { layer, server },
                    );
                }
                if layer + 1 < layer_count {
                    dispatch(
                        cfg,
                        &speeds,
                        &mut rng,
                        &mut exp_sample,
                        &mut servers,
                        &mut heap,
                        &mut seq,
                        layer + 1,
                        job,
                        now,
                    );
                }
            }
        }
    }

    let lambda = cfg.lambda;
    let mut layers = Vec::with_capacity(layer_count);
    let mut total_closed = T::zero();
    let mut total_sim = T::zero();
    for i in 0..layer_count {
        let (mean_response, response_halfwidth) = batch_means(&response_samples[i]);
        let (energy_per_job, energy_halfwidth) = batch_means(&energy_samples[i]);
        let closed = cfg.layer_closed_form(i);
        let sim_cost = lambda * (mean_response + energy_per_job);
        total_closed += closed;
        total_sim += sim_cost;
        layers.push(LayerReport {
            gated_speed: cfg.gated_speed(i),
            closed_form: closed,
            mean_response,
            response_halfwidth,
            energy_per_job,
            energy_halfwidth,
            sim_cost,
            lb_energy: cfg.layer_lb_energy(i),
            lb_isolation: cfg.layer_lb_isolation(i),
            certificate: cfg.layer_certificate(i),
            completed: completed[i],
        });
    }

    Ok(StochasticReport {
        lambda,
        horizon,
        warmup,
        seed,
        layers,
        total_closed_form: total_closed,
        total_sim_cost: total_sim,
        network_certificate: cfg.network_certificate(),
    })
}

#[allow(clippy::too_many_arguments)]
fn dispatch<T: Real>(
    cfg: &NetworkConfig<T>,
    speeds: &[T],
    rng: &mut ChaCha8Rng,
    exp_sample: &mut impl FnMut(&mut ChaCha8Rng, T) -> T,
    servers: &mut [Vec<ServerSim<T>>],
    heap: &mut BinaryHeap<Ev<T>>,
    seq: &mut u64,
    layer: usize,
    job: u64,
    now: T,
) {
    let m = cfg.layers[layer].m;
    let target = if m == 1 { 0 } else { rng.gen_range(0..m) };
    let srv = &mut servers[layer][target];
    srv.queue.push_back((job, now));
    if srv.busy_since.is_none() {
        srv.busy_since = Some(now);
        let size = exp_sample(rng, cfg.layers[layer].mu);
        let done = now + size / speeds[layer];
        *seq += 1;
        heap.push(Ev {
            time: done,
            seq: *seq,
            kind: EvKind::Completion {
                layer,
                server: target,
            },
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(lambda: f64, mu: f64, m: usize, c: f64, alpha: f64) -> NetworkConfig<f64> {
        NetworkConfig {
            lambda,
            layers: vec![Layer { m, mu, c, alpha }],
        }
    }

    #[test]
    fn gated_speed_examples() {
        assert_eq!(single(2.0, 1.0, 2, 1.0, 2.0).gated_speed(0), 2.0);
        assert_relative_eq!(single(1.0, 10.0, 1, 1.0, 2.0).gated_speed(0), 1.1);
        // Light-load limit tends to 1.
        assert_relative_eq!(
            single(1e-9, 1.0, 1, 1.0, 2.0).gated_speed(0),
            1.0,
            max_relative = 1e-8
        );
    }

    #[test]
    fn closed_form_examples() {
        assert_relative_eq!(single(1.0, 1.0, 1, 1.0, 2.0).layer_closed_form(0), 3.0);
        assert_relative_eq!(single(2.0, 1.0, 2, 1.0, 2.0).layer_closed_form(0), 6.0);
        assert!(single(1e-12, 1.0, 1, 1.0, 2.0).layer_closed_form(0) < 1e-10);
    }

    #[test]
    fn lb_energy_examples() {
        assert_relative_eq!(single(1.0, 1.0, 1, 1.0, 2.0).layer_lb_energy(0), 1.0);
        assert_relative_eq!(single(4.0, 1.0, 2, 1.0, 2.0).layer_lb_energy(0), 8.0);
        assert!(single(1e-12, 1.0, 1, 1.0, 2.0).layer_lb_energy(0) < 1e-20);
    }

    #[test]
    fn lb_isolation_examples() {
        assert_relative_eq!(single(1.0, 1.0, 1, 1.0, 2.0).layer_lb_isolation(0), 2.0);
        assert_relative_eq!(single(3.0, 1.0, 1, 1.0, 2.0).layer_lb_isolation(0), 6.0);
        assert_relative_eq!(
            single(1.0, 1.0, 1, 1.0, 3.0).layer_lb_isolation(0),
            3.0 * 2f64.powf(-2.0 / 3.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn isolation_bound_matches_per_job_optimum() {
        // At rho = 1 the isolation bound equals the worst-case per-job
        // optimal cost for the same curve.
        use crate::power::{PowerCurve, PowerFunction};
        for (c, alpha) in [(1.0, 2.0), (1.0, 3.0), (2.0, 2.0), (0.7, 2.4)] {
            let cfg = single(1.0, 1.0, 1, c, alpha);
            let pf = PowerFunction::new(c, alpha).unwrap();
            assert_relative_eq!(
                cfg.layer_lb_isolation(0),
                pf.per_job_optimal_cost(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn certificate_examples() {
        assert_relative_eq!(single(1.0, 1.0, 1, 1.0, 2.0).layer_certificate(0), 3.0);
        assert_relative_eq!(single(1.0, 1.0, 1, 2.0, 2.0).layer_certificate(0), 2.5);
    }

    #[test]
    fn certificate_dominates_achieved_ratio() {
        // Over random workloads, closed-form / max(lb) never exceeds the
        // certificate.
        let mut state = 0x5deece66du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let cfg = single(
                0.05 + 20.0 * next(),
                0.1 + 5.0 * next(),
                1 + (next() * 16.0) as usize,
                0.2 + 4.0 * next(),
                1.1 + 2.5 * next(),
            );
            let achieved =
                cfg.layer_closed_form(0) / cfg.layer_lb_energy(0).max(cfg.layer_lb_isolation(0));
            let cert = cfg.layer_certificate(0);
            assert!(
                achieved <= cert + 1e-9,
                "achieved {achieved} > certificate {cert} for {cfg:?}"
            );
        }
    }

    #[test]
    fn closed_form_dominates_lower_bounds() {
        let mut state = 0xc0ffee_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let cfg = single(
                0.05 + 20.0 * next(),
                0.1 + 5.0 * next(),
                1 + (next() * 16.0) as usize,
                0.2 + 4.0 * next(),
                1.1 + 2.5 * next(),
            );
            let closed = cfg.layer_closed_form(0);
            assert!(closed >= cfg.layer_lb_energy(0) - 1e-12);
            assert!(closed >= cfg.layer_lb_isolation(0) - 1e-12);
        }
    }

    #[test]
    fn certificate_ignores_workload_parameters() {
        let base = single(1.0, 1.0, 1, 1.0, 2.0).layer_certificate(0);
        for lambda in [0.1, 1.0, 10.0] {
            for mu in [0.5, 1.0, 2.0] {
                for m in [1usize, 4, 16] {
                    let cfg = single(lambda, mu, m, 1.0, 2.0);
                    assert_eq!(cfg.layer_certificate(0), base);
                }
            }
        }
    }

    #[test]
    fn validation_errors() {
        assert!(single(0.0, 1.0, 1, 1.0, 2.0).validate().is_err());
        assert!(single(1.0, 0.0, 1, 1.0, 2.0).validate().is_err());
        assert!(single(1.0, 1.0, 0, 1.0, 2.0).validate().is_err());
        assert!(single(1.0, 1.0, 1, 0.0, 2.0).validate().is_err());
        assert!(single(1.0, 1.0, 1, 1.0, 1.0).validate().is_err());
        assert!(NetworkConfig::<f64> {
            lambda: 1.0,
            layers: vec![]
        }
        .validate()
        .is_err());
        assert!(single(1.0, 1.0, 1, 1.0, 2.0).validate().is_ok());
    }

    #[test]
    fn config_json_schema() {
        let json = r#"{"lambda": 2.0, "layers": [{"m": 2, "mu": 1.0, "c": 1.0, "alpha": 2.0}]}"#;
        let cfg: NetworkConfig<f64> = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.lambda, 2.0);
        assert_eq!(cfg.layers[0].m, 2);
        let round = serde_json::to_string(&cfg).unwrap();
        let back: NetworkConfig<f64> = serde_json::from_str(&round).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn simulation_deterministic() {
        let cfg = single(1.0, 1.0, 1, 1.0, 2.0);
        let a = simulate_network(&cfg, 500.0, 50.0, 9).unwrap();
        let b = simulate_network(&cfg, 500.0, 50.0, 9).unwrap();
        assert_eq!(a.total_sim_cost.to_bits(), b.total_sim_cost.to_bits());
        let c = simulate_network(&cfg, 500.0, 50.0, 10).unwrap();
        assert_ne!(a.total_sim_cost.to_bits(), c.total_sim_cost.to_bits());
    }

    #[test]
    fn simulation_matches_closed_form() {
        let cfg = single(1.0, 1.0, 1, 1.0, 2.0);
        let report = simulate_network(&cfg, 3e4, 3e3, 7).unwrap();
        let layer = &report.layers[0];
        assert_relative_eq!(layer.closed_form, 3.0);
        let rel = (layer.sim_cost - 3.0).abs() / 3.0;
        assert!(rel < 0.03, "relative error {rel}, sim {}", layer.sim_cost);
    }

    #[test]
    fn mm1_mean_response_sanity() {
        // Each server is an M/M/1 with arrival rate lambda/m and service
        // rate mu * s; mean response is 1 / (mu s - lambda/m).
        let cfg = single(1.5, 1.0, 2, 1.0, 2.0);
        let report = simulate_network(&cfg, 4e4, 4e3, 3).unwrap();
        let layer = &report.layers[0];
        let s = cfg.gated_speed(0);
        let expected = 1.0 / (1.0 * s - 1.5 / 2.0);
        let se = layer.response_halfwidth / 2.093;
        assert!(
            (layer.mean_response - expected).abs() <= 3.0 * se.max(1e-3),
            "mean {} expected {expected} (se {se})",
            layer.mean_response
        );
    }

    #[test]
    fn identical_layers_agree() {
        // With two identical layers the second sees Poisson departures of
        // the first, so the per-layer statistics must agree within noise.
        let cfg: NetworkConfig<f64> = NetworkConfig {
            lambda: 1.0,
            layers: vec![
                Layer {
                    m: 1,
                    mu: 1.0,
                    c: 1.0,
                    alpha: 2.0,
                },
                Layer {
                    m: 1,
                    mu: 1.0,
                    c: 1.0,
                    alpha: 2.0,
                },
            ],
        };
        let report = simulate_network(&cfg, 4e4, 4e3, 21).unwrap();
        let (a, b) = (&report.layers[0], &report.layers[1]);
        let tol = (a.response_halfwidth + b.response_halfwidth).max(0.02);
        assert!(
            (a.mean_response - b.mean_response).abs() <= 2.0 * tol,
            "layer means {} vs {}",
            a.mean_response,
            b.mean_response
        );
        assert_relative_eq!(a.closed_form, b.closed_form);
    }

    #[test]
    fn speed_moment_inequality() {
        // Gated speeds: the power of the average speed never exceeds the
        // average power (convexity through the idle state).
        let cfg = single(1.2, 1.0, 2, 1.0, 2.0);
        let report = simulate_network(&cfg, 2e4, 2e3, 5).unwrap();
        let layer = &report.layers[0];
        let s = layer.gated_speed;
        // Busy fraction recovered from the simulated energy rate.
        let power = 1.0 * s * s;
        let busy_fraction =
            (report.lambda * layer.energy_per_job) / (cfg.layers[0].m as f64 * power);
        let mean_speed = busy_fraction * s;
        let power_of_mean = mean_speed * mean_speed;
        let mean_power = busy_fraction * power;
        assert!(power_of_mean <= mean_power + 1e-9);
        assert!(busy_fraction > 0.0 && busy_fraction < 1.0);
    }

    #[test]
    fn horizon_must_exceed_warmup() {
        let cfg = single(1.0, 1.0, 1, 1.0, 2.0);
        assert!(matches!(
            simulate_network(&cfg, 10.0, 10.0, 1),
            Err(ConfigError::BadHorizon)
        ));
    }

    #[test]
    fn convergence_improves_with_horizon() {
        let cfg = single(1.0, 1.0, 1, 1.0, 2.0);
        let short = simulate_network(&cfg, 2e3, 2e2, 11).unwrap();
        let long = simulate_network(&cfg, 8e4, 8e3, 11).unwrap();
        let err_short = (short.layers[0].sim_cost - 3.0).abs();
        let err_long = (long.layers[0].sim_cost - 3.0).abs();
        assert!(
            err_long < err_short,
            "long-run error {err_long} vs short {err_short}"
        );
    }
}
