//! Event-driven simulation of the `n`-server loss system.
//!
//! Jobs arrive as a Poisson process of rate `n * lambda`. An arrival that
//! finds every server busy is blocked and lost; otherwise the scheme grants
//! it some number `i` of servers, which it holds for `S / s_i` time units
//! where `S` is its inherent size. Nothing is queued or preempted.
//!
//! Randomness comes from ChaCha8 seeded with `SimConfig::seed`; replication
//! `r` reads stream `r` of that key, so replications never share random
//! numbers and results do not depend on how replications are scheduled.

mod service;
mod state;
mod stats;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use thiserror::Error;

use crate::alloc_opt::{solve_p, AllocError, OptimalAllocation};
use crate::speedup::{RegimeError, SpeedupFunction, TrafficRegime};

pub use service::ServiceDist;
pub use state::{Allocator, Scheme, SystemState};
pub use stats::Estimate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(
        "state space collapse violated at t = {time} (event {event}): \
         {below} jobs below i1 = {i1}, {above} jobs above i2 = {i2}"
    )]
    SscViolation {
        time: f64,
        event: u64,
        i1: usize,
        i2: usize,
        below: u64,
        above: u64,
    },
}

/// Normalized arrival rate, either fixed or scaled with `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalRate {
    Fixed(f64),
    Regime(TrafficRegime),
}

impl ArrivalRate {
    pub fn lambda(&self, n: usize) -> Result<f64, SimError> {
        match *self {
            ArrivalRate::Fixed(l) if l > 0.0 && l.is_finite() => Ok(l),
            ArrivalRate::Fixed(l) => Err(SimError::ConfigInvalid(format!(
                "arrival rate {l} must be positive"
            ))),
            ArrivalRate::Regime(r) => Ok(r.lambda_of(n as u64)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub speedup: SpeedupFunction,
    pub rate: ArrivalRate,
    pub scheme: Scheme,
    pub service: ServiceDist,
    pub total_arrivals: u64,
    /// Arrivals discarded before metrics are collected.
    pub warmup_arrivals: u64,
    pub seed: u64,
    /// Check the state space collapse bounds after every event
    /// (`greedy(p*)` only).
    pub ssc_monitor: bool,
    /// Consecutive batches the measurement window is split into for the
    /// conservation-law residuals.
    pub batches: usize,
}

pub const DEFAULT_TOTAL_ARRIVALS: u64 = 1_000_000;
pub const DEFAULT_BATCHES: usize = 10;

impl SimConfig {
    /// Desk-scale defaults: 10^6 arrivals with 20% warmup, seed 0.
    pub fn new(
        n: usize,
        speedup: SpeedupFunction,
        rate: ArrivalRate,
        scheme: Scheme,
        service: ServiceDist,
    ) -> Self {
        SimConfig {
            n,
            speedup,
            rate,
            scheme,
            service,
            total_arrivals: DEFAULT_TOTAL_ARRIVALS,
            warmup_arrivals: DEFAULT_TOTAL_ARRIVALS / 5,
            seed: 0,
            ssc_monitor: false,
            batches: DEFAULT_BATCHES,
        }
    }

    /// Sets the horizon and a 20% warmup.
    pub fn with_arrivals(mut self, total: u64) -> Self {
        self.total_arrivals = total;
        self.warmup_arrivals = total / 5;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ssc_monitor(mut self, on: bool) -> Self {
        self.ssc_monitor = on;
        self
    }

    pub fn lambda(&self) -> Result<f64, SimError> {
        self.rate.lambda(self.n)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::ConfigInvalid("n must be positive".into()));
        }
        if self.speedup.degree() > self.n {
            return Err(SimError::ConfigInvalid(format!(
                "parallelism degree {} exceeds n = {}",
                self.speedup.degree(),
                self.n
            )));
        }
        if self.warmup_arrivals >= self.total_arrivals {
            return Err(SimError::ConfigInvalid(format!(
                "warmup {} must be below total arrivals {}",
                self.warmup_arrivals, self.total_arrivals
            )));
        }
        if self.batches == 0 || self.batches as u64 > self.total_arrivals - self.warmup_arrivals {
            return Err(SimError::ConfigInvalid(format!(
                "batch count {} must be between 1 and the number of measured arrivals",
                self.batches
            )));
        }
        self.lambda()?;
        Ok(())
    }

    /// Optimal allocation at this config's arrival rate.
    pub fn policy(&self) -> Result<OptimalAllocation, SimError> {
        Ok(solve_p(&self.speedup, self.lambda()?)?)
    }
}

/// Steady-state estimates from one run, over the post-warmup window.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub lambda: f64,
    pub d_star: f64,
    /// Blocked / offered arrivals.
    pub blocking_prob: f64,
    /// Time fraction with no idle server.
    pub full_time_fraction: f64,
    /// Mean execution time of jobs accepted in the window and finished
    /// before the horizon.
    pub mean_exec_time: f64,
    /// Time average of `X_i / n`.
    pub time_avg_x: Vec<f64>,
    /// Time average of `sum_i s_i x_i`.
    pub time_avg_r: f64,
    /// Time average of `sum_i x_i`.
    pub time_avg_jobs: f64,
    /// Time average of `||x - y*||_1`.
    pub l1_distance: f64,
    /// Departures per server per unit time.
    pub throughput_rate: f64,
    /// `lambda (1 - P_b) - E[r]`, with `lambda` estimated from the offered
    /// arrivals over the window.
    pub rate_residual: f64,
    /// `lambda (1 - P_b) E[D] - E[sum_i x_i]`, same `lambda` estimate, with
    /// `E[D]` taken over every job accepted in the window.
    pub little_residual: f64,
    /// Rate-conservation residual of each batch.
    pub batch_rate_residuals: Vec<f64>,
    /// Little's-law residual of each batch, using the execution times of
    /// the jobs accepted in it.
    pub batch_little_residuals: Vec<f64>,
    pub offered: u64,
    pub blocked: u64,
    pub completed: u64,
    pub window: f64,
    /// Arrivals plus departures processed over the whole run.
    pub events: u64,
}

#[derive(Debug, Clone, Copy)]
struct Departure {
    time: f64,
    seq: u64,
    servers: usize,
    exec_time: f64,
    tracked: bool,
}

impl PartialEq for Departure {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Departure {}

impl PartialOrd for Departure {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Departure {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Time integrals over the measurement window.
struct Accumulator {
    open: bool,
    start: f64,
    last: f64,
    x: Vec<f64>,
    r: f64,
    jobs: f64,
    l1: f64,
    full: f64,
    batch: usize,
    batches: Vec<Batch>,
}

#[derive(Debug, Clone, Default)]
struct Batch {
    time: f64,
    r: f64,
    jobs: f64,
    offered: u64,
    blocked: u64,
    /// Execution times of every job accepted in the batch, including those
    /// still running at the horizon.
    exec_sum: f64,
}

impl Batch {
    fn residuals(&self, n: usize) -> (f64, f64) {
        let scale = n as f64 * self.time;
        let accepted_rate = (self.offered - self.blocked) as f64 / scale;
        (
            accepted_rate - self.r / self.time,
            self.exec_sum / scale - self.jobs / self.time,
        )
    }
}

impl Accumulator {
    fn advance(&mut self, to: f64, state: &SystemState, s: &SpeedupFunction, y_star: &[f64]) {
        if self.open {
            let dt = to - self.last;
            let n = state.n() as f64;
            let (mut l1, mut r, mut jobs) = (0.0, 0.0, 0.0);
            for (k, &c) in state.counts().iter().enumerate() {
                let xi = c as f64 / n;
                self.x[k] += xi * dt;
                r += s.get(k + 1) * xi;
                jobs += xi;
                l1 += (xi - y_star[k]).abs();
            }
            self.r += r * dt;
            self.jobs += jobs * dt;
            self.l1 += l1 * dt;
            if state.free() == 0 {
                self.full += dt;
            }
            let b = &mut self.batches[self.batch];
            b.time += dt;
            b.r += r * dt;
            b.jobs += jobs * dt;
        }
        self.last = to;
    }
}

fn stream_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

fn check_ssc(
    state: &SystemState,
    policy: &OptimalAllocation,
    time: f64,
    event: u64,
) -> Result<(), SimError> {
    let counts = state.counts();
    let below: u64 = counts[..policy.i1 - 1].iter().map(|&c| c as u64).sum();
    let above: u64 = counts[policy.i2..].iter().map(|&c| c as u64).sum();
    if below > 1 || above > 0 {
        return Err(SimError::SscViolation {
            time,
            event,
            i1: policy.i1,
            i2: policy.i2,
            below,
            above,
        });
    }
    Ok(())
}

/// Simulates one replication from the empty state (stream 0).
pub fn run(config: &SimConfig) -> Result<SimMetrics, SimError> {
    run_replication(config, 0)
}

/// Simulates replication `replication` of `config`.
pub fn run_replication(config: &SimConfig, replication: u64) -> Result<SimMetrics, SimError> {
    config.validate()?;
    let lambda = config.lambda()?;
    let policy = solve_p(&config.speedup, lambda)?;
    let allocator = Allocator::new(config.scheme, &policy);
    let s = &config.speedup;
    let d = s.degree();
    let n = config.n;
    let monitor = config.ssc_monitor && config.scheme == Scheme::GreedyPStar;

    let mut rng = stream_rng(config.seed, replication);
    let mut state = SystemState::empty(n, d);
    let mut heap: BinaryHeap<Reverse<Departure>> = BinaryHeap::new();
    let mut acc = Accumulator {
        open: config.warmup_arrivals == 0,
        start: 0.0,
        last: 0.0,
        x: vec![0.0; d],
        r: 0.0,
        jobs: 0.0,
        l1: 0.0,
        full: 0.0,
        batch: 0,
        batches: vec![Batch::default(); config.batches],
    };
    let measured = config.total_arrivals - config.warmup_arrivals;
    let batch_of =
        |k: u64| ((k - config.warmup_arrivals - 1) * config.batches as u64 / measured) as usize;
    let arrival_rate = n as f64 * lambda;
    let (mut offered, mut blocked, mut completed, mut departures) = (0u64, 0u64, 0u64, 0u64);
    let mut exec_sum = 0.0;
    let mut seq = 0u64;
    let mut events = 0u64;
    let mut next_arrival = rng.sample::<f64, _>(Exp1) / arrival_rate;

    for k in 1..=config.total_arrivals {
        let in_window = k > config.warmup_arrivals;
        if in_window {
            acc.batch = batch_of(k);
        }
        while let Some(&Reverse(dep)) = heap.peek() {
            if dep.time > next_arrival {
                break;
            }
            heap.pop();
            acc.advance(dep.time, &state, s, &policy.y_star);
            state.release(dep.servers);
            events += 1;
            if acc.open {
                departures += 1;
            }
            if dep.tracked {
                completed += 1;
                exec_sum += dep.exec_time;
            }
            if monitor {
                check_ssc(&state, &policy, dep.time, events)?;
            }
        }

        let now = next_arrival;
        acc.advance(now, &state, s, &policy.y_star);
        let granted = allocator.allocate(&state, rng.random::<f64>());
        if in_window {
            offered += 1;
            acc.batches[acc.batch].offered += 1;
            if granted == 0 {
                blocked += 1;
                acc.batches[acc.batch].blocked += 1;
            }
        }
        if granted > 0 {
            let exec_time = config.service.sample(&mut rng) / s.get(granted);
            heap.push(Reverse(Departure {
                time: now + exec_time,
                seq,
                servers: granted,
                exec_time,
                tracked: in_window,
            }));
            seq += 1;
            state.admit(granted);
            if in_window {
                acc.batches[acc.batch].exec_sum += exec_time;
            }
        }
        events += 1;
        if monitor {
            check_ssc(&state, &policy, now, events)?;
        }
        if k == config.warmup_arrivals {
            acc.open = true;
            acc.start = now;
        }
        next_arrival = now + rng.sample::<f64, _>(Exp1) / arrival_rate;
    }

    let window = acc.last - acc.start;
    let p_b = blocked as f64 / offered as f64;
    let mean_exec_time = exec_sum / completed as f64;
    let time_avg_r = acc.r / window;
    let time_avg_jobs = acc.jobs / window;
    let accepted_rate = (offered - blocked) as f64 / (n as f64 * window);
    let (batch_rate_residuals, batch_little_residuals) =
        acc.batches.iter().map(|b| b.residuals(n)).unzip();
    Ok(SimMetrics {
        lambda,
        d_star: policy.d_star,
        blocking_prob: p_b,
        full_time_fraction: acc.full / window,
        mean_exec_time,
        time_avg_x: acc.x.iter().map(|v| v / window).collect(),
        time_avg_r,
        time_avg_jobs,
        l1_distance: acc.l1 / window,
        throughput_rate: departures as f64 / (n as f64 * window),
        rate_residual: accepted_rate - time_avg_r,
        little_residual: acc.batches.iter().map(|b| b.exec_sum).sum::<f64>() / (n as f64 * window)
            - time_avg_jobs,
        batch_rate_residuals,
        batch_little_residuals,
        offered,
        blocked,
        completed,
        window,
        events,
    })
}

/// Per-replication metrics with mean and standard error of each estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatedMetrics {
    pub runs: Vec<SimMetrics>,
    pub blocking_prob: Estimate,
    pub mean_exec_time: Estimate,
    pub l1_distance: Estimate,
    pub full_time_fraction: Estimate,
    pub time_avg_r: Estimate,
    pub time_avg_jobs: Estimate,
    pub throughput_rate: Estimate,
    pub rate_residual: Estimate,
    pub little_residual: Estimate,
    /// Rate-conservation residual pooled over every batch of every run.
    pub rate_residual_batched: Estimate,
    pub little_residual_batched: Estimate,
}

fn pooled(runs: &[SimMetrics], f: fn(&SimMetrics) -> &Vec<f64>) -> Estimate {
    Estimate::from_samples(
        &runs
            .iter()
            .flat_map(|m| f(m).iter().copied())
            .collect::<Vec<_>>(),
    )
}

impl ReplicatedMetrics {
    pub fn from_runs(runs: Vec<SimMetrics>) -> Self {
        let est = |f: fn(&SimMetrics) -> f64| {
            Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>())
        };
        ReplicatedMetrics {
            blocking_prob: est(|m| m.blocking_prob),
            mean_exec_time: est(|m| m.mean_exec_time),
            l1_distance: est(|m| m.l1_distance),
            full_time_fraction: est(|m| m.full_time_fraction),
            time_avg_r: est(|m| m.time_avg_r),
            time_avg_jobs: est(|m| m.time_avg_jobs),
            throughput_rate: est(|m| m.throughput_rate),
            rate_residual: est(|m| m.rate_residual),
            little_residual: est(|m| m.little_residual),
            rate_residual_batched: pooled(&runs, |m| &m.batch_rate_residuals),
            little_residual_batched: pooled(&runs, |m| &m.batch_little_residuals),
            runs,
        }
    }

    pub fn total_events(&self) -> u64 {
        self.runs.iter().map(|m| m.events).sum()
    }
}

/// Runs replications `0..replications` in parallel and aggregates them.
pub fn replicate(config: &SimConfig, replications: usize) -> Result<ReplicatedMetrics, SimError> {
    if replications == 0 {
        return Err(SimError::ConfigInvalid(
            "need at least one replication".into(),
        ));
    }
    let runs = (0..replications as u64)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReplicatedMetrics::from_runs(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scheme: Scheme) -> SimConfig {
        SimConfig::new(
            20,
            SpeedupFunction::validate(&[1.0, 1.8, 2.5]).unwrap(),
            ArrivalRate::Fixed(0.8),
            scheme,
            ServiceDist::Exponential,
        )
        .with_arrivals(20_000)
        .with_seed(7)
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut c = small(Scheme::Greedy);
        c.warmup_arrivals = c.total_arrivals;
        assert!(matches!(run(&c), Err(SimError::ConfigInvalid(_))));
        let mut c = small(Scheme::Greedy);
        c.n = 2;
        assert!(matches!(run(&c), Err(SimError::ConfigInvalid(_))));
        let mut c = small(Scheme::Greedy);
        c.rate = ArrivalRate::Regime(TrafficRegime::new(0.0, 1.0).unwrap());
        assert!(matches!(run(&c), Err(SimError::Regime(_))));
        let mut c = small(Scheme::Greedy);
        c.rate = ArrivalRate::Fixed(1.2);
        assert!(matches!(run(&c), Err(SimError::Alloc(_))));
        assert!(replicate(&small(Scheme::Greedy), 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let c = small(Scheme::GreedyPStar);
        assert_eq!(run(&c).unwrap(), run(&c).unwrap());
        let other = run(&c.clone().with_seed(8)).unwrap();
        assert_ne!(run(&c).unwrap(), other);
    }

    #[test]
    fn single_replication_equals_run() {
        let c = small(Scheme::Greedy);
        let rep = replicate(&c, 1).unwrap();
        assert_eq!(rep.runs[0], run(&c).unwrap());
        assert_eq!(rep.blocking_prob.mean, rep.runs[0].blocking_prob);
    }

    #[test]
    fn metrics_are_sane() {
        let m = run(&small(Scheme::GreedyPStar)).unwrap();
        assert!((0.0..=1.0).contains(&m.blocking_prob));
        assert_eq!(m.offered, 16_000);
        assert!(m.mean_exec_time > 0.0);
        assert!(m.time_avg_x.iter().all(|&x| x >= 0.0));
        let busy: f64 = m
            .time_avg_x
            .iter()
            .enumerate()
            .map(|(k, x)| (k + 1) as f64 * x)
            .sum();
        assert!(busy <= 1.0 + 1e-12);
    }

    #[test]
    fn two_jobs_below_i1_on_a_feasible_path() {
        // I* = {3, 4}; every step below has positive probability
        let s = SpeedupFunction::validate(&[1.0, 1.8, 2.5, 3.0, 3.4]).unwrap();
        let policy = solve_p(&s, 0.8).unwrap();
        let alloc = Allocator::new(Scheme::GreedyPStar, &policy);
        let (draw_3, draw_4) = (0.1, 0.9);
        let mut st = SystemState::empty(9, 5);
        for u in [draw_4, draw_4] {
            st.admit(alloc.allocate(&st, u));
        }
        // tagged job takes the last free server
        st.admit(alloc.allocate(&st, draw_3));
        assert_eq!(st.counts(), &[1, 0, 0, 2, 0]);
        assert!(check_ssc(&st, &policy, 0.0, 3).is_ok());
        st.release(4);
        st.admit(alloc.allocate(&st, draw_3));
        assert_eq!(st.free(), 1);
        st.admit(alloc.allocate(&st, draw_3));
        assert_eq!(st.counts(), &[2, 0, 1, 1, 0]);
        assert!(matches!(
            check_ssc(&st, &policy, 0.0, 6),
            Err(SimError::SscViolation {
                below: 2,
                above: 0,
                ..
            })
        ));
    }

    #[test]
    fn batches_cover_the_window() {
        let m = run(&small(Scheme::GreedyPStar)).unwrap();
        assert_eq!(m.batch_rate_residuals.len(), DEFAULT_BATCHES);
        assert!(m.batch_little_residuals.iter().all(|r| r.is_finite()));
        let mut c = small(Scheme::GreedyPStar);
        c.batches = 0;
        assert!(run(&c).is_err());
        c.batches = 16_001;
        assert!(run(&c).is_err());
        c.batches = 16_000;
        assert!(run(&c).is_ok());
    }

    #[test]
    fn deterministic_service_ties_are_ordered() {
        let mut c = small(Scheme::Greedy);
        c.service = ServiceDist::Deterministic;
        c.speedup = SpeedupFunction::linear(1).unwrap();
        let a = run(&c).unwrap();
        assert_eq!(a, run(&c).unwrap());
        assert!((a.mean_exec_time - 1.0).abs() < 1e-15);
    }
}
