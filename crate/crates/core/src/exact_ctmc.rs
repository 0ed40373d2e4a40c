//! Exact stationary analysis of small loss systems with exponential sizes.
//!
//! The chain lives on count vectors `(X_1..X_d)` with `sum_i i X_i <= n`.
//! Arrivals move `x -> x + e_i` at rate `n * lambda * A_i(x)` and departures
//! move `x -> x - e_i` at rate `s_i * X_i`. Only the class reachable from
//! the empty state is solved; everything else gets probability zero.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::alloc_opt::{solve_p, AllocError};
use crate::loss_sim::{Allocator, Scheme};
use crate::speedup::SpeedupFunction;

pub const DEFAULT_STATE_CAP: usize = 200_000;
/// Largest chain solved with dense LU.
pub const DENSE_STATE_CAP: usize = 4_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CtmcError {
    #[error("state space for n = {n}, d = {d} exceeds the cap of {cap} states")]
    StateSpaceTooLarge { n: usize, d: usize, cap: usize },
    #[error("stationary system is singular")]
    SingularSystem,
    #[error("stationary residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Alloc(#[from] AllocError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    n: usize,
    d: usize,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn index_of(&self, x: &[u32]) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    fn free(&self, x: &[u32]) -> usize {
        self.n
            - x.iter()
                .enumerate()
                .map(|(k, &c)| (k + 1) * c as usize)
                .sum::<usize>()
    }
}

/// Enumerates all count vectors with `sum_i i X_i <= n`, `X_1` varying
/// fastest, up to `cap` states.
pub fn enumerate_states(n: usize, d: usize, cap: usize) -> Result<StateSpace, CtmcError> {
    if d == 0 {
        return Err(CtmcError::InvalidInstance("d must be positive".into()));
    }
    fn fill(
        dim: usize,
        remaining: usize,
        x: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
        cap: usize,
    ) -> bool {
        if dim == 0 {
            if out.len() == cap {
                return false;
            }
            out.push(x.clone());
            return true;
        }
        for c in 0..=remaining / dim {
            x[dim - 1] = c as u32;
            if !fill(dim - 1, remaining - c * dim, x, out, cap) {
                return false;
            }
        }
        x[dim - 1] = 0;
        true
    }
    let mut states = Vec::new();
    if !fill(d, n, &mut vec![0; d], &mut states, cap) {
        return Err(CtmcError::StateSpaceTooLarge { n, d, cap });
    }
    let index = states
        .iter()
        .enumerate()
        .map(|(k, x)| (x.clone(), k))
        .collect();
    Ok(StateSpace {
        n,
        d,
        states,
        index,
    })
}

/// Dense generator; rows are source states.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub q: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn max_row_sum(&self) -> f64 {
        self.q.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
    }
}

pub fn build_generator(
    space: &StateSpace,
    allocator: &Allocator,
    s: &SpeedupFunction,
    lambda: f64,
) -> Result<GeneratorMatrix, CtmcError> {
    let m = space.len();
    if m > DENSE_STATE_CAP {
        return Err(CtmcError::StateSpaceTooLarge {
            n: space.n,
            d: space.d,
            cap: DENSE_STATE_CAP,
        });
    }
    if s.degree() != space.d || allocator.degree() != space.d {
        return Err(CtmcError::InvalidInstance(
            "speed-up, allocator and state space disagree on d".into(),
        ));
    }
    let arrival = space.n as f64 * lambda;
    let mut q = DMatrix::zeros(m, m);
    let mut y = vec![0u32; space.d];
    for (from, x) in space.states.iter().enumerate() {
        let grants = allocator.grant_probabilities(space.free(x));
        for i in 1..=space.d {
            if grants[i] > 0.0 {
                y.copy_from_slice(x);
                y[i - 1] += 1;
                let to = space.index[&y];
                q[(from, to)] += arrival * grants[i];
            }
            if x[i - 1] > 0 {
                y.copy_from_slice(x);
                y[i - 1] -= 1;
                let to = space.index[&y];
                q[(from, to)] += s.get(i) * x[i - 1] as f64;
            }
        }
        let out: f64 = q.row(from).sum();
        q[(from, from)] = -out;
    }
    Ok(GeneratorMatrix { q })
}

/// Indices reachable from `start` through positive rates.
fn reachable(q: &DMatrix<f64>, start: usize) -> Vec<usize> {
    let m = q.nrows();
    let mut seen = vec![false; m];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..m {
            if v != u && !seen[v] && q[(u, v)] > 0.0 {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    (0..m).filter(|&k| seen[k]).collect()
}

/// Stationary distribution of the class reachable from state `start`, by
/// dense LU on the balance equations with one row replaced by
/// normalization.
pub fn stationary(gen: &GeneratorMatrix, start: usize) -> Result<Vec<f64>, CtmcError> {
    let q = &gen.q;
    let m = q.nrows();
    let recurrent = reachable(q, start);
    let k = recurrent.len();
    let mut a = DMatrix::zeros(k, k);
    for (r, &i) in recurrent.iter().enumerate() {
        for (c, &j) in recurrent.iter().enumerate() {
            // transpose: column of pi Q = 0 becomes a row
            a[(c, r)] = q[(i, j)];
        }
    }
    for c in 0..k {
        a[(k - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let sol = a.lu().solve(&b).ok_or(CtmcError::SingularSystem)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(CtmcError::SingularSystem);
    }
    let mut pi = vec![0.0; m];
    for (r, &i) in recurrent.iter().enumerate() {
        pi[i] = sol[r].max(0.0);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);

    let residual = (0..m)
        .map(|j| (0..m).map(|i| pi[i] * q[(i, j)]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(CtmcError::Residual(residual));
    }
    Ok(pi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMetrics {
    pub blocking_prob: f64,
    pub mean_exec_time: f64,
    /// `E[X_i / n]`.
    pub mean_x: Vec<f64>,
    /// `E[sum_i s_i x_i]`.
    pub mean_r: f64,
    pub l1_distance: f64,
}

/// Steady-state metrics under `pi`. The mean execution time comes from
/// Little's law: `E[sum_i X_i] / (n lambda (1 - P_b))`.
pub fn exact_metrics(
    space: &StateSpace,
    pi: &[f64],
    s: &SpeedupFunction,
    lambda: f64,
    y_star: &[f64],
) -> ExactMetrics {
    let n = space.n as f64;
    let d = space.d;
    let mut blocking = 0.0;
    let mut mean_x = vec![0.0; d];
    let mut jobs = 0.0;
    let mut l1 = 0.0;
    for (x, &p) in space.states.iter().zip(pi) {
        if p == 0.0 {
            continue;
        }
        if space.free(x) == 0 {
            blocking += p;
        }
        for k in 0..d {
            let xi = x[k] as f64 / n;
            mean_x[k] += p * xi;
            l1 += p * (xi - y_star[k]).abs();
            jobs += p * x[k] as f64;
        }
    }
    let mean_r = mean_x
        .iter()
        .enumerate()
        .map(|(k, x)| s.get(k + 1) * x)
        .sum();
    ExactMetrics {
        blocking_prob: blocking,
        mean_exec_time: jobs / (n * lambda * (1.0 - blocking)),
        mean_x,
        mean_r,
        l1_distance: l1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub space: StateSpace,
    pub pi: Vec<f64>,
    pub metrics: ExactMetrics,
    pub d_star: f64,
}

/// Enumerates, builds, and solves the chain for one instance started empty.
pub fn solve_exact(
    n: usize,
    s: &SpeedupFunction,
    lambda: f64,
    scheme: Scheme,
    cap: usize,
) -> Result<ExactSolution, CtmcError> {
    if n < s.degree() {
        return Err(CtmcError::InvalidInstance(format!(
            "n = {n} is below the parallelism degree {}",
            s.degree()
        )));
    }
    let policy = solve_p(s, lambda)?;
    let allocator = Allocator::new(scheme, &policy);
    let space = enumerate_states(n, s.degree(), cap)?;
    let gen = build_generator(&space, &allocator, s, lambda)?;
    let empty = space.index_of(&vec![0; s.degree()]).unwrap();
    let pi = stationary(&gen, empty)?;
    let metrics = exact_metrics(&space, &pi, s, lambda, &policy.y_star);
    Ok(ExactSolution {
        space,
        pi,
        metrics,
        d_star: policy.d_star,
    })
}
