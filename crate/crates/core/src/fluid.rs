//! Deterministic fluid limit of the scaled job counts under `greedy(p*)`.
//!
//! Away from the capacity boundary each component evolves independently as
//! `dx_i/dt = lambda * p*_i - s_i * x_i`, whose fixed point is `y*`.

use thiserror::Error;

use crate::alloc_opt::OptimalAllocation;
use crate::speedup::SpeedupFunction;

/// Undershoot below zero tolerated (and clipped) before a state counts as
/// invalid.
const UNDERSHOOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluidError {
    #[error("state component {index} left [0, inf) at t = {t}: {value}")]
    NonfiniteState { index: usize, t: f64, value: f64 },
    #[error("invalid integration parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub x: Vec<f64>,
    pub t: f64,
}

impl FluidState {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        FluidState { x, t }
    }

    pub fn zero(d: usize) -> Self {
        FluidState {
            x: vec![0.0; d],
            t: 0.0,
        }
    }

    /// Squared Euclidean distance to `target`.
    pub fn sq_distance(&self, target: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

fn drift(s: &SpeedupFunction, policy: &OptimalAllocation, x: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = policy.lambda * policy.p_star[k] - s.get(k + 1) * x[k];
    }
}

fn check_dims(
    x0: &FluidState,
    s: &SpeedupFunction,
    policy: &OptimalAllocation,
) -> Result<(), FluidError> {
    if x0.x.len() != s.degree() || policy.degree() != s.degree() {
        return Err(FluidError::InvalidParameters(format!(
            "dimension mismatch: state {}, speed-up {}, policy {}",
            x0.x.len(),
            s.degree(),
            policy.degree()
        )));
    }
    Ok(())
}

/// Fixed-step RK4 from `x0` to `x0.t + t_end`. The returned trajectory holds
/// the initial state and one sample per step; the final step is shortened to
/// land exactly on the end time.
pub fn integrate(
    x0: &FluidState,
    s: &SpeedupFunction,
    policy: &OptimalAllocation,
    t_end: f64,
    dt: f64,
) -> Result<Vec<FluidState>, FluidError> {
    check_dims(x0, s, policy)?;
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(FluidError::InvalidParameters(format!(
            "need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let d = s.degree();
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(x0.clone());

    let mut x = x0.x.clone();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    for step in 0..steps {
        let t = x0.t + step as f64 * dt;
        let h = if step + 1 == steps {
            x0.t + t_end - t
        } else {
            dt
        };
        drift(s, policy, &x, &mut k1);
        for k in 0..d {
            tmp[k] = x[k] + 0.5 * h * k1[k];
        }
        drift(s, policy, &tmp, &mut k2);
        for k in 0..d {
            tmp[k] = x[k] + 0.5 * h * k2[k];
        }
        drift(s, policy, &tmp, &mut k3);
        for k in 0..d {
            tmp[k] = x[k] + h * k3[k];
        }
        drift(s, policy, &tmp, &mut k4);
        let t_next = t + h;
        for k in 0..d {
            let v = x[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            if !v.is_finite() || v < -UNDERSHOOT_TOL {
                return Err(FluidError::NonfiniteState {
                    index: k + 1,
                    t: t_next,
                    value: v,
                });
            }
            x[k] = v.max(0.0);
        }
        traj.push(FluidState::new(x.clone(), t_next));
    }
    Ok(traj)
}

/// Exact solution `x_i(t) = y*_i + (x0_i - y*_i) * exp(-s_i * t)`, with `t`
/// measured from `x0.t`.
pub fn closed_form(
    x0: &FluidState,
    s: &SpeedupFunction,
    policy: &OptimalAllocation,
    t: f64,
) -> FluidState {
    let x =
        x0.x.iter()
            .enumerate()
            .map(|(k, &xi)| {
                let y = policy.y_star[k];
                y + (xi - y) * (-s.get(k + 1) * t).exp()
            })
            .collect();
    FluidState::new(x, x0.t + t)
}
