//! Log-log fits of a metric against system size.

use crate::campaign::CellResult;
use crate::output::col;
use crate::CliError;

pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Time-averaged `||x - y*||_1`.
    L1Distance,
    Blocking,
    /// `|E[D] - D*|`.
    ExecGap,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::L1Distance => "l1_distance",
            Target::Blocking => "blocking",
            Target::ExecGap => "exec_gap",
        }
    }

    pub fn from_name(name: &str) -> Option<Target> {
        match name {
            "l1_distance" | "l1" => Some(Target::L1Distance),
            "blocking" | "blocking_prob" => Some(Target::Blocking),
            "exec_gap" => Some(Target::ExecGap),
            _ => None,
        }
    }

    pub fn value(&self, r: &CellResult) -> f64 {
        match self {
            Target::L1Distance => r.metrics.l1_distance.mean,
            Target::Blocking => r.metrics.blocking_prob.mean,
            Target::ExecGap => r.exec_gap(),
        }
    }

    pub fn stderr(&self, r: &CellResult) -> f64 {
        match self {
            Target::L1Distance => r.metrics.l1_distance.stderr,
            Target::Blocking => r.metrics.blocking_prob.stderr,
            Target::ExecGap => r.metrics.mean_exec_time.stderr,
        }
    }

    /// CSV column holding the target (1-based).
    pub fn column(&self) -> usize {
        match self {
            Target::L1Distance => col::L1,
            Target::Blocking => col::BLOCKING,
            Target::ExecGap => col::EXEC_GAP,
        }
    }
}

/// Order of the bound on the distance to the optimum: `-min(1/4, (1 - alpha)/2)`
/// with two allocation levels in use, `-1/2` with one.
pub fn theoretical_exponent(support_size: usize, alpha: f64) -> f64 {
    if support_size >= 2 {
        -(0.25f64).min((1.0 - alpha) / 2.0)
    } else {
        -0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub theoretical_exponent: f64,
    /// `(n, metric)` pairs used in the fit.
    pub points: Vec<(usize, f64)>,
    /// Sizes whose metric was not positive and so had no logarithm.
    pub dropped: Vec<usize>,
}

/// Least squares of `ln(metric)` on `ln(n)`.
pub fn fit(points: &[(usize, f64)], theoretical_exponent: f64) -> Result<ConvergenceFit, CliError> {
    let (kept, dropped): (Vec<_>, Vec<_>) =
        points.iter().partition(|(_, v)| *v > 0.0 && v.is_finite());
    let dropped: Vec<usize> = dropped.into_iter().map(|(n, _)| n).collect();
    if kept.len() < MIN_FIT_POINTS {
        return Err(CliError::DegenerateFit(format!(
            "{} usable points (need {MIN_FIT_POINTS}); dropped n = {dropped:?} at or below zero",
            kept.len()
        )));
    }
    let xs: Vec<f64> = kept.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|(_, v)| v.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CliError::DegenerateFit("all points share one n".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(ConvergenceFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        theoretical_exponent,
        points: kept,
        dropped,
    })
}

/// No step up along the grid exceeds `k` standard errors of the difference.
pub fn decreasing_up_to_noise(means: &[f64], stderrs: &[f64], k: f64) -> bool {
    means.windows(2).zip(stderrs.windows(2)).all(|(m, s)| {
        let noise = k * (s[0] * s[0] + s[1] * s[1]).sqrt();
        m[1] < m[0] + noise
    })
}
