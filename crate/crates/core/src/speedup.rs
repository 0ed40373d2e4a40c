//! Speed-up functions for moldable jobs and arrival-rate scaling regimes.
//!
//! A speed-up function maps the number of servers `i` granted to a job onto
//! the factor `s_i` by which its execution time shrinks. Valid functions
//! start at `s_1 = 1`, are strictly increasing, and have a nonincreasing
//! per-server ratio `s_i / i`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpeedupError {
    #[error("speed-up sequence is empty")]
    Empty,
    #[error("speed-up value at index {index} is not finite and positive: {value}")]
    NotPositive { index: usize, value: f64 },
    #[error("speed-up must start at exactly 1, got {0}")]
    NotStartingAtOne(f64),
    #[error("speed-up is not strictly increasing at index {index} (s_{prev_index} = {prev} >= s_{index} = {next})", prev_index = index - 1)]
    NotStrictlyIncreasing { index: usize, prev: f64, next: f64 },
    #[error("speed-up is not concave at index {index}: s_{index}/{index} = {ratio} exceeds s_{prev_index}/{prev_index} = {prev_ratio}", prev_index = index - 1)]
    NotConcave {
        index: usize,
        prev_ratio: f64,
        ratio: f64,
    },
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("degenerate speed-up: {0}")]
    DegenerateSpeedup(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegimeError {
    #[error("invalid traffic regime: alpha = {alpha}, beta = {beta}")]
    InvalidParameters { alpha: f64, beta: f64 },
    #[error("system size must be at least 1")]
    ZeroSize,
    #[error(
        "regime (alpha = {alpha}, beta = {beta}) gives lambda = {lambda} outside (0, 1) at n = {n}"
    )]
    RegimeInfeasible {
        alpha: f64,
        beta: f64,
        n: u64,
        lambda: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedupClass {
    Linear,
    Sublinear,
}

/// A validated speed-up function `s_1..s_d`.
///
/// Indices in the public API are 1-based, matching the number of servers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupFunction {
    values: Vec<f64>,
}

impl SpeedupFunction {
    /// Validates `values` with exact comparisons. Errors name the first
    /// (1-based) index whose value breaks monotonicity or concavity against
    /// its predecessor.
    pub fn validate(values: &[f64]) -> Result<Self, SpeedupError> {
        if values.is_empty() {
            return Err(SpeedupError::Empty);
        }
        for (k, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(SpeedupError::NotPositive {
                    index: k + 1,
                    value: v,
                });
            }
        }
        if values[0] != 1.0 {
            return Err(SpeedupError::NotStartingAtOne(values[0]));
        }
        for k in 0..values.len() - 1 {
            let (i, prev, next) = (k + 1, values[k], values[k + 1]);
            if prev >= next {
                return Err(SpeedupError::NotStrictlyIncreasing {
                    index: i + 1,
                    prev,
                    next,
                });
            }
            // s_i / i >= s_{i+1} / (i+1), cross-multiplied
            if prev * ((i + 1) as f64) < next * (i as f64) {
                return Err(SpeedupError::NotConcave {
                    index: i + 1,
                    prev_ratio: prev / i as f64,
                    ratio: next / (i + 1) as f64,
                });
            }
        }
        let s = SpeedupFunction {
            values: values.to_vec(),
        };
        debug_assert!(s.iter().all(|(i, v)| v <= i as f64));
        Ok(s)
    }

    /// Linear speed-up `s_i = i` for `i = 1..=d`.
    pub fn linear(d: usize) -> Result<Self, SpeedupError> {
        if d == 0 {
            return Err(SpeedupError::OutOfRange("d must be at least 1".into()));
        }
        Self::validate(&(1..=d).map(|i| i as f64).collect::<Vec<_>>())
    }

    /// Amdahl's law: `s_i = 1 / ((1 - p) + p / i)` for parallel fraction `p`.
    pub fn amdahl(p: f64, d: usize) -> Result<Self, SpeedupError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SpeedupError::OutOfRange(format!(
                "parallel fraction p = {p} not in [0, 1]"
            )));
        }
        if d == 0 {
            return Err(SpeedupError::OutOfRange("d must be at least 1".into()));
        }
        if p == 0.0 && d > 1 {
            return Err(SpeedupError::DegenerateSpeedup(
                "p = 0 gives a constant speed-up; use d = 1 for serial jobs".into(),
            ));
        }
        let values: Vec<f64> = (1..=d).map(|i| 1.0 / ((1.0 - p) + p / i as f64)).collect();
        Self::validate(&values)
    }

    /// Maximum parallelism degree `d`.
    pub fn degree(&self) -> usize {
        self.values.len()
    }

    /// `s_i` for `1 <= i <= d`; `s_0 = 0`.
    pub fn get(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    /// Per-server efficiency `s_i / i`.
    pub fn ratio(&self, i: usize) -> f64 {
        self.values[i - 1] / i as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(i, s_i)` pairs with 1-based `i`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(k, &v)| (k + 1, v))
    }

    pub fn classify(&self) -> SpeedupClass {
        if self.iter().all(|(i, v)| v == i as f64) {
            SpeedupClass::Linear
        } else {
            SpeedupClass::Sublinear
        }
    }
}

impl fmt::Display for SpeedupFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, v) in self.values.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Arrival-rate scaling `lambda(n) = 1 - beta * n^(-alpha)`.
///
/// `alpha = 0` is the mean-field regime, `alpha = 1/2` Halfin-Whitt, and
/// `alpha >= 1` the non-degenerate slowdown regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficRegime {
    alpha: f64,
    beta: f64,
}

impl TrafficRegime {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, RegimeError> {
        if !(alpha.is_finite() && alpha >= 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(RegimeError::InvalidParameters { alpha, beta });
        }
        Ok(TrafficRegime { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda_of(&self, n: u64) -> Result<f64, RegimeError> {
        if n == 0 {
            return Err(RegimeError::ZeroSize);
        }
        let lambda = 1.0 - self.beta * (n as f64).powf(-self.alpha);
        if lambda > 0.0 && lambda < 1.0 {
            Ok(lambda)
        } else {
            Err(RegimeError::RegimeInfeasible {
                alpha: self.alpha,
                beta: self.beta,
                n,
                lambda,
            })
        }
    }
}
