//! Optimal server allocation for moldable jobs.
//!
//! The target steady state is the solution `y*` of the linear program
//!
//! ```text
//! minimize    (1/lambda) * sum_i y_i
//! subject to  sum_i s_i * y_i  = lambda
//!             sum_i i   * y_i <= 1
//!             y >= 0
//! ```
//!
//! where `y_i` is the expected number of jobs running on `i` servers, per
//! server. Concavity of the speed-up function forces an optimum supported on
//! at most two consecutive indices, which [`solve_p`] computes in closed
//! form. [`enumerate_lp_oracle`] reaches the same optimum by brute-force
//! enumeration of basic feasible solutions and is kept independent of the
//! closed form so the two can be checked against each other.

use thiserror::Error;

use crate::speedup::SpeedupFunction;

/// Relative tolerance used to decide that `lambda` sits exactly on a ratio
/// `s_i / i`.
pub const DEFAULT_RATIO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    #[error("normalized arrival rate {0} is infeasible; need 0 < lambda <= 1")]
    InfeasibleRate(f64),
    #[error("capacity {capacity} is below the class load {load}")]
    InfeasibleCapacity { load: f64, capacity: f64 },
    #[error("total load {0} is not below 1")]
    Overloaded(f64),
    #[error("invalid workload class {index}: {reason}")]
    InvalidClass { index: usize, reason: String },
}

/// Which branch of the closed form produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimalCase {
    /// `lambda < s_d / d`: every job on `d` servers, capacity slack.
    BelowMinRatio,
    /// `lambda == s_i / i` for some `i`; support at the largest such `i`.
    AtRatio,
    /// `s_{i+1}/(i+1) < lambda < s_i/i`: two-point support `{i, i+1}`.
    Between,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalAllocation {
    /// `y*_i` at position `i - 1`.
    pub y_star: Vec<f64>,
    /// `p*_i = s_i * y*_i / lambda` at position `i - 1`.
    pub p_star: Vec<f64>,
    /// Indices (1-based) with `y*_i > 0`, ascending.
    pub support: Vec<usize>,
    pub i1: usize,
    pub i2: usize,
    /// Optimal mean execution time `(1/lambda) * sum_i y*_i`.
    pub d_star: f64,
    pub lambda: f64,
    pub case: OptimalCase,
    /// Whether the optimum is known to be the unique minimizer.
    pub unique: bool,
}

impl OptimalAllocation {
    pub fn degree(&self) -> usize {
        self.y_star.len()
    }

    /// Sum of `i * y*_i`, the fraction of servers busy at the optimum.
    pub fn occupancy(&self) -> f64 {
        self.y_star
            .iter()
            .enumerate()
            .map(|(k, y)| (k + 1) as f64 * y)
            .sum()
    }
}

/// Closed-form optimum with the default ratio tolerance.
pub fn solve_p(s: &SpeedupFunction, lambda: f64) -> Result<OptimalAllocation, AllocError> {
    solve_p_with_tolerance(s, lambda, DEFAULT_RATIO_TOLERANCE)
}

/// Closed-form optimum. `lambda` within relative distance `tol` of a ratio
/// `s_i / i` is treated as sitting on it.
pub fn solve_p_with_tolerance(
    s: &SpeedupFunction,
    lambda: f64,
    tol: f64,
) -> Result<OptimalAllocation, AllocError> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(AllocError::InfeasibleRate(lambda));
    }
    let d = s.degree();
    let mut y = vec![0.0; d];

    let on_ratio = (1..=d)
        .rev()
        .find(|&i| (lambda - s.ratio(i)).abs() <= tol * lambda.max(s.ratio(i)));

    let case = if let Some(i1) = on_ratio {
        y[i1 - 1] = lambda / s.get(i1);
        OptimalCase::AtRatio
    } else if lambda < s.ratio(d) {
        y[d - 1] = lambda / s.get(d);
        OptimalCase::BelowMinRatio
    } else {
        // Ratios are nonincreasing and lambda equals none of them, so exactly
        // one nonempty open interval (r_{i+1}, r_i) contains it.
        let i = (1..d)
            .rev()
            .find(|&i| s.ratio(i + 1) < lambda && lambda < s.ratio(i))
            .expect("lambda lies strictly between two consecutive ratios");
        let (hi, lo) = (s.ratio(i), s.ratio(i + 1));
        y[i - 1] = (lambda - lo) / i as f64 / (hi - lo);
        y[i] = (hi - lambda) / (i + 1) as f64 / (hi - lo);
        OptimalCase::Between
    };

    let support: Vec<usize> = (1..=d).filter(|&i| y[i - 1] > 0.0).collect();
    let i1 = support[0];
    let i2 = *support.last().unwrap();
    // Unique iff some line supporting the hull of (j, s_j) touches it only
    // on the support.
    let inc = |i: usize| s.get(i) - s.get(i - 1);
    let unique = match case {
        OptimalCase::BelowMinRatio => true,
        OptimalCase::AtRatio => i1 == d || inc(i1) > inc(i1 + 1),
        OptimalCase::Between => inc(i1) > inc(i2) && (i2 + 1 > d || inc(i2) > inc(i2 + 1)),
    };
    let p_star: Vec<f64> = y
        .iter()
        .enumerate()
        .map(|(k, &yi)| s.get(k + 1) * yi / lambda)
        .collect();
    let d_star = y.iter().sum::<f64>() / lambda;

    Ok(OptimalAllocation {
        y_star: y,
        p_star,
        support,
        i1,
        i2,
        d_star,
        lambda,
        case,
        unique,
    })
}

/// Brute-force optimum over all basic feasible solutions.
///
/// Candidates are single-index supports `y_i = lambda / s_i` (kept when the
/// capacity constraint holds) and every pair `{i, j}` solving the rate and
/// capacity constraints with equality. Returns a minimizing `y` and its
/// objective `(1/lambda) * sum_i y_i`.
pub fn enumerate_lp_oracle(
    s: &SpeedupFunction,
    lambda: f64,
) -> Result<(Vec<f64>, f64), AllocError> {
    const FEAS_TOL: f64 = 1e-12;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(AllocError::InfeasibleRate(lambda));
    }
    let d = s.degree();
    let sv = s.values();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |y: Vec<f64>| {
        let obj = y.iter().sum::<f64>() / lambda;
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((y, obj));
        }
    };

    for i in 0..d {
        let yi = lambda / sv[i];
        if (i + 1) as f64 * yi <= 1.0 + FEAS_TOL {
            let mut y = vec![0.0; d];
            y[i] = yi;
            consider(y);
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            let (ci, cj) = ((i + 1) as f64, (j + 1) as f64);
            let det = sv[i] * cj - sv[j] * ci;
            if det == 0.0 {
                continue;
            }
            let yi = (lambda * cj - sv[j]) / det;
            let yj = (sv[i] - lambda * ci) / det;
            if yi < -FEAS_TOL || yj < -FEAS_TOL {
                continue;
            }
            let mut y = vec![0.0; d];
            y[i] = yi.max(0.0);
            y[j] = yj.max(0.0);
            consider(y);
        }
    }
    // (lambda, 0, .., 0) is always feasible for lambda <= 1.
    Ok(best.expect("at least one basic feasible solution"))
}

/// One job class of a heterogeneous workload.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadClass {
    /// Class arrival rate per server.
    pub arrival_share: f64,
    /// Mean inherent (single-server) execution time.
    pub mean_size: f64,
    pub speedup: SpeedupFunction,
}

impl WorkloadClass {
    pub fn new(arrival_share: f64, mean_size: f64, speedup: SpeedupFunction) -> Self {
        WorkloadClass {
            arrival_share,
            mean_size,
            speedup,
        }
    }

    /// Offered load `lambda_j / mu_j`.
    pub fn load(&self) -> f64 {
        self.arrival_share * self.mean_size
    }
}

/// Optimal mean-job-count cost `f(b)` of serving load `rho` within a server
/// fraction `b`, divided by `normalizer` (the aggregate arrival rate).
///
/// Rescaling `y = b * z` turns the class problem into the single-class
/// program at rate `rho / b`, so `f(b) = (rho / normalizer) * D*(rho / b)`.
pub fn capacity_value(
    s: &SpeedupFunction,
    rho: f64,
    b: f64,
    normalizer: f64,
) -> Result<f64, AllocError> {
    if rho.is_nan() || rho <= 0.0 {
        return Err(AllocError::InfeasibleRate(rho));
    }
    if b.is_nan() || b < rho {
        return Err(AllocError::InfeasibleCapacity {
            load: rho,
            capacity: b,
        });
    }
    let opt = solve_p(s, rho / b)?;
    Ok(rho / normalizer * opt.d_star)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAllocation {
    /// Server fraction `b*_j` reserved for the class.
    pub reservation: f64,
    /// Single-class optimum at rate `rho_j / b*_j`; its `p_star` is the
    /// class policy.
    pub normalized: OptimalAllocation,
    /// Per-server job counts `y*_{i,j} = b*_j * normalized.y_star[i]`.
    pub y: Vec<f64>,
    /// `f_j(b*_j)`.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroSolution {
    pub reservations: Vec<f64>,
    pub per_class: Vec<ClassAllocation>,
    /// `sum_j f_j(b*_j)`, normalized by the aggregate arrival rate.
    pub total_objective: f64,
}

struct Segment {
    length: f64,
    slope: f64,
}

/// Linear pieces of `f` on `[rho, rho * d / s_d]`; `f` is flat beyond.
fn capacity_segments(
    s: &SpeedupFunction,
    rho: f64,
    normalizer: f64,
) -> Result<Vec<Segment>, AllocError> {
    let mut segs = Vec::new();
    let mut b_prev = rho;
    let mut f_prev = capacity_value(s, rho, rho, normalizer)?;
    for i in 2..=s.degree() {
        let b = (rho * i as f64 / s.get(i)).min(1.0);
        if b <= b_prev {
            continue;
        }
        let f = capacity_value(s, rho, b, normalizer)?;
        segs.push(Segment {
            length: b - b_prev,
            slope: (f - f_prev) / (b - b_prev),
        });
        b_prev = b;
        f_prev = f;
    }
    Ok(segs)
}

/// Splits the server pool among classes to minimize the total normalized
/// mean job count, then solves each class at its reservation.
///
/// Each `f_j` is convex and piecewise linear in `b_j` with breakpoints at
/// `rho_j * i / s_{i,j}`, so the optimum hands out the spare capacity
/// `1 - sum_j rho_j` one linear piece at a time, steepest descent first.
pub fn solve_hetero(classes: &[WorkloadClass]) -> Result<HeteroSolution, AllocError> {
    if classes.is_empty() {
        return Err(AllocError::InvalidClass {
            index: 0,
            reason: "no classes given".into(),
        });
    }
    for (index, c) in classes.iter().enumerate() {
        if !(c.arrival_share > 0.0 && c.mean_size > 0.0 && c.load().is_finite()) {
            return Err(AllocError::InvalidClass {
                index,
                reason: format!(
                    "arrival share {} and mean size {} must be positive",
                    c.arrival_share, c.mean_size
                ),
            });
        }
    }
    let total_load: f64 = classes.iter().map(WorkloadClass::load).sum();
    if total_load.is_nan() || total_load >= 1.0 {
        return Err(AllocError::Overloaded(total_load));
    }
    let normalizer: f64 = classes.iter().map(|c| c.arrival_share).sum();

    let segments = classes
        .iter()
        .map(|c| capacity_segments(&c.speedup, c.load(), normalizer))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reservations: Vec<f64> = classes.iter().map(WorkloadClass::load).collect();
    let mut next = vec![0usize; classes.len()];
    let mut budget = 1.0 - total_load;

    if classes.len() == 1 {
        // f is nonincreasing, so a lone class simply owns the pool
        reservations[0] = 1.0;
        budget = 0.0;
    }
    while budget > 0.0 {
        // Steepest remaining piece; per-class pieces are taken in order.
        let pick = (0..classes.len())
            .filter_map(|j| segments[j].get(next[j]).map(|seg| (j, seg.slope)))
            .filter(|&(_, slope)| slope < 0.0)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, _)) = pick else { break };
        let take = segments[j][next[j]].length.min(budget);
        reservations[j] += take;
        budget -= take;
        next[j] += 1;
    }

    let per_class = classes
        .iter()
        .zip(&reservations)
        .map(|(c, &b)| {
            let rho = c.load();
            let b = b.max(rho);
            let normalized = solve_p(&c.speedup, (rho / b).min(1.0))?;
            let y = normalized.y_star.iter().map(|z| b * z).collect();
            let objective = rho / normalizer * normalized.d_star;
            Ok(ClassAllocation {
                reservation: b,
                normalized,
                y,
                objective,
            })
        })
        .collect::<Result<Vec<_>, AllocError>>()?;
    let total_objective = per_class.iter().map(|c| c.objective).sum();

    Ok(HeteroSolution {
        reservations,
        per_class,
        total_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sublinear() -> SpeedupFunction {
        SpeedupFunction::validate(&[1.0, 1.8, 2.5, 3.0, 3.4]).unwrap()
    }

    fn assert_vec_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn reference_sublinear_point() {
        let opt = solve_p(&sublinear(), 0.8).unwrap();
        assert_eq!(opt.case, OptimalCase::Between);
        assert_vec_close(&opt.y_star, &[0.0, 0.0, 0.2, 0.1, 0.0], 1e-15);
        assert_vec_close(&opt.p_star, &[0.0, 0.0, 0.625, 0.375, 0.0], 1e-15);
        assert!((opt.d_star - 0.375).abs() < 1e-15);
        assert_eq!(opt.support, vec![3, 4]);
        assert_eq!((opt.i1, opt.i2), (3, 4));
    }

    #[test]
    fn reference_linear_point() {
        let opt = solve_p(&SpeedupFunction::linear(5).unwrap(), 0.8).unwrap();
        assert_vec_close(&opt.y_star, &[0.0, 0.0, 0.0, 0.0, 0.16], 1e-15);
        assert!((opt.d_star - 0.2).abs() < 1e-15);
        assert_eq!(opt.support, vec![5]);
    }

    #[test]
    fn boundary_at_last_ratio() {
        let opt = solve_p(&sublinear(), 3.4 / 5.0).unwrap();
        assert_eq!(opt.support, vec![5]);
        assert!((opt.y_star[4] - 0.2).abs() < 1e-15);
        assert!((opt.occupancy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tie_on_equal_ratios_picks_largest_index() {
        // s_2/2 = s_3/3 = 0.9
        let s = SpeedupFunction::validate(&[1.0, 1.8, 2.7, 3.0]).unwrap();
        let opt = solve_p(&s, 0.9).unwrap();
        assert_eq!(opt.case, OptimalCase::AtRatio);
        assert_eq!(opt.support, vec![3]);
        let (_, obj) = enumerate_lp_oracle(&s, 0.9).unwrap();
        assert!((obj - opt.d_star).abs() < 1e-12);
    }

    #[test]
    fn infeasible_rates() {
        for lambda in [0.0, -0.1, 1.1, f64::NAN] {
            assert!(matches!(
                solve_p(&sublinear(), lambda),
                Err(AllocError::InfeasibleRate(_))
            ));
            assert!(enumerate_lp_oracle(&sublinear(), lambda).is_err());
        }
        assert!(solve_p(&sublinear(), 1.0).is_ok());
    }

    #[test]
    fn oracle_small_cases() {
        let (y, obj) = enumerate_lp_oracle(&SpeedupFunction::linear(2).unwrap(), 1.0).unwrap();
        assert_vec_close(&y, &[0.0, 0.5], 1e-15);
        assert!((obj - 0.5).abs() < 1e-15);
        let (_, obj) = enumerate_lp_oracle(&sublinear(), 0.8).unwrap();
        assert!((obj - 0.375).abs() < 1e-12);
    }

    #[test]
    fn uniqueness_flag_follows_strict_concavity() {
        // increments 0.8, 0.8: indices 1..3 collinear, optimum not unique
        let s = SpeedupFunction::validate(&[1.0, 1.8, 2.6]).unwrap();
        let opt = solve_p(&s, 0.88).unwrap();
        assert_eq!(opt.case, OptimalCase::Between);
        assert!(!opt.unique);
        assert!(solve_p(&sublinear(), 0.8).unwrap().unique);
        // on the ratio of a collinear middle point, {1, 3} ties with {2}
        let s = SpeedupFunction::validate(&[1.0, 1.5, 2.0]).unwrap();
        let opt = solve_p(&s, 0.75).unwrap();
        assert_eq!(
            (opt.case, opt.support.clone()),
            (OptimalCase::AtRatio, vec![2])
        );
        assert!(!opt.unique);
        assert!(solve_p(&sublinear(), 0.9).unwrap().unique);
    }

    #[test]
    fn capacity_value_composes_with_oracle() {
        let s = sublinear();
        let f = capacity_value(&s, 0.4, 0.5, 1.0).unwrap();
        let (_, obj) = enumerate_lp_oracle(&s, 0.8).unwrap();
        assert!((f - 0.4 * obj).abs() < 1e-12);
        assert!(capacity_value(&s, 0.4, 0.4, 1.0).unwrap().is_finite());
        assert!(matches!(
            capacity_value(&s, 0.4, 0.3, 1.0),
            Err(AllocError::InfeasibleCapacity { .. })
        ));
    }

    #[test]
    fn capacity_value_flat_when_slack() {
        let s = SpeedupFunction::linear(3).unwrap();
        let rho = 0.2;
        let vals: Vec<f64> = (0..50)
            .map(|k| rho + k as f64 * (1.0 - rho) / 49.0)
            .map(|b| capacity_value(&s, rho, b, 1.0).unwrap())
            .collect();
        for v in &vals {
            assert!((v - rho / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_reduces_to_solve_p() {
        for lambda in [0.3, 0.68, 0.8, 0.95] {
            let s = sublinear();
            let sol = solve_hetero(&[WorkloadClass::new(lambda, 1.0, s.clone())]).unwrap();
            let opt = solve_p(&s, lambda).unwrap();
            assert!(
                (sol.total_objective - opt.d_star).abs() < 1e-12,
                "{lambda}: {} vs {}",
                sol.total_objective,
                opt.d_star
            );
            assert!(sol.reservations[0] <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn hetero_rejects_overload() {
        let s = sublinear();
        let classes = [
            WorkloadClass::new(0.5, 1.0, s.clone()),
            WorkloadClass::new(0.25, 2.0, s),
        ];
        assert!(matches!(
            solve_hetero(&classes),
            Err(AllocError::Overloaded(_))
        ));
        assert!(solve_hetero(&[]).is_err());
    }

    #[test]
    fn hetero_symmetric_classes() {
        let s = sublinear();
        let classes = [
            WorkloadClass::new(0.35, 1.0, s.clone()),
            WorkloadClass::new(0.35, 1.0, s.clone()),
        ];
        let sol = solve_hetero(&classes).unwrap();
        // objective at the symmetric split
        let sym = 2.0 * capacity_value(&s, 0.35, 0.5, 0.7).unwrap();
        assert!((sol.total_objective - sym).abs() < 1e-12);
        for c in &sol.per_class {
            let p: f64 = c.normalized.p_star.iter().sum();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }
}
