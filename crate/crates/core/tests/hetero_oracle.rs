mod common;

use common::{random_speedup, sublinear};
use moldable::{capacity_value, solve_hetero, solve_p, SpeedupFunction, WorkloadClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const GRID: usize = 10_000;

/// `f_j(k * STEP)` for `k = 0..=GRID`, infinite below the class load.
fn tabulate(c: &WorkloadClass, normalizer: f64) -> Vec<f64> {
    (0..=GRID)
        .map(|k| {
            let b = k as f64 * STEP;
            if b < c.load() {
                f64::INFINITY
            } else {
                capacity_value(&c.speedup, c.load(), b, normalizer).unwrap()
            }
        })
        .collect()
}

/// Exhaustive search over grid reservations using the whole pool.
fn grid_search(classes: &[WorkloadClass]) -> f64 {
    let normalizer: f64 = classes.iter().map(|c| c.arrival_share).sum();
    let f: Vec<Vec<f64>> = classes.iter().map(|c| tabulate(c, normalizer)).collect();
    match f.len() {
        2 => (0..=GRID)
            .map(|k| f[0][k] + f[1][GRID - k])
            .fold(f64::INFINITY, f64::min),
        3 => {
            let mut best = f64::INFINITY;
            for k1 in 0..=GRID {
                if f[0][k1].is_infinite() {
                    continue;
                }
                for k2 in 0..=GRID - k1 {
                    best = best.min(f[0][k1] + f[1][k2] + f[2][GRID - k1 - k2]);
                }
            }
            best
        }
        _ => unreachable!(),
    }
}

fn random_classes(rng: &mut ChaCha8Rng, count: usize) -> Vec<WorkloadClass> {
    let total = rng.random_range(0.2..=0.9);
    let mut weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.1..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w *= total / sum);
    weights
        .into_iter()
        .map(|rho| {
            let share = rng.random_range(0.2..2.0);
            WorkloadClass::new(share, rho / share, random_speedup(rng, 8))
        })
        .collect()
}

#[test]
fn matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..50 {
        let classes = random_classes(&mut rng, if case < 25 { 2 } else { 3 });
        let sol = solve_hetero(&classes).unwrap();
        let grid = grid_search(&classes);
        assert!(
            (sol.total_objective - grid).abs() <= 1e-3,
            "case {case}: {} vs grid {grid}",
            sol.total_objective
        );
        // the exact optimum can only beat the grid
        assert!(sol.total_objective <= grid + 1e-12, "case {case}");
        let used: f64 = sol.reservations.iter().sum();
        assert!(used <= 1.0 + 1e-12);
        for (c, b) in classes.iter().zip(&sol.reservations) {
            assert!(*b >= c.load() - 1e-15);
        }
    }
}

#[test]
fn two_class_example() {
    let classes = vec![
        WorkloadClass::new(1.0, 0.3, SpeedupFunction::validate(&[1.0, 2.0]).unwrap()),
        WorkloadClass::new(1.0, 0.3, SpeedupFunction::validate(&[1.0, 1.5]).unwrap()),
    ];
    let sol = solve_hetero(&classes).unwrap();
    // D* = 1/2 for the linear class at any rate, so only the second class
    // gains from spare servers, up to its flat point 0.3 * 2 / 1.5
    assert!((sol.reservations[1] - 0.4).abs() < 1e-12);
    assert!((sol.total_objective - (0.15 * 0.5 + 0.15 / 1.5)).abs() < 1e-12);
    assert!((sol.total_objective - grid_search(&classes)).abs() <= 1e-3);
}

#[test]
fn capacity_value_is_nonincreasing_and_convex() {
    let s = sublinear();
    let rho = 0.3;
    let f: Vec<f64> = (0..=GRID)
        .map(|k| rho + k as f64 * (1.0 - rho) / GRID as f64)
        .map(|b| capacity_value(&s, rho, b, 1.0).unwrap())
        .collect();
    for w in f.windows(2) {
        assert!(w[1] <= w[0] + 1e-15);
    }
    for w in f.windows(3) {
        assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12);
    }
}

#[test]
fn single_class_reduces_to_solve_p() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let s = random_speedup(&mut rng, 10);
        let lambda = rng.random_range(0.01..0.99);
        let sol = solve_hetero(&[WorkloadClass::new(lambda, 1.0, s.clone())]).unwrap();
        let opt = solve_p(&s, lambda).unwrap();
        // the reservation may stop at the flat point of f, below 1, so
        // compare the policy and objective rather than the rescaled rate
        let class = &sol.per_class[0];
        for (a, b) in class.normalized.p_star.iter().zip(&opt.p_star) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(class.normalized.support, opt.support);
        assert_eq!(sol.total_objective, opt.d_star);
    }
}
