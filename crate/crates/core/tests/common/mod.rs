#![allow(dead_code)]

use moldable::SpeedupFunction;
use rand::Rng;

pub fn sublinear() -> SpeedupFunction {
    SpeedupFunction::validate(&[1.0, 1.8, 2.5, 3.0, 3.4]).unwrap()
}

/// Random valid speed-up of degree `1..=max_d`: nonincreasing increments in
/// `(0, 1]`, with occasional exact ties and the linear function.
pub fn random_speedup<R: Rng>(rng: &mut R, max_d: usize) -> SpeedupFunction {
    let d = rng.random_range(1..=max_d);
    if rng.random_bool(0.1) {
        return SpeedupFunction::linear(d).unwrap();
    }
    let mut inc: Vec<f64> = (1..d).map(|_| rng.random_range(0.01..=1.0)).collect();
    inc.sort_by(|a, b| b.total_cmp(a));
    if d > 2 && rng.random_bool(0.2) {
        let k = rng.random_range(1..d - 1);
        inc[k] = inc[k - 1];
    }
    let mut s = vec![1.0];
    for v in inc {
        s.push(s.last().unwrap() + v);
    }
    SpeedupFunction::validate(&s).unwrap()
}

/// Random rate in `(0, 1]`, landing exactly on a ratio `s_i / i` a fifth of
/// the time.
pub fn random_lambda<R: Rng>(rng: &mut R, s: &SpeedupFunction) -> f64 {
    if rng.random_bool(0.2) {
        s.ratio(rng.random_range(1..=s.degree()))
    } else {
        rng.random_range(1e-3..=1.0)
    }
}
