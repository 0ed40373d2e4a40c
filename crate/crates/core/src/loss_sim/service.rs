use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};

/// Inherent (single-server) job size distributions, all with unit mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceDist {
    Exponential,
    Deterministic,
    /// With probability `first_prob` an Erlang-1, otherwise an Erlang-2,
    /// both with phase rate `rate`.
    MixedErlang {
        first_prob: f64,
        rate: f64,
    },
    /// `P(Y <= y) = 1 - (y / scale)^(-shape)` for `y >= scale`.
    Pareto {
        shape: f64,
        scale: f64,
    },
}

impl ServiceDist {
    /// Erlang-1/Erlang-2 mixture with weights 0.4/0.6 and phase rate 1.6.
    pub const MIXED_ERLANG: ServiceDist = ServiceDist::MixedErlang {
        first_prob: 0.4,
        rate: 1.6,
    };
    /// Shape 3/2 on `[1/3, inf)`.
    pub const PARETO: ServiceDist = ServiceDist::Pareto {
        shape: 1.5,
        scale: 1.0 / 3.0,
    };

    pub fn mean(&self) -> f64 {
        match *self {
            ServiceDist::Exponential | ServiceDist::Deterministic => 1.0,
            ServiceDist::MixedErlang { first_prob, rate } => {
                (first_prob + 2.0 * (1.0 - first_prob)) / rate
            }
            ServiceDist::Pareto { shape, scale } => shape * scale / (shape - 1.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ServiceDist::Exponential => "exp",
            ServiceDist::Deterministic => "det",
            ServiceDist::MixedErlang { .. } => "mixed_erlang",
            ServiceDist::Pareto { .. } => "pareto",
        }
    }

    pub fn from_name(name: &str) -> Option<ServiceDist> {
        match name {
            "exp" | "exponential" => Some(ServiceDist::Exponential),
            "det" | "deterministic" => Some(ServiceDist::Deterministic),
            "mixed_erlang" | "mixed-erlang" => Some(ServiceDist::MIXED_ERLANG),
            "pareto" => Some(ServiceDist::PARETO),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ServiceDist::Exponential => rng.sample(Exp1),
            ServiceDist::Deterministic => 1.0,
            ServiceDist::MixedErlang { first_prob, rate } => {
                let phases = if rng.random::<f64>() < first_prob {
                    1
                } else {
                    2
                };
                let total: f64 = (0..phases).map(|_| -> f64 { rng.sample(Exp1) }).sum();
                total / rate
            }
            ServiceDist::Pareto { shape, scale } => {
                let u: f64 = Open01.sample(rng);
                pareto_quantile(shape, scale, u)
            }
        }
    }
}

/// Inverse of the Pareto survival function: `scale * u^(-1/shape)`.
pub(crate) fn pareto_quantile(shape: f64, scale: f64, u: f64) -> f64 {
    scale * u.powf(-1.0 / shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_unit_mean() {
        for dist in [
            ServiceDist::Exponential,
            ServiceDist::Deterministic,
            ServiceDist::MIXED_ERLANG,
            ServiceDist::PARETO,
        ] {
            assert!((dist.mean() - 1.0).abs() < 1e-9, "{dist:?}");
            assert_eq!(ServiceDist::from_name(dist.name()), Some(dist));
        }
    }

    #[test]
    fn deterministic_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(ServiceDist::Deterministic.sample(&mut rng), 1.0);
        }
    }

    #[test]
    fn pareto_minimum_and_cdf() {
        assert!((pareto_quantile(1.5, 1.0 / 3.0, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        // P(Y <= y) = 1 - (3y)^(-3/2) at the sampled quantile
        let y = pareto_quantile(1.5, 1.0 / 3.0, 0.25);
        assert!((1.0 - (3.0 * y).powf(-1.5) - 0.75).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            assert!(ServiceDist::PARETO.sample(&mut rng) >= 1.0 / 3.0);
        }
    }

    #[test]
    fn mixed_erlang_empirical_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000_000;
        let mean: f64 = (0..n)
            .map(|_| ServiceDist::MIXED_ERLANG.sample(&mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.002, "{mean}");
    }
}
