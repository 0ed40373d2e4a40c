//! Parsers for the textual values shared by flags and config files.

use moldable::speedup::TrafficRegime;
use moldable::{Scheme, ServiceDist, SpeedupFunction};

use crate::CliError;

fn bad(what: &str, text: &str) -> CliError {
    CliError::Validation(format!("cannot parse {what} from {text:?}"))
}

pub fn f64_value(text: &str) -> Result<f64, CliError> {
    text.trim().parse().map_err(|_| bad("a number", text))
}

pub fn f64_list(text: &str) -> Result<Vec<f64>, CliError> {
    split(text).map(f64_value).collect()
}

pub fn usize_list(text: &str) -> Result<Vec<usize>, CliError> {
    split(text)
        .map(|t| t.parse().map_err(|_| bad("a positive integer", t)))
        .collect()
}

fn split(text: &str) -> impl Iterator<Item = &str> {
    text.split(',').map(str::trim).filter(|t| !t.is_empty())
}

/// `1,1.8,2.5`, `linear:d`, or `amdahl:p:d`.
pub fn speedup(text: &str) -> Result<SpeedupFunction, CliError> {
    let text = text.trim();
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let degree = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| bad("a parallelism degree", t))
    };
    Ok(match parts.as_slice() {
        ["linear", d] => SpeedupFunction::linear(degree(d)?)?,
        ["amdahl", p, d] => SpeedupFunction::amdahl(f64_value(p)?, degree(d)?)?,
        [list] => SpeedupFunction::validate(&f64_list(list)?)?,
        _ => return Err(bad("a speed-up function", text)),
    })
}

/// `alpha:beta`.
pub fn regime(text: &str) -> Result<TrafficRegime, CliError> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| bad("alpha:beta", text))?;
    Ok(TrafficRegime::new(f64_value(a)?, f64_value(b)?)?)
}

pub fn regimes(text: &str) -> Result<Vec<TrafficRegime>, CliError> {
    split(text).map(regime).collect()
}

pub fn scheme(text: &str) -> Result<Scheme, CliError> {
    Scheme::from_name(text.trim()).ok_or_else(|| bad("a scheme (greedy_pstar, greedy)", text))
}

pub fn service(text: &str) -> Result<ServiceDist, CliError> {
    ServiceDist::from_name(text.trim()).ok_or_else(|| {
        bad(
            "a service distribution (exp, det, mixed_erlang, pareto)",
            text,
        )
    })
}

pub fn bool_value(text: &str) -> Result<bool, CliError> {
    match text.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad("a boolean", text)),
    }
}

/// Shortest readable form: at most 12 decimals, trailing zeros dropped.
pub fn short(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speedup_forms() {
        assert_eq!(speedup("1, 1.8, 2.5").unwrap().values(), &[1.0, 1.8, 2.5]);
        assert_eq!(speedup("linear:3").unwrap().values(), &[1.0, 2.0, 3.0]);
        assert_eq!(speedup("amdahl:1:2").unwrap().degree(), 2);
        assert!(matches!(speedup("1,3"), Err(CliError::Speedup(_))));
        assert!(speedup("cubic:3").is_err());
    }

    #[test]
    fn regimes_and_names() {
        let r = regimes("0:0.2, 0.5:0.1").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1].alpha(), 0.5);
        assert!(regime("0.5").is_err());
        assert_eq!(scheme("greedy").unwrap(), Scheme::Greedy);
        assert!(service("gamma").is_err());
    }

    #[test]
    fn short_numbers() {
        assert_eq!(short(0.2 + 1e-17), "0.2");
        assert_eq!(short(0.375), "0.375");
        assert_eq!(short(0.0), "0");
        assert_eq!(short(-1e-15), "0");
        assert_eq!(short(5.0), "5");
    }
}
