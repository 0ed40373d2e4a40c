//! Flat `key = value` experiment files.
//!
//! ```text
//! # Table 1, sublinear rows
//! name = table1
//! speedup.sublinear = 1,1.8,2.5,3,3.4
//! speedup.linear = linear:5
//! regimes = 0:0.2, 0.5:0.1, 0.667:0.1
//! n_grid = 4000
//! schemes = greedy_pstar
//! services = exp, det, mixed_erlang, pareto
//! replications = 5
//! ```
//!
//! `#` starts a comment. Every key may appear once. See the README for the
//! full list of keys and defaults.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use moldable::loss_sim::DEFAULT_BATCHES;
use moldable::{ArrivalRate, Scheme, ServiceDist, SpeedupFunction};

use crate::{parse, CliError};

pub const DEFAULT_N_GRID: [usize; 6] = [250, 500, 1000, 2000, 4000, 8000];
pub const DEFAULT_REPLICATIONS: usize = 5;
pub const DEFAULT_TOTAL_ARRIVALS: u64 = 1_000_000;
pub const PAPER_TOTAL_ARRIVALS: u64 = 5_000_000;
pub const PAPER_REPLICATIONS: usize = 100;

/// One grid of simulation cells: every combination of speed-up, rate, `n`,
/// scheme, and service distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    /// Labelled speed-up functions, in label order.
    pub speedups: Vec<(String, SpeedupFunction)>,
    pub rates: Vec<ArrivalRate>,
    pub n_grid: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub services: Vec<ServiceDist>,
    pub replications: usize,
    pub total_arrivals: u64,
    pub warmup_arrivals: u64,
    pub seed: u64,
    pub ssc_monitor: bool,
    pub batches: usize,
    pub output_dir: PathBuf,
}

const KEYS: [&str; 14] = [
    "name",
    "speedup",
    "regimes",
    "lambdas",
    "n_grid",
    "schemes",
    "services",
    "replications",
    "total_arrivals",
    "warmup_arrivals",
    "seed",
    "ssc_monitor",
    "batches",
    "output_dir",
];

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into());
        Self::parse(&text, &stem, &path.display().to_string())
    }

    /// Parses config text; `default_name` is used when `name` is absent and
    /// `origin` labels errors.
    pub fn parse(text: &str, default_name: &str, origin: &str) -> Result<Self, CliError> {
        let mut seen = BTreeSet::new();
        let mut spec = ExperimentSpec {
            name: default_name.to_string(),
            speedups: Vec::new(),
            rates: Vec::new(),
            n_grid: DEFAULT_N_GRID.to_vec(),
            schemes: vec![Scheme::GreedyPStar],
            services: vec![ServiceDist::Exponential],
            replications: DEFAULT_REPLICATIONS,
            total_arrivals: DEFAULT_TOTAL_ARRIVALS,
            warmup_arrivals: 0,
            seed: 0,
            ssc_monitor: false,
            batches: DEFAULT_BATCHES,
            output_dir: PathBuf::from("out"),
        };
        let mut warmup = None;

        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Config {
                path: origin.to_string(),
                line: k + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .map(|(a, b)| (a.trim(), b.trim()))
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let base = key.split('.').next().unwrap();
            if !KEYS.contains(&base) || (base != "speedup" && key != base) {
                return Err(err(format!("unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            let wrap = |e: CliError| err(e.to_string());
            let int = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| err(format!("{key} must be a nonnegative integer")))
            };
            match base {
                "name" => spec.name = value.to_string(),
                "speedup" => {
                    let label = key.strip_prefix("speedup.").unwrap_or("default");
                    if label.is_empty() {
                        return Err(err("empty speed-up label".into()));
                    }
                    spec.speedups
                        .push((label.to_string(), parse::speedup(value).map_err(wrap)?));
                }
                "regimes" => spec.rates.extend(
                    parse::regimes(value)
                        .map_err(wrap)?
                        .into_iter()
                        .map(ArrivalRate::Regime),
                ),
                "lambdas" => spec.rates.extend(
                    parse::f64_list(value)
                        .map_err(wrap)?
                        .into_iter()
                        .map(ArrivalRate::Fixed),
                ),
                "n_grid" => spec.n_grid = parse::usize_list(value).map_err(wrap)?,
                "schemes" => {
                    spec.schemes = value
                        .split(',')
                        .map(parse::scheme)
                        .collect::<Result<_, _>>()
                        .map_err(wrap)?
                }
                "services" => {
                    spec.services = value
                        .split(',')
                        .map(parse::service)
                        .collect::<Result<_, _>>()
                        .map_err(wrap)?
                }
                "replications" => spec.replications = int(value)? as usize,
                "total_arrivals" => spec.total_arrivals = int(value)?,
                "warmup_arrivals" => warmup = Some(int(value)?),
                "seed" => spec.seed = int(value)?,
                "ssc_monitor" => spec.ssc_monitor = parse::bool_value(value).map_err(wrap)?,
                "batches" => spec.batches = int(value)? as usize,
                "output_dir" => spec.output_dir = PathBuf::from(value),
                _ => unreachable!(),
            }
        }
        spec.warmup_arrivals = warmup.unwrap_or(spec.total_arrivals / 5);
        spec.speedups.sort_by(|a, b| a.0.cmp(&b.0));
        spec.validate()?;
        Ok(spec)
    }

    /// 5 * 10^6 arrivals per run and 100 replications.
    pub fn paper_scale(mut self) -> Self {
        self.total_arrivals = PAPER_TOTAL_ARRIVALS;
        self.warmup_arrivals = PAPER_TOTAL_ARRIVALS / 5;
        self.replications = PAPER_REPLICATIONS;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| {
            Err(CliError::Validation(format!(
                "experiment {}: {m}",
                self.name
            )))
        };
        if self.speedups.is_empty() {
            return fail("no speed-up function given".into());
        }
        if self.rates.is_empty() {
            return fail("need regimes or lambdas".into());
        }
        if self.n_grid.is_empty() {
            return fail("n_grid is empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] == 0 {
            return fail("n_grid must be positive and strictly ascending".into());
        }
        if self.schemes.is_empty() || self.services.is_empty() {
            return fail("need at least one scheme and one service distribution".into());
        }
        if self.replications == 0 {
            return fail("replications must be positive".into());
        }
        if self.warmup_arrivals >= self.total_arrivals {
            return fail(format!(
                "warmup_arrivals {} must be below total_arrivals {}",
                self.warmup_arrivals, self.total_arrivals
            ));
        }
        for (label, s) in &self.speedups {
            for &n in &self.n_grid {
                if s.degree() > n {
                    return fail(format!(
                        "speed-up {label} has degree {} > n = {n}",
                        s.degree()
                    ));
                }
                for rate in &self.rates {
                    let lambda = rate.lambda(n)?;
                    moldable::solve_p(s, lambda)?;
                }
            }
        }
        Ok(())
    }
}
