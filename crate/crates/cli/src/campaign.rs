//! Simulation campaigns: the cross product of an experiment's grid, run one
//! cell at a time with replications spread over the worker pool.

use std::cmp::Ordering;
use std::io::Write;

use moldable::loss_sim::run_replication;
use moldable::{
    solve_p, ArrivalRate, ReplicatedMetrics, Scheme, ServiceDist, SimConfig, SimError,
    SpeedupFunction,
};
use rayon::prelude::*;

use crate::config::ExperimentSpec;
use crate::output::CsvSink;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub speedup_label: String,
    pub speedup: SpeedupFunction,
    pub rate: ArrivalRate,
    pub n: usize,
    pub scheme: Scheme,
    pub service: ServiceDist,
}

impl Cell {
    /// `(alpha, beta)` for regime cells.
    pub fn regime(&self) -> Option<(f64, f64)> {
        match self.rate {
            ArrivalRate::Regime(r) => Some((r.alpha(), r.beta())),
            ArrivalRate::Fixed(_) => None,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.rate
            .lambda(self.n)
            .expect("validated with the experiment")
    }

    /// Same cell at another system size: the key of a convergence series.
    pub fn same_series(&self, other: &Cell) -> bool {
        self.speedup_label == other.speedup_label
            && self.rate == other.rate
            && self.scheme == other.scheme
            && self.service == other.service
    }

    pub fn series_label(&self) -> String {
        let rate = match self.regime() {
            Some((a, b)) => format!("alpha={a} beta={b}"),
            None => format!("lambda={}", self.lambda()),
        };
        format!(
            "{} {rate} {} {}",
            self.speedup_label,
            self.scheme.name(),
            self.service.name()
        )
    }

    fn config(&self, spec: &ExperimentSpec, monitor: bool) -> SimConfig {
        let mut c = SimConfig::new(
            self.n,
            self.speedup.clone(),
            self.rate,
            self.scheme,
            self.service,
        )
        .with_seed(spec.seed)
        .with_ssc_monitor(monitor);
        c.total_arrivals = spec.total_arrivals;
        c.warmup_arrivals = spec.warmup_arrivals;
        c.batches = spec.batches;
        c
    }
}

fn rate_key(r: &ArrivalRate) -> (u8, f64, f64) {
    match r {
        ArrivalRate::Regime(g) => (0, g.alpha(), g.beta()),
        ArrivalRate::Fixed(l) => (1, *l, 0.0),
    }
}

fn cell_order(a: &Cell, b: &Cell) -> Ordering {
    let (ka, kb) = (rate_key(&a.rate), rate_key(&b.rate));
    a.speedup_label
        .cmp(&b.speedup_label)
        .then(ka.0.cmp(&kb.0))
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
        .then(a.scheme.cmp(&b.scheme))
        .then(a.service.name().cmp(b.service.name()))
        .then(a.n.cmp(&b.n))
}

/// Every cell of the grid, sorted by (speed-up, rate, scheme, service, n).
pub fn cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    for (label, s) in &spec.speedups {
        for rate in &spec.rates {
            for &n in &spec.n_grid {
                for &scheme in &spec.schemes {
                    for &service in &spec.services {
                        out.push(Cell {
                            speedup_label: label.clone(),
                            speedup: s.clone(),
                            rate: *rate,
                            n,
                            scheme,
                            service,
                        });
                    }
                }
            }
        }
    }
    out.sort_by(cell_order);
    out.dedup_by(|a, b| cell_order(a, b) == Ordering::Equal);
    out
}

/// State space collapse breach seen in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SscRecord {
    pub replication: u64,
    pub error: SimError,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub d_star: f64,
    pub support: Vec<usize>,
    pub metrics: ReplicatedMetrics,
    /// `None` when the monitor was off for this cell.
    pub ssc: Option<Vec<SscRecord>>,
}

impl CellResult {
    pub fn exec_gap(&self) -> f64 {
        (self.metrics.mean_exec_time.mean - self.d_star).abs()
    }
}

/// Runs every replication of one cell. With the monitor on, a replication
/// that breaches collapse is recorded and rerun unmonitored so the cell still
/// gets its metrics.
pub fn run_cell(spec: &ExperimentSpec, cell: &Cell) -> Result<CellResult, CliError> {
    let monitor = spec.ssc_monitor && cell.scheme == Scheme::GreedyPStar;
    let plain = cell.config(spec, false);
    let watched = cell.config(spec, true);
    let policy = solve_p(&cell.speedup, cell.lambda())?;
    let outcomes = (0..spec.replications as u64)
        .into_par_iter()
        .map(|r| {
            if !monitor {
                return run_replication(&plain, r).map(|m| (m, None));
            }
            match run_replication(&watched, r) {
                Ok(m) => Ok((m, None)),
                Err(error @ SimError::SscViolation { .. }) => run_replication(&plain, r).map(|m| {
                    (
                        m,
                        Some(SscRecord {
                            replication: r,
                            error,
                        }),
                    )
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (runs, breaches): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok(CellResult {
        cell: cell.clone(),
        d_star: policy.d_star,
        support: policy.support,
        metrics: ReplicatedMetrics::from_runs(runs),
        ssc: monitor.then(|| breaches.into_iter().flatten().collect()),
    })
}

/// Runs the cells in order, writing and flushing each one's rows before the
/// next starts. Progress lines go to `log`.
pub fn run_campaign(
    spec: &ExperimentSpec,
    sink: &mut CsvSink,
    log: &mut dyn Write,
) -> Result<Vec<CellResult>, CliError> {
    let cells = cells(spec);
    let mut results = Vec::with_capacity(cells.len());
    for (k, cell) in cells.iter().enumerate() {
        let res = run_cell(spec, cell)?;
        sink.write_cell(&spec.name, &res)?;
        let _ = writeln!(
            log,
            "[{}/{}] n={} {}: P_b={:.5} E[D]={:.5} D*={:.5}{}",
            k + 1,
            cells.len(),
            cell.n,
            cell.series_label(),
            res.metrics.blocking_prob.mean,
            res.metrics.mean_exec_time.mean,
            res.d_star,
            match &res.ssc {
                Some(v) if !v.is_empty() => format!(" ssc breaches={}", v.len()),
                _ => String::new(),
            }
        );
        results.push(res);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ExperimentSpec {
        ExperimentSpec::parse(
            "speedup.b = linear:2\nspeedup.a = 1,1.5\nregimes = 0:0.2\nlambdas = 0.5\n\
             n_grid = 10, 20\nschemes = greedy, greedy_pstar\nservices = det, exp\n\
             total_arrivals = 2000\nreplications = 2",
            "t",
            "t",
        )
        .unwrap()
    }

    #[test]
    fn grid_is_sorted_and_complete() {
        let cells = cells(&spec());
        assert_eq!(cells.len(), 2 * 2 * 2 * 2 * 2);
        assert_eq!(cells[0].speedup_label, "a");
        assert!(cells[0].regime().is_some());
        assert_eq!((cells[0].n, cells[1].n), (10, 20));
        assert!(cells
            .windows(2)
            .all(|w| cell_order(&w[0], &w[1]) == Ordering::Less));
    }

    #[test]
    fn monitor_records_breaches_and_keeps_metrics() {
        let mut s = ExperimentSpec::parse(
            "speedup = 1,1.8,2.5,3,3.4\nregimes = 0:0.2\nn_grid = 200\n\
             total_arrivals = 50000\nreplications = 2\nssc_monitor = true",
            "t",
            "t",
        )
        .unwrap();
        let cell = &cells(&s)[0];
        let res = run_cell(&s, cell).unwrap();
        assert_eq!(res.metrics.runs.len(), 2);
        assert!(!res.ssc.as_ref().unwrap().is_empty());
        s.ssc_monitor = false;
        let plain = run_cell(&s, cell).unwrap();
        assert_eq!(plain.metrics, res.metrics);
        assert!(plain.ssc.is_none());
    }
}
