//! CSV rows and gnuplot scripts.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use moldable::{Estimate, SimMetrics};

use crate::campaign::CellResult;
use crate::CliError;

/// Fixed column order of campaign CSVs.
pub const HEADER: [&str; 30] = [
    "experiment",
    "scheme",
    "service",
    "alpha",
    "beta",
    "n",
    "d",
    "lambda",
    "replication",
    "blocking_prob",
    "mean_exec_time",
    "d_star",
    "l1_distance",
    "blocking_prob_se",
    "mean_exec_time_se",
    "l1_distance_se",
    "replications",
    "speedup",
    "support",
    "exec_gap",
    "full_time_fraction",
    "full_time_fraction_se",
    "time_avg_r",
    "time_avg_jobs",
    "throughput_rate",
    "rate_residual",
    "rate_residual_se",
    "little_residual",
    "little_residual_se",
    "ssc_breaches",
];

/// Column positions (1-based, as gnuplot counts) used by generated scripts.
pub mod col {
    pub const SCHEME: usize = 2;
    pub const SERVICE: usize = 3;
    pub const ALPHA: usize = 4;
    pub const BETA: usize = 5;
    pub const N: usize = 6;
    pub const LAMBDA: usize = 8;
    pub const REPLICATION: usize = 9;
    pub const BLOCKING: usize = 10;
    pub const EXEC: usize = 11;
    pub const L1: usize = 13;
    pub const SPEEDUP: usize = 18;
    pub const EXEC_GAP: usize = 20;
}

/// Shortest round-trip form, so reruns are byte-identical.
fn num(x: f64) -> String {
    format!("{x}")
}

fn se(e: &Estimate) -> String {
    num(e.stderr)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Campaign CSV writer; every cell is flushed as soon as it is written.
pub struct CsvSink {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        if let Some(dir) = path.parent() {
            create_dir(dir)?;
        }
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(HEADER)?;
        writer.flush().map_err(|e| CliError::io(path, e))?;
        Ok(CsvSink {
            writer,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// One row per replication, then the aggregate row (`replication` =
    /// `mean`) carrying standard errors and the replication count.
    pub fn write_cell(&mut self, experiment: &str, res: &CellResult) -> Result<(), CliError> {
        let c = &res.cell;
        let (alpha, beta) = c
            .regime()
            .map_or((String::new(), String::new()), |(a, b)| (num(a), num(b)));
        let support = res
            .support
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let lead = [
            experiment.to_string(),
            c.scheme.name().to_string(),
            c.service.name().to_string(),
            alpha,
            beta,
            c.n.to_string(),
            c.speedup.degree().to_string(),
            num(c.lambda()),
        ];
        let ssc_of = |r: u64| match &res.ssc {
            None => String::new(),
            Some(v) => v.iter().filter(|b| b.replication == r).count().to_string(),
        };

        for (r, m) in res.metrics.runs.iter().enumerate() {
            let m: &SimMetrics = m;
            let mut row: Vec<String> = lead.to_vec();
            row.extend([
                r.to_string(),
                num(m.blocking_prob),
                num(m.mean_exec_time),
                num(res.d_star),
                num(m.l1_distance),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                c.speedup_label.clone(),
                support.clone(),
                num((m.mean_exec_time - res.d_star).abs()),
                num(m.full_time_fraction),
                String::new(),
                num(m.time_avg_r),
                num(m.time_avg_jobs),
                num(m.throughput_rate),
                num(m.rate_residual),
                String::new(),
                num(m.little_residual),
                String::new(),
                ssc_of(r as u64),
            ]);
            self.writer.write_record(&row)?;
        }

        let a = &res.metrics;
        let mut row: Vec<String> = lead.to_vec();
        row.extend([
            "mean".to_string(),
            num(a.blocking_prob.mean),
            num(a.mean_exec_time.mean),
            num(res.d_star),
            num(a.l1_distance.mean),
            se(&a.blocking_prob),
            se(&a.mean_exec_time),
            se(&a.l1_distance),
            a.runs.len().to_string(),
            c.speedup_label.clone(),
            support,
            num(res.exec_gap()),
            num(a.full_time_fraction.mean),
            se(&a.full_time_fraction),
            num(a.time_avg_r.mean),
            num(a.time_avg_jobs.mean),
            num(a.throughput_rate.mean),
            num(a.rate_residual_batched.mean),
            se(&a.rate_residual_batched),
            num(a.little_residual_batched.mean),
            se(&a.little_residual_batched),
            res.ssc
                .as_ref()
                .map_or(String::new(), |v| v.len().to_string()),
        ]);
        self.writer.write_record(&row)?;
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Distinct plotted series: one per (speed-up, rate, scheme, service).
fn series(results: &[CellResult]) -> Vec<&CellResult> {
    let mut out: Vec<&CellResult> = Vec::new();
    for r in results {
        if !out.iter().any(|o| o.cell.same_series(&r.cell)) {
            out.push(r);
        }
    }
    out
}

fn series_filter(r: &CellResult) -> String {
    let c = &r.cell;
    let mut conds = vec![
        format!("strcol({}) eq \"mean\"", col::REPLICATION),
        format!("strcol({}) eq \"{}\"", col::SPEEDUP, c.speedup_label),
        format!("strcol({}) eq \"{}\"", col::SCHEME, c.scheme.name()),
        format!("strcol({}) eq \"{}\"", col::SERVICE, c.service.name()),
    ];
    match c.regime() {
        Some((a, b)) => {
            conds.push(format!("strcol({}) eq \"{}\"", col::ALPHA, num(a)));
            conds.push(format!("strcol({}) eq \"{}\"", col::BETA, num(b)));
        }
        None => conds.push(format!(
            "strcol({}) eq \"{}\"",
            col::LAMBDA,
            num(c.lambda())
        )),
    }
    conds.join(" && ")
}

fn plot_block(
    data: &str,
    results: &[&CellResult],
    column: usize,
    ylabel: &str,
    png: &str,
) -> String {
    let mut s = format!("set output \"{png}\"\nset ylabel \"{ylabel}\"\nplot \\\n");
    let lines: Vec<String> = results
        .iter()
        .map(|r| {
            format!(
                "  \"{data}\" using {}:({} ? ${column} : NaN) with linespoints title \"{}\"",
                col::N,
                series_filter(r),
                r.cell.series_label()
            )
        })
        .collect();
    s.push_str(&lines.join(", \\\n"));
    s.push('\n');
    s
}

const PREAMBLE: &str = "set datafile separator \",\"\n\
set terminal pngcairo size 900,600\n\
set key outside right\n\
set logscale x\n\
set xlabel \"n\"\n";

/// Script plotting blocking probability and mean execution time against
/// `n` for every series of a campaign CSV next to it.
pub fn campaign_plot_script(csv_name: &str, stem: &str, results: &[CellResult]) -> String {
    let ser = series(results);
    let mut s = String::from(PREAMBLE);
    s.push_str(&plot_block(
        csv_name,
        &ser,
        col::BLOCKING,
        "blocking probability",
        &format!("{stem}_blocking.png"),
    ));
    s.push_str(&plot_block(
        csv_name,
        &ser,
        col::EXEC,
        "mean execution time",
        &format!("{stem}_exec_time.png"),
    ));
    s
}

/// Log-log script for a convergence target.
pub fn convergence_plot_script(
    csv_name: &str,
    stem: &str,
    results: &[CellResult],
    column: usize,
    ylabel: &str,
) -> String {
    let ser = series(results);
    let mut s = String::from(PREAMBLE);
    s.push_str("set logscale y\n");
    s.push_str(&plot_block(
        csv_name,
        &ser,
        column,
        ylabel,
        &format!("{stem}_{ylabel}.png"),
    ));
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
