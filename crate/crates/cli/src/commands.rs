//! Subcommand bodies. Each prints a human-readable report to `out` and
//! writes CSV where asked.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use moldable::alloc_opt::OptimalCase;
use moldable::exact_ctmc::solve_exact;
use moldable::fluid::{closed_form, integrate, FluidState};
use moldable::speedup::TrafficRegime;
use moldable::{
    solve_hetero, solve_p, HeteroSolution, OptimalAllocation, Scheme, SpeedupFunction,
    WorkloadClass,
};

use crate::campaign::{run_campaign, CellResult};
use crate::config::ExperimentSpec;
use crate::convergence::{fit, theoretical_exponent, ConvergenceFit, Target};
use crate::output::{campaign_plot_script, convergence_plot_script, write_text, CsvSink};
use crate::parse::{self, short};
use crate::CliError;

fn say(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<(), CliError> {
    out.write_fmt(text)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| CliError::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => { say($out, format_args!($($arg)*)) };
}

fn tuple(v: &[f64]) -> String {
    format!(
        "({})",
        v.iter().map(|&x| short(x)).collect::<Vec<_>>().join(", ")
    )
}

fn csv_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        crate::output::create_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Arrival rate given directly or through a regime at size `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateChoice {
    Lambda(f64),
    Regime { regime: TrafficRegime, n: u64 },
}

impl RateChoice {
    pub fn lambda(&self) -> Result<f64, CliError> {
        match *self {
            RateChoice::Lambda(l) => Ok(l),
            RateChoice::Regime { regime, n } => Ok(regime.lambda_of(n)?),
        }
    }
}

pub fn solve(
    s: &SpeedupFunction,
    rate: RateChoice,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<OptimalAllocation, CliError> {
    let opt = solve_p(s, rate.lambda()?)?;
    let case = match opt.case {
        OptimalCase::BelowMinRatio => "below_min_ratio",
        OptimalCase::AtRatio => "at_ratio",
        OptimalCase::Between => "between",
    };
    let support = opt
        .support
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(", ");
    say!(out, "speedup = {s}")?;
    say!(out, "lambda = {}", opt.lambda)?;
    say!(out, "case = {case}")?;
    say!(out, "I* = {{{support}}}")?;
    say!(out, "y* = {}", tuple(&opt.y_star))?;
    say!(out, "p* = {}", tuple(&opt.p_star))?;
    say!(out, "D* = {}", short(opt.d_star))?;
    say!(out, "unique = {}", opt.unique)?;
    if let Some(path) = csv {
        let rows: Vec<Vec<String>> = (1..=s.degree())
            .map(|i| {
                vec![
                    i.to_string(),
                    s.get(i).to_string(),
                    opt.y_star[i - 1].to_string(),
                    opt.p_star[i - 1].to_string(),
                ]
            })
            .collect();
        csv_file(path, &["i", "s_i", "y_star", "p_star"], &rows)?;
    }
    Ok(opt)
}

fn campaign_files(spec: &ExperimentSpec) -> (PathBuf, PathBuf) {
    (
        spec.output_dir.join(format!("{}.csv", spec.name)),
        spec.output_dir.join(format!("{}.gp", spec.name)),
    )
}

pub fn simulate(spec: &ExperimentSpec, out: &mut dyn Write) -> Result<Vec<CellResult>, CliError> {
    let (csv_path, gp_path) = campaign_files(spec);
    let mut sink = CsvSink::create(&csv_path)?;
    let results = run_campaign(spec, &mut sink, out)?;
    write_text(
        &gp_path,
        &campaign_plot_script(&format!("{}.csv", spec.name), &spec.name, &results),
    )?;
    let breaches: usize = results
        .iter()
        .filter_map(|r| r.ssc.as_ref())
        .map(Vec::len)
        .sum();
    if spec.ssc_monitor {
        say!(out, "state space collapse breaches: {breaches}")?;
        for r in &results {
            for b in r.ssc.iter().flatten() {
                say!(
                    out,
                    "  n={} {} rep {}: {}",
                    r.cell.n,
                    r.cell.series_label(),
                    b.replication,
                    b.error
                )?;
            }
        }
    }
    say!(
        out,
        "wrote {} and {}",
        csv_path.display(),
        gp_path.display()
    )?;
    Ok(results)
}

/// One fitted series of a convergence campaign.
#[derive(Debug)]
pub struct SeriesFit {
    pub label: String,
    pub results: Vec<CellResult>,
    pub fit: Result<ConvergenceFit, CliError>,
}

/// Groups a campaign's cells by series (sizes ascending) and fits each.
pub fn fit_series(results: &[CellResult], target: Target) -> Vec<SeriesFit> {
    let mut groups: Vec<Vec<CellResult>> = Vec::new();
    for r in results {
        match groups.iter_mut().find(|g| g[0].cell.same_series(&r.cell)) {
            Some(g) => g.push(r.clone()),
            None => groups.push(vec![r.clone()]),
        }
    }
    groups
        .into_iter()
        .map(|mut g| {
            g.sort_by_key(|r| r.cell.n);
            let last = g.last().unwrap();
            let alpha = last.cell.regime().map_or(0.0, |(a, _)| a);
            let theory = theoretical_exponent(last.support.len(), alpha);
            let points: Vec<(usize, f64)> = g.iter().map(|r| (r.cell.n, target.value(r))).collect();
            SeriesFit {
                label: last.cell.series_label(),
                fit: fit(&points, theory),
                results: g,
            }
        })
        .collect()
}

pub fn convergence(
    spec: &ExperimentSpec,
    target: Target,
    out: &mut dyn Write,
) -> Result<Vec<SeriesFit>, CliError> {
    if spec.n_grid.len() < crate::convergence::MIN_FIT_POINTS {
        return Err(CliError::Validation(format!(
            "convergence needs at least {} sizes in n_grid, got {}",
            crate::convergence::MIN_FIT_POINTS,
            spec.n_grid.len()
        )));
    }
    let results = simulate(spec, out)?;
    let fits = fit_series(&results, target);

    let mut rows = Vec::new();
    for f in &fits {
        match &f.fit {
            Ok(c) => {
                say!(
                    out,
                    "{} [{}]: slope {:.4} (bound {:.4}), r^2 {:.4}{}",
                    f.label,
                    target.name(),
                    c.slope,
                    c.theoretical_exponent,
                    c.r_squared,
                    if c.dropped.is_empty() {
                        String::new()
                    } else {
                        format!(", dropped n = {:?}", c.dropped)
                    }
                )?;
                rows.push(vec![
                    spec.name.clone(),
                    f.label.clone(),
                    target.name().into(),
                    c.slope.to_string(),
                    c.intercept.to_string(),
                    c.r_squared.to_string(),
                    c.theoretical_exponent.to_string(),
                    c.points.len().to_string(),
                    c.dropped
                        .iter()
                        .map(usize::to_string)
                        .collect::<Vec<_>>()
                        .join(";"),
                ]);
            }
            Err(e) => say!(out, "{} [{}]: {e}", f.label, target.name())?,
        }
    }
    let fit_path = spec
        .output_dir
        .join(format!("{}_{}_fit.csv", spec.name, target.name()));
    csv_file(
        &fit_path,
        &[
            "experiment",
            "series",
            "target",
            "slope",
            "intercept",
            "r_squared",
            "theoretical_exponent",
            "points",
            "dropped_n",
        ],
        &rows,
    )?;
    let gp_path = spec
        .output_dir
        .join(format!("{}_{}.gp", spec.name, target.name()));
    write_text(
        &gp_path,
        &convergence_plot_script(
            &format!("{}.csv", spec.name),
            &spec.name,
            &results,
            target.column(),
            target.name(),
        ),
    )?;
    say!(
        out,
        "wrote {} and {}",
        fit_path.display(),
        gp_path.display()
    )?;
    if rows.is_empty() {
        return Err(CliError::DegenerateFit("no series could be fitted".into()));
    }
    Ok(fits)
}

pub fn exact(
    n: usize,
    s: &SpeedupFunction,
    lambda: f64,
    scheme: Scheme,
    cap: usize,
    out: &mut dyn Write,
) -> Result<moldable::exact_ctmc::ExactSolution, CliError> {
    let sol = solve_exact(n, s, lambda, scheme, cap)?;
    let m = &sol.metrics;
    say!(
        out,
        "n = {n}, speedup = {s}, lambda = {lambda}, scheme = {}",
        scheme.name()
    )?;
    say!(out, "states = {}", sol.space.len())?;
    say!(out, "P_b = {}", m.blocking_prob)?;
    say!(out, "E[D] = {}", m.mean_exec_time)?;
    say!(out, "D* = {}", sol.d_star)?;
    say!(out, "E[x] = {}", tuple(&m.mean_x))?;
    say!(out, "E[r] = {}", m.mean_r)?;
    say!(out, "E||x - y*||_1 = {}", m.l1_distance)?;
    Ok(sol)
}

/// Classes file: one class per line, whitespace-separated
/// `share=<rate> size=<mean> speedup=<speed-up>`; `#` comments.
pub fn parse_classes(text: &str, origin: &str) -> Result<Vec<WorkloadClass>, CliError> {
    let mut classes = Vec::new();
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
        let (mut share, mut size, mut speedup) = (None, None, None);
        for tok in line.split_whitespace() {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {tok:?}")))?;
            let wrap = |e: CliError| err(e.to_string());
            match key {
                "share" => share = Some(parse::f64_value(value).map_err(wrap)?),
                "size" => size = Some(parse::f64_value(value).map_err(wrap)?),
                "speedup" => speedup = Some(parse::speedup(value).map_err(wrap)?),
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        let speedup = speedup.ok_or_else(|| err("missing speedup".into()))?;
        let share = share.ok_or_else(|| err("missing share".into()))?;
        classes.push(WorkloadClass::new(share, size.unwrap_or(1.0), speedup));
    }
    if classes.is_empty() {
        return Err(CliError::Validation(format!("{origin}: no classes")));
    }
    Ok(classes)
}

pub fn hetero(
    classes_file: &Path,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<HeteroSolution, CliError> {
    let text = fs::read_to_string(classes_file).map_err(|e| {
        CliError::Validation(format!("cannot read {}: {e}", classes_file.display()))
    })?;
    let classes = parse_classes(&text, &classes_file.display().to_string())?;
    let sol = solve_hetero(&classes)?;
    let mut rows = Vec::new();
    for (j, (c, a)) in classes.iter().zip(&sol.per_class).enumerate() {
        say!(
            out,
            "class {}: load {} reservation b = {} rate {} p* = {} objective {}",
            j + 1,
            short(c.load()),
            short(a.reservation),
            short(a.normalized.lambda),
            tuple(&a.normalized.p_star),
            short(a.objective)
        )?;
        for (i, (&p, &y)) in a.normalized.p_star.iter().zip(&a.y).enumerate() {
            rows.push(vec![
                (j + 1).to_string(),
                c.load().to_string(),
                a.reservation.to_string(),
                (i + 1).to_string(),
                y.to_string(),
                p.to_string(),
                a.objective.to_string(),
            ]);
        }
    }
    let spare = 1.0 - sol.reservations.iter().sum::<f64>();
    if spare > 1e-12 {
        say!(out, "unreserved = {} (no class gains from more servers)", short(spare))?;
    }
    say!(out, "total objective = {}", short(sol.total_objective))?;
    if let Some(path) = csv {
        csv_file(
            path,
            &[
                "class",
                "load",
                "reservation",
                "i",
                "y",
                "p_star",
                "objective",
            ],
            &rows,
        )?;
    }
    Ok(sol)
}

/// Trajectory CSV: `t`, `x_1..x_d`, and the closed-form gap.
pub fn fluid(
    s: &SpeedupFunction,
    lambda: f64,
    x0: Option<Vec<f64>>,
    t_end: f64,
    dt: f64,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Vec<FluidState>, CliError> {
    let policy = solve_p(s, lambda)?;
    let start = FluidState::new(x0.unwrap_or_else(|| vec![0.0; s.degree()]), 0.0);
    let traj = integrate(&start, s, &policy, t_end, dt)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=s.degree()).map(|i| format!("x_{i}")));
    header.push("closed_form_error".into());
    header.push("distance_to_y_star".into());
    let rows: Vec<Vec<String>> = traj
        .iter()
        .map(|st| {
            let exact = closed_form(&start, s, &policy, st.t);
            let err =
                st.x.iter()
                    .zip(&exact.x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
            let mut row = vec![st.t.to_string()];
            row.extend(st.x.iter().map(f64::to_string));
            row.push(err.to_string());
            row.push(st.sq_distance(&policy.y_star).sqrt().to_string());
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    match csv {
        Some(path) => {
            csv_file(path, &header, &rows)?;
            say!(
                out,
                "y* = {}; wrote {} samples to {}",
                tuple(&policy.y_star),
                rows.len(),
                path.display()
            )?;
        }
        None => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header)?;
            for r in &rows {
                w.write_record(r)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| CliError::io("<stdout>", e.into_error()))?;
            out.write_all(&bytes)
                .map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    Ok(traj)
}
