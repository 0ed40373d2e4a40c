use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn moldable(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moldable"))
        .args(args)
        .env_remove("MOLDABLE_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value_of(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn solve_prints_reference_points() {
    let o = moldable(&["solve", "--speedup", "1,1.8,2.5,3,3.4", "--lambda", "0.8"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("y* = (0, 0, 0.2, 0.1, 0)"), "{s}");
    assert!(s.contains("p* = (0, 0, 0.625, 0.375, 0)"), "{s}");
    assert!(s.contains("I* = {3, 4}"), "{s}");
    assert!(s.contains("D* = 0.375\n"), "{s}");

    let o = moldable(&[
        "solve",
        "--speedup",
        "linear:5",
        "--regime",
        "0:0.2",
        "--n",
        "4000",
    ]);
    assert!(stdout(&o).contains("D* = 0.2\n"));
}

#[test]
fn solve_rejects_infeasible_rate() {
    let o = moldable(&["solve", "--speedup", "linear:5", "--lambda", "1.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1.1"));
    let o = moldable(&["solve", "--speedup", "1,3", "--lambda", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = moldable(&["solve", "--speedup", "linear:5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solve_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    let o = moldable(&[
        "solve",
        "--speedup",
        "1,1.8,2.5,3,3.4",
        "--lambda",
        "0.8",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("i,s_i,y_star,p_star\n1,1,0,0\n"));
}

#[test]
fn exact_hand_cases() {
    let o = moldable(&[
        "exact",
        "--n",
        "2",
        "--speedup",
        "linear:2",
        "--lambda",
        "0.8",
        "--scheme",
        "greedy",
    ]);
    assert!(o.status.success());
    let pb = value_of(&stdout(&o), "P_b");
    assert!((pb - 4.0 / 9.0).abs() < 1e-12, "{pb}");

    let o = moldable(&["exact", "--n", "20", "--speedup", "1", "--lambda", "0.9"]);
    let pb = value_of(&stdout(&o), "P_b");
    let load = 20.0 * 0.9;
    let erlang = (1..=20).fold(1.0, |b, k| load * b / (k as f64 + load * b));
    assert!((pb - erlang).abs() < 1e-9);

    let o = moldable(&[
        "exact",
        "--n",
        "400",
        "--speedup",
        "linear:5",
        "--lambda",
        "0.8",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exceeds the cap"));
}

const SMALL: &str = "
name = small
speedup.sub = 1,1.8,2.5
regimes = 0:0.2
lambdas = 0.9
n_grid = 6, 12, 24, 48
schemes = greedy_pstar, greedy
services = exp
replications = 3
total_arrivals = 20000
seed = 4
";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    fs::write(
        &p,
        format!("{text}\noutput_dir = {}\n", dir.join("out").display()),
    )
    .unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = moldable(&["simulate", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = dir.path().join("out/small.csv");
    let first = fs::read(&csv).unwrap();
    assert!(dir.path().join("out/small.gp").exists());

    let o = Command::new(env!("CARGO_BIN_EXE_moldable"))
        .args(["simulate", &cfg])
        .env("MOLDABLE_WORKERS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(first, fs::read(&csv).unwrap());

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with(
        "experiment,scheme,service,alpha,beta,n,d,lambda,replication,blocking_prob,\
         mean_exec_time,d_star,l1_distance,blocking_prob_se"
    ));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 2 rates * 4 sizes * 2 schemes, each with 3 runs and a mean row
    assert_eq!(rows.len(), 16 * 4);
    for agg in rows.iter().filter(|r| r[8] == "mean") {
        assert_eq!(agg[16], "3");
        assert!(agg[13].parse::<f64>().unwrap().is_finite());
        assert!(agg[14].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn simulate_rejects_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "speedup = linear:2\nlambdas = 0.5\nn_grid =");
    let o = moldable(&["simulate", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let o = moldable(&["simulate", "/nonexistent/cfg"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn convergence_writes_fits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = moldable(&["sweep", &cfg, "--target", "exec_gap"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fits = fs::read_to_string(dir.path().join("out/small_exec_gap_fit.csv")).unwrap();
    assert_eq!(fits.lines().count(), 1 + 4);
    assert!(dir.path().join("out/small_exec_gap.gp").exists());
    let o = moldable(&["convergence", &cfg, "--target", "speed"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn hetero_and_fluid() {
    let dir = tempfile::tempdir().unwrap();
    let classes = dir.path().join("classes.txt");
    fs::write(
        &classes,
        "# two classes\nshare=0.3 size=1 speedup=1,2\nshare=0.3 speedup=1,1.5\n",
    )
    .unwrap();
    let o = moldable(&["hetero", classes.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("class 2: load 0.3 reservation b = 0.4"));

    let o = moldable(&[
        "fluid",
        "--speedup",
        "1,1.8,2.5,3,3.4",
        "--lambda",
        "0.8",
        "--t-end",
        "1",
        "--dt",
        "0.1",
    ]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 1 + 11);
    assert!(s.starts_with("t,x_1,x_2,x_3,x_4,x_5,closed_form_error,distance_to_y_star\n"));
}

#[test]
fn bad_worker_count() {
    let o = Command::new(env!("CARGO_BIN_EXE_moldable"))
        .args(["solve", "--speedup", "linear:2", "--lambda", "0.5"])
        .env("MOLDABLE_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
