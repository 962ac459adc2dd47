use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn remglass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remglass")).args(args).output().expect("binary runs")
}

fn with_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Rows of one table in CSV output, as (columns, rows).
fn table(text: &str, name: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().skip_while(|l| *l != format!("# table = {name}"));
    assert!(lines.next().is_some(), "table {name} missing");
    let cols = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.take_while(|l| !l.starts_with('#')).map(|l| l.split(',').map(String::from).collect()).collect();
    (cols, rows)
}

fn column(text: &str, name: &str, col: &str) -> Vec<String> {
    let (cols, rows) = table(text, name);
    let i = cols.iter().position(|c| c == col).unwrap_or_else(|| panic!("column {col}"));
    rows.into_iter().map(|r| r[i].clone()).collect()
}

const SMALL: &str = "
seed = 11
[solve]
beta = 0.5, 1.1, 2.5
[phase-diagram]
beta = 0.5:3:0.5
[simulate]
n = 6:10
seeds = 5
[overlap]
n = 8
seeds = 5
pairs = 200
[chaos]
n = 6:10
seeds = 4
pairs = 100
[tail]
n = 50
samples = 20000
[ppverify]
m = 0.4, 0.7
replicas = 200
cutoff = 1e-4
";

#[test]
fn worker_count_never_changes_output() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    for cmd in ["solve", "phase-diagram", "simulate", "overlap", "chaos", "tail", "ppverify"] {
        let one = stdout(&remglass(&[cmd, "--config", &cfg, "--workers", "1"]));
        let three = stdout(&remglass(&[cmd, "--config", &cfg, "--workers", "3"]));
        let again = stdout(&remglass(&[cmd, "--config", &cfg, "--workers", "1"]));
        assert_eq!(one, three, "{cmd}");
        assert_eq!(one, again, "{cmd}");
        assert!(one.contains("# base_seed = 11"));
    }
}

#[test]
fn out_file_matches_stdout() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    let out = dir.path().join("solve.csv");
    let printed = stdout(&remglass(&["solve", "--config", &cfg]));
    let o = remglass(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success() && o.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(out).unwrap(), printed);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    let a = stdout(&remglass(&["simulate", "--config", &cfg]));
    let b = stdout(&remglass(&["simulate", "--config", &cfg, "--seed", "12"]));
    assert!(b.contains("# base_seed = 12"));
    assert_ne!(column(&a, "per_seed", "f_n"), column(&b, "per_seed", "f_n"));
}

#[test]
fn default_seed_is_fixed() {
    let a = stdout(&remglass(&["tail", "--format", "jsonl"]));
    let b = stdout(&remglass(&["tail", "--format", "jsonl"]));
    assert_eq!(a, b);
}

#[test]
fn pure_rem_solve_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), "[solve]\nmodel = pure-rem\nbeta = 1:3:1\n");
    let text = stdout(&remglass(&["solve", "--config", &cfg]));
    assert_eq!(column(&text, "solutions", "regime"), ["high", "low", "low"]);
    let m: Vec<f64> = column(&text, "solutions", "m_star").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(m[0], 1.0);
    assert!((m[1] - 0.5887050).abs() < 1e-7 && (m[2] - 0.3924700).abs() < 1e-7);
    assert!(!text.contains("beta_cr"));
}

#[test]
fn cavity_solve_is_continuous_across_the_transition() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), "[solve]\nbeta = 0.99:1.05:0.005\n");
    let text = stdout(&remglass(&["solve", "--config", &cfg]));
    assert!(text.contains("# record.beta_cr = 1.01907872623"));
    let f: Vec<f64> = column(&text, "solutions", "f_gibbs").iter().map(|s| s.parse().unwrap()).collect();
    let regimes = column(&text, "solutions", "regime");
    assert!(regimes.contains(&"high".to_string()) && regimes.contains(&"low".to_string()));
    for w in f.windows(2) {
        assert!((w[1] - w[0]).abs() < 0.03, "{w:?}");
    }
}

#[test]
fn empty_grid_gives_an_empty_table() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), "[solve]\nbeta =\n");
    let text = stdout(&remglass(&["solve", "--config", &cfg]));
    let (cols, rows) = table(&text, "solutions");
    assert_eq!(cols[0], "beta");
    assert!(rows.is_empty());
}

#[test]
fn simulate_at_infinite_temperature_is_exactly_zero() {
    let dir = TempDir::new().unwrap();
    for model in ["pure-rem", "cavity"] {
        let cfg = with_config(dir.path(), &format!("[simulate]\nmodel = {model}\nbeta = 0\nn = 4:8\nseeds = 3\n"));
        let text = stdout(&remglass(&["simulate", "--config", &cfg]));
        let f = column(&text, "per_seed", "f_n");
        assert_eq!(f.len(), 9);
        assert!(f.iter().all(|x| x.parse::<f64>().unwrap() == 0.0), "{model}: {f:?}");
    }
}

#[test]
fn chaos_control_columns_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), "[chaos]\nbeta = 2.5\nbeta_prime = 2.5\nn = 6:12\nseeds = 6\npairs = 50\n");
    let text = stdout(&remglass(&["chaos", "--config", &cfg]));
    assert_eq!(column(&text, "chaos", "cross_coincidence"), column(&text, "chaos", "coincidence"));
    assert_eq!(column(&text, "chaos", "cross_coincidence_se"), column(&text, "chaos", "coincidence_se"));
}

#[test]
fn overlap_coincidence_matches_simulate() {
    // same base seed, same disorder: the coincidence is the simulated sum of squared weights
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), "[overlap]\nn = 6:10\nseeds = 4\npairs = 10\n[simulate]\nn = 6:10\nseeds = 4\n");
    let o = stdout(&remglass(&["overlap", "--config", &cfg]));
    let s = stdout(&remglass(&["simulate", "--config", &cfg]));
    assert_eq!(column(&o, "overlap", "coincidence"), column(&s, "aggregate", "sum_sq_mean"));
}

#[test]
fn ppverify_unit_law() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), "[ppverify]\nm = 0.5\nlaw = unit\nreplicas = 2000\ncutoff = 1e-5\n");
    let text = stdout(&remglass(&["ppverify", "--config", &cfg]));
    let closed: Vec<f64> = column(&text, "tala", "closed_form").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(closed, [1.0, 0.5, 0.5]);
    let mean: f64 = column(&text, "pd_sum_squares", "mean")[0].parse().unwrap();
    let se: f64 = column(&text, "pd_sum_squares", "std_err")[0].parse().unwrap();
    assert!((mean - 0.5).abs() < 4.0 * se);
}

#[test]
fn tail_theory_column() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), "[tail]\nt = 0:2:1\nsamples = 5000\n");
    let text = stdout(&remglass(&["tail", "--config", &cfg]));
    let m: f64 = text.lines().find_map(|l| l.strip_prefix("# record.m_star = ")).unwrap().parse().unwrap();
    let theory: Vec<f64> = column(&text, "tail", "theory").iter().map(|s| s.parse().unwrap()).collect();
    for (t, th) in theory.iter().enumerate() {
        assert!((th - (-m * t as f64).exp() / m).abs() < 1e-12);
    }
}

#[test]
fn jsonl_carries_the_csv_field_names() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), SMALL);
    let csv = stdout(&remglass(&["simulate", "--config", &cfg]));
    let jsonl = stdout(&remglass(&["simulate", "--config", &cfg, "--format", "jsonl"]));
    let records: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records[0]["record"], "header");
    assert_eq!(records[0]["base_seed"], 11);
    let (cols, rows) = table(&csv, "aggregate");
    let agg: Vec<_> = records.iter().filter(|r| r["table"] == "aggregate").collect();
    assert_eq!(agg.len(), rows.len());
    for c in &cols {
        assert!(agg[0].get(c.as_str()).is_some(), "{c}");
    }
    let f: f64 = rows[0][2].parse().unwrap();
    assert_eq!(agg[0]["f_mean"].as_f64().unwrap(), f);
}

fn exit_code(args: &[&str]) -> (i32, String) {
    let o = remglass(args);
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = [
        ("[solve]\nbeta = 1\nbogus = 3\n", "bogus"),
        ("[solve]\nbeta = 1\nbeta = 2\n", "line 3"),
        ("[nonsense]\n", "line 1"),
        ("[solve]\nbeta = -1\n", "beta"),
        ("[solve]\nmodel = sk\n", "model"),
        ("[solve]\njust words\n", "line 2"),
        ("[solve]\nquadrature_order = 3\n", "quadrature_order"),
    ];
    for (text, needle) in bad {
        let cfg = with_config(dir.path(), text);
        let (code, err) = exit_code(&["solve", "--config", &cfg]);
        assert_eq!(code, 2, "{text}: {err}");
        assert!(err.contains(needle), "{err} lacks {needle}");
    }
    let (code, err) = exit_code(&["solve", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(code, 2, "{err}");
    let cfg = with_config(dir.path(), "[simulate]\nn = 30\n");
    assert_eq!(exit_code(&["simulate", "--config", &cfg]).0, 2);
    assert_eq!(exit_code(&["solve", "--format", "xml"]).0, 2);
    assert_eq!(exit_code(&["no-such-command"]).0, 2);
}

#[test]
fn keys_of_other_sections_are_ignored() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(dir.path(), "[tail]\nsamples = 1000\n[solve]\nbeta = 1\n");
    assert_eq!(exit_code(&["solve", "--config", &cfg]).0, 0);
}

#[test]
fn numeric_failures_exit_with_three() {
    let dir = TempDir::new().unwrap();
    // overlap statistics need the low-temperature phase
    let cfg = with_config(dir.path(), "[overlap]\nbeta = 0.5\nn = 6\nseeds = 2\n");
    let (code, err) = exit_code(&["overlap", "--config", &cfg]);
    assert_eq!(code, 3, "{err}");
}
