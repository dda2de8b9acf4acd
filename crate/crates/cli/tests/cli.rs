use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TOY: &str = "# K=4\n1,2,3\n2,1\n1,3\n1\n4,1,2\n2,3,1\n1,2\n3,1,4\n1,4\n2,1,3\n";
const ONE_LENGTH: &str = "# K=3\n1,2\n2,1\n1,3\n3,1\n1,2\n2,3\n1,2\n3,2\n";

fn plmix(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plmix"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PLMIX_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = plmix(args, cwd);
    assert!(
        out.status.success(),
        "plmix {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup(data: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("data.csv"), data).unwrap();
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const FAST: [&str; 4] = ["--iters", "600", "--burnin", "100"];

fn fit(dir: &Path, out: &str, g: &str, extra: &[&str]) {
    let mut args = vec!["fit", "data.csv", "-G", g, "--out", out];
    args.extend(FAST);
    args.extend(extra);
    ok(&args, dir);
}

#[test]
fn fit_writes_summary_with_support_vector() {
    let dir = setup(TOY);
    fit(dir.path(), "run", "1", &[]);
    let run = dir.path().join("run");
    for f in [
        "map.json",
        "chain.csv",
        "labels.csv",
        "relabeled.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let summary = json(&run.join("summary.json"));
    let p = summary["map"]["p"][0].as_array().unwrap();
    assert_eq!(p.len(), 4);
    let total: f64 = p.iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-5);
    assert_eq!(summary["posterior"]["n_draws"], 500);
    let manifest = json(&run.join("manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = setup(TOY);
    fit(dir.path(), "a", "2", &["--seed", "7"]);
    fit(dir.path(), "b", "2", &["--seed", "7"]);
    for f in [
        "map.json",
        "chain.csv",
        "labels.csv",
        "relabeled.csv",
        "summary.json",
        "manifest.json",
    ] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    fit(dir.path(), "c", "2", &["--seed", "8"]);
    assert_ne!(
        fs::read(dir.path().join("a/chain.csv")).unwrap(),
        fs::read(dir.path().join("c/chain.csv")).unwrap()
    );
}

#[test]
fn seed_from_environment() {
    let dir = setup(TOY);
    fit(dir.path(), "a", "1", &["--seed", "5"]);
    let mut args = vec!["fit", "data.csv", "-G", "1", "--out", "b"];
    args.extend(FAST);
    let out = Command::new(env!("CARGO_BIN_EXE_plmix"))
        .args(&args)
        .current_dir(dir.path())
        .env("PLMIX_SEED", "5")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        fs::read(dir.path().join("a/chain.csv")).unwrap(),
        fs::read(dir.path().join("b/chain.csv")).unwrap()
    );
}

#[test]
fn missing_file_exits_2_naming_path() {
    let dir = setup(TOY);
    let out = plmix(&["fit", "no_such_file.csv", "-G", "1", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_file.csv"));
}

#[test]
fn malformed_data_exits_2() {
    let dir = setup("# K=3\n1,1\n");
    let out = plmix(&["fit", "data.csv", "-G", "1", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.csv"));
}

#[test]
fn bad_flags_exit_2() {
    let dir = setup(TOY);
    let out = plmix(
        &[
            "fit", "data.csv", "-G", "1", "--iters", "10", "--burnin", "10", "--out", "x",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = plmix(
        &["fit", "data.csv", "-G", "1", "--prior", "c=oops", "--out", "x"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = plmix(&["fit", "data.csv", "-G", "0", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn select_single_g_gives_one_row() {
    let dir = setup(TOY);
    let mut args = vec!["select", "data.csv", "--gmin", "1", "--gmax", "1", "--out", "sel"];
    args.extend(FAST);
    let out = ok(&args, dir.path());
    let csv = fs::read_to_string(dir.path().join("sel/criteria.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "G,DIC1,DIC2,BPIC1,BPIC2,BICM1,BICM2,BIC");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,"));
    let selection = json(&dir.path().join("sel/selection.json"));
    assert_eq!(selection.as_array().unwrap().len(), 7);
    assert!(selection.as_array().unwrap().iter().all(|s| s["G"] == 1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("DIC1"));
}

#[test]
fn select_subdirectory_matches_fit() {
    let dir = setup(TOY);
    let mut args = vec!["select", "data.csv", "--gmin", "1", "--gmax", "2", "--out", "sel"];
    args.extend(FAST);
    ok(&args, dir.path());
    fit(dir.path(), "g2", "2", &[]);
    assert_eq!(
        fs::read(dir.path().join("sel/G2/chain.csv")).unwrap(),
        fs::read(dir.path().join("g2/chain.csv")).unwrap()
    );
    let rows = fs::read_to_string(dir.path().join("sel/criteria.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
}

fn p_values(gof: &Value) -> Vec<Option<f64>> {
    ["p_b1", "p_b2", "p_b1_cond", "p_b2_cond"]
        .iter()
        .map(|k| gof[*k].as_f64())
        .collect()
}

#[test]
fn gof_reports_all_p_values_for_mixed_lengths() {
    let dir = setup(TOY);
    fit(dir.path(), "run", "1", &[]);
    ok(&["gof", "run", "data.csv", "--nrep", "100"], dir.path());
    let gof = json(&dir.path().join("run/gof/gof.json"));
    assert_eq!(gof["n_rep"], 100);
    assert_eq!(gof["n_strata"], 3);
    for p in p_values(&gof) {
        let p = p.expect("p value present");
        assert!((0.0..=1.0).contains(&p));
    }
    let draws = fs::read_to_string(dir.path().join("run/gof/gof_draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 101);
}

#[test]
fn gof_single_length_has_no_conditional_p() {
    let dir = setup(ONE_LENGTH);
    fit(dir.path(), "run", "1", &[]);
    ok(&["gof", "run", "data.csv", "--nrep", "50", "--out", "g"], dir.path());
    let gof = json(&dir.path().join("g/gof.json"));
    let p = p_values(&gof);
    assert!(p[0].is_some() && p[1].is_some());
    assert!(p[2].is_none() && p[3].is_none());
    assert_eq!(gof["n_strata"], 1);
}

#[test]
fn gof_rejects_zero_replicates() {
    let dir = setup(TOY);
    fit(dir.path(), "run", "1", &[]);
    let out = plmix(&["gof", "run", "data.csv", "--nrep", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_emits_tidy_csvs() {
    let dir = setup(TOY);
    fit(dir.path(), "run", "2", &[]);
    ok(&["gof", "run", "data.csv", "--nrep", "20"], dir.path());
    ok(&["report", "run"], dir.path());
    let report = dir.path().join("run/report");
    let curves = fs::read_to_string(report.join("criteria_curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("G,criterion,value"));
    assert_eq!(curves.lines().count(), 1 + 7);
    let quant = fs::read_to_string(report.join("support_quantiles.csv")).unwrap();
    assert_eq!(quant.lines().count(), 1 + 2 * 4);
    for line in quant.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(4).map(|x| x.parse().unwrap()).collect();
        assert!(v[0] <= v[1] && v[1] <= v[2] && v[2] <= v[3] && v[3] <= v[4]);
    }
    let pairs = fs::read_to_string(report.join("discrepancy_pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 1 + 20 * 4);
}

#[test]
fn replay_reproduces_outputs() {
    let dir = setup(TOY);
    fit(dir.path(), "run", "2", &["--seed", "3"]);
    ok(&["replay", "run/manifest.json", "--out", "again"], dir.path());
    for f in [
        "map.json",
        "chain.csv",
        "relabeled.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert_eq!(
            fs::read(dir.path().join("run").join(f)).unwrap(),
            fs::read(dir.path().join("again").join(f)).unwrap(),
            "{f} differs"
        );
    }
    fs::write(dir.path().join("data.csv"), "# K=4\n1,2\n").unwrap();
    let out = plmix(&["replay", "run/manifest.json", "--out", "third"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn simulate_tiny_study() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--g-star",
        "1",
        "--censoring",
        "A",
        "--replicates",
        "2",
        "--n",
        "60",
        "--gmax",
        "2",
        "--iters",
        "300",
        "--burnin",
        "100",
        "--starts",
        "2",
        "--out",
        "sim",
    ];
    ok(&args, dir.path());
    let sim = dir.path().join("sim");
    let table = fs::read_to_string(sim.join("agreement.csv")).unwrap();
    assert_eq!(
        table.lines().next(),
        Some("censoring,G_star,replicates,DIC1,DIC2,BPIC1,BPIC2,BICM1,BICM2,BIC")
    );
    assert_eq!(table.lines().count(), 2);
    ok(&["replay", "sim/manifest.json", "--out", "sim2"], dir.path());
    for f in ["agreement.csv", "distribution.csv", "replicates.csv", "study.json"] {
        assert_eq!(
            fs::read(sim.join(f)).unwrap(),
            fs::read(dir.path().join("sim2").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn simulate_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
replicates = 1
g_grid = [1, 2]
bic_flat_fit = false
seed = 11

[[scenarios]]
g_star = 2
k = 4
n = 80
censoring = "full"

[prior]
shape = 1.0
rate = 0.001
concentration = 1.0

[gibbs]
n_iter = 300
burn_in = 100
thin = 1
seed = 0
keep_labels = false

[em]
max_iter = 200
tol = 1e-8
n_starts = 2
seed = 0
"#;
    fs::write(dir.path().join("study.toml"), config).unwrap();
    ok(&["simulate", "--config", "study.toml", "--out", "sim"], dir.path());
    let study = json(&dir.path().join("sim/study.json"));
    assert_eq!(study["config"]["seed"], 11);
    assert_eq!(study["table"]["rows"].as_array().unwrap().len(), 7);
}

#[test]
fn jobs_flag_does_not_change_results() {
    let dir = setup(TOY);
    let mut a = vec!["--jobs", "1", "select", "data.csv", "--gmax", "2", "--out", "a"];
    a.extend(FAST);
    let mut b = vec!["--jobs", "3", "select", "data.csv", "--gmax", "2", "--out", "b"];
    b.extend(FAST);
    ok(&a, dir.path());
    ok(&b, dir.path());
    assert_eq!(
        fs::read(dir.path().join("a/criteria.csv")).unwrap(),
        fs::read(dir.path().join("b/criteria.csv")).unwrap()
    );
}
