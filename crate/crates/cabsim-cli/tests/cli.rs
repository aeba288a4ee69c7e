//! End-to-end checks of the binary: exit codes, CSV artifacts, and
//! flag/config-file precedence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cabsim"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cabsim_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn summary_fields(dir: &Path) -> Vec<String> {
    let text = read(&dir.join("summary.csv"));
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("policy,cache,budget"));
    split_csv(lines.next().expect("one data row"))
}

// Minimal CSV field splitter honoring double quotes.
fn split_csv(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for c in line.chars() {
        match c {
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

#[test]
fn run_writes_csvs_and_reports_cost() {
    let dir = tmpdir("run");
    let out: Output = bin()
        .args([
            "run",
            "--workload",
            "zipf:4000,0.9,120000",
            "--cache",
            "512",
            "--seed",
            "7",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("avg_cost = "), "{stdout}");

    let segments = read(&dir.join("segments.csv"));
    let header = segments.lines().next().unwrap();
    assert_eq!(
        header,
        "segment_index,t_end,indicator_bits,update_interval,mode,fp_ratio,fn_ratio,\
bw_attempted_per_req,bw_delivered_per_req,hit_ratio,avg_cost_segment,dropped_updates"
    );
    assert!(segments.lines().count() > 10);

    let fields = summary_fields(&dir);
    assert_eq!(fields[0], "lru");
    assert_eq!(fields[1], "512");
    assert_eq!(fields[9], "zipf:4000,0.9,120000,1");
    assert_eq!(fields[10], "cab");
    let cost: f64 = fields[15].parse().unwrap();
    assert!((1.0..=4.0).contains(&cost), "cost bounds at M = 3: {cost}");
}

#[test]
fn cf_summary_matches_closed_form() {
    let dir = tmpdir("cf");
    let out = bin()
        .args([
            "run",
            "--workload",
            "zipf:4000,0.9,120000",
            "--cache",
            "512",
            "--seed",
            "7",
            "--adv",
            "cf",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let fields = summary_fields(&dir);
    let hit: f64 = fields[12].parse().unwrap();
    let cost: f64 = fields[15].parse().unwrap();
    assert!((cost - (1.0 + 3.0 * (1.0 - hit))).abs() < 1e-4);
}

#[test]
fn static_adv_is_accepted() {
    let dir = tmpdir("static");
    let out = bin()
        .args([
            "run",
            "--workload",
            "zipf:4000,0.9,60000",
            "--cache",
            "512",
            "--adv",
            "static:7680,384",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let fields = summary_fields(&dir);
    assert_eq!(fields[10], "static:7680,384");
}

#[test]
fn invalid_flags_exit_2() {
    for args in [
        vec!["run", "--workload", "poisson:12"],
        vec!["run", "--workload", "zipf:0,1,1"],
        vec!["run", "--workload", "zipf:10,0.9,100", "--adv", "static:0,5"],
        vec!["run", "--workload", "zipf:10,0.9,100", "--policy", "mru"],
        vec!["run", "--workload", "zipf:10,0.9,100", "--miss-penalty", "1"],
        vec!["sweep", "--workload", "zipf:10,0.9,100", "--dim", "zorp", "--values", "1"],
        vec![
            "sweep",
            "--workload",
            "zipf:10,0.9,100",
            "--dim",
            "interval",
            "--values",
            "16,128",
        ], // interval sweep without a static advertiser
        vec!["run"], // workload missing entirely
    ] {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "args {args:?}: {out:?}");
    }
}

#[test]
fn missing_trace_file_exits_1() {
    let out = bin()
        .args(["run", "--workload", "file:/nonexistent/trace.txt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn empty_trace_file_exits_1() {
    let dir = tmpdir("empty");
    let trace = dir.join("empty.trace");
    std::fs::write(&trace, "").unwrap();
    let out = bin()
        .args(["run", "--workload", &format!("file:{}", trace.display())])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn trace_file_roundtrip() {
    let dir = tmpdir("trace");
    let trace = dir.join("keys.trace");
    let body: String = (0..5000).map(|i| format!("item{}\n", i % 37)).collect();
    std::fs::write(&trace, body).unwrap();
    let out = bin()
        .args([
            "run",
            "--workload",
            &format!("file:{}", trace.display()),
            "--cache",
            "64",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let fields = summary_fields(&dir);
    // 37 distinct keys in a 64-slot cache: everything resident quickly.
    let hit: f64 = fields[12].parse().unwrap();
    assert!(hit > 0.9, "hit = {hit}");
}

#[test]
fn grid_with_no_feasible_configuration_exits_3() {
    let dir = tmpdir("grid3");
    // A budget so large that the maximal full-update interval falls below
    // the minimal one: the candidate grid itself is empty, so no feasible
    // static configuration exists.
    let out = bin()
        .args([
            "grid",
            "--workload",
            "zipf:4000,0.9,60000",
            "--cache",
            "256",
            "--budget",
            "1000000",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("no feasible static configuration"), "{stderr}");
    // The cost table is still emitted.
    assert!(dir.join("grid.csv").exists());
}

#[test]
fn grid_reports_best_feasible() {
    let dir = tmpdir("grid");
    let out = bin()
        .args([
            "grid",
            "--workload",
            "zipf:4000,0.9,80000",
            "--cache",
            "128",
            "--seed",
            "5",
            "--jobs",
            "2",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("best static: "), "{stdout}");
    let grid = read(&dir.join("grid.csv"));
    assert!(grid.lines().next().unwrap().starts_with("indicator_bits,update_interval,feasible"));
    assert!(grid.lines().count() > 100);
}

#[test]
fn sweep_single_value_matches_run() {
    let run_dir = tmpdir("sweep_run");
    let sweep_dir = tmpdir("sweep_sweep");
    let common = [
        "--workload",
        "zipf:4000,0.9,120000",
        "--cache",
        "512",
        "--seed",
        "11",
    ];
    let out = bin()
        .args(["run"])
        .args(common)
        .args(["--budget", "40", "--out", run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = bin()
        .args(["sweep", "--dim", "budget", "--values", "40"])
        .args(common)
        .args(["--out", sweep_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_eq!(summary_fields(&run_dir), summary_fields(&sweep_dir));
}

#[test]
fn budget_sweep_writes_one_row_per_value() {
    let dir = tmpdir("sweep4");
    let out = bin()
        .args([
            "sweep",
            "--dim",
            "budget",
            "--values",
            "10,20,40,80",
            "--workload",
            "zipf:4000,0.9,120000",
            "--cache",
            "512",
            "--seed",
            "2",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = read(&dir.join("summary.csv"));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let budgets: Vec<String> = rows.iter().map(|r| split_csv(r)[2].clone()).collect();
    assert_eq!(budgets, ["10", "20", "40", "80"]);
}

#[test]
fn interval_sweep_shows_staleness_growth() {
    // With an unconstrained budget, longer update intervals mean staler
    // client filters and a monotonically rising false-negative ratio.
    let dir = tmpdir("sweep_interval");
    let out = bin()
        .args([
            "sweep",
            "--dim",
            "interval",
            "--values",
            "16,256,4096",
            "--adv",
            "static:4096,16",
            "--budget",
            "1000000000",
            "--workload",
            "zipf:20000,0.9,400000",
            "--cache",
            "1024",
            "--seed",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = read(&dir.join("summary.csv"));
    let fns: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|r| split_csv(r)[14].parse().unwrap())
        .collect();
    assert_eq!(fns.len(), 3);
    assert!(fns[0] < fns[1] && fns[1] < fns[2], "fn ratios: {fns:?}");
}

#[test]
fn config_file_applies_and_flags_override() {
    let dir = tmpdir("config");
    let cfg = dir.join("exp.conf");
    std::fs::write(
        &cfg,
        "# experiment defaults\nworkload = zipf:4000,0.9,120000\ncache = 512\nseed = 9\nbudget = 10\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--budget",
            "40",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let fields = summary_fields(&dir);
    assert_eq!(fields[1], "512", "config file applies");
    assert_eq!(fields[2], "40", "flag overrides config");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tmpdir("badkey");
    let cfg = dir.join("bad.conf");
    std::fs::write(&cfg, "workload = zipf:10,0.9,100\nwombat = 3\n").unwrap();
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("wombat"), "{stderr}");
}
