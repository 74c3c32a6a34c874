use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn keyshare(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyshare"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn four_member_args() -> Vec<String> {
    vec![
        "--meters".into(),
        fixture("four_members.csv").display().to_string(),
        "--signed".into(),
        "--prices".into(),
        fixture("prices.json").display().to_string(),
    ]
}

fn run(command: &str, extra: &[&str], out: &Path) -> Output {
    let mut args: Vec<String> = vec![command.to_string()];
    args.extend(four_member_args());
    args.extend(extra.iter().map(|s| s.to_string()));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    keyshare(&args, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Rows of a `timestamp,<member>,...` CSV as numbers.
fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn assert_close(found: &[Vec<f64>], expected: &[[f64; 4]], tol: f64) {
    for (row, want) in found.iter().zip(expected) {
        for (f, w) in row.iter().zip(want) {
            assert!((f - w).abs() <= tol, "{found:?} vs {expected:?}");
        }
    }
}

#[test]
fn settle_reproduces_the_four_member_example() {
    let dir = TempDir::new().unwrap();
    let o = run("settle", &["--keys", "proportional-static"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let p = dir.path();
    assert_close(
        &read_matrix(&p.join("keys.csv")),
        &[[0.39, 0.45, 0.0, 0.16], [0.47, 0.53, 0.0, 0.0]],
        0.01,
    );
    assert_close(
        &read_matrix(&p.join("verified.csv")),
        &[[0.17, 0.21, 0.0, 0.08], [0.15, 0.17, 0.0, 0.0]],
        0.01,
    );
    assert_close(
        &read_matrix(&p.join("local_sales.csv")),
        &[[0.0, 0.0, 0.46, 0.0], [0.0, 0.0, 0.30, 0.02]],
        0.01,
    );
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(p.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["members"], 4);
    for name in ["initial_keys.csv", "allocations.csv", "bills.csv", "manifest.json"] {
        assert!(p.join(name).exists(), "{name} missing");
    }
}

#[test]
fn zero_deviation_keeps_the_initial_keys() {
    let dir = TempDir::new().unwrap();
    let o = run("settle", &["--max-deviation", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("keys.csv")).unwrap(),
        fs::read(dir.path().join("initial_keys.csv")).unwrap()
    );
}

#[test]
fn missing_price_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let mut prices: serde_json::Value = serde_json::from_slice(&fs::read(fixture("prices.json")).unwrap()).unwrap();
    prices.as_object_mut().unwrap().remove("User3");
    let path = dir.path().join("prices.json");
    fs::write(&path, prices.to_string()).unwrap();
    let meters = fixture("four_members.csv");
    let o = keyshare(
        &[
            "settle",
            "--meters",
            meters.to_str().unwrap(),
            "--signed",
            "--prices",
            path.to_str().unwrap(),
        ],
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR:config:"), "{}", stderr(&o));
}

#[test]
fn unreachable_floor_exits_with_a_diagnostic() {
    let dir = TempDir::new().unwrap();
    let o = run("settle", &["--ssr-floor", "0.95"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR:infeasible:"), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("infeasibility.json")).unwrap();
    assert!(report.contains("User2"), "{report}");
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"infeasible\""));
}

#[test]
fn bad_input_is_reported_with_its_category() {
    let dir = TempDir::new().unwrap();
    let meters = dir.path().join("bad.csv");
    fs::write(&meters, "timestamp,a,b\n2017-03-01T00:00:00Z,0.1,x\n").unwrap();
    let prices = fixture("prices.json");
    let o = keyshare(
        &[
            "settle",
            "--meters",
            meters.to_str().unwrap(),
            "--signed",
            "--prices",
            prices.to_str().unwrap(),
        ],
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR:input:"), "{}", stderr(&o));

    let o = keyshare(&["settle", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR:usage:"), "{}", stderr(&o));
}

#[test]
fn identical_runs_write_identical_files() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let o = run("settle", &["--oracle", "--dump-mps"], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 10);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn manifest_hashes_inputs_and_outputs() {
    use sha2::{Digest, Sha256};
    let dir = TempDir::new().unwrap();
    assert!(run("settle", &[], dir.path()).status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let meters = hex::encode(Sha256::digest(fs::read(fixture("four_members.csv")).unwrap()));
    assert_eq!(manifest["inputs"][0]["role"], "meters");
    assert_eq!(manifest["inputs"][0]["sha256"], meters.as_str());
    for out in manifest["outputs"].as_array().unwrap() {
        let data = fs::read(dir.path().join(out["file"].as_str().unwrap())).unwrap();
        assert_eq!(out["sha256"], hex::encode(Sha256::digest(data)).as_str());
    }
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["settings"]["signed"], true);
}

#[test]
fn bill_recomputes_saved_flows() {
    let settled = TempDir::new().unwrap();
    assert!(run("settle", &[], settled.path()).status.success());
    let billed = TempDir::new().unwrap();
    let o = run("bill", &["--settlement", settled.path().to_str().unwrap()], billed.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(settled.path().join("bills.csv")).unwrap(),
        fs::read(billed.path().join("bills.csv")).unwrap()
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.json");
    let body = serde_json::json!({
        "meters": fixture("four_members.csv"),
        "signed": true,
        "prices": fixture("prices.json"),
        "keys": "uniform",
        "max_deviation": 0.5,
    });
    fs::write(&config, body.to_string()).unwrap();
    let out = dir.path().join("out");
    let o = keyshare(&["settle", "--config", config.to_str().unwrap(), "--max-deviation", "0"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_close(
        &read_matrix(&out.join("keys.csv")),
        &[[1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0], [0.5, 0.5, 0.0, 0.0]],
        1e-6,
    );

    fs::write(&config, r#"{"meters": "x.csv", "colour": 1}"#).unwrap();
    let o = keyshare(&["settle", "--config", config.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR:config:"), "{}", stderr(&o));
}

#[test]
fn dual_channel_input_matches_signed_input() {
    let dir = TempDir::new().unwrap();
    // The same readings as the fixture, in local time at UTC+1.
    let consumption = dir.path().join("c.csv");
    let production = dir.path().join("p.csv");
    fs::write(
        &consumption,
        "timestamp,User1,User2,User3,User4\n2017-03-01 01:00,0.17,0.21,0,0.08\n2017-03-01 01:15,0.21,0.23,0,0\n",
    )
    .unwrap();
    fs::write(
        &production,
        "timestamp,User1,User2,User3,User4\n2017-03-01 01:00,0,0,0.5,0\n2017-03-01 01:15,0,0,0.3,0.02\n",
    )
    .unwrap();
    let prices = fixture("prices.json");
    let dual = dir.path().join("dual");
    let o = keyshare(
        &[
            "settle",
            "--consumption",
            consumption.to_str().unwrap(),
            "--production",
            production.to_str().unwrap(),
            "--tz",
            "+01:00",
            "--prices",
            prices.to_str().unwrap(),
        ],
        &dual,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let signed = dir.path().join("signed");
    assert!(run("settle", &[], &signed).status.success());
    for name in ["keys.csv", "verified.csv", "local_sales.csv", "bills.csv"] {
        assert_eq!(fs::read(dual.join(name)).unwrap(), fs::read(signed.join(name)).unwrap(), "{name}");
    }
}

fn sweep_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("sweep.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn deviation_sweep_never_raises_the_objective() {
    let dir = TempDir::new().unwrap();
    let o = run("sweep", &["--parameter", "max-deviation", "--keys", "uniform"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = sweep_rows(dir.path());
    assert_eq!(rows.len(), 11);
    let objective: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(objective.windows(2).all(|w| w[1] <= w[0]), "{objective:?}");
    assert!(objective[10] < objective[0]);
}

#[test]
fn floor_sweep_never_lowers_the_objective() {
    let dir = TempDir::new().unwrap();
    let o = run("sweep", &["--parameter", "ssr-floor", "--keys", "uniform", "--step", "0.05"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = sweep_rows(dir.path());
    assert_eq!(rows.len(), 21);
    let feasible: Vec<f64> = rows
        .iter()
        .take_while(|r| r[1] == "optimal")
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert!(feasible.windows(2).all(|w| w[1] >= w[0]), "{feasible:?}");
    assert!(rows[feasible.len()..].iter().all(|r| r[1] == "infeasible"));
}

#[test]
fn empty_sweep_grid_is_an_error() {
    let dir = TempDir::new().unwrap();
    let o = run("sweep", &["--parameter", "ssr-floor", "--from", "0.6", "--to", "0.2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR:config:"), "{}", stderr(&o));
}

#[test]
fn feasibility_prints_the_largest_floor() {
    let dir = TempDir::new().unwrap();
    let o = run("feasibility", &[], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let s: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("s* = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(s > 0.5 && s < 0.95, "{stdout}");
    assert!(stdout.contains("probes = "));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("User")).count(), 4);

    let floor = format!("{s}");
    let above = format!("{}", s + 1e-3);
    assert!(run("settle", &["--ssr-floor", &floor], &dir.path().join("at")).status.success());
    assert_eq!(run("settle", &["--ssr-floor", &above], &dir.path().join("above")).status.code(), Some(2));
}

#[test]
fn oracle_agrees_with_the_solver() {
    let dir = TempDir::new().unwrap();
    let o = run("oracle", &[], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(report["consistent"], true);
    assert!(report["gap"].as_f64().unwrap().abs() < 1e-3);
}

#[test]
fn keys_command_writes_initial_keys() {
    let dir = TempDir::new().unwrap();
    let o = run("keys", &["--keys", "proportional-static"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_close(
        &read_matrix(&dir.path().join("keys.csv")),
        &[[0.4222, 0.4889, 0.0, 0.0889], [0.4222, 0.4889, 0.0, 0.0889]],
        5e-5,
    );
}

#[test]
fn bench_emits_one_row_and_rejects_empty_sizes() {
    let dir = TempDir::new().unwrap();
    let o = keyshare(&["bench", "--periods", "96", "--members", "10"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("periods,members,rows,columns,nonzeros,build_s,solve_s"));
    assert!(lines[1].starts_with("96,10,"));

    let o = keyshare(&["bench", "--periods", "0", "--members", "10"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR:"), "{}", stderr(&o));
}
