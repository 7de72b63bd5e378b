use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ehsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehsched")).args(args).output().unwrap()
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn run_writes_csv_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("reference.toml");
    let out = dir.path().to_str().unwrap();
    let args = [
        "run",
        "--config",
        config.to_str().unwrap(),
        "--scheduler",
        "pf-sum",
        "--slots",
        "300",
        "--seed",
        "9",
        "--out",
        out,
        "--grid-power",
        "--svg",
    ];
    let result = ehsched(&args);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let csv = fs::read_to_string(dir.path().join("pf-sum_seed9.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("slot,battery,consumed,harvested,outage"));
    assert_eq!(lines.count(), 300);
    assert!(dir.path().join("pf-sum_seed9_rates.svg").exists());
    assert!(dir.path().join("pf-sum_seed9_battery.svg").exists());

    // Same seed, same bytes.
    let again = tempfile::tempdir().unwrap();
    let mut args = args.to_vec();
    args[10] = again.path().to_str().unwrap();
    assert!(ehsched(&args).status.success());
    assert_eq!(csv, fs::read_to_string(again.path().join("pf-sum_seed9.csv")).unwrap());
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let reference = fs::read_to_string(configs().join("reference.toml")).unwrap();
    fs::write(&bad, format!("{reference}\nmystery_key = 3\n")).unwrap();
    let result = ehsched(&["run", "--config", bad.to_str().unwrap(), "--slots", "5"]);
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("mystery_key"));

    let missing = ehsched(&["run", "--config", "/nonexistent/x.toml", "--slots", "5"]);
    assert!(!missing.status.success());
    let scheduler = ehsched(&["run", "--scheduler", "round-robin", "--slots", "5"]);
    assert!(!scheduler.status.success());
}

#[test]
fn sweep_resolves_config_next_to_spec() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(configs().join("reference.toml"), dir.path().join("base.toml")).unwrap();
    let spec = dir.path().join("sweep.toml");
    fs::write(
        &spec,
        "config = \"base.toml\"\nvariable = \"r_bh\"\nvalues = [\"500 Kbps\", \"2 Mbps\"]\nslots = 200\n\
         schedulers = [\"stochastic\", \"pf-per-user\"]\ngrid_power = true\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = ehsched(&[
        "sweep",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let csv = fs::read_to_string(out.join("sweep_r_bh.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "r_bh,scheduler,sum_avg_rate,min_avg_rate,jain,available_backhaul"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("500000,stochastic,"));
    assert!(lines[4].starts_with("2000000,pf-per-user,"));
}

#[test]
fn oracle_check_reports_every_trial() {
    let result = ehsched(&[
        "oracle-check",
        "--users",
        "2",
        "--grid",
        "60x21",
        "--trials",
        "3",
        "--seed",
        "4",
    ]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert_eq!(
        stdout
            .lines()
            .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
            .count(),
        3
    );
    assert!(stdout.contains("worst relative gap"));
    assert!(!ehsched(&["oracle-check", "--grid", "60"]).status.success());
    assert!(
        !ehsched(&["oracle-check", "--users", "5", "--grid", "60x21", "--trials", "1"])
            .status
            .success()
    );
}
