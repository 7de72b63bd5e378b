use ehsched_core::harness::{read_metrics_csv, run_simulation, svg};
use ehsched_core::{RunOptions, SchedulerKind, SystemParams};

#[test]
fn csv_round_trips_through_disk() {
    let params = SystemParams::reference();
    let dir = tempfile::tempdir().unwrap();
    for scheduler in SchedulerKind::ALL {
        let options = RunOptions {
            scheduler,
            num_slots: 400,
            seed: 11,
            grid_power: false,
        };
        let log = run_simulation(&params, &options).unwrap();
        let path = dir.path().join(format!("{scheduler}.csv"));
        log.save_csv(&path).unwrap();
        let back = read_metrics_csv(&path, params.slot_duration).unwrap();
        assert_eq!(back.rows, log.rows, "{scheduler}");
        assert_eq!(back.to_csv_string().unwrap(), log.to_csv_string().unwrap());
        assert!(log.running_average_error() < 1e-9);
    }
}

#[test]
fn charts_are_written() {
    let params = SystemParams::reference();
    let options = RunOptions {
        scheduler: SchedulerKind::Stochastic,
        num_slots: 50,
        seed: 2,
        grid_power: false,
    };
    let log = run_simulation(&params, &options).unwrap();
    let dir = tempfile::tempdir().unwrap();
    svg::write_run_charts(&log, dir.path(), "run").unwrap();
    for name in ["run_rates.svg", "run_battery.svg"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with("<svg") && text.contains("<path"));
    }
    assert!(svg::write_run_charts(&log, &dir.path().join("missing"), "run").is_err());
}
