//! End-to-end runs of the `mobcache` binary.

use std::path::Path;
use std::process::{Command, Output};

const BS_CONF: &str = "\
scenario = bs
seed = 3
replicates = 2
trials = 500
strategies = coded, uncoded_exact, uncoded_local, mpc
sweep.param = gamma
sweep.values = 0.5, 1.2
model.num_nodes = 3
model.num_files = 6
model.capacity = 1
model.rate = 1
mobility.source = synthetic
mobility.sojourn_range_s = 1, 3
mobility.horizon_s = 6
mobility.num_paths = 40
mobility.replay_paths = 100
solver.iterations = 300
";

const UT_CONF: &str = "\
scenario = ut
seed = 3
trials = 500
strategies = greedy, random_zipf, mpc
sweep.param = num_users
sweep.values = 4, 8, 12
model.num_users = 12
model.num_files = 20
model.capacity = 1
model.delay_threshold_s = 10
contacts.source = synthetic
contacts.mean_rate = 0.05
contacts.pair_density = 0.5
random_zipf.grid = 0, 1, 2
random_zipf.trials = 5
";

fn mobcache(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobcache"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(conf: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), conf).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn bs_sweep_has_one_row_per_point_strategy_and_metric() {
    let dir = setup(BS_CONF);
    let out = mobcache(dir.path(), &["sweep", "--config", "run.conf", "--out", "out"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("out"), "results.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("grid_param,grid_value,strategy,metric,value,std_error,seed")
    );
    // 2 grid values x 4 strategies x 3 metrics.
    assert_eq!(lines.clone().count(), 24);
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 7, "{line}");
        assert_eq!(fields[0], "gamma");
        let v: f64 = fields[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&v), "{line}");
    }
    for chart in ["failure_prob.svg", "served_fraction.svg", "failure_prob_replay.svg"] {
        assert!(read(&dir.path().join("out"), chart).starts_with("<svg"));
    }
}

#[test]
fn sweep_is_byte_identical_across_reruns_and_thread_counts() {
    let dir = setup(UT_CONF);
    let a = mobcache(
        dir.path(),
        &["sweep", "--config", "run.conf", "--out", "a", "--jobs", "1"],
    );
    let b = mobcache(
        dir.path(),
        &["sweep", "--config", "run.conf", "--out", "b", "--jobs", "3"],
    );
    assert!(a.status.success() && b.status.success());
    let csv = read(&dir.path().join("a"), "results.csv");
    assert_eq!(csv, read(&dir.path().join("b"), "results.csv"));
    // 3 grid values x 3 strategies x 2 metrics.
    assert_eq!(csv.lines().count(), 1 + 18);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("num_users,")));

    let c = mobcache(
        dir.path(),
        &["sweep", "--config", "run.conf", "--out", "c", "--seed", "4"],
    );
    assert!(c.status.success());
    assert_ne!(csv, read(&dir.path().join("c"), "results.csv"));
}

#[test]
fn optimize_then_evaluate_round_trips_a_placement() {
    let dir = setup(BS_CONF);
    let out = mobcache(dir.path(), &["optimize", "--config", "run.conf", "--out", "p"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let placement = read(&dir.path().join("p"), "placement_coded.csv");
    assert!(placement.starts_with("node,file,fraction\n"));
    for line in placement.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 3);
        let frac: f64 = f[2].parse().unwrap();
        assert!(frac > 0.0 && frac <= 1.0);
    }
    assert!(dir.path().join("p/placement_mpc.csv").exists());

    let out = mobcache(
        dir.path(),
        &[
            "evaluate",
            "--config",
            "run.conf",
            "--placement",
            "p/placement_mpc.csv",
            "--out",
            "e",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("e"), "evaluate.csv");
    assert!(csv.starts_with("metric,value,std_error\n"));
    assert!(csv.contains("failure_prob,"));
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let dir = setup(&format!("{UT_CONF}contacts.mean_rte = 0.1\n"));
    let out = mobcache(dir.path(), &["sweep", "--config", "run.conf", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: kind=config field=contacts.mean_rte"), "{err}");
    assert!(!dir.path().join("x").exists());

    let out = mobcache(
        dir.path(),
        &["sweep", "--config", "run.conf", "--set", "model.capacity=1.5"],
    );
    assert_eq!(out.status.code(), Some(2));

    let dir = setup(&UT_CONF.replace("model.delay_threshold_s = 10\n", ""));
    let out = mobcache(dir.path(), &["sweep", "--config", "run.conf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("field=model.delay_threshold_s"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mobcache(dir.path(), &["sweep", "--config", "nope.conf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: kind=io"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mobcache(dir.path(), &["selftest", "--seed", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS ")).count(), 5, "{text}");
}
