//! A declarative sweep: parse a config, run it, write CSV and SVG.
//!
//! The same thing from the command line:
//! `mobcache sweep --config configs/ut_skew.conf --out results/`.

use mobcache::bench::{emit_report, results_csv, run_experiment, ExperimentConfig};

const CONFIG: &str = "
scenario = ut
seed = 3
replicates = 3
trials = 5000
strategies = greedy, random_zipf, mpc
sweep.param = rate_scale
sweep.values = 0.5, 1, 2
model.num_users = 20
model.num_files = 100
model.gamma = 1.0
model.delay_threshold_s = 10
contacts.mean_rate = 0.05
contacts.pair_density = 0.3
";

fn main() -> mobcache::Result<()> {
    let cfg = ExperimentConfig::parse(CONFIG)?;
    let rows = run_experiment(&cfg)?;
    print!("{}", results_csv(&rows));

    let out = std::env::temp_dir().join("mobcache_config_sweep");
    for path in emit_report(&rows, &out, true)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
