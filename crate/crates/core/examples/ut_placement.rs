//! User-terminal placement on a random contact graph: greedy, random Zipf
//! caching with a tuned exponent, and MPC.

use mobcache::mobility::ContactModel;
use mobcache::ut_place::{greedy_with_steps, line_search_gamma, offloading_ratio, UtInstance};
use mobcache::{mpc_placement, zipf_pmf, Capacities};

fn main() -> mobcache::Result<()> {
    let k = 30;
    let caps = Capacities::uniform(k, 1.0)?;
    let contacts = ContactModel::random(k, 0.05, 0.3, 3)?;
    let inst = UtInstance::new(contacts, zipf_pmf(200, 1.0)?, 10.0, &caps)?;

    let (greedy, steps) = greedy_with_steps(&inst);
    println!("first greedy picks (user, file, gain):");
    for s in steps.iter().take(5) {
        println!("  ({}, {}, {:.4})", s.user, s.file, s.gain);
    }

    let grid: Vec<f64> = (0..=12).map(|i| i as f64 * 0.25).collect();
    let ls = line_search_gamma(&inst, &grid, 20, 3)?;
    let mpc = mpc_placement(inst.popularity(), &caps, k)?;

    println!("\ngreedy      {:.4}", offloading_ratio(&greedy, &inst)?);
    println!(
        "random zipf {:.4} ± {:.4} (gamma_c = {})",
        ls.mean_ratio, ls.std_error, ls.gamma_c
    );
    println!("mpc         {:.4}", offloading_ratio(&mpc, &inst)?);
    Ok(())
}
