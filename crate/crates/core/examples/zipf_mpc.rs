//! Zipf request popularity and the most-popular-content baseline.
//!
//! Run with `cargo run --example zipf_mpc`.

use mobcache::{mpc_placement, sample_request, zipf_pmf, Capacities, Storage};

fn main() -> mobcache::Result<()> {
    for gamma in [0.0, 0.8, 1.6] {
        let pop = zipf_pmf(100, gamma)?;
        println!(
            "gamma {gamma}: p[0] = {:.4}, top-10 mass = {:.4}",
            pop.prob(0),
            pop.head_mass(10)
        );
    }

    let pop = zipf_pmf(20, 1.0)?;
    let draws: Vec<usize> = (0..10).map(|seed| sample_request(&pop, seed)).collect();
    println!("ten requests: {draws:?}");

    // Every node keeps the same top files.
    let caps = Capacities::new(vec![1.0, 2.0, 3.0])?;
    let mpc = mpc_placement(&pop, &caps, 3)?;
    for n in 0..mpc.num_nodes() {
        println!("node {n} stores {:?}", mpc.files_at(n));
    }
    Ok(())
}
