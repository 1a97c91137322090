//! Base-station placement on a synthetic Markov mobility model: MPC,
//! whole-file placement (local search and exact), and coded placement.

use mobcache::bs_place::{
    failure_probability, optimize_coded, optimize_coded_failure, optimize_uncoded, served_fraction_objective,
    BsInstance, CodedRefineOptions, UncodedMode,
};
use mobcache::mobility::{sample_paths, CellTransitionModel};
use mobcache::{mpc_placement, zipf_pmf, Capacities};

fn main() -> mobcache::Result<()> {
    let model = CellTransitionModel::random(4, (1.0, 3.0), 7)?;
    let paths = sample_paths(&model, 8.0, 200, 7)?;
    let inst = BsInstance::new(paths, zipf_pmf(12, 1.0)?, 1.0, Capacities::uniform(4, 1.0)?)?;

    let mpc = mpc_placement(inst.popularity(), inst.caps(), inst.num_bs())?;
    let local = optimize_uncoded(&inst, UncodedMode::LocalSearch { restarts: 4 }, 7)?;
    let exact = optimize_uncoded(&inst, UncodedMode::Exact, 0)?;
    let relaxed = optimize_coded(&inst, 2000, 0);
    let opts = CodedRefineOptions {
        iterations: 2000,
        ..Default::default()
    };
    let coded = optimize_coded_failure(&inst, &[local.to_coded()], &opts, 0);

    println!("{:<16} {:>9} {:>9}", "strategy", "failure", "served");
    let show = |name: &str, x: &mobcache::CodedPlacement| -> mobcache::Result<()> {
        println!(
            "{name:<16} {:>9.4} {:>9.4}",
            failure_probability(x, &inst)?,
            served_fraction_objective(x, &inst)?
        );
        Ok(())
    };
    show("mpc", &mpc.to_coded())?;
    show("uncoded_local", &local.to_coded())?;
    show("uncoded_exact", &exact.to_coded())?;
    show("coded_relaxed", &relaxed)?;
    show("coded", &coded)?;

    println!("\ncoded placement (station: file=fraction):");
    for n in 0..inst.num_bs() {
        let held: Vec<String> = coded
            .row(n)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(f, v)| format!("{f}={v}"))
            .collect();
        println!("  {n}: {}", held.join(" "));
    }
    Ok(())
}
