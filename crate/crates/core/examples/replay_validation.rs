//! Event-level replay against the closed-form metrics, for base stations
//! (ordered paths) and user terminals (synthesized Poisson contacts).

use mobcache::bs_place::{optimize_uncoded, BsInstance, UncodedMode};
use mobcache::evalsim::{simulate_bs_replay, simulate_ut_replay, BsReplaySource, UtReplaySource};
use mobcache::mobility::{sample_ordered_paths, CellTransitionModel, ContactModel, PathScenarioSet};
use mobcache::ut_place::{greedy_placement, UtInstance};
use mobcache::{zipf_pmf, Capacities};

fn main() -> mobcache::Result<()> {
    let model = CellTransitionModel::random(5, (0.5, 2.0), 11)?;
    let paths = sample_ordered_paths(&model, 6.0, 500, 11)?;
    let set = PathScenarioSet::from_paths(5, &paths)?;
    let inst = BsInstance::new(set, zipf_pmf(20, 0.9)?, 1.0, Capacities::uniform(5, 2.0)?)?;
    let placement = optimize_uncoded(&inst, UncodedMode::LocalSearch { restarts: 2 }, 11)?;
    let r = simulate_bs_replay(
        BsReplaySource::Paths(&paths),
        &placement,
        inst.popularity(),
        1.0,
        100_000,
        1,
    )?;
    println!(
        "BS failure: analytic {:.4}, replay {:.4} ± {:.4}",
        r.analytic_value.unwrap_or(f64::NAN),
        r.empirical_value,
        r.std_error
    );

    let k = 12;
    let inst = UtInstance::new(
        ContactModel::random(k, 0.1, 0.5, 5)?,
        zipf_pmf(30, 1.0)?,
        5.0,
        &Capacities::uniform(k, 1.0)?,
    )?;
    let placement = greedy_placement(&inst);
    let r = simulate_ut_replay(
        UtReplaySource::Model(inst.contacts()),
        &placement,
        inst.popularity(),
        inst.delay_threshold_s(),
        100_000,
        2,
    )?;
    println!(
        "UT offloading: analytic {:.4}, replay {:.4} ± {:.4}",
        r.analytic_value.unwrap_or(f64::NAN),
        r.empirical_value,
        r.std_error
    );
    Ok(())
}
