//! Synthetic association trace from random-waypoint users on a cell grid,
//! then a Markov handover model fitted to it.

use mobcache::mobility::{estimate_transition_model, random_waypoint_trace, WaypointParams};

fn main() -> mobcache::Result<()> {
    let params = WaypointParams {
        width_m: 900.0,
        height_m: 600.0,
        cells_x: 3,
        cells_y: 2,
        speed_mps: (1.0, 3.0),
        pause_s: (0.0, 60.0),
        duration_s: 3600.0,
        num_users: 20,
    };
    let trace = random_waypoint_trace(&params, 42)?;
    println!("{} association records over {} cells", trace.len(), trace.num_cells());
    for line in trace.to_csv().lines().take(4) {
        println!("  {line}");
    }

    let model = estimate_transition_model(&trace, None)?;
    println!("\nmean sojourn per cell (s):");
    for (c, t) in model.mean_sojourn().iter().enumerate() {
        println!("  cell {c}: {t:.1}");
    }
    println!(
        "\nhandover probabilities from cell 0: {:?}",
        model.transition()[0]
            .iter()
            .map(|p| (p * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );
    Ok(())
}
