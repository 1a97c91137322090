//! Mobility-aware cache placement for wireless edge networks.
//!
//! Two placement problems share one set of domain types:
//!
//! * [`bs_place`]: base stations store whole files or coded fractions, and a
//!   passing user collects a file from the stations along its path. Placement
//!   minimizes the probability that a request cannot be completed.
//! * [`ut_place`]: user terminals store whole files and serve each other over
//!   device-to-device links when they meet. Placement maximizes the fraction
//!   of requests served within a delay threshold.
//!
//! [`mobility`] turns association and contact traces into the models these
//! problems consume, and generates synthetic traces. [`evalsim`] replays
//! requests event by event to check the closed-form metrics, and [`bench`]
//! runs configured strategy sweeps and writes CSV/SVG reports.
//!
//! See `examples/` for one runnable program per capability.

#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod bs_place;
pub mod error;
pub mod evalsim;
pub mod mobility;
pub mod model;
pub mod rng;
pub mod ut_place;

pub use error::{Error, Result};
pub use model::{
    mpc_placement, sample_request, zipf_pmf, Capacities, CodedPlacement, DiscretePlacement, Storage, ZipfPopularity,
};
