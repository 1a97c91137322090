//! Monte Carlo replay of individual requests, used to check the closed-form
//! metrics of [`bs_place`](crate::bs_place) and [`ut_place`](crate::ut_place).
//!
//! Trial `t` draws from RNG stream `t` of the report seed, so results do not
//! depend on how trials are scheduled across threads.

use std::collections::HashMap;

use rand::Rng as _;
use rayon::prelude::*;

use crate::bs_place::{failure_probability, BsInstance, COMPLETE_TOL};
use crate::error::{Error, Result};
use crate::mobility::{
    ordered_paths_from_trace, poisson_arrivals, AssociationTrace, ContactModel, ContactTrace, OrderedPath,
    PathScenarioSet, Visit,
};
use crate::model::{Capacities, DiscretePlacement, Storage, ZipfPopularity};
use crate::rng;
use crate::ut_place::{offloading_ratio, UtInstance};

/// Empirical metric next to its closed-form counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub metric_name: String,
    /// Closed-form value, when one exists for the input kind.
    pub analytic_value: Option<f64>,
    pub empirical_value: f64,
    pub trials: usize,
    pub std_error: f64,
    pub seed: u64,
}

impl ReplayReport {
    fn from_hits(metric: &str, analytic: Option<f64>, hits: usize, trials: usize, seed: u64) -> Self {
        let p = hits as f64 / trials as f64;
        ReplayReport {
            metric_name: metric.to_string(),
            analytic_value: analytic,
            empirical_value: p,
            trials,
            std_error: (p * (1.0 - p) / trials as f64).sqrt(),
            seed,
        }
    }

    /// `|empirical − analytic|`, when an analytic value exists.
    pub fn gap(&self) -> Option<f64> {
        self.analytic_value.map(|a| (self.empirical_value - a).abs())
    }
}

/// Mobility input for base-station replay.
#[derive(Debug, Clone, Copy)]
pub enum BsReplaySource<'a> {
    /// Each user's records cut into windows of `horizon_s`.
    Trace {
        trace: &'a AssociationTrace,
        horizon_s: f64,
    },
    /// Equally weighted ordered paths.
    Paths(&'a [OrderedPath]),
    /// Weighted scenarios; each is walked once per cell in index order.
    Scenarios(&'a PathScenarioSet),
}

fn count_hits<F>(trials: usize, seed: u64, trial: F) -> usize
where
    F: Fn(&mut rng::Rng) -> bool + Sync,
{
    (0..trials)
        .into_par_iter()
        .filter(|&t| trial(&mut rng::stream(seed, t as u64)))
        .count()
}

/// Replays requests along ordered visit sequences. Each visit downloads up
/// to `rate * sojourn` of what this station holds and has not yet been
/// delivered; a request fails if the file is still incomplete at the end.
pub fn simulate_bs_replay<S: Storage + Sync>(
    source: BsReplaySource<'_>,
    placement: &S,
    pop: &ZipfPopularity,
    rate: f64,
    trials: usize,
    seed: u64,
) -> Result<ReplayReport> {
    if trials == 0 {
        return Err(Error::invalid("replay needs at least one trial"));
    }
    let num_bs = placement.num_nodes();
    if placement.num_files() != pop.num_files() {
        return Err(Error::DimensionMismatch(format!(
            "placement has {} files, popularity has {}",
            placement.num_files(),
            pop.num_files()
        )));
    }
    let (paths, weights): (Vec<OrderedPath>, Option<Vec<f64>>) = match source {
        BsReplaySource::Trace { trace, horizon_s } => (ordered_paths_from_trace(trace, horizon_s)?, None),
        BsReplaySource::Paths(p) => (p.to_vec(), None),
        BsReplaySource::Scenarios(set) => {
            let paths = set
                .scenarios()
                .iter()
                .map(|s| OrderedPath {
                    visits: s
                        .sojourn_s
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| **t > 0.0)
                        .map(|(cell, &t)| Visit { cell, sojourn_s: t })
                        .collect(),
                })
                .collect();
            (paths, Some(set.scenarios().iter().map(|s| s.weight).collect()))
        }
    };
    if paths.is_empty() {
        return Err(Error::invalid("no paths to replay"));
    }
    let scenarios = match source {
        BsReplaySource::Scenarios(set) => set.clone(),
        _ => PathScenarioSet::from_paths(num_bs, &paths)?,
    };
    if scenarios.num_cells() != num_bs {
        return Err(Error::DimensionMismatch(format!(
            "paths cover {} cells, placement has {num_bs} stations",
            scenarios.num_cells()
        )));
    }
    let inst = BsInstance::new(
        scenarios,
        pop.clone(),
        rate,
        Capacities::uniform(num_bs, pop.num_files() as f64)?,
    )?;
    let analytic = failure_probability(placement, &inst)?;

    let cdf: Option<Vec<f64>> = weights.map(|w| {
        let mut acc = 0.0;
        w.iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect()
    });
    let failures = count_hits(trials, seed, |g| {
        let idx = match &cdf {
            Some(c) => {
                let u = g.random::<f64>();
                c.partition_point(|&x| x <= u).min(paths.len() - 1)
            }
            None => g.random_range(0..paths.len()),
        };
        let file = pop.sample(g);
        let mut taken = vec![0.0; num_bs];
        let mut got = 0.0;
        for v in &paths[idx].visits {
            let avail = (placement.fraction(v.cell, file) - taken[v.cell]).max(0.0);
            let pull = avail.min(rate * v.sojourn_s).min(1.0 - got);
            taken[v.cell] += pull;
            got += pull;
            if got >= 1.0 {
                break;
            }
        }
        got < 1.0 - COMPLETE_TOL
    });
    Ok(ReplayReport::from_hits(
        "failure_prob",
        Some(analytic),
        failures,
        trials,
        seed,
    ))
}

/// Contact input for user-terminal replay.
#[derive(Debug, Clone, Copy)]
pub enum UtReplaySource<'a> {
    /// Fresh Poisson contacts are synthesized for every trial.
    Model(&'a ContactModel),
    /// Recorded contacts; request times are uniform over the observation
    /// window (the trace span by default) minus the delay threshold.
    Trace {
        trace: &'a ContactTrace,
        window: Option<(f64, f64)>,
    },
}

/// Time window before the request over which model contacts are synthesized,
/// in units of the delay threshold.
const MODEL_LEAD_IN: f64 = 3.0;

/// Replays single requests: user uniform, file by popularity. Served when
/// the user holds the file or a holder is met within the delay threshold.
pub fn simulate_ut_replay(
    source: UtReplaySource<'_>,
    placement: &DiscretePlacement,
    pop: &ZipfPopularity,
    delay_threshold_s: f64,
    trials: usize,
    seed: u64,
) -> Result<ReplayReport> {
    if trials == 0 {
        return Err(Error::invalid("replay needs at least one trial"));
    }
    if !(delay_threshold_s > 0.0 && delay_threshold_s.is_finite()) {
        return Err(Error::invalid("delay threshold must be positive"));
    }
    let k = placement.num_nodes();
    if placement.num_files() != pop.num_files() {
        return Err(Error::DimensionMismatch(format!(
            "placement has {} files, popularity has {}",
            placement.num_files(),
            pop.num_files()
        )));
    }
    if k == 0 {
        return Err(Error::invalid("placement has no users"));
    }
    let holders: Vec<Vec<usize>> = (0..pop.num_files()).map(|f| placement.holders(f)).collect();
    let tau = delay_threshold_s;

    match source {
        UtReplaySource::Model(model) => {
            if model.num_users() != k {
                return Err(Error::DimensionMismatch(format!(
                    "contact model has {} users, placement has {k}",
                    model.num_users()
                )));
            }
            let caps = Capacities::new((0..k).map(|u| placement.count_at(u) as f64).collect())?;
            let inst = UtInstance::new(model.clone(), pop.clone(), tau, &caps)?;
            let analytic = offloading_ratio(placement, &inst)?;
            let served = count_hits(trials, seed, |g| {
                let user = g.random_range(0..k);
                let file = pop.sample(g);
                if placement.is_stored(user, file) {
                    return true;
                }
                let t_req = g.random_range(0.0..MODEL_LEAD_IN * tau);
                holders[file].iter().filter(|&&j| j != user).any(|&j| {
                    let rate = model.rate(user, j);
                    rate > 0.0
                        && poisson_arrivals(rate, 0.0, t_req + tau, g)
                            .into_iter()
                            .any(|t| t >= t_req)
                })
            });
            Ok(ReplayReport::from_hits(
                "offloading_ratio",
                Some(analytic),
                served,
                trials,
                seed,
            ))
        }
        UtReplaySource::Trace { trace, window } => {
            let (from, to) = match window.or_else(|| trace.span()) {
                Some(w) => w,
                None => return Err(Error::invalid("empty contact trace needs an explicit window")),
            };
            if to - from < tau {
                return Err(Error::invalid(format!(
                    "trace span {} s shorter than delay threshold {tau} s",
                    to - from
                )));
            }
            if trace.num_users() > k {
                return Err(Error::DimensionMismatch(format!(
                    "trace mentions {} users, placement has {k}",
                    trace.num_users()
                )));
            }
            let index = PairIndex::new(trace);
            let served = count_hits(trials, seed, |g| {
                let user = g.random_range(0..k);
                let file = pop.sample(g);
                if placement.is_stored(user, file) {
                    return true;
                }
                let t_req = if to - from > tau {
                    g.random_range(from..to - tau)
                } else {
                    from
                };
                holders[file]
                    .iter()
                    .filter(|&&j| j != user)
                    .filter_map(|&j| index.delay(user, j, t_req))
                    .any(|d| d <= tau)
            });
            Ok(ReplayReport::from_hits("offloading_ratio", None, served, trials, seed))
        }
    }
}

/// Per-pair contact intervals sorted by start, with running maximum end so
/// "in contact at time t" is one lookup.
struct PairIndex {
    pairs: HashMap<(u32, u32), (Vec<f64>, Vec<f64>)>,
}

impl PairIndex {
    fn new(trace: &ContactTrace) -> Self {
        let mut pairs: HashMap<(u32, u32), (Vec<f64>, Vec<f64>)> = HashMap::new();
        for r in trace.records() {
            let e = pairs.entry((r.user_a, r.user_b)).or_default();
            e.0.push(r.start_s);
            let prev = e.1.last().copied().unwrap_or(f64::NEG_INFINITY);
            e.1.push(prev.max(r.end_s));
        }
        PairIndex { pairs }
    }

    /// Wait from `t` until users `a` and `b` are in contact, if ever.
    fn delay(&self, a: usize, b: usize, t: f64) -> Option<f64> {
        let key = (a.min(b) as u32, a.max(b) as u32);
        let (starts, max_end) = self.pairs.get(&key)?;
        let idx = starts.partition_point(|&s| s < t);
        if idx > 0 && max_end[idx - 1] > t {
            return Some(0.0);
        }
        starts.get(idx).map(|s| s - t)
    }
}
