use rand::RngCore as _;
use rayon::prelude::*;

use super::config::{
    BsSettings, ContactSource, ExperimentConfig, MobilitySource, ScenarioSettings, Strategy, SweepParam, UtSettings,
};
use super::report::parse_placement_csv;
use crate::bs_place::{
    failure_probability, optimize_coded_failure, optimize_uncoded, served_fraction_objective, BsInstance,
    CodedRefineOptions, UncodedMode,
};
use crate::error::{Error, Result};
use crate::evalsim::{simulate_bs_replay, simulate_ut_replay, BsReplaySource, UtReplaySource};
use crate::mobility::{
    estimate_contact_model_with_users, parse_association_trace, parse_contact_trace, paths_from_trace,
    sample_ordered_paths, sample_paths, AssociationTrace, CellTransitionModel, ContactModel, ContactTrace, OrderedPath,
};
use crate::model::{mpc_placement, Capacities, CodedPlacement, DiscretePlacement, Storage, ZipfPopularity};
use crate::rng;
use crate::ut_place::{
    greedy_placement, line_search_gamma, mean_and_std_error, offloading_ratio, random_zipf_placement, UtInstance,
};

/// One CSV line of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub grid_param: String,
    pub grid_value: f64,
    pub strategy: Strategy,
    pub metric: String,
    pub value: f64,
    pub std_error: f64,
    pub seed: u64,
}

/// A placement of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Placed {
    Coded(CodedPlacement),
    Discrete(DiscretePlacement),
}

impl Storage for Placed {
    fn num_nodes(&self) -> usize {
        match self {
            Placed::Coded(p) => p.num_nodes(),
            Placed::Discrete(p) => p.num_nodes(),
        }
    }

    fn num_files(&self) -> usize {
        match self {
            Placed::Coded(p) => p.num_files(),
            Placed::Discrete(p) => p.num_files(),
        }
    }

    fn fraction(&self, node: usize, file: usize) -> f64 {
        match self {
            Placed::Coded(p) => p.fraction(node, file),
            Placed::Discrete(p) => p.fraction(node, file),
        }
    }
}

/// Metric value for one replicate, with its own standard error (0 when exact).
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: &'static str,
    pub value: f64,
    pub std_error: f64,
}

/// Seed of replicate `r`.
pub fn replicate_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    cfg.seed.wrapping_add(r as u64)
}

fn derive(seed: u64, tag: u64) -> u64 {
    rng::stream(seed, tag).next_u64()
}

const TAG_REPLAY_PATHS: u64 = 1;
const TAG_REPLAY: u64 = 2;
const TAG_HELD_OUT: u64 = 3;

/// Parameter values at one grid point.
#[derive(Debug, Clone, Copy)]
struct Point {
    num_nodes: usize,
    gamma: f64,
    capacity: f64,
    rate_scale: f64,
    delay_threshold_s: Option<f64>,
}

impl Point {
    fn base(cfg: &ExperimentConfig) -> Self {
        Point {
            num_nodes: cfg.num_nodes,
            gamma: cfg.gamma,
            capacity: cfg.capacity,
            rate_scale: 1.0,
            delay_threshold_s: None,
        }
    }

    fn at(cfg: &ExperimentConfig, value: f64) -> Self {
        let mut p = Self::base(cfg);
        match cfg.sweep_param {
            SweepParam::Gamma => p.gamma = value,
            SweepParam::NumNodes => p.num_nodes = value as usize,
            SweepParam::Capacity => p.capacity = value,
            SweepParam::RateScale => p.rate_scale = value,
            SweepParam::DelayThreshold => p.delay_threshold_s = Some(value),
        }
        p
    }
}

fn read_input(field: &str, path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::config(field, format!("{}: {e}", path.display())))
}

fn in_field<T>(field: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Config { .. } => e,
        other => Error::config(field, other.to_string()),
    })
}

/// File-backed inputs, loaded once per run.
enum Inputs {
    None,
    Cells(CellTransitionModel),
    Assoc {
        train: AssociationTrace,
        test: AssociationTrace,
    },
    Contacts(ContactModel),
    ContactTrace {
        train: ContactModel,
        test: ContactTrace,
    },
}

fn split_assoc(trace: AssociationTrace, split: Option<f64>) -> (AssociationTrace, AssociationTrace) {
    match split {
        Some(t) => (
            trace.slice_time(f64::NEG_INFINITY, t),
            trace.slice_time(t, f64::INFINITY),
        ),
        None => (trace.clone(), trace),
    }
}

fn load_inputs(cfg: &ExperimentConfig) -> Result<Inputs> {
    match &cfg.settings {
        ScenarioSettings::Bs(s) => match &s.mobility {
            MobilitySource::Synthetic { .. } => Ok(Inputs::None),
            MobilitySource::Model { transition, cells } => {
                let t = read_input("mobility.transition", transition)?;
                let c = read_input("mobility.cells", cells)?;
                Ok(Inputs::Cells(in_field(
                    "mobility.transition",
                    CellTransitionModel::from_csv(&t, &c),
                )?))
            }
            MobilitySource::Trace { path, split_s } => {
                let trace = in_field(
                    "mobility.trace",
                    parse_association_trace(&read_input("mobility.trace", path)?),
                )?;
                let (train, test) = split_assoc(trace, *split_s);
                if train.is_empty() || test.is_empty() {
                    return Err(Error::config(
                        "mobility.split_s",
                        "split leaves one side of the trace empty",
                    ));
                }
                Ok(Inputs::Assoc { train, test })
            }
        },
        ScenarioSettings::Ut(s) => match &s.contacts {
            ContactSource::Synthetic { .. } => Ok(Inputs::None),
            ContactSource::Model { path } => {
                let text = read_input("contacts.model", path)?;
                let n = (cfg.num_nodes > 0).then_some(cfg.num_nodes);
                Ok(Inputs::Contacts(in_field(
                    "contacts.model",
                    ContactModel::from_csv(&text, n),
                )?))
            }
            ContactSource::Trace { path, split_s } => {
                let trace = in_field(
                    "contacts.trace",
                    parse_contact_trace(&read_input("contacts.trace", path)?),
                )?;
                let (start, end) = trace
                    .span()
                    .ok_or_else(|| Error::config("contacts.trace", "trace has no contacts"))?;
                let (train, test, window) = match split_s {
                    Some(t) if *t > start && *t < end => (
                        trace.slice_time(f64::NEG_INFINITY, *t),
                        trace.slice_time(*t, f64::INFINITY),
                        t - start,
                    ),
                    Some(_) => {
                        return Err(Error::config(
                            "contacts.split_s",
                            "split must fall inside the trace span",
                        ))
                    }
                    None => (trace.clone(), trace, end - start),
                };
                let k = cfg.num_nodes.max(train.num_users()).max(test.num_users());
                let model = in_field("contacts.trace", estimate_contact_model_with_users(&train, window, k))?;
                Ok(Inputs::ContactTrace { train: model, test })
            }
        },
    }
}

fn check_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let file_backed = match &cfg.settings {
        ScenarioSettings::Bs(s) => !matches!(s.mobility, MobilitySource::Synthetic { .. }),
        ScenarioSettings::Ut(s) => matches!(s.contacts, ContactSource::Trace { .. }),
    };
    if file_backed && cfg.sweep_param == SweepParam::NumNodes {
        return Err(Error::config(
            "sweep.param",
            "node count is fixed by the mobility input",
        ));
    }
    Ok(())
}

/// A built base-station case: the optimization instance and held-out replay input.
struct BsCase<'a> {
    inst: BsInstance,
    replay_paths: Option<Vec<OrderedPath>>,
    replay_trace: Option<&'a AssociationTrace>,
    horizon_s: f64,
}

fn build_bs<'a>(
    s: &BsSettings,
    inputs: &'a Inputs,
    cfg: &ExperimentConfig,
    pt: &Point,
    seed: u64,
) -> Result<BsCase<'a>> {
    let pop = ZipfPopularity::new(cfg.num_files, pt.gamma)?;
    let rate = s.rate * pt.rate_scale;
    let synthetic;
    let model = match (&s.mobility, inputs) {
        (MobilitySource::Synthetic { sojourn_range_s }, _) => {
            if pt.num_nodes == 0 {
                return Err(Error::config("model.num_nodes", "need at least one base station"));
            }
            synthetic = CellTransitionModel::random(pt.num_nodes, *sojourn_range_s, seed)?;
            Some(&synthetic)
        }
        (_, Inputs::Cells(m)) => Some(m),
        _ => None,
    };
    if let Some(model) = model {
        let n = model.num_cells();
        if cfg.num_nodes > n {
            return Err(Error::config(
                "model.num_nodes",
                format!("mobility model has only {n} cells"),
            ));
        }
        let set = sample_paths(model, s.horizon_s, s.num_paths, seed)?;
        let replay = sample_ordered_paths(model, s.horizon_s, s.replay_paths, derive(seed, TAG_REPLAY_PATHS))?;
        return Ok(BsCase {
            inst: BsInstance::new(set, pop, rate, Capacities::uniform(n, pt.capacity)?)?,
            replay_paths: Some(replay),
            replay_trace: None,
            horizon_s: s.horizon_s,
        });
    }
    let Inputs::Assoc { train, test } = inputs else {
        unreachable!("inputs match the mobility source")
    };
    let n = cfg.num_nodes.max(train.num_cells()).max(test.num_cells());
    let set = in_field("mobility.trace", paths_from_trace(train, s.horizon_s, Some(n)))?;
    Ok(BsCase {
        inst: BsInstance::new(set, pop, rate, Capacities::uniform(n, pt.capacity)?)?,
        replay_paths: None,
        replay_trace: Some(test),
        horizon_s: s.horizon_s,
    })
}

fn bs_placements(
    case: &BsCase<'_>,
    s: &BsSettings,
    strategies: &[Strategy],
    seed: u64,
) -> Result<Vec<(Strategy, Placed)>> {
    let inst = &case.inst;
    let mut local: Option<DiscretePlacement> = None;
    let local_search = |local: &mut Option<DiscretePlacement>| -> Result<DiscretePlacement> {
        if local.is_none() {
            *local = Some(optimize_uncoded(
                inst,
                UncodedMode::LocalSearch { restarts: s.restarts },
                seed,
            )?);
        }
        Ok(local.clone().expect("just set"))
    };
    let mut out = Vec::with_capacity(strategies.len());
    for &st in strategies {
        let placed = match st {
            Strategy::Mpc => Placed::Discrete(mpc_placement(inst.popularity(), inst.caps(), inst.num_bs())?),
            Strategy::UncodedLocal => Placed::Discrete(local_search(&mut local)?),
            Strategy::UncodedExact => Placed::Discrete(in_field(
                "strategies",
                optimize_uncoded(inst, UncodedMode::Exact, seed),
            )?),
            Strategy::Coded => {
                let starts = if s.coded_warm_start {
                    vec![local_search(&mut local)?.to_coded()]
                } else {
                    Vec::new()
                };
                let opts = CodedRefineOptions {
                    iterations: s.iterations,
                    ..CodedRefineOptions::default()
                };
                Placed::Coded(optimize_coded_failure(inst, &starts, &opts, 0))
            }
            Strategy::Greedy | Strategy::RandomZipf => unreachable!("rejected by config validation"),
        };
        out.push((st, placed));
    }
    Ok(out)
}

fn bs_metrics(case: &BsCase<'_>, placed: &Placed, trials: usize, seed: u64) -> Result<Vec<Metric>> {
    let coded = match placed {
        Placed::Coded(x) => x.clone(),
        Placed::Discrete(p) => p.to_coded(),
    };
    let mut out = vec![
        Metric {
            name: "failure_prob",
            value: failure_probability(placed, &case.inst)?,
            std_error: 0.0,
        },
        Metric {
            name: "served_fraction",
            value: served_fraction_objective(&coded, &case.inst)?,
            std_error: 0.0,
        },
    ];
    if trials > 0 {
        let source = match (&case.replay_paths, case.replay_trace) {
            (Some(paths), _) => BsReplaySource::Paths(paths),
            (None, Some(trace)) => BsReplaySource::Trace {
                trace,
                horizon_s: case.horizon_s,
            },
            (None, None) => unreachable!("one replay input is always built"),
        };
        let r = simulate_bs_replay(
            source,
            placed,
            case.inst.popularity(),
            case.inst.rate(),
            trials,
            derive(seed, TAG_REPLAY),
        )?;
        out.push(Metric {
            name: "failure_prob_replay",
            value: r.empirical_value,
            std_error: r.std_error,
        });
    }
    Ok(out)
}

struct UtCase<'a> {
    inst: UtInstance,
    replay_trace: Option<&'a ContactTrace>,
}

fn build_ut<'a>(
    s: &UtSettings,
    inputs: &'a Inputs,
    cfg: &ExperimentConfig,
    pt: &Point,
    seed: u64,
) -> Result<UtCase<'a>> {
    let pop = ZipfPopularity::new(cfg.num_files, pt.gamma)?;
    let (contacts, replay_trace) = match (&s.contacts, inputs) {
        (
            ContactSource::Synthetic {
                mean_rate,
                pair_density,
            },
            _,
        ) => {
            if pt.num_nodes == 0 {
                return Err(Error::config("model.num_users", "need at least one user"));
            }
            (
                ContactModel::random(pt.num_nodes, *mean_rate, *pair_density, seed)?,
                None,
            )
        }
        (_, Inputs::Contacts(m)) => {
            let k = if cfg.sweep_param == SweepParam::NumNodes {
                pt.num_nodes
            } else {
                m.num_users()
            };
            if k > m.num_users() {
                return Err(Error::config(
                    "sweep.values",
                    format!("contact model has only {} users", m.num_users()),
                ));
            }
            (m.truncated(k), None)
        }
        (_, Inputs::ContactTrace { train, test }) => (train.clone(), Some(test)),
        _ => unreachable!("inputs match the contact source"),
    };
    let contacts = if pt.rate_scale == 1.0 {
        contacts
    } else {
        contacts.scaled(pt.rate_scale)
    };
    let tau = pt.delay_threshold_s.unwrap_or(s.delay_threshold_s);
    let caps = Capacities::uniform(contacts.num_users(), pt.capacity)?;
    Ok(UtCase {
        inst: in_field("model.capacity", UtInstance::new(contacts, pop, tau, &caps))?,
        replay_trace,
    })
}

/// Placements plus, for random_zipf, the held-out draws behind its metric.
fn ut_placements(
    case: &UtCase<'_>,
    s: &UtSettings,
    strategies: &[Strategy],
    seed: u64,
) -> Result<Vec<(Strategy, Vec<DiscretePlacement>)>> {
    let inst = &case.inst;
    let caps = Capacities::new(inst.caps().iter().map(|&c| c as f64).collect())?;
    strategies
        .iter()
        .map(|&st| {
            let ps = match st {
                Strategy::Mpc => vec![mpc_placement(inst.popularity(), &caps, inst.num_users())?],
                Strategy::Greedy => vec![greedy_placement(inst)],
                Strategy::RandomZipf => {
                    // Tune on one batch of draws, report on a fresh batch.
                    let ls = line_search_gamma(inst, &s.random_zipf_grid, s.random_zipf_trials, seed)?;
                    let held = derive(seed, TAG_HELD_OUT);
                    (0..s.random_zipf_trials)
                        .map(|t| random_zipf_placement(inst, ls.gamma_c, derive(held, t as u64)))
                        .collect::<Result<_>>()?
                }
                _ => unreachable!("rejected by config validation"),
            };
            Ok((st, ps))
        })
        .collect()
}

fn ut_metrics(case: &UtCase<'_>, placements: &[DiscretePlacement], trials: usize, seed: u64) -> Result<Vec<Metric>> {
    let ratios: Vec<f64> = placements
        .iter()
        .map(|p| offloading_ratio(p, &case.inst))
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_std_error(&ratios);
    let mut out = vec![Metric {
        name: "offloading_ratio",
        value: mean,
        std_error: se,
    }];
    if trials > 0 {
        let source = match case.replay_trace {
            Some(trace) => UtReplaySource::Trace { trace, window: None },
            None => UtReplaySource::Model(case.inst.contacts()),
        };
        let r = simulate_ut_replay(
            source,
            &placements[0],
            case.inst.popularity(),
            case.inst.delay_threshold_s(),
            trials,
            derive(seed, TAG_REPLAY),
        )?;
        out.push(Metric {
            name: "offloading_ratio_replay",
            value: r.empirical_value,
            std_error: r.std_error,
        });
    }
    Ok(out)
}

fn run_point(cfg: &ExperimentConfig, inputs: &Inputs, pt: &Point, seed: u64) -> Result<Vec<(Strategy, Vec<Metric>)>> {
    match &cfg.settings {
        ScenarioSettings::Bs(s) => {
            let case = build_bs(s, inputs, cfg, pt, seed)?;
            bs_placements(&case, s, &cfg.strategies, seed)?
                .into_iter()
                .map(|(st, p)| Ok((st, bs_metrics(&case, &p, cfg.trials, seed)?)))
                .collect()
        }
        ScenarioSettings::Ut(s) => {
            let case = build_ut(s, inputs, cfg, pt, seed)?;
            ut_placements(&case, s, &cfg.strategies, seed)?
                .into_iter()
                .map(|(st, ps)| Ok((st, ut_metrics(&case, &ps, cfg.trials, seed)?)))
                .collect()
        }
    }
}

/// Runs every grid point, strategy and replicate. Rows come back sorted by
/// grid value, strategy and metric. Values are replicate means; standard
/// errors are across replicates, or the replicate's own when there is one.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    check_sweep(cfg)?;
    let inputs = load_inputs(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.sweep_values.len())
        .flat_map(|g| (0..cfg.replicates).map(move |r| (g, r)))
        .collect();
    let results: Vec<Vec<(Strategy, Vec<Metric>)>> = jobs
        .par_iter()
        .map(|&(g, r)| {
            run_point(
                cfg,
                &inputs,
                &Point::at(cfg, cfg.sweep_values[g]),
                replicate_seed(cfg, r),
            )
        })
        .collect::<Result<_>>()?;

    let grid_param = cfg.sweep_param.name(cfg.kind()).to_string();
    let mut rows = Vec::new();
    for (g, &grid_value) in cfg.sweep_values.iter().enumerate() {
        let reps: Vec<&Vec<(Strategy, Vec<Metric>)>> = jobs
            .iter()
            .zip(&results)
            .filter(|((jg, _), _)| *jg == g)
            .map(|(_, res)| res)
            .collect();
        for (si, (strategy, metrics)) in reps[0].iter().enumerate() {
            for (mi, m) in metrics.iter().enumerate() {
                let values: Vec<f64> = reps.iter().map(|rep| rep[si].1[mi].value).collect();
                let (value, se) = mean_and_std_error(&values);
                rows.push(ResultRow {
                    grid_param: grid_param.clone(),
                    grid_value,
                    strategy: *strategy,
                    metric: m.name.to_string(),
                    value,
                    std_error: if reps.len() > 1 { se } else { m.std_error },
                    seed: cfg.seed,
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        a.grid_value
            .total_cmp(&b.grid_value)
            .then_with(|| a.strategy.name().cmp(b.strategy.name()))
            .then_with(|| a.metric.cmp(&b.metric))
    });
    Ok(rows)
}

/// Placements of every configured strategy at the config's base point
/// (sweep ignored, first replicate).
pub fn optimize_at_base(cfg: &ExperimentConfig) -> Result<Vec<(Strategy, Placed)>> {
    let inputs = load_inputs(cfg)?;
    let pt = Point::base(cfg);
    let seed = replicate_seed(cfg, 0);
    match &cfg.settings {
        ScenarioSettings::Bs(s) => {
            let case = build_bs(s, &inputs, cfg, &pt, seed)?;
            bs_placements(&case, s, &cfg.strategies, seed)
        }
        ScenarioSettings::Ut(s) => {
            let case = build_ut(s, &inputs, cfg, &pt, seed)?;
            Ok(ut_placements(&case, s, &cfg.strategies, seed)?
                .into_iter()
                .map(|(st, mut ps)| (st, Placed::Discrete(ps.swap_remove(0))))
                .collect())
        }
    }
}

/// Metrics of a placement file (`node,file,fraction`) at the config's base
/// point. Dimensions come from the built instance.
pub fn evaluate_at_base(cfg: &ExperimentConfig, placement_csv: &str) -> Result<Vec<Metric>> {
    let inputs = load_inputs(cfg)?;
    let pt = Point::base(cfg);
    let seed = replicate_seed(cfg, 0);
    match &cfg.settings {
        ScenarioSettings::Bs(s) => {
            let case = build_bs(s, &inputs, cfg, &pt, seed)?;
            let placement = parse_placement_csv(placement_csv, case.inst.num_bs(), case.inst.num_files())?;
            if !placement.is_feasible(case.inst.caps()) {
                return Err(Error::invalid("placement exceeds station capacities"));
            }
            bs_metrics(&case, &Placed::Coded(placement), cfg.trials, seed)
        }
        ScenarioSettings::Ut(s) => {
            let case = build_ut(s, &inputs, cfg, &pt, seed)?;
            let placement = parse_placement_csv(placement_csv, case.inst.num_users(), case.inst.num_files())?;
            let discrete = to_discrete(&placement)?;
            let caps = Capacities::new(case.inst.caps().iter().map(|&c| c as f64).collect())?;
            if !discrete.is_feasible(&caps) {
                return Err(Error::invalid("placement exceeds user capacities"));
            }
            ut_metrics(&case, &[discrete], cfg.trials, seed)
        }
    }
}

/// Mobility model files for the config's input: estimated from a trace,
/// generated for synthetic sources (first replicate), or passed through.
/// Returns `(file name, CSV text)` pairs.
pub fn estimate_models(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let inputs = load_inputs(cfg)?;
    let seed = replicate_seed(cfg, 0);
    Ok(match (&cfg.settings, inputs) {
        (ScenarioSettings::Bs(s), inputs) => {
            let model = match (&s.mobility, inputs) {
                (MobilitySource::Synthetic { sojourn_range_s }, _) => {
                    CellTransitionModel::random(cfg.num_nodes, *sojourn_range_s, seed)?
                }
                (_, Inputs::Cells(m)) => m,
                (_, Inputs::Assoc { train, .. }) => in_field(
                    "mobility.trace",
                    crate::mobility::estimate_transition_model(&train, None),
                )?,
                _ => unreachable!("inputs match the mobility source"),
            };
            vec![
                ("transition.csv".into(), model.transition_csv()),
                ("cells.csv".into(), model.cells_csv()),
            ]
        }
        (ScenarioSettings::Ut(s), inputs) => {
            let model = match (&s.contacts, inputs) {
                (
                    ContactSource::Synthetic {
                        mean_rate,
                        pair_density,
                    },
                    _,
                ) => ContactModel::random(cfg.num_nodes, *mean_rate, *pair_density, seed)?,
                (_, Inputs::Contacts(m)) => m,
                (_, Inputs::ContactTrace { train, .. }) => train,
                _ => unreachable!("inputs match the contact source"),
            };
            vec![("contacts.csv".into(), model.to_csv())]
        }
    })
}

/// Whole-file view of a placement; fails on fractional entries.
pub fn to_discrete(p: &CodedPlacement) -> Result<DiscretePlacement> {
    let mut out = DiscretePlacement::empty(p.num_nodes(), p.num_files());
    for n in 0..p.num_nodes() {
        for f in 0..p.num_files() {
            match p.get(n, f) {
                0.0 => {}
                1.0 => out.set(n, f, true),
                v => {
                    return Err(Error::invalid(format!(
                        "fraction {v} at node {n}, file {f} is not 0 or 1"
                    )))
                }
            }
        }
    }
    Ok(out)
}
