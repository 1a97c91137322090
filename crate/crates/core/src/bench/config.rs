//! Line-based experiment configs.
//!
//! ```text
//! # comments start with '#'
//! scenario = bs
//! strategies = coded, uncoded_local, mpc
//! sweep.param = gamma
//! sweep.values = 0.4, 0.7, 1.0
//! model.num_nodes = 6
//! ```
//!
//! Keys are dotted, lists are comma-separated, and relative file paths are
//! resolved against the directory holding the config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Placement strategies a sweep can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    Coded,
    UncodedExact,
    UncodedLocal,
    Greedy,
    RandomZipf,
    Mpc,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Coded,
        Strategy::UncodedExact,
        Strategy::UncodedLocal,
        Strategy::Greedy,
        Strategy::RandomZipf,
        Strategy::Mpc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Coded => "coded",
            Strategy::UncodedExact => "uncoded_exact",
            Strategy::UncodedLocal => "uncoded_local",
            Strategy::Greedy => "greedy",
            Strategy::RandomZipf => "random_zipf",
            Strategy::Mpc => "mpc",
        }
    }

    /// Whether the strategy applies to the given scenario kind.
    pub fn supports(self, kind: ScenarioKind) -> bool {
        match self {
            Strategy::Mpc => true,
            Strategy::Coded | Strategy::UncodedExact | Strategy::UncodedLocal => kind == ScenarioKind::Bs,
            Strategy::Greedy | Strategy::RandomZipf => kind == ScenarioKind::Ut,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Strategy::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let names: Vec<_> = Strategy::ALL.iter().map(|s| s.name()).collect();
            format!("unknown strategy `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Bs,
    Ut,
}

/// Parameter varied along the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Request Zipf exponent.
    Gamma,
    /// Number of base stations or users.
    NumNodes,
    Capacity,
    /// Multiplier on the downlink rate (BS) or on every contact rate (UT).
    RateScale,
    DelayThreshold,
}

impl SweepParam {
    pub fn name(self, kind: ScenarioKind) -> &'static str {
        match (self, kind) {
            (SweepParam::Gamma, _) => "gamma",
            (SweepParam::NumNodes, ScenarioKind::Bs) => "num_nodes",
            (SweepParam::NumNodes, ScenarioKind::Ut) => "num_users",
            (SweepParam::Capacity, _) => "capacity",
            (SweepParam::RateScale, _) => "rate_scale",
            (SweepParam::DelayThreshold, _) => "delay_threshold_s",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MobilitySource {
    /// Random Markov chain per replicate, sojourn means drawn from the range.
    Synthetic { sojourn_range_s: (f64, f64) },
    /// Transition and cell CSV files as written by `estimate`.
    Model { transition: PathBuf, cells: PathBuf },
    /// Association trace. With a split time, records before it train the
    /// placement and records after it are replayed.
    Trace { path: PathBuf, split_s: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsSettings {
    pub rate: f64,
    pub mobility: MobilitySource,
    pub horizon_s: f64,
    /// Scenario count used for placement.
    pub num_paths: usize,
    /// Held-out paths replayed for the empirical metric.
    pub replay_paths: usize,
    pub iterations: usize,
    pub restarts: usize,
    /// Seed the coded refinement with the uncoded local-search placement.
    pub coded_warm_start: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContactSource {
    Synthetic {
        mean_rate: f64,
        pair_density: f64,
    },
    /// Rate matrix CSV (`user_a,user_b,rate`).
    Model {
        path: PathBuf,
    },
    /// Contact trace. With a split time, rates are estimated before it and
    /// contacts after it are replayed.
    Trace {
        path: PathBuf,
        split_s: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtSettings {
    pub delay_threshold_s: f64,
    pub contacts: ContactSource,
    pub random_zipf_grid: Vec<f64>,
    pub random_zipf_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSettings {
    Bs(BsSettings),
    Ut(UtSettings),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Independent instances per grid point; replicate `r` uses seed `seed + r`.
    pub replicates: usize,
    /// Replay trials per placement; 0 skips replay.
    pub trials: usize,
    pub strategies: Vec<Strategy>,
    pub sweep_param: SweepParam,
    pub sweep_values: Vec<f64>,
    /// Station or user count; for traces, the minimum count.
    pub num_nodes: usize,
    pub num_files: usize,
    pub capacity: f64,
    /// Request exponent when the sweep varies something else.
    pub gamma: f64,
    pub svg: bool,
    pub settings: ScenarioSettings,
}

impl ExperimentConfig {
    pub fn kind(&self) -> ScenarioKind {
        match self.settings {
            ScenarioSettings::Bs(_) => ScenarioKind::Bs,
            ScenarioSettings::Ut(_) => ScenarioKind::Ut,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, None, &[])
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_with(&text, path.parent(), overrides)
    }

    /// Parses `text`, then applies `key = value` overrides on top.
    pub fn parse_with(text: &str, base_dir: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut raw = Raw::parse(text)?;
        for (k, v) in overrides {
            raw.entries.insert(k.clone(), v.clone());
        }
        let cfg = raw.build(base_dir)?;
        raw.reject_unused()?;
        Ok(cfg)
    }
}

/// Splits `key=value` as given on a command line.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::config(arg, "override must look like key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

struct Raw {
    entries: BTreeMap<String, String>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected `key = value`"))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::parse(i + 1, format!("bad key `{k}`")));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::parse(i + 1, format!("duplicate key `{k}`")));
            }
        }
        Ok(Raw {
            entries,
            used: Default::default(),
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().push(key.to_string());
        self.entries.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::config(key, "missing required key"))
    }

    fn value<T: FromStr>(&self, key: &str, text: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        text.parse::<T>()
            .map_err(|e| Error::config(key, format!("cannot parse `{text}`: {e}")))
    }

    fn opt<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            Some(v) => self.value(key, v),
            None => Ok(default),
        }
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.require(key)?;
        self.value(key, v)
    }

    fn list<T: FromStr>(&self, key: &str, text: &str) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.value(key, s))
            .collect()
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::config(key, format!("must be positive, got {v}")))
        }
    }

    fn path(&self, key: &str, base: Option<&Path>) -> Result<PathBuf> {
        let p = PathBuf::from(self.require(key)?);
        Ok(match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        })
    }

    fn range(&self, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
        let Some(text) = self.get(key) else {
            return Ok(default);
        };
        let v: Vec<f64> = self.list(key, text)?;
        match v[..] {
            [lo, hi] if lo > 0.0 && hi >= lo && hi.is_finite() => Ok((lo, hi)),
            _ => Err(Error::config(key, "expected `lo, hi` with 0 < lo <= hi")),
        }
    }

    fn build(&self, base: Option<&Path>) -> Result<ExperimentConfig> {
        let kind = match self.require("scenario")? {
            "bs" => ScenarioKind::Bs,
            "ut" => ScenarioKind::Ut,
            other => {
                return Err(Error::config(
                    "scenario",
                    format!("expected `bs` or `ut`, got `{other}`"),
                ))
            }
        };

        let strategies: Vec<Strategy> = self.list("strategies", self.require("strategies")?)?;
        if strategies.is_empty() {
            return Err(Error::config("strategies", "strategy list is empty"));
        }
        for s in &strategies {
            if !s.supports(kind) {
                let k = if kind == ScenarioKind::Bs { "bs" } else { "ut" };
                return Err(Error::config(
                    "strategies",
                    format!("strategy `{s}` does not apply to scenario `{k}`"),
                ));
            }
        }
        let mut dedup = strategies.clone();
        dedup.sort();
        dedup.dedup();
        if dedup.len() != strategies.len() {
            return Err(Error::config("strategies", "strategy listed twice"));
        }

        let sweep_param = match self.opt::<String>("sweep.param", "gamma".into())?.as_str() {
            "gamma" => SweepParam::Gamma,
            "num_nodes" | "num_users" => SweepParam::NumNodes,
            "capacity" => SweepParam::Capacity,
            "rate_scale" => SweepParam::RateScale,
            "delay_threshold_s" if kind == ScenarioKind::Ut => SweepParam::DelayThreshold,
            other => {
                return Err(Error::config(
                    "sweep.param",
                    format!("unknown sweep parameter `{other}`"),
                ))
            }
        };
        let sweep_values: Vec<f64> = self.list("sweep.values", self.require("sweep.values")?)?;
        if sweep_values.is_empty() {
            return Err(Error::config("sweep.values", "grid is empty"));
        }
        for &v in &sweep_values {
            let bad = match sweep_param {
                SweepParam::Gamma => !(v >= 0.0 && v.is_finite()),
                SweepParam::NumNodes => !(v >= 1.0 && v.fract() == 0.0),
                SweepParam::Capacity => !(v >= 0.0 && v.is_finite()),
                SweepParam::RateScale | SweepParam::DelayThreshold => !(v > 0.0 && v.is_finite()),
            };
            if bad {
                return Err(Error::config(
                    "sweep.values",
                    format!("value {v} is out of range for this parameter"),
                ));
            }
        }

        let nodes_key = if kind == ScenarioKind::Bs {
            "model.num_nodes"
        } else {
            "model.num_users"
        };
        let trace_source = matches!(
            self.entries
                .get(if kind == ScenarioKind::Bs {
                    "mobility.source"
                } else {
                    "contacts.source"
                })
                .map(String::as_str),
            Some("trace" | "model")
        );
        let num_nodes: usize = if trace_source {
            self.opt(nodes_key, 0)?
        } else {
            self.req(nodes_key)?
        };
        let num_files: usize = self.req("model.num_files")?;
        if num_files == 0 {
            return Err(Error::config("model.num_files", "library is empty"));
        }
        let capacity: f64 = self.opt("model.capacity", 1.0)?;
        if !(capacity >= 0.0 && capacity.is_finite()) {
            return Err(Error::config("model.capacity", "must be a nonnegative number"));
        }
        let gamma: f64 = self.opt("model.gamma", 1.0)?;

        let settings = match kind {
            ScenarioKind::Bs => ScenarioSettings::Bs(self.bs_settings(base)?),
            ScenarioKind::Ut => ScenarioSettings::Ut(self.ut_settings(base)?),
        };
        if kind == ScenarioKind::Ut {
            let caps: Vec<f64> = if sweep_param == SweepParam::Capacity {
                sweep_values.clone()
            } else {
                vec![capacity]
            };
            if caps.iter().any(|c| c.fract() != 0.0) {
                return Err(Error::config("model.capacity", "user capacities must be whole files"));
            }
        }

        Ok(ExperimentConfig {
            seed: self.opt("seed", 1)?,
            replicates: match self.opt("replicates", 1usize)? {
                0 => return Err(Error::config("replicates", "need at least one replicate")),
                r => r,
            },
            trials: self.opt("trials", 0)?,
            strategies,
            sweep_param,
            sweep_values,
            num_nodes,
            num_files,
            capacity,
            gamma,
            svg: self.opt("report.svg", true)?,
            settings,
        })
    }

    fn bs_settings(&self, base: Option<&Path>) -> Result<BsSettings> {
        let mobility = match self.opt::<String>("mobility.source", "synthetic".into())?.as_str() {
            "synthetic" => MobilitySource::Synthetic {
                sojourn_range_s: self.range("mobility.sojourn_range_s", (1.0, 3.0))?,
            },
            "model" => MobilitySource::Model {
                transition: self.path("mobility.transition", base)?,
                cells: self.path("mobility.cells", base)?,
            },
            "trace" => MobilitySource::Trace {
                path: self.path("mobility.trace", base)?,
                split_s: self
                    .get("mobility.split_s")
                    .map(|v| self.value("mobility.split_s", v))
                    .transpose()?,
            },
            other => {
                return Err(Error::config(
                    "mobility.source",
                    format!("expected synthetic, model or trace, got `{other}`"),
                ))
            }
        };
        let s = BsSettings {
            rate: self.positive("model.rate", self.req("model.rate")?)?,
            mobility,
            horizon_s: self.positive("mobility.horizon_s", self.req("mobility.horizon_s")?)?,
            num_paths: self.opt("mobility.num_paths", 200)?,
            replay_paths: self.opt("mobility.replay_paths", 1000)?,
            iterations: self.opt("solver.iterations", crate::bs_place::DEFAULT_CODED_ITERATIONS)?,
            restarts: self.opt("solver.restarts", 4)?,
            coded_warm_start: self.opt("solver.coded_warm_start", true)?,
        };
        if s.num_paths == 0 {
            return Err(Error::config("mobility.num_paths", "need at least one path"));
        }
        if s.replay_paths == 0 {
            return Err(Error::config("mobility.replay_paths", "need at least one path"));
        }
        Ok(s)
    }

    fn ut_settings(&self, base: Option<&Path>) -> Result<UtSettings> {
        let contacts = match self.opt::<String>("contacts.source", "synthetic".into())?.as_str() {
            "synthetic" => {
                let pair_density: f64 = self.opt("contacts.pair_density", 1.0)?;
                if !(0.0..=1.0).contains(&pair_density) {
                    return Err(Error::config("contacts.pair_density", "must lie in [0, 1]"));
                }
                ContactSource::Synthetic {
                    mean_rate: self.positive("contacts.mean_rate", self.req("contacts.mean_rate")?)?,
                    pair_density,
                }
            }
            "model" => ContactSource::Model {
                path: self.path("contacts.model", base)?,
            },
            "trace" => ContactSource::Trace {
                path: self.path("contacts.trace", base)?,
                split_s: self
                    .get("contacts.split_s")
                    .map(|v| self.value("contacts.split_s", v))
                    .transpose()?,
            },
            other => {
                return Err(Error::config(
                    "contacts.source",
                    format!("expected synthetic, model or trace, got `{other}`"),
                ))
            }
        };
        let grid = match self.get("random_zipf.grid") {
            Some(v) => self.list("random_zipf.grid", v)?,
            None => (0..=12).map(|i| i as f64 * 0.25).collect(),
        };
        if grid.is_empty() || grid.iter().any(|g: &f64| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::config("random_zipf.grid", "need nonnegative exponents"));
        }
        let trials = self.opt("random_zipf.trials", 20usize)?;
        if trials == 0 {
            return Err(Error::config("random_zipf.trials", "need at least one trial"));
        }
        Ok(UtSettings {
            delay_threshold_s: self.positive("model.delay_threshold_s", self.req("model.delay_threshold_s")?)?,
            contacts,
            random_zipf_grid: grid,
            random_zipf_trials: trials,
        })
    }

    fn reject_unused(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.entries.keys().find(|k| !used.contains(k)) {
            Some(k) => Err(Error::config(k.as_str(), "unknown or inapplicable key")),
            None => Ok(()),
        }
    }
}
