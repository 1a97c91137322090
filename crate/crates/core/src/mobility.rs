//! User mobility: association and contact traces, the Markov cell
//! transition model with per-cell mean sojourn times, the pairwise Poisson
//! contact model, and generators that synthesize traces from those models.
//!
//! Trace files are comma-separated with four fields per line. Lines starting
//! with `#` are comments. A header line is allowed and recognized by a
//! non-numeric first field. Times are decimal seconds.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::rng;

/// One association interval: `user` attached to `cell` over `[enter_s, exit_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssocRecord {
    pub user: u32,
    pub cell: u32,
    pub enter_s: f64,
    pub exit_s: f64,
}

impl AssocRecord {
    pub fn duration(&self) -> f64 {
        self.exit_s - self.enter_s
    }
}

/// Association records sorted by `(user, enter_s)`, non-overlapping per user.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationTrace {
    records: Vec<AssocRecord>,
}

impl AssociationTrace {
    /// Validates and sorts. Errors name the 1-based position of the record.
    pub fn new(records: Vec<AssocRecord>) -> Result<Self> {
        let numbered = records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
        Self::from_numbered(numbered)
    }

    fn from_numbered(mut numbered: Vec<(usize, AssocRecord)>) -> Result<Self> {
        for (line, r) in &numbered {
            if !r.enter_s.is_finite() || !r.exit_s.is_finite() {
                return Err(Error::parse(*line, "non-finite time"));
            }
            if r.exit_s <= r.enter_s {
                return Err(Error::parse(*line, "exit before enter"));
            }
        }
        numbered.sort_by(|(_, a), (_, b)| a.user.cmp(&b.user).then(a.enter_s.total_cmp(&b.enter_s)));
        for w in numbered.windows(2) {
            let (_, prev) = w[0];
            let (line, next) = w[1];
            if prev.user == next.user && next.enter_s < prev.exit_s {
                return Err(Error::parse(
                    line,
                    format!("overlapping association for user {}", next.user),
                ));
            }
        }
        Ok(AssociationTrace {
            records: numbered.into_iter().map(|(_, r)| r).collect(),
        })
    }

    pub fn records(&self) -> &[AssocRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Smallest cell count covering every cell id in the trace.
    pub fn num_cells(&self) -> usize {
        self.records.iter().map(|r| r.cell as usize + 1).max().unwrap_or(0)
    }

    /// Records grouped per user, in time order.
    pub fn by_user(&self) -> impl Iterator<Item = &[AssocRecord]> {
        self.records.chunk_by(|a, b| a.user == b.user)
    }

    /// Records whose interval starts inside `[from_s, to_s)`.
    pub fn slice_time(&self, from_s: f64, to_s: f64) -> AssociationTrace {
        AssociationTrace {
            records: self
                .records
                .iter()
                .filter(|r| r.enter_s >= from_s && r.enter_s < to_s)
                .copied()
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_id,cell_id,enter_s,exit_s\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.user, r.cell, r.enter_s, r.exit_s);
        }
        out
    }
}

/// One contact interval between two distinct users, `user_a < user_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactRecord {
    pub user_a: u32,
    pub user_b: u32,
    pub start_s: f64,
    pub end_s: f64,
}

/// Contact records sorted by start time. Overlap across records is legal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactTrace {
    records: Vec<ContactRecord>,
}

impl ContactTrace {
    pub fn new(records: Vec<ContactRecord>) -> Result<Self> {
        let numbered = records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
        Self::from_numbered(numbered)
    }

    fn from_numbered(numbered: Vec<(usize, ContactRecord)>) -> Result<Self> {
        let mut records = Vec::with_capacity(numbered.len());
        for (line, mut r) in numbered {
            if r.user_a == r.user_b {
                return Err(Error::parse(line, "self-contact"));
            }
            if !r.start_s.is_finite() || !r.end_s.is_finite() {
                return Err(Error::parse(line, "non-finite time"));
            }
            if r.end_s <= r.start_s {
                return Err(Error::parse(line, "end before start"));
            }
            if r.user_a > r.user_b {
                std::mem::swap(&mut r.user_a, &mut r.user_b);
            }
            records.push(r);
        }
        records.sort_by(|a, b| {
            a.start_s
                .total_cmp(&b.start_s)
                .then(a.user_a.cmp(&b.user_a))
                .then(a.user_b.cmp(&b.user_b))
        });
        Ok(ContactTrace { records })
    }

    pub fn records(&self) -> &[ContactRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn num_users(&self) -> usize {
        self.records.iter().map(|r| r.user_b as usize + 1).max().unwrap_or(0)
    }

    /// `(earliest start, latest end)`, or `None` for an empty trace.
    pub fn span(&self) -> Option<(f64, f64)> {
        let first = self.records.first()?.start_s;
        let last = self.records.iter().map(|r| r.end_s).fold(f64::NEG_INFINITY, f64::max);
        Some((first, last))
    }

    /// Records starting inside `[from_s, to_s)`.
    pub fn slice_time(&self, from_s: f64, to_s: f64) -> ContactTrace {
        ContactTrace {
            records: self
                .records
                .iter()
                .filter(|r| r.start_s >= from_s && r.start_s < to_s)
                .copied()
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_a,user_b,start_s,end_s\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.user_a, r.user_b, r.start_s, r.end_s);
        }
        out
    }
}

/// Splits trace text into numbered 4-field rows, skipping comments, blank
/// lines and an optional header.
fn csv_rows(text: &str, width: usize) -> Result<Vec<(usize, Vec<&str>)>> {
    let mut rows = Vec::new();
    let mut seen_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_data && fields[0].parse::<f64>().is_err() {
            // header
            seen_data = true;
            continue;
        }
        seen_data = true;
        if fields.len() != width {
            return Err(Error::parse(
                line_no,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}

fn parse_id(line: usize, field: &str, name: &str) -> Result<u32> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("non-numeric {name} `{field}`")))
}

fn parse_time(line: usize, field: &str, name: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|t| t.is_finite())
        .ok_or_else(|| Error::parse(line, format!("non-numeric {name} `{field}`")))
}

/// Parses `user_id,cell_id,enter_s,exit_s` lines.
pub fn parse_association_trace(text: &str) -> Result<AssociationTrace> {
    let mut numbered = Vec::new();
    for (line, f) in csv_rows(text, 4)? {
        numbered.push((
            line,
            AssocRecord {
                user: parse_id(line, f[0], "user_id")?,
                cell: parse_id(line, f[1], "cell_id")?,
                enter_s: parse_time(line, f[2], "enter_s")?,
                exit_s: parse_time(line, f[3], "exit_s")?,
            },
        ));
    }
    AssociationTrace::from_numbered(numbered)
}

/// Parses `user_a,user_b,start_s,end_s` lines, normalizing pair order.
pub fn parse_contact_trace(text: &str) -> Result<ContactTrace> {
    let mut numbered = Vec::new();
    for (line, f) in csv_rows(text, 4)? {
        numbered.push((
            line,
            ContactRecord {
                user_a: parse_id(line, f[0], "user_a")?,
                user_b: parse_id(line, f[1], "user_b")?,
                start_s: parse_time(line, f[2], "start_s")?,
                end_s: parse_time(line, f[3], "end_s")?,
            },
        ));
    }
    ContactTrace::from_numbered(numbered)
}

/// Markov chain over serving cells plus the mean time spent per visit.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTransitionModel {
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
    mean_sojourn: Vec<f64>,
}

impl CellTransitionModel {
    pub fn new(transition: Vec<Vec<f64>>, initial: Vec<f64>, mean_sojourn: Vec<f64>) -> Result<Self> {
        let n = transition.len();
        if n == 0 {
            return Err(Error::invalid("transition model needs at least one cell"));
        }
        if initial.len() != n || mean_sojourn.len() != n || transition.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "transition model with {n} cells has inconsistent dimensions"
            )));
        }
        for (a, row) in transition.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::invalid(format!("row {a} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("row {a} sums to {s}")));
            }
        }
        let s: f64 = initial.iter().sum();
        if initial.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("initial distribution is not a probability vector"));
        }
        if mean_sojourn.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(Error::invalid("mean sojourn times must be positive"));
        }
        Ok(CellTransitionModel {
            transition,
            initial,
            mean_sojourn,
        })
    }

    /// Synthetic model: each row draws Dirichlet(1) weights over the other
    /// cells (no self-loops), the initial law is uniform, and mean sojourns
    /// are uniform in `sojourn_range_s`.
    pub fn random(num_cells: usize, sojourn_range_s: (f64, f64), seed: u64) -> Result<Self> {
        let (lo, hi) = sojourn_range_s;
        if num_cells == 0 || !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid("random model needs cells and a positive sojourn range"));
        }
        let mut rng = rng::stream(seed, 0x6d6f_6465);
        let exp1 = Exp::new(1.0).expect("unit rate");
        let transition = (0..num_cells)
            .map(|a| {
                if num_cells == 1 {
                    return vec![1.0];
                }
                let w: Vec<f64> = (0..num_cells)
                    .map(|b| if a == b { 0.0 } else { exp1.sample(&mut rng) })
                    .collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect()
            })
            .collect();
        let mean_sojourn = (0..num_cells).map(|_| rng.random_range(lo..=hi)).collect();
        Self::new(transition, vec![1.0 / num_cells as f64; num_cells], mean_sojourn)
    }

    pub fn num_cells(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn mean_sojourn(&self) -> &[f64] {
        &self.mean_sojourn
    }

    /// Same chain with every mean sojourn multiplied by `factor`.
    pub fn with_sojourn_scale(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.transition.clone(),
            self.initial.clone(),
            self.mean_sojourn.iter().map(|m| m * factor).collect(),
        )
    }

    /// Writes `from,to,probability` rows for the full matrix.
    pub fn transition_csv(&self) -> String {
        let mut out = String::from("from,to,probability\n");
        for (a, row) in self.transition.iter().enumerate() {
            for (b, p) in row.iter().enumerate() {
                let _ = writeln!(out, "{a},{b},{p}");
            }
        }
        out
    }

    /// Writes `cell,initial,mean_sojourn_s` rows.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("cell,initial,mean_sojourn_s\n");
        for n in 0..self.num_cells() {
            let _ = writeln!(out, "{n},{},{}", self.initial[n], self.mean_sojourn[n]);
        }
        out
    }

    /// Inverse of [`transition_csv`](Self::transition_csv) and
    /// [`cells_csv`](Self::cells_csv).
    pub fn from_csv(transition_text: &str, cells_text: &str) -> Result<Self> {
        let cells = csv_rows(cells_text, 3)?;
        let n = cells.len();
        let mut initial = vec![0.0; n];
        let mut mean = vec![0.0; n];
        for (line, f) in cells {
            let c = parse_id(line, f[0], "cell")? as usize;
            if c >= n {
                return Err(Error::parse(line, format!("cell {c} out of range")));
            }
            initial[c] = parse_time(line, f[1], "initial")?;
            mean[c] = parse_time(line, f[2], "mean_sojourn_s")?;
        }
        let mut transition = vec![vec![0.0; n]; n];
        for (line, f) in csv_rows(transition_text, 3)? {
            let a = parse_id(line, f[0], "from")? as usize;
            let b = parse_id(line, f[1], "to")? as usize;
            if a >= n || b >= n {
                return Err(Error::parse(line, "cell out of range"));
            }
            transition[a][b] = parse_time(line, f[2], "probability")?;
        }
        Self::new(transition, initial, mean)
    }
}

/// Estimates the cell transition chain from consecutive association records.
///
/// Rows for cells with no observed departures are uniform. Unvisited cells
/// get a mean sojourn of 1 s. With `user_filter`, only those users count.
pub fn estimate_transition_model(
    trace: &AssociationTrace,
    user_filter: Option<&HashSet<u32>>,
) -> Result<CellTransitionModel> {
    let keep = |r: &AssocRecord| user_filter.is_none_or(|set| set.contains(&r.user));
    let num_cells = trace
        .records()
        .iter()
        .filter(|r| keep(r))
        .map(|r| r.cell as usize + 1)
        .max()
        .ok_or_else(|| Error::invalid("cannot estimate a transition model from an empty trace"))?;

    let mut counts = vec![vec![0u64; num_cells]; num_cells];
    let mut first = vec![0u64; num_cells];
    let mut time = vec![0.0; num_cells];
    let mut visits = vec![0u64; num_cells];
    for user in trace.by_user() {
        if !keep(&user[0]) {
            continue;
        }
        first[user[0].cell as usize] += 1;
        for r in user {
            time[r.cell as usize] += r.duration();
            visits[r.cell as usize] += 1;
        }
        for w in user.windows(2) {
            counts[w[0].cell as usize][w[1].cell as usize] += 1;
        }
    }

    let transition = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                vec![1.0 / num_cells as f64; num_cells]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    let users: u64 = first.iter().sum();
    let initial = first.iter().map(|&c| c as f64 / users as f64).collect();
    let mean_sojourn = time
        .iter()
        .zip(&visits)
        .map(|(&t, &v)| if v == 0 { 1.0 } else { t / v as f64 })
        .collect();
    CellTransitionModel::new(transition, initial, mean_sojourn)
}

/// Symmetric matrix of pairwise Poisson contact intensities (per second).
#[derive(Debug, Clone, PartialEq)]
pub struct ContactModel {
    num_users: usize,
    rate: Vec<f64>,
}

impl ContactModel {
    pub fn zeros(num_users: usize) -> Self {
        ContactModel {
            num_users,
            rate: vec![0.0; num_users * num_users],
        }
    }

    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("contact matrix is not square".into()));
        }
        for i in 0..k {
            if rows[i][i] != 0.0 {
                return Err(Error::invalid(format!("nonzero self-rate for user {i}")));
            }
            for j in 0..k {
                let r = rows[i][j];
                if !r.is_finite() || r < 0.0 {
                    return Err(Error::invalid(format!("invalid rate {r} at ({i}, {j})")));
                }
                if r != rows[j][i] {
                    return Err(Error::invalid(format!("asymmetric rate at ({i}, {j})")));
                }
            }
        }
        Ok(ContactModel {
            num_users: k,
            rate: rows.into_iter().flatten().collect(),
        })
    }

    /// Synthetic heterogeneous contact graph: each pair meets with
    /// probability `pair_density`, and meeting pairs get an exponentially
    /// distributed rate with mean `mean_rate`.
    pub fn random(num_users: usize, mean_rate: f64, pair_density: f64, seed: u64) -> Result<Self> {
        if !(mean_rate > 0.0 && mean_rate.is_finite()) || !(0.0..=1.0).contains(&pair_density) {
            return Err(Error::invalid(
                "random contact model needs mean_rate > 0 and density in [0, 1]",
            ));
        }
        let mut m = Self::zeros(num_users);
        let exp = Exp::new(1.0 / mean_rate).expect("positive rate");
        for i in 0..num_users {
            for j in i + 1..num_users {
                // Per-pair stream: adding users leaves existing pairs unchanged.
                let mut rng = rng::stream(seed, pair_key(i, j));
                if rng.random::<f64>() < pair_density {
                    m.set_rate(i, j, exp.sample(&mut rng));
                }
            }
        }
        Ok(m)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rate[i * self.num_users + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rate[i * self.num_users..(i + 1) * self.num_users]
    }

    pub fn set_rate(&mut self, i: usize, j: usize, rate: f64) {
        assert!(i != j, "self-contact rate is fixed at zero");
        assert!(rate >= 0.0 && rate.is_finite());
        self.rate[i * self.num_users + j] = rate;
        self.rate[j * self.num_users + i] = rate;
    }

    /// Every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> ContactModel {
        assert!(factor >= 0.0 && factor.is_finite());
        ContactModel {
            num_users: self.num_users,
            rate: self.rate.iter().map(|r| r * factor).collect(),
        }
    }

    /// Restriction to the first `k` users.
    pub fn truncated(&self, k: usize) -> ContactModel {
        let k = k.min(self.num_users);
        let mut m = Self::zeros(k);
        for i in 0..k {
            for j in 0..k {
                m.rate[i * k + j] = self.rate(i, j);
            }
        }
        m
    }

    /// Writes `user_a,user_b,rate` for every pair `a < b`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_a,user_b,rate\n");
        for i in 0..self.num_users {
            for j in i + 1..self.num_users {
                let _ = writeln!(out, "{i},{j},{}", self.rate(i, j));
            }
        }
        out
    }

    /// Reads [`to_csv`](Self::to_csv) output; the user count is the largest
    /// id plus one unless `num_users` is given.
    pub fn from_csv(text: &str, num_users: Option<usize>) -> Result<Self> {
        let rows = csv_rows(text, 3)?;
        let mut parsed = Vec::with_capacity(rows.len());
        let mut k = num_users.unwrap_or(0);
        for (line, f) in rows {
            let a = parse_id(line, f[0], "user_a")? as usize;
            let b = parse_id(line, f[1], "user_b")? as usize;
            let r = parse_time(line, f[2], "rate")?;
            if a == b {
                return Err(Error::parse(line, "self-contact"));
            }
            if r < 0.0 {
                return Err(Error::parse(line, "negative rate"));
            }
            if num_users.is_none() {
                k = k.max(a.max(b) + 1);
            } else if a.max(b) >= k {
                return Err(Error::parse(line, "user id out of range"));
            }
            parsed.push((a, b, r));
        }
        let mut m = Self::zeros(k);
        for (a, b, r) in parsed {
            m.set_rate(a, b, r);
        }
        Ok(m)
    }
}

fn pair_key(i: usize, j: usize) -> u64 {
    ((i as u64) << 32) | j as u64
}

/// Contact rates as event counts over the observation window.
pub fn estimate_contact_model(trace: &ContactTrace, observation_window_s: f64) -> Result<ContactModel> {
    estimate_contact_model_with_users(trace, observation_window_s, trace.num_users())
}

/// As [`estimate_contact_model`] with an explicit user count, so users
/// that never met anyone still get a row.
pub fn estimate_contact_model_with_users(
    trace: &ContactTrace,
    observation_window_s: f64,
    num_users: usize,
) -> Result<ContactModel> {
    if !(observation_window_s > 0.0 && observation_window_s.is_finite()) {
        return Err(Error::invalid(format!(
            "observation window must be positive, got {observation_window_s}"
        )));
    }
    if let Some((start, end)) = trace.span() {
        if end - start > observation_window_s + 1e-9 {
            return Err(Error::invalid(format!(
                "observation window {observation_window_s} s shorter than trace span {} s",
                end - start
            )));
        }
    }
    if trace.num_users() > num_users {
        return Err(Error::DimensionMismatch(format!(
            "trace mentions {} users, model has {num_users}",
            trace.num_users()
        )));
    }
    let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for r in trace.records() {
        *counts.entry((r.user_a as usize, r.user_b as usize)).or_default() += 1;
    }
    let mut m = ContactModel::zeros(num_users);
    for ((a, b), c) in counts {
        m.set_rate(a, b, c as f64 / observation_window_s);
    }
    Ok(m)
}

/// One stay in a cell along an ordered path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visit {
    pub cell: usize,
    pub sojourn_s: f64,
}

/// Time-ordered sequence of cell visits over one horizon.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrderedPath {
    pub visits: Vec<Visit>,
}

impl OrderedPath {
    pub fn total_sojourn(&self, num_cells: usize) -> Vec<f64> {
        let mut acc = vec![0.0; num_cells];
        for v in &self.visits {
            acc[v.cell] += v.sojourn_s;
        }
        acc
    }
}

/// A user-path scenario reduced to total sojourn per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sojourn_s: Vec<f64>,
    pub weight: f64,
}

/// Weighted distribution over per-cell total sojourn vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PathScenarioSet {
    num_cells: usize,
    scenarios: Vec<Scenario>,
}

impl PathScenarioSet {
    /// Validates lengths and nonnegativity and normalizes the weights.
    pub fn new(num_cells: usize, mut scenarios: Vec<Scenario>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::invalid("scenario set must be nonempty"));
        }
        for (i, s) in scenarios.iter().enumerate() {
            if s.sojourn_s.len() != num_cells {
                return Err(Error::DimensionMismatch(format!(
                    "scenario {i} has {} cells, expected {num_cells}",
                    s.sojourn_s.len()
                )));
            }
            if s.sojourn_s.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(Error::invalid(format!("scenario {i} has a negative sojourn")));
            }
            if !(s.weight > 0.0 && s.weight.is_finite()) {
                return Err(Error::invalid(format!("scenario {i} has nonpositive weight")));
            }
        }
        let total: f64 = scenarios.iter().map(|s| s.weight).sum();
        for s in &mut scenarios {
            s.weight /= total;
        }
        Ok(PathScenarioSet { num_cells, scenarios })
    }

    /// Equal-weight scenarios from ordered paths.
    pub fn from_paths(num_cells: usize, paths: &[OrderedPath]) -> Result<Self> {
        if let Some(v) = paths.iter().flat_map(|p| &p.visits).find(|v| v.cell >= num_cells) {
            return Err(Error::DimensionMismatch(format!(
                "visit to cell {} with only {num_cells} cells",
                v.cell
            )));
        }
        let w = 1.0 / paths.len().max(1) as f64;
        Self::new(
            num_cells,
            paths
                .iter()
                .map(|p| Scenario {
                    sojourn_s: p.total_sojourn(num_cells),
                    weight: w,
                })
                .collect(),
        )
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

fn categorical(weights: &[f64], rng: &mut rng::Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // Rounding slack: fall back to the last state with positive mass.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Ordered paths from the Markov chain with exponential sojourns; the last
/// stay is cut at the horizon. Path `i` uses RNG stream `i` of `rng_seed`.
pub fn sample_ordered_paths(
    model: &CellTransitionModel,
    horizon_s: f64,
    num_paths: usize,
    rng_seed: u64,
) -> Result<Vec<OrderedPath>> {
    if !(horizon_s > 0.0 && horizon_s.is_finite()) {
        return Err(Error::invalid("horizon must be positive"));
    }
    if num_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let exps: Vec<Exp<f64>> = model
        .mean_sojourn()
        .iter()
        .map(|m| Exp::new(1.0 / m).expect("positive mean"))
        .collect();
    Ok((0..num_paths)
        .map(|i| {
            let mut rng = rng::stream(rng_seed, i as u64);
            let mut cell = categorical(model.initial(), &mut rng);
            let mut t = 0.0;
            let mut visits = Vec::new();
            loop {
                let stay = exps[cell].sample(&mut rng);
                let stay = stay.min(horizon_s - t);
                visits.push(Visit { cell, sojourn_s: stay });
                t += stay;
                if t >= horizon_s {
                    break;
                }
                cell = categorical(&model.transition()[cell], &mut rng);
            }
            OrderedPath { visits }
        })
        .collect())
}

/// Per-cell total sojourns of `num_paths` sampled paths, equally weighted.
pub fn sample_paths(
    model: &CellTransitionModel,
    horizon_s: f64,
    num_paths: usize,
    rng_seed: u64,
) -> Result<PathScenarioSet> {
    let paths = sample_ordered_paths(model, horizon_s, num_paths, rng_seed)?;
    PathScenarioSet::from_paths(model.num_cells(), &paths)
}

/// Chops each user's records into consecutive `horizon_s` windows starting
/// at that user's first association. Records crossing a window boundary are
/// split. Windows without association time are dropped.
pub fn ordered_paths_from_trace(trace: &AssociationTrace, horizon_s: f64) -> Result<Vec<OrderedPath>> {
    if trace.is_empty() {
        return Err(Error::invalid("cannot build paths from an empty trace"));
    }
    if !(horizon_s > 0.0 && horizon_s.is_finite()) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let mut paths = Vec::new();
    for user in trace.by_user() {
        let origin = user[0].enter_s;
        let mut windows: BTreeMap<u64, Vec<Visit>> = BTreeMap::new();
        for r in user {
            let mut t = r.enter_s;
            while t < r.exit_s {
                let k = ((t - origin) / horizon_s).floor() as u64;
                let boundary = origin + (k + 1) as f64 * horizon_s;
                let end = r.exit_s.min(boundary);
                if end > t {
                    windows.entry(k).or_default().push(Visit {
                        cell: r.cell as usize,
                        sojourn_s: end - t,
                    });
                }
                // Guard against a boundary that rounds back onto `t`.
                t = if end > t {
                    end
                } else {
                    boundary.max(t + f64::EPSILON * t.abs().max(1.0))
                };
            }
        }
        paths.extend(windows.into_values().map(|visits| OrderedPath { visits }));
    }
    Ok(paths)
}

/// Scenario set from a trace: one equally weighted scenario per user window.
/// `num_cells` defaults to the largest cell id plus one.
pub fn paths_from_trace(trace: &AssociationTrace, horizon_s: f64, num_cells: Option<usize>) -> Result<PathScenarioSet> {
    let paths = ordered_paths_from_trace(trace, horizon_s)?;
    let n = num_cells.unwrap_or_else(|| trace.num_cells());
    PathScenarioSet::from_paths(n, &paths)
}

/// Nominal length of contacts emitted by [`sample_contacts`].
pub const NOMINAL_CONTACT_S: f64 = 1.0;

/// Independent Poisson contact processes per pair over `[0, duration_s]`.
pub fn sample_contacts(model: &ContactModel, duration_s: f64, rng_seed: u64) -> Result<ContactTrace> {
    sample_contacts_with_length(model, duration_s, NOMINAL_CONTACT_S, rng_seed)
}

/// As [`sample_contacts`] with a configurable contact length.
pub fn sample_contacts_with_length(
    model: &ContactModel,
    duration_s: f64,
    contact_len_s: f64,
    rng_seed: u64,
) -> Result<ContactTrace> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::invalid("duration must be positive"));
    }
    if !(contact_len_s > 0.0 && contact_len_s.is_finite()) {
        return Err(Error::invalid("contact length must be positive"));
    }
    let k = model.num_users();
    let mut records = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let rate = model.rate(i, j);
            if rate <= 0.0 {
                continue;
            }
            let mut rng = rng::stream(rng_seed, pair_key(i, j));
            for start in poisson_arrivals(rate, 0.0, duration_s, &mut rng) {
                records.push(ContactRecord {
                    user_a: i as u32,
                    user_b: j as u32,
                    start_s: start,
                    end_s: (start + contact_len_s).min(duration_s),
                });
            }
        }
    }
    ContactTrace::new(records)
}

/// Arrival instants of a rate-`rate` Poisson process on `[from, to)`.
pub(crate) fn poisson_arrivals(rate: f64, from: f64, to: f64, rng: &mut rng::Rng) -> Vec<f64> {
    let exp = Exp::new(rate).expect("positive rate");
    let mut out = Vec::new();
    let mut t = from;
    loop {
        t += exp.sample(rng);
        if t >= to {
            return out;
        }
        out.push(t);
    }
}

/// Parameters of the random waypoint generator over a regular cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointParams {
    pub width_m: f64,
    pub height_m: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    pub speed_mps: (f64, f64),
    pub pause_s: (f64, f64),
    pub duration_s: f64,
    pub num_users: usize,
}

impl WaypointParams {
    fn validate(&self) -> Result<()> {
        if !(self.width_m > 0.0 && self.height_m > 0.0) {
            return Err(Error::invalid("waypoint area must have positive width and height"));
        }
        if self.cells_x == 0 || self.cells_y == 0 {
            return Err(Error::invalid("waypoint grid must have at least one cell"));
        }
        let (vlo, vhi) = self.speed_mps;
        if !(vlo > 0.0 && vhi >= vlo && vhi.is_finite()) {
            return Err(Error::invalid("speed range needs 0 < min <= max"));
        }
        let (plo, phi) = self.pause_s;
        if !(plo >= 0.0 && phi >= plo && phi.is_finite()) {
            return Err(Error::invalid("pause range needs 0 <= min <= max"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid("duration must be positive"));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.cells_x * self.cells_y
    }

    /// Cell whose center is nearest to `(x, y)`, numbered row-major.
    pub fn cell_at(&self, x: f64, y: f64) -> usize {
        let cw = self.width_m / self.cells_x as f64;
        let ch = self.height_m / self.cells_y as f64;
        let cx = ((x / cw).floor().max(0.0) as usize).min(self.cells_x - 1);
        let cy = ((y / ch).floor().max(0.0) as usize).min(self.cells_y - 1);
        cy * self.cells_x + cx
    }
}

/// Random waypoint trajectories mapped to grid cells. Each user starts at a
/// uniform point, then repeats: pause, pick a waypoint, travel to it in a
/// straight line. Every cell change closes one association record.
pub fn random_waypoint_trace(params: &WaypointParams, rng_seed: u64) -> Result<AssociationTrace> {
    params.validate()?;
    let cw = params.width_m / params.cells_x as f64;
    let ch = params.height_m / params.cells_y as f64;
    let end = params.duration_s;
    let mut records = Vec::new();
    for user in 0..params.num_users {
        let mut rng = rng::stream(rng_seed, user as u64);
        let mut pos = (
            rng.random_range(0.0..=params.width_m),
            rng.random_range(0.0..=params.height_m),
        );
        let mut cell = params.cell_at(pos.0, pos.1);
        let mut enter = 0.0;
        let mut t = 0.0;
        while t < end {
            t += rng.random_range(params.pause_s.0..=params.pause_s.1);
            if t >= end {
                break;
            }
            let target = (
                rng.random_range(0.0..=params.width_m),
                rng.random_range(0.0..=params.height_m),
            );
            let speed = rng.random_range(params.speed_mps.0..=params.speed_mps.1);
            let (dx, dy) = (target.0 - pos.0, target.1 - pos.1);
            let travel = dx.hypot(dy) / speed;

            // Segment parameters where the path crosses a grid line.
            let mut cuts = vec![0.0, 1.0];
            for (p0, d, size, count) in [(pos.0, dx, cw, params.cells_x), (pos.1, dy, ch, params.cells_y)] {
                if d != 0.0 {
                    for k in 1..count {
                        let s = (k as f64 * size - p0) / d;
                        if s > 0.0 && s < 1.0 {
                            cuts.push(s);
                        }
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            for w in cuts.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let next = params.cell_at(pos.0 + mid * dx, pos.1 + mid * dy);
                let at = t + w[0] * travel;
                if next != cell && at < end {
                    if at > enter {
                        records.push(AssocRecord {
                            user: user as u32,
                            cell: cell as u32,
                            enter_s: enter,
                            exit_s: at,
                        });
                        enter = at;
                    }
                    cell = next;
                }
            }
            t += travel;
            pos = target;
        }
        records.push(AssocRecord {
            user: user as u32,
            cell: cell as u32,
            enter_s: enter,
            exit_s: end,
        });
    }
    AssociationTrace::new(records)
}
