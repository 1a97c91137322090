//! Cache placement at base stations driven by cell sojourn times.
//!
//! A user requesting file `f` collects it while passing base stations. From
//! station `n` it can pull at most the stored share `x[n][f]` and at most
//! `rate * sojourn[n]`, so the collected fraction is
//! `min(1, Σ_n min(x[n][f], rate * sojourn[n]))`. Per-visit caps at one
//! station add up to the same `min`, so only total sojourn per cell matters.
//! A request fails when the collected fraction stays below one.

use crate::error::{Error, Result};
use crate::mobility::PathScenarioSet;
use crate::model::{mpc_placement, Capacities, CodedPlacement, DiscretePlacement, Storage, ZipfPopularity};
use crate::rng;

use rand::seq::index::sample as sample_indices;

/// Tolerance on "collected fraction ≥ 1".
pub const COMPLETE_TOL: f64 = 1e-9;

/// Largest search space (product of per-station subset counts) the exact
/// uncoded solver accepts.
pub const EXACT_SEARCH_LIMIT: f64 = 1e7;

/// Base-station placement problem.
#[derive(Debug, Clone)]
pub struct BsInstance {
    scenarios: PathScenarioSet,
    popularity: ZipfPopularity,
    rate: f64,
    caps: Capacities,
    /// `rate * sojourn`, scenario-major.
    reach: Vec<f64>,
}

impl BsInstance {
    pub fn new(scenarios: PathScenarioSet, popularity: ZipfPopularity, rate: f64, caps: Capacities) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!("downlink rate must be positive, got {rate}")));
        }
        if caps.len() != scenarios.num_cells() {
            return Err(Error::DimensionMismatch(format!(
                "{} capacities for {} base stations",
                caps.len(),
                scenarios.num_cells()
            )));
        }
        let reach = scenarios
            .scenarios()
            .iter()
            .flat_map(|s| s.sojourn_s.iter().map(move |t| rate * t))
            .collect();
        Ok(BsInstance {
            scenarios,
            popularity,
            rate,
            caps,
            reach,
        })
    }

    pub fn num_bs(&self) -> usize {
        self.scenarios.num_cells()
    }

    pub fn num_files(&self) -> usize {
        self.popularity.num_files()
    }

    pub fn scenarios(&self) -> &PathScenarioSet {
        &self.scenarios
    }

    pub fn popularity(&self) -> &ZipfPopularity {
        &self.popularity
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn caps(&self) -> &Capacities {
        &self.caps
    }

    fn reach_row(&self, s: usize) -> &[f64] {
        let n = self.num_bs();
        &self.reach[s * n..(s + 1) * n]
    }

    fn check_dims<S: Storage>(&self, placement: &S) -> Result<()> {
        if placement.num_nodes() != self.num_bs() || placement.num_files() != self.num_files() {
            return Err(Error::DimensionMismatch(format!(
                "placement is {}x{}, instance is {}x{}",
                placement.num_nodes(),
                placement.num_files(),
                self.num_bs(),
                self.num_files()
            )));
        }
        Ok(())
    }
}

/// Fraction of one file collected along a path with the given per-cell
/// total sojourns. `stored[n]` is the share of the file held at station `n`.
pub fn downloaded_fraction(stored: &[f64], sojourn_s: &[f64], rate: f64) -> f64 {
    stored
        .iter()
        .zip(sojourn_s)
        .map(|(x, t)| x.min(rate * t))
        .sum::<f64>()
        .min(1.0)
}

fn collected<S: Storage>(placement: &S, file: usize, reach: &[f64]) -> f64 {
    reach
        .iter()
        .enumerate()
        .map(|(n, c)| placement.fraction(n, file).min(*c))
        .sum::<f64>()
        .min(1.0)
}

/// Probability that a request cannot be completed from base-station caches.
pub fn failure_probability<S: Storage>(placement: &S, inst: &BsInstance) -> Result<f64> {
    inst.check_dims(placement)?;
    let mut total = 0.0;
    for (s, sc) in inst.scenarios.scenarios().iter().enumerate() {
        let reach = inst.reach_row(s);
        let failed: f64 = (0..inst.num_files())
            .filter(|&f| collected(placement, f, reach) < 1.0 - COMPLETE_TOL)
            .map(|f| inst.popularity.prob(f))
            .sum();
        total += sc.weight * failed;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Expected collected fraction of the requested file. Concave in `x`; this
/// is what [`optimize_coded`] maximizes.
pub fn served_fraction_objective(x: &CodedPlacement, inst: &BsInstance) -> Result<f64> {
    inst.check_dims(x)?;
    Ok(objective_and_supergradient(x, inst, None))
}

/// Objective value; when `grad` is given it receives a supergradient.
fn objective_and_supergradient(x: &CodedPlacement, inst: &BsInstance, mut grad: Option<&mut [f64]>) -> f64 {
    let nb = inst.num_bs();
    let nf = inst.num_files();
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let mut total = 0.0;
    let mut column = vec![0.0; nb];
    for f in 0..nf {
        let p = inst.popularity.prob(f);
        for (n, c) in column.iter_mut().enumerate() {
            *c = x.get(n, f);
        }
        let mut served = 0.0;
        for (s, sc) in inst.scenarios.scenarios().iter().enumerate() {
            let reach = inst.reach_row(s);
            let sum: f64 = column.iter().zip(reach).map(|(x, c)| x.min(*c)).sum();
            served += sc.weight * sum.min(1.0);
            if sum < 1.0 {
                if let Some(g) = grad.as_deref_mut() {
                    for n in 0..nb {
                        if column[n] < reach[n] {
                            g[n * nf + f] += sc.weight * p;
                        }
                    }
                }
            }
        }
        total += p * served;
    }
    total
}

/// Euclidean projection of `v` onto `{u : 0 ≤ u ≤ 1, Σ u ≤ cap}`.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    project_capped_simplex_in_place(&mut out, cap);
    out
}

fn project_capped_simplex_in_place(v: &mut [f64], cap: f64) {
    assert!(cap >= 0.0, "capacity must be nonnegative");
    let clipped: f64 = v.iter().map(|x| x.clamp(0.0, 1.0)).sum();
    if clipped <= cap {
        v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
        return;
    }
    // h(τ) = Σ clip(v_i − τ, 0, 1) is piecewise linear and nonincreasing,
    // with kinks at v_i − 1 (enter the linear part) and v_i (leave it).
    // Walk the kinks to find h(τ) = cap.
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * v.len());
    for &x in v.iter() {
        events.push((x - 1.0, 1));
        events.push((x, -1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut tau = events[0].0;
    let mut h = v.len() as f64;
    let mut slope = 0i32;
    let mut found = None;
    for &(at, delta) in &events {
        let next_h = h - slope as f64 * (at - tau);
        if next_h <= cap && slope > 0 {
            found = Some(tau + (h - cap) / slope as f64);
            break;
        }
        h = next_h;
        tau = at;
        slope += delta;
    }
    let tau = found.unwrap_or(tau).max(0.0);
    v.iter_mut().for_each(|x| *x = (*x - tau).clamp(0.0, 1.0));
}

/// Default iteration count for [`optimize_coded`].
pub const DEFAULT_CODED_ITERATIONS: usize = 5000;

/// Maximizes [`served_fraction_objective`] by projected supergradient
/// ascent with step `1/√t`, tracking the running average of iterates.
/// Returns the best evaluated point (raw or averaged). `seed` picks the
/// starting point; seed 0 starts from zero storage.
pub fn optimize_coded(inst: &BsInstance, iterations: usize, seed: u64) -> CodedPlacement {
    let nb = inst.num_bs();
    let nf = inst.num_files();
    let mut x = CodedPlacement::zeros(nb, nf);
    if seed != 0 {
        use rand::Rng as _;
        let mut r = rng::stream(seed, 0x636f_6465);
        for n in 0..nb {
            let row = x.row_mut(n);
            row.iter_mut().for_each(|v| *v = r.random::<f64>());
            project_capped_simplex_in_place(row, inst.caps.get(n));
        }
    }
    let mut grad = vec![0.0; nb * nf];
    let mut avg = x.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut best = x.clone();
    for t in 1..=iterations.max(1) {
        let val = objective_and_supergradient(&x, inst, Some(&mut grad));
        if val > best_val {
            best_val = val;
            best = x.clone();
        }
        if t > 1 {
            let avg_val = objective_and_supergradient(&avg, inst, None);
            if avg_val > best_val {
                best_val = avg_val;
                best = avg.clone();
            }
        }
        let step = 1.0 / (t as f64).sqrt();
        for n in 0..nb {
            let g = &grad[n * nf..(n + 1) * nf];
            let row = x.row_mut(n);
            for (v, d) in row.iter_mut().zip(g) {
                *v += step * d;
            }
            project_capped_simplex_in_place(row, inst.caps.get(n));
        }
        let w = 1.0 / (t as f64 + 1.0);
        for n in 0..nb {
            let src = x.row(n).to_vec();
            for (a, v) in avg.row_mut(n).iter_mut().zip(src) {
                *a += w * (v - *a);
            }
        }
    }
    let last = objective_and_supergradient(&x, inst, None);
    if last > best_val {
        best = x;
    }
    best
}

/// Search strategy for whole-file placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UncodedMode {
    /// Depth-first branch and bound; global minimizer of failure probability.
    Exact,
    /// Steepest-descent single-file swaps; restart 0 starts from the
    /// most-popular placement, later restarts from random placements.
    LocalSearch { restarts: usize },
}

/// Per-file failure bookkeeping over whole-file placements.
struct UncodedEval<'a> {
    inst: &'a BsInstance,
    /// `min(1, rate * sojourn)`, scenario-major.
    unit_reach: Vec<f64>,
}

impl<'a> UncodedEval<'a> {
    fn new(inst: &'a BsInstance) -> Self {
        UncodedEval {
            inst,
            unit_reach: inst.reach.iter().map(|c| c.min(1.0)).collect(),
        }
    }

    fn row(&self, s: usize) -> &[f64] {
        let n = self.inst.num_bs();
        &self.unit_reach[s * n..(s + 1) * n]
    }

    /// Failure mass contributed by file `f` when held at `holders`.
    fn file_failure(&self, f: usize, holders: &[usize]) -> f64 {
        let mut fail = 0.0;
        for (s, sc) in self.inst.scenarios.scenarios().iter().enumerate() {
            let row = self.row(s);
            let got: f64 = holders.iter().map(|&n| row[n]).sum();
            if got < 1.0 - COMPLETE_TOL {
                fail += sc.weight;
            }
        }
        self.inst.popularity.prob(f) * fail
    }

    fn total(&self, p: &DiscretePlacement) -> f64 {
        (0..self.inst.num_files())
            .map(|f| self.file_failure(f, &p.holders(f)))
            .sum()
    }
}

/// Whole-file placement minimizing failure probability.
pub fn optimize_uncoded(inst: &BsInstance, mode: UncodedMode, seed: u64) -> Result<DiscretePlacement> {
    let caps = inst.caps.as_integers()?;
    let nf = inst.num_files();
    let caps: Vec<usize> = caps.into_iter().map(|c| c.min(nf)).collect();
    match mode {
        UncodedMode::Exact => branch_and_bound(inst, &caps),
        UncodedMode::LocalSearch { restarts } => Ok(local_search(inst, &caps, restarts, seed)),
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Lexicographic successor of a sorted k-subset of `0..n`.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn branch_and_bound(inst: &BsInstance, caps: &[usize]) -> Result<DiscretePlacement> {
    let nb = inst.num_bs();
    let nf = inst.num_files();
    let space: f64 = caps.iter().map(|&k| binomial(nf, k)).product();
    if space > EXACT_SEARCH_LIMIT {
        return Err(Error::TooLarge(format!(
            "exact search over {space:.3e} placements exceeds limit {EXACT_SEARCH_LIMIT:.0e}"
        )));
    }
    let eval = UncodedEval::new(inst);
    let ns = inst.scenarios.len();
    // suffix[n][s]: what stations n.. could add if they stored every file.
    let mut suffix = vec![vec![0.0; ns]; nb + 1];
    for n in (0..nb).rev() {
        for s in 0..ns {
            suffix[n][s] = suffix[n + 1][s] + eval.row(s)[n];
        }
    }

    struct Search<'e, 'a> {
        eval: &'e UncodedEval<'a>,
        caps: &'e [usize],
        suffix: Vec<Vec<f64>>,
        acc: Vec<f64>, // collected per (scenario, file), scenario-major
        choice: Vec<Vec<usize>>,
        best: f64,
        best_choice: Option<Vec<Vec<usize>>>,
    }

    impl Search<'_, '_> {
        fn bound(&self, depth: usize) -> f64 {
            let inst = self.eval.inst;
            let nf = inst.num_files();
            let mut total = 0.0;
            for (s, sc) in inst.scenarios.scenarios().iter().enumerate() {
                let extra = self.suffix[depth][s];
                let acc = &self.acc[s * nf..(s + 1) * nf];
                let failed: f64 = (0..nf)
                    .filter(|&f| acc[f] + extra < 1.0 - COMPLETE_TOL)
                    .map(|f| inst.popularity.prob(f))
                    .sum();
                total += sc.weight * failed;
            }
            total
        }

        fn apply(&mut self, n: usize, files: &[usize], sign: f64) {
            let inst = self.eval.inst;
            let nf = inst.num_files();
            for s in 0..inst.scenarios.len() {
                let r = self.eval.row(s)[n];
                for &f in files {
                    self.acc[s * nf + f] += sign * r;
                }
            }
        }

        fn dfs(&mut self, depth: usize) {
            let nb = self.eval.inst.num_bs();
            // At a leaf the bound is the exact failure probability.
            let bound = self.bound(depth);
            if bound >= self.best - 1e-12 {
                return;
            }
            if depth == nb {
                self.best = bound;
                self.best_choice = Some(self.choice.clone());
                return;
            }
            let k = self.caps[depth];
            let nf = self.eval.inst.num_files();
            let mut comb: Vec<usize> = (0..k).collect();
            loop {
                self.apply(depth, &comb, 1.0);
                self.choice.push(comb.clone());
                self.dfs(depth + 1);
                self.choice.pop();
                self.apply(depth, &comb, -1.0);
                if !next_combination(&mut comb, nf) {
                    break;
                }
            }
        }
    }

    let mut search = Search {
        eval: &eval,
        caps,
        suffix,
        acc: vec![0.0; ns * nf],
        choice: Vec::with_capacity(nb),
        best: f64::INFINITY,
        best_choice: None,
    };
    search.dfs(0);
    let choice = search.best_choice.expect("at least one leaf is always visited");
    DiscretePlacement::from_files(nf, &choice)
}

fn local_search(inst: &BsInstance, caps: &[usize], restarts: usize, seed: u64) -> DiscretePlacement {
    let nb = inst.num_bs();
    let nf = inst.num_files();
    let eval = UncodedEval::new(inst);
    let caps_f = Capacities::new(caps.iter().map(|&c| c as f64).collect()).expect("nonnegative");
    let mut best: Option<(f64, DiscretePlacement)> = None;
    for r in 0..=restarts {
        let start = if r == 0 {
            mpc_placement(&inst.popularity, &caps_f, nb).expect("integer capacities")
        } else {
            let mut g = rng::stream(seed, r as u64);
            let mut p = DiscretePlacement::empty(nb, nf);
            for (n, &k) in caps.iter().enumerate() {
                for f in sample_indices(&mut g, nf, k) {
                    p.set(n, f, true);
                }
            }
            p
        };
        let (val, p) = descend(&eval, caps, start);
        if best.as_ref().is_none_or(|(b, _)| val < *b - 1e-12) {
            best = Some((val, p));
        }
    }
    best.expect("restart 0 always runs").1
}

/// Steepest descent over moves "station `n` drops `out` (or nothing, when
/// below capacity) and stores `inc`".
fn descend(eval: &UncodedEval<'_>, caps: &[usize], mut p: DiscretePlacement) -> (f64, DiscretePlacement) {
    let nb = eval.inst.num_bs();
    let nf = eval.inst.num_files();
    let mut holders: Vec<Vec<usize>> = (0..nf).map(|f| p.holders(f)).collect();
    let mut fail: Vec<f64> = (0..nf).map(|f| eval.file_failure(f, &holders[f])).collect();
    loop {
        let mut best_move: Option<(f64, usize, Option<usize>, usize, f64, f64)> = None;
        for n in 0..nb {
            let stored = p.files_at(n);
            let mut outs: Vec<Option<usize>> = stored.iter().copied().map(Some).collect();
            if stored.len() < caps[n] {
                outs.insert(0, None);
            }
            for &out in &outs {
                let (out_delta, out_fail) = match out {
                    Some(o) => {
                        let h: Vec<usize> = holders[o].iter().copied().filter(|&m| m != n).collect();
                        let nf_o = eval.file_failure(o, &h);
                        (nf_o - fail[o], nf_o)
                    }
                    None => (0.0, 0.0),
                };
                for inc in 0..nf {
                    if p.is_stored(n, inc) {
                        continue;
                    }
                    let mut h = holders[inc].clone();
                    h.push(n);
                    let nf_i = eval.file_failure(inc, &h);
                    let delta = out_delta + nf_i - fail[inc];
                    if delta < -1e-12 && best_move.as_ref().is_none_or(|b| delta < b.0 - 1e-15) {
                        best_move = Some((delta, n, out, inc, out_fail, nf_i));
                    }
                }
            }
        }
        let Some((_, n, out, inc, out_fail, in_fail)) = best_move else {
            break;
        };
        if let Some(o) = out {
            p.set(n, o, false);
            holders[o].retain(|&m| m != n);
            fail[o] = out_fail;
        }
        p.set(n, inc, true);
        holders[inc].push(n);
        holders[inc].sort_unstable();
        fail[inc] = in_fail;
    }
    let total = eval.total(&p);
    (total, p)
}

/// New storage column and failure mass for one touched file.
type ColumnUpdate = (usize, Vec<f64>, f64);

/// Options for [`optimize_coded_failure`].
#[derive(Debug, Clone, PartialEq)]
pub struct CodedRefineOptions {
    /// Supergradient iterations for the concave relaxation.
    pub iterations: usize,
    /// Transfer quanta tried in order, coarse to fine.
    pub quanta: Vec<f64>,
    /// Also try paired-station transfers when no single move improves.
    pub pair_moves: bool,
}

impl Default for CodedRefineOptions {
    fn default() -> Self {
        CodedRefineOptions {
            iterations: DEFAULT_CODED_ITERATIONS,
            quanta: vec![1.0, 0.5, 0.25],
            pair_moves: true,
        }
    }
}

/// Coded placement that minimizes failure probability.
///
/// The served-fraction relaxation from [`optimize_coded`] gives partial
/// credit for incomplete downloads, so its optimum can leave many files
/// just short of completion. This rounds the relaxed optimum to a grid of
/// `quanta[0]` and improves it, and every extra start in `starts`, by
/// steepest descent on [`failure_probability`] over storage transfers
/// ("station `n` moves `δ` of file `a`, or of free space, to file `b`").
/// The best result over all starts is returned.
pub fn optimize_coded_failure(
    inst: &BsInstance,
    starts: &[CodedPlacement],
    opts: &CodedRefineOptions,
    seed: u64,
) -> CodedPlacement {
    let relaxed = optimize_coded(inst, opts.iterations, seed);
    let first = opts.quanta.first().copied().unwrap_or(1.0);
    let mut candidates = vec![round_to_grid(&relaxed, inst.caps(), first)];
    candidates.extend(starts.iter().cloned());
    let mut best: Option<(f64, CodedPlacement)> = None;
    for start in candidates {
        let x = refine_coded(inst, start, opts);
        let val = failure_probability(&x, inst).expect("dimensions checked");
        if best.as_ref().is_none_or(|(b, _)| val < *b - 1e-12) {
            best = Some((val, x));
        }
    }
    best.expect("relaxation start always present").1
}

/// Rounds every row down to multiples of `delta`, then hands leftover
/// capacity to the largest remainders.
pub fn round_to_grid(x: &CodedPlacement, caps: &Capacities, delta: f64) -> CodedPlacement {
    let mut out = x.clone();
    for n in 0..x.num_nodes() {
        let row = out.row_mut(n);
        let mut rem: Vec<(f64, usize)> = Vec::with_capacity(row.len());
        let mut used = 0.0;
        for (f, v) in row.iter_mut().enumerate() {
            let q = (*v / delta + 1e-9).floor() * delta;
            rem.push((*v - q, f));
            *v = q;
            used += q;
        }
        let mut units = ((caps.get(n) - used) / delta + 1e-9).floor() as i64;
        rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (r, f) in rem {
            if units <= 0 || r <= 1e-12 {
                break;
            }
            if row[f] + delta <= 1.0 + 1e-12 {
                row[f] += delta;
                units -= 1;
            }
        }
    }
    out
}

struct CodedEval<'a> {
    inst: &'a BsInstance,
}

impl CodedEval<'_> {
    fn file_failure(&self, f: usize, column: &[f64]) -> f64 {
        let mut fail = 0.0;
        for (s, sc) in self.inst.scenarios.scenarios().iter().enumerate() {
            let reach = self.inst.reach_row(s);
            let got: f64 = column.iter().zip(reach).map(|(x, c)| x.min(*c)).sum();
            if got < 1.0 - COMPLETE_TOL {
                fail += sc.weight;
            }
        }
        self.inst.popularity.prob(f) * fail
    }
}

/// One storage transfer at station `node`: `delta` leaves `from` (`None` is
/// free space) and is added to `to`.
#[derive(Debug, Clone, Copy)]
struct Transfer {
    node: usize,
    from: Option<usize>,
    to: usize,
}

/// Steepest descent on failure probability over single and paired transfers.
pub fn refine_coded(inst: &BsInstance, start: CodedPlacement, opts: &CodedRefineOptions) -> CodedPlacement {
    let nb = inst.num_bs();
    let nf = inst.num_files();
    let eval = CodedEval { inst };
    let mut x = start;
    let mut columns: Vec<Vec<f64>> = (0..nf).map(|f| x.column(f)).collect();
    let mut fail: Vec<f64> = (0..nf).map(|f| eval.file_failure(f, &columns[f])).collect();

    // Failure delta of applying `moves` (all with quantum `delta`).
    let score = |moves: &[Transfer], delta: f64, columns: &[Vec<f64>], fail: &[f64]| -> (f64, Vec<ColumnUpdate>) {
        let mut touched: Vec<(usize, Vec<f64>)> = Vec::new();
        let col = |f: usize, touched: &mut Vec<(usize, Vec<f64>)>| -> usize {
            match touched.iter().position(|(g, _)| *g == f) {
                Some(i) => i,
                None => {
                    touched.push((f, columns[f].clone()));
                    touched.len() - 1
                }
            }
        };
        for m in moves {
            if let Some(a) = m.from {
                let i = col(a, &mut touched);
                touched[i].1[m.node] -= delta;
            }
            let i = col(m.to, &mut touched);
            touched[i].1[m.node] += delta;
        }
        let mut d = 0.0;
        let mut out = Vec::with_capacity(touched.len());
        for (f, c) in touched {
            let v = eval.file_failure(f, &c);
            d += v - fail[f];
            out.push((f, c, v));
        }
        (d, out)
    };

    for &delta in &opts.quanta {
        loop {
            let free: Vec<f64> = (0..nb)
                .map(|n| inst.caps.get(n) - x.row(n).iter().sum::<f64>())
                .collect();
            // Candidate single transfers at each station.
            let mut per_node: Vec<Vec<Transfer>> = vec![Vec::new(); nb];
            for n in 0..nb {
                let mut donors: Vec<Option<usize>> = Vec::new();
                if free[n] >= delta - 1e-12 {
                    donors.push(None);
                }
                donors.extend((0..nf).filter(|&f| x.get(n, f) >= delta - 1e-12).map(Some));
                for &from in &donors {
                    for to in 0..nf {
                        if Some(to) == from || x.get(n, to) + delta > 1.0 + 1e-12 {
                            continue;
                        }
                        per_node[n].push(Transfer { node: n, from, to });
                    }
                }
            }
            let mut best: Option<(f64, Vec<ColumnUpdate>)> = None;
            for moves in per_node.iter().flatten() {
                let (d, cols) = score(std::slice::from_ref(moves), delta, &columns, &fail);
                if d < -1e-12 && best.as_ref().is_none_or(|b| d < b.0 - 1e-15) {
                    best = Some((d, cols));
                }
            }
            if best.is_none() && opts.pair_moves {
                for n in 0..nb {
                    for m in n + 1..nb {
                        for a in &per_node[n] {
                            for b in per_node[m].iter().filter(|b| b.to == a.to) {
                                let (d, cols) = score(&[*a, *b], delta, &columns, &fail);
                                if d < -1e-12 && best.as_ref().is_none_or(|bb| d < bb.0 - 1e-15) {
                                    best = Some((d, cols));
                                }
                            }
                        }
                    }
                }
            }
            let Some((_, cols)) = best else { break };
            for (f, c, v) in cols {
                for (n, val) in c.iter().enumerate() {
                    x.set(n, f, val.clamp(0.0, 1.0));
                }
                columns[f] = c;
                fail[f] = v;
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::Scenario;
    use crate::model::zipf_pmf;

    fn instance(sojourns: Vec<Vec<f64>>, pmf: Vec<f64>, rate: f64, cap: f64) -> BsInstance {
        let n = sojourns[0].len();
        let w = 1.0 / sojourns.len() as f64;
        let set = PathScenarioSet::new(
            n,
            sojourns
                .into_iter()
                .map(|s| Scenario {
                    sojourn_s: s,
                    weight: w,
                })
                .collect(),
        )
        .unwrap();
        BsInstance::new(
            set,
            ZipfPopularity::from_pmf(pmf).unwrap(),
            rate,
            Capacities::uniform(n, cap).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rate_limited_download() {
        assert_eq!(downloaded_fraction(&[1.0], &[0.5], 1.0), 0.5);
        assert_eq!(downloaded_fraction(&[0.0, 0.0], &[5.0, 5.0], 1.0), 0.0);
        assert_eq!(downloaded_fraction(&[0.7, 0.7], &[5.0, 5.0], 1.0), 1.0);
    }

    #[test]
    fn saturated_and_empty_systems() {
        let inst = instance(vec![vec![2.0, 0.0], vec![0.0, 3.0]], vec![0.5, 0.3, 0.2], 1.0, 3.0);
        let full = CodedPlacement::from_rows(vec![vec![1.0; 3]; 2]).unwrap();
        assert_eq!(failure_probability(&full, &inst).unwrap(), 0.0);
        assert!((served_fraction_objective(&full, &inst).unwrap() - 1.0).abs() < 1e-15);
        let empty = DiscretePlacement::empty(2, 3);
        assert_eq!(failure_probability(&empty, &inst).unwrap(), 1.0);
        assert_eq!(served_fraction_objective(&empty.to_coded(), &inst).unwrap(), 0.0);
    }

    #[test]
    fn one_failing_pair() {
        // Scenario 0 reaches only station 0, scenario 1 only station 1.
        // File 0 at both, file 1 at station 1 only: (scenario 0, file 1) fails.
        let inst = instance(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5], 1.0, 2.0);
        let p = DiscretePlacement::from_files(2, &[vec![0], vec![0, 1]]).unwrap();
        let fail = failure_probability(&p, &inst).unwrap();
        assert!((fail - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let inst = instance(vec![vec![1.0, 1.0]], vec![1.0], 1.0, 1.0);
        let p = DiscretePlacement::empty(3, 1);
        assert!(matches!(
            failure_probability(&p, &inst),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn projection_basics() {
        assert_eq!(project_capped_simplex(&[0.2, 0.3], 1.0), vec![0.2, 0.3]);
        let p = project_capped_simplex(&[2.0, 2.0], 1.0);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        assert_eq!(project_capped_simplex(&[3.0, -1.0, 0.5], 0.0), vec![0.0, 0.0, 0.0]);
        let p = project_capped_simplex(&[5.0, 0.9, 0.1], 1.5);
        assert!((p.iter().sum::<f64>() - 1.5).abs() < 1e-12);
        assert!((p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coded_prefers_popular_file_when_saturated() {
        let inst = instance(vec![vec![2.0], vec![1.0]], vec![0.7, 0.3], 1.0, 1.0);
        let x = optimize_coded(&inst, DEFAULT_CODED_ITERATIONS, 0);
        let val = served_fraction_objective(&x, &inst).unwrap();
        assert!((val - 0.7).abs() < 1e-3, "objective {val}");
        assert!(x.is_feasible(inst.caps()));
    }

    #[test]
    fn coded_saturates_with_ample_capacity() {
        let inst = instance(
            vec![vec![2.0, 1.0], vec![1.0, 3.0]],
            zipf_pmf(3, 1.0).unwrap().pmf().to_vec(),
            1.0,
            3.0,
        );
        let x = optimize_coded(&inst, 500, 0);
        assert!((served_fraction_objective(&x, &inst).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_capacity_uncoded() {
        let inst = instance(vec![vec![2.0, 1.0]], vec![0.6, 0.4], 1.0, 0.0);
        for mode in [UncodedMode::Exact, UncodedMode::LocalSearch { restarts: 2 }] {
            let p = optimize_uncoded(&inst, mode, 1).unwrap();
            assert_eq!(p, DiscretePlacement::empty(2, 2));
            assert_eq!(failure_probability(&p, &inst).unwrap(), 1.0);
        }
    }

    #[test]
    fn exact_refuses_huge_instances() {
        let pop = zipf_pmf(100, 1.0).unwrap();
        let inst = instance(vec![vec![1.0; 6]], pop.pmf().to_vec(), 1.0, 1.0);
        assert!(matches!(
            optimize_uncoded(&inst, UncodedMode::Exact, 0),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn combinations_enumerate_in_order() {
        let mut c = vec![0, 1];
        let mut all = vec![c.clone()];
        while next_combination(&mut c, 4) {
            all.push(c.clone());
        }
        assert_eq!(all.len(), 6);
        assert_eq!(all.last().unwrap(), &vec![2, 3]);
    }
}
