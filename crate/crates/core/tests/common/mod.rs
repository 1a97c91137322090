//! Independent reference implementations shared by the oracle tests and the
//! acceptance runner. Nothing here calls the solver code it checks.

#![allow(dead_code)]

use mobcache::bs_place::BsInstance;
use mobcache::mobility::{ContactModel, PathScenarioSet, Scenario};
use mobcache::ut_place::UtInstance;
use mobcache::{zipf_pmf, Capacities, DiscretePlacement, Storage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `x[n][f]` from any placement.
pub fn dense<S: Storage>(p: &S) -> Vec<Vec<f64>> {
    (0..p.num_nodes())
        .map(|n| (0..p.num_files()).map(|f| p.fraction(n, f)).collect())
        .collect()
}

/// Failure probability straight from the definition.
pub fn failure_oracle(x: &[Vec<f64>], inst: &BsInstance) -> f64 {
    let pmf = inst.popularity().pmf();
    let mut total = 0.0;
    for sc in inst.scenarios().scenarios() {
        for (f, p) in pmf.iter().enumerate() {
            let got: f64 = x
                .iter()
                .zip(&sc.sojourn_s)
                .map(|(row, t)| row[f].min(inst.rate() * t))
                .sum();
            if got.min(1.0) < 1.0 - 1e-9 {
                total += sc.weight * p;
            }
        }
    }
    total
}

/// Expected collected fraction, straight from the definition.
pub fn served_oracle(x: &[Vec<f64>], inst: &BsInstance) -> f64 {
    let pmf = inst.popularity().pmf();
    let mut total = 0.0;
    for sc in inst.scenarios().scenarios() {
        for (f, p) in pmf.iter().enumerate() {
            let got: f64 = x
                .iter()
                .zip(&sc.sojourn_s)
                .map(|(row, t)| row[f].min(inst.rate() * t))
                .sum();
            total += sc.weight * p * got.min(1.0);
        }
    }
    total
}

/// All whole-file placements with one file per station, station 0 most
/// significant; the first strictly better one wins.
pub fn enumerate_uncoded_one_each(inst: &BsInstance) -> DiscretePlacement {
    let (nb, nf) = (inst.num_bs(), inst.num_files());
    let total = nf.pow(nb as u32);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for code in 0..total {
        let mut files = vec![0; nb];
        let mut c = code;
        for n in (0..nb).rev() {
            files[n] = c % nf;
            c /= nf;
        }
        let x: Vec<Vec<f64>> = files
            .iter()
            .map(|&f| (0..nf).map(|g| if g == f { 1.0 } else { 0.0 }).collect())
            .collect();
        let v = failure_oracle(&x, inst);
        if best.as_ref().is_none_or(|(b, _)| v < b - 1e-12) {
            best = Some((v, files));
        }
    }
    let files = best.unwrap().1;
    let lists: Vec<Vec<usize>> = files.iter().map(|&f| vec![f]).collect();
    DiscretePlacement::from_files(nf, &lists).unwrap()
}

/// Projection onto `{0 ≤ u ≤ 1, Σu ≤ cap}` by enumerating active sets.
/// Each coordinate sits at 0, at 1, or is free; the capacity row is either
/// slack or tight. Among feasible candidates the closest one is optimal.
pub fn project_active_set(v: &[f64], cap: f64) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        for tight in [false, true] {
            let fixed: f64 = state.iter().filter(|s| **s == 1).count() as f64;
            let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
            let tau = if tight {
                if free.is_empty() {
                    continue;
                }
                (free.iter().map(|&i| v[i]).sum::<f64>() + fixed - cap) / free.len() as f64
            } else {
                0.0
            };
            let u: Vec<f64> = (0..n)
                .map(|i| match state[i] {
                    0 => 0.0,
                    1 => 1.0,
                    _ => v[i] - tau,
                })
                .collect();
            let feasible = u.iter().all(|x| (-1e-12..=1.0 + 1e-12).contains(x)) && u.iter().sum::<f64>() <= cap + 1e-12;
            if !feasible {
                continue;
            }
            let d: f64 = u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, u));
            }
        }
    }
    best.expect("zero vector is always feasible").1
}

/// Grid-search optimum of the served fraction for 2 stations × 2 files.
///
/// The objective is nondecreasing in every entry, so some optimum fills each
/// station to `min(cap, 2)`. Station `n` is then described by its share `t`
/// of file 0, with `1 − …` of the remaining capacity on file 1, leaving a
/// 2-D grid at resolution `step`.
pub fn coded_grid_optimum_2x2(inst: &BsInstance, step: f64) -> f64 {
    assert_eq!((inst.num_bs(), inst.num_files()), (2, 2));
    let axis = |cap: f64| -> Vec<(f64, f64)> {
        let fill = cap.min(2.0);
        let lo = (fill - 1.0).max(0.0);
        let hi = fill.min(1.0);
        let k = ((hi - lo) / step).round() as usize;
        (0..=k)
            .map(|i| {
                let t = if k == 0 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / k as f64
                };
                (t, (fill - t).clamp(0.0, 1.0))
            })
            .collect()
    };
    let a = axis(inst.caps().get(0));
    let b = axis(inst.caps().get(1));
    let mut best = f64::NEG_INFINITY;
    for &(a0, a1) in &a {
        for &(b0, b1) in &b {
            let x = vec![vec![a0, a1], vec![b0, b1]];
            best = best.max(served_oracle(&x, inst));
        }
    }
    best
}

pub fn random_scenarios(g: &mut ChaCha8Rng, nb: usize, count: usize, max_sojourn: f64) -> PathScenarioSet {
    let scenarios = (0..count)
        .map(|_| Scenario {
            sojourn_s: (0..nb)
                .map(|_| {
                    if g.random_bool(0.25) {
                        0.0
                    } else {
                        g.random_range(0.0..max_sojourn)
                    }
                })
                .collect(),
            weight: g.random_range(0.1..1.0),
        })
        .collect();
    PathScenarioSet::new(nb, scenarios).unwrap()
}

pub fn random_bs_instance(g: &mut ChaCha8Rng, nb: usize, nf: usize, caps: Vec<f64>) -> BsInstance {
    let count = g.random_range(2..=8);
    let set = random_scenarios(g, nb, count, 1.5);
    let gamma = g.random_range(0.0..2.0);
    BsInstance::new(set, zipf_pmf(nf, gamma).unwrap(), 1.0, Capacities::new(caps).unwrap()).unwrap()
}

/// Offloading ratio straight from the definition, averaging over users.
pub fn offloading_oracle(stored: &[Vec<bool>], rates: &[Vec<f64>], pmf: &[f64], tau: f64) -> f64 {
    let k = stored.len();
    let mut total = 0.0;
    for i in 0..k {
        for (f, p) in pmf.iter().enumerate() {
            let served = if stored[i][f] {
                1.0
            } else {
                let lam: f64 = (0..k).filter(|&j| j != i && stored[j][f]).map(|j| rates[i][j]).sum();
                1.0 - (-lam * tau).exp()
            };
            total += p * served / k as f64;
        }
    }
    total
}

pub fn rate_matrix(m: &ContactModel) -> Vec<Vec<f64>> {
    let k = m.num_users();
    (0..k).map(|i| (0..k).map(|j| m.rate(i, j)).collect()).collect()
}

pub fn stored_matrix(p: &DiscretePlacement) -> Vec<Vec<bool>> {
    (0..p.num_nodes())
        .map(|n| (0..p.num_files()).map(|f| p.is_stored(n, f)).collect())
        .collect()
}

/// Best value over every placement giving each user exactly one file.
pub fn brute_force_ut_one_each(inst: &UtInstance) -> f64 {
    let (k, nf) = (inst.num_users(), inst.num_files());
    let rates = rate_matrix(inst.contacts());
    let pmf = inst.popularity().pmf();
    let mut best = f64::NEG_INFINITY;
    for code in 0..nf.pow(k as u32) {
        let mut stored = vec![vec![false; nf]; k];
        let mut c = code;
        for row in stored.iter_mut() {
            row[c % nf] = true;
            c /= nf;
        }
        best = best.max(offloading_oracle(&stored, &rates, pmf, inst.delay_threshold_s()));
    }
    best
}

pub fn random_ut_instance(g: &mut ChaCha8Rng, k: usize, nf: usize) -> UtInstance {
    let mut m = ContactModel::zeros(k);
    for i in 0..k {
        for j in i + 1..k {
            if g.random_bool(0.8) {
                m.set_rate(i, j, g.random_range(0.0..0.6));
            }
        }
    }
    let gamma = g.random_range(0.0..2.0);
    let tau = g.random_range(0.5..5.0);
    UtInstance::new(
        m,
        zipf_pmf(nf, gamma).unwrap(),
        tau,
        &Capacities::uniform(k, 1.0).unwrap(),
    )
    .unwrap()
}
