//! Quick oracle checks bundled with the binary, so an installed build can
//! verify itself without the test suite.

use rand::Rng as _;

use crate::bs_place::{failure_probability, optimize_uncoded, project_capped_simplex, BsInstance, UncodedMode};
use crate::error::Result;
use crate::evalsim::{simulate_bs_replay, simulate_ut_replay, BsReplaySource, UtReplaySource};
use crate::mobility::{ContactModel, PathScenarioSet, Scenario};
use crate::model::{Capacities, DiscretePlacement, ZipfPopularity};
use crate::rng::{self, Rng};
use crate::ut_place::{brute_force_placement, greedy_placement, offloading_ratio, UtInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckFn = fn(u64) -> Result<(bool, String)>;

/// Runs every check; `seed` fixes the random instances.
pub fn selftest(seed: u64) -> Vec<Check> {
    let checks: [(&'static str, CheckFn); 5] = [
        ("projection_vs_bisection", projection),
        ("branch_and_bound_vs_enumeration", exact_uncoded),
        ("greedy_half_approximation", greedy_bound),
        ("bs_replay_vs_analytic", bs_replay),
        ("ut_replay_vs_analytic", ut_replay),
    ];
    checks
        .iter()
        .enumerate()
        .map(|(i, (name, f))| match f(rng::stream(seed, i as u64).random()) {
            Ok((passed, detail)) => Check { name, passed, detail },
            Err(e) => Check {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}

fn bisection_projection(v: &[f64], cap: f64) -> Vec<f64> {
    let h = |t: f64| v.iter().map(|x| (x - t).clamp(0.0, 1.0)).sum::<f64>();
    if h(0.0) <= cap {
        return v.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    }
    let (mut lo, mut hi) = (0.0, v.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    v.iter().map(|x| (x - hi).clamp(0.0, 1.0)).collect()
}

fn projection(seed: u64) -> Result<(bool, String)> {
    let mut g = rng::seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = g.random_range(1..=6);
        let v: Vec<f64> = (0..n).map(|_| g.random_range(-1.0..2.5)).collect();
        let cap = g.random_range(0.0..n as f64);
        let a = project_capped_simplex(&v, cap);
        let b = bisection_projection(&v, cap);
        worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.2e} over 200 vectors")))
}

fn random_scenarios(g: &mut Rng, nb: usize) -> Result<PathScenarioSet> {
    let s = g.random_range(2..=6);
    let scenarios = (0..s)
        .map(|_| Scenario {
            sojourn_s: (0..nb).map(|_| g.random_range(0.0..1.5)).collect(),
            weight: g.random_range(0.1..1.0),
        })
        .collect();
    PathScenarioSet::new(nb, scenarios)
}

fn random_bs(g: &mut Rng) -> Result<BsInstance> {
    let nb = g.random_range(1..=3);
    let nf = g.random_range(1..=4);
    let set = random_scenarios(g, nb)?;
    BsInstance::new(
        set,
        ZipfPopularity::new(nf, g.random_range(0.0..2.0))?,
        1.0,
        Capacities::uniform(nb, 1.0)?,
    )
}

/// Every station holds one file; first strict improvement in station-major
/// lexicographic order wins.
fn enumerate_uncoded(inst: &BsInstance) -> Result<DiscretePlacement> {
    let (nb, nf) = (inst.num_bs(), inst.num_files());
    let mut idx = vec![0usize; nb];
    let mut best: Option<(f64, DiscretePlacement)> = None;
    loop {
        let files: Vec<Vec<usize>> = idx.iter().map(|&f| vec![f]).collect();
        let p = DiscretePlacement::from_files(nf, &files)?;
        let v = failure_probability(&p, inst)?;
        if best.as_ref().is_none_or(|(b, _)| v < *b - 1e-12) {
            best = Some((v, p));
        }
        let mut i = nb;
        loop {
            if i == 0 {
                return Ok(best.expect("one placement at least").1);
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < nf {
                break;
            }
            idx[i] = 0;
        }
    }
}

fn exact_uncoded(seed: u64) -> Result<(bool, String)> {
    let mut g = rng::seeded(seed);
    let mut mismatches = 0;
    for _ in 0..50 {
        let inst = random_bs(&mut g)?;
        if optimize_uncoded(&inst, UncodedMode::Exact, 0)? != enumerate_uncoded(&inst)? {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches over 50 instances")))
}

fn random_ut(g: &mut Rng) -> Result<UtInstance> {
    let k = g.random_range(1..=4);
    let nf = g.random_range(1..=4);
    let mut m = ContactModel::zeros(k);
    for i in 0..k {
        for j in i + 1..k {
            m.set_rate(i, j, g.random_range(0.0..0.5));
        }
    }
    UtInstance::new(
        m,
        ZipfPopularity::new(nf, g.random_range(0.0..2.0))?,
        g.random_range(0.5..4.0),
        &Capacities::uniform(k, 1.0)?,
    )
}

fn greedy_bound(seed: u64) -> Result<(bool, String)> {
    let mut g = rng::seeded(seed);
    let mut violations = 0;
    let mut sum = 0.0;
    for _ in 0..50 {
        let inst = random_ut(&mut g)?;
        let opt = offloading_ratio(&brute_force_placement(&inst)?, &inst)?;
        let got = offloading_ratio(&greedy_placement(&inst), &inst)?;
        if got < 0.5 * opt - 1e-12 {
            violations += 1;
        }
        sum += if opt > 0.0 { got / opt } else { 1.0 };
    }
    Ok((
        violations == 0,
        format!("{violations} violations, mean ratio {:.4}", sum / 50.0),
    ))
}

fn random_discrete(g: &mut Rng, nodes: usize, nf: usize) -> DiscretePlacement {
    let mut p = DiscretePlacement::empty(nodes, nf);
    for n in 0..nodes {
        p.set(n, g.random_range(0..nf), true);
    }
    p
}

fn bs_replay(seed: u64) -> Result<(bool, String)> {
    let mut g = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..3 {
        let inst = random_bs(&mut g)?;
        let p = random_discrete(&mut g, inst.num_bs(), inst.num_files());
        let r = simulate_bs_replay(
            BsReplaySource::Scenarios(inst.scenarios()),
            &p,
            inst.popularity(),
            1.0,
            20_000,
            seed + i,
        )?;
        let gap = r.gap().unwrap_or(f64::INFINITY);
        ok &= gap <= 0.01f64.max(3.0 * r.std_error);
        worst = worst.max(gap);
    }
    Ok((ok, format!("largest gap {worst:.4} over 3 instances")))
}

fn ut_replay(seed: u64) -> Result<(bool, String)> {
    let mut g = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..3 {
        let inst = random_ut(&mut g)?;
        let p = random_discrete(&mut g, inst.num_users(), inst.num_files());
        let r = simulate_ut_replay(
            UtReplaySource::Model(inst.contacts()),
            &p,
            inst.popularity(),
            inst.delay_threshold_s(),
            20_000,
            seed + i,
        )?;
        let gap = r.gap().unwrap_or(f64::INFINITY);
        ok &= gap <= 0.01f64.max(3.0 * r.std_error);
        worst = worst.max(gap);
    }
    Ok((ok, format!("largest gap {worst:.4} over 3 instances")))
}
