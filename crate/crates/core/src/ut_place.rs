//! Cache placement at user terminals driven by pairwise contact rates.
//!
//! A user first checks its own cache, then waits for the first contact with
//! any user holding the file. Contacts of each pair form independent Poisson
//! processes, so the first helper contact arrives after an exponential time
//! with rate `Σ_helpers rate[i][j]`. The request is offloaded when that wait
//! is within the delay threshold.
//!
//! The offloading ratio is monotone submodular in the set of `(user, file)`
//! elements, and per-user capacities form a partition matroid, so the greedy
//! rule below is a ½-approximation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mobility::ContactModel;
use crate::model::{Capacities, DiscretePlacement, ZipfPopularity};
use crate::rng;

use rand::Rng as _;

/// Largest search space the brute-force solver accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// User-terminal placement problem.
#[derive(Debug, Clone)]
pub struct UtInstance {
    contacts: ContactModel,
    popularity: ZipfPopularity,
    delay_threshold_s: f64,
    caps: Vec<usize>,
}

impl UtInstance {
    pub fn new(
        contacts: ContactModel,
        popularity: ZipfPopularity,
        delay_threshold_s: f64,
        caps: &Capacities,
    ) -> Result<Self> {
        if !(delay_threshold_s > 0.0 && delay_threshold_s.is_finite()) {
            return Err(Error::invalid(format!(
                "delay threshold must be positive, got {delay_threshold_s}"
            )));
        }
        if caps.len() != contacts.num_users() {
            return Err(Error::DimensionMismatch(format!(
                "{} capacities for {} users",
                caps.len(),
                contacts.num_users()
            )));
        }
        Ok(UtInstance {
            caps: caps.as_integers()?,
            contacts,
            popularity,
            delay_threshold_s,
        })
    }

    pub fn num_users(&self) -> usize {
        self.contacts.num_users()
    }

    pub fn num_files(&self) -> usize {
        self.popularity.num_files()
    }

    pub fn contacts(&self) -> &ContactModel {
        &self.contacts
    }

    pub fn popularity(&self) -> &ZipfPopularity {
        &self.popularity
    }

    pub fn delay_threshold_s(&self) -> f64 {
        self.delay_threshold_s
    }

    pub fn caps(&self) -> &[usize] {
        &self.caps
    }

    /// Same instance with a different request law.
    pub fn with_popularity(&self, popularity: ZipfPopularity) -> Self {
        UtInstance {
            popularity,
            ..self.clone()
        }
    }

    fn check_dims(&self, p: &DiscretePlacement) -> Result<()> {
        use crate::model::Storage;
        if p.num_nodes() != self.num_users() || p.num_files() != self.num_files() {
            return Err(Error::DimensionMismatch(format!(
                "placement is {}x{}, instance is {}x{}",
                p.num_nodes(),
                p.num_files(),
                self.num_users(),
                self.num_files()
            )));
        }
        Ok(())
    }
}

/// Probability that `user`'s request for `file` is served from its own
/// cache or by a helper contact within the delay threshold.
pub fn offload_probability(user: usize, file: usize, placement: &DiscretePlacement, inst: &UtInstance) -> f64 {
    if placement.is_stored(user, file) {
        return 1.0;
    }
    let helper_rate: f64 = placement
        .holders(file)
        .into_iter()
        .filter(|&j| j != user)
        .map(|j| inst.contacts.rate(user, j))
        .sum();
    -(-inst.delay_threshold_s * helper_rate).exp_m1()
}

/// Expected fraction of requests served over device-to-device links,
/// averaging one Zipf request per user.
pub fn offloading_ratio(placement: &DiscretePlacement, inst: &UtInstance) -> Result<f64> {
    inst.check_dims(placement)?;
    let k = inst.num_users();
    if k == 0 {
        return Ok(0.0);
    }
    let tau = inst.delay_threshold_s;
    let mut total = 0.0;
    for f in 0..inst.num_files() {
        let holders = placement.holders(f);
        if holders.is_empty() {
            continue;
        }
        let mut served = 0.0;
        // Normalize per file first: a column held by everyone then counts
        // exactly p_f, whatever K is.
        for i in 0..k {
            if placement.is_stored(i, f) {
                served += 1.0;
            } else {
                let row = inst.contacts.row(i);
                let rate: f64 = holders.iter().map(|&j| row[j]).sum();
                served += -(-tau * rate).exp_m1();
            }
        }
        total += inst.popularity.prob(f) * (served / k as f64);
    }
    Ok(total)
}

/// One greedy selection with its marginal gain in offloading ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyStep {
    pub user: usize,
    pub file: usize,
    pub gain: f64,
}

/// Greedy placement over the per-user capacity matroid.
pub fn greedy_placement(inst: &UtInstance) -> DiscretePlacement {
    greedy_with_steps(inst).0
}

/// [`greedy_placement`] plus the sequence of selected elements.
///
/// Keeps `miss[i][f] = exp(-τ · Σ_{holders j} rate[i][j])` and the gain of
/// every candidate. Adding `(u, g)` only changes column `g`, so a step costs
/// `O(K·F + K²)` after `O(K² + K·F)` setup.
pub fn greedy_with_steps(inst: &UtInstance) -> (DiscretePlacement, Vec<GreedyStep>) {
    let k = inst.num_users();
    let nf = inst.num_files();
    let tau = inst.delay_threshold_s;
    let mut placement = DiscretePlacement::empty(k, nf);
    let mut steps = Vec::new();
    if k == 0 {
        return (placement, steps);
    }

    // reach[i][u] = 1 - exp(-τ rate[i][u]): chance that u alone serves i.
    let reach: Vec<f64> = (0..k)
        .flat_map(|i| {
            inst.contacts
                .row(i)
                .iter()
                .map(move |r| -(-tau * r).exp_m1())
                .collect::<Vec<_>>()
        })
        .collect();
    let mut miss = vec![1.0; k * nf];
    let mut stored = vec![false; k * nf];
    let mut residual = inst.caps.clone();

    // Gain (times K) of adding (u, g), given column g of `miss`/`stored`.
    let column_gain = |u: usize, g: usize, miss: &[f64], stored: &[bool]| -> f64 {
        let mut others = 0.0;
        for i in 0..k {
            if i != u && !stored[i * nf + g] {
                others += miss[i * nf + g] * reach[i * k + u];
            }
        }
        inst.popularity.prob(g) * (miss[u * nf + g] + others)
    };

    let base: Vec<f64> = (0..k)
        .map(|u| (0..k).filter(|&i| i != u).map(|i| reach[i * k + u]).sum::<f64>())
        .collect();
    let mut gain: Vec<f64> = (0..k)
        .flat_map(|u| {
            let b = base[u];
            (0..nf).map(move |g| inst.popularity.prob(g) * (1.0 + b))
        })
        .collect();

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for u in 0..k {
            if residual[u] == 0 {
                continue;
            }
            for g in 0..nf {
                let idx = u * nf + g;
                if stored[idx] {
                    continue;
                }
                if best.is_none_or(|(_, _, b)| gain[idx] > b) {
                    best = Some((u, g, gain[idx]));
                }
            }
        }
        let Some((u, g, value)) = best else { break };
        if value <= 0.0 {
            break;
        }
        stored[u * nf + g] = true;
        placement.set(u, g, true);
        residual[u] -= 1;
        steps.push(GreedyStep {
            user: u,
            file: g,
            gain: value / k as f64,
        });
        let row = inst.contacts.row(u);
        for i in 0..k {
            if i != u {
                miss[i * nf + g] *= (-tau * row[i]).exp();
            }
        }
        for v in 0..k {
            if !stored[v * nf + g] {
                gain[v * nf + g] = column_gain(v, g, &miss, &stored);
            }
        }
    }
    (placement, steps)
}

/// Each user independently stores `caps[i]` distinct files drawn one at a
/// time, without replacement, from Zipf(`gamma_c`).
pub fn random_zipf_placement(inst: &UtInstance, gamma_c: f64, seed: u64) -> Result<DiscretePlacement> {
    let nf = inst.num_files();
    if let Some((i, c)) = inst.caps.iter().enumerate().find(|(_, c)| **c > nf) {
        return Err(Error::invalid(format!(
            "user {i} capacity {c} exceeds library of {nf} files"
        )));
    }
    let law = ZipfPopularity::new(nf, gamma_c)?;
    let mut placement = DiscretePlacement::empty(inst.num_users(), nf);
    for (i, &c) in inst.caps.iter().enumerate() {
        let mut g = rng::stream(seed, i as u64);
        if c == 1 {
            placement.set(i, law.sample(&mut g), true);
            continue;
        }
        let mut weights = law.pmf().to_vec();
        let mut left: f64 = weights.iter().sum();
        for _ in 0..c {
            let mut u = g.random::<f64>() * left;
            let mut pick = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
            for (f, w) in weights.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    pick = f;
                    break;
                }
                u -= w;
            }
            placement.set(i, pick, true);
            left -= weights[pick];
            weights[pick] = 0.0;
        }
    }
    Ok(placement)
}

/// Outcome of the Zipf-exponent line search.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearch {
    pub gamma_c: f64,
    pub mean_ratio: f64,
    pub std_error: f64,
    /// `(gamma, mean ratio)` for every grid point, in grid order.
    pub curve: Vec<(f64, f64)>,
}

/// Picks the caching exponent with the highest mean offloading ratio over
/// `trials` random placements. Trial `t` uses the same seed at every grid
/// point. Ties go to the smaller exponent.
pub fn line_search_gamma(inst: &UtInstance, grid: &[f64], trials: usize, seed: u64) -> Result<LineSearch> {
    if grid.is_empty() {
        return Err(Error::invalid("line search grid is empty"));
    }
    if trials == 0 {
        return Err(Error::invalid("line search needs at least one trial"));
    }
    let stats: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&gamma| {
            let ratios: Vec<f64> = (0..trials)
                .map(|t| {
                    let p = random_zipf_placement(inst, gamma, rng::stream(seed, t as u64).random())?;
                    offloading_ratio(&p, inst)
                })
                .collect::<Result<_>>()?;
            let (mean, se) = mean_and_std_error(&ratios);
            Ok((gamma, mean, se))
        })
        .collect::<Result<_>>()?;
    let mut best = stats[0];
    for &s in &stats[1..] {
        if s.1 > best.1 || (s.1 == best.1 && s.0 < best.0) {
            best = s;
        }
    }
    Ok(LineSearch {
        gamma_c: best.0,
        mean_ratio: best.1,
        std_error: best.2,
        curve: stats.iter().map(|s| (s.0, s.1)).collect(),
    })
}

pub(crate) fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Exhaustive maximizer of the offloading ratio. Users fill their whole
/// capacity (the ratio is monotone). Ties keep the lexicographically first
/// placement, user 0 most significant.
pub fn brute_force_placement(inst: &UtInstance) -> Result<DiscretePlacement> {
    let k = inst.num_users();
    let nf = inst.num_files();
    let caps: Vec<usize> = inst.caps.iter().map(|&c| c.min(nf)).collect();
    let space: f64 = caps.iter().map(|&c| binomial(nf, c)).product();
    if space > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!(
            "brute force over {space:.3e} placements exceeds limit {BRUTE_FORCE_LIMIT:.0e}"
        )));
    }
    let mut combos: Vec<Vec<usize>> = caps.iter().map(|&c| (0..c).collect()).collect();
    let build = |combos: &[Vec<usize>]| DiscretePlacement::from_files(nf, combos).expect("indices in range");
    let mut best = build(&combos);
    let mut best_val = offloading_ratio(&best, inst)?;
    'outer: loop {
        // Advance the odometer, last user fastest.
        let mut u = k;
        loop {
            if u == 0 {
                break 'outer;
            }
            u -= 1;
            if next_combination(&mut combos[u], nf) {
                for v in u + 1..k {
                    combos[v] = (0..caps[v]).collect();
                }
                break;
            }
        }
        let p = build(&combos);
        let val = offloading_ratio(&p, inst)?;
        if val > best_val + 1e-12 {
            best_val = val;
            best = p;
        }
    }
    Ok(best)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mpc_placement, zipf_pmf};

    fn two_users(pmf: Vec<f64>, rate_tau: f64) -> UtInstance {
        let contacts = ContactModel::new(vec![vec![0.0, rate_tau], vec![rate_tau, 0.0]]).unwrap();
        UtInstance::new(
            contacts,
            ZipfPopularity::from_pmf(pmf).unwrap(),
            1.0,
            &Capacities::uniform(2, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn offload_probability_cases() {
        let inst = two_users(vec![0.5, 0.5], std::f64::consts::LN_2);
        let p = DiscretePlacement::from_files(2, &[vec![0], vec![1]]).unwrap();
        assert_eq!(offload_probability(0, 0, &p, &inst), 1.0);
        assert!((offload_probability(0, 1, &p, &inst) - 0.5).abs() < 1e-15);
        let empty = DiscretePlacement::empty(2, 2);
        assert_eq!(offload_probability(0, 1, &empty, &inst), 0.0);
    }

    #[test]
    fn ratio_extremes() {
        let inst = two_users(vec![0.7, 0.3], 0.2);
        assert_eq!(offloading_ratio(&DiscretePlacement::empty(2, 2), &inst).unwrap(), 0.0);
        let all = DiscretePlacement::from_files(2, &[vec![0, 1], vec![0, 1]]).unwrap();
        assert!((offloading_ratio(&all, &inst).unwrap() - 1.0).abs() < 1e-15);
        assert!(offloading_ratio(&DiscretePlacement::empty(3, 2), &inst).is_err());
    }

    #[test]
    fn mpc_ratio_is_head_mass() {
        let z = zipf_pmf(6, 0.9).unwrap();
        let contacts = ContactModel::random(5, 0.3, 0.8, 4).unwrap();
        let caps = Capacities::uniform(5, 2.0).unwrap();
        let inst = UtInstance::new(contacts, z.clone(), 3.0, &caps).unwrap();
        let p = mpc_placement(&z, &caps, 5).unwrap();
        assert_eq!(offloading_ratio(&p, &inst).unwrap(), z.head_mass(2));
    }

    #[test]
    fn greedy_single_user_takes_top_files() {
        let z = zipf_pmf(5, 1.0).unwrap();
        let caps = Capacities::uniform(1, 2.0).unwrap();
        let inst = UtInstance::new(ContactModel::zeros(1), z, 1.0, &caps).unwrap();
        assert_eq!(greedy_placement(&inst).files_at(0), vec![0, 1]);
    }

    #[test]
    fn greedy_diversifies_with_frequent_contacts() {
        let inst = two_users(vec![0.9, 0.1], 10.0);
        let p = greedy_placement(&inst);
        assert_eq!(p.files_at(0), vec![0]);
        assert_eq!(p.files_at(1), vec![1]);
        let diverse = offloading_ratio(&p, &inst).unwrap();
        // User 0: 0.9 + 0.1(1 - e^-10); user 1: 0.9(1 - e^-10) + 0.1.
        let expected = 1.0 - 0.5 * (-10.0f64).exp();
        assert!((diverse - expected).abs() < 1e-12);
        let dup = DiscretePlacement::from_files(2, &[vec![0], vec![0]]).unwrap();
        assert!((offloading_ratio(&dup, &inst).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(brute_force_placement(&inst).unwrap(), p);
    }

    #[test]
    fn zipf_placement_edge_cases() {
        let z = zipf_pmf(4, 1.0).unwrap();
        let inst = UtInstance::new(
            ContactModel::zeros(3),
            z.clone(),
            1.0,
            &Capacities::uniform(3, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(
            random_zipf_placement(&inst, 1.0, 1).unwrap(),
            DiscretePlacement::empty(3, 4)
        );

        let inst = UtInstance::new(
            ContactModel::zeros(3),
            z.clone(),
            1.0,
            &Capacities::uniform(3, 5.0).unwrap(),
        )
        .unwrap();
        assert!(random_zipf_placement(&inst, 1.0, 1).is_err());

        let inst = UtInstance::new(ContactModel::zeros(3), z, 1.0, &Capacities::uniform(3, 3.0).unwrap()).unwrap();
        let p = random_zipf_placement(&inst, 0.5, 9).unwrap();
        for u in 0..3 {
            assert_eq!(p.count_at(u), 3);
        }
        let q = random_zipf_placement(&inst, 50.0, 9).unwrap();
        for u in 0..3 {
            assert_eq!(q.files_at(u), vec![0, 1, 2]);
        }
    }

    #[test]
    fn line_search_singleton_and_determinism() {
        let z = zipf_pmf(10, 0.8).unwrap();
        let contacts = ContactModel::random(6, 0.5, 1.0, 2).unwrap();
        let inst = UtInstance::new(contacts, z, 1.0, &Capacities::uniform(6, 1.0).unwrap()).unwrap();
        let r = line_search_gamma(&inst, &[0.7], 5, 3).unwrap();
        assert_eq!(r.gamma_c, 0.7);
        let a = line_search_gamma(&inst, &[0.0, 0.5, 1.0], 8, 3).unwrap();
        let b = line_search_gamma(&inst, &[0.0, 0.5, 1.0], 8, 3).unwrap();
        assert_eq!(a, b);
        assert!(line_search_gamma(&inst, &[], 8, 3).is_err());
        assert!(line_search_gamma(&inst, &[1.0], 0, 3).is_err());
    }

    #[test]
    fn brute_force_single_user() {
        let z = zipf_pmf(4, 0.5).unwrap();
        let inst = UtInstance::new(ContactModel::zeros(1), z, 1.0, &Capacities::uniform(1, 1.0).unwrap()).unwrap();
        assert_eq!(brute_force_placement(&inst).unwrap().files_at(0), vec![0]);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let z = zipf_pmf(100, 0.5).unwrap();
        let inst = UtInstance::new(ContactModel::zeros(4), z, 1.0, &Capacities::uniform(4, 1.0).unwrap()).unwrap();
        assert!(matches!(brute_force_placement(&inst), Err(Error::TooLarge(_))));
    }
}
