//! Domain types shared by the base-station and user-terminal placement
//! problems: the file library and its Zipf popularity law, storage
//! matrices, per-node capacities, and the most-popular-content baseline.
//!
//! File sizes are normalized to 1, so capacities count files. File index 0
//! is the most popular file.

use rand::Rng;

use crate::error::{Error, Result};

/// Zipf request law over a library of `num_files` files.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipfPopularity {
    gamma: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl ZipfPopularity {
    pub fn new(num_files: usize, gamma: f64) -> Result<Self> {
        if num_files == 0 {
            return Err(Error::invalid("zipf library must contain at least one file"));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::invalid(format!(
                "zipf exponent must be finite and nonnegative, got {gamma}"
            )));
        }
        let weights: Vec<f64> = (1..=num_files).map(|r| (r as f64).powf(-gamma)).collect();
        // Sum smallest-first for a tighter normalization.
        let total: f64 = weights.iter().rev().sum();
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Self::from_normalized(gamma, pmf)
    }

    /// Wraps an arbitrary pmf. Used by tests and by degenerate laws such as
    /// a point mass; `gamma` is reported as NaN.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::invalid("pmf must be nonempty"));
        }
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("pmf entries must be finite and nonnegative"));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("pmf sums to {total}, expected 1")));
        }
        Self::from_normalized(f64::NAN, pmf)
    }

    fn from_normalized(gamma: f64, pmf: Vec<f64>) -> Result<Self> {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(ZipfPopularity { gamma, pmf, cdf })
    }

    pub fn num_files(&self) -> usize {
        self.pmf.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, file: usize) -> f64 {
        self.pmf[file]
    }

    /// Probability mass of the `count` most popular files.
    pub fn head_mass(&self, count: usize) -> f64 {
        self.pmf.iter().take(count).sum()
    }

    /// Draws one file index by inversion of the cumulative law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.pmf.len() - 1)
    }
}

/// Builds the normalized Zipf pmf `p_f ∝ (f + 1)^(-gamma)`.
pub fn zipf_pmf(num_files: usize, gamma: f64) -> Result<ZipfPopularity> {
    ZipfPopularity::new(num_files, gamma)
}

/// One request drawn from a fresh generator seeded with `rng_seed`.
pub fn sample_request(pop: &ZipfPopularity, rng_seed: u64) -> usize {
    pop.sample(&mut crate::rng::seeded(rng_seed))
}

/// Per-node storage budget in units of the (normalized) file size.
#[derive(Debug, Clone, PartialEq)]
pub struct Capacities {
    per_node: Vec<f64>,
}

impl Capacities {
    pub fn new(per_node: Vec<f64>) -> Result<Self> {
        if let Some(c) = per_node.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::invalid(format!(
                "capacities must be finite and nonnegative, got {c}"
            )));
        }
        Ok(Capacities { per_node })
    }

    pub fn uniform(num_nodes: usize, capacity: f64) -> Result<Self> {
        Self::new(vec![capacity; num_nodes])
    }

    pub fn len(&self) -> usize {
        self.per_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_node.is_empty()
    }

    pub fn get(&self, node: usize) -> f64 {
        self.per_node[node]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.per_node
    }

    /// Integer view; fails if any capacity has a fractional part.
    pub fn as_integers(&self) -> Result<Vec<usize>> {
        self.per_node
            .iter()
            .map(|&c| {
                if c.fract() != 0.0 {
                    Err(Error::invalid(format!("integer capacity required, got {c}")))
                } else {
                    Ok(c as usize)
                }
            })
            .collect()
    }
}

/// Read access to a node-by-file storage matrix as stored fractions.
pub trait Storage {
    fn num_nodes(&self) -> usize;
    fn num_files(&self) -> usize;
    /// Fraction of `file` held at `node`, in `[0, 1]`.
    fn fraction(&self, node: usize, file: usize) -> f64;
}

/// Fractional storage under rateless coding: `x[n][f]` is the share of
/// file `f`'s coded symbols held at node `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedPlacement {
    num_nodes: usize,
    num_files: usize,
    x: Vec<f64>,
}

impl CodedPlacement {
    pub fn zeros(num_nodes: usize, num_files: usize) -> Self {
        CodedPlacement {
            num_nodes,
            num_files,
            x: vec![0.0; num_nodes * num_files],
        }
    }

    /// Builds from row-major rows; every entry must lie in `[0, 1]`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_nodes = rows.len();
        let num_files = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_files) {
            return Err(Error::DimensionMismatch("ragged placement rows".into()));
        }
        let x: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("stored fraction {v} outside [0, 1]")));
        }
        Ok(CodedPlacement {
            num_nodes,
            num_files,
            x,
        })
    }

    pub fn get(&self, node: usize, file: usize) -> f64 {
        self.x[node * self.num_files + file]
    }

    pub fn set(&mut self, node: usize, file: usize, value: f64) {
        debug_assert!((0.0..=1.0).contains(&value));
        self.x[node * self.num_files + file] = value;
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.x[node * self.num_files..(node + 1) * self.num_files]
    }

    pub fn row_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.x[node * self.num_files..(node + 1) * self.num_files]
    }

    /// Column of file `f` across nodes.
    pub fn column(&self, file: usize) -> Vec<f64> {
        (0..self.num_nodes).map(|n| self.get(n, file)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    /// Checks box and per-node capacity constraints (capacity slack 1e-9).
    pub fn is_feasible(&self, caps: &Capacities) -> bool {
        caps.len() == self.num_nodes
            && (0..self.num_nodes).all(|n| {
                let row = self.row(n);
                row.iter().all(|v| (0.0..=1.0).contains(v)) && row.iter().sum::<f64>() <= caps.get(n) + 1e-9
            })
    }
}

impl Storage for CodedPlacement {
    fn num_nodes(&self) -> usize {
        self.num_nodes
    }
    fn num_files(&self) -> usize {
        self.num_files
    }
    fn fraction(&self, node: usize, file: usize) -> f64 {
        self.get(node, file)
    }
}

/// Whole-file storage: each node holds a file completely or not at all.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscretePlacement {
    num_nodes: usize,
    num_files: usize,
    stored: Vec<bool>,
}

impl DiscretePlacement {
    pub fn empty(num_nodes: usize, num_files: usize) -> Self {
        DiscretePlacement {
            num_nodes,
            num_files,
            stored: vec![false; num_nodes * num_files],
        }
    }

    /// Placement where `files[n]` lists the files held at node `n`.
    pub fn from_files(num_files: usize, files: &[Vec<usize>]) -> Result<Self> {
        let mut p = Self::empty(files.len(), num_files);
        for (n, fs) in files.iter().enumerate() {
            for &f in fs {
                if f >= num_files {
                    return Err(Error::DimensionMismatch(format!(
                        "file {f} outside library of {num_files}"
                    )));
                }
                p.set(n, f, true);
            }
        }
        Ok(p)
    }

    pub fn is_stored(&self, node: usize, file: usize) -> bool {
        self.stored[node * self.num_files + file]
    }

    pub fn set(&mut self, node: usize, file: usize, value: bool) {
        self.stored[node * self.num_files + file] = value;
    }

    pub fn files_at(&self, node: usize) -> Vec<usize> {
        (0..self.num_files).filter(|&f| self.is_stored(node, f)).collect()
    }

    pub fn count_at(&self, node: usize) -> usize {
        self.stored[node * self.num_files..(node + 1) * self.num_files]
            .iter()
            .filter(|&&s| s)
            .count()
    }

    pub fn holders(&self, file: usize) -> Vec<usize> {
        (0..self.num_nodes).filter(|&n| self.is_stored(n, file)).collect()
    }

    pub fn is_feasible(&self, caps: &Capacities) -> bool {
        caps.len() == self.num_nodes && (0..self.num_nodes).all(|n| self.count_at(n) as f64 <= caps.get(n))
    }

    pub fn to_coded(&self) -> CodedPlacement {
        CodedPlacement {
            num_nodes: self.num_nodes,
            num_files: self.num_files,
            x: self.stored.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect(),
        }
    }
}

impl Storage for DiscretePlacement {
    fn num_nodes(&self) -> usize {
        self.num_nodes
    }
    fn num_files(&self) -> usize {
        self.num_files
    }
    fn fraction(&self, node: usize, file: usize) -> f64 {
        if self.is_stored(node, file) {
            1.0
        } else {
            0.0
        }
    }
}

/// Most-popular-content baseline: every node stores its top-`capacity`
/// files. Capacities must be whole numbers.
pub fn mpc_placement(pop: &ZipfPopularity, caps: &Capacities, num_nodes: usize) -> Result<DiscretePlacement> {
    if caps.len() != num_nodes {
        return Err(Error::DimensionMismatch(format!(
            "{} capacities for {num_nodes} nodes",
            caps.len()
        )));
    }
    let ints = caps.as_integers()?;
    let num_files = pop.num_files();
    // Stable sort keeps lower indices first among equal probabilities.
    let mut order: Vec<usize> = (0..num_files).collect();
    order.sort_by(|&a, &b| pop.prob(b).total_cmp(&pop.prob(a)));
    let mut placement = DiscretePlacement::empty(num_nodes, num_files);
    for (n, &c) in ints.iter().enumerate() {
        for &f in order.iter().take(c) {
            placement.set(n, f, true);
        }
    }
    Ok(placement)
}
