//! Monte Carlo harness: a deconfounding oracle plus a seeded, parallel
//! replication engine that reports error curves per method and grid point.
//!
//! Sampling is count based. A replication draws the *prefix counts* of
//! i.i.d. streams at every length it needs (sequential binomial splits), so
//! m = 10⁹ costs the same as m = 100 and nested grid points see nested data.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{
    estimate_deconfounded_only_counts, estimate_finite_counts, estimate_with_known_confounded_counts,
    DeconfoundedCounts, Fallback,
};
use crate::model::{
    adversarial_instance, ate_exact, joint_from_parts, parts_from_joint, random_conditional, random_instance,
    AdversarialCase, ConditionalTable, ConfoundedDistribution, Group, JointDistribution,
};
use crate::policy::{allocate_finite, allocate_infinite, Policy, PolicyWeights};

const TAG_INSTANCE: u64 = 1;
const TAG_REPLICATION: u64 = 2;
const SHARED: u64 = u64::MAX;

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of an independent stream keyed by `parts` (master seed first).
pub fn stream_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |h, p| mix(h ^ mix(*p)))
}

fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(parts))
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
    }
}

/// Category counts of `n` i.i.d. draws from `probs`.
pub(crate) fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let Some(last) = probs.iter().rposition(|p| *p > 0.0) else {
        return out;
    };
    let mut left = n;
    let mut tail: f64 = probs[..=last].iter().sum();
    for i in 0..last {
        if left == 0 {
            break;
        }
        let c = binomial(rng, left, probs[i] / tail);
        out[i] = c;
        left -= c;
        tail -= probs[i];
    }
    out[last] += left;
    out
}

/// Counts of an i.i.d. stream observed at each of the ascending `lengths`.
fn prefix_counts<R: Rng + ?Sized>(rng: &mut R, probs: &[f64], lengths: &[u64]) -> Vec<Vec<u64>> {
    let mut acc = vec![0u64; probs.len()];
    let mut seen = 0;
    lengths
        .iter()
        .map(|&len| {
            for (a, c) in acc.iter_mut().zip(multinomial(rng, len - seen, probs)) {
                *a += c;
            }
            seen = len;
            acc.clone()
        })
        .collect()
}

fn sorted_unique(mut v: Vec<u64>) -> Vec<u64> {
    v.sort_unstable();
    v.dedup();
    v
}

enum Source {
    Synthetic(ConditionalTable),
    Empirical { remaining: [Vec<u64>; 4] },
}

/// Reveals the hidden confounder of records from a chosen (y, t) group.
///
/// A synthetic oracle draws i.i.d. from the q row; an empirical one reveals
/// uniformly at random without replacement from the group's hidden records.
pub struct Oracle {
    source: Source,
    k: usize,
    rng: ChaCha8Rng,
}

impl Oracle {
    pub fn synthetic(q: ConditionalTable, seed: u64) -> Self {
        Oracle {
            k: q.k(),
            source: Source::Synthetic(q),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// `hidden` holds, per group, the z-value counts of its records.
    pub fn empirical(hidden: &DeconfoundedCounts, seed: u64) -> Self {
        Oracle {
            k: hidden.k(),
            source: Source::Empirical {
                remaining: hidden.rows().clone(),
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Un-revealed records in `g`; `None` for an inexhaustible synthetic oracle.
    pub fn remaining(&self, g: Group) -> Option<u64> {
        match &self.source {
            Source::Synthetic(_) => None,
            Source::Empirical { remaining } => Some(remaining[g.index()].iter().sum()),
        }
    }

    fn check(&self, g: Group, count: u64) -> Result<()> {
        match self.remaining(g) {
            Some(available) if count > available => Err(Error::Exhausted {
                group: g,
                requested: count,
                available,
            }),
            _ => Ok(()),
        }
    }

    /// z values of `count` newly revealed records of group `g`, in reveal order.
    pub fn draw_conditional(&mut self, g: Group, count: u64) -> Result<Vec<usize>> {
        self.check(g, count)?;
        let mut out = Vec::with_capacity(count as usize);
        match &mut self.source {
            Source::Synthetic(q) => {
                let row = q.row(g);
                for _ in 0..count {
                    let u: f64 = self.rng.random();
                    let mut acc = 0.0;
                    let mut z = row.iter().rposition(|p| *p > 0.0).unwrap_or(0);
                    for (i, p) in row.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            z = i;
                            break;
                        }
                    }
                    out.push(z);
                }
            }
            Source::Empirical { remaining } => {
                let row = &mut remaining[g.index()];
                for _ in 0..count {
                    let total: u64 = row.iter().sum();
                    let mut pick = self.rng.random_range(0..total);
                    let z = row
                        .iter()
                        .position(|c| {
                            if pick < *c {
                                true
                            } else {
                                pick -= c;
                                false
                            }
                        })
                        .expect("pick < total");
                    row[z] -= 1;
                    out.push(z);
                }
            }
        }
        Ok(out)
    }

    /// Histogram over z of `count` newly revealed records of group `g`.
    pub fn draw_conditional_counts(&mut self, g: Group, count: u64) -> Result<Vec<u64>> {
        self.check(g, count)?;
        match &mut self.source {
            Source::Synthetic(q) => Ok(multinomial(&mut self.rng, count, q.row(g))),
            Source::Empirical { remaining } => {
                let row = &mut remaining[g.index()];
                let mut pool: u64 = row.iter().sum();
                let mut left = count;
                let mut out = vec![0; row.len()];
                for (z, c) in row.iter_mut().enumerate() {
                    if left == 0 {
                        break;
                    }
                    let got = Hypergeometric::new(pool, *c, left)
                        .expect("sizes are consistent")
                        .sample(&mut self.rng);
                    pool -= *c;
                    *c -= got;
                    out[z] = got;
                    left -= got;
                }
                Ok(out)
            }
        }
    }

    /// Cumulative histograms after revealing up to each ascending length.
    fn reveal_prefixes(&mut self, g: Group, lengths: &[u64]) -> Result<BTreeMap<u64, Vec<u64>>> {
        let mut acc = vec![0u64; self.k];
        let mut seen = 0;
        let mut out = BTreeMap::new();
        out.insert(0, acc.clone());
        for &len in lengths {
            for (a, c) in acc.iter_mut().zip(self.draw_conditional_counts(g, len - seen)?) {
                *a += c;
            }
            seen = len;
            out.insert(len, acc.clone());
        }
        Ok(out)
    }
}

/// A compared estimation strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// m joint (y, t, z) samples, no confounded data.
    Deconfounded,
    Nsp,
    Usp,
    Owsp,
    Custom(PolicyWeights),
}

impl Method {
    pub fn policy(&self) -> Option<Policy> {
        match self {
            Method::Deconfounded => None,
            Method::Nsp => Some(Policy::Nsp),
            Method::Usp => Some(Policy::Usp),
            Method::Owsp => Some(Policy::Owsp),
            Method::Custom(w) => Some(Policy::Custom(w.clone())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Method::Deconfounded => "deconfounded".into(),
            Method::Nsp => "nsp".into(),
            Method::Usp => "usp".into(),
            Method::Owsp => "owsp".into(),
            Method::Custom(w) => {
                let x = w.as_array();
                format!("custom({} {} {} {})", x[0], x[1], x[2], x[3])
            }
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deconfounded" | "deconf-only" | "baseline" => Ok(Method::Deconfounded),
            "nsp" => Ok(Method::Nsp),
            "usp" => Ok(Method::Usp),
            "owsp" => Ok(Method::Owsp),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// Where the ground-truth instances of an experiment come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    /// Joint tables drawn uniformly from the simplex.
    Random { count: usize, k: usize },
    /// A fixed marginal with conditional rows drawn uniformly from the simplex.
    RandomQ {
        a: ConfoundedDistribution,
        count: usize,
        #[serde(default = "default_k")]
        k: usize,
    },
    Adversarial(Vec<AdversarialCase>),
    Files(Vec<PathBuf>),
    Inline(Vec<crate::io::InstanceFile>),
}

fn default_k() -> usize {
    2
}

impl InstanceSource {
    /// The instances, as a pure function of `seed`.
    pub fn materialize(&self, seed: u64) -> Result<Vec<JointDistribution>> {
        match self {
            InstanceSource::Random { count, k } => (0..*count as u64)
                .map(|i| random_instance(*k, stream_seed(&[seed, TAG_INSTANCE, i])))
                .collect(),
            InstanceSource::RandomQ { a, count, k } => (0..*count as u64)
                .map(|i| {
                    let q = random_conditional(&mut stream(&[seed, TAG_INSTANCE, i]), *k)?;
                    Ok(joint_from_parts(a, &q))
                })
                .collect(),
            InstanceSource::Adversarial(cases) => Ok(cases
                .iter()
                .map(|c| {
                    let (a, q) = adversarial_instance(*c);
                    joint_from_parts(&a, &q)
                })
                .collect()),
            InstanceSource::Files(paths) => paths.iter().map(|p| crate::io::read_instance(p)).collect(),
            InstanceSource::Inline(list) => list.iter().map(|i| i.to_joint()).collect(),
        }
    }
}

/// Experiment description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required for synthetic experiments, ignored for empirical ones.
    #[serde(default)]
    pub instances: Option<InstanceSource>,
    pub methods: Vec<Method>,
    /// Deconfounded sample sizes; exactly one value in finite mode.
    pub m_grid: Vec<u64>,
    /// Confounded sample sizes (finite mode only).
    #[serde(default)]
    pub n_grid: Vec<u64>,
    pub replications: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fallback: Fallback,
    /// Reuse one set of draws across methods within a replication.
    #[serde(default)]
    pub shared_randomness: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentMode {
    Infinite,
    Finite,
    Empirical,
}

impl ExperimentConfig {
    pub fn validate(&self, mode: ExperimentMode) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("methods must not be empty"));
        }
        let mut labels: Vec<String> = self.methods.iter().map(Method::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("methods must be distinct"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.m_grid.is_empty() || self.m_grid.contains(&0) {
            return Err(Error::invalid("m_grid must be non-empty with positive values"));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::invalid("n_grid values must be positive"));
        }
        match mode {
            ExperimentMode::Finite => {
                if self.m_grid.len() != 1 {
                    return Err(Error::invalid("finite experiments take exactly one m value"));
                }
                if self.n_grid.is_empty() {
                    return Err(Error::invalid("finite experiments need an n_grid"));
                }
                let m = self.m_grid[0];
                if let Some(n) = self.n_grid.iter().find(|n| **n < m) {
                    return Err(Error::invalid(format!("n_grid value {n} is below m = {m}")));
                }
            }
            ExperimentMode::Infinite | ExperimentMode::Empirical => {
                if !self.n_grid.is_empty() {
                    return Err(Error::invalid("n_grid is only meaningful for finite experiments"));
                }
            }
        }
        match (mode, &self.instances) {
            (ExperimentMode::Empirical, _) => {}
            (_, None) => return Err(Error::invalid("synthetic experiments need `instances`")),
            (_, Some(InstanceSource::Random { count, k }) | Some(InstanceSource::RandomQ { count, k, .. })) => {
                if *count == 0 || *k < 2 {
                    return Err(Error::invalid("random instances need count >= 1 and k >= 2"));
                }
            }
            (_, Some(_)) => {}
        }
        Ok(())
    }

    fn materialize(&self) -> Result<Vec<JointDistribution>> {
        let list = self
            .instances
            .as_ref()
            .ok_or_else(|| Error::invalid("synthetic experiments need `instances`"))?
            .materialize(self.seed)?;
        if list.is_empty() {
            return Err(Error::EmptyData("no instances".into()));
        }
        Ok(list)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    M,
    N,
}

/// One point of an error curve. `std_abs_error` is the standard deviation
/// of |ÂTE − ATE| over replications, averaged over instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub policy: String,
    pub grid_kind: GridKind,
    pub grid_value: u64,
    pub mean_abs_error: f64,
    pub std_abs_error: f64,
    pub reps: u32,
    pub instances: usize,
}

/// Rows sorted by policy label, then grid value.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub rows: Vec<ErrorRow>,
}

impl ErrorCurve {
    pub fn get(&self, policy: &str, grid_value: u64) -> Option<&ErrorRow> {
        self.rows
            .iter()
            .find(|r| r.policy == policy && r.grid_value == grid_value)
    }

    pub fn mean(&self, policy: &str, grid_value: u64) -> Option<f64> {
        self.get(policy, grid_value).map(|r| r.mean_abs_error)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Ground truth plus what the estimators are allowed to know.
struct Truth {
    joint: JointDistribution,
    a: ConfoundedDistribution,
    q: ConditionalTable,
    ate: f64,
    /// Full record table in empirical mode.
    hidden: Option<DeconfoundedCounts>,
}

impl Truth {
    fn synthetic(joint: JointDistribution) -> Self {
        let parts = parts_from_joint(&joint);
        Truth {
            ate: ate_exact(&joint).value,
            a: parts.a,
            q: parts.q,
            joint,
            hidden: None,
        }
    }

    fn empirical(table: &DeconfoundedCounts) -> Result<Self> {
        let mut t = Truth::synthetic(JointDistribution::from_cell_counts(table.rows())?);
        t.hidden = Some(table.clone());
        Ok(t)
    }

    fn oracle(&self, seed: u64) -> Oracle {
        match &self.hidden {
            Some(h) => Oracle::empirical(h, seed),
            None => Oracle::synthetic(self.q.clone(), seed),
        }
    }

    /// m joint records: i.i.d. from p, or without replacement from the table.
    fn joint_prefixes(&self, rng: &mut ChaCha8Rng, lengths: &[u64]) -> Result<Vec<DeconfoundedCounts>> {
        let k = self.joint.k();
        let flat: Vec<Vec<u64>> = match &self.hidden {
            None => prefix_counts(rng, &self.joint.flat(), lengths),
            Some(h) => {
                let cells: Vec<u64> = h.rows().iter().flatten().copied().collect();
                let total: u64 = cells.iter().sum();
                if let Some(m) = lengths.iter().find(|m| **m > total) {
                    return Err(Error::invalid(format!("cannot draw {m} records from a table of {total}")));
                }
                let mut remaining = cells;
                let mut acc = vec![0u64; remaining.len()];
                let mut seen = 0;
                let mut out = Vec::new();
                for &len in lengths {
                    let mut pool: u64 = remaining.iter().sum();
                    let mut left = len - seen;
                    for (a, c) in acc.iter_mut().zip(remaining.iter_mut()) {
                        if left == 0 {
                            break;
                        }
                        let got = Hypergeometric::new(pool, *c, left).expect("consistent").sample(rng);
                        pool -= *c;
                        *c -= got;
                        *a += got;
                        left -= got;
                    }
                    seen = len;
                    out.push(acc.clone());
                }
                out
            }
        };
        flat.into_iter()
            .map(|cells| {
                let mut it = cells.chunks(k).map(<[u64]>::to_vec);
                DeconfoundedCounts::new([(); 4].map(|_| it.next().expect("4k cells")))
            })
            .collect()
    }
}

/// What one method sees at one grid point before z values are revealed.
enum Plan {
    Joint(usize),
    Reveal { confounded: Option<[u64; 4]>, counts: [u64; 4] },
}

fn counts_at(prefixes: &[BTreeMap<u64, Vec<u64>>; 4], counts: [u64; 4], k: usize) -> Result<DeconfoundedCounts> {
    let mut rows = [(); 4].map(|_| vec![0; k]);
    for g in Group::ALL {
        rows[g.index()] = prefixes[g.index()][&counts[g.index()]].clone();
    }
    DeconfoundedCounts::new(rows)
}

/// One replication for a set of methods that share `rng`; returns errors
/// per method per grid point.
fn replicate(
    truth: &Truth,
    methods: &[&Method],
    m_grid: &[u64],
    n_grid: Option<&[u64]>,
    fallback: Fallback,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    // Finite mode: confounded (y, t) prefix counts at m and every n.
    let confounded: Option<(Vec<u64>, Vec<Vec<u64>>)> = n_grid.map(|ns| {
        let lengths = sorted_unique(ns.iter().copied().chain(m_grid.iter().copied()).collect());
        let counts = prefix_counts(rng, truth.a.as_array(), &lengths);
        (lengths, counts)
    });
    let conf_at = |len: u64| -> [u64; 4] {
        let (lengths, counts) = confounded.as_ref().expect("finite mode");
        let i = lengths.binary_search(&len).expect("requested length");
        [counts[i][0], counts[i][1], counts[i][2], counts[i][3]]
    };
    let grid: Vec<u64> = n_grid.map_or_else(|| m_grid.to_vec(), <[u64]>::to_vec);
    // Baseline sample sizes, ascending; it ignores n.
    let joint_sizes = sorted_unique(m_grid.to_vec());

    let mut plans: Vec<Vec<Plan>> = Vec::with_capacity(methods.len());
    for method in methods {
        let mut row = Vec::with_capacity(grid.len());
        for &point in &grid {
            row.push(match (method.policy(), n_grid) {
                (None, _) => {
                    let m = if n_grid.is_some() { m_grid[0] } else { point };
                    Plan::Joint(joint_sizes.binary_search(&m).expect("grid value"))
                }
                (Some(p), None) => Plan::Reveal {
                    confounded: None,
                    counts: allocate_infinite(&p, &truth.a, point)?.counts,
                },
                (Some(p), Some(_)) => {
                    let m = m_grid[0];
                    let available = conf_at(point);
                    let counts = match p {
                        Policy::Nsp => conf_at(m),
                        _ => {
                            let a_hat = ConfoundedDistribution::from_counts(available)?;
                            allocate_finite(&p, available, m, &a_hat)?.counts
                        }
                    };
                    Plan::Reveal {
                        confounded: Some(available),
                        counts,
                    }
                }
            });
        }
        plans.push(row);
    }

    let mut lengths: [Vec<u64>; 4] = Default::default();
    for plan in plans.iter().flatten() {
        if let Plan::Reveal { counts, .. } = plan {
            for g in 0..4 {
                lengths[g].push(counts[g]);
            }
        }
    }
    let mut oracle = truth.oracle(rng.random());
    let mut prefixes: [BTreeMap<u64, Vec<u64>>; 4] = Default::default();
    for g in Group::ALL {
        let ls = sorted_unique(std::mem::take(&mut lengths[g.index()]));
        prefixes[g.index()] = oracle.reveal_prefixes(g, &ls)?;
    }
    let joint = if plans.iter().flatten().any(|p| matches!(p, Plan::Joint(_))) {
        truth.joint_prefixes(rng, &joint_sizes)?
    } else {
        Vec::new()
    };

    let k = truth.joint.k();
    plans
        .iter()
        .map(|row| {
            row.iter()
                .map(|plan| {
                    let est = match plan {
                        Plan::Joint(i) => estimate_deconfounded_only_counts(&joint[*i])?,
                        Plan::Reveal {
                            confounded: None,
                            counts,
                        } => estimate_with_known_confounded_counts(&truth.a, &counts_at(&prefixes, *counts, k)?, fallback)?,
                        Plan::Reveal {
                            confounded: Some(n),
                            counts,
                        } => estimate_finite_counts(*n, &counts_at(&prefixes, *counts, k)?, fallback)?,
                    };
                    Ok((est.ate_hat - truth.ate).abs())
                })
                .collect()
        })
        .collect()
}

/// Errors of every method at every grid point for replication `rep`.
fn replication_errors(
    truth: &Truth,
    config: &ExperimentConfig,
    n_grid: Option<&[u64]>,
    instance: u64,
    rep: u64,
) -> Result<Vec<Vec<f64>>> {
    let seed = config.seed;
    if config.shared_randomness {
        let all: Vec<&Method> = config.methods.iter().collect();
        let mut rng = stream(&[seed, TAG_REPLICATION, instance, SHARED, rep]);
        replicate(truth, &all, &config.m_grid, n_grid, config.fallback, &mut rng)
    } else {
        config
            .methods
            .iter()
            .enumerate()
            .map(|(mi, method)| {
                let mut rng = stream(&[seed, TAG_REPLICATION, instance, mi as u64, rep]);
                replicate(truth, &[method], &config.m_grid, n_grid, config.fallback, &mut rng)
                    .map(|mut v| v.pop().expect("one method"))
            })
            .collect()
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn run(
    truths: &[Truth],
    config: &ExperimentConfig,
    n_grid: Option<&[u64]>,
    workers: usize,
) -> Result<ErrorCurve> {
    let reps = config.replications as u64;
    let jobs = truths.len() as u64 * reps;
    // [instance * reps + rep][method][grid]
    let errors: Vec<Vec<Vec<f64>>> = in_pool(workers, || {
        (0..jobs)
            .into_par_iter()
            .map(|j| replication_errors(&truths[(j / reps) as usize], config, n_grid, j / reps, j % reps))
            .collect::<Result<Vec<_>>>()
    })??;

    let (kind, grid) = match n_grid {
        Some(ns) => (GridKind::N, ns.to_vec()),
        None => (GridKind::M, config.m_grid.clone()),
    };
    let mut rows = Vec::new();
    for (mi, method) in config.methods.iter().enumerate() {
        for (gi, &value) in grid.iter().enumerate() {
            let (mut sum_mean, mut sum_std) = (0.0, 0.0);
            for chunk in errors.chunks(reps as usize) {
                let xs: Vec<f64> = chunk.iter().map(|e| e[mi][gi]).collect();
                let (m, s) = mean_std(&xs);
                sum_mean += m;
                sum_std += s;
            }
            let count = truths.len() as f64;
            rows.push(ErrorRow {
                policy: method.label(),
                grid_kind: kind,
                grid_value: value,
                mean_abs_error: sum_mean / count,
                std_abs_error: sum_std / count,
                reps: config.replications,
                instances: truths.len(),
            });
        }
    }
    rows.sort_by(|a, b| a.policy.cmp(&b.policy).then(a.grid_value.cmp(&b.grid_value)));
    Ok(ErrorCurve { rows })
}

/// Unlimited confounded data: policies allocate m reveals under the true
/// marginal and estimate with it; the baseline draws m joint samples.
/// `workers = 0` uses the global thread pool.
pub fn run_infinite_experiment(config: &ExperimentConfig, workers: usize) -> Result<ErrorCurve> {
    config.validate(ExperimentMode::Infinite)?;
    let truths: Vec<Truth> = config.materialize()?.into_iter().map(Truth::synthetic).collect();
    run(&truths, config, None, workers)
}

/// n confounded records then m reveals: NSP deconfounds the first m
/// arrivals, other policies allocate over the realized group counts.
pub fn run_finite_experiment(config: &ExperimentConfig, workers: usize) -> Result<ErrorCurve> {
    config.validate(ExperimentMode::Finite)?;
    let truths: Vec<Truth> = config.materialize()?.into_iter().map(Truth::synthetic).collect();
    run(&truths, config, Some(&config.n_grid), workers)
}

/// A full (y, t, z) table is the ground truth; its confounded marginal is
/// known and reveals are drawn without replacement.
pub fn run_empirical_experiment(
    table: &DeconfoundedCounts,
    config: &ExperimentConfig,
    workers: usize,
) -> Result<ErrorCurve> {
    config.validate(ExperimentMode::Empirical)?;
    let truth = Truth::empirical(table)?;
    for method in &config.methods {
        let Some(policy) = method.policy() else { continue };
        for &m in &config.m_grid {
            let alloc = allocate_infinite(&policy, &truth.a, m)?;
            for g in Group::ALL {
                let available = table.group_total(g);
                if alloc.get(g) > available {
                    return Err(Error::Exhausted {
                        group: g,
                        requested: alloc.get(g),
                        available,
                    });
                }
            }
        }
    }
    run(std::slice::from_ref(&truth), config, None, workers)
}

/// |ÂTE − ATE| of `reps` independent infinite-mode replications at one m.
pub fn sample_errors_infinite(
    p: &JointDistribution,
    method: &Method,
    m: u64,
    reps: u32,
    seed: u64,
    fallback: Fallback,
) -> Result<Vec<f64>> {
    sample_errors(p, method, m, None, reps, seed, fallback)
}

/// |ÂTE − ATE| of `reps` independent finite-mode replications at (m, n).
pub fn sample_errors_finite(
    p: &JointDistribution,
    method: &Method,
    m: u64,
    n: u64,
    reps: u32,
    seed: u64,
    fallback: Fallback,
) -> Result<Vec<f64>> {
    if m == 0 || n < m {
        return Err(Error::invalid(format!("need 0 < m <= n, got m={m}, n={n}")));
    }
    sample_errors(p, method, m, Some(n), reps, seed, fallback)
}

fn sample_errors(
    p: &JointDistribution,
    method: &Method,
    m: u64,
    n: Option<u64>,
    reps: u32,
    seed: u64,
    fallback: Fallback,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::invalid("m must be positive"));
    }
    let truth = Truth::synthetic(p.clone());
    let n_grid = n.map(|n| [n]);
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(&[seed, TAG_REPLICATION, 0, 0, r]);
            replicate(&truth, &[method], &[m], n_grid.as_ref().map(|g| &g[..]), fallback, &mut rng)
                .map(|v| v[0][0])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(instances: InstanceSource, methods: Vec<Method>, m_grid: Vec<u64>, reps: u32) -> ExperimentConfig {
        ExperimentConfig {
            instances: Some(instances),
            methods,
            m_grid,
            n_grid: vec![],
            replications: reps,
            seed: 7,
            fallback: Fallback::Uniform,
            shared_randomness: false,
        }
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [0, 1, 17, 1_000_000_007] {
            let c = multinomial(&mut rng, n, &[0.2, 0.0, 0.5, 0.3]);
            assert_eq!(c.iter().sum::<u64>(), n);
            assert_eq!(c[1], 0);
        }
        assert_eq!(multinomial(&mut rng, 5, &[0.0, 0.0, 1.0, 0.0]), vec![0, 0, 5, 0]);
    }

    #[test]
    fn multinomial_mean_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let probs = [0.1, 0.6, 0.3];
        let (n, draws) = (50u64, 4000);
        let mut sums = [0u64; 3];
        for _ in 0..draws {
            for (s, c) in sums.iter_mut().zip(multinomial(&mut rng, n, &probs)) {
                *s += c;
            }
        }
        for (s, p) in sums.iter().zip(probs) {
            let mean = *s as f64 / draws as f64;
            let se = (n as f64 * p * (1.0 - p) / draws as f64).sqrt();
            assert!((mean - n as f64 * p).abs() < 4.0 * se, "{mean}");
        }
    }

    #[test]
    fn prefix_counts_are_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = prefix_counts(&mut rng, &[0.5, 0.5], &[3, 10, 10_000]);
        for w in out.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| a <= b));
        }
        assert_eq!(out[2].iter().sum::<u64>(), 10_000);
    }

    #[test]
    fn oracle_zero_count_is_empty() {
        let mut o = Oracle::synthetic(ConditionalTable::uniform(3).unwrap(), 1);
        assert!(o.draw_conditional(Group { y: 0, t: 0 }, 0).unwrap().is_empty());
    }

    #[test]
    fn oracle_one_hot_row() {
        let q = ConditionalTable::new([
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.25; 4],
            vec![0.25; 4],
            vec![0.25; 4],
        ])
        .unwrap();
        let mut o = Oracle::synthetic(q, 9);
        let g = Group { y: 0, t: 0 };
        assert!(o.draw_conditional(g, 50).unwrap().iter().all(|z| *z == 3));
        assert_eq!(o.draw_conditional_counts(g, 50).unwrap(), vec![0, 0, 0, 50]);
    }

    #[test]
    fn oracle_empirical_full_reveal() {
        let mut hidden = DeconfoundedCounts::zeros(2);
        let g = Group { y: 1, t: 0 };
        hidden.add(g, 0, 60);
        hidden.add(g, 1, 40);
        let mut o = Oracle::empirical(&hidden, 4);
        let zs = o.draw_conditional(g, 100).unwrap();
        assert_eq!(zs.iter().filter(|z| **z == 0).count(), 60);
        assert_eq!(zs.iter().filter(|z| **z == 1).count(), 40);
        assert_eq!(o.remaining(g), Some(0));
        match o.draw_conditional(g, 1) {
            Err(Error::Exhausted {
                requested: 1,
                available: 0,
                ..
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oracle_empirical_counts_without_replacement() {
        let mut hidden = DeconfoundedCounts::zeros(3);
        let g = Group { y: 0, t: 1 };
        hidden.add(g, 0, 5);
        hidden.add(g, 1, 7);
        hidden.add(g, 2, 3);
        let mut o = Oracle::empirical(&hidden, 11);
        let first = o.draw_conditional_counts(g, 9).unwrap();
        let second = o.draw_conditional_counts(g, 6).unwrap();
        let total: Vec<u64> = first.iter().zip(&second).map(|(a, b)| a + b).collect();
        assert_eq!(total, vec![5, 7, 3]);
        assert!(o.draw_conditional_counts(g, 1).is_err());
    }

    #[test]
    fn symmetric_zero_ate_instance_has_small_positive_error() {
        let a = ConfoundedDistribution::new([0.25; 4]).unwrap();
        let q = ConditionalTable::binary([0.5; 4]).unwrap();
        let p = joint_from_parts(&a, &q);
        assert_eq!(ate_exact(&p).value, 0.0);
        let cfg = config(
            InstanceSource::Inline(vec![crate::io::InstanceFile::from_joint(&p)]),
            vec![Method::Nsp],
            vec![1200],
            100,
        );
        let curve = run_infinite_experiment(&cfg, 1).unwrap();
        let e = curve.mean("nsp", 1200).unwrap();
        assert!(e > 0.0 && e < 0.5, "{e}");
    }

    #[test]
    fn deterministic_across_workers() {
        let cfg = config(
            InstanceSource::Random { count: 5, k: 2 },
            vec![Method::Deconfounded, Method::Nsp, Method::Owsp],
            vec![50, 100],
            3,
        );
        let one = run_infinite_experiment(&cfg, 1).unwrap();
        let four = run_infinite_experiment(&cfg, 4).unwrap();
        assert_eq!(one, four);
        assert_eq!(one, run_infinite_experiment(&cfg, 1).unwrap());
        assert!(one.rows.iter().all(|r| (0.0..=2.0).contains(&r.mean_abs_error)));
    }

    #[test]
    fn rows_are_sorted() {
        let cfg = config(
            InstanceSource::Random { count: 2, k: 2 },
            vec![Method::Usp, Method::Deconfounded, Method::Nsp],
            vec![40, 20],
            2,
        );
        let curve = run_infinite_experiment(&cfg, 1).unwrap();
        let keys: Vec<(String, u64)> = curve.rows.iter().map(|r| (r.policy.clone(), r.grid_value)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn finite_saturation_coincides() {
        let mut cfg = config(
            InstanceSource::Random { count: 4, k: 2 },
            vec![Method::Nsp, Method::Usp, Method::Owsp],
            vec![100],
            10,
        );
        cfg.n_grid = vec![100, 1000];
        cfg.shared_randomness = true;
        let curve = run_finite_experiment(&cfg, 2).unwrap();
        let nsp = curve.get("nsp", 100).unwrap();
        for p in ["usp", "owsp"] {
            let r = curve.get(p, 100).unwrap();
            assert_eq!(r.mean_abs_error, nsp.mean_abs_error);
            assert_eq!(r.std_abs_error, nsp.std_abs_error);
        }
    }

    #[test]
    fn finite_rejects_bad_grids() {
        let mut cfg = config(InstanceSource::Random { count: 1, k: 2 }, vec![Method::Nsp], vec![100, 200], 1);
        cfg.n_grid = vec![500];
        assert!(run_finite_experiment(&cfg, 1).is_err());
        cfg.m_grid = vec![100];
        cfg.n_grid = vec![50];
        assert!(run_finite_experiment(&cfg, 1).is_err());
        cfg.n_grid = vec![];
        assert!(run_finite_experiment(&cfg, 1).is_err());
    }

    #[test]
    fn empirical_full_reveal_is_exact() {
        let mut table = DeconfoundedCounts::zeros(2);
        for (g, z, c) in [(0, 0, 30), (0, 1, 10), (1, 0, 5), (1, 1, 15), (2, 0, 20), (2, 1, 20), (3, 0, 12), (3, 1, 8)] {
            table.add(Group::from_index(g), z, c);
        }
        let total = table.total();
        let cfg = ExperimentConfig {
            instances: None,
            ..config(
                InstanceSource::Random { count: 1, k: 2 },
                vec![Method::Nsp, Method::Deconfounded],
                vec![total],
                5,
            )
        };
        let curve = run_empirical_experiment(&table, &cfg, 1).unwrap();
        for r in &curve.rows {
            assert!(r.mean_abs_error < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn empirical_exhaustion_is_reported() {
        let mut table = DeconfoundedCounts::zeros(2);
        for g in 0..4 {
            table.add(Group::from_index(g), 0, if g == 1 { 2 } else { 50 });
            table.add(Group::from_index(g), 1, if g == 1 { 2 } else { 50 });
        }
        let cfg = config(InstanceSource::Random { count: 1, k: 2 }, vec![Method::Usp], vec![100], 1);
        match run_empirical_experiment(&table, &cfg, 1) {
            Err(Error::Exhausted { group, requested, available }) => {
                assert_eq!(group, Group::from_index(1));
                assert_eq!((requested, available), (25, 4));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn instance_sources_are_seeded() {
        let src = InstanceSource::Random { count: 3, k: 2 };
        assert_eq!(src.materialize(1).unwrap(), src.materialize(1).unwrap());
        assert_ne!(src.materialize(1).unwrap(), src.materialize(2).unwrap());
        let a = ConfoundedDistribution::new([0.9, 0.02, 0.01, 0.07]).unwrap();
        let rq = InstanceSource::RandomQ { a: a.clone(), count: 4, k: 2 };
        for p in rq.materialize(5).unwrap() {
            let back = parts_from_joint(&p).a;
            for (x, y) in back.as_array().iter().zip(a.as_array()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn config_json_forms() {
        let json = r#"{
            "instances": {"random": {"count": 3, "k": 2}},
            "methods": ["deconfounded", "nsp", {"custom": [0.25, 0.25, 0.25, 0.25]}],
            "m_grid": [100],
            "replications": 2,
            "fallback": "error"
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.methods.len(), 3);
        assert_eq!(cfg.fallback, Fallback::Error);
        assert!(cfg.validate(ExperimentMode::Infinite).is_ok());
        let bad = json.replace("\"replications\": 2", "\"replications\": 2, \"bogus\": 1");
        assert!(serde_json::from_str::<ExperimentConfig>(&bad).is_err());
    }

    #[test]
    fn sample_errors_are_reproducible() {
        let p = random_instance(2, 3).unwrap();
        let a = sample_errors_infinite(&p, &Method::Owsp, 200, 20, 5, Fallback::Uniform).unwrap();
        assert_eq!(a, sample_errors_infinite(&p, &Method::Owsp, 200, 20, 5, Fallback::Uniform).unwrap());
        let f = sample_errors_finite(&p, &Method::Usp, 100, 10_000, 20, 5, Fallback::Uniform).unwrap();
        assert_eq!(f.len(), 20);
        assert!(f.iter().all(|e| (0.0..=2.0).contains(e)));
    }
}
