//! Plug-in (maximum-likelihood) ATE estimators.
//!
//! All estimators are frequency based: empirical proportions are substituted
//! into the back-door formula. Three regimes are covered, depending on what
//! is known about the confounded marginal `a`:
//!
//! * deconfounded data only: the whole joint table is estimated from (y,t,z);
//! * `a` known exactly (unlimited confounded data): only the conditionals
//!   P(Z|Y,T) are estimated, group by group;
//! * finite confounded data: `a` is estimated from (y,t) records as well.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ate_exact, joint_from_parts, parts_from_joint, ConditionalTable, ConfoundedDistribution, Group,
    JointDistribution, Stratum,
};

/// What to do when a group with positive mass received no deconfounded samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    Error,
    /// Use a uniform row and flag the group.
    #[default]
    Uniform,
}

impl std::str::FromStr for Fallback {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(Fallback::Error),
            "uniform" => Ok(Fallback::Uniform),
            other => Err(Error::invalid(format!("unknown fallback `{other}`"))),
        }
    }
}

/// A (y, t, z) record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DeconfoundedRecord {
    pub group: Group,
    pub z: usize,
}

/// Sufficient statistics of deconfounded data: m_yt^z.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeconfoundedCounts {
    k: usize,
    counts: [Vec<u64>; 4],
}

impl DeconfoundedCounts {
    pub fn zeros(k: usize) -> Self {
        DeconfoundedCounts {
            k,
            counts: [(); 4].map(|_| vec![0; k]),
        }
    }

    pub fn new(counts: [Vec<u64>; 4]) -> Result<Self> {
        let k = counts[0].len();
        if k < 2 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(
                "count rows must share a length of at least 2".into(),
            ));
        }
        Ok(DeconfoundedCounts { k, counts })
    }

    pub fn from_records(records: &[DeconfoundedRecord], k: usize) -> Result<Self> {
        let mut out = DeconfoundedCounts::zeros(k);
        for (i, r) in records.iter().enumerate() {
            if r.z >= k {
                return Err(Error::invalid(format!("record {i}: z = {} outside [0, {k})", r.z)));
            }
            out.counts[r.group.index()][r.z] += 1;
        }
        Ok(out)
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn add(&mut self, g: Group, z: usize, count: u64) {
        self.counts[g.index()][z] += count;
    }

    pub fn row(&self, g: Group) -> &[u64] {
        &self.counts[g.index()]
    }

    pub fn rows(&self) -> &[Vec<u64>; 4] {
        &self.counts
    }

    /// m_yt = Σ_z m_yt^z.
    pub fn group_total(&self, g: Group) -> u64 {
        self.row(g).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Confounded (y, t) records plus the deconfounded (y, t, z) records.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    k: usize,
    confounded: Vec<Group>,
    deconfounded: Vec<DeconfoundedRecord>,
}

impl Dataset {
    pub fn new(k: usize, confounded: Vec<Group>, deconfounded: Vec<DeconfoundedRecord>) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("k must be at least 2, got {k}")));
        }
        if let Some((i, r)) = deconfounded.iter().enumerate().find(|(_, r)| r.z >= k) {
            return Err(Error::invalid(format!("deconfounded record {i}: z = {} outside [0, {k})", r.z)));
        }
        Ok(Dataset {
            k,
            confounded,
            deconfounded,
        })
    }

    /// Every row is a confounded observation; rows whose z is revealed are
    /// deconfounded as well.
    pub fn from_rows(k: usize, rows: &[(Group, Option<usize>)]) -> Result<Self> {
        let confounded = rows.iter().map(|(g, _)| *g).collect();
        let deconfounded = rows
            .iter()
            .filter_map(|(group, z)| z.map(|z| DeconfoundedRecord { group: *group, z }))
            .collect();
        Dataset::new(k, confounded, deconfounded)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn confounded(&self) -> &[Group] {
        &self.confounded
    }

    pub fn deconfounded(&self) -> &[DeconfoundedRecord] {
        &self.deconfounded
    }

    /// n_yt.
    pub fn confounded_counts(&self) -> [u64; 4] {
        let mut n = [0u64; 4];
        for g in &self.confounded {
            n[g.index()] += 1;
        }
        n
    }

    /// m_yt^z.
    pub fn deconfounded_counts(&self) -> DeconfoundedCounts {
        DeconfoundedCounts::from_records(&self.deconfounded, self.k).expect("validated at construction")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    pub ate_hat: f64,
    pub a_hat: ConfoundedDistribution,
    pub q_hat: ConditionalTable,
    /// Groups whose q̂ row was not estimated from data.
    pub degenerate_groups: Vec<Group>,
    /// Strata (t, z) with zero estimated mass.
    pub degenerate_strata: Vec<Stratum>,
}

fn plug_in(
    a_hat: ConfoundedDistribution,
    q_hat: ConditionalTable,
    degenerate_groups: Vec<Group>,
) -> EstimationResult {
    let ate = ate_exact(&joint_from_parts(&a_hat, &q_hat));
    EstimationResult {
        ate_hat: ate.value,
        a_hat,
        q_hat,
        degenerate_groups,
        degenerate_strata: ate.degenerate_strata,
    }
}

/// Estimates q̂ rows group by group; `mass` decides whether an empty group matters.
fn conditional_rows(
    counts: &DeconfoundedCounts,
    mass: &ConfoundedDistribution,
    fallback: Fallback,
) -> Result<(ConditionalTable, Vec<Group>)> {
    let k = counts.k;
    let mut degenerate = Vec::new();
    let mut rows = [(); 4].map(|_| Vec::new());
    for g in Group::ALL {
        let total = counts.group_total(g);
        rows[g.index()] = if total > 0 {
            counts.row(g).iter().map(|c| *c as f64 / total as f64).collect()
        } else {
            if mass.get(g) > 0.0 && fallback == Fallback::Error {
                return Err(Error::DegenerateGroup(g));
            }
            degenerate.push(g);
            vec![1.0 / k as f64; k]
        };
    }
    Ok((ConditionalTable::new(rows)?, degenerate))
}

/// p̂_yt^z = m_yt^z / m, plugged straight into the adjustment formula.
pub fn estimate_deconfounded_only(records: &[DeconfoundedRecord], k: usize) -> Result<EstimationResult> {
    estimate_deconfounded_only_counts(&DeconfoundedCounts::from_records(records, k)?)
}

pub fn estimate_deconfounded_only_counts(counts: &DeconfoundedCounts) -> Result<EstimationResult> {
    let p_hat = JointDistribution::from_cell_counts(&counts.counts)?;
    let ate = ate_exact(&p_hat);
    let parts = parts_from_joint(&p_hat);
    Ok(EstimationResult {
        ate_hat: ate.value,
        a_hat: parts.a,
        q_hat: parts.q,
        degenerate_groups: parts.degenerate_groups,
        degenerate_strata: ate.degenerate_strata,
    })
}

/// Known marginal `a`; q̂_yt^z = m_yt^z / m_yt.
pub fn estimate_with_known_confounded(
    a: &ConfoundedDistribution,
    records: &[DeconfoundedRecord],
    k: usize,
    fallback: Fallback,
) -> Result<EstimationResult> {
    estimate_with_known_confounded_counts(a, &DeconfoundedCounts::from_records(records, k)?, fallback)
}

pub fn estimate_with_known_confounded_counts(
    a: &ConfoundedDistribution,
    counts: &DeconfoundedCounts,
    fallback: Fallback,
) -> Result<EstimationResult> {
    let (q_hat, degenerate) = conditional_rows(counts, a, fallback)?;
    Ok(plug_in(a.clone(), q_hat, degenerate))
}

/// â_yt = n_yt / n and q̂_yt^z = m_yt^z / m_yt.
pub fn estimate_finite(dataset: &Dataset, fallback: Fallback) -> Result<EstimationResult> {
    estimate_finite_counts(dataset.confounded_counts(), &dataset.deconfounded_counts(), fallback)
}

pub fn estimate_finite_counts(
    confounded: [u64; 4],
    deconfounded: &DeconfoundedCounts,
    fallback: Fallback,
) -> Result<EstimationResult> {
    let a_hat = ConfoundedDistribution::from_counts(confounded)?;
    let (q_hat, degenerate) = conditional_rows(deconfounded, &a_hat, fallback)?;
    Ok(plug_in(a_hat, q_hat, degenerate))
}

/// A record carrying a categorical pretreatment covariate `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StratifiedRecord {
    pub x: usize,
    pub group: Group,
    pub z: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariateStratum {
    pub x: usize,
    /// Number of records with this covariate value.
    pub size: u64,
    pub estimate: EstimationResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StratifiedEstimate {
    pub strata: Vec<CovariateStratum>,
    /// Σ_x ATE(x) · P̂(X = x).
    pub aggregate: f64,
}

/// Runs [`estimate_finite`] within each covariate value and weights the
/// per-stratum effects by the empirical covariate distribution.
pub fn estimate_stratified_ite(
    records: &[StratifiedRecord],
    k: usize,
    fallback: Fallback,
) -> Result<StratifiedEstimate> {
    if records.is_empty() {
        return Err(Error::EmptyData("no stratified records".into()));
    }
    let levels = records.iter().map(|r| r.x).max().expect("non-empty") + 1;
    let mut by_x: Vec<Vec<(Group, Option<usize>)>> = vec![Vec::new(); levels];
    for r in records {
        by_x[r.x].push((r.group, r.z));
    }
    let total = records.len() as f64;
    let mut strata = Vec::with_capacity(levels);
    let mut aggregate = 0.0;
    for (x, rows) in by_x.iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::EmptyData(format!("covariate stratum x = {x} has no records")));
        }
        let estimate = estimate_finite(&Dataset::from_rows(k, rows)?, fallback)?;
        aggregate += estimate.ate_hat * rows.len() as f64 / total;
        strata.push(CovariateStratum {
            x,
            size: rows.len() as u64,
            estimate,
        });
    }
    Ok(StratifiedEstimate { strata, aggregate })
}
