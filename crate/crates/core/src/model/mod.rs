//! Distributions over (outcome, treatment, confounder) and the exact
//! back-door ATE.
//!
//! Everything is indexed by [`Group`], the four (y, t) cells in canonical
//! order (0,0), (0,1), (1,0), (1,1). The confounder Z takes `k` categorical
//! values `0..k`.

mod generate;
mod hard;

pub use generate::{adversarial_instance, random_conditional, random_instance, AdversarialCase};
pub use hard::{general_lower_pair, hardness_pair, policy_lower_pair, HardInstancePair, PairParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for normalization checks at construction time.
pub const PROB_TOL: f64 = 1e-12;

/// One of the four (outcome, treatment) cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Group {
    pub y: u8,
    pub t: u8,
}

impl Group {
    /// Canonical order used for every vector, file and tie-break.
    pub const ALL: [Group; 4] = [
        Group { y: 0, t: 0 },
        Group { y: 0, t: 1 },
        Group { y: 1, t: 0 },
        Group { y: 1, t: 1 },
    ];

    pub fn new(y: u8, t: u8) -> Result<Self> {
        if y > 1 || t > 1 {
            return Err(Error::invalid(format!("group ({y},{t}) is not binary")));
        }
        Ok(Group { y, t })
    }

    #[inline]
    pub fn index(self) -> usize {
        2 * self.y as usize + self.t as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Group {
        Group::ALL[i]
    }

    /// The two groups sharing treatment arm `t`, outcome 0 first.
    #[inline]
    pub fn arm(t: u8) -> [Group; 2] {
        [Group { y: 0, t }, Group { y: 1, t }]
    }
}

/// A (treatment, confounder) stratum of the adjustment formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stratum {
    pub t: u8,
    pub z: usize,
}

fn check_probabilities(what: &str, values: &[f64]) -> Result<()> {
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::InvalidDistribution(format!(
            "{what}: entry {i} = {v} is not a non-negative finite number"
        )));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what}: entries sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// The confounded marginal P(Y, T), i.e. the vector `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct ConfoundedDistribution {
    a: [f64; 4],
}

impl ConfoundedDistribution {
    pub fn new(a: [f64; 4]) -> Result<Self> {
        check_probabilities("a", &a)?;
        Ok(ConfoundedDistribution { a })
    }

    /// Empirical marginal from per-group counts.
    pub fn from_counts(counts: [u64; 4]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::EmptyData("no confounded records".into()));
        }
        let nf = n as f64;
        Ok(ConfoundedDistribution {
            a: counts.map(|c| c as f64 / nf),
        })
    }

    /// Normalizes non-negative weights that need not sum to one.
    pub fn from_weights(w: [f64; 4]) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !(s.is_finite() && s > 0.0) || w.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "cannot normalize weights {w:?}"
            )));
        }
        ConfoundedDistribution::new(w.map(|v| v / s))
    }

    #[inline]
    pub fn get(&self, g: Group) -> f64 {
        self.a[g.index()]
    }

    #[inline]
    pub fn as_array(&self) -> &[f64; 4] {
        &self.a
    }

    /// P(T = t).
    #[inline]
    pub fn arm_mass(&self, t: u8) -> f64 {
        Group::arm(t).iter().map(|g| self.get(*g)).sum()
    }
}

impl TryFrom<[f64; 4]> for ConfoundedDistribution {
    type Error = Error;
    fn try_from(a: [f64; 4]) -> Result<Self> {
        ConfoundedDistribution::new(a)
    }
}

impl From<ConfoundedDistribution> for [f64; 4] {
    fn from(d: ConfoundedDistribution) -> Self {
        d.a
    }
}

/// The conditionals P(Z | Y, T), one row of `k` probabilities per group.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable {
    k: usize,
    rows: [Vec<f64>; 4],
}

impl ConditionalTable {
    pub fn new(rows: [Vec<f64>; 4]) -> Result<Self> {
        let k = rows[0].len();
        if k < 2 {
            return Err(Error::DimensionMismatch(format!(
                "confounder cardinality must be at least 2, got {k}"
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "q[{i}] has {} entries, expected {k}",
                    row.len()
                )));
            }
            check_probabilities(&format!("q[{i}]"), row)?;
        }
        Ok(ConditionalTable { k, rows })
    }

    /// Binary confounder from P(Z = 1 | y, t) in canonical group order.
    pub fn binary(q1: [f64; 4]) -> Result<Self> {
        if let Some(v) = q1.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidDistribution(format!(
                "P(Z=1|y,t) = {v} outside [0, 1]"
            )));
        }
        ConditionalTable::new(q1.map(|v| vec![1.0 - v, v]))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        let row = vec![1.0 / k as f64; k];
        ConditionalTable::new([row.clone(), row.clone(), row.clone(), row])
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn row(&self, g: Group) -> &[f64] {
        &self.rows[g.index()]
    }

    #[inline]
    pub fn get(&self, g: Group, z: usize) -> f64 {
        self.rows[g.index()][z]
    }

    pub fn rows(&self) -> &[Vec<f64>; 4] {
        &self.rows
    }
}

/// The full table p_yt^z = P(Y = y, T = t, Z = z).
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    k: usize,
    cells: [Vec<f64>; 4],
}

impl JointDistribution {
    pub fn new(cells: [Vec<f64>; 4]) -> Result<Self> {
        let k = cells[0].len();
        if k < 2 {
            return Err(Error::DimensionMismatch(format!(
                "confounder cardinality must be at least 2, got {k}"
            )));
        }
        if let Some(i) = cells.iter().position(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(format!(
                "p[{i}] has {} entries, expected {k}",
                cells[i].len()
            )));
        }
        let flat: Vec<f64> = cells.iter().flatten().copied().collect();
        check_probabilities("p", &flat)?;
        Ok(JointDistribution { k, cells })
    }

    /// Empirical table from counts m_yt^z; the caller guarantees a nonzero total.
    pub(crate) fn from_cell_counts(counts: &[Vec<u64>; 4]) -> Result<Self> {
        let total: u64 = counts.iter().flatten().sum();
        if total == 0 {
            return Err(Error::EmptyData("no deconfounded records".into()));
        }
        let tf = total as f64;
        let cells = counts
            .clone()
            .map(|row| row.into_iter().map(|c| c as f64 / tf).collect());
        Ok(JointDistribution {
            k: counts[0].len(),
            cells,
        })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, g: Group, z: usize) -> f64 {
        self.cells[g.index()][z]
    }

    pub fn cells(&self) -> &[Vec<f64>; 4] {
        &self.cells
    }

    /// P(T = t, Z = z) = Σ_y p_yt^z.
    #[inline]
    pub fn stratum_mass(&self, t: u8, z: usize) -> f64 {
        Group::arm(t).iter().map(|g| self.get(*g, z)).sum()
    }

    /// Cells flattened group-major, canonical order.
    pub fn flat(&self) -> Vec<f64> {
        self.cells.iter().flatten().copied().collect()
    }
}

/// Exact ATE with the list of strata whose conditional was undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct AteEvaluation {
    pub value: f64,
    /// Strata (t, z) with Σ_y p_yt^z = 0; their conditional P(Y=1|t,z) was taken as 0.
    pub degenerate_strata: Vec<Stratum>,
}

impl AteEvaluation {
    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_strata.is_empty()
    }
}

/// Back-door adjustment: Σ_z (P(Y=1|T=1,Z=z) − P(Y=1|T=0,Z=z)) · P(Z=z).
///
/// A stratum with no mass contributes a conditional of 0 and is reported in
/// [`AteEvaluation::degenerate_strata`].
pub fn ate_exact(p: &JointDistribution) -> AteEvaluation {
    let mut value = 0.0;
    let mut degenerate = Vec::new();
    for z in 0..p.k {
        let mut cond = [0.0; 2];
        let mut pz = 0.0;
        for t in 0..2u8 {
            let [g0, g1] = Group::arm(t);
            let (n0, n1) = (p.get(g0, z), p.get(g1, z));
            let mass = n0 + n1;
            pz += mass;
            if mass > 0.0 {
                cond[t as usize] = n1 / mass;
            } else {
                degenerate.push(Stratum { t, z });
            }
        }
        value += (cond[1] - cond[0]) * pz;
    }
    AteEvaluation {
        value: value.clamp(-1.0, 1.0),
        degenerate_strata: degenerate,
    }
}

/// p_yt^z = a_yt · q_yt^z.
pub fn joint_from_parts(a: &ConfoundedDistribution, q: &ConditionalTable) -> JointDistribution {
    let cells = Group::ALL.map(|g| q.row(g).iter().map(|qz| a.get(g) * qz).collect());
    JointDistribution { k: q.k, cells }
}

/// Result of splitting a joint table into its marginal and conditionals.
#[derive(Clone, Debug, PartialEq)]
pub struct Factorization {
    pub a: ConfoundedDistribution,
    pub q: ConditionalTable,
    /// Groups with a_yt = 0 whose row was set to uniform.
    pub degenerate_groups: Vec<Group>,
}

pub fn parts_from_joint(p: &JointDistribution) -> Factorization {
    let k = p.k;
    let mut a = [0.0; 4];
    let mut degenerate_groups = Vec::new();
    let rows = Group::ALL.map(|g| {
        let row = &p.cells[g.index()];
        let mass: f64 = row.iter().sum();
        a[g.index()] = mass;
        if mass > 0.0 {
            row.iter().map(|v| v / mass).collect()
        } else {
            degenerate_groups.push(g);
            vec![1.0 / k as f64; k]
        }
    });
    Factorization {
        a: ConfoundedDistribution { a },
        q: ConditionalTable { k, rows },
        degenerate_groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> (ConfoundedDistribution, ConditionalTable) {
        (
            ConfoundedDistribution::new([0.4, 0.1, 0.2, 0.3]).unwrap(),
            ConditionalTable::binary([0.5, 0.2, 0.7, 0.6]).unwrap(),
        )
    }

    /// Independent route: tabulate P(Y=1|T=t,Z=z) and P(Z=z) from the eight
    /// cells keyed by (y, t, z) and sum the strata.
    fn brute_force_ate(cells: &[((u8, u8, usize), f64)], k: usize) -> f64 {
        let mass = |f: &dyn Fn(u8, u8, usize) -> bool| -> f64 {
            cells.iter().filter(|((y, t, z), _)| f(*y, *t, *z)).map(|(_, v)| v).sum()
        };
        (0..k)
            .map(|z| {
                let pz = mass(&|_, _, zz| zz == z);
                let c1 = mass(&|y, t, zz| y == 1 && t == 1 && zz == z) / mass(&|_, t, zz| t == 1 && zz == z);
                let c0 = mass(&|y, t, zz| y == 1 && t == 0 && zz == z) / mass(&|_, t, zz| t == 0 && zz == z);
                (c1 - c0) * pz
            })
            .sum()
    }

    #[test]
    fn ate_no_confounding_is_naive_difference() {
        let a = ConfoundedDistribution::new([0.4, 0.1, 0.2, 0.3]).unwrap();
        let q = ConditionalTable::binary([0.5; 4]).unwrap();
        let ate = ate_exact(&joint_from_parts(&a, &q));
        assert!((ate.value - (0.3 / 0.4 - 0.2 / 0.6)).abs() < 1e-12);
        assert!(!ate.is_degenerate());
    }

    #[test]
    fn ate_matches_brute_force_example() {
        let (a, q) = example();
        let mut cells = Vec::new();
        for (i, (av, qv)) in [0.4, 0.1, 0.2, 0.3].iter().zip([0.5, 0.2, 0.7, 0.6]).enumerate() {
            let g = Group::from_index(i);
            cells.push(((g.y, g.t, 0), av * (1.0 - qv)));
            cells.push(((g.y, g.t, 1), av * qv));
        }
        let oracle = brute_force_ate(&cells, 2);
        // Frozen from the brute-force tabulation.
        assert!((oracle - 0.433_493_212_669_683_2).abs() < 1e-12);
        let ate = ate_exact(&joint_from_parts(&a, &q)).value;
        assert!((ate - oracle).abs() < 1e-12);
    }

    #[test]
    fn joint_cells_are_elementwise_products() {
        let (a, q) = example();
        let p = joint_from_parts(&a, &q);
        assert!((p.get(Group { y: 1, t: 1 }, 1) - 0.18).abs() < 1e-12);
        assert!((p.get(Group { y: 0, t: 1 }, 1) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn joint_from_degenerate_marginal() {
        let a = ConfoundedDistribution::new([1.0, 0.0, 0.0, 0.0]).unwrap();
        let q = ConditionalTable::new([
            vec![0.3, 0.7],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        ])
        .unwrap();
        let p = joint_from_parts(&a, &q);
        assert_eq!(p.cells()[0], vec![0.3, 0.7]);
        assert!(p.cells()[1..].iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn joint_uniform_k4() {
        let a = ConfoundedDistribution::new([0.25; 4]).unwrap();
        let p = joint_from_parts(&a, &ConditionalTable::uniform(4).unwrap());
        assert!(p.flat().iter().all(|v| (*v - 0.0625).abs() < 1e-15));
    }

    #[test]
    fn parts_of_uniform_joint() {
        let p = JointDistribution::new([vec![0.125; 2], vec![0.125; 2], vec![0.125; 2], vec![0.125; 2]]).unwrap();
        let f = parts_from_joint(&p);
        assert_eq!(f.a.as_array(), &[0.25; 4]);
        assert!(f.q.rows().iter().all(|r| r == &vec![0.5, 0.5]));
        assert!(f.degenerate_groups.is_empty());
    }

    #[test]
    fn parts_flags_empty_group() {
        let p = JointDistribution::new([vec![0.2, 0.2], vec![0.0, 0.0], vec![0.3, 0.1], vec![0.1, 0.1]]).unwrap();
        let f = parts_from_joint(&p);
        assert_eq!(f.a.get(Group { y: 0, t: 1 }), 0.0);
        assert_eq!(f.degenerate_groups, vec![Group { y: 0, t: 1 }]);
        assert_eq!(f.q.row(Group { y: 0, t: 1 }), &[0.5, 0.5]);
    }

    #[test]
    fn roundtrip_recovers_parts() {
        let (a, q) = example();
        let f = parts_from_joint(&joint_from_parts(&a, &q));
        for g in Group::ALL {
            assert!((f.a.get(g) - a.get(g)).abs() < 1e-12);
            for z in 0..2 {
                assert!((f.q.get(g, z) - q.get(g, z)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_stratum_is_flagged_not_nan() {
        // Only (y=1, t=1, z=0) has mass.
        let p = JointDistribution::new([vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let ate = ate_exact(&p);
        assert!(ate.value.is_finite());
        // P(Y=1|T=1,Z=0) = 1, the T=0 conditional falls back to 0, P(Z=0) = 1.
        assert_eq!(ate.value, 1.0);
        assert!(ate.degenerate_strata.contains(&Stratum { t: 0, z: 0 }));
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        assert!(ConfoundedDistribution::new([0.4, 0.1, 0.2, 0.2]).is_err());
        assert!(ConfoundedDistribution::new([1.1, -0.1, 0.0, 0.0]).is_err());
        assert!(ConditionalTable::new([vec![1.0], vec![1.0], vec![1.0], vec![1.0]]).is_err());
        assert!(ConditionalTable::new([vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5], vec![1.0, 0.0, 0.0]]).is_err());
        assert!(ConditionalTable::binary([0.5, 0.5, 1.5, 0.5]).is_err());
        assert!(JointDistribution::new([vec![0.1, 0.1], vec![0.1, 0.1], vec![0.1, 0.1], vec![0.1, 0.1]]).is_err());
    }

    #[test]
    fn group_indexing_is_canonical() {
        for (i, g) in Group::ALL.iter().enumerate() {
            assert_eq!(g.index(), i);
            assert_eq!(Group::from_index(i), *g);
        }
        assert_eq!(Group::arm(1), [Group { y: 0, t: 1 }, Group { y: 1, t: 1 }]);
    }
}
