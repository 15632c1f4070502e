//! Sample-selection policies: which (y, t) groups to deconfound, and how many.
//!
//! With unlimited confounded data a policy is a vector of fractions `x`; with
//! a finite pool the integer allocation must also respect how many records
//! of each group are available.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConfoundedDistribution, Group, PROB_TOL};

/// Fractions of the deconfounding budget per group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct PolicyWeights {
    x: [f64; 4],
}

impl PolicyWeights {
    pub fn new(x: [f64; 4]) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!("policy weights must be non-negative, got {x:?}")));
        }
        let s: f64 = x.iter().sum();
        if (s - 1.0).abs() > PROB_TOL {
            return Err(Error::invalid(format!("policy weights sum to {s}, expected 1")));
        }
        Ok(PolicyWeights { x })
    }

    #[inline]
    pub fn get(&self, g: Group) -> f64 {
        self.x[g.index()]
    }

    pub fn as_array(&self) -> &[f64; 4] {
        &self.x
    }
}

impl TryFrom<[f64; 4]> for PolicyWeights {
    type Error = Error;
    fn try_from(x: [f64; 4]) -> Result<Self> {
        PolicyWeights::new(x)
    }
}

impl From<PolicyWeights> for [f64; 4] {
    fn from(w: PolicyWeights) -> Self {
        w.x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Natural: x = a, what passive sampling would produce.
    Nsp,
    /// Uniform: x = 1/4.
    Usp,
    /// Outcome-weighted: half the budget per arm, split by P(Y|T).
    Owsp,
    Custom(PolicyWeights),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Nsp => "nsp",
            Policy::Usp => "usp",
            Policy::Owsp => "owsp",
            Policy::Custom(_) => "custom",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nsp" => Ok(Policy::Nsp),
            "usp" => Ok(Policy::Usp),
            "owsp" => Ok(Policy::Owsp),
            other => Err(Error::invalid(format!("unknown policy `{other}`"))),
        }
    }
}

pub fn policy_weights(policy: &Policy, a: &ConfoundedDistribution) -> Result<PolicyWeights> {
    let x = match policy {
        Policy::Nsp => *a.as_array(),
        Policy::Usp => [0.25; 4],
        Policy::Owsp => {
            let arm = [a.arm_mass(0), a.arm_mass(1)];
            if let Some(t) = arm.iter().position(|m| *m <= 0.0) {
                return Err(Error::invalid(format!(
                    "OWSP needs mass in both treatment arms; arm t={t} is empty"
                )));
            }
            Group::ALL.map(|g| a.get(g) / (2.0 * arm[g.t as usize]))
        }
        Policy::Custom(w) => return Ok(w.clone()),
    };
    // NSP inherits a's normalization; OWSP arms each sum to 1/2.
    Ok(PolicyWeights { x })
}

/// Integer deconfounding counts per group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    pub counts: [u64; 4],
}

impl Allocation {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    #[inline]
    pub fn get(&self, g: Group) -> u64 {
        self.counts[g.index()]
    }
}

/// Largest-remainder rounding of `targets` to integers summing to `total`.
/// Remainders equal to 1e-9 are tied and resolved by position.
pub(crate) fn apportion(targets: &[f64], total: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = targets.iter().map(|t| t.max(0.0).floor() as u64).collect();
    let placed: u64 = counts.iter().sum();
    if placed >= total {
        // Only reachable through float noise on integral targets.
        let mut excess = placed - total;
        for c in counts.iter_mut().rev() {
            let take = excess.min(*c);
            *c -= take;
            excess -= take;
        }
        return counts;
    }
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let key = |i: usize| -> i64 { ((targets[i].max(0.0) - targets[i].max(0.0).floor()) * 1e9).round() as i64 };
    order.sort_by(|&i, &j| key(j).cmp(&key(i)).then(i.cmp(&j)));
    let mut deficit = total - placed;
    while deficit > 0 {
        for &i in &order {
            if deficit == 0 {
                break;
            }
            counts[i] += 1;
            deficit -= 1;
        }
    }
    counts
}

/// Rounds m·x to integers with exactly `m` in total.
pub fn allocate_infinite(policy: &Policy, a: &ConfoundedDistribution, m: u64) -> Result<Allocation> {
    let w = policy_weights(policy, a)?;
    let targets: Vec<f64> = w.x.iter().map(|x| x * m as f64).collect();
    Ok(Allocation {
        counts: to_array(apportion(&targets, m)),
    })
}

fn to_array(v: Vec<u64>) -> [u64; 4] {
    [v[0], v[1], v[2], v[3]]
}

/// Feasible allocation of `m` reveals when group `g` has only `available[g]`
/// un-revealed records.
///
/// * NSP: proportional to the available counts (a simulation that knows the
///   arrival order should deconfound the first `m` records instead).
/// * USP: water-filling; bottleneck groups are maxed out and the rest split
///   as evenly as possible, ties to earlier groups.
/// * OWSP: the unconstrained OWSP rounding under `a_hat` when it fits;
///   otherwise arms are capped with overflow to the other arm, then each arm
///   is split by the outcome ratio with overflow to its sibling group.
pub fn allocate_finite(
    policy: &Policy,
    available: [u64; 4],
    m: u64,
    a_hat: &ConfoundedDistribution,
) -> Result<Allocation> {
    let pool: u64 = available.iter().sum();
    if m > pool {
        return Err(Error::invalid(format!(
            "cannot deconfound {m} records from a pool of {pool}"
        )));
    }
    let counts = match policy {
        Policy::Nsp => {
            if pool == 0 {
                [0; 4]
            } else {
                let targets: Vec<f64> = available
                    .iter()
                    .map(|c| m as f64 * *c as f64 / pool as f64)
                    .collect();
                to_array(apportion(&targets, m))
            }
        }
        Policy::Usp => water_fill(available, m),
        Policy::Owsp => owsp_finite(available, m, a_hat),
        Policy::Custom(w) => capped_proportional(w.as_array(), available, m),
    };
    Ok(Allocation { counts })
}

fn water_fill(available: [u64; 4], m: u64) -> [u64; 4] {
    let filled = |level: u64| -> u64 { available.iter().map(|c| (*c).min(level)).sum() };
    // Largest level L with filled(L) <= m.
    let (mut lo, mut hi) = (0u64, available.iter().copied().max().unwrap_or(0));
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if filled(mid) <= m {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let mut counts = available.map(|c| c.min(lo));
    let mut rest = m - counts.iter().sum::<u64>();
    for (c, avail) in counts.iter_mut().zip(available) {
        if rest == 0 {
            break;
        }
        if *c < avail {
            *c += 1;
            rest -= 1;
        }
    }
    counts
}

/// Splits `total` over `members` by `shares`, capping each member at its
/// availability and pushing overflow onto the others.
fn split_capped(members: &[usize], shares: &[f64], available: &[u64; 4], total: u64) -> Vec<u64> {
    let share_sum: f64 = shares.iter().sum();
    let shares: Vec<f64> = if share_sum > 0.0 {
        shares.iter().map(|s| s / share_sum).collect()
    } else {
        vec![1.0 / members.len() as f64; members.len()]
    };
    let targets: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts = apportion(&targets, total);
    let mut overflow = 0;
    for (c, &g) in counts.iter_mut().zip(members) {
        if *c > available[g] {
            overflow += *c - available[g];
            *c = available[g];
        }
    }
    for (c, &g) in counts.iter_mut().zip(members) {
        if overflow == 0 {
            break;
        }
        let room = available[g] - *c;
        let add = room.min(overflow);
        *c += add;
        overflow -= add;
    }
    counts
}

fn capped_proportional(x: &[f64; 4], available: [u64; 4], m: u64) -> [u64; 4] {
    let members = [0, 1, 2, 3];
    to_array(split_capped(&members, x, &available, m))
}

fn owsp_finite(available: [u64; 4], m: u64, a_hat: &ConfoundedDistribution) -> [u64; 4] {
    if let Ok(unconstrained) = allocate_infinite(&Policy::Owsp, a_hat, m) {
        if unconstrained.counts.iter().zip(available).all(|(c, a)| *c <= a) {
            return unconstrained.counts;
        }
    }
    let arm_groups = |t: u8| Group::arm(t).map(|g| g.index());
    let capacity = [0u8, 1].map(|t| arm_groups(t).iter().map(|&i| available[i]).sum::<u64>());
    // Even split first, odd unit to the control arm, then overflow.
    let mut arm_total = [m - m / 2, m / 2];
    for t in 0..2 {
        if arm_total[t] > capacity[t] {
            let spill = arm_total[t] - capacity[t];
            arm_total[t] = capacity[t];
            arm_total[1 - t] += spill;
        }
    }
    let mut counts = [0u64; 4];
    for t in 0..2u8 {
        let members = arm_groups(t);
        let shares: Vec<f64> = members.iter().map(|&i| a_hat.as_array()[i]).collect();
        let split = split_capped(&members, &shares, &available, arm_total[t as usize]);
        for (&i, c) in members.iter().zip(split) {
            counts[i] = c;
        }
    }
    counts
}
