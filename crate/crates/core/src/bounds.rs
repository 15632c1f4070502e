//! Sample-complexity bounds: how many deconfounded samples suffice (or are
//! necessary) for P(|ÂTE − ATE| ≥ ε) < δ.
//!
//! Upper bounds are all of the form `C · max_{t,z} N_t / P(T=t, Z=z)²` with
//! `C = 12.5 k² ln(8k/δ) / ε²` and a policy-dependent numerator `N_t`.
//! Bounds are returned as reals; a zero denominator yields `f64::INFINITY`
//! rather than an error so sweeps over random instances keep going.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    ConditionalTable, ConfoundedDistribution, Group, HardInstancePair, JointDistribution, PairParams, Stratum,
};
use crate::policy::{policy_weights, Policy, PolicyWeights};

/// Accuracy target (ε, δ), confounder cardinality `k`, and the floor β on
/// every conditional probability used by worst-case bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AccuracySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub k: usize,
    pub beta: f64,
}

impl AccuracySpec {
    pub fn new(epsilon: f64, delta: f64, k: usize, beta: f64) -> Result<Self> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(epsilon) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !open(delta) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        if k < 2 {
            return Err(Error::invalid(format!("k must be at least 2, got {k}")));
        }
        if !(beta > 0.0 && beta < 0.5) {
            return Err(Error::invalid(format!("beta must lie in (0, 0.5), got {beta}")));
        }
        Ok(AccuracySpec { epsilon, delta, k, beta })
    }

    /// C = 12.5 k² ln(8k/δ) / ε².
    pub fn c(&self) -> f64 {
        let k = self.k as f64;
        12.5 * k * k * (8.0 * k / self.delta).ln() / (self.epsilon * self.epsilon)
    }

    /// C₁ = c1 · (kβ − 1)² ln(1/δ) / ε², with `c1` the unknown proportionality constant.
    pub fn c1(&self, c1_constant: f64) -> f64 {
        let kb = self.k as f64 * self.beta;
        c1_constant * (kb - 1.0).powi(2) * (1.0 / self.delta).ln() / (self.epsilon * self.epsilon)
    }

    /// Right-hand side of the finite-data condition, 50 k² ln(8k/δ) / ε² (= 4C).
    pub fn finite_threshold(&self) -> f64 {
        let k = self.k as f64;
        50.0 * k * k * (8.0 * k / self.delta).ln() / (self.epsilon * self.epsilon)
    }

    /// Whether (k, β) sits in the regime the lower bounds assume (kβ < 1).
    pub fn lower_bound_regime(&self) -> bool {
        (self.k as f64) * self.beta < 1.0
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if self.k != k {
            return Err(Error::DimensionMismatch(format!(
                "accuracy spec has k = {}, instance has k = {k}",
                self.k
            )));
        }
        Ok(())
    }
}

/// A bound value with the (t, z) cell attaining the maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundValue {
    pub value: f64,
    pub witness: Option<Stratum>,
}

impl BoundValue {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

/// C · max over (t, z) of `numerator(t) / denominator(t, z)²`; first maximum wins.
fn max_over_strata(
    k: usize,
    c: f64,
    numerator: impl Fn(u8) -> f64,
    denominator: impl Fn(u8, usize) -> f64,
) -> BoundValue {
    let mut best = BoundValue {
        value: f64::NEG_INFINITY,
        witness: None,
    };
    for t in 0..2u8 {
        let num = numerator(t);
        for z in 0..k {
            let den = denominator(t, z);
            let v = if den > 0.0 { c * num / (den * den) } else { f64::INFINITY };
            if v > best.value {
                best = BoundValue {
                    value: v,
                    witness: Some(Stratum { t, z }),
                };
            }
        }
    }
    best
}

/// Deconfounded data alone: C · max_{t,z} P(T=t, Z=z)^{-2}.
pub fn m_base(p: &JointDistribution, spec: &AccuracySpec) -> Result<BoundValue> {
    spec.check_k(p.k())?;
    Ok(max_over_strata(p.k(), spec.c(), |_| 1.0, |t, z| p.stratum_mass(t, z)))
}

fn weighted_mass(a: &ConfoundedDistribution, q: &ConditionalTable, t: u8, z: usize) -> f64 {
    Group::arm(t).iter().map(|g| a.get(*g) * q.get(*g, z)).sum()
}

/// Known marginal, policy-selected deconfounding.
///
/// NSP: Σ_y a_yt; USP: 4 Σ_y a_yt²; OWSP: 2 (Σ_y a_yt)²; custom weights use
/// the general numerator Σ_y a_yt² / x_yt.
pub fn m_policy(
    a: &ConfoundedDistribution,
    q: &ConditionalTable,
    spec: &AccuracySpec,
    policy: &Policy,
) -> Result<BoundValue> {
    spec.check_k(q.k())?;
    let den = |t: u8, z: usize| weighted_mass(a, q, t, z);
    let arm = |t: u8| Group::arm(t).map(|g| a.get(g));
    let c = spec.c();
    Ok(match policy {
        Policy::Nsp => max_over_strata(q.k(), c, |t| arm(t).iter().sum(), den),
        Policy::Usp => max_over_strata(q.k(), c, |t| 4.0 * arm(t).iter().map(|v| v * v).sum::<f64>(), den),
        Policy::Owsp => max_over_strata(q.k(), c, |t| 2.0 * arm(t).iter().sum::<f64>().powi(2), den),
        Policy::Custom(w) => return m_weighted(a, q, spec, w),
    })
}

fn weighted_numerator(a: &ConfoundedDistribution, w: &PolicyWeights, t: u8) -> f64 {
    Group::arm(t)
        .iter()
        .map(|g| {
            let (av, xv) = (a.get(*g), w.get(*g));
            if av == 0.0 {
                0.0
            } else if xv == 0.0 {
                f64::INFINITY
            } else {
                av * av / xv
            }
        })
        .sum()
}

/// General form for arbitrary weights: C · max_{t,z} Σ_y (a_yt²/x_yt) / (Σ_y a_yt q_yt^z)².
pub fn m_weighted(
    a: &ConfoundedDistribution,
    q: &ConditionalTable,
    spec: &AccuracySpec,
    weights: &PolicyWeights,
) -> Result<BoundValue> {
    spec.check_k(q.k())?;
    Ok(max_over_strata(
        q.k(),
        spec.c(),
        |t| weighted_numerator(a, weights, t),
        |t, z| weighted_mass(a, q, t, z),
    ))
}

/// Worst case of the policy bound over all q with entries in [β, 1 − β].
pub fn worst_case_m(a: &ConfoundedDistribution, spec: &AccuracySpec, policy: &Policy) -> f64 {
    let c_over_b2 = spec.c() / (spec.beta * spec.beta);
    let arms = [a.arm_mass(0), a.arm_mass(1)];
    match policy {
        Policy::Nsp => {
            let min_arm = arms[0].min(arms[1]);
            if min_arm > 0.0 {
                c_over_b2 / min_arm
            } else {
                f64::INFINITY
            }
        }
        Policy::Usp => (0..2u8)
            .map(|t| {
                let mass = arms[t as usize];
                if mass <= 0.0 {
                    return f64::INFINITY;
                }
                let sq: f64 = Group::arm(t).iter().map(|g| a.get(*g).powi(2)).sum();
                4.0 * c_over_b2 * sq / (mass * mass)
            })
            .fold(f64::NEG_INFINITY, f64::max),
        Policy::Owsp => 2.0 * c_over_b2,
        Policy::Custom(w) => (0..2u8)
            .map(|t| {
                let mass = arms[t as usize];
                if mass <= 0.0 {
                    return f64::INFINITY;
                }
                c_over_b2 * weighted_numerator(a, w, t) / (mass * mass)
            })
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Instance-specific lower bound w for a named policy, with
/// C₁ = `c1_constant` · (kβ − 1)² ln(1/δ) / ε².
///
/// For each arm t and outcome y the term is
/// NSP `a_yt S_t̄² / S_t²`, USP `4 a_yt² S_t̄² / S_t²`, OWSP `2 a_yt S_t̄² / S_t`,
/// where S_t = Σ_y a_yt. Arms with no mass are skipped.
pub fn lower_bound_w(
    a: &ConfoundedDistribution,
    spec: &AccuracySpec,
    policy: &Policy,
    c1_constant: f64,
) -> Result<f64> {
    if !(c1_constant > 0.0) {
        return Err(Error::invalid(format!("c1 constant must be positive, got {c1_constant}")));
    }
    let term: fn(f64, f64, f64) -> f64 = match policy {
        Policy::Nsp => |ay, s, s_bar| ay * s_bar * s_bar / (s * s),
        Policy::Usp => |ay, s, s_bar| 4.0 * ay * ay * s_bar * s_bar / (s * s),
        Policy::Owsp => |ay, s, s_bar| 2.0 * ay * s_bar * s_bar / s,
        Policy::Custom(_) => return Err(Error::invalid("lower bounds exist only for nsp, usp and owsp")),
    };
    let mut best: f64 = 0.0;
    for t in 0..2u8 {
        let s = a.arm_mass(t);
        if s <= 0.0 {
            continue;
        }
        let s_bar = a.arm_mass(1 - t);
        for g in Group::arm(t) {
            best = best.max(term(a.get(g), s, s_bar));
        }
    }
    Ok(spec.c1(c1_constant) / (spec.beta * spec.beta) * best)
}

/// Instance family where OWSP needs only a `4η` fraction of NSP's samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioWitness {
    pub pair: HardInstancePair,
    /// μ_owsp / μ_nsp for distinguishing the pair.
    pub ratio: f64,
}

/// a = (1 − 3η, η, η, η) with q = (β, β, β, cβ) against q' = (β, β, β, β),
/// c = (1 − β)/β. Only the (1,1) row differs, so the sample requirement
/// scales with 1/x_11 and the ratio is x_11(NSP)/x_11(OWSP) = 4η.
pub fn owsp_vs_nsp_ratio_witness(eta: f64, spec: &AccuracySpec) -> Result<RatioWitness> {
    if !(eta > 0.0 && eta <= 0.25) {
        return Err(Error::invalid(format!("eta must lie in (0, 1/4], got {eta}")));
    }
    let beta = spec.beta;
    let c = (1.0 - beta) / beta;
    let a = ConfoundedDistribution::new([1.0 - 3.0 * eta, eta, eta, eta])?;
    let base = ConditionalTable::binary([beta, beta, beta, c * beta])?;
    let alternate = ConditionalTable::binary([beta; 4])?;
    let treated_success = Group { y: 1, t: 1 };
    let nsp = policy_weights(&Policy::Nsp, &a)?.get(treated_success);
    let owsp = policy_weights(&Policy::Owsp, &a)?.get(treated_success);
    Ok(RatioWitness {
        pair: HardInstancePair::build(
            a,
            base,
            alternate,
            PairParams {
                beta: Some(beta),
                eta: Some(eta),
                c: Some(c),
                ..Default::default()
            },
        ),
        ratio: nsp / owsp,
    })
}

/// Outcome of the finite-data sufficient condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// min-term / threshold; feasible iff ≥ 1.
    pub margin: f64,
}

/// Per-cell term (Σ_y a_yt q_yt^z)² / (1/samples_yt + (q_yt^z)²/n), minimized
/// over cells of groups with positive mass.
fn finite_min_term(a: &ConfoundedDistribution, q: &ConditionalTable, samples: impl Fn(Group) -> f64, n: f64) -> f64 {
    let mut min = f64::INFINITY;
    for g in Group::ALL {
        if a.get(g) <= 0.0 {
            continue;
        }
        let s = samples(g);
        for z in 0..q.k() {
            let num = weighted_mass(a, q, g.t, z).powi(2);
            let qz = q.get(g, z);
            let term = if s > 0.0 { num / (1.0 / s + qz * qz / n) } else { 0.0 };
            min = min.min(term);
        }
    }
    min
}

/// Sufficient condition after `n` confounded and `m` deconfounded samples
/// split by `weights`:
/// min_{y,t,z} (Σ_y a_yt q_yt^z)² / (1/(x_yt m) + (q_yt^z)²/n) ≥ 50 k² ln(8k/δ)/ε².
pub fn finite_feasible(
    a_hat: &ConfoundedDistribution,
    q: &ConditionalTable,
    weights: &PolicyWeights,
    m: u64,
    n: u64,
    spec: &AccuracySpec,
) -> Result<Feasibility> {
    spec.check_k(q.k())?;
    if m == 0 || n == 0 {
        return Err(Error::invalid("m and n must be positive"));
    }
    let min = finite_min_term(a_hat, q, |g| weights.get(g) * m as f64, n as f64);
    let margin = min / spec.finite_threshold();
    Ok(Feasibility {
        feasible: margin >= 1.0,
        margin,
    })
}

/// Smallest m ≤ n satisfying [`finite_feasible`], or `None` when even m = n fails.
pub fn solve_min_m(
    a_hat: &ConfoundedDistribution,
    q: &ConditionalTable,
    weights: &PolicyWeights,
    n: u64,
    spec: &AccuracySpec,
) -> Result<Option<u64>> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let ok = |m: u64| finite_feasible(a_hat, q, weights, m, n, spec).map(|f| f.feasible);
    if !ok(n)? {
        return Ok(None);
    }
    // Invariant: !ok(lo) (or lo = 0) and ok(hi).
    let mut hi = 1u64;
    while hi < n && !ok(hi)? {
        hi = hi.saturating_mul(2);
    }
    let hi = hi.min(n);
    let mut lo = hi / 2;
    let mut hi = hi;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(if lo >= 1 && ok(lo)? { lo } else { hi }))
}

/// Budget split between confounded acquisition and deconfounding.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetPlan {
    /// Deconfounded samples (linear relaxation, not rounded).
    pub m: f64,
    /// Confounded samples.
    pub n: f64,
    pub margin: f64,
    pub weights: PolicyWeights,
}

/// Grid search along the budget line c_z·m + c_c·n = B with m ≤ n.
///
/// Each group's usable reveals are min(x_yt m, â_yt n): a policy cannot
/// deconfound more records of a group than were acquired.
#[allow(clippy::too_many_arguments)]
pub fn allocate_budget(
    a_hat: &ConfoundedDistribution,
    q: &ConditionalTable,
    budget: f64,
    cost_confounded: f64,
    cost_deconfound: f64,
    spec: &AccuracySpec,
    policy: &Policy,
    grid: usize,
) -> Result<BudgetPlan> {
    spec.check_k(q.k())?;
    if !(cost_confounded > 0.0 && cost_deconfound > 0.0) {
        return Err(Error::invalid("costs must be positive"));
    }
    if grid < 10 {
        return Err(Error::invalid(format!("grid must have at least 10 points, got {grid}")));
    }
    if !(budget >= cost_confounded + cost_deconfound) {
        return Err(Error::invalid(format!(
            "budget {budget} cannot buy one confounded and one deconfounded sample"
        )));
    }
    let weights = policy_weights(policy, a_hat)?;
    let m_max = budget / (cost_confounded + cost_deconfound);
    let threshold = spec.finite_threshold();
    let mut best: Option<BudgetPlan> = None;
    for i in 1..=grid {
        let m = m_max * i as f64 / grid as f64;
        let n = (budget - cost_deconfound * m) / cost_confounded;
        let margin = budget_margin(a_hat, q, &weights, m, n) / threshold;
        if best.as_ref().is_none_or(|b| margin > b.margin) {
            best = Some(BudgetPlan {
                m,
                n,
                margin,
                weights: weights.clone(),
            });
        }
    }
    Ok(best.expect("grid is non-empty"))
}

pub(crate) fn budget_margin(a: &ConfoundedDistribution, q: &ConditionalTable, w: &PolicyWeights, m: f64, n: f64) -> f64 {
    finite_min_term(a, q, |g| (w.get(g) * m).min(a.get(g) * n), n)
}

/// Every bound for one instance, as printed by the planner.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub c: f64,
    pub m_base: BoundValue,
    pub m_nsp: BoundValue,
    pub m_usp: BoundValue,
    pub m_owsp: BoundValue,
    pub worst_nsp: f64,
    pub worst_usp: f64,
    pub worst_owsp: f64,
    pub c1_constant: f64,
    pub w_nsp: f64,
    pub w_usp: f64,
    pub w_owsp: f64,
    /// False when kβ ≥ 1, outside the regime the lower bounds assume.
    pub lower_bound_regime: bool,
}

pub fn bound_report(
    a: &ConfoundedDistribution,
    q: &ConditionalTable,
    spec: &AccuracySpec,
    c1_constant: f64,
) -> Result<BoundReport> {
    let p = crate::model::joint_from_parts(a, q);
    Ok(BoundReport {
        c: spec.c(),
        m_base: m_base(&p, spec)?,
        m_nsp: m_policy(a, q, spec, &Policy::Nsp)?,
        m_usp: m_policy(a, q, spec, &Policy::Usp)?,
        m_owsp: m_policy(a, q, spec, &Policy::Owsp)?,
        worst_nsp: worst_case_m(a, spec, &Policy::Nsp),
        worst_usp: worst_case_m(a, spec, &Policy::Usp),
        worst_owsp: worst_case_m(a, spec, &Policy::Owsp),
        c1_constant,
        w_nsp: lower_bound_w(a, spec, &Policy::Nsp, c1_constant)?,
        w_usp: lower_bound_w(a, spec, &Policy::Usp, c1_constant)?,
        w_owsp: lower_bound_w(a, spec, &Policy::Owsp, c1_constant)?,
        lower_bound_regime: spec.lower_bound_regime(),
    })
}
