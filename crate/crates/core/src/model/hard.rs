//! Pairs of conditional tables that are statistically close but whose ATEs
//! differ, used to witness lower bounds.

use serde::Serialize;

use super::{ate_exact, joint_from_parts, ConditionalTable, ConfoundedDistribution, Group};
use crate::error::{Error, Result};

/// Construction parameters; only the ones a construction uses are set.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PairParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_floor: Option<f64>,
}

/// Two instances sharing the marginal `a`, differing only in `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct HardInstancePair {
    pub a: ConfoundedDistribution,
    pub base: ConditionalTable,
    pub alternate: ConditionalTable,
    /// |ATE(a, base) − ATE(a, alternate)|.
    pub gap: f64,
    pub params: PairParams,
}

impl HardInstancePair {
    pub(crate) fn build(
        a: ConfoundedDistribution,
        base: ConditionalTable,
        alternate: ConditionalTable,
        params: PairParams,
    ) -> Self {
        let gap = (ate_exact(&joint_from_parts(&a, &base)).value
            - ate_exact(&joint_from_parts(&a, &alternate)).value)
            .abs();
        HardInstancePair {
            a,
            base,
            alternate,
            gap,
            params,
        }
    }
}

/// q = (f, 0, f, γ) against q' = (f, γ, f, 0) with f = `q_floor` (entries are
/// P(Z=1|y,t)). As γ → 0 the two tables become indistinguishable while the
/// gap tends to (a_00 + a_10)·f.
pub fn hardness_pair(a: &ConfoundedDistribution, gamma: f64, q_floor: f64) -> Result<HardInstancePair> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(q_floor > 0.0 && q_floor <= 1.0 - 1e-9) {
        return Err(Error::invalid(format!(
            "q_floor must lie in (0, 1 - 1e-9], got {q_floor}"
        )));
    }
    if a.get(Group { y: 0, t: 0 }) + a.get(Group { y: 1, t: 0 }) <= 0.0 {
        return Err(Error::invalid("a_00 + a_10 must be positive"));
    }
    let base = ConditionalTable::binary([q_floor, 0.0, q_floor, gamma])?;
    let alternate = ConditionalTable::binary([q_floor, gamma, q_floor, 0.0])?;
    Ok(HardInstancePair::build(
        a.clone(),
        base,
        alternate,
        PairParams {
            gamma: Some(gamma),
            q_floor: Some(q_floor),
            ..Default::default()
        },
    ))
}

/// q = (q00, q01, β, β+γ) against q' = (q00, q01, β+γ, β); the gap is linear
/// in γ for small γ.
pub fn general_lower_pair(
    a: &ConfoundedDistribution,
    q00: f64,
    q01: f64,
    beta: f64,
    gamma: f64,
) -> Result<HardInstancePair> {
    let open = |v: f64| v > 0.0 && v < 1.0;
    if !(open(q00) && open(q01)) {
        return Err(Error::invalid(format!("q00, q01 must lie in (0, 1), got {q00}, {q01}")));
    }
    if gamma < 0.0 || !open(beta) || !open(beta + gamma) {
        return Err(Error::invalid(format!(
            "need gamma >= 0 and beta, beta + gamma in (0, 1), got beta={beta}, gamma={gamma}"
        )));
    }
    let base = ConditionalTable::binary([q00, q01, beta, beta + gamma])?;
    let alternate = ConditionalTable::binary([q00, q01, beta + gamma, beta])?;
    Ok(HardInstancePair::build(
        a.clone(),
        base,
        alternate,
        PairParams {
            gamma: Some(gamma),
            beta: Some(beta),
            ..Default::default()
        },
    ))
}

/// Categorical-k pair behind the per-policy lower bounds.
///
/// Category 0 plays the special role: q_00 = q_10 = (1 − (k−1)β, β, …, β),
/// q_01 = (β, (1−β)/(k−1), …), q_11 = (β+γ, q_01^z − γ/(k−1), …). The
/// alternate swaps the q_01 and q_11 rows.
pub fn policy_lower_pair(a: &ConfoundedDistribution, k: usize, beta: f64, gamma: f64) -> Result<HardInstancePair> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    let km1 = (k - 1) as f64;
    if !(beta > 0.0 && (k as f64) * beta < 1.0) {
        return Err(Error::invalid(format!("need 0 < beta and k*beta < 1, got k={k}, beta={beta}")));
    }
    if !(gamma >= 0.0 && beta + gamma <= 1.0 && gamma <= 1.0 - beta) {
        return Err(Error::invalid(format!(
            "gamma={gamma} pushes an entry outside [0, 1] for beta={beta}"
        )));
    }
    let mut flat = vec![beta; k];
    flat[0] = 1.0 - km1 * beta;
    let mut treated_control = vec![(1.0 - beta) / km1; k];
    treated_control[0] = beta;
    let mut treated_success: Vec<f64> = treated_control.iter().map(|v| v - gamma / km1).collect();
    treated_success[0] = beta + gamma;

    let normalize = |row: Vec<f64>| -> Vec<f64> {
        let s: f64 = row.iter().sum();
        row.into_iter().map(|v| (v / s).max(0.0)).collect()
    };
    let flat = normalize(flat);
    let treated_control = normalize(treated_control);
    let treated_success = normalize(treated_success);

    let base = ConditionalTable::new([
        flat.clone(),
        treated_control.clone(),
        flat.clone(),
        treated_success.clone(),
    ])?;
    let alternate = ConditionalTable::new([flat.clone(), treated_success, flat, treated_control])?;
    Ok(HardInstancePair::build(
        a.clone(),
        base,
        alternate,
        PairParams {
            gamma: Some(gamma),
            beta: Some(beta),
            ..Default::default()
        },
    ))
}
