//! Invariant checks shared by the property suite and the acceptance runner.
#![allow(dead_code)]

use deconfound::bounds::{finite_feasible, m_base, m_policy, worst_case_m, AccuracySpec};
use deconfound::estimate::{
    estimate_deconfounded_only, estimate_finite, estimate_with_known_confounded, Dataset, DeconfoundedRecord,
    Fallback,
};
use deconfound::model::{
    ate_exact, joint_from_parts, parts_from_joint, random_conditional, random_instance, ConditionalTable,
    ConfoundedDistribution, Group, JointDistribution,
};
use deconfound::policy::{allocate_finite, allocate_infinite, policy_weights, Policy};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-9;

pub fn close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol
}

// ---------- strategies ----------

pub fn positive_a() -> impl Strategy<Value = ConfoundedDistribution> {
    prop::array::uniform4(0.01f64..1.0).prop_map(|w| ConfoundedDistribution::from_weights(w).unwrap())
}

pub fn any_a() -> impl Strategy<Value = ConfoundedDistribution> {
    prop::array::uniform4(prop_oneof![Just(0.0), 0.01f64..1.0])
        .prop_filter("mass in both arms", |w| w[0] + w[2] > 0.0 && w[1] + w[3] > 0.0)
        .prop_map(|w| ConfoundedDistribution::from_weights(w).unwrap())
}

pub fn conditional(k: usize) -> impl Strategy<Value = ConditionalTable> {
    any::<u64>().prop_map(move |s| random_conditional(&mut ChaCha8Rng::seed_from_u64(s), k).unwrap())
}

pub fn instance() -> impl Strategy<Value = (ConfoundedDistribution, ConditionalTable)> {
    (2usize..=4).prop_flat_map(|k| (positive_a(), conditional(k)))
}

pub fn joint() -> impl Strategy<Value = JointDistribution> {
    (2usize..=4, any::<u64>()).prop_map(|(k, s)| random_instance(k, s).unwrap())
}

pub fn records(k: usize) -> impl Strategy<Value = Vec<DeconfoundedRecord>> {
    prop::collection::vec((0usize..4, 0..k), 1..80).prop_map(|v| {
        v.into_iter()
            .map(|(g, z)| DeconfoundedRecord {
                group: Group::from_index(g),
                z,
            })
            .collect()
    })
}

pub fn k_and_records() -> impl Strategy<Value = (usize, Vec<DeconfoundedRecord>)> {
    (2usize..=4).prop_flat_map(|k| (Just(k), records(k)))
}

pub fn spec_params() -> impl Strategy<Value = (f64, f64, usize, f64)> {
    (0.01f64..0.5, 0.01f64..0.5, 2usize..=4, 0.01f64..0.49)
}

pub fn policy() -> impl Strategy<Value = Policy> {
    prop_oneof![Just(Policy::Nsp), Just(Policy::Usp), Just(Policy::Owsp)]
}

// ---------- core model ----------

fn row_sums_ok(rows: &[Vec<f64>]) -> bool {
    rows.iter().all(|r| close(r.iter().sum::<f64>(), 1.0, 1e-12) && r.iter().all(|v| *v >= 0.0))
}

pub fn check_simplex_closure(p: &JointDistribution, q: &ConditionalTable) -> Result<(), TestCaseError> {
    prop_assert!(close(p.flat().iter().sum::<f64>(), 1.0, 1e-12));
    prop_assert!(row_sums_ok(q.rows()));
    let parts = parts_from_joint(p);
    prop_assert!(close(parts.a.as_array().iter().sum::<f64>(), 1.0, 1e-12));
    prop_assert!(row_sums_ok(parts.q.rows()));
    Ok(())
}

pub fn check_roundtrip(a: &ConfoundedDistribution, q: &ConditionalTable) -> Result<(), TestCaseError> {
    let p = joint_from_parts(a, q);
    let parts = parts_from_joint(&p);
    for g in Group::ALL {
        prop_assert!(close(parts.a.get(g), a.get(g), 1e-12));
        for z in 0..q.k() {
            prop_assert!(close(parts.q.get(g, z), q.get(g, z), 1e-12));
        }
    }
    let back = joint_from_parts(&parts.a, &parts.q);
    for (x, y) in back.flat().iter().zip(p.flat()) {
        prop_assert!(close(*x, y, 1e-12));
    }
    Ok(())
}

pub fn check_no_confounding(a: &ConfoundedDistribution, q: &ConditionalTable) -> Result<(), TestCaseError> {
    let row = q.row(Group::ALL[0]).to_vec();
    let same = ConditionalTable::new([row.clone(), row.clone(), row.clone(), row]).unwrap();
    let ate = ate_exact(&joint_from_parts(a, &same)).value;
    let av = a.as_array();
    let naive = av[3] / (av[1] + av[3]) - av[2] / (av[0] + av[2]);
    prop_assert!(close(ate, naive, 1e-12), "{} vs {}", ate, naive);
    Ok(())
}

fn swap_treatment(p: &JointDistribution) -> JointDistribution {
    let c = p.cells();
    JointDistribution::new([c[1].clone(), c[0].clone(), c[3].clone(), c[2].clone()]).unwrap()
}

fn permute_z(p: &JointDistribution, perm: &[usize]) -> JointDistribution {
    let c = p.cells();
    let apply = |row: &Vec<f64>| perm.iter().map(|&z| row[z]).collect::<Vec<f64>>();
    JointDistribution::new([apply(&c[0]), apply(&c[1]), apply(&c[2]), apply(&c[3])]).unwrap()
}

pub fn check_label_symmetry(p: &JointDistribution, seed: u64) -> Result<(), TestCaseError> {
    let ate = ate_exact(p).value;
    prop_assert!(close(ate_exact(&swap_treatment(p)).value, -ate, 1e-12));
    let mut perm: Vec<usize> = (0..p.k()).collect();
    perm.rotate_left((seed as usize) % p.k());
    if seed % 2 == 1 {
        perm.reverse();
    }
    prop_assert!(close(ate_exact(&permute_z(p, &perm)).value, ate, 1e-12));
    Ok(())
}

pub fn check_ate_range(p: &JointDistribution) -> Result<(), TestCaseError> {
    let v = ate_exact(p).value;
    prop_assert!((-1.0..=1.0).contains(&v));
    Ok(())
}

// ---------- policies ----------

pub fn check_weights(policy: &Policy, a: &ConfoundedDistribution) -> Result<(), TestCaseError> {
    let w = policy_weights(policy, a).unwrap();
    prop_assert!(close(w.as_array().iter().sum::<f64>(), 1.0, 1e-12));
    if let Policy::Owsp = policy {
        for t in 0..2u8 {
            let arm: f64 = Group::arm(t).iter().map(|g| w.get(*g)).sum();
            prop_assert!(close(arm, 0.5, 1e-12));
        }
    }
    Ok(())
}

pub fn check_infinite_allocation(policy: &Policy, a: &ConfoundedDistribution, m: u64) -> Result<(), TestCaseError> {
    let alloc = allocate_infinite(policy, a, m).unwrap();
    prop_assert_eq!(alloc.total(), m);
    let w = policy_weights(policy, a).unwrap();
    for g in Group::ALL {
        prop_assert!((alloc.get(g) as f64 - m as f64 * w.get(g)).abs() < 1.0);
    }
    Ok(())
}

pub fn check_finite_allocation(policy: &Policy, available: [u64; 4], m_frac: f64) -> Result<(), TestCaseError> {
    let pool: u64 = available.iter().sum();
    let m = ((pool as f64) * m_frac).floor() as u64;
    let a_hat = ConfoundedDistribution::from_counts(available).unwrap();
    let alloc = allocate_finite(policy, available, m, &a_hat).unwrap();
    prop_assert_eq!(alloc.total(), m);
    for g in Group::ALL {
        prop_assert!(alloc.get(g) <= available[g.index()]);
    }
    Ok(())
}

pub fn check_owsp_finite_matches_infinite(counts: [u64; 4], m: u64) -> Result<(), TestCaseError> {
    let a_hat = ConfoundedDistribution::from_counts(counts).unwrap();
    let infinite = allocate_infinite(&Policy::Owsp, &a_hat, m).unwrap();
    // Only meaningful when no cap binds.
    if Group::ALL.iter().any(|g| infinite.get(*g) > counts[g.index()]) {
        return Ok(());
    }
    let finite = allocate_finite(&Policy::Owsp, counts, m, &a_hat).unwrap();
    prop_assert_eq!(finite, infinite);
    Ok(())
}

pub fn check_saturation(available: [u64; 4]) -> Result<(), TestCaseError> {
    let pool: u64 = available.iter().sum();
    let a_hat = ConfoundedDistribution::from_counts(available).unwrap();
    for p in [Policy::Nsp, Policy::Usp, Policy::Owsp] {
        prop_assert_eq!(allocate_finite(&p, available, pool, &a_hat).unwrap().counts, available);
    }
    Ok(())
}

pub fn check_scale_invariance(policy: &Policy, counts: [u64; 4], scale: u64) -> Result<(), TestCaseError> {
    let a = ConfoundedDistribution::from_counts(counts).unwrap();
    let b = ConfoundedDistribution::from_counts(counts.map(|c| c * scale)).unwrap();
    let (wa, wb) = (policy_weights(policy, &a).unwrap(), policy_weights(policy, &b).unwrap());
    for g in Group::ALL {
        prop_assert!(close(wa.get(g), wb.get(g), 1e-12));
    }
    Ok(())
}

// ---------- estimation ----------

pub fn check_mle_normalization(k: usize, recs: &[DeconfoundedRecord]) -> Result<(), TestCaseError> {
    let r = estimate_deconfounded_only(recs, k).unwrap();
    prop_assert!((-1.0..=1.0).contains(&r.ate_hat));
    prop_assert!(close(r.a_hat.as_array().iter().sum::<f64>(), 1.0, 1e-12));
    prop_assert!(row_sums_ok(r.q_hat.rows()));
    let uniform = ConfoundedDistribution::new([0.25; 4]).unwrap();
    let known = estimate_with_known_confounded(&uniform, recs, k, Fallback::Uniform).unwrap();
    prop_assert!(row_sums_ok(known.q_hat.rows()));
    // Degeneracy sets are empty iff every group and stratum is populated.
    let mut counts = [[0u64; 8]; 4];
    for rec in recs {
        counts[rec.group.index()][rec.z] += 1;
    }
    let all_groups = counts.iter().all(|row| row.iter().sum::<u64>() > 0);
    prop_assert_eq!(known.degenerate_groups.is_empty(), all_groups);
    let all_strata = (0..2u8).all(|t| {
        (0..k).all(|z| Group::arm(t).iter().any(|g| counts[g.index()][z] > 0))
    });
    prop_assert_eq!(r.degenerate_strata.is_empty(), all_strata);
    Ok(())
}

pub fn check_equivariance(k: usize, recs: &[DeconfoundedRecord], shift: usize) -> Result<(), TestCaseError> {
    let perm = |z: usize| (z + shift) % k;
    let permuted: Vec<DeconfoundedRecord> = recs
        .iter()
        .map(|r| DeconfoundedRecord {
            group: r.group,
            z: perm(r.z),
        })
        .collect();
    let a = ConfoundedDistribution::new([0.1, 0.2, 0.3, 0.4]).unwrap();
    let base = estimate_with_known_confounded(&a, recs, k, Fallback::Uniform).unwrap();
    let moved = estimate_with_known_confounded(&a, &permuted, k, Fallback::Uniform).unwrap();
    for g in Group::ALL {
        for z in 0..k {
            prop_assert_eq!(base.q_hat.get(g, z), moved.q_hat.get(g, perm(z)));
        }
    }
    prop_assert!(close(base.ate_hat, moved.ate_hat, 1e-12));
    let b0 = estimate_deconfounded_only(recs, k).unwrap();
    let b1 = estimate_deconfounded_only(&permuted, k).unwrap();
    prop_assert!(close(b0.ate_hat, b1.ate_hat, 1e-12));
    Ok(())
}

/// Confounded counts in exact proportion to a known marginal make the finite
/// estimator coincide with the known-marginal one.
pub fn check_finite_matches_known(
    k: usize,
    recs: &[DeconfoundedRecord],
    counts: [u64; 4],
    scale: u64,
) -> Result<(), TestCaseError> {
    let a = ConfoundedDistribution::from_counts(counts).unwrap();
    let mut confounded = Vec::new();
    for g in Group::ALL {
        confounded.extend(std::iter::repeat_n(g, (counts[g.index()] * scale) as usize));
    }
    let data = Dataset::new(k, confounded, recs.to_vec()).unwrap();
    let finite = estimate_finite(&data, Fallback::Uniform).unwrap();
    let known = estimate_with_known_confounded(&a, recs, k, Fallback::Uniform).unwrap();
    prop_assert!(close(finite.ate_hat, known.ate_hat, 1e-12));
    Ok(())
}

/// Deconfounding every confounded record makes the finite estimator equal
/// the deconfounded-only one.
pub fn check_full_reveal_identity(k: usize, recs: &[DeconfoundedRecord]) -> Result<(), TestCaseError> {
    let confounded: Vec<Group> = recs.iter().map(|r| r.group).collect();
    let data = Dataset::new(k, confounded, recs.to_vec()).unwrap();
    let finite = estimate_finite(&data, Fallback::Uniform).unwrap();
    let only = estimate_deconfounded_only(recs, k).unwrap();
    prop_assert!(close(finite.ate_hat, only.ate_hat, 1e-12));
    Ok(())
}

// ---------- bounds ----------

pub fn check_bound_dominance(
    a: &ConfoundedDistribution,
    q: &ConditionalTable,
    spec: &AccuracySpec,
) -> Result<(), TestCaseError> {
    let base = m_base(&joint_from_parts(a, q), spec).unwrap().value;
    let nsp = m_policy(a, q, spec, &Policy::Nsp).unwrap().value;
    let usp = m_policy(a, q, spec, &Policy::Usp).unwrap().value;
    let owsp = m_policy(a, q, spec, &Policy::Owsp).unwrap().value;
    prop_assert!(nsp <= base * (1.0 + TOL));
    prop_assert!(owsp <= usp * (1.0 + TOL));
    prop_assert!(worst_case_m(a, spec, &Policy::Owsp) <= worst_case_m(a, spec, &Policy::Nsp) * (1.0 + TOL));
    Ok(())
}

pub fn check_bound_monotonicity(
    a: &ConfoundedDistribution,
    q: &ConditionalTable,
    (eps, delta, beta): (f64, f64, f64),
) -> Result<(), TestCaseError> {
    let k = q.k();
    let s = AccuracySpec::new(eps, delta, k, beta).unwrap();
    let looser_eps = AccuracySpec::new((eps * 1.5).min(0.99), delta, k, beta).unwrap();
    let looser_delta = AccuracySpec::new(eps, (delta * 1.5).min(0.99), k, beta).unwrap();
    let p = joint_from_parts(a, q);
    for looser in [looser_eps, looser_delta] {
        prop_assert!(m_base(&p, &looser).unwrap().value <= m_base(&p, &s).unwrap().value);
        for pol in [Policy::Nsp, Policy::Usp, Policy::Owsp] {
            prop_assert!(m_policy(a, q, &looser, &pol).unwrap().value <= m_policy(a, q, &s, &pol).unwrap().value);
            prop_assert!(worst_case_m(a, &looser, &pol) <= worst_case_m(a, &s, &pol));
        }
        prop_assert!(looser.finite_threshold() <= s.finite_threshold());
    }
    Ok(())
}

pub fn check_feasibility_monotone(
    a: &ConfoundedDistribution,
    q: &ConditionalTable,
    m: u64,
    n: u64,
) -> Result<(), TestCaseError> {
    let spec = AccuracySpec::new(0.25, 0.1, q.k(), 0.1).unwrap();
    let w = policy_weights(&Policy::Owsp, a).unwrap();
    let f = |m, n| finite_feasible(a, q, &w, m, n, &spec).unwrap().margin;
    let here = f(m, n);
    prop_assert!(f(m + 1, n) >= here);
    prop_assert!(f(m, n + 1) >= here);
    prop_assert!(f(2 * m, 2 * n) >= here);
    Ok(())
}
