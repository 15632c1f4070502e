//! How each selection policy spends a deconfounding budget.
use deconfound::model::ConfoundedDistribution;
use deconfound::policy::{allocate_finite, allocate_infinite, policy_weights, Policy};

fn main() -> deconfound::Result<()> {
    let a = ConfoundedDistribution::new([0.9, 0.02, 0.01, 0.07])?;
    for policy in [Policy::Nsp, Policy::Usp, Policy::Owsp] {
        let w = policy_weights(&policy, &a)?;
        let alloc = allocate_infinite(&policy, &a, 500)?;
        println!("{:>4}: weights {:.3?} -> counts {:?}", policy.name(), w.as_array(), alloc.counts);
    }

    // With a finite pool the small groups cap what USP and OWSP can take.
    let available = [900, 20, 10, 70];
    let a_hat = ConfoundedDistribution::from_counts(available)?;
    for policy in [Policy::Nsp, Policy::Usp, Policy::Owsp] {
        let alloc = allocate_finite(&policy, available, 200, &a_hat)?;
        println!("{:>4} from pool {available:?}: {:?}", policy.name(), alloc.counts);
    }
    Ok(())
}
