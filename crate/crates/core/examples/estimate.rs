//! The three plug-in estimators on a small synthetic sample.
use deconfound::estimate::{
    estimate_deconfounded_only, estimate_finite, estimate_with_known_confounded, Dataset, DeconfoundedRecord,
    Fallback,
};
use deconfound::model::{ConfoundedDistribution, Group};

fn rec(y: u8, t: u8, z: usize) -> DeconfoundedRecord {
    DeconfoundedRecord { group: Group { y, t }, z }
}

fn main() -> deconfound::Result<()> {
    let revealed = vec![
        rec(0, 0, 0),
        rec(0, 0, 1),
        rec(0, 1, 1),
        rec(1, 0, 1),
        rec(1, 0, 1),
        rec(1, 1, 0),
        rec(1, 1, 1),
    ];

    let only = estimate_deconfounded_only(&revealed, 2)?;
    println!("deconfounded only: {:.4}", only.ate_hat);

    let a = ConfoundedDistribution::new([0.4, 0.1, 0.2, 0.3])?;
    let known = estimate_with_known_confounded(&a, &revealed, 2, Fallback::Uniform)?;
    println!("known marginal:    {:.4}", known.ate_hat);

    // Forty (y, t) records, seven of which were deconfounded above.
    let mut confounded = Vec::new();
    for (g, n) in Group::ALL.iter().zip([16, 4, 8, 12]) {
        confounded.extend(std::iter::repeat_n(*g, n));
    }
    let data = Dataset::new(2, confounded, revealed)?;
    let finite = estimate_finite(&data, Fallback::Uniform)?;
    println!("finite data:       {:.4} (a_hat = {:?})", finite.ate_hat, finite.a_hat.as_array());
    Ok(())
}
