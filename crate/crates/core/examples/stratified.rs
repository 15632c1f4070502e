//! Per-covariate effects averaged by covariate frequency.
use deconfound::estimate::{estimate_stratified_ite, Fallback, StratifiedRecord};
use deconfound::model::Group;

fn main() -> deconfound::Result<()> {
    let mut records = Vec::new();
    for x in 0..2 {
        for (i, g) in Group::ALL.iter().enumerate() {
            for j in 0..(5 + 3 * i + 4 * x) {
                let z = (j % 3 == 0).then_some((i + j + x) % 2);
                records.push(StratifiedRecord { x, group: *g, z });
            }
        }
    }
    let est = estimate_stratified_ite(&records, 2, Fallback::Uniform)?;
    for s in &est.strata {
        println!("x = {}: n = {}, effect {:.4}", s.x, s.size, s.estimate.ate_hat);
    }
    println!("aggregate {:.4}", est.aggregate);
    Ok(())
}
