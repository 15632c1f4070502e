//! Exact treatment effect of a joint (y, t, z) table.
use deconfound::model::{ate_exact, joint_from_parts, parts_from_joint, ConditionalTable, ConfoundedDistribution};

fn main() -> deconfound::Result<()> {
    let a = ConfoundedDistribution::new([0.4, 0.1, 0.2, 0.3])?;
    // Entries are P(Z = 1 | y, t) for groups (0,0), (0,1), (1,0), (1,1).
    let q = ConditionalTable::binary([0.5, 0.2, 0.7, 0.6])?;
    let p = joint_from_parts(&a, &q);
    println!("ATE = {:.6}", ate_exact(&p).value);

    let parts = parts_from_joint(&p);
    println!("recovered a = {:?}", parts.a.as_array());

    // A table where nobody in the control arm has z = 1.
    let sparse = ConditionalTable::binary([0.0, 0.5, 0.0, 0.5])?;
    let eval = ate_exact(&joint_from_parts(&a, &sparse));
    println!("sparse ATE = {:.6}, empty strata = {:?}", eval.value, eval.degenerate_strata);
    Ok(())
}
