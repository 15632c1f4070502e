//! Pairs of instances that look alike but have different effects.
use deconfound::bounds::{owsp_vs_nsp_ratio_witness, AccuracySpec};
use deconfound::model::{ate_exact, general_lower_pair, hardness_pair, joint_from_parts, ConfoundedDistribution};

fn main() -> deconfound::Result<()> {
    let a = ConfoundedDistribution::new([0.4, 0.1, 0.2, 0.3])?;

    let pair = hardness_pair(&a, 1e-4, 1.0 - 1e-6)?;
    let base = ate_exact(&joint_from_parts(&pair.a, &pair.base)).value;
    let alt = ate_exact(&joint_from_parts(&pair.a, &pair.alternate)).value;
    println!("confounded-only hardness: ATE {base:.6} vs {alt:.6}, gap {:.6}", pair.gap);

    let pair = general_lower_pair(&a, 0.3, 0.6, 0.1, 0.01)?;
    println!("two-point lower bound pair: gap {:.6}", pair.gap);

    let spec = AccuracySpec::new(0.1, 0.05, 2, 0.1)?;
    let w = owsp_vs_nsp_ratio_witness(0.01, &spec)?;
    println!("owsp vs nsp witness: ratio {:.3}, gap {:.4}", w.ratio, w.pair.gap);
    Ok(())
}
