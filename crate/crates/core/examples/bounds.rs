//! Sample-size bounds for one instance: upper, worst-case and lower.
use deconfound::bounds::{bound_report, AccuracySpec};
use deconfound::model::{ConditionalTable, ConfoundedDistribution};

fn main() -> deconfound::Result<()> {
    let a = ConfoundedDistribution::new([0.4, 0.1, 0.2, 0.3])?;
    let q = ConditionalTable::binary([0.5, 0.2, 0.7, 0.6])?;
    let spec = AccuracySpec::new(0.1, 0.05, 2, 0.2)?;
    let r = bound_report(&a, &q, &spec, 1.0)?;

    println!("C          = {:.2}", r.c);
    println!("m_base     = {:.0}", r.m_base.value);
    println!("m_nsp      = {:.0}  (witness {:?})", r.m_nsp.value, r.m_nsp.witness);
    println!("m_usp      = {:.0}", r.m_usp.value);
    println!("m_owsp     = {:.0}", r.m_owsp.value);
    println!("worst case = nsp {:.0}, usp {:.0}, owsp {:.0}", r.worst_nsp, r.worst_usp, r.worst_owsp);
    println!("lower      = nsp {:.0}, usp {:.0}, owsp {:.0}", r.w_nsp, r.w_usp, r.w_owsp);
    Ok(())
}
