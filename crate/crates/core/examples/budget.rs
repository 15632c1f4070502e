//! Planning with finite confounded data: the smallest m for a given n, and
//! the best split of a fixed budget.
use deconfound::bounds::{allocate_budget, finite_feasible, solve_min_m, AccuracySpec};
use deconfound::model::{ConditionalTable, ConfoundedDistribution};
use deconfound::policy::{policy_weights, Policy};

fn main() -> deconfound::Result<()> {
    let a = ConfoundedDistribution::new([0.4, 0.1, 0.2, 0.3])?;
    let q = ConditionalTable::binary([0.5, 0.2, 0.7, 0.6])?;
    let spec = AccuracySpec::new(0.25, 0.1, 2, 0.2)?;
    let w = policy_weights(&Policy::Owsp, &a)?;

    for n in [1_000_000u64, 3_000_000, 10_000_000, 100_000_000] {
        match solve_min_m(&a, &q, &w, n, &spec)? {
            Some(m) => {
                let f = finite_feasible(&a, &q, &w, m, n, &spec)?;
                println!("n = {n:>9}: m = {m} (margin {:.4})", f.margin);
            }
            None => println!("n = {n:>9}: infeasible even with every record deconfounded"),
        }
    }

    // Confounded records cost 1, deconfounding one costs 20.
    let plan = allocate_budget(&a, &q, 1e8, 1.0, 20.0, &spec, &Policy::Owsp, 400)?;
    println!("budget 1e8: m = {:.0}, n = {:.0}, margin {:.3}", plan.m, plan.n, plan.margin);
    Ok(())
}
