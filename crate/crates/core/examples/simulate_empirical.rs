//! Treating a fully revealed table as the ground truth.
use deconfound::estimate::{DeconfoundedCounts, Fallback};
use deconfound::sim::{run_empirical_experiment, ExperimentConfig, Method};

fn main() -> deconfound::Result<()> {
    // Counts per group over z = 0, 1, 2.
    let table = DeconfoundedCounts::new([vec![120, 60, 20], vec![30, 40, 50], vec![40, 20, 10], vec![70, 90, 110]])?;
    let config = ExperimentConfig {
        instances: None,
        methods: vec![Method::Deconfounded, Method::Nsp, Method::Usp, Method::Owsp],
        m_grid: vec![50, 100, 200],
        n_grid: vec![],
        replications: 200,
        seed: 3,
        fallback: Fallback::Uniform,
        shared_randomness: false,
    };
    let curve = run_empirical_experiment(&table, &config, 0)?;
    for row in &curve.rows {
        println!("{:>12} m={:<4} {:.4} ± {:.4}", row.policy, row.grid_value, row.mean_abs_error, row.std_abs_error);
    }
    Ok(())
}
