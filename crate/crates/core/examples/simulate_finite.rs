//! A fixed 100 reveals while the confounded pool grows.
use deconfound::estimate::Fallback;
use deconfound::sim::{run_finite_experiment, ExperimentConfig, InstanceSource, Method};

fn main() -> deconfound::Result<()> {
    let config = ExperimentConfig {
        instances: Some(InstanceSource::Random { count: 50, k: 2 }),
        methods: vec![Method::Nsp, Method::Usp, Method::Owsp],
        m_grid: vec![100],
        n_grid: vec![100, 300, 1_000, 3_000, 10_000],
        replications: 100,
        seed: 2,
        fallback: Fallback::Uniform,
        shared_randomness: true,
    };
    let curve = run_finite_experiment(&config, 0)?;
    for n in &config.n_grid {
        let row: Vec<String> = ["nsp", "usp", "owsp"]
            .iter()
            .map(|p| format!("{p} {:.4}", curve.mean(p, *n).unwrap()))
            .collect();
        println!("n = {n:>6}: {}", row.join("  "));
    }
    Ok(())
}
