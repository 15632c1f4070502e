//! Error curves with unlimited confounded data.
use deconfound::estimate::Fallback;
use deconfound::sim::{run_infinite_experiment, ExperimentConfig, InstanceSource, Method};

fn main() -> deconfound::Result<()> {
    let config = ExperimentConfig {
        instances: Some(InstanceSource::Random { count: 50, k: 2 }),
        methods: vec![Method::Deconfounded, Method::Nsp, Method::Usp, Method::Owsp],
        m_grid: vec![100, 200, 400, 800],
        n_grid: vec![],
        replications: 100,
        seed: 1,
        fallback: Fallback::Uniform,
        shared_randomness: false,
    };
    let curve = run_infinite_experiment(&config, 0)?;
    deconfound::io::write_error_curve(&mut std::io::stdout(), &curve)
}
