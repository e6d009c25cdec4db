//! Load a TOML scenario and run its estimator on one simulated dataset.

use robust_lpa::cli::simulate_dataset;
use robust_lpa::config::ExperimentConfig;
use robust_lpa::experiment::estimate_at;

fn main() -> robust_lpa::Result<()> {
    let path =
        std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/degenerate_cauchy.toml").to_string());
    let cfg = ExperimentConfig::load(std::path::Path::new(&path))?;
    let lpa = cfg.lpa();
    for &n in &cfg.n {
        let sample = simulate_dataset(&cfg, n)?;
        let out = estimate_at(&sample, &cfg.estimator, &lpa)?;
        println!(
            "{} n = {n}: estimate {:.5} (truth {:.5}), h = {:?}, {:?} gamma {}",
            cfg.scenario,
            out.estimate,
            cfg.model.target.eval(&cfg.x0),
            out.bandwidth.0,
            out.contrast.kind,
            out.contrast.gamma
        );
    }
    Ok(())
}
