//! Data-driven choice of contrast and kernel at a fixed bandwidth by
//! minimizing the estimated variance.

use robust_lpa::kernel::Bandwidth;
use robust_lpa::lpa::LpaConfig;
use robust_lpa::simulate::{generate_replication, DesignSpec, ModelSpec, NoiseLevelSpec, NoiseSpec, TargetSpec};
use robust_lpa::variance::{default_lambda_grid, select_lambda};

fn main() -> robust_lpa::Result<()> {
    let cfg = LpaConfig::new(vec![0.5], 0);
    let h = Bandwidth(vec![0.2]);
    for (name, noise) in [("gaussian", NoiseSpec::Gaussian { sd: 1.0 }), ("cauchy", NoiseSpec::Cauchy { scale: 1.0 })] {
        let model = ModelSpec {
            d: 1,
            target: TargetSpec::Constant { value: 0.0 },
            design: DesignSpec::Uniform,
            noise_level: NoiseLevelSpec::Constant { sigma: 1.0 },
            noise,
        };
        let sample = generate_replication(&model, 4096, 11, 0)?;
        let grid = default_lambda_grid(&sample, &h, &cfg)?;
        let sel = select_lambda(&sample, &grid, &h, &cfg)?;
        println!("{name} noise: {} candidates", grid.len());
        for t in &sel.traces {
            if let (Some(fit), Some(rep)) = (&t.fit, &t.report) {
                let shift: Vec<String> = t.kernel.shift.iter().map(|s| format!("{s:+.2}")).collect();
                println!(
                    "  {:?} {:>7.3} shift [{}]: estimate {:>8.4}, V̂ {:>10.4}",
                    t.contrast.kind,
                    t.contrast.gamma,
                    shift.join(","),
                    fit.estimate,
                    rep.v_hat
                );
            }
        }
        println!("  chosen {:?} gamma {:.3}, estimate {:.5}", sel.contrast.kind, sel.contrast.gamma, sel.estimate());
    }
    Ok(())
}
