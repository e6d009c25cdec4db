//! Monte Carlo risk across sample sizes and the fitted log-log slope.

use robust_lpa::contrast::ContrastSpec;
use robust_lpa::experiment::{risk_study, BandwidthRule, EstimatorSpec};
use robust_lpa::lpa::LpaConfig;
use robust_lpa::simulate::{DesignSpec, ModelSpec, NoiseLevelSpec, NoiseSpec, TargetSpec};

fn main() -> robust_lpa::Result<()> {
    let ns = [512, 1024, 2048, 4096, 8192];
    let cfg = LpaConfig::new(vec![0.5], 1);
    for (name, s) in [("uniform", None), ("degenerate s = 1", Some(1.0))] {
        let design = match s {
            Some(s) => DesignSpec::DegenerateS { s, x0: 0.5 },
            None => DesignSpec::Uniform,
        };
        let model = ModelSpec {
            d: 1,
            target: TargetSpec::Cusp { center: 0.5, beta: 1.0, scale: 1.0, axis: 0 },
            design,
            noise_level: NoiseLevelSpec::Constant { sigma: 1.0 },
            noise: NoiseSpec::Gaussian { sd: 1.0 },
        };
        let s = s.unwrap_or(0.0);
        let exponent = 1.0 / (3.0 + s);
        let est = EstimatorSpec::Fixed {
            contrast: ContrastSpec::huber(1.345),
            kernel_shift: None,
            bandwidth: BandwidthRule::Power { scale: 1.0, exponent },
        };
        let rep = risk_study(&model, &est, &cfg, &ns, 200, 2.0, 1)?;
        println!("{name} design, h = n^-{exponent:.3}:");
        for row in &rep.rows {
            println!("  n = {:>5}: risk {:.4e} ± {:.1e}", row.n, row.risk, row.std_error);
        }
        println!("  slope {:.3} (theory {:.3})", rep.slope.unwrap_or(f64::NAN), -2.0 / (3.0 + s));
    }
    Ok(())
}
