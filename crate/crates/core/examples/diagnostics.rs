//! Oracle variance and the theoretical diagnostics for a degenerate design.

use robust_lpa::contrast::ContrastSpec;
use robust_lpa::kernel::{Bandwidth, KernelSpec};
use robust_lpa::lpa::LpaConfig;
use robust_lpa::simulate::{DesignSpec, ModelSpec, NoiseLevelSpec, NoiseSpec, TargetSpec};
use robust_lpa::variance::{b0_constant, diagnostics, oracle_variance, EntropyConfig, OracleConfig, SmoothnessSpec};

fn main() -> robust_lpa::Result<()> {
    let spec = ModelSpec {
        d: 1,
        target: TargetSpec::Cusp { center: 0.5, beta: 1.0, scale: 1.0, axis: 0 },
        design: DesignSpec::DegenerateS { s: 1.0, x0: 0.5 },
        noise_level: NoiseLevelSpec::PowerDistance { alpha: 0.5, center: vec![0.5] },
        noise: NoiseSpec::Cauchy { scale: 1.0 },
    };
    let law = spec.resolve()?;
    let n = 4096;
    let cfg = LpaConfig::new(vec![0.5], 1);
    let c = ContrastSpec::arctan(1.0);
    let k = KernelSpec::symmetric(1);
    let oc = OracleConfig::default();
    for h in [0.4, 0.2, 0.1, 0.05] {
        let v = oracle_variance(&law, &c, &k, &Bandwidth(vec![h]), &cfg, n, &oc)?;
        println!("h = {h:<5}: numerator {:.4e}, denominator {:.4e}, V = {:.4e}", v.numerator, v.denominator, v.v);
    }
    let entropy = EntropyConfig::new(cfg.box_bound, 2, 1.0, 1.0, n)?;
    println!("B0 = {:.3}", b0_constant(&entropy)?);
    let h = Bandwidth(vec![0.2]);
    let smooth = SmoothnessSpec { beta: 1.0, lipschitz: 1.0 };
    let rep = diagnostics(&law, &c, &k, &h, &cfg, &entropy, &smooth, &oc)?;
    println!("{rep:#?}");
    Ok(())
}
