//! Anisotropic bandwidth selection for a surface that is rough along one
//! axis only.

use robust_lpa::experiment::GridSpec;
use robust_lpa::lepski::{build_net_with_range, select_bandwidth_aniso, LepskiConfig, NetKind};
use robust_lpa::lpa::LpaConfig;
use robust_lpa::simulate::{generate_replication, DesignSpec, ModelSpec, NoiseLevelSpec, NoiseSpec, TargetSpec};
use robust_lpa::Bandwidth;

fn main() -> robust_lpa::Result<()> {
    let model = ModelSpec {
        d: 2,
        target: TargetSpec::Cusp { center: 0.5, beta: 0.4, scale: 1.0, axis: 0 },
        design: DesignSpec::Uniform,
        noise_level: NoiseLevelSpec::Constant { sigma: 0.2 },
        noise: NoiseSpec::Gaussian { sd: 1.0 },
    };
    let n = 8192;
    let cfg = LpaConfig::new(vec![0.5, 0.5], 0);
    let net = build_net_with_range(NetKind::Aniso, n, 2, 0.8, 0.03, 1.0 / (n as f64).ln())?;
    let lepski = LepskiConfig::default().with_multiplier(1e-5);
    println!("net of {} bandwidth vectors", net.len());
    for rep in 0..5 {
        let sample = generate_replication(&model, n, 8, rep)?;
        let grid = GridSpec { huber: Some(vec![0.1, 0.25, 0.5, 1.0, 2.0]), arctan: None, kernels: None }.resolve(
            &sample,
            &Bandwidth(vec![net.h_plus; 2]),
            &cfg,
        )?;
        let sel = select_bandwidth_aniso(&sample, &grid, &net, &cfg, &lepski)?;
        println!(
            "replication {rep}: h = ({:.4}, {:.4}), estimate {:>8.5}, gamma {}{}",
            sel.h.0[0],
            sel.h.0[1],
            sel.estimate,
            sel.contrast.gamma,
            if sel.fallback { ", fallback" } else { "" }
        );
    }
    Ok(())
}
