//! Local linear Huber fit at a point with a fixed bandwidth and kernel.

use robust_lpa::simulate::{generate_replication, DesignSpec, ModelSpec, NoiseLevelSpec, NoiseSpec, TargetSpec};
use robust_lpa::{fit_lpa, Bandwidth, ContrastSpec, KernelSpec, LpaConfig};

fn main() -> robust_lpa::Result<()> {
    let model = ModelSpec {
        d: 1,
        target: TargetSpec::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: 0.0, axis: 0 },
        design: DesignSpec::Uniform,
        noise_level: NoiseLevelSpec::Constant { sigma: 0.3 },
        noise: NoiseSpec::Cauchy { scale: 1.0 },
    };
    let x0 = 0.3;
    let sample = generate_replication(&model, 4000, 7, 0)?;
    let cfg = LpaConfig::new(vec![x0], 1);
    let h = Bandwidth(vec![0.1]);
    let k = KernelSpec::symmetric(1);
    println!("truth f(x0) = {:.5}", model.target.eval(&[x0]));
    for c in [ContrastSpec::huber(1e6), ContrastSpec::huber(1.0), ContrastSpec::arctan(0.5)] {
        let fit = fit_lpa(&sample, &c, &k, &h, &cfg)?;
        println!(
            "{:?}({:>7}): estimate {:>9.5}, slope coefficient {:>8.4}, {} points in window, {} iterations, {:?}",
            c.kind, c.gamma, fit.estimate, fit.coeffs[1], fit.effective_n, fit.iterations, fit.termination
        );
    }
    Ok(())
}
