//! Robust location under contamination: the least favourable Huber scale
//! and the data-driven scale choice.

use robust_lpa::contrast::ContrastSpec;
use robust_lpa::parametric::{adaptive_scale_location, fit_location, solve_gamma_r, GAMMA_R_TOLERANCE, LOCATION_TOLERANCE};
use robust_lpa::simulate::{generate_replication, DesignSpec, ModelSpec, NoiseLevelSpec, NoiseSpec, TargetSpec};

fn main() -> robust_lpa::Result<()> {
    for r in [0.01, 0.05, 0.1, 0.25] {
        println!("r = {r:<4}: minimax Huber scale {:.6}", solve_gamma_r(r, GAMMA_R_TOLERANCE)?);
    }
    let r = 0.25;
    let model = ModelSpec {
        d: 1,
        target: TargetSpec::Constant { value: 0.0 },
        design: DesignSpec::Uniform,
        noise_level: NoiseLevelSpec::Constant { sigma: 1.0 },
        noise: NoiseSpec::ContaminatedNormal { r, contaminant: Box::new(NoiseSpec::Cauchy { scale: 1.0 }) },
    };
    let grid = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let gamma_r = solve_gamma_r(r, GAMMA_R_TOLERANCE)?;
    let reps = 200;
    let mut se = vec![0.0; grid.len() + 3];
    for rep in 0..reps {
        let y = generate_replication(&model, 4096, 5, rep)?.y;
        let a = adaptive_scale_location(&y, &grid, 10.0, LOCATION_TOLERANCE)?;
        se[0] += a.estimate.powi(2);
        se[1] += fit_location(&y, &ContrastSpec::huber(gamma_r), 10.0, LOCATION_TOLERANCE)?.powi(2);
        se[2] += (y.iter().sum::<f64>() / y.len() as f64).powi(2);
        for (j, &g) in grid.iter().enumerate() {
            se[3 + j] += fit_location(&y, &ContrastSpec::huber(g), 10.0, LOCATION_TOLERANCE)?.powi(2);
        }
    }
    let scale = 4096.0 / reps as f64;
    println!("n·MSE over {reps} replications at n = 4096:");
    println!("  adaptive scale     {:>10.3}", se[0] * scale);
    println!("  minimax scale      {:>10.3}", se[1] * scale);
    println!("  sample mean        {:>10.3}", se[2] * scale);
    for (j, g) in grid.iter().enumerate() {
        println!("  fixed gamma {g:<6} {:>10.3}", se[3 + j] * scale);
    }
    Ok(())
}
