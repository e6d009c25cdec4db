use rayon::prelude::*;

use robust_lpa::contrast::ContrastSpec;
use robust_lpa::experiment::{estimate_at, EstimatorSpec, GridSpec, NetSpec};
use robust_lpa::kernel::{Bandwidth, KernelSpec};
use robust_lpa::lepski::LepskiConfig;
use robust_lpa::lpa::LpaConfig;
use robust_lpa::parametric::{adaptive_scale_location, fit_location, LOCATION_TOLERANCE};
use robust_lpa::simulate::{generate_replication, DesignSpec, ModelSpec, NoiseLevelSpec, NoiseSpec, TargetSpec};
use robust_lpa::variance::{oracle_variance, select_lambda, LambdaGrid, OracleConfig};

fn model(d: usize, target: TargetSpec, sigma: f64, noise: NoiseSpec) -> ModelSpec {
    ModelSpec { d, target, design: DesignSpec::Uniform, noise_level: NoiseLevelSpec::Constant { sigma }, noise }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn chosen_gammas(spec: &ModelSpec, gammas: &[f64], seed: u64, reps: u64) -> Vec<f64> {
    let grid = LambdaGrid::huber(gammas, vec![KernelSpec::symmetric(1)]).unwrap();
    let h = Bandwidth(vec![0.2]);
    let cfg = LpaConfig::new(vec![0.5], 0);
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = generate_replication(spec, 4096, seed, r).unwrap();
            select_lambda(&s, &grid, &h, &cfg).unwrap().contrast.gamma
        })
        .collect()
}

fn argmin(v: &[f64]) -> usize {
    v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
}

#[test]
fn gaussian_selection_tracks_oracle_minimizer() {
    let spec = model(1, TargetSpec::Constant { value: 0.0 }, 1.0, NoiseSpec::Gaussian { sd: 1.0 });
    let gammas = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let law = spec.resolve().unwrap();
    let cfg = LpaConfig::new(vec![0.5], 0);
    let oracle: Vec<f64> = gammas
        .iter()
        .map(|&g| {
            oracle_variance(
                &law,
                &ContrastSpec::huber(g),
                &KernelSpec::symmetric(1),
                &Bandwidth(vec![0.2]),
                &cfg,
                4096,
                &OracleConfig::default(),
            )
            .unwrap()
            .v
        })
        .collect();
    let j = argmin(&oracle);
    let chosen = chosen_gammas(&spec, &gammas, 101, 100);
    let at_least = chosen.iter().filter(|&&g| g >= gammas[j]).count();
    let adjacent = chosen.iter().filter(|&&g| g >= gammas[j] && g <= gammas[(j + 1).min(gammas.len() - 1)]).count();
    assert!(at_least >= 80, "{at_least}/100");
    assert!(adjacent >= 80, "{adjacent}/100 within one grid step of γ = {}", gammas[j]);
}

#[test]
fn cauchy_selection_rejects_quasi_least_squares() {
    let spec = model(1, TargetSpec::Constant { value: 0.0 }, 1.0, NoiseSpec::Cauchy { scale: 1.0 });
    let chosen = chosen_gammas(&spec, &[0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 1e6], 102, 100);
    let robust = chosen.iter().filter(|&&g| g < 1e6).count();
    assert!(robust >= 95, "{robust}/100");
}

fn median_iso_bandwidth(target: TargetSpec, seed: u64) -> f64 {
    let spec = model(1, target, 0.5, NoiseSpec::Gaussian { sd: 1.0 });
    let est = EstimatorSpec::LepskiIso {
        grid: GridSpec { huber: Some(vec![0.5, 1.0, 2.0]), arctan: None, kernels: Some(vec![vec![0.0]]) },
        net: NetSpec { epsilon: 0.8, h_minus: Some(0.0165), h_plus: Some(0.3) },
        lepski: LepskiConfig::default().with_multiplier(1e-4),
    };
    let cfg = LpaConfig::new(vec![0.5], 0);
    let h: Vec<f64> = (0..100)
        .into_par_iter()
        .map(|r| {
            let s = generate_replication(&spec, 4096, seed, r).unwrap();
            estimate_at(&s, &est, &cfg).unwrap().bandwidth.0[0]
        })
        .collect();
    median(h)
}

#[test]
fn iso_lepski_shrinks_bandwidth_at_a_cusp() {
    let cusp = median_iso_bandwidth(TargetSpec::Cusp { center: 0.5, beta: 0.5, scale: 1.0, axis: 0 }, 103);
    let smooth = median_iso_bandwidth(TargetSpec::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: 0.0, axis: 0 }, 103);
    assert!(cusp < smooth, "cusp {cusp}, smooth {smooth}");
}

fn location_runs(noise: NoiseSpec, gammas: &[f64], seed: u64, reps: u64) -> Vec<(f64, f64, Vec<f64>)> {
    let spec = model(1, TargetSpec::Constant { value: 0.0 }, 1.0, noise);
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let y = generate_replication(&spec, 4096, seed, r).unwrap().y;
            let a = adaptive_scale_location(&y, gammas, 10.0, LOCATION_TOLERANCE).unwrap();
            let fixed = gammas.iter().map(|&g| fit_location(&y, &ContrastSpec::huber(g), 10.0, LOCATION_TOLERANCE).unwrap()).collect();
            (a.estimate, a.gamma, fixed)
        })
        .collect()
}

#[test]
fn gaussian_location_efficiency_grows_with_scale() {
    let gammas = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let runs = location_runs(NoiseSpec::Gaussian { sd: 1.0 }, &gammas, 104, 200);
    let mse: Vec<f64> = (0..gammas.len()).map(|j| runs.iter().map(|r| r.2[j].powi(2)).sum::<f64>() / runs.len() as f64).collect();
    assert!(mse[0] > mse[gammas.len() - 1], "{mse:?}");
    let adaptive = runs.iter().map(|r| r.0.powi(2)).sum::<f64>() / runs.len() as f64;
    let best = mse.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(adaptive <= 1.6 * best, "adaptive {adaptive}, best {best}");
}

#[test]
fn contaminated_location_avoids_largest_scale() {
    let gammas = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let noise = NoiseSpec::ContaminatedNormal { r: 0.25, contaminant: Box::new(NoiseSpec::Cauchy { scale: 1.0 }) };
    let runs = location_runs(noise, &gammas, 105, 200);
    let below = runs.iter().filter(|r| r.1 < 16.0).count();
    assert!(below >= 190, "{below}/200");
}

#[test]
fn exploding_design_oracle_scales_with_bandwidth() {
    // s = −0.5, α = 0.5: numerator ≍ h^{s+2α} = h^{0.5}, denominator ≍ h^s = h^{−0.5}
    let spec = ModelSpec {
        d: 1,
        target: TargetSpec::Constant { value: 0.0 },
        design: DesignSpec::DegenerateS { s: -0.5, x0: 0.5 },
        noise_level: NoiseLevelSpec::PowerDistance { alpha: 0.5, center: vec![0.5] },
        noise: NoiseSpec::Gaussian { sd: 1.0 },
    };
    let law = spec.resolve().unwrap();
    let cfg = LpaConfig::new(vec![0.5], 0);
    let at = |h: f64| {
        oracle_variance(
            &law,
            &ContrastSpec::huber(1.0),
            &KernelSpec::symmetric(1),
            &Bandwidth(vec![h]),
            &cfg,
            1000,
            &OracleConfig::default(),
        )
        .unwrap()
    };
    let (big, small) = (at(0.1), at(0.05));
    assert!((big.numerator / small.numerator / 2f64.sqrt() - 1.0).abs() < 0.01, "{}", big.numerator / small.numerator);
    assert!((big.denominator / small.denominator * 2f64.sqrt() - 1.0).abs() < 0.01, "{}", big.denominator / small.denominator);
}
