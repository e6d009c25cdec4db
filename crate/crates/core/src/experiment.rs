//! Estimator specifications shared by the command line and the Monte Carlo
//! risk studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{ContrastKind, ContrastSpec};
use crate::error::{Error, Result};
use crate::kernel::{default_kernels, Bandwidth, KernelSpec};
use crate::lepski::{
    build_net, build_net_with_range, select_bandwidth_aniso, select_bandwidth_iso, AnisoSelection, BandwidthNet, IsoSelection,
    LepskiConfig, NetKind, DEFAULT_EPSILON,
};
use crate::lpa::LocalDesign;
use crate::lpa::{fit_lpa, LpaConfig, LpaFit};
use crate::parametric::default_gamma_grid;
use crate::rng::mix;
use crate::simulate::{generate_replication, ModelSpec, SampleSet};
use crate::variance::{select_lambda_with, LambdaGrid, LambdaSelection, ResidualMode};

/// Bandwidth as a function of the sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BandwidthRule {
    Fixed {
        h: Vec<f64>,
    },
    /// `h_j = scale · n^{−exponent}` on every axis, capped at 1.
    Power {
        scale: f64,
        exponent: f64,
    },
}

impl BandwidthRule {
    pub fn resolve(&self, n: usize, d: usize) -> Result<Bandwidth> {
        match self {
            BandwidthRule::Fixed { h } => {
                if h.len() != d {
                    return Err(Error::Dimension { expected: d, got: h.len() });
                }
                Bandwidth::new(h.clone())
            }
            BandwidthRule::Power { scale, exponent } => Bandwidth::isotropic((scale * (n as f64).powf(-exponent)).min(1.0), d),
        }
    }
}

/// Contrast and kernel candidates; absent lists fall back to the MAD-based
/// Huber grid and the default kernel family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub huber: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arctan: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<Vec<f64>>>,
}

impl GridSpec {
    /// Resolves the grid; `window` supplies the responses used by the MAD default.
    pub fn resolve(&self, sample: &SampleSet, window: &Bandwidth, cfg: &LpaConfig) -> Result<LambdaGrid> {
        let kernels = match &self.kernels {
            Some(ks) => ks.iter().map(|s| KernelSpec::new(s.clone())).collect::<Result<Vec<_>>>()?,
            None => default_kernels(sample.d),
        };
        let mut contrasts = Vec::new();
        if self.huber.is_none() && self.arctan.is_none() {
            let local = LocalDesign::build(sample, &KernelSpec::symmetric(sample.d), window, cfg)?;
            for g in default_gamma_grid(&local.y) {
                contrasts.push(ContrastSpec::new(ContrastKind::Huber, g)?);
            }
        }
        for g in self.huber.iter().flatten() {
            contrasts.push(ContrastSpec::new(ContrastKind::Huber, *g)?);
        }
        for g in self.arctan.iter().flatten() {
            contrasts.push(ContrastSpec::new(ContrastKind::Arctan, *g)?);
        }
        LambdaGrid::new(contrasts, kernels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Overrides `ln^{6/d}(n)/n^{1/d}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_minus: Option<f64>,
    /// Overrides `1/ln n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_plus: Option<f64>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Default for NetSpec {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, h_minus: None, h_plus: None }
    }
}

impl NetSpec {
    pub fn build(&self, kind: NetKind, n: usize, d: usize) -> Result<BandwidthNet> {
        match (self.h_minus, self.h_plus) {
            (None, None) => build_net(kind, n, d, self.epsilon),
            (lo, hi) => {
                let (dlo, dhi) = crate::lepski::default_bandwidth_range(n, d);
                build_net_with_range(kind, n, d, self.epsilon, lo.unwrap_or(dlo), hi.unwrap_or(dhi))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Fixed {
        contrast: ContrastSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kernel_shift: Option<Vec<f64>>,
        bandwidth: BandwidthRule,
    },
    DAdaptive {
        #[serde(default)]
        grid: GridSpec,
        bandwidth: BandwidthRule,
        #[serde(default)]
        residual_mode: ResidualMode,
    },
    LepskiIso {
        #[serde(default)]
        grid: GridSpec,
        #[serde(default)]
        net: NetSpec,
        #[serde(default)]
        lepski: LepskiConfig,
    },
    LepskiAniso {
        #[serde(default)]
        grid: GridSpec,
        #[serde(default)]
        net: NetSpec,
        #[serde(default)]
        lepski: LepskiConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimateDetail {
    Fixed { fit: LpaFit },
    DAdaptive { selection: LambdaSelection },
    LepskiIso { net: BandwidthNet, selection: IsoSelection },
    LepskiAniso { net: BandwidthNet, selection: AnisoSelection },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateOutcome {
    pub estimate: f64,
    pub bandwidth: Bandwidth,
    pub contrast: ContrastSpec,
    pub kernel: KernelSpec,
    pub detail: EstimateDetail,
}

/// Runs the estimator described by `spec` at `cfg.x0`.
pub fn estimate_at(sample: &SampleSet, spec: &EstimatorSpec, cfg: &LpaConfig) -> Result<EstimateOutcome> {
    let n = sample.n();
    let d = sample.d;
    match spec {
        EstimatorSpec::Fixed { contrast, kernel_shift, bandwidth } => {
            let h = bandwidth.resolve(n, d)?;
            let kernel = match kernel_shift {
                Some(s) => KernelSpec::new(s.clone())?,
                None => KernelSpec::symmetric(d),
            };
            let fit = fit_lpa(sample, contrast, &kernel, &h, cfg)?;
            Ok(EstimateOutcome { estimate: fit.estimate, bandwidth: h, contrast: *contrast, kernel, detail: EstimateDetail::Fixed { fit } })
        }
        EstimatorSpec::DAdaptive { grid, bandwidth, residual_mode } => {
            let h = bandwidth.resolve(n, d)?;
            let lambda = grid.resolve(sample, &h, cfg)?;
            let selection = select_lambda_with(sample, &lambda, &h, cfg, *residual_mode)?;
            Ok(EstimateOutcome {
                estimate: selection.estimate(),
                bandwidth: h,
                contrast: selection.contrast,
                kernel: selection.kernel.clone(),
                detail: EstimateDetail::DAdaptive { selection },
            })
        }
        EstimatorSpec::LepskiIso { grid, net, lepski } => {
            let net = net.build(NetKind::Iso, n, d)?;
            let lambda = grid.resolve(sample, &Bandwidth(vec![net.h_plus; d]), cfg)?;
            let selection = select_bandwidth_iso(sample, &lambda, &net, cfg, lepski)?;
            Ok(EstimateOutcome {
                estimate: selection.estimate,
                bandwidth: selection.h.clone(),
                contrast: selection.contrast,
                kernel: selection.kernel.clone(),
                detail: EstimateDetail::LepskiIso { net, selection },
            })
        }
        EstimatorSpec::LepskiAniso { grid, net, lepski } => {
            let net = net.build(NetKind::Aniso, n, d)?;
            let lambda = grid.resolve(sample, &Bandwidth(vec![net.h_plus; d]), cfg)?;
            let selection = select_bandwidth_aniso(sample, &lambda, &net, cfg, lepski)?;
            Ok(EstimateOutcome {
                estimate: selection.estimate,
                bandwidth: selection.h.clone(),
                contrast: selection.contrast,
                kernel: selection.kernel.clone(),
                detail: EstimateDetail::LepskiAniso { net, selection },
            })
        }
    }
}

/// Outcome of one replication, kept small so that large studies stay cheap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub replication: u64,
    pub estimate: f64,
    pub error: f64,
    pub bandwidth: Vec<f64>,
    pub gamma: f64,
}

/// Seed of the `index`-th sample size of a study.
pub fn level_seed(seed: u64, index: usize) -> u64 {
    mix(seed, index as u64)
}

/// Replications `0..reps` at sample size `n`, in replication order.
pub fn run_replications(
    model: &ModelSpec,
    spec: &EstimatorSpec,
    cfg: &LpaConfig,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<ReplicationRecord>> {
    model.validate()?;
    let truth = model.target.eval(&cfg.x0);
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sample = generate_replication(model, n, seed, r)?;
            let out = estimate_at(&sample, spec, cfg)?;
            Ok(ReplicationRecord {
                replication: r,
                estimate: out.estimate,
                error: out.estimate - truth,
                bandwidth: out.bandwidth.0,
                gamma: out.contrast.gamma,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskRow {
    pub n: usize,
    pub replications: usize,
    /// `(1/R) Σ |f̂(x0) − f*(x0)|^q`.
    pub risk: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub q: f64,
    pub rows: Vec<RiskRow>,
    /// Least-squares slope of ln risk on ln n; absent with fewer than two
    /// levels or a zero risk.
    pub slope: Option<f64>,
    pub slope_std_error: Option<f64>,
}

pub fn risk_row(n: usize, errors: &[f64], q: f64) -> RiskRow {
    let losses: Vec<f64> = errors.iter().map(|e| e.abs().powf(q)).collect();
    let r = losses.len();
    let mean = losses.iter().sum::<f64>() / r as f64;
    let std_error = if r > 1 {
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        (var / r as f64).sqrt()
    } else {
        0.0
    };
    RiskRow { n, replications: r, risk: mean, std_error }
}

/// Ordinary least squares of `y` on `x`: `(slope, standard error)`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let k = x.len();
    if k < 2 || k != y.len() || x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let mx = x.iter().sum::<f64>() / k as f64;
    let my = y.iter().sum::<f64>() / k as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let se = if k > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
        (rss / (k - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some((slope, se))
}

pub fn risk_report(rows: Vec<RiskRow>, q: f64) -> RiskReport {
    let fit = if rows.iter().all(|r| r.risk > 0.0) {
        let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.risk.ln()).collect();
        least_squares_slope(&x, &y)
    } else {
        None
    };
    RiskReport { q, rows, slope: fit.map(|f| f.0), slope_std_error: fit.map(|f| f.1) }
}

/// Monte Carlo risk at each sample size; level `i` uses seed `mix(seed, i)`.
pub fn risk_study(
    model: &ModelSpec,
    spec: &EstimatorSpec,
    cfg: &LpaConfig,
    ns: &[usize],
    reps: usize,
    q: f64,
    seed: u64,
) -> Result<RiskReport> {
    if reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    if !(q > 0.0) {
        return Err(Error::Config("risk power q must be positive".into()));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let recs = run_replications(model, spec, cfg, n, reps, level_seed(seed, i))?;
        let errors: Vec<f64> = recs.iter().map(|r| r.error).collect();
        rows.push(risk_row(n, &errors, q));
    }
    Ok(risk_report(rows, q))
}

pub fn write_risk_csv<W: std::io::Write>(report: &RiskReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["n", "replications", "risk", "std_error"]).map_err(err)?;
    for r in &report.rows {
        out.write_record([r.n.to_string(), r.replications.to_string(), format!("{:?}", r.risk), format!("{:?}", r.std_error)])
            .map_err(err)?;
    }
    out.flush()?;
    Ok(())
}
