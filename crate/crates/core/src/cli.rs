//! The `robust-lpa` command line.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiment::{estimate_at, risk_study, write_risk_csv, EstimateDetail, EstimatorSpec, GridSpec, NetSpec};
use crate::kernel::{Bandwidth, KernelSpec};
use crate::lepski::{write_aniso_trace_csv, write_iso_trace_csv, LepskiConfig};
use crate::parametric::{adaptive_scale_location, default_gamma_grid, ContaminationSpec, LOCATION_TOLERANCE};
use crate::rng::{design_stream, noise_stream};
use crate::simulate::{generate_with_streams, SampleMetadata, SampleSet, SCHEMA_VERSION};
use crate::variance::{diagnostics, select_lambda_with, write_lambda_trace_csv, EntropyConfig, OracleConfig, SmoothnessSpec};

pub const THREADS_ENV: &str = "ROBUST_LPA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "robust-lpa", version, about = "Adaptive robust local polynomial estimation")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to ROBUST_LPA_THREADS, then to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threshold_multiplier: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub q: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one dataset per configured sample size.
    Simulate,
    /// Run the configured estimator at x0.
    Fit(DataArgs),
    /// D-adaptive choice of contrast and kernel at a fixed bandwidth.
    SelectLambda(DataArgs),
    /// Isotropic Lepski bandwidth selection.
    LepskiIso(DataArgs),
    /// Anisotropic Lepski bandwidth selection (locally constant).
    LepskiAniso(DataArgs),
    /// Sufficient-condition diagnostics from the model's closed form.
    Diagnose,
    /// Location estimation with a data-driven Huber scale.
    Parametric(DataArgs),
    /// Monte Carlo risk at each sample size and the fitted log-log slope.
    Rates,
}

#[derive(Debug, clap::Args)]
pub struct DataArgs {
    /// Dataset CSV; simulated from the configuration when absent.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = flag {
        return Ok(Some(t));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(cli.threads)? {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| dispatch(cli))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(q) = cli.q {
        cfg.q = q;
    }
    if let EstimatorSpec::LepskiIso { net, lepski, .. } | EstimatorSpec::LepskiAniso { net, lepski, .. } = &mut cfg.estimator {
        if let Some(m) = cli.threshold_multiplier {
            lepski.threshold_multiplier = m;
        }
        if let Some(e) = cli.epsilon {
            net.epsilon = e;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cli.out.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?))
}

/// Replication 0 at sample size `n`, honouring a separate noise seed.
pub fn simulate_dataset(cfg: &ExperimentConfig, n: usize) -> Result<SampleSet> {
    let model = cfg.model.resolve()?;
    let noise_seed = cfg.noise_seed.unwrap_or(cfg.seed);
    let mut s = generate_with_streams(&model, n, design_stream(cfg.seed, 0), noise_stream(noise_seed, 0))?;
    s.seed = Some(cfg.seed);
    Ok(s)
}

fn dataset(cfg: &ExperimentConfig, data: &DataArgs) -> Result<SampleSet> {
    match &data.data {
        Some(p) => {
            let f = File::open(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            let s = SampleSet::read_csv(f)?;
            if s.d != cfg.model.d {
                return Err(Error::Config(format!("dataset has d = {}, configuration has d = {}", s.d, cfg.model.d)));
            }
            Ok(s)
        }
        None => simulate_dataset(cfg, cfg.n[0]),
    }
}

fn lepski_parts(cfg: &ExperimentConfig) -> (GridSpec, NetSpec, LepskiConfig) {
    match &cfg.estimator {
        EstimatorSpec::LepskiIso { grid, net, lepski } | EstimatorSpec::LepskiAniso { grid, net, lepski } => {
            (grid.clone(), net.clone(), lepski.clone())
        }
        EstimatorSpec::DAdaptive { grid, .. } => (grid.clone(), NetSpec::default(), LepskiConfig::default()),
        EstimatorSpec::Fixed { .. } => (GridSpec::default(), NetSpec::default(), LepskiConfig::default()),
    }
}

fn apply_overrides(cli: &Cli, net: &mut NetSpec, lepski: &mut LepskiConfig) {
    if let Some(m) = cli.threshold_multiplier {
        lepski.threshold_multiplier = m;
    }
    if let Some(e) = cli.epsilon {
        net.epsilon = e;
    }
}

#[derive(Serialize)]
struct ParametricOutput {
    n: usize,
    estimate: f64,
    gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    contamination: Option<ContaminationSpec>,
    traces: Vec<crate::parametric::ScaleTrace>,
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(cli, &cfg)?;
    let lpa = cfg.lpa();
    match &cli.command {
        Command::Simulate => {
            for &n in &cfg.n {
                let s = simulate_dataset(&cfg, n)?;
                s.write_csv(create(&dir.join(format!("sample_n{n}.csv")))?)?;
                let meta = SampleMetadata {
                    schema_version: SCHEMA_VERSION,
                    n,
                    seed: cfg.seed,
                    replication: 0,
                    noise_seed: cfg.noise_seed,
                    model: cfg.model.clone(),
                };
                fs::write(dir.join(format!("sample_n{n}.toml")), meta.to_toml()?)?;
                println!("wrote sample_n{n}.csv");
            }
        }
        Command::Fit(data) => {
            let s = dataset(&cfg, data)?;
            let out = estimate_at(&s, &cfg.estimator, &lpa)?;
            write_json(&dir.join("fit.json"), &out)?;
            match &out.detail {
                EstimateDetail::DAdaptive { selection } => {
                    write_lambda_trace_csv(&selection.traces, create(&dir.join("lambda_trace.csv"))?)?
                }
                EstimateDetail::LepskiIso { selection, .. } => write_iso_trace_csv(&selection.traces, create(&dir.join("iso_trace.csv"))?)?,
                EstimateDetail::LepskiAniso { selection, .. } => {
                    write_aniso_trace_csv(&selection.traces, create(&dir.join("aniso_trace.csv"))?)?
                }
                EstimateDetail::Fixed { .. } => {}
            }
            println!("estimate {:?} at h = {:?}", out.estimate, out.bandwidth.0);
        }
        Command::SelectLambda(data) => {
            let s = dataset(&cfg, data)?;
            let (grid, h, mode) = match &cfg.estimator {
                EstimatorSpec::DAdaptive { grid, bandwidth, residual_mode } => {
                    (grid.clone(), bandwidth.resolve(s.n(), s.d)?, *residual_mode)
                }
                EstimatorSpec::Fixed { bandwidth, .. } => (GridSpec::default(), bandwidth.resolve(s.n(), s.d)?, Default::default()),
                _ => return Err(Error::Config("select-lambda needs an estimator with a bandwidth rule (fixed or d_adaptive)".into())),
            };
            let lambda = grid.resolve(&s, &h, &lpa)?;
            let sel = select_lambda_with(&s, &lambda, &h, &lpa, mode)?;
            write_json(&dir.join("select_lambda.json"), &sel)?;
            write_lambda_trace_csv(&sel.traces, create(&dir.join("lambda_trace.csv"))?)?;
            println!(
                "selected {:?} gamma {:?}, kernel shift {:?}, estimate {:?}",
                sel.contrast.kind,
                sel.contrast.gamma,
                sel.kernel.shift,
                sel.estimate()
            );
        }
        Command::LepskiIso(data) | Command::LepskiAniso(data) => {
            let s = dataset(&cfg, data)?;
            let (grid, mut net, mut lepski) = lepski_parts(&cfg);
            apply_overrides(cli, &mut net, &mut lepski);
            let (spec, name) = if matches!(cli.command, Command::LepskiIso(_)) {
                (EstimatorSpec::LepskiIso { grid, net, lepski }, "lepski_iso")
            } else {
                (EstimatorSpec::LepskiAniso { grid, net, lepski }, "lepski_aniso")
            };
            let out = estimate_at(&s, &spec, &lpa)?;
            write_json(&dir.join(format!("{name}.json")), &out)?;
            match &out.detail {
                EstimateDetail::LepskiIso { selection, .. } => write_iso_trace_csv(&selection.traces, create(&dir.join("iso_trace.csv"))?)?,
                EstimateDetail::LepskiAniso { selection, .. } => {
                    write_aniso_trace_csv(&selection.traces, create(&dir.join("aniso_trace.csv"))?)?
                }
                _ => unreachable!("lepski estimators only"),
            }
            println!("selected h = {:?}, estimate {:?}", out.bandwidth.0, out.estimate);
        }
        Command::Diagnose => {
            let spec = cfg.diagnose.as_ref().ok_or_else(|| Error::Config("diagnose needs a [diagnose] section".into()))?;
            let model = cfg.model.resolve()?;
            let h = Bandwidth::new(spec.bandwidth.clone())?;
            let k = match &spec.kernel_shift {
                Some(s) => KernelSpec::new(s.clone())?,
                None => KernelSpec::symmetric(cfg.model.d),
            };
            let holder = cfg.model.target.holder();
            let smooth = SmoothnessSpec { beta: spec.beta.unwrap_or(holder.beta), lipschitz: spec.lipschitz.unwrap_or(holder.lipschitz) };
            let g = spec.contrast.gamma;
            let entropy =
                EntropyConfig::new(cfg.box_bound, lpa.multi_indices().len(), g.min(1.0), g.max(1.0), cfg.n[0])?.with_g_inf(spec.g_inf)?;
            let rep = diagnostics(&model, &spec.contrast, &k, &h, &lpa, &entropy, &smooth, &OracleConfig::with_rule(spec.quadrature))?;
            write_json(&dir.join("diagnostics.json"), &rep)?;
            println!("phi_h {:?}; conditions 1/2/3: {}/{}/{}", rep.phi_h, rep.condition1_ok, rep.condition2_ok, rep.condition3_ok);
        }
        Command::Parametric(data) => {
            let s = dataset(&cfg, data)?;
            let spec = cfg.parametric.clone().unwrap_or_default();
            let gammas = spec.gammas.clone().unwrap_or_else(|| default_gamma_grid(&s.y));
            let fit = adaptive_scale_location(&s.y, &gammas, cfg.box_bound, LOCATION_TOLERANCE)?;
            let contamination = spec.r.map(ContaminationSpec::new).transpose()?;
            let out = ParametricOutput { n: s.n(), estimate: fit.estimate, gamma: fit.gamma, contamination, traces: fit.traces };
            write_json(&dir.join("parametric.json"), &out)?;
            println!("location {:?} with Huber scale {:?}", out.estimate, out.gamma);
        }
        Command::Rates => {
            let rep = risk_study(&cfg.model, &cfg.estimator, &lpa, &cfg.n, cfg.replications, cfg.q, cfg.seed)?;
            write_risk_csv(&rep, create(&dir.join("rates.csv"))?)?;
            write_json(&dir.join("rates.json"), &rep)?;
            match rep.slope {
                Some(s) => println!("log-log slope {s:.4}"),
                None => println!("slope unavailable"),
            }
        }
    }
    Ok(())
}
