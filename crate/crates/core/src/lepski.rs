//! Lepski-type bandwidth selection: the isotropic rule for local polynomial
//! fits and the anisotropic rule for locally constant fits, which compares
//! each candidate against the auxiliary estimates at `h ∨ h′`.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::ContrastSpec;
use crate::error::{Error, Result};
use crate::kernel::{Bandwidth, KernelSpec};
use crate::lpa::{fit_local, fit_lpa, LocalDesign, LpaConfig};
use crate::variance::{b0_constant, select_lambda_with, EntropyConfig, LambdaGrid, ResidualMode, VarianceReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Iso,
    Aniso,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthNet {
    pub kind: NetKind,
    /// Ratio actually used, after any coarsening needed to keep `|members| ≤ n`.
    pub epsilon: f64,
    pub h_minus: f64,
    pub h_plus: f64,
    /// Per-axis levels `h⁺ε^k ≥ h₋`, descending.
    pub levels: Vec<f64>,
    pub members: Vec<Bandwidth>,
}

impl BandwidthNet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub const DEFAULT_EPSILON: f64 = 0.8;

/// `(h₋, h⁺) = (ln^{6/d}(n)/n^{1/d}, 1/ln n)`.
pub fn default_bandwidth_range(n: usize, d: usize) -> (f64, f64) {
    let ln = (n as f64).ln();
    (ln.powf(6.0 / d as f64) / (n as f64).powf(1.0 / d as f64), 1.0 / ln)
}

pub fn build_net(kind: NetKind, n: usize, d: usize, epsilon: f64) -> Result<BandwidthNet> {
    if n < 3 {
        return Err(Error::Domain(format!("bandwidth net needs n ≥ 3, got {n}")));
    }
    let (lo, hi) = default_bandwidth_range(n, d);
    build_net_with_range(kind, n, d, epsilon, lo, hi)
}

/// Geometric net over an explicit `[h₋, h⁺]`.
pub fn build_net_with_range(kind: NetKind, n: usize, d: usize, epsilon: f64, h_minus: f64, h_plus: f64) -> Result<BandwidthNet> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("net ratio must lie in (0, 1), got {epsilon}")));
    }
    if d == 0 || n == 0 {
        return Err(Error::Domain("net needs d ≥ 1 and n ≥ 1".into()));
    }
    if !(h_minus > 0.0 && h_minus < h_plus) {
        return Err(Error::NetEmpty { h_minus, h_plus });
    }
    if h_plus > 1.0 {
        return Err(Error::Domain(format!("h⁺ must not exceed 1, got {h_plus}")));
    }
    let mut eps = epsilon;
    loop {
        let levels = net_levels(eps, h_minus, h_plus);
        let size = match kind {
            NetKind::Iso => levels.len(),
            NetKind::Aniso => {
                let corner = usize::from(*levels.last().unwrap() > h_minus);
                levels.len().checked_pow(d as u32).map_or(usize::MAX, |c| c.saturating_add(corner))
            }
        };
        if size <= n || levels.len() == 1 {
            let members = match kind {
                NetKind::Iso => levels.iter().map(|&h| Bandwidth(vec![h; d])).collect(),
                NetKind::Aniso => aniso_members(&levels, d, h_minus),
            };
            return Ok(BandwidthNet { kind, epsilon: eps, h_minus, h_plus, levels, members });
        }
        eps *= eps;
    }
}

fn net_levels(eps: f64, h_minus: f64, h_plus: f64) -> Vec<f64> {
    let mut out = vec![h_plus];
    let mut k = 1;
    loop {
        let h = h_plus * eps.powi(k);
        if h < h_minus * (1.0 - 1e-12) {
            break;
        }
        out.push(h);
        k += 1;
    }
    out
}

fn aniso_members(levels: &[f64], d: usize, h_minus: f64) -> Vec<Bandwidth> {
    let mut members = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        members.push(Bandwidth(idx.iter().map(|&i| levels[i]).collect()));
        let mut j = d;
        while j > 0 {
            j -= 1;
            idx[j] += 1;
            if idx[j] < levels.len() {
                break;
            }
            idx[j] = 0;
            if j == 0 {
                j = usize::MAX;
                break;
            }
        }
        if j == usize::MAX {
            break;
        }
    }
    let corner = Bandwidth(vec![h_minus; d]);
    if !members.contains(&corner) {
        members.push(corner);
    }
    members
}

/// `11√(ln(n·|net|))`; the isotropic and anisotropic terms share this form.
pub fn iso_epsilon_term(n: usize, net_size: usize) -> f64 {
    11.0 * ((n as f64) * net_size as f64).ln().sqrt()
}

pub fn ani_epsilon_term(n: usize, net_size: usize) -> f64 {
    iso_epsilon_term(n, net_size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LepskiConfig {
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_multiplier")]
    pub threshold_multiplier: f64,
    /// Overrides the entropy constant `B₀`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_constant: Option<f64>,
    #[serde(default)]
    pub residual_mode: ResidualMode,
}

fn default_q() -> f64 {
    2.0
}
fn default_multiplier() -> f64 {
    1.0
}

impl Default for LepskiConfig {
    fn default() -> Self {
        Self { q: default_q(), threshold_multiplier: default_multiplier(), b_constant: None, residual_mode: ResidualMode::Own }
    }
}

impl LepskiConfig {
    pub fn with_multiplier(mut self, m: f64) -> Self {
        self.threshold_multiplier = m;
        self
    }

    pub fn with_b_constant(mut self, b: f64) -> Self {
        self.b_constant = Some(b);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.threshold_multiplier > 0.0) {
            return Err(Error::Config("threshold multiplier must be positive".into()));
        }
        Ok(())
    }

    fn b(&self, grid: &LambdaGrid, cfg: &LpaConfig, n: usize) -> Result<f64> {
        match self.b_constant {
            Some(b) => Ok(b),
            None => b0_constant(&EntropyConfig::for_grid(grid, cfg, n)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoTrace {
    pub h: f64,
    /// `None` when every λ was invalid or the window was empty at this h.
    pub estimate: Option<f64>,
    pub contrast: Option<ContrastSpec>,
    pub kernel: Option<KernelSpec>,
    pub v_hat: Option<f64>,
    /// `V̂(λ̂_h)/(n h^d)`.
    pub variance_term: Option<f64>,
    pub threshold: Option<f64>,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoSelection {
    pub h: Bandwidth,
    pub estimate: f64,
    pub contrast: ContrastSpec,
    pub kernel: KernelSpec,
    pub b_constant: f64,
    pub epsilon_term: f64,
    /// True when the variance term fails to decrease along increasing h.
    pub variance_non_monotone: bool,
    pub fallback: bool,
    pub traces: Vec<IsoTrace>,
}

/// For each net member: D-adaptive λ̂_h, the fit and its `V̂`; then the
/// largest h whose estimate stays within the threshold of every estimate at
/// a smaller admissible-candidate bandwidth.
pub fn select_bandwidth_iso(
    sample: &crate::simulate::SampleSet,
    grid: &LambdaGrid,
    net: &BandwidthNet,
    cfg: &LpaConfig,
    lepski: &LepskiConfig,
) -> Result<IsoSelection> {
    lepski.validate()?;
    if net.is_empty() {
        return Err(Error::NetEmpty { h_minus: net.h_minus, h_plus: net.h_plus });
    }
    let n = sample.n();
    let d = sample.d;
    let b = lepski.b(grid, cfg, n)?;
    let term = iso_epsilon_term(n, net.len());
    let scale = lepski.threshold_multiplier * 15.0 * std::f64::consts::SQRT_2 * (b + term);

    let mut members: Vec<&Bandwidth> = net.members.iter().collect();
    members.sort_by(|a, b| b.0[0].total_cmp(&a.0[0]));
    let fits: Vec<Result<Option<crate::variance::LambdaSelection>>> = members
        .par_iter()
        .map(|h| match select_lambda_with(sample, grid, h, cfg, lepski.residual_mode) {
            Ok(s) => Ok(Some(s)),
            Err(Error::AllInvalid) | Err(Error::EmptyWindow) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut traces = Vec::with_capacity(members.len());
    let mut selections = Vec::with_capacity(members.len());
    for (h, fit) in members.iter().zip(fits) {
        let sel = fit?;
        let hv = h.0[0];
        let trace = match &sel {
            Some(s) => {
                let var = s.report.v_hat / (n as f64 * hv.powi(d as i32));
                IsoTrace {
                    h: hv,
                    estimate: Some(s.estimate()),
                    contrast: Some(s.contrast),
                    kernel: Some(s.kernel.clone()),
                    v_hat: Some(s.report.v_hat),
                    variance_term: Some(var),
                    threshold: Some(scale * var.sqrt()),
                    admissible: false,
                }
            }
            None => IsoTrace {
                h: hv,
                estimate: None,
                contrast: None,
                kernel: None,
                v_hat: None,
                variance_term: None,
                threshold: None,
                admissible: false,
            },
        };
        traces.push(trace);
        selections.push(sel);
    }
    let usable: Vec<usize> = (0..traces.len()).filter(|&i| traces[i].estimate.is_some()).collect();
    if usable.is_empty() {
        return Err(Error::NetUnusable);
    }
    for (pos, &i) in usable.iter().enumerate() {
        let fi = traces[i].estimate.unwrap();
        let ok = usable[pos..].iter().all(|&j| (fi - traces[j].estimate.unwrap()).abs() <= traces[j].threshold.unwrap());
        traces[i].admissible = ok;
    }
    // along increasing h the variance term should not increase
    let variance_non_monotone = usable.windows(2).any(|w| traces[w[0]].variance_term.unwrap() > traces[w[1]].variance_term.unwrap());
    let (chosen, fallback) = match usable.iter().find(|&&i| traces[i].admissible) {
        Some(&i) => (i, false),
        None => (*usable.last().unwrap(), true),
    };
    let sel = selections[chosen].as_ref().expect("usable member has a selection");
    Ok(IsoSelection {
        h: members[chosen].clone(),
        estimate: sel.estimate(),
        contrast: sel.contrast,
        kernel: sel.kernel.clone(),
        b_constant: b,
        epsilon_term: term,
        variance_non_monotone,
        fallback,
        traces,
    })
}

/// `f̂^{h,h′} = f̂^{h∨h′}`, the locally constant fit at the coordinatewise maximum.
pub fn fit_lca_sup(
    sample: &crate::simulate::SampleSet,
    c: &ContrastSpec,
    k: &KernelSpec,
    h: &Bandwidth,
    h_prime: &Bandwidth,
    cfg: &LpaConfig,
) -> Result<f64> {
    require_local_constant(cfg)?;
    Ok(fit_lpa(sample, c, k, &h.join(h_prime), cfg)?.estimate)
}

fn require_local_constant(cfg: &LpaConfig) -> Result<()> {
    if cfg.degree != 0 {
        return Err(Error::Config(format!("anisotropic selection needs degree 0, got {}", cfg.degree)));
    }
    Ok(())
}

/// `V̂(ρ, K)` for the anisotropic rule: window residuals of the fit at `h⁺`,
/// penalty taken at the smallest bandwidth `h₋`.
pub fn aniso_variance(c: &ContrastSpec, residuals: &[f64], n: usize, d: usize, h_minus: f64, kernel_sup: f64) -> VarianceReport {
    let m = residuals.len().max(1) as f64;
    let nf = n as f64;
    let numerator_core = (residuals.iter().map(|r| c.rho_prime(*r).powi(2)).sum::<f64>() / m).sqrt();
    let penalty = c.rho_prime_sup() * kernel_sup * nf.ln().powi(2) / (nf * h_minus.powi(d as i32)).sqrt();
    let denominator = residuals.iter().map(|r| c.rho_second(*r)).sum::<f64>() / m;
    let denom_floor = (1.0 / m).max(1e-12);
    let valid = !residuals.is_empty() && denominator > denom_floor;
    let v_hat = if valid { ((numerator_core + penalty) / denominator).powi(2) } else { f64::INFINITY };
    VarianceReport { numerator_core, penalty, denominator, denom_floor, v_hat, valid }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnisoTrace {
    pub h: Vec<f64>,
    pub h_prime: Vec<f64>,
    pub estimate_join: f64,
    pub estimate_prime: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnisoSelection {
    pub h: Bandwidth,
    pub estimate: f64,
    pub contrast: ContrastSpec,
    pub kernel: KernelSpec,
    pub variance: VarianceReport,
    pub b_constant: f64,
    pub epsilon_term: f64,
    pub fallback: bool,
    pub traces: Vec<AnisoTrace>,
}

fn bandwidth_key(h: &Bandwidth) -> Vec<u64> {
    h.0.iter().map(|v| v.to_bits()).collect()
}

/// `true` when `a ≻ b` under the product order, ties to the larger h₁, then h₂, ….
fn precedes_strictly(a: &Bandwidth, b: &Bandwidth) -> bool {
    let (pa, pb) = (a.volume(), b.volume());
    if (pa - pb).abs() > 1e-12 * pa.max(pb) {
        return pa > pb;
    }
    for (x, y) in a.0.iter().zip(&b.0) {
        if x != y {
            return x > y;
        }
    }
    false
}

fn product_le(a: &Bandwidth, b: &Bandwidth) -> bool {
    let (pa, pb) = (a.volume(), b.volume());
    pa <= pb * (1.0 + 1e-12)
}

pub fn select_bandwidth_aniso(
    sample: &crate::simulate::SampleSet,
    grid: &LambdaGrid,
    net: &BandwidthNet,
    cfg: &LpaConfig,
    lepski: &LepskiConfig,
) -> Result<AnisoSelection> {
    lepski.validate()?;
    require_local_constant(cfg)?;
    grid.validate()?;
    if net.is_empty() {
        return Err(Error::NetEmpty { h_minus: net.h_minus, h_plus: net.h_plus });
    }
    let n = sample.n();
    let d = sample.d;
    let h_plus = Bandwidth(vec![net.h_plus; d]);

    // (ρ̂, K̂) from the residuals of the fits at h⁺
    let mut best: Option<(ContrastSpec, KernelSpec, VarianceReport)> = None;
    for k in &grid.kernels {
        let local = LocalDesign::build(sample, k, &h_plus, cfg)?;
        if local.effective_n() == 0 {
            continue;
        }
        for c in &grid.contrasts {
            let fit = fit_local(&local, c, cfg, None)?;
            let rep = aniso_variance(c, &local.residuals(&fit.coeffs), n, d, net.h_minus, k.sup_norm());
            if !rep.valid {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bc, bk, br)) => rep
                    .v_hat
                    .total_cmp(&br.v_hat)
                    .then(c.gamma.total_cmp(&bc.gamma))
                    .then(c.kind.cmp(&bc.kind))
                    .then_with(|| {
                        k.shift.iter().zip(&bk.shift).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .is_lt(),
            };
            if better {
                best = Some((*c, k.clone(), rep));
            }
        }
    }
    let (contrast, kernel, variance) = best.ok_or(Error::NetUnusable)?;

    let b = lepski.b(grid, cfg, n)?;
    let term = ani_epsilon_term(n, net.len());
    let scale = lepski.threshold_multiplier * 16.0 * (b + term);

    // every h ∨ h′ of grid members is again a member, so one fit per member suffices
    let mut needed: Vec<Bandwidth> = net.members.clone();
    for a in &net.members {
        for bb in &net.members {
            let j = a.join(bb);
            if !needed.contains(&j) {
                needed.push(j);
            }
        }
    }
    let estimates: Vec<Result<Option<f64>>> = needed
        .par_iter()
        .map(|h| match fit_lpa(sample, &contrast, &kernel, h, cfg) {
            Ok(f) => Ok(Some(f.estimate)),
            Err(Error::EmptyWindow) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut cache: HashMap<Vec<u64>, Option<f64>> = HashMap::new();
    for (h, e) in needed.iter().zip(estimates) {
        cache.insert(bandwidth_key(h), e?);
    }
    let usable: Vec<&Bandwidth> = net.members.iter().filter(|h| cache[&bandwidth_key(h)].is_some()).collect();
    if usable.is_empty() {
        return Err(Error::NetUnusable);
    }

    let mut traces = Vec::new();
    let mut chosen: Option<&Bandwidth> = None;
    for h in &usable {
        let mut ok = true;
        for hp in usable.iter().filter(|hp| product_le(hp, h)) {
            let join = cache[&bandwidth_key(&h.join(hp))].expect("join window contains the smaller window");
            let prime = cache[&bandwidth_key(hp)].unwrap();
            let threshold = scale * (variance.v_hat / (n as f64 * hp.volume())).sqrt();
            let pass = (join - prime).abs() <= threshold;
            ok &= pass;
            traces.push(AnisoTrace { h: h.0.clone(), h_prime: hp.0.clone(), estimate_join: join, estimate_prime: prime, threshold, pass });
        }
        if ok && chosen.is_none_or(|c| precedes_strictly(h, c)) {
            chosen = Some(h);
        }
    }
    let corner = Bandwidth(vec![net.h_minus; d]);
    let (h, fallback) = match chosen {
        Some(h) => (h.clone(), false),
        None => (corner, true),
    };
    let estimate = match cache.get(&bandwidth_key(&h)).copied().flatten() {
        Some(e) => e,
        None => fit_lpa(sample, &contrast, &kernel, &h, cfg)?.estimate,
    };
    Ok(AnisoSelection { h, estimate, contrast, kernel, variance, b_constant: b, epsilon_term: term, fallback, traces })
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:?}"))
}

pub fn write_iso_trace_csv<W: Write>(traces: &[IsoTrace], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["h", "estimate", "gamma", "kernel_shift", "v_hat", "variance_term", "threshold", "admissible"]).map_err(err)?;
    for t in traces {
        out.write_record([
            format!("{:?}", t.h),
            opt(t.estimate),
            opt(t.contrast.map(|c| c.gamma)),
            t.kernel.as_ref().map_or(String::new(), |k| join_f64(&k.shift)),
            opt(t.v_hat),
            opt(t.variance_term),
            opt(t.threshold),
            t.admissible.to_string(),
        ])
        .map_err(err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_aniso_trace_csv<W: Write>(traces: &[AnisoTrace], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["h", "h_prime", "estimate_join", "estimate_prime", "threshold", "pass"]).map_err(err)?;
    for t in traces {
        out.write_record([
            join_f64(&t.h),
            join_f64(&t.h_prime),
            format!("{:?}", t.estimate_join),
            format!("{:?}", t.estimate_prime),
            format!("{:?}", t.threshold),
            t.pass.to_string(),
        ])
        .map_err(err)?;
    }
    out.flush()?;
    Ok(())
}
