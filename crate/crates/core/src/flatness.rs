//! Flatness estimators around a minimum, plus the bounds that relate them to
//! generalization.
//!
//! Each estimator works on any [`Objective`], so the same code measures
//! flatness over weights ([`WeightObjective`](crate::WeightObjective)) and over
//! basis-path values ([`PsiObjective`](crate::PsiObjective)).

use rayon::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Dataset, Mlp};
use crate::objective::{Objective, Space};
use crate::rng;

/// Above this dimension [`trace_flatness`] switches to Hutchinson probes.
pub const EXACT_TRACE_MAX_DIM: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Eps,
    Trace,
    Expected,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Measure::Eps => "eps",
            Measure::Trace => "trace",
            Measure::Expected => "expected",
        })
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps" => Ok(Measure::Eps),
            "trace" => Ok(Measure::Trace),
            "expected" => Ok(Measure::Expected),
            other => Err(Error::InvalidConfig(format!("unknown measure `{other}`"))),
        }
    }
}

/// Random-sample plus projected-ascent search for the ε-ball maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_random_samples: usize,
    pub n_ascent_restarts: usize,
    pub ascent_steps: usize,
    /// Initial ascent step as a fraction of the radius.
    pub step_size: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_random_samples: 64,
            n_ascent_restarts: 4,
            ascent_steps: 40,
            step_size: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    /// Exact diagonal up to [`EXACT_TRACE_MAX_DIM`], Hutchinson above.
    Auto,
    Exact,
    Hutchinson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessConfig {
    /// Ball radius ε.
    pub radius: f64,
    pub search: SearchConfig,
    /// Monte Carlo draws for the expected measure.
    pub mc_samples: usize,
    /// Standard deviation of the isotropic Gaussian perturbation.
    pub perturbation_sigma: f64,
    /// Finite-difference step for curvature.
    pub fd_step: f64,
    pub trace_mode: TraceMode,
    /// Rademacher probes in Hutchinson mode.
    pub hutchinson_probes: usize,
    pub seed: u64,
}

impl Default for FlatnessConfig {
    fn default() -> Self {
        Self {
            radius: 0.05,
            search: SearchConfig::default(),
            mc_samples: 200,
            perturbation_sigma: 0.01,
            fd_step: 1e-4,
            trace_mode: TraceMode::Auto,
            hutchinson_probes: 100,
            seed: 0,
        }
    }
}

impl FlatnessConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.search;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad("radius must be positive");
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return bad("fd_step must be positive");
        }
        if !(self.perturbation_sigma > 0.0 && self.perturbation_sigma.is_finite()) {
            return bad("perturbation_sigma must be positive");
        }
        if s.n_random_samples == 0
            || s.n_ascent_restarts == 0
            || s.ascent_steps == 0
            || self.mc_samples == 0
            || self.hutchinson_probes == 0
        {
            return bad("sample and step counts must be at least 1");
        }
        if !(s.step_size > 0.0 && s.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        Ok(())
    }
}

/// Result of one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub measure: Measure,
    pub space: Option<Space>,
    /// The measure as defined: normalized by `1 + l(center)` for the ε
    /// measure when requested.
    pub value: f64,
    /// Unnormalized numerator (largest loss increase for the ε measure).
    pub raw: f64,
    pub center_loss: f64,
    /// Monte Carlo standard error where the estimator is stochastic.
    pub std_error: Option<f64>,
    pub method: String,
    pub evaluations: usize,
    pub failed: usize,
    pub config: FlatnessConfig,
    pub seed: u64,
}

fn report(
    measure: Measure,
    obj: &dyn Objective,
    cfg: &FlatnessConfig,
    center_loss: f64,
) -> FlatnessReport {
    FlatnessReport {
        measure,
        space: obj.space(),
        value: 0.0,
        raw: 0.0,
        center_loss,
        std_error: None,
        method: String::new(),
        evaluations: 0,
        failed: 0,
        config: *cfg,
        seed: cfg.seed,
    }
}

fn check_center(obj: &dyn Objective, center: &[f64]) -> Result<f64> {
    if center.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: obj.dim(),
            got: center.len(),
        });
    }
    obj.value(center)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform draw from the ball of radius `radius` around `center`.
fn ball_point(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let dir = gaussian(rng, center.len());
    let n = norm(&dir);
    let r: f64 = radius * rng.random::<f64>().powf(1.0 / center.len() as f64);
    center
        .iter()
        .zip(&dir)
        .map(|(c, d)| c + d * r / n)
        .collect()
}

fn project_to_ball(x: &mut [f64], center: &[f64], radius: f64) {
    let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let n = norm(&d);
    if n > radius {
        for ((xi, ci), di) in x.iter_mut().zip(center).zip(&d) {
            *xi = ci + di * (radius / n);
        }
    }
}

/// Normalized projected gradient ascent inside the ball. Returns the best
/// value seen and the evaluation / failure counts.
fn ascend(
    obj: &dyn Objective,
    center: &[f64],
    start: Vec<f64>,
    cfg: &FlatnessConfig,
) -> (Option<f64>, usize, usize) {
    let (mut evals, mut failed) = (1, 0);
    let mut x = start;
    let mut fx = match obj.value(&x) {
        Ok(v) => v,
        Err(_) => return (None, 1, 1),
    };
    let mut step = cfg.search.step_size * cfg.radius;
    for _ in 0..cfg.search.ascent_steps {
        let g = match obj.gradient(&x) {
            Ok(g) => g,
            Err(_) => {
                failed += 1;
                break;
            }
        };
        let gn = norm(&g);
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b / gn).collect();
        project_to_ball(&mut y, center, cfg.radius);
        evals += 1;
        match obj.value(&y) {
            Ok(fy) if fy > fx => {
                x = y;
                fx = fy;
            }
            Ok(_) => step *= 0.5,
            Err(_) => {
                failed += 1;
                step *= 0.5;
            }
        }
        if step < 1e-6 * cfg.radius {
            break;
        }
    }
    (Some(fx), evals, failed)
}

/// Largest loss increase found in the ε-ball around `center`.
///
/// The search evaluates uniform ball samples and runs projected gradient
/// ascent from the center and from random interior points, so the reported
/// value is a lower bound on the true maximum. With `normalized` the value
/// is divided by `1 + l(center)`; otherwise it is the raw increase. Points
/// where the objective fails are skipped and counted.
pub fn eps_flatness(
    obj: &dyn Objective,
    center: &[f64],
    cfg: &FlatnessConfig,
    normalized: bool,
) -> Result<FlatnessReport> {
    cfg.validate()?;
    let l0 = check_center(obj, center)?;
    let s = cfg.search;

    let samples: Vec<Option<f64>> = (0..s.n_random_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(cfg.seed, k as u64);
            obj.value(&ball_point(&mut rng, center, cfg.radius)).ok()
        })
        .collect();

    let restarts: Vec<(Option<f64>, usize, usize)> = (0..s.n_ascent_restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                center.to_vec()
            } else {
                let mut rng = rng::stream(cfg.seed, (s.n_random_samples + r) as u64);
                ball_point(&mut rng, center, 0.5 * cfg.radius)
            };
            ascend(obj, center, start, cfg)
        })
        .collect();

    let mut best = l0;
    let mut evaluations = 1 + samples.len();
    let mut failed = samples.iter().filter(|v| v.is_none()).count();
    let mut any_ok = samples.iter().any(Option::is_some);
    for v in samples.into_iter().flatten() {
        best = best.max(v);
    }
    for (v, e, f) in restarts {
        evaluations += e;
        failed += f;
        if let Some(v) = v {
            any_ok = true;
            best = best.max(v);
        }
    }
    if !any_ok {
        return Err(Error::AllSamplesFailed(evaluations - 1));
    }
    let raw = best - l0;
    let mut rep = report(Measure::Eps, obj, cfg, l0);
    rep.raw = raw;
    rep.value = if normalized { raw / (1.0 + l0) } else { raw };
    rep.method = "random+ascent".into();
    rep.evaluations = evaluations;
    rep.failed = failed;
    Ok(rep)
}

/// Trace of the Hessian at `center`.
///
/// Exact mode sums central differences of the gradient along every
/// coordinate (second differences of the value when no exact gradient exists);
/// Hutchinson mode averages `z^T H z` over Rademacher probes, with `H z`
/// from central differences of the gradient.
pub fn trace_flatness(
    obj: &dyn Objective,
    center: &[f64],
    cfg: &FlatnessConfig,
) -> Result<FlatnessReport> {
    cfg.validate()?;
    let l0 = check_center(obj, center)?;
    let dim = center.len();
    let h = cfg.fd_step;
    let exact = match cfg.trace_mode {
        TraceMode::Exact => true,
        TraceMode::Hutchinson => false,
        TraceMode::Auto => dim <= EXACT_TRACE_MAX_DIM,
    };
    let mut rep = report(Measure::Trace, obj, cfg, l0);
    if exact {
        let analytic = obj.has_gradient();
        let terms: Vec<f64> = (0..dim)
            .into_par_iter()
            .map(|k| -> Result<f64> {
                let mut x = center.to_vec();
                x[k] = center[k] + h;
                let d2 = if analytic {
                    let up = obj.gradient(&x)?[k];
                    x[k] = center[k] - h;
                    (up - obj.gradient(&x)?[k]) / (2.0 * h)
                } else {
                    let up = obj.value(&x)?;
                    x[k] = center[k] - h;
                    (up - 2.0 * l0 + obj.value(&x)?) / (h * h)
                };
                if d2.is_finite() {
                    Ok(d2)
                } else {
                    Err(Error::NonFinite(format!("second difference along {k}")))
                }
            })
            .collect::<Result<_>>()?;
        rep.value = terms.iter().sum();
        rep.method = "exact-diagonal".into();
        rep.evaluations = 1 + 2 * dim;
    } else {
        let n = cfg.hutchinson_probes;
        let quad: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let mut rng = rng::stream(cfg.seed, r as u64);
                let z: Vec<f64> = (0..dim)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                let plus: Vec<f64> = center.iter().zip(&z).map(|(c, zi)| c + h * zi).collect();
                let minus: Vec<f64> = center.iter().zip(&z).map(|(c, zi)| c - h * zi).collect();
                let gp = obj.gradient(&plus)?;
                let gm = obj.gradient(&minus)?;
                let q: f64 = z
                    .iter()
                    .zip(gp.iter().zip(&gm))
                    .map(|(zi, (a, b))| zi * (a - b) / (2.0 * h))
                    .sum();
                if q.is_finite() {
                    Ok(q)
                } else {
                    Err(Error::NonFinite(format!("Hutchinson probe {r}")))
                }
            })
            .collect::<Result<_>>()?;
        let (mean, se) = mean_and_se(&quad);
        rep.value = mean;
        rep.std_error = Some(se);
        rep.method = "hutchinson".into();
        rep.evaluations = 1 + 2 * n;
    }
    rep.raw = rep.value;
    Ok(rep)
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `|E_u[l(center + u)] - l(center)|` with `u ~ N(0, sigma^2 I)`.
pub fn expected_flatness(
    obj: &dyn Objective,
    center: &[f64],
    cfg: &FlatnessConfig,
) -> Result<FlatnessReport> {
    cfg.validate()?;
    let l0 = check_center(obj, center)?;
    let sigma = cfg.perturbation_sigma;
    let diffs: Vec<Option<f64>> = (0..cfg.mc_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(cfg.seed, k as u64);
            let x: Vec<f64> = center
                .iter()
                .zip(gaussian(&mut rng, center.len()))
                .map(|(c, u)| c + sigma * u)
                .collect();
            obj.value(&x).ok().map(|v| v - l0)
        })
        .collect();
    let ok: Vec<f64> = diffs.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::AllSamplesFailed(diffs.len()));
    }
    let (mean, se) = mean_and_se(&ok);
    let mut rep = report(Measure::Expected, obj, cfg, l0);
    rep.value = mean.abs();
    rep.raw = mean;
    rep.std_error = Some(se);
    rep.method = "monte-carlo".into();
    rep.evaluations = 1 + diffs.len();
    rep.failed = diffs.len() - ok.len();
    Ok(rep)
}

/// Runs one measure by kind. The ε measure is reported normalized.
pub fn measure(
    kind: Measure,
    obj: &dyn Objective,
    center: &[f64],
    cfg: &FlatnessConfig,
) -> Result<FlatnessReport> {
    match kind {
        Measure::Eps => eps_flatness(obj, center, cfg, true),
        Measure::Trace => trace_flatness(obj, center, cfg),
        Measure::Expected => expected_flatness(obj, center, cfg),
    }
}

/// Gaussian standard deviation for which `||u|| <= radius` holds with
/// probability `mass` in dimension `dim`.
pub fn sigma_for_ball(dim: usize, radius: f64, mass: f64) -> Result<f64> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if dim == 0 || !(0.0 < mass && mass < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "need dim >= 1 and mass in (0, 1), got {dim}, {mass}"
        )));
    }
    let chi2 = ChiSquared::new(dim as f64)
        .map_err(|e| Error::InvalidConfig(format!("chi-squared: {e}")))?;
    Ok(radius / chi2.inverse_cdf(mass).sqrt())
}

/// Inputs of the basis-value flatness bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiBoundInputs {
    /// Bound on the L2 norm of every layer's input.
    pub c: f64,
    /// Lipschitz constant of the loss in the network output.
    pub c_l: f64,
    pub eps: f64,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiBound {
    pub psi: f64,
    pub bound: f64,
}

/// Upper bound on the largest loss increase within `eps` of the basis values.
///
/// `psi(v) = max_{s in 1..=L} eps^(s-1) * max|v|^(2L+1-s) / min|v|^(2L)` and
/// the bound is
/// `2 C C_L d0 d1^(L-1) dL (1 + 2^((3L+4)/2) (L-1) d1 dL psi(v)) eps`.
pub fn psi_bound(inp: &PsiBoundInputs) -> Result<PsiBound> {
    crate::net::validate_dims(&inp.dims)?;
    for (name, x) in [("C", inp.c), ("C_L", inp.c_l), ("eps", inp.eps)] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidConfig(format!("{name} must be positive, got {x}")));
        }
    }
    if inp.values.is_empty() {
        return Err(Error::InvalidConfig("no basis values".into()));
    }
    if let Some(index) = inp.values.iter().position(|&v| v == 0.0) {
        return Err(Error::SingularReconstruction { index });
    }
    let l = (inp.dims.len() - 2) as i32;
    let d0 = inp.dims[0] as f64;
    let d1 = inp.dims[1] as f64;
    let dl = inp.dims[inp.dims.len() - 1] as f64;
    let vmax = inp.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let vmin = inp.values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let psi = (1..=l)
        .map(|s| inp.eps.powi(s - 1) * vmax.powi(2 * l + 1 - s) / vmin.powi(2 * l))
        .fold(f64::NEG_INFINITY, f64::max);
    let growth = 2f64.powf(f64::from(3 * l + 4) / 2.0) * f64::from(l - 1) * d1 * dl * psi;
    let bound = 2.0 * inp.c * inp.c_l * d0 * d1.powi(l - 1) * dl * (1.0 + growth) * inp.eps;
    Ok(PsiBound { psi, bound })
}

/// Largest L2 norm of any layer input (the data itself or a hidden layer's
/// post-activation output) over the dataset.
pub fn layer_input_norm_bound(net: &Mlp, data: &Dataset) -> Result<f64> {
    let mut best = 0.0f64;
    let hidden = net.hidden_layers();
    for i in 0..data.len() {
        let x = data.input(i);
        best = best.max(norm(x));
        let mut h = x.to_vec();
        for l in 0..hidden {
            let (rows, cols) = (net.dims()[l + 1], net.dims()[l]);
            let w = net.layer(l);
            h = (0..rows)
                .map(|r| {
                    let z: f64 = w[r * cols..(r + 1) * cols].iter().zip(&h).map(|(a, b)| a * b).sum();
                    z.max(0.0)
                })
                .collect();
            best = best.max(norm(&h));
        }
    }
    Ok(best)
}

/// Whether every sample keeps its activation pattern between two networks.
pub fn activation_pattern_preserved(a: &Mlp, b: &Mlp, data: &Dataset) -> Result<bool> {
    for i in 0..data.len() {
        let (_, ra) = a.forward(data.input(i))?;
        let (_, rb) = b.forward(data.input(i))?;
        if ra != rb {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Isotropic Gaussian prior and posterior for the PAC-Bayes report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacBayesConfig {
    /// Training-set size.
    pub n: usize,
    pub delta: f64,
    pub sigma_prior: f64,
    pub sigma_posterior: f64,
}

impl PacBayesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if !(self.sigma_prior > 0.0 && self.sigma_posterior > 0.0)
            || !self.sigma_prior.is_finite()
            || !self.sigma_posterior.is_finite()
        {
            return Err(Error::InvalidConfig("Gaussian scales must be positive".into()));
        }
        Ok(())
    }
}

/// `KL(N(center, sq^2 I) || N(0, sp^2 I))`.
pub fn gaussian_kl(center: &[f64], sigma_posterior: f64, sigma_prior: f64) -> f64 {
    let k = center.len() as f64;
    let ratio = (sigma_posterior / sigma_prior).powi(2);
    let mean_term: f64 = center.iter().map(|v| v * v).sum::<f64>() / sigma_prior.powi(2);
    0.5 * (k * ratio + mean_term - k - k * ratio.ln())
}

/// Expected flatness plus the PAC-Bayes complexity term
/// `4 sqrt((KL + ln(2n / delta)) / n)`.
pub fn pac_bayes_bound(cfg: &PacBayesConfig, center: &[f64], expected_flatness: f64) -> Result<f64> {
    cfg.validate()?;
    let kl = gaussian_kl(center, cfg.sigma_posterior, cfg.sigma_prior);
    let n = cfg.n as f64;
    Ok(expected_flatness + 4.0 * ((kl + (2.0 * n / cfg.delta).ln()) / n).sqrt())
}
