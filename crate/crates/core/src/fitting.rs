//! Least-squares parameter extraction: exponential T1 fits, resonant-evolution
//! fits, the sinusoidal coupling profile and the idle Purcell sweep.

use crate::analytic::{self, Regime};
use crate::model::{ModelError, SystemParams, TimeSeries};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {need} data points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("parameter count mismatch: {0}")]
    Shape(String),
    #[error("initial value of {param} lies outside its bounds")]
    InitOutOfBounds { param: String },
    #[error("model does not depend on {param} (singular Jacobian)")]
    SingularJacobian { param: String },
    #[error("non-decaying data: no exponential time scale")]
    NonDecaying,
    #[error("no spectral peak and no decay in the data")]
    NoSignal,
    #[error("model produced a non-finite value")]
    NonFinite,
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub param_names: Vec<String>,
    pub values: Vec<f64>,
    /// One-sigma errors from `s²(JᵀJ)⁻¹` at the optimum.
    pub std_errors: Vec<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.values[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.std_errors[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqOptions {
    pub max_iter: usize,
    /// Relative decrease of the cost below which the fit has converged.
    pub ftol: f64,
    /// Infinity norm of the gradient below which the fit has converged.
    pub gtol: f64,
    pub initial_lambda: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-10,
            gtol: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

pub type Bounds = (f64, f64);

/// Unbounded interval.
pub const FREE: Bounds = (f64::NEG_INFINITY, f64::INFINITY);

fn residuals<F: Fn(f64, &[f64]) -> f64>(
    model: &F,
    data: &TimeSeries,
    p: &[f64],
    out: &mut [f64],
) -> Result<f64, FitError> {
    let mut cost = 0.0;
    for (k, (t, y)) in data.iter().enumerate() {
        let r = model(t, p) - y;
        if !r.is_finite() {
            return Err(FitError::NonFinite);
        }
        out[k] = r;
        cost += r * r;
    }
    Ok(0.5 * cost)
}

/// Central-difference Jacobian, one-sided where a bound is in the way.
fn jacobian<F: Fn(f64, &[f64]) -> f64>(
    model: &F,
    data: &TimeSeries,
    p: &[f64],
    scale: &[f64],
    bounds: &[Bounds],
) -> Result<DMatrix<f64>, FitError> {
    let n = data.len();
    let mut j = DMatrix::zeros(n, p.len());
    let mut q = p.to_vec();
    for c in 0..p.len() {
        let h = 6e-6 * p[c].abs().max(scale[c]);
        let (lo, hi) = bounds[c];
        let up = (p[c] + h).min(hi);
        let down = (p[c] - h).max(lo);
        let width = up - down;
        if width <= 0.0 {
            continue;
        }
        for (k, &t) in data.times.iter().enumerate() {
            q[c] = up;
            let f_up = model(t, &q);
            q[c] = down;
            let f_down = model(t, &q);
            let d = (f_up - f_down) / width;
            if !d.is_finite() {
                return Err(FitError::NonFinite);
            }
            j[(k, c)] = d;
        }
        q[c] = p[c];
    }
    Ok(j)
}

fn clamp(p: &mut [f64], bounds: &[Bounds]) {
    for (x, &(lo, hi)) in p.iter_mut().zip(bounds) {
        *x = x.clamp(lo, hi);
    }
}

/// Levenberg–Marquardt minimisation of `Σ (model(t_k, p) − y_k)²`.
///
/// Bounds are enforced by projecting every trial point. Convergence: relative
/// cost decrease below `ftol`, gradient below `gtol`, or an exact fit. When the
/// iteration budget runs out the best point is returned with
/// `converged = false`. Fully deterministic.
pub fn least_squares<F>(
    model: F,
    data: &TimeSeries,
    names: &[&str],
    init: &[f64],
    bounds: &[Bounds],
    opts: &LsqOptions,
) -> Result<FitResult, FitError>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let np = init.len();
    if names.len() != np || bounds.len() != np {
        return Err(FitError::Shape(format!(
            "{} names, {} initial values, {} bounds",
            names.len(),
            np,
            bounds.len()
        )));
    }
    if data.len() <= np {
        return Err(FitError::TooFewPoints {
            need: np + 1,
            got: data.len(),
        });
    }
    for (k, (&x, &(lo, hi))) in init.iter().zip(bounds).enumerate() {
        if !(x >= lo && x <= hi) {
            return Err(FitError::InitOutOfBounds {
                param: names[k].to_string(),
            });
        }
    }

    let n = data.len();
    let scale: Vec<f64> = init.iter().map(|x| x.abs().max(1e-6)).collect();
    let mut p = init.to_vec();
    let mut r = vec![0.0; n];
    let mut r_try = vec![0.0; n];
    let mut cost = residuals(&model, data, &p, &mut r)?;
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut converged = cost == 0.0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let j = jacobian(&model, data, &p, &scale, bounds)?;
        let rv = DVector::from_column_slice(&r);
        let grad = j.tr_mul(&rv);
        if grad.amax() < opts.gtol {
            converged = true;
            break;
        }
        let jtj = j.tr_mul(&j);
        let mut diag: Vec<f64> = (0..np).map(|c| jtj[(c, c)]).collect();
        if let Some(c) = diag.iter().position(|&d| d == 0.0) {
            let (lo, hi) = bounds[c];
            // a parameter pinned at a bound with no slope inward is legitimate
            if !(p[c] == lo || p[c] == hi) {
                return Err(FitError::SingularJacobian {
                    param: names[c].to_string(),
                });
            }
            diag[c] = 1.0;
        }

        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for c in 0..np {
                a[(c, c)] += lambda * diag[c];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            clamp(&mut trial, bounds);
            let trial_cost = residuals(&model, data, &trial, &mut r_try).unwrap_or(f64::INFINITY);
            if trial_cost < cost {
                let rel = (cost - trial_cost) / cost;
                p = trial;
                std::mem::swap(&mut r, &mut r_try);
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < opts.ftol || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no direction lowers the cost: a minimum to working precision
            converged = true;
        }
    }

    let std_errors = standard_errors(&model, data, &p, &scale, bounds, cost)?;
    Ok(FitResult {
        param_names: names.iter().map(|s| s.to_string()).collect(),
        values: p,
        std_errors,
        residual_rms: (2.0 * cost / n as f64).sqrt(),
        iterations,
        converged,
    })
}

fn standard_errors<F: Fn(f64, &[f64]) -> f64>(
    model: &F,
    data: &TimeSeries,
    p: &[f64],
    scale: &[f64],
    bounds: &[Bounds],
    cost: f64,
) -> Result<Vec<f64>, FitError> {
    let n = data.len();
    let np = p.len();
    let j = jacobian(model, data, p, scale, bounds)?;
    let s2 = 2.0 * cost / (n - np) as f64;
    Ok(match j.tr_mul(&j).try_inverse() {
        Some(cov) => (0..np)
            .map(|c| (s2 * cov[(c, c)]).max(0.0).sqrt())
            .collect(),
        None => vec![f64::INFINITY; np],
    })
}

/// Adds seeded Gaussian noise of standard deviation `sigma`.
pub fn add_noise(series: &TimeSeries, sigma: f64, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    TimeSeries {
        times: series.times.clone(),
        values: series
            .values
            .iter()
            .map(|v| v + normal.sample(&mut rng))
            .collect(),
        label: series.label.clone(),
    }
}

/// Fits `A·exp(−t/T1) + B`. Parameters are named `A`, `T1` (μs), `B`.
pub fn fit_exponential(data: &TimeSeries) -> Result<FitResult, FitError> {
    let n = data.len();
    if n < 4 {
        return Err(FitError::TooFewPoints { need: 4, got: n });
    }
    let tail = (n / 10).max(1);
    let b0 = data.values[n - tail..].iter().sum::<f64>() / tail as f64;
    let a0 = data.values[0] - b0;
    let spread = data
        .values
        .iter()
        .map(|v| (v - b0).abs())
        .fold(0.0, f64::max);
    if a0 == 0.0 || a0.abs() <= 1e-9 * spread.max(b0.abs()).max(f64::MIN_POSITIVE) {
        return Err(FitError::NonDecaying);
    }
    let t0 = data.times[0];
    let target = 1.0 / std::f64::consts::E;
    let t1 = data
        .iter()
        .find(|&(_, v)| (v - b0) / a0 <= target)
        .map(|(t, _)| t - t0)
        .filter(|&t| t > 0.0)
        .ok_or(FitError::NonDecaying)?;
    let span = data.times[n - 1] - t0;
    least_squares(
        move |t, p| p[0] * (-(t - t0) / p[1]).exp() + p[2],
        data,
        &["A", "T1", "B"],
        &[a0, t1, b0],
        &[FREE, (1e-9 * span, f64::INFINITY), FREE],
        &LsqOptions::default(),
    )
}

/// Resonant-evolution model used by [`fit_resonant_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResonantModel {
    /// Exact damped qubit–mode solution.
    #[default]
    Exact,
    /// The closed-form approximation [`analytic::pe_paper`].
    Approximate,
}

impl ResonantModel {
    fn eval(self, t: f64, g: f64, gamma_p: f64, kappa: f64) -> f64 {
        match self {
            ResonantModel::Exact => analytic::pe_exact(t, g, gamma_p, kappa),
            ResonantModel::Approximate => analytic::pe_paper_unchecked(t, g, gamma_p, kappa),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonantFit {
    /// Parameters `g` (non-negative, MHz), `kappa` (MHz), `amp`, `offset`.
    pub fit: FitResult,
    /// Whether the fitted parameters lie on the oscillatory side of the
    /// exceptional point.
    pub oscillatory: bool,
    /// Seed for `g` taken from the spectrum, if a peak was found.
    pub spectral_g: Option<f64>,
}

/// Fits `amp·P_e(t; |g|, κ, γ′) + offset` with γ′ held fixed.
pub fn fit_resonant(data: &TimeSeries, gamma_p_fixed: f64) -> Result<ResonantFit, FitError> {
    fit_resonant_with(data, gamma_p_fixed, ResonantModel::default())
}

pub fn fit_resonant_with(
    data: &TimeSeries,
    gamma_p: f64,
    model: ResonantModel,
) -> Result<ResonantFit, FitError> {
    let n = data.len();
    if n < 8 {
        return Err(FitError::TooFewPoints { need: 8, got: n });
    }
    let names = ["g", "kappa", "amp", "offset"];
    let bounds = [(0.0, f64::INFINITY), (0.0, f64::INFINITY), FREE, FREE];
    let t0 = data.times[0];
    let f = move |t: f64, p: &[f64]| p[2] * model.eval(t - t0, p[0], gamma_p, p[1]) + p[3];
    let opts = LsqOptions::default();

    let spectral_g = spectral_peak(data).map(|f| f / 2.0);
    let fit = match spectral_g {
        Some(g0) => {
            let kappa0 = envelope_kappa(data, g0, gamma_p);
            least_squares(
                f,
                data,
                &names,
                &[g0, kappa0, data.values[0], 0.0],
                &bounds,
                &opts,
            )?
        }
        None => {
            let rate = log_decay_rate(data).ok_or(FitError::NoSignal)?;
            if rate <= gamma_p {
                return Err(FitError::NoSignal);
            }
            // slow overdamped rate ≈ γ′ + 4g²/κ; try a spread of κ
            let mut best: Option<FitResult> = None;
            for kappa0 in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
                let g0 = ((rate - gamma_p) * kappa0 / 4.0).sqrt();
                let Ok(r) = least_squares(
                    f,
                    data,
                    &names,
                    &[g0, kappa0, data.values[0], 0.0],
                    &bounds,
                    &opts,
                ) else {
                    continue;
                };
                if best
                    .as_ref()
                    .is_none_or(|b| r.residual_rms < b.residual_rms)
                {
                    best = Some(r);
                }
            }
            best.ok_or(FitError::NoSignal)?
        }
    };
    let oscillatory = spectral_g.is_some()
        && analytic::classify_regime(fit.values[0], gamma_p, fit.values[1]).kind
            != Regime::OverdampedWeak;
    Ok(ResonantFit {
        fit,
        oscillatory,
        spectral_g,
    })
}

/// Frequency (MHz) of the strongest oscillation in the record.
///
/// The mean-removed trace is Hann-windowed and zero-padded. A candidate must
/// be a local maximum of the spectrum, lie at least one full cycle above zero
/// frequency and reach a tenth of the largest spectral magnitude; plain decays
/// only show window sidelobes and yield `None`.
fn spectral_peak(data: &TimeSeries) -> Option<f64> {
    let n = data.len();
    let span = data.times[n - 1] - data.times[0];
    let dt = span / (n - 1) as f64;
    let mean = data.values.iter().sum::<f64>() / n as f64;
    let padded = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = data
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
            Complex::new(w * (v - mean), 0.0)
        })
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(padded)
        .collect();
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let df = 1.0 / (padded as f64 * dt);
    let mags: Vec<f64> = buf[..padded / 2].iter().map(|z| z.norm()).collect();
    let global = mags.iter().cloned().fold(0.0, f64::max);
    let k_min = (1.0 / (span * df)).ceil() as usize;
    let (k, m) = (k_min.max(1)..mags.len() - 1)
        .filter(|&k| mags[k] > mags[k - 1] && mags[k] >= mags[k + 1])
        .map(|k| (k, mags[k]))
        .fold((0, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
    (k > 0 && m >= 0.1 * global).then_some(k as f64 * df)
}

/// κ from the decay of the cos² maxima at `t = k/(2g)`.
fn envelope_kappa(data: &TimeSeries, g: f64, gamma_p: f64) -> f64 {
    let t0 = data.times[0];
    let span = data.times[data.len() - 1] - t0;
    let half_period = 1.0 / (2.0 * g);
    let mut pts = Vec::new();
    let mut k = 0.0;
    while k * half_period <= span {
        let target = t0 + k * half_period;
        let i = data
            .times
            .partition_point(|&t| t < target)
            .min(data.len() - 1);
        if data.values[i] > 1e-3 {
            pts.push((data.times[i] - t0, data.values[i].ln()));
        }
        k += 1.0;
    }
    match linear_fit(&pts) {
        Some((slope, _)) => (-slope / PI - gamma_p).max(1e-3),
        None => 1.0,
    }
}

/// Population decay rate (MHz) from a log-linear fit over the positive part.
fn log_decay_rate(data: &TimeSeries) -> Option<f64> {
    let peak = data.values.iter().cloned().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = data
        .iter()
        .filter(|&(_, v)| v > 0.05 * peak)
        .map(|(t, v)| (t, v.ln()))
        .collect();
    linear_fit(&pts).map(|(slope, _)| -slope / (2.0 * PI))
}

/// Ordinary least-squares line `y = a·x + b`, returning `(a, b)`.
fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = sxy / sxx;
    Some((a, my - a * mx))
}

/// Fits `g0·sin(πm/2 + φ)` to signed couplings. Returns `g0 ≥ 0` and
/// `φ ∈ (−π, π]`. The phase is seeded from a grid, so the result does not
/// depend on a starting guess.
pub fn fit_coupling_profile(gs: &[(u32, f64)]) -> Result<FitResult, FitError> {
    if gs.len() < 3 {
        return Err(FitError::TooFewPoints {
            need: 3,
            got: gs.len(),
        });
    }
    let mut pts = gs.to_vec();
    pts.sort_by_key(|p| p.0);
    let data = TimeSeries::new(
        pts.iter().map(|p| p.0 as f64).collect(),
        pts.iter().map(|p| p.1).collect(),
        "coupling profile",
    )?;
    let model = |m: f64, p: &[f64]| p[0] * (0.5 * PI * m + p[1]).sin();

    // for fixed φ the best g0 is a linear projection
    let mut seed = (0.0, 0.0, f64::INFINITY);
    for k in 0..72 {
        let phi = -PI + (k as f64 + 0.5) * PI / 36.0;
        let s: Vec<f64> = data
            .times
            .iter()
            .map(|&m| (0.5 * PI * m + phi).sin())
            .collect();
        let ss: f64 = s.iter().map(|x| x * x).sum();
        if ss == 0.0 {
            continue;
        }
        let g0 = s.iter().zip(&data.values).map(|(a, b)| a * b).sum::<f64>() / ss;
        let cost: f64 = s
            .iter()
            .zip(&data.values)
            .map(|(a, y)| (g0 * a - y).powi(2))
            .sum();
        if cost < seed.2 {
            seed = (g0, phi, cost);
        }
    }
    if seed.2 == f64::INFINITY {
        return Err(FitError::Degenerate(
            "profile is identically zero on these modes".into(),
        ));
    }
    let (g0, phi) = if seed.0 < 0.0 {
        (-seed.0, seed.1 + PI)
    } else {
        (seed.0, seed.1)
    };
    let mut fit = least_squares(
        model,
        &data,
        &["g0", "phi"],
        &[g0, phi],
        &[FREE, FREE],
        &LsqOptions::default(),
    )?;
    if fit.values[0] < 0.0 {
        fit.values[0] = -fit.values[0];
        fit.values[1] += PI;
    }
    fit.values[1] = wrap_phase(fit.values[1]);
    Ok(fit)
}

/// Maps an angle into (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let mut x = phi.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Fits the idle decay rate against a coupling scale factor `s`,
/// `γ(s) = s²·Σ_m (ĝ_m/(f_m − f_idle))²·κ_m + γ0`, where `profile` holds the
/// relative couplings `ĝ_m` in the order of `params.modes`.
///
/// The model is linear in `s²`, so it is solved in closed form. Parameters:
/// `gamma0` (MHz), `slope` (MHz per unit s²) and `coupling_scale`, the factor
/// `c` such that the physical couplings are `c·s·ĝ_m`.
pub fn fit_purcell(
    points: &[(f64, f64)],
    profile: &[f64],
    params: &SystemParams,
    f_idle: f64,
) -> Result<FitResult, FitError> {
    if profile.len() != params.modes.len() {
        return Err(FitError::Shape(format!(
            "{} profile entries for {} modes",
            profile.len(),
            params.modes.len()
        )));
    }
    if points.len() < 2 {
        return Err(FitError::TooFewPoints {
            need: 2,
            got: points.len(),
        });
    }
    let mut sum = 0.0;
    for (m, g) in params.modes.iter().zip(profile) {
        let d = m.f - f_idle;
        if d == 0.0 {
            return Err(FitError::Degenerate(format!(
                "idle frequency on mode {}",
                m.index
            )));
        }
        sum += (g / d).powi(2) * m.kappa;
    }
    if sum == 0.0 {
        return Err(FitError::Degenerate("profile has no Purcell weight".into()));
    }

    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0 * p.0).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::Degenerate("all scale values are equal".into()));
    }
    let sxy: f64 = xs
        .iter()
        .zip(points)
        .map(|(x, p)| (x - mx) * (p.1 - my))
        .sum();
    let slope = sxy / sxx;
    let gamma0 = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(points)
        .map(|(x, p)| (p.1 - slope * x - gamma0).powi(2))
        .sum();

    let dof = points.len() as f64 - 2.0;
    let s2 = if dof > 0.0 { ssr / dof } else { 0.0 };
    let se_slope = (s2 / sxx).sqrt();
    let se_gamma0 = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    let scale = (slope.max(0.0) / sum).sqrt();
    let se_scale = if scale > 0.0 {
        se_slope / (2.0 * (slope * sum).sqrt())
    } else {
        f64::INFINITY
    };
    Ok(FitResult {
        param_names: vec!["gamma0".into(), "slope".into(), "coupling_scale".into()],
        values: vec![gamma0, slope, scale],
        std_errors: vec![se_gamma0, se_slope, se_scale],
        residual_rms: (ssr / n).sqrt(),
        iterations: 0,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linspace;
    use crate::presets::{self, GmonBias};

    fn series(times: Vec<f64>, f: impl Fn(f64) -> f64) -> TimeSeries {
        let values = times.iter().map(|&t| f(t)).collect();
        TimeSeries::new(times, values, "synthetic").unwrap()
    }

    #[test]
    fn line_fit_is_exact() {
        let data = series(linspace(0.0, 5.0, 20), |t| 2.5 * t - 1.0);
        let r = least_squares(
            |t, p| p[0] * t + p[1],
            &data,
            &["a", "b"],
            &[0.0, 0.0],
            &[FREE, FREE],
            &LsqOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.values[0] - 2.5).abs() < 1e-9 && (r.values[1] + 1.0).abs() < 1e-9);
        assert!(r.residual_rms < 1e-9);
    }

    #[test]
    fn starting_at_optimum_stops_quickly() {
        let data = add_noise(&series(linspace(0.0, 5.0, 50), |t| 2.5 * t - 1.0), 0.1, 7);
        let first = least_squares(
            |t, p| p[0] * t + p[1],
            &data,
            &["a", "b"],
            &[0.0, 0.0],
            &[FREE, FREE],
            &LsqOptions::default(),
        )
        .unwrap();
        let again = least_squares(
            |t, p| p[0] * t + p[1],
            &data,
            &["a", "b"],
            &first.values,
            &[FREE, FREE],
            &LsqOptions::default(),
        )
        .unwrap();
        assert!(
            again.converged && again.iterations <= 2,
            "{}",
            again.iterations
        );
        let exact = series(linspace(0.0, 5.0, 20), |t| 2.5 * t - 1.0);
        let at = least_squares(
            |t, p| p[0] * t + p[1],
            &exact,
            &["a", "b"],
            &[2.5, -1.0],
            &[FREE, FREE],
            &LsqOptions::default(),
        )
        .unwrap();
        assert!(at.converged && at.iterations <= 2);
    }

    #[test]
    fn least_squares_errors() {
        let data = series(linspace(0.0, 1.0, 10), |t| t);
        assert!(matches!(
            least_squares(
                |t, p| p[0] * t,
                &data,
                &["a"],
                &[5.0],
                &[(0.0, 1.0)],
                &LsqOptions::default()
            ),
            Err(FitError::InitOutOfBounds { .. })
        ));
        assert!(matches!(
            least_squares(
                |t, p| p[0] * t,
                &data,
                &["a", "b"],
                &[2.0, 1.0],
                &[FREE, FREE],
                &LsqOptions::default()
            ),
            Err(FitError::SingularJacobian { .. })
        ));
        let short = series(vec![0.0, 1.0], |t| t);
        assert!(matches!(
            least_squares(
                |t, p| p[0] * t + p[1],
                &short,
                &["a", "b"],
                &[1.0, 1.0],
                &[FREE, FREE],
                &LsqOptions::default()
            ),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn bounds_are_respected() {
        let data = series(linspace(0.0, 1.0, 10), |t| -3.0 * t);
        let r = least_squares(
            |t, p| p[0] * t,
            &data,
            &["a"],
            &[1.0],
            &[(0.0, 10.0)],
            &LsqOptions::default(),
        )
        .unwrap();
        assert_eq!(r.values[0], 0.0);
    }

    #[test]
    fn exponential_noise_free_is_exact() {
        let data = series(linspace(0.0, 60.0, 200), |t| (-t / 15.0).exp());
        let r = fit_exponential(&data).unwrap();
        assert!((r.value("T1").unwrap() - 15.0).abs() / 15.0 < 1e-6);
    }

    #[test]
    fn exponential_rejects_flat_data() {
        let data = series(linspace(0.0, 10.0, 20), |_| 0.4);
        assert_eq!(fit_exponential(&data), Err(FitError::NonDecaying));
        let short = series(linspace(0.0, 1.0, 3), |t| (-t).exp());
        assert!(matches!(
            fit_exponential(&short),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn exponential_with_offset_and_noise() {
        let clean = series(linspace(0.0, 6.0, 150), |t| 0.95 * (-t / 1.2).exp() + 0.05);
        let r = fit_exponential(&add_noise(&clean, 0.01, 3)).unwrap();
        assert!((r.value("T1").unwrap() - 1.2).abs() / 1.2 < 0.03);
        assert!((r.value("A").unwrap() - 0.95).abs() < 0.03);
    }

    #[test]
    fn fits_are_bitwise_deterministic() {
        let data = add_noise(
            &series(linspace(0.0, 3.0, 301), |t| {
                analytic::pe_exact(t, 1.67, 0.0137, 0.78)
            }),
            0.01,
            11,
        );
        let a = fit_resonant(&data, 0.0137).unwrap();
        let b = fit_resonant(&data, 0.0137).unwrap();
        assert_eq!(a, b);
        let bits = |r: &ResonantFit| r.fit.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn resonant_fit_recovers_mode_six() {
        let data = series(linspace(0.0, 3.0, 301), |t| {
            analytic::pe_exact(t, 1.67, 0.0137, 0.78)
        });
        let r = fit_resonant(&add_noise(&data, 0.01, 5), 0.0137).unwrap();
        assert!(r.oscillatory);
        assert!((r.fit.values[0] - 1.67).abs() / 1.67 < 0.02);
        assert!((r.fit.values[1] - 0.78).abs() / 0.78 < 0.1);
    }

    #[test]
    fn approximate_model_recovers_its_own_data() {
        let data = series(linspace(0.0, 3.0, 301), |t| {
            analytic::pe_paper(t, 1.67, 0.0137, 0.78).unwrap()
        });
        let r = fit_resonant_with(&data, 0.0137, ResonantModel::Approximate).unwrap();
        assert!((r.fit.values[0] - 1.67).abs() < 1e-6);
        assert!((r.fit.values[1] - 0.78).abs() < 1e-6);
    }

    #[test]
    fn amplitude_absorbs_scale() {
        let data = series(linspace(0.0, 3.0, 301), |t| {
            analytic::pe_exact(t, 1.67, 0.0137, 0.78)
        });
        let scaled = series(data.times.clone(), |t| {
            0.9 * analytic::pe_exact(t, 1.67, 0.0137, 0.78)
        });
        let a = fit_resonant(&data, 0.0137).unwrap().fit;
        let b = fit_resonant(&scaled, 0.0137).unwrap().fit;
        assert!((a.values[0] - b.values[0]).abs() < 1e-6);
        assert!((a.values[1] - b.values[1]).abs() < 1e-6);
        assert!((b.values[2] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn overdamped_trace_is_flagged() {
        let data = series(linspace(0.0, 10.0, 501), |t| {
            analytic::pe_exact(t, 0.05, 0.0122, 2.5)
        });
        let r = fit_resonant(&add_noise(&data, 0.01, 9), 0.0122).unwrap();
        assert!(!r.oscillatory);
        assert!(r.spectral_g.is_none());
        let se = r.fit.std_errors[0];
        assert!(
            se > 0.1 * r.fit.values[0] || !se.is_finite(),
            "se {se} g {}",
            r.fit.values[0]
        );
    }

    #[test]
    fn resonant_rejects_flat_data() {
        let data = series(linspace(0.0, 3.0, 100), |_| 0.5);
        assert_eq!(fit_resonant(&data, 0.0137), Err(FitError::NoSignal));
    }

    #[test]
    fn coupling_profile_exact_and_flipped() {
        let pts: Vec<(u32, f64)> = (1..=7)
            .map(|m| (m, analytic::coupling_profile(m, 1.5, 0.3)))
            .collect();
        let r = fit_coupling_profile(&pts).unwrap();
        assert!((r.values[0] - 1.5).abs() < 1e-6 && (r.values[1] - 0.3).abs() < 1e-6);
        let flipped: Vec<(u32, f64)> = pts.iter().map(|&(m, g)| (m, -g)).collect();
        let f = fit_coupling_profile(&flipped).unwrap();
        assert!((f.values[0] - 1.5).abs() < 1e-6);
        assert!((wrap_phase(f.values[1] - r.values[1]).abs() - PI).abs() < 1e-6);
        assert!(fit_coupling_profile(&pts[..2]).is_err());
    }

    #[test]
    fn coupling_profile_on_measured_couplings() {
        let pts: Vec<(u32, f64)> = (1..=7)
            .map(|m| (m, presets::COUPLING_VG_075_MHZ[m as usize - 1]))
            .collect();
        let r = fit_coupling_profile(&pts).unwrap();
        assert!(r.residual_rms <= 0.25);
        for &(m, g) in &pts {
            assert_eq!(
                analytic::coupling_profile(m, r.values[0], r.values[1]) > 0.0,
                g > 0.0
            );
        }
    }

    #[test]
    fn purcell_two_points_and_zero_scale() {
        let p = presets::device(GmonBias::Off);
        let profile = presets::COUPLING_VG_075_MHZ.to_vec();
        let truth = |s: f64| {
            let mut q = presets::device(GmonBias::MaxCoupling);
            for m in &mut q.modes {
                m.g *= s;
            }
            analytic::purcell_idle(&q, 4768.5, 0.0122).unwrap()
        };
        let r = fit_purcell(
            &[(0.5, truth(0.5)), (1.0, truth(1.0))],
            &profile,
            &p,
            4768.5,
        )
        .unwrap();
        assert!((r.values[0] - 0.0122).abs() < 1e-12);
        assert!((r.values[2] - 1.0).abs() < 1e-9);
        let pts: Vec<(f64, f64)> = [0.0, 0.3, 0.7, 1.1]
            .iter()
            .map(|&s| (s, truth(s)))
            .collect();
        let z = fit_purcell(&pts, &profile, &p, 4768.5).unwrap();
        assert!((z.values[0] - pts[0].1).abs() < 1e-12);
        assert!(fit_purcell(&[(0.5, 0.1), (0.5, 0.2)], &profile, &p, 4768.5).is_err());
    }
}
