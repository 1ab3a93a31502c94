//! Intrinsic reset through a lossy acoustic mode: reset-time sweeps against
//! coupling strength and the Purcell cost of that coupling at the idle point.

use crate::analytic;
use crate::engine::{self, EngineError, EvolveOptions, Hygiene};
use crate::model::{linspace, HilbertSpec, ModeParams, QubitParams, SystemParams, TimeSeries};
use crate::presets;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResetError {
    #[error("invalid reset configuration: {0}")]
    Config(String),
    #[error("empty population trace")]
    EmptySeries,
    #[error("{name} must be non-zero")]
    Zero { name: &'static str },
    #[error("impact level must be positive, got {0}")]
    Level(f64),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResetConfig {
    /// Intrinsic qubit decay, MHz.
    pub gamma: f64,
    /// Reset-mode decay, MHz.
    pub kappa_r: f64,
    /// Qubit–reset-mode detuning at the idle point, MHz.
    pub delta_r: f64,
    /// Coupling ratios g_r/κ_r to sweep.
    pub ratios: Vec<f64>,
    /// Ground-state fidelity levels in (0, 1).
    pub thresholds: Vec<f64>,
    /// Simulated window, μs.
    pub t_max: f64,
    /// Sample spacing, μs.
    pub dt: f64,
}

impl Default for ResetConfig {
    fn default() -> Self {
        Self {
            gamma: presets::RESET_GAMMA_MHZ,
            kappa_r: presets::RESET_KAPPA_MHZ,
            delta_r: presets::RESET_DELTA_MHZ,
            ratios: log_ratio_grid(1e-2, 1e2, 81),
            thresholds: vec![0.99, 0.999],
            t_max: 20.0,
            dt: 1e-3,
        }
    }
}

impl ResetConfig {
    pub fn validate(&self) -> Result<(), ResetError> {
        let bad = |m: String| Err(ResetError::Config(m));
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if !(self.kappa_r > 0.0) {
            return bad(format!("kappa_r must be positive, got {}", self.kappa_r));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("ratios must be a non-empty list of positive numbers".into());
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("thresholds must lie in (0, 1)".into());
        }
        if !(self.t_max > 0.0) || !(self.dt > 0.0) || self.dt > self.t_max {
            return bad("need 0 < dt <= t_max".into());
        }
        Ok(())
    }

    fn times(&self) -> Vec<f64> {
        let n = (self.t_max / self.dt).round() as usize + 1;
        linspace(0.0, self.dt * (n - 1) as f64, n)
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_ratio_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.log10(), hi.log10(), n)
        .into_iter()
        .map(|e| 10f64.powf(e))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResetTime {
    /// μs.
    Reached(f64),
    Unreached,
}

impl ResetTime {
    pub fn us(self) -> Option<f64> {
        match self {
            ResetTime::Reached(t) => Some(t),
            ResetTime::Unreached => None,
        }
    }

    /// Time in μs with `+∞` for unreached.
    pub fn or_inf(self) -> f64 {
        self.us().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetSweepRow {
    pub ratio: f64,
    /// One entry per configured threshold.
    pub reset_times: Vec<ResetTime>,
}

/// Earliest sample after which the ground population never again drops
/// below `threshold`.
pub fn reset_time(pg: &TimeSeries, threshold: f64) -> Result<ResetTime, ResetError> {
    if pg.is_empty() {
        return Err(ResetError::EmptySeries);
    }
    match pg.values.iter().rposition(|&v| v < threshold) {
        None => Ok(ResetTime::Reached(pg.times[0])),
        Some(k) if k + 1 == pg.len() => Ok(ResetTime::Unreached),
        Some(k) => Ok(ResetTime::Reached(pg.times[k + 1])),
    }
}

/// How the qubit population is computed during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Dynamics {
    /// Closed-form single-excitation solution.
    #[default]
    Exact,
    /// Full master-equation integration.
    Engine(EvolveOptions),
}

/// Qubit ground population `1 − P_e` from `|e,0⟩` with `g = ratio·κ_r`.
pub fn ground_population(
    cfg: &ResetConfig,
    ratio: f64,
    dynamics: Dynamics,
) -> Result<(TimeSeries, Option<Hygiene>), ResetError> {
    let times = cfg.times();
    let g = ratio * cfg.kappa_r;
    let label = format!("P_g ratio {ratio}");
    match dynamics {
        Dynamics::Exact => {
            let values = times
                .iter()
                .map(|&t| 1.0 - analytic::pe_exact(t, g, cfg.gamma, cfg.kappa_r))
                .collect();
            Ok((
                TimeSeries {
                    times,
                    values,
                    label,
                },
                None,
            ))
        }
        Dynamics::Engine(opts) => {
            let params = SystemParams {
                qubit: QubitParams {
                    f01: 5000.0,
                    ec: presets::EC_MHZ,
                    gamma: cfg.gamma,
                },
                modes: vec![ModeParams {
                    index: 1,
                    f: 5000.0,
                    kappa: cfg.kappa_r,
                    g,
                }],
            };
            let spec = HilbertSpec::new(2, vec![2]).map_err(EngineError::from)?;
            let run = engine::simulate_resonant_pe_with(&params, &spec, 1, &times, &opts)?;
            let values = run.series.values.iter().map(|p| 1.0 - p).collect();
            Ok((
                TimeSeries {
                    times,
                    values,
                    label,
                },
                Some(run.hygiene),
            ))
        }
    }
}

/// Reset times for every ratio and threshold, computed in parallel and
/// returned in ratio order.
pub fn sweep_reset(cfg: &ResetConfig) -> Result<Vec<ResetSweepRow>, ResetError> {
    Ok(sweep_reset_with(cfg, Dynamics::Exact)?.0)
}

/// [`sweep_reset`] with a choice of dynamics. The merged engine hygiene is
/// returned when the engine is used.
pub fn sweep_reset_with(
    cfg: &ResetConfig,
    dynamics: Dynamics,
) -> Result<(Vec<ResetSweepRow>, Option<Hygiene>), ResetError> {
    cfg.validate()?;
    let rows: Vec<(ResetSweepRow, Option<Hygiene>)> = cfg
        .ratios
        .par_iter()
        .map(|&ratio| {
            let (pg, hygiene) = ground_population(cfg, ratio, dynamics)?;
            let reset_times = cfg
                .thresholds
                .iter()
                .map(|&th| reset_time(&pg, th))
                .collect::<Result<_, _>>()?;
            Ok((ResetSweepRow { ratio, reset_times }, hygiene))
        })
        .collect::<Result<_, ResetError>>()?;
    let mut merged: Option<Hygiene> = None;
    for h in rows.iter().filter_map(|r| r.1.as_ref()) {
        merged.get_or_insert_with(Hygiene::default).merge(h);
    }
    Ok((rows.into_iter().map(|r| r.0).collect(), merged))
}

/// Location of the shortest reset time for threshold column `k`:
/// `(ratio, time μs)`.
pub fn sweep_minimum(rows: &[ResetSweepRow], k: usize) -> Option<(f64, f64)> {
    rows.iter()
        .filter_map(|r| r.reset_times.get(k)?.us().map(|t| (r.ratio, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn nonzero(name: &'static str, v: f64) -> Result<(), ResetError> {
    if v == 0.0 || !v.is_finite() {
        Err(ResetError::Zero { name })
    } else {
        Ok(())
    }
}

/// Purcell rate of the reset mode relative to the intrinsic rate,
/// `g_r²κ_r / (Δ_r²γ)`.
pub fn purcell_impact(g_r: f64, kappa_r: f64, delta_r: f64, gamma: f64) -> Result<f64, ResetError> {
    nonzero("delta_r", delta_r)?;
    nonzero("gamma", gamma)?;
    Ok(g_r * g_r * kappa_r / (delta_r * delta_r * gamma))
}

/// Coupling ratios `g_r/κ_r` at which [`purcell_impact`] equals each level.
pub fn impact_crossings(cfg: &ResetConfig, levels: &[f64]) -> Result<Vec<f64>, ResetError> {
    nonzero("delta_r", cfg.delta_r)?;
    nonzero("gamma", cfg.gamma)?;
    nonzero("kappa_r", cfg.kappa_r)?;
    levels
        .iter()
        .map(|&l| {
            if !(l > 0.0) {
                return Err(ResetError::Level(l));
            }
            Ok((l * cfg.gamma * cfg.delta_r * cfg.delta_r / cfg.kappa_r).sqrt() / cfg.kappa_r)
        })
        .collect()
}
