//! Shared domain types and unit conventions.
//!
//! Every frequency, rate and coupling is stored as a *linear* quantity in MHz
//! (the angular value divided by 2π) and every time in μs. A rate `r` therefore
//! produces a population decay factor `exp(-2π·r·t)` over `t` μs, and an
//! energy `f` contributes `2π·f` rad/μs to a Hamiltonian.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Default cap on the composite Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Converts a linear frequency or rate in MHz to rad/μs.
#[inline]
pub fn angular(mhz: f64) -> f64 {
    2.0 * PI * mhz
}

/// Population lifetime (1/e time, μs) of a channel with linear rate `rate_mhz`.
#[inline]
pub fn lifetime_us(rate_mhz: f64) -> f64 {
    1.0 / angular(rate_mhz)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{field}: non-positive rate ({value})")]
    NonPositiveRate { field: String, value: f64 },
    #[error("{field}: negative rate ({value})")]
    NegativeRate { field: String, value: f64 },
    #[error("{field}: non-positive frequency ({value})")]
    NonPositiveFrequency { field: String, value: f64 },
    #[error("{field}: value is not finite")]
    NotFinite { field: String },
    #[error("{field}: mode index must be >= 1")]
    ZeroModeIndex { field: String },
    #[error("{field}: mode indices must be unique and ascending ({prev} then {next})")]
    IndexOrder { field: String, prev: u32, next: u32 },
    #[error("modes[{first}] and modes[{second}]: duplicate mode frequency {f_mhz} MHz")]
    DuplicateModeFrequency {
        first: usize,
        second: usize,
        f_mhz: f64,
    },
    #[error("hilbert space: {0} must have at least 2 levels")]
    TooFewLevels(String),
    #[error("hilbert space: dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("time series '{label}': {reason}")]
    TimeSeries { label: String, reason: String },
    #[error("config: {0}")]
    Config(String),
}

/// Transmon parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    /// |g⟩→|e⟩ transition frequency, MHz.
    #[serde(rename = "f01_mhz")]
    pub f01: f64,
    /// Anharmonicity E_c/h = f01 − f12, MHz.
    #[serde(rename = "ec_mhz")]
    pub ec: f64,
    /// Intrinsic population decay rate, MHz (T1 = 1/(2π·gamma)).
    #[serde(rename = "gamma_mhz")]
    pub gamma: f64,
}

/// One mechanical mode of the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// Mode number m ≥ 1.
    pub index: u32,
    #[serde(rename = "f_mhz")]
    pub f: f64,
    /// Energy decay rate κ/2π, MHz.
    #[serde(rename = "kappa_mhz")]
    pub kappa: f64,
    /// Signed qubit coupling g/2π, MHz.
    #[serde(rename = "g_mhz")]
    pub g: f64,
}

/// Qubit plus an ordered list of modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub qubit: QubitParams,
    #[serde(default)]
    pub modes: Vec<ModeParams>,
}

fn finite(field: impl Fn() -> String, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NotFinite { field: field() })
    }
}

impl SystemParams {
    /// Checks every invariant and returns `self` unchanged on success.
    pub fn validate(self) -> Result<Self, ModelError> {
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let q = &self.qubit;
        finite(|| "qubit.f01_mhz".into(), q.f01)?;
        finite(|| "qubit.ec_mhz".into(), q.ec)?;
        finite(|| "qubit.gamma_mhz".into(), q.gamma)?;
        if q.f01 <= 0.0 {
            return Err(ModelError::NonPositiveFrequency {
                field: "qubit.f01_mhz".into(),
                value: q.f01,
            });
        }
        if q.ec <= 0.0 {
            return Err(ModelError::NonPositiveFrequency {
                field: "qubit.ec_mhz".into(),
                value: q.ec,
            });
        }
        if q.gamma < 0.0 {
            return Err(ModelError::NegativeRate {
                field: "qubit.gamma_mhz".into(),
                value: q.gamma,
            });
        }

        for (i, m) in self.modes.iter().enumerate() {
            finite(|| format!("modes[{i}].f_mhz"), m.f)?;
            finite(|| format!("modes[{i}].kappa_mhz"), m.kappa)?;
            finite(|| format!("modes[{i}].g_mhz"), m.g)?;
            if m.index == 0 {
                return Err(ModelError::ZeroModeIndex {
                    field: format!("modes[{i}].index"),
                });
            }
            if m.f <= 0.0 {
                return Err(ModelError::NonPositiveFrequency {
                    field: format!("modes[{i}].f_mhz"),
                    value: m.f,
                });
            }
            if m.kappa <= 0.0 {
                return Err(ModelError::NonPositiveRate {
                    field: format!("modes[{i}].kappa_mhz"),
                    value: m.kappa,
                });
            }
            if i > 0 {
                let prev = self.modes[i - 1].index;
                if m.index <= prev {
                    return Err(ModelError::IndexOrder {
                        field: format!("modes[{i}].index"),
                        prev,
                        next: m.index,
                    });
                }
            }
        }

        for (i, a) in self.modes.iter().enumerate() {
            for (j, b) in self.modes.iter().enumerate().skip(i + 1) {
                if a.f == b.f {
                    return Err(ModelError::DuplicateModeFrequency {
                        first: i,
                        second: j,
                        f_mhz: a.f,
                    });
                }
            }
        }
        Ok(())
    }

    /// Position of the mode with the given index in `modes`.
    pub fn position(&self, index: u32) -> Option<usize> {
        self.modes.iter().position(|m| m.index == index)
    }

    pub fn mode(&self, index: u32) -> Option<&ModeParams> {
        self.modes.iter().find(|m| m.index == index)
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ModelError> {
        let p: SystemParams = toml::from_str(s).map_err(|e| ModelError::Config(e.to_string()))?;
        p.validate()
    }

    pub fn to_toml_string(&self) -> Result<String, ModelError> {
        toml::to_string(self).map_err(|e| ModelError::Config(e.to_string()))
    }
}

/// Truncation of the composite space: qubit first, then modes in list order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpec {
    pub qubit_levels: usize,
    pub mode_levels: Vec<usize>,
    pub max_dim: usize,
}

impl HilbertSpec {
    pub fn new(qubit_levels: usize, mode_levels: Vec<usize>) -> Result<Self, ModelError> {
        Self::with_max_dim(qubit_levels, mode_levels, DEFAULT_MAX_DIM)
    }

    pub fn with_max_dim(
        qubit_levels: usize,
        mode_levels: Vec<usize>,
        max_dim: usize,
    ) -> Result<Self, ModelError> {
        if qubit_levels < 2 {
            return Err(ModelError::TooFewLevels("qubit".into()));
        }
        if let Some(k) = mode_levels.iter().position(|&l| l < 2) {
            return Err(ModelError::TooFewLevels(format!("mode slot {}", k + 1)));
        }
        let dim = mode_levels
            .iter()
            .try_fold(qubit_levels, |acc, &l| acc.checked_mul(l))
            .unwrap_or(usize::MAX);
        if dim > max_dim {
            return Err(ModelError::DimensionCap { dim, cap: max_dim });
        }
        Ok(Self {
            qubit_levels,
            mode_levels,
            max_dim,
        })
    }

    /// Same truncation for every mode.
    pub fn uniform(qubit_levels: usize, n_modes: usize, levels: usize) -> Result<Self, ModelError> {
        Self::new(qubit_levels, vec![levels; n_modes])
    }

    /// Resonant-evolution layout: `resonant_levels` for the mode at list
    /// position `resonant_pos`, two levels for every other mode.
    pub fn resonant(
        qubit_levels: usize,
        n_modes: usize,
        resonant_pos: usize,
        resonant_levels: usize,
    ) -> Result<Self, ModelError> {
        let levels = (0..n_modes)
            .map(|k| {
                if k == resonant_pos {
                    resonant_levels
                } else {
                    2
                }
            })
            .collect();
        Self::new(qubit_levels, levels)
    }

    pub fn n_modes(&self) -> usize {
        self.mode_levels.len()
    }

    pub fn dim(&self) -> usize {
        self.qubit_levels * self.mode_levels.iter().product::<usize>()
    }

    /// Local dimension of slot 0 (qubit) or slot k (mode k).
    pub fn slot_dim(&self, slot: usize) -> Option<usize> {
        if slot == 0 {
            Some(self.qubit_levels)
        } else {
            self.mode_levels.get(slot - 1).copied()
        }
    }
}

/// Uniformly labelled real-valued trace sampled in μs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

impl TimeSeries {
    pub fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let label = label.into();
        if times.len() != values.len() {
            return Err(ModelError::TimeSeries {
                label,
                reason: format!("{} times but {} values", times.len(), values.len()),
            });
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(ModelError::TimeSeries {
                label,
                reason: format!("times not strictly ascending at sample {}", k + 1),
            });
        }
        Ok(Self {
            times,
            values,
            label,
        })
    }

    /// Samples `f` on the given grid.
    pub fn from_fn(
        times: &[f64],
        label: impl Into<String>,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, ModelError> {
        Self::new(times.to_vec(), times.iter().map(|&t| f(t)).collect(), label)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }
}

/// `n` evenly spaced points on `[start, end]`.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            (0..n).map(|k| start + step * k as f64).collect()
        }
    }
}
