//! SAW time-of-flight geometry and a carrier-free echo-train simulator.
//!
//! Lengths are μm, velocities m/s (numerically μm/μs) and pulse timings ns.
//! Simulated traces are [`TimeSeries`] in μs like everything else.

use crate::model::TimeSeries;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gaussian envelopes use σ = pulse_len / 8 inside a `[0, pulse_len]` window.
const GAUSS_SIGMAS_PER_PULSE: f64 = 8.0;
/// FWHM of a Gaussian in units of σ.
const FWHM_PER_SIGMA: f64 = 2.354_820_045;
/// Paths weaker than this fraction of the direct path are dropped.
const PATH_CUTOFF: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TofError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("first interval {dt1} ns must be shorter than the echo spacing {dt2} ns")]
    IntervalOrder { dt1: f64, dt2: f64 },
    #[error("non-positive penetration depth: d0 = {d0} μm does not exceed d1 = {d1} μm")]
    NonPositivePenetration { d0: f64, d1: f64 },
    #[error("single-electrode reflectivity {0} is not below 1")]
    Reflectivity(f64),
    #[error("transducer positions must lie strictly inside the cavity (0, {l_c}) μm")]
    Position { l_c: f64 },
    #[error("mirror reflectivity {0} is outside (0, 1]")]
    MirrorReflectivity(f64),
    #[error("pulse duration {duration} ns is not shorter than the round trip {round_trip} ns")]
    PulseTooLong { duration: f64, round_trip: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<(), TofError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(TofError::NonPositive { name, value })
    }
}

/// Measured quantities of a time-of-flight trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TofInput {
    /// IDT period, nm.
    pub p_nm: f64,
    /// Centre frequency, MHz.
    pub f_center_mhz: f64,
    /// Transducer-to-grating distance, μm.
    pub d1_um: f64,
    /// Rise-to-dip interval of the first echo, ns.
    pub dt1_ns: f64,
    /// Spacing between echo peaks, ns.
    pub dt2_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TofGeometry {
    pub v_e_m_per_s: f64,
    /// Distance to the effective reflection plane, μm.
    pub d0_um: f64,
    /// Penetration depth into the grating, μm.
    pub l_p_um: f64,
    /// Single-electrode reflectivity.
    pub r_s: f64,
    /// Cavity length, μm.
    pub l_c_um: f64,
}

/// SAW velocity `p·f` in m/s.
pub fn saw_velocity(p_nm: f64, f_center_mhz: f64) -> f64 {
    p_nm * f_center_mhz * 1e-3
}

/// Geometry from the two measured intervals: `d0 = Δt₁·v/2`,
/// `L_p = d0 − d1`, `r_s = p/(4L_p)`, `L_c = Δt₂·v/2`.
pub fn geometry_from_timing(input: &TofInput) -> Result<TofGeometry, TofError> {
    positive("p_nm", input.p_nm)?;
    positive("f_center_mhz", input.f_center_mhz)?;
    positive("d1_um", input.d1_um)?;
    positive("dt1_ns", input.dt1_ns)?;
    positive("dt2_ns", input.dt2_ns)?;
    if input.dt1_ns >= input.dt2_ns {
        return Err(TofError::IntervalOrder {
            dt1: input.dt1_ns,
            dt2: input.dt2_ns,
        });
    }
    let v = saw_velocity(input.p_nm, input.f_center_mhz);
    let d0 = half_path_um(input.dt1_ns, v);
    let l_p = d0 - input.d1_um;
    if l_p <= 0.0 {
        return Err(TofError::NonPositivePenetration {
            d0,
            d1: input.d1_um,
        });
    }
    let r_s = input.p_nm * 1e-3 / (4.0 * l_p);
    if r_s >= 1.0 {
        return Err(TofError::Reflectivity(r_s));
    }
    Ok(TofGeometry {
        v_e_m_per_s: v,
        d0_um: d0,
        l_p_um: l_p,
        r_s,
        l_c_um: half_path_um(input.dt2_ns, v),
    })
}

/// One-way distance (μm) for a round trip of `dt_ns` at `v` m/s.
fn half_path_um(dt_ns: f64, v: f64) -> f64 {
    dt_ns * 1e-3 * v / 2.0
}

/// The two intervals a geometry would produce: `(Δt₁, Δt₂)` in ns.
pub fn timing_from_geometry(g: &TofGeometry) -> (f64, f64) {
    let ns = |d: f64| 2.0 * d / g.v_e_m_per_s * 1e3;
    (ns(g.d0_um), ns(g.l_c_um))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    Gaussian,
    Rectangular,
}

impl Envelope {
    /// Envelope value at `t` ns after the pulse starts.
    fn at(self, t: f64, pulse_len: f64) -> f64 {
        if !(0.0..=pulse_len).contains(&t) {
            return 0.0;
        }
        match self {
            Envelope::Gaussian => {
                let sigma = pulse_len / GAUSS_SIGMAS_PER_PULSE;
                let x = (t - 0.5 * pulse_len) / sigma;
                (-0.5 * x * x).exp()
            }
            Envelope::Rectangular => {
                if t < pulse_len {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Duration (ns) that must fit inside one round trip: FWHM for the
    /// Gaussian, the full length for the rectangle.
    pub fn effective_duration(self, pulse_len: f64) -> f64 {
        match self {
            Envelope::Gaussian => FWHM_PER_SIGMA * pulse_len / GAUSS_SIGMAS_PER_PULSE,
            Envelope::Rectangular => pulse_len,
        }
    }
}

/// One-dimensional cavity between two mirrors at `0` and `L_c`, excited at
/// `x_in` and read out at `x_out`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoModel {
    pub l_c_um: f64,
    pub x_in_um: f64,
    pub x_out_um: f64,
    /// Amplitude reflectivity per mirror bounce, in (0, 1].
    pub mirror_reflectivity: f64,
    /// Amplitude decay rate in linear MHz: factor `exp(−2π·loss·t)`.
    pub loss_per_us: f64,
    pub v_e_m_per_s: f64,
    pub sample_dt_ns: f64,
}

impl EchoModel {
    /// Launch next to the left mirror and read out `d0` in front of the
    /// right one, so the short right-mirror round trip arrives `Δt₁` after
    /// the direct wave.
    pub fn from_geometry(g: &TofGeometry) -> Self {
        Self {
            l_c_um: g.l_c_um,
            x_in_um: 1.0,
            x_out_um: g.l_c_um - g.d0_um,
            mirror_reflectivity: 0.9,
            loss_per_us: 0.0,
            v_e_m_per_s: g.v_e_m_per_s,
            sample_dt_ns: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), TofError> {
        positive("l_c_um", self.l_c_um)?;
        positive("v_e_m_per_s", self.v_e_m_per_s)?;
        positive("sample_dt_ns", self.sample_dt_ns)?;
        for x in [self.x_in_um, self.x_out_um] {
            if !(x > 0.0 && x < self.l_c_um) {
                return Err(TofError::Position { l_c: self.l_c_um });
            }
        }
        if !(self.mirror_reflectivity > 0.0 && self.mirror_reflectivity <= 1.0) {
            return Err(TofError::MirrorReflectivity(self.mirror_reflectivity));
        }
        if !(self.loss_per_us >= 0.0) {
            return Err(TofError::NonPositive {
                name: "loss_per_us",
                value: self.loss_per_us,
            });
        }
        Ok(())
    }

    /// Cavity round-trip time `2L_c/v`, ns.
    pub fn round_trip_ns(&self) -> f64 {
        2.0 * self.l_c_um / self.v_e_m_per_s * 1e3
    }

    /// `(delay ns, amplitude)` of every path from input to output, ordered
    /// by delay, truncated at `max_delay_ns` or at negligible amplitude.
    pub fn paths(&self, max_delay_ns: f64) -> Vec<(f64, f64)> {
        let sep = (self.x_out_um - self.x_in_um).abs();
        let sum = self.x_in_um + self.x_out_um;
        // direct, left mirror first, right mirror first, both mirrors
        let families = [
            (sep, 0),
            (sum, 1),
            (2.0 * self.l_c_um - sum, 1),
            (2.0 * self.l_c_um - sep, 2),
        ];
        let ns_per_um = 1e3 / self.v_e_m_per_s;
        let amp = |delay_ns: f64, bounces: i32| {
            self.mirror_reflectivity.powi(bounces)
                * (-2.0 * std::f64::consts::PI * self.loss_per_us * delay_ns * 1e-3).exp()
        };
        let reference = amp(sep * ns_per_um, 0);
        let period = self.round_trip_ns();
        let mut out = Vec::new();
        for k in 0.. {
            let mut any = false;
            for &(d, b) in &families {
                let delay = d * ns_per_um + k as f64 * period;
                let a = amp(delay, b + 2 * k);
                if delay <= max_delay_ns && a >= PATH_CUTOFF * reference {
                    out.push((delay, a));
                    any = true;
                }
            }
            if !any {
                break;
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

/// Envelope at the output transducer for a single input pulse.
///
/// The trace is sampled every `sample_dt_ns` from 0 to `total_time_ns`; its
/// times are stored in μs.
pub fn simulate_echo(
    model: &EchoModel,
    pulse_len_ns: f64,
    envelope: Envelope,
    total_time_ns: f64,
) -> Result<TimeSeries, TofError> {
    model.validate()?;
    positive("pulse_len_ns", pulse_len_ns)?;
    positive("total_time_ns", total_time_ns)?;
    let duration = envelope.effective_duration(pulse_len_ns);
    let round_trip = model.round_trip_ns();
    if duration >= round_trip {
        return Err(TofError::PulseTooLong {
            duration,
            round_trip,
        });
    }
    let paths = model.paths(total_time_ns);
    let n = (total_time_ns / model.sample_dt_ns).floor() as usize + 1;
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * model.sample_dt_ns;
        let lo = paths.partition_point(|p| p.0 < t - pulse_len_ns);
        let hi = paths.partition_point(|p| p.0 <= t);
        let v: f64 = paths[lo..hi]
            .iter()
            .map(|&(d, a)| a * envelope.at(t - d, pulse_len_ns))
            .sum();
        times.push(t * 1e-3);
        values.push(v);
    }
    Ok(TimeSeries {
        times,
        values,
        label: format!("echo {envelope:?} {pulse_len_ns} ns"),
    })
}

/// Local maxima whose topographic prominence is at least `min_prominence`
/// times the largest value. Returns sample indices in time order.
pub fn find_echo_peaks(series: &TimeSeries, min_prominence: f64) -> Vec<usize> {
    let v = &series.values;
    let n = v.len();
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if n < 3 || !(top > 0.0) {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if v[i] > v[i - 1] {
            // walk across a flat top
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                let left = side_min(v, i, -1);
                let right = side_min(v, j, 1);
                if v[i] - left.max(right) >= min_prominence * top {
                    peaks.push((i + j) / 2);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Lowest value between `i` and the next strictly higher sample in
/// direction `dir` (or the end of the trace).
fn side_min(v: &[f64], i: usize, dir: isize) -> f64 {
    let mut k = i as isize;
    let mut low = v[i];
    loop {
        k += dir;
        if k < 0 || k as usize >= v.len() {
            return low;
        }
        let x = v[k as usize];
        if x > v[i] {
            return low;
        }
        low = low.min(x);
    }
}

/// Whether the first echo cluster splits into a resolved main peak and an
/// early sub-echo: at least two peaks separated by a dip of 5% or more.
pub fn has_sub_echo(model: &EchoModel, series: &TimeSeries, pulse_len_ns: f64) -> bool {
    let ns_per_um = 1e3 / model.v_e_m_per_s;
    let first = (model.x_out_um - model.x_in_um)
        .abs()
        .min(model.x_in_um + model.x_out_um)
        * ns_per_um;
    let end = first + pulse_len_ns + 0.5 * model.round_trip_ns();
    let idx = series.times.partition_point(|&t| t * 1e3 <= end);
    let window = TimeSeries {
        times: series.times[..idx].to_vec(),
        values: series.values[..idx].to_vec(),
        label: String::new(),
    };
    find_echo_peaks(&window, 0.05).len() >= 2
}
