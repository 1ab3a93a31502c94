//! Measured device parameters: the seven-mode cavity, the transmon at its
//! idle point and the couplings at the characterised gmon biases.

use crate::model::{ModeParams, QubitParams, SystemParams};

/// Qubit |g⟩→|e⟩ frequency at the idle point, MHz.
pub const IDLE_F01_MHZ: f64 = 4768.5;
/// f12 at the idle point, MHz.
pub const IDLE_F12_MHZ: f64 = 4597.9;
/// Anharmonicity f01 − f12, MHz.
pub const EC_MHZ: f64 = 171.0;

pub const MODE_FREQ_MHZ: [f64; 7] = [4441.3, 4485.5, 4524.7, 4557.6, 4587.4, 4624.3, 4666.0];
pub const MODE_T1_NS: [f64; 7] = [73.5, 98.8, 58.3, 127.6, 233.1, 204.2, 105.8];
pub const MODE_KAPPA_MHZ: [f64; 7] = [2.17, 1.61, 2.73, 1.25, 0.68, 0.78, 1.50];
pub const MODE_Q: [f64; 7] = [2050.0, 2783.0, 1657.0, 3654.0, 6716.0, 5933.0, 3102.0];

/// Intrinsic qubit decay with the coupler off, at each mode frequency (kHz).
pub const INTRINSIC_GAMMA_KHZ: [f64; 7] = [19.6, 21.8, 31.8, 12.4, 12.2, 12.2, 17.6];

pub const COUPLING_VG_M30_MHZ: [f64; 7] = [-0.18, -0.21, 0.18, 0.23, -0.18, -0.28, 0.09];
pub const TOTAL_GAMMA_VG_M30_KHZ: [f64; 7] = [19.7, 21.9, 31.9, 12.5, 12.4, 12.3, 17.7];

pub const COUPLING_VG_075_MHZ: [f64; 7] = [0.59, 1.51, -0.75, -1.52, 0.82, 1.67, -0.47];
pub const TOTAL_GAMMA_VG_075_KHZ: [f64; 7] = [22.0, 23.9, 37.3, 15.6, 17.9, 13.7, 19.3];

/// Gmon coupler settings with measured couplings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmonBias {
    /// V_g = −0.9, coupler off.
    Off,
    /// V_g = −3.0, used for the AC Stark measurements.
    Dispersive,
    /// V_g = 0.75, maximum coupling.
    MaxCoupling,
}

impl GmonBias {
    pub fn couplings(self) -> [f64; 7] {
        match self {
            GmonBias::Off => [0.0; 7],
            GmonBias::Dispersive => COUPLING_VG_M30_MHZ,
            GmonBias::MaxCoupling => COUPLING_VG_075_MHZ,
        }
    }

    /// Printed total qubit decay rates (kHz) when resonant with each mode.
    pub fn total_gamma_khz(self) -> [f64; 7] {
        match self {
            GmonBias::Off => INTRINSIC_GAMMA_KHZ,
            GmonBias::Dispersive => TOTAL_GAMMA_VG_M30_KHZ,
            GmonBias::MaxCoupling => TOTAL_GAMMA_VG_075_KHZ,
        }
    }
}

/// The seven modes with the given couplings.
pub fn modes(couplings: [f64; 7]) -> Vec<ModeParams> {
    (0..7)
        .map(|k| ModeParams {
            index: k as u32 + 1,
            f: MODE_FREQ_MHZ[k],
            kappa: MODE_KAPPA_MHZ[k],
            g: couplings[k],
        })
        .collect()
}

/// Qubit at the idle point with the coupler-off intrinsic rate measured at
/// mode 6 (12.2 kHz), plus all seven modes.
pub fn device(bias: GmonBias) -> SystemParams {
    SystemParams {
        qubit: QubitParams {
            f01: IDLE_F01_MHZ,
            ec: EC_MHZ,
            gamma: INTRINSIC_GAMMA_KHZ[5] * 1e-3,
        },
        modes: modes(bias.couplings()),
    }
}

/// Device with the qubit intrinsic rate set to the value measured at mode `index`.
pub fn device_at_mode(bias: GmonBias, index: u32) -> SystemParams {
    let mut p = device(bias);
    p.qubit.gamma = INTRINSIC_GAMMA_KHZ[index as usize - 1] * 1e-3;
    p
}

/// Reset-study rates: γ/2π = 0.2 MHz, κ_r/2π = 2.5 MHz, Δ_r/2π = 300 MHz.
pub const RESET_GAMMA_MHZ: f64 = 0.2;
pub const RESET_KAPPA_MHZ: f64 = 2.5;
pub const RESET_DELTA_MHZ: f64 = 300.0;

/// IDT period, nm.
pub const IDT_PERIOD_NM: f64 = 864.0;
/// Centre (mode 4) frequency used for the SAW velocity, MHz.
pub const CENTER_FREQ_MHZ: f64 = 4557.6;
/// IDT2-to-grating distance, μm.
pub const IDT_GRATING_GAP_UM: f64 = 2.2;
