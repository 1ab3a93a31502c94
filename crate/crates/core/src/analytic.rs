//! Closed-form physics: dispersive shifts, Purcell rates, the single-excitation
//! resonant evolution and regime classification.
//!
//! All inputs and outputs are linear MHz and μs, as in [`crate::model`].

use crate::model::{ModelError, SystemParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Default distance (MHz) from a pole of the dispersive shift that is rejected.
pub const CHI_POLE_EPS_MHZ: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("detuning {delta} MHz is within {eps} MHz of the pole at {pole}")]
    NearPole {
        pole: &'static str,
        delta: f64,
        eps: f64,
    },
    #[error("mean occupation must be non-negative, got {0}")]
    NegativeOccupation(f64),
    #[error("qubit frequency {f_mhz} MHz is resonant with mode {index}")]
    Resonance { index: u32, f_mhz: f64 },
    #[error("no mode with index {0}")]
    UnknownMode(u32),
    #[error("coupling is zero; use the exponential limit")]
    ZeroCoupling,
    #[error("{name} must be non-negative, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("{name} must be non-zero")]
    Zero { name: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn non_negative(name: &'static str, value: f64) -> Result<(), AnalyticError> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(AnalyticError::NegativeRate { name, value })
    }
}

/// Dispersive shift `χ = −g²·E_c / (Δ(Δ − E_c))` with `Δ = f01 − f_m`.
///
/// Positive exactly when `0 < Δ < E_c`, i.e. the mode sits between f12 and f01.
pub fn chi_dispersive(g: f64, delta: f64, ec: f64) -> Result<f64, AnalyticError> {
    chi_dispersive_with_eps(g, delta, ec, CHI_POLE_EPS_MHZ)
}

pub fn chi_dispersive_with_eps(
    g: f64,
    delta: f64,
    ec: f64,
    eps: f64,
) -> Result<f64, AnalyticError> {
    if delta.abs() < eps {
        return Err(AnalyticError::NearPole {
            pole: "delta = 0",
            delta,
            eps,
        });
    }
    if (delta - ec).abs() < eps {
        return Err(AnalyticError::NearPole {
            pole: "delta = ec",
            delta,
            eps,
        });
    }
    Ok(-g * g * ec / (delta * (delta - ec)))
}

/// AC Stark shift `2χ·n̄` of the qubit frequency.
pub fn stark_shift(chi: f64, nbar: f64) -> Result<f64, AnalyticError> {
    if !(nbar >= 0.0) {
        return Err(AnalyticError::NegativeOccupation(nbar));
    }
    Ok(2.0 * chi * nbar)
}

/// Purcell-limited decay with the qubit parked at `f_idle`:
/// `γ = Σ_m (g_m/(f_m − f_idle))²·κ_m + γ0`.
pub fn purcell_idle(params: &SystemParams, f_idle: f64, gamma0: f64) -> Result<f64, AnalyticError> {
    non_negative("gamma0", gamma0)?;
    let mut gamma = gamma0;
    for m in &params.modes {
        let d = m.f - f_idle;
        if d == 0.0 {
            return Err(AnalyticError::Resonance {
                index: m.index,
                f_mhz: f_idle,
            });
        }
        gamma += (m.g / d).powi(2) * m.kappa;
    }
    Ok(gamma)
}

/// Qubit decay rate while resonant with mode `resonant_index`: the intrinsic
/// rate plus the Purcell contribution of every other mode.
pub fn gamma_prime(params: &SystemParams, resonant_index: u32) -> Result<f64, AnalyticError> {
    params.check()?;
    let fm = params
        .mode(resonant_index)
        .ok_or(AnalyticError::UnknownMode(resonant_index))?
        .f;
    Ok(params.qubit.gamma
        + params
            .modes
            .iter()
            .filter(|m| m.index != resonant_index)
            .map(|m| (m.g / (m.f - fm)).powi(2) * m.kappa)
            .sum::<f64>())
}

fn check_rates(gamma_p: f64, kappa: f64) -> Result<(), AnalyticError> {
    non_negative("gamma_p", gamma_p)?;
    non_negative("kappa", kappa)
}

/// Approximate resonant evolution
/// `exp[−πt(γ′+κ) + (κ−γ′)/(4g)·sin(4πgt)]·cos²(2πgt)`.
///
/// Accurate only well inside the oscillatory regime; see [`pe_exact`].
pub fn pe_paper(t: f64, g: f64, gamma_p: f64, kappa: f64) -> Result<f64, AnalyticError> {
    check_rates(gamma_p, kappa)?;
    if g == 0.0 {
        return Err(AnalyticError::ZeroCoupling);
    }
    Ok(pe_paper_unchecked(t, g, gamma_p, kappa))
}

/// [`pe_paper`] without input checks; continuous through `g = 0`.
pub(crate) fn pe_paper_unchecked(t: f64, g: f64, gamma_p: f64, kappa: f64) -> f64 {
    // (κ−γ′)/(4g)·sin(4πgt) = π(κ−γ′)t · sinc(4πgt)
    let x = 4.0 * PI * g * t;
    let sinc = if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    };
    let expo = -PI * t * (gamma_p + kappa) + PI * (kappa - gamma_p) * t * sinc;
    expo.exp() * (2.0 * PI * g * t).cos().powi(2)
}

/// Exact qubit excited population in the single-excitation sector of a
/// damped qubit–mode pair, starting from `|e,0⟩`.
///
/// The amplitudes obey `ċ_e = −πγ′c_e − iGc_1`, `ċ_1 = −πκc_1 − iGc_e` with
/// `G = 2πg`. Writing `s = π(γ′+κ)/2`, `δ = π(κ−γ′)/2` and `Ω² = G² − δ²`,
/// `c_e = e^{−st}[cos Ωt + (δ/Ω) sin Ωt]`, continued analytically through
/// the exceptional point `Ω = 0` into the overdamped branch.
pub fn pe_exact(t: f64, g: f64, gamma_p: f64, kappa: f64) -> f64 {
    pe_amplitude(t, g, gamma_p, kappa).powi(2)
}

/// Real amplitude `c_e(t)`.
pub(crate) fn pe_amplitude(t: f64, g: f64, gamma_p: f64, kappa: f64) -> f64 {
    let a = PI * gamma_p;
    let b = PI * kappa;
    let s = 0.5 * (a + b);
    let d = 0.5 * (b - a);
    let big_g = 2.0 * PI * g;
    let w2 = big_g * big_g - d * d;
    let z = w2 * t * t;
    if z.abs() < 1e-4 {
        // series in Ωt around the exceptional point
        let c = 1.0 - z / 2.0 + z * z / 24.0;
        let sn = t * (1.0 - z / 6.0 + z * z / 120.0);
        return (-s * t).exp() * (c + d * sn);
    }
    if w2 > 0.0 {
        let w = w2.sqrt();
        (-s * t).exp() * ((w * t).cos() + d / w * (w * t).sin())
    } else {
        let mu = (-w2).sqrt();
        if mu * t < 20.0 {
            (-s * t).exp() * ((mu * t).cosh() + d / mu * (mu * t).sinh())
        } else {
            // |μ| ≤ |δ| ≤ s, so both exponents are non-positive
            0.5 * (1.0 + d / mu) * ((mu - s) * t).exp()
                + 0.5 * (1.0 - d / mu) * ((-mu - s) * t).exp()
        }
    }
}

/// Eigenvalues (rad/μs) of the 2×2 single-excitation generator,
/// `−s ± i·√(G² − δ²)`. They coalesce at the exceptional point
/// `g = |κ − γ′|/4`.
pub fn generator_eigenvalues(g: f64, gamma_p: f64, kappa: f64) -> [Complex64; 2] {
    let s = 0.5 * PI * (gamma_p + kappa);
    let d = 0.5 * PI * (kappa - gamma_p);
    let big_g = 2.0 * PI * g;
    let root = Complex64::new(big_g * big_g - d * d, 0.0).sqrt();
    let i = Complex64::new(0.0, 1.0);
    [-s + i * root, -s - i * root]
}

/// Sinusoidal coupling profile `g0·sin(πm/2 + φ)` across mode number `m`.
pub fn coupling_profile(m: u32, g0: f64, phi: f64) -> f64 {
    g0 * (0.5 * PI * m as f64 + phi).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    OverdampedWeak,
    Transition,
    Strong,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::OverdampedWeak => "overdamped-weak",
            Regime::Transition => "transition",
            Regime::Strong => "strong",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub kind: Regime,
    /// `|g| − |κ − γ′|/4`; negative in the overdamped regime.
    pub discriminant: f64,
}

/// Overdamped below the exceptional point, strong once `|g| ≥ 10·max(γ′, κ)`,
/// transition in between.
pub fn classify_regime(g: f64, gamma_p: f64, kappa: f64) -> RegimeLabel {
    let g = g.abs();
    let discriminant = g - (kappa - gamma_p).abs() / 4.0;
    let kind = if discriminant < 0.0 {
        Regime::OverdampedWeak
    } else if g >= 10.0 * gamma_p.max(kappa) {
        Regime::Strong
    } else {
        Regime::Transition
    };
    RegimeLabel { kind, discriminant }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{self, GmonBias};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    /// Classical RK4 on the two complex amplitudes with a fixed small step.
    fn pe_by_rk4(t_end: f64, g: f64, gp: f64, k: f64) -> f64 {
        let i = Complex64::new(0.0, 1.0);
        let a = PI * gp;
        let b = PI * k;
        let gg = 2.0 * PI * g;
        let f = |c: [Complex64; 2]| [-a * c[0] - i * gg * c[1], -b * c[1] - i * gg * c[0]];
        let n = 20_000;
        let h = t_end / n as f64;
        let mut c = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let add = |c: [Complex64; 2], k: [Complex64; 2], s: f64| [c[0] + k[0] * s, c[1] + k[1] * s];
        for _ in 0..n {
            let k1 = f(c);
            let k2 = f(add(c, k1, h / 2.0));
            let k3 = f(add(c, k2, h / 2.0));
            let k4 = f(add(c, k3, h));
            for j in 0..2 {
                c[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
            }
        }
        c[0].norm_sqr()
    }

    #[test]
    fn chi_example_and_limits() {
        let chi = chi_dispersive(0.28, 144.2, 171.0).unwrap();
        assert!((chi - 3.47e-3).abs() < 5e-6, "{chi}");
        let far = chi_dispersive(0.28, 1e6, 171.0).unwrap();
        assert!(far < 0.0 && far > -1e-9);
        assert!(matches!(
            chi_dispersive(0.28, 0.5, 171.0),
            Err(AnalyticError::NearPole {
                pole: "delta = 0",
                ..
            })
        ));
        assert!(matches!(
            chi_dispersive(0.28, 171.4, 171.0),
            Err(AnalyticError::NearPole {
                pole: "delta = ec",
                ..
            })
        ));
        assert!(chi_dispersive_with_eps(0.28, 0.5, 171.0, 0.1).is_ok());
    }

    #[test]
    fn stark_shift_is_linear() {
        assert_eq!(stark_shift(3.47e-3, 0.0).unwrap(), 0.0);
        assert!((stark_shift(3.47e-3, 10.0).unwrap() - 0.0694).abs() < 1e-12);
        assert_eq!(
            stark_shift(0.01, 6.0).unwrap(),
            2.0 * stark_shift(0.01, 3.0).unwrap()
        );
        assert!(stark_shift(0.01, -1.0).is_err());
    }

    #[test]
    fn purcell_idle_cases() {
        let off = presets::device(GmonBias::Off);
        assert_eq!(purcell_idle(&off, 4768.5, 0.0122).unwrap(), 0.0122);

        // mirror the single mode about the idle point: same rate
        let mut p = presets::device(GmonBias::MaxCoupling);
        p.modes.truncate(1);
        let above = purcell_idle(&p, p.modes[0].f - 40.0, 0.0).unwrap();
        let below = purcell_idle(&p, p.modes[0].f + 40.0, 0.0).unwrap();
        assert!(close(above, below, 1e-14));

        // qubit parked on mode 6 with that mode removed: six-term sum
        let mut six = presets::device(GmonBias::MaxCoupling);
        six.modes.retain(|m| m.index != 6);
        let g = purcell_idle(&six, presets::MODE_FREQ_MHZ[5], 0.0122).unwrap();
        assert!(close(g, 0.0137, 0.05), "{g}");
        assert!(((g - 0.0122) * 1e3 - 1.5).abs() < 0.1);

        let full = presets::device(GmonBias::MaxCoupling);
        assert!(matches!(
            purcell_idle(&full, presets::MODE_FREQ_MHZ[5], 0.0122),
            Err(AnalyticError::Resonance { index: 6, .. })
        ));
    }

    #[test]
    fn gamma_prime_reproduces_total_rates() {
        let p4 = presets::device_at_mode(GmonBias::MaxCoupling, 4);
        assert!(close(gamma_prime(&p4, 4).unwrap(), 0.0156, 0.05));
        let p6 = presets::device_at_mode(GmonBias::Dispersive, 6);
        assert!(close(gamma_prime(&p6, 6).unwrap(), 0.0123, 0.05));

        let mut single = p4.clone();
        single.modes.retain(|m| m.index == 4);
        assert_eq!(gamma_prime(&single, 4).unwrap(), single.qubit.gamma);
        assert!(matches!(
            gamma_prime(&p4, 9),
            Err(AnalyticError::UnknownMode(9))
        ));

        let mut dup = p4;
        dup.modes[1].f = dup.modes[0].f;
        assert!(matches!(gamma_prime(&dup, 1), Err(AnalyticError::Model(_))));
    }

    #[test]
    fn pe_paper_limits() {
        assert_eq!(pe_paper(0.0, 1.67, 0.0137, 0.78).unwrap(), 1.0);
        for k in 0..20 {
            let t = 0.05 * k as f64;
            let lossless = pe_paper(t, 1.67, 0.0, 0.0).unwrap();
            assert!((lossless - (2.0 * PI * 1.67 * t).cos().powi(2)).abs() < 1e-14);
            let weak = pe_paper(t, 1e-6, 0.0137, 0.78).unwrap();
            assert!((weak - (-2.0 * PI * 0.0137 * t).exp()).abs() < 1e-9);
        }
        assert!(matches!(
            pe_paper(1.0, 0.0, 0.1, 0.1),
            Err(AnalyticError::ZeroCoupling)
        ));
        assert!(pe_paper(1.0, 1.0, -0.1, 0.1).is_err());
        assert!(
            (pe_paper_unchecked(0.7, 0.0, 0.1, 0.9) - (-2.0 * PI * 0.1 * 0.7f64).exp()).abs()
                < 1e-15
        );
    }

    #[test]
    fn pe_exact_limits() {
        for k in 0..30 {
            let t = 0.1 * k as f64;
            let decoupled = pe_exact(t, 0.0, 0.0137, 0.78);
            assert!((decoupled - (-2.0 * PI * 0.0137 * t).exp()).abs() < 1e-13);
            let sym = pe_exact(t, 1.67, 0.5, 0.5);
            let want = (-2.0 * PI * 0.5 * t).exp() * (2.0 * PI * 1.67 * t).cos().powi(2);
            assert!((sym - want).abs() < 1e-14);
        }
        assert_eq!(pe_exact(0.0, 0.3, 1.0, 2.0), 1.0);
        // deep overdamped, long time: no overflow, tends to 0
        let v = pe_exact(500.0, 0.01, 0.0, 50.0);
        assert!(v.is_finite() && v < 1.0);
    }

    #[test]
    fn pe_exact_matches_direct_integration() {
        let cases = [
            (1.67, 0.0137, 0.78),
            (0.05, 0.0122, 2.5),
            (0.3, 0.2, 2.5),
            ((2.5 - 0.2) / 4.0, 0.2, 2.5),
            (0.2, 1.5, 0.1),
        ];
        for &(g, gp, k) in &cases {
            for &t in &[0.1, 0.37, 1.0, 2.5] {
                let a = pe_exact(t, g, gp, k);
                let b = pe_by_rk4(t, g, gp, k);
                assert!(
                    (a - b).abs() < 1e-10,
                    "g={g} γ'={gp} κ={k} t={t}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn eigenvalues_coalesce_at_exceptional_point() {
        let (gp, k) = (0.0137, 0.78);
        let g_ep = (k - gp) / 4.0;
        let [l1, l2] = generator_eigenvalues(g_ep, gp, k);
        assert!((l1 - l2).norm() < 1e-6);
        let [m1, m2] = generator_eigenvalues(1.67, gp, k);
        assert!((m1 - m2).norm() > 1.0);
        assert!((m1.re - m2.re).abs() < 1e-12);
        let [o1, o2] = generator_eigenvalues(0.05, gp, k);
        assert!(o1.im.abs() < 1e-12 && o2.im.abs() < 1e-12 && o1.re != o2.re);
    }

    #[test]
    fn coupling_profile_basics() {
        assert!(coupling_profile(2, 1.0, 0.0).abs() < 1e-15);
        for m in 1..10 {
            assert!(
                (coupling_profile(m, 1.3, 0.4) - coupling_profile(m + 4, 1.3, 0.4)).abs() < 1e-12
            );
        }
        let signs: Vec<bool> = (1..=7)
            .map(|m| coupling_profile(m, 1.62, -1.20) > 0.0)
            .collect();
        assert_eq!(signs, [true, true, false, false, true, true, false]);
    }

    #[test]
    fn regime_examples() {
        let r = classify_regime(0.01, 0.0122, 2.17);
        assert_eq!(r.kind, Regime::OverdampedWeak);
        assert!((r.discriminant - (0.01 - (2.17 - 0.0122) / 4.0)).abs() < 1e-15);
        assert_eq!(classify_regime(1.67, 0.0137, 0.78).kind, Regime::Transition);
        assert_eq!(
            classify_regime(-1.67, 0.0137, 0.78).kind,
            Regime::Transition
        );
        assert_eq!(classify_regime(25.0, 0.2, 2.5).kind, Regime::Strong);
        assert_eq!(classify_regime(1e-9, 0.4, 0.4).kind, Regime::Transition);
        assert_eq!(Regime::OverdampedWeak.to_string(), "overdamped-weak");
    }

    #[test]
    fn approximation_drifts_from_exact_near_boundary() {
        let max_gap = |g: f64, gp: f64, k: f64| {
            let t_end = 3.0 / (2.0 * PI * g);
            (0..=2000)
                .map(|i| {
                    let t = t_end * i as f64 / 2000.0;
                    (pe_paper(t, g, gp, k).unwrap() - pe_exact(t, g, gp, k)).abs()
                })
                .fold(0.0, f64::max)
        };
        // deep in the oscillatory regime the two agree closely
        assert!(max_gap(10.0, 0.0137, 0.78) < 0.03);
        // approaching the exceptional point they do not
        assert!(max_gap(0.2, 0.0137, 0.78) > 0.1);
    }

    fn local_maxima(v: &[f64]) -> usize {
        v.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2]).count()
    }

    proptest! {
        #[test]
        fn chi_positive_only_in_straddling_window(
            f01 in 4000.0f64..6000.0,
            ec in 100.0f64..300.0,
            g in 0.05f64..3.0,
            fm in 3500.0f64..6500.0,
        ) {
            let delta = f01 - fm;
            prop_assume!(delta.abs() > CHI_POLE_EPS_MHZ && (delta - ec).abs() > CHI_POLE_EPS_MHZ);
            let chi = chi_dispersive(g, delta, ec).unwrap();
            let inside = fm > f01 - ec && fm < f01;
            prop_assert_eq!(chi > 0.0, inside);
        }

        #[test]
        fn populations_stay_in_unit_interval(
            t in 0.0f64..20.0,
            g in 0.0f64..5.0,
            gp in 0.0f64..3.0,
            k in 0.0f64..3.0,
        ) {
            let p = pe_exact(t, g, gp, k);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
        }

        #[test]
        fn pe_exact_continuous_across_exceptional_point(
            gp in 0.0f64..0.5,
            k in 0.6f64..3.0,
            t in 0.0f64..5.0,
        ) {
            let g_ep = (k - gp) / 4.0;
            let below = pe_exact(t, g_ep * (1.0 - 1e-7), gp, k);
            let above = pe_exact(t, g_ep * (1.0 + 1e-7), gp, k);
            prop_assert!((below - above).abs() < 1e-6);
        }

        // With κ ≥ γ′ the overdamped amplitude never changes sign, so an
        // interior maximum appears exactly when the classifier says oscillatory.
        #[test]
        fn oscillation_matches_classification(
            g in 0.01f64..3.0,
            gp in 0.0f64..1.0,
            extra in 0.0f64..4.0,
        ) {
            let k = gp + extra;
            let label = classify_regime(g, gp, k);
            let r = (k - gp) / (4.0 * g);
            prop_assume!(!(0.8..=1.25).contains(&r));
            let d = 0.5 * PI * (k - gp);
            let s = 0.5 * PI * (k + gp);
            let big_g = 2.0 * PI * g;
            let t_end = if label.kind == Regime::OverdampedWeak {
                20.0 / s
            } else {
                2.0 * PI / (big_g * big_g - d * d).sqrt()
            };
            prop_assume!(s * t_end < 150.0);
            let v: Vec<f64> = (0..=4000).map(|i| pe_exact(t_end * i as f64 / 4000.0, g, gp, k)).collect();
            prop_assert_eq!(local_maxima(&v) >= 1, label.kind != Regime::OverdampedWeak);
        }
    }
}
