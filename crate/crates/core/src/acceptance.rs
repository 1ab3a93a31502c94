//! End-to-end checks of the toolkit against the measured device data and
//! independent closed forms. Each check returns a pass/fail outcome with a
//! short numeric summary; the `acceptance` test target and the CLI
//! `selftest` command both run them.

use crate::analytic;
use crate::engine::{self, EvolveOptions, Hygiene, HERMITICITY_TOL, POSITIVITY_TOL, TRACE_TOL};
use crate::fitting;
use crate::model::{linspace, HilbertSpec, SystemParams, TimeSeries};
use crate::presets::{self, GmonBias};
use crate::reset::{self, Dynamics, ResetConfig};
use crate::tof::{self, EchoModel, Envelope, TofInput};
use std::f64::consts::PI;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} [{:>2}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail
        )
    }
}

fn outcome(id: u32, title: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome {
        id,
        title,
        passed,
        detail,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub type Check = fn() -> Outcome;

/// Every check in order.
pub const ALL: [Check; 12] = [
    mode_table_consistency,
    total_decay_reconstruction,
    engine_matches_closed_form,
    closed_form_approximation_bound,
    stark_shift_signs,
    time_of_flight_geometry,
    echo_train_features,
    reset_sweep_shape,
    purcell_impact_crossings,
    fit_recovery,
    coupling_profile_fit,
    engine_hygiene,
];

pub fn run_all() -> Vec<Outcome> {
    ALL.iter().map(|c| c()).collect()
}

/// Mode lifetimes, linewidths and quality factors agree with each other.
pub fn mode_table_consistency() -> Outcome {
    let mut worst_kappa: f64 = 0.0;
    let mut worst_q: f64 = 0.0;
    for k in 0..7 {
        let kappa_from_t1 = 1.0 / (2.0 * PI * presets::MODE_T1_NS[k] * 1e-3);
        worst_kappa = worst_kappa.max(rel(kappa_from_t1, presets::MODE_KAPPA_MHZ[k]));
        let q = presets::MODE_FREQ_MHZ[k] / presets::MODE_KAPPA_MHZ[k];
        worst_q = worst_q.max(rel(q, presets::MODE_Q[k]));
    }
    outcome(
        1,
        "mode table self-consistency",
        worst_kappa < 0.03 && worst_q < 0.02,
        format!(
            "max κ mismatch {:.2}% (< 3%), max Q mismatch {:.2}% (< 2%)",
            100.0 * worst_kappa,
            100.0 * worst_q
        ),
    )
}

/// Purcell-corrected qubit decay on resonance with modes 6 and 4.
pub fn total_decay_reconstruction() -> Outcome {
    let g6 = analytic::gamma_prime(&presets::device_at_mode(GmonBias::MaxCoupling, 6), 6);
    let g4 = analytic::gamma_prime(&presets::device_at_mode(GmonBias::MaxCoupling, 4), 4);
    match (g6, g4) {
        (Ok(g6), Ok(g4)) => {
            let e6 = rel(g6, 0.0137);
            let e4 = rel(g4, 0.0156);
            outcome(
                2,
                "total decay reconstruction",
                e6 < 0.05 && e4 < 0.05,
                format!(
                    "mode 6: {:.2} kHz vs 13.7 ({:.1}%); mode 4: {:.2} kHz vs 15.6 ({:.1}%)",
                    g6 * 1e3,
                    100.0 * e6,
                    g4 * 1e3,
                    100.0 * e4
                ),
            )
        }
        (a, b) => outcome(
            2,
            "total decay reconstruction",
            false,
            format!("{a:?} {b:?}"),
        ),
    }
}

/// Mode-6 resonant run: qubit gamma set to γ′ of the full device, one mode.
fn mode_six_pair() -> (SystemParams, f64) {
    let device = presets::device_at_mode(GmonBias::MaxCoupling, 6);
    let gp = analytic::gamma_prime(&device, 6).expect("preset device is valid");
    let mut single = device;
    single.modes.retain(|m| m.index == 6);
    single.qubit.gamma = gp;
    (single, gp)
}

/// Master-equation engine against the exact single-excitation solution.
pub fn engine_matches_closed_form() -> Outcome {
    const TITLE: &str = "engine vs exact resonant solution";
    let (params, gp) = mode_six_pair();
    let spec = HilbertSpec::new(2, vec![3]).expect("small space");
    let times = linspace(0.0, 3.0, 601);
    let start = Instant::now();
    let run =
        engine::simulate_resonant_pe_with(&params, &spec, 6, &times, &EvolveOptions::default());
    let elapsed = start.elapsed().as_secs_f64();
    match run {
        Ok(run) => {
            let dev = run
                .series
                .iter()
                .map(|(t, p)| (p - analytic::pe_exact(t, 1.67, gp, 0.78)).abs())
                .fold(0.0, f64::max);
            outcome(
                3,
                TITLE,
                dev < 1e-4 && elapsed < 10.0,
                format!("max |ΔP_e| = {dev:.2e} (< 1e-4) in {elapsed:.2} s (< 10 s)"),
            )
        }
        Err(e) => outcome(3, TITLE, false, e.to_string()),
    }
}

/// Largest gap between the approximate and exact resonant populations over
/// `t ∈ [0, 3/(2πg)]`.
pub fn approximation_gap(g: f64, gamma_p: f64, kappa: f64) -> f64 {
    let t_end = 3.0 / (2.0 * PI * g);
    (0..=3000)
        .map(|i| {
            let t = t_end * i as f64 / 3000.0;
            (analytic::pe_paper(t, g, gamma_p, kappa).unwrap_or(f64::NAN)
                - analytic::pe_exact(t, g, gamma_p, kappa))
            .abs()
        })
        .fold(0.0, f64::max)
}

/// The closed-form approximation stays within 0.03 of the exact solution
/// whenever `|κ−γ′|/(4g) ≤ 0.2`, and departs from it near the boundary.
pub fn closed_form_approximation_bound() -> Outcome {
    let rate_pairs: [(f64, f64); 5] = [
        (0.0137, 0.78),
        (0.0122, 2.17),
        (0.2, 2.5),
        (0.78, 0.0137),
        (0.05, 1.0),
    ];
    let mut worst = (0.0, 0.0);
    // largest ratio at which every rate pair still meets the bound
    let mut holds_up_to: f64 = 0.2;
    for &(gp, k) in &rate_pairs {
        for i in 1..=40 {
            let r = 0.2 * i as f64 / 40.0;
            let g = (k - gp).abs() / (4.0 * r);
            let gap = approximation_gap(g, gp, k);
            if gap > worst.0 {
                worst = (gap, r);
            }
            if gap >= 0.03 {
                holds_up_to = holds_up_to.min(0.2 * (i - 1) as f64 / 40.0);
            }
        }
    }
    let near_boundary = approximation_gap((0.78 - 0.0137) / (4.0 * 0.9), 0.0137, 0.78);
    outcome(
        4,
        "closed-form approximation bound",
        worst.0 < 0.03 && near_boundary > 0.03,
        format!(
            "max gap {:.3} at ratio {:.3} (bound 0.03 for ratio ≤ 0.2; holds only up to ratio {:.3}); gap {:.3} at ratio 0.9",
            worst.0, worst.1, holds_up_to, near_boundary
        ),
    )
}

/// Dispersive-shift signs across the cavity with the qubit at its idle point.
pub fn stark_shift_signs() -> Outcome {
    const TITLE: &str = "dispersive shift signs";
    let p = presets::device(GmonBias::Dispersive);
    let mut signs = String::new();
    let mut ok = true;
    for m in &p.modes {
        match analytic::chi_dispersive(m.g, p.qubit.f01 - m.f, p.qubit.ec) {
            Ok(chi) => {
                signs.push(if chi > 0.0 { '+' } else { '-' });
                ok &= (chi > 0.0) == (m.index >= 6);
            }
            Err(e) => return outcome(5, TITLE, false, e.to_string()),
        }
    }
    let chi6 = analytic::chi_dispersive(0.28, p.qubit.f01 - presets::MODE_FREQ_MHZ[5], p.qubit.ec)
        .unwrap_or(f64::NAN)
        * 1e3;
    let rounded = (chi6 * 100.0).round() / 100.0;
    ok &= rounded == 3.47;
    outcome(
        5,
        TITLE,
        ok,
        format!("signs {signs} (want -----++); χ6 = {chi6:.4} kHz (want +3.47)"),
    )
}

/// Velocity and geometry from the measured time-of-flight intervals.
pub fn time_of_flight_geometry() -> Outcome {
    const TITLE: &str = "time-of-flight geometry";
    let input = |dt1| TofInput {
        p_nm: presets::IDT_PERIOD_NM,
        f_center_mhz: presets::CENTER_FREQ_MHZ,
        d1_um: presets::IDT_GRATING_GAP_UM,
        dt1_ns: dt1,
        dt2_ns: 27.0,
    };
    let (g3, g4) = match (
        tof::geometry_from_timing(&input(3.0)),
        tof::geometry_from_timing(&input(4.0)),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => return outcome(6, TITLE, false, format!("{a:?} {b:?}")),
    };
    let checks = [
        (g3.v_e_m_per_s, 3937.8),
        (g3.d0_um, 5.91),
        (g4.d0_um, 7.88),
        (g3.r_s, 0.058),
        (g4.r_s, 0.038),
        (g3.l_c_um, 53.2),
    ];
    let worst = checks.iter().map(|&(a, b)| rel(a, b)).fold(0.0, f64::max);
    outcome(
        6,
        TITLE,
        worst < 0.005,
        format!(
            "v = {:.1} m/s, d0 = {:.3}/{:.3} μm, r_s = {:.4}/{:.4}, L_c = {:.2} μm; worst {:.2}% (< 0.5%)",
            g3.v_e_m_per_s, g3.d0_um, g4.d0_um, g3.r_s, g4.r_s, g3.l_c_um, 100.0 * worst
        ),
    )
}

/// Geometry used for echo simulations: the long end of the measured
/// rise-to-dip interval.
pub fn echo_geometry() -> tof::TofGeometry {
    tof::geometry_from_timing(&TofInput {
        p_nm: presets::IDT_PERIOD_NM,
        f_center_mhz: presets::CENTER_FREQ_MHZ,
        d1_um: presets::IDT_GRATING_GAP_UM,
        dt1_ns: 4.0,
        dt2_ns: 27.0,
    })
    .expect("measured timings are valid")
}

/// Echo spacing equals the cavity round trip; a short Gaussian pulse
/// resolves the early sub-echo and a long one does not.
pub fn echo_train_features() -> Outcome {
    const TITLE: &str = "echo train features";
    let model = EchoModel::from_geometry(&echo_geometry());
    let run = |len| tof::simulate_echo(&model, len, Envelope::Gaussian, 300.0);
    let (short, long) = match (run(12.0), run(30.0)) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => return outcome(7, TITLE, false, format!("{a:?} {b:?}")),
    };
    // cluster maxima of the long-pulse train
    let peaks = tof::find_echo_peaks(&long, 0.05);
    let period = model.round_trip_ns();
    let gaps: Vec<f64> = peaks
        .windows(2)
        .map(|w| (long.times[w[1]] - long.times[w[0]]) * 1e3)
        .collect();
    let worst = gaps.iter().map(|g| (g - period).abs()).fold(0.0, f64::max);
    let spacing_ok = gaps.len() >= 4 && worst <= model.sample_dt_ns + 1e-9;
    let sub_short = tof::has_sub_echo(&model, &short, 12.0);
    let sub_long = tof::has_sub_echo(&model, &long, 30.0);
    outcome(
        7,
        TITLE,
        spacing_ok && sub_short && !sub_long,
        format!(
            "{} spacings, worst |Δ − 2L_c/v| = {:.3} ns (≤ {} ns, 2L_c/v = {:.2} ns); sub-echo 12 ns: {}, 30 ns: {}",
            gaps.len(),
            worst,
            model.sample_dt_ns,
            period,
            sub_short,
            sub_long
        ),
    )
}

/// Shape of the 99% reset-time curve against coupling ratio.
pub fn reset_sweep_shape() -> Outcome {
    const TITLE: &str = "reset sweep shape";
    let cfg = ResetConfig::default();
    let rows = match reset::sweep_reset(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(8, TITLE, false, e.to_string()),
    };
    let t99: Vec<f64> = rows.iter().map(|r| r.reset_times[0].or_inf()).collect();
    let bound = 10.0 / (2.0 * PI * cfg.kappa_r);
    let weak_ok = t99[0] > bound;
    let (k_min, &t_min) = t99
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    let r_min = rows[k_min].ratio;
    let min_ok = (0.25..=4.0).contains(&r_min);
    let decreasing = t99[..=k_min].windows(2).all(|w| w[1] < w[0]);
    let plateau_worst = rows
        .iter()
        .zip(&t99)
        .filter(|(r, _)| r.ratio >= 10.0)
        .map(|(_, &t)| t / t_min - 1.0)
        .fold(0.0, f64::max);
    let plateau_ok = plateau_worst <= 0.2;
    outcome(
        8,
        TITLE,
        weak_ok && min_ok && decreasing && plateau_ok,
        format!(
            "t(0.01) = {:.3} μs (> {:.3}); min {:.3} μs at ratio {:.3} (in [0.25, 4]); decreasing to min: {}; ratio ≥ 10 up to {:.0}% above min (≤ 20%)",
            t99[0],
            bound,
            t_min,
            r_min,
            decreasing,
            100.0 * plateau_worst
        ),
    )
}

/// Coupling ratios where the idle Purcell rate reaches 1%, 5% and 10% of γ.
pub fn purcell_impact_crossings() -> Outcome {
    const TITLE: &str = "purcell impact crossings";
    let cfg = ResetConfig::default();
    match reset::impact_crossings(&cfg, &[0.01, 0.05, 0.10]) {
        Ok(x) => {
            let worst = x
                .iter()
                .zip([3.39, 7.59, 10.73])
                .map(|(a, b)| rel(*a, b))
                .fold(0.0, f64::max);
            let near_ten = (x[2] / 10.0 - 1.0).abs() < 0.1;
            outcome(
                9,
                TITLE,
                worst < 0.01 && near_ten,
                format!(
                    "1% → {:.3}, 5% → {:.3}, 10% → {:.3}; worst {:.2}% (< 1%)",
                    x[0],
                    x[1],
                    x[2],
                    100.0 * worst
                ),
            )
        }
        Err(e) => outcome(9, TITLE, false, e.to_string()),
    }
}

/// Parameter recovery from seeded noisy synthetic traces.
pub fn fit_recovery() -> Outcome {
    let (_, gp) = mode_six_pair();
    let times = linspace(0.0, 3.0, 301);
    let clean = TimeSeries::from_fn(&times, "P_e", |t| analytic::pe_exact(t, 1.67, gp, 0.78))
        .expect("grid");
    let mut worst_g: f64 = 0.0;
    let mut worst_k: f64 = 0.0;
    let mut failures = 0;
    for seed in 0..20 {
        match fitting::fit_resonant(&fitting::add_noise(&clean, 0.01, seed), gp) {
            Ok(r) => {
                worst_g = worst_g.max(rel(r.fit.values[0], 1.67));
                worst_k = worst_k.max(rel(r.fit.values[1], 0.78));
            }
            Err(_) => failures += 1,
        }
    }

    let mut worst_t1: f64 = 0.0;
    let cases = [(1.0, 0.0, 15.0, 75.0), (0.95, 0.05, 1.2, 6.0)];
    for &(a, b, t1, span) in &cases {
        let grid = linspace(0.0, span, 200);
        let clean = TimeSeries::from_fn(&grid, "P_e", |t| a * (-t / t1).exp() + b).expect("grid");
        for seed in 0..20 {
            match fitting::fit_exponential(&fitting::add_noise(&clean, 0.01, 100 + seed)) {
                Ok(r) => worst_t1 = worst_t1.max(rel(r.values[1], t1)),
                Err(_) => failures += 1,
            }
        }
    }
    outcome(
        10,
        "fit recovery",
        failures == 0 && worst_g < 0.02 && worst_k < 0.1 && worst_t1 < 0.03,
        format!(
            "20 replicates each: worst |g| error {:.2}% (< 2%), κ {:.2}% (< 10%), T1 {:.2}% (< 3%); {} failed fits",
            100.0 * worst_g,
            100.0 * worst_k,
            100.0 * worst_t1,
            failures
        ),
    )
}

/// Sinusoidal profile through the measured signed couplings.
pub fn coupling_profile_fit() -> Outcome {
    const TITLE: &str = "coupling profile fit";
    let pts: Vec<(u32, f64)> = (1..=7u32)
        .map(|m| (m, presets::COUPLING_VG_075_MHZ[m as usize - 1]))
        .collect();
    match fitting::fit_coupling_profile(&pts) {
        Ok(r) => {
            let signs: String = (1..=7)
                .map(|m| {
                    if analytic::coupling_profile(m, r.values[0], r.values[1]) > 0.0 {
                        '+'
                    } else {
                        '-'
                    }
                })
                .collect();
            outcome(
                11,
                TITLE,
                r.residual_rms <= 0.25 && signs == "++--++-",
                format!(
                    "g0 = {:.3} MHz, φ = {:.3} rad, RMS {:.3} MHz (≤ 0.25), signs {} (want ++--++-)",
                    r.values[0], r.values[1], r.residual_rms, signs
                ),
            )
        }
        Err(e) => outcome(11, TITLE, false, e.to_string()),
    }
}

/// Invariant residuals over the standard engine runs: the single-mode
/// resonant run, the seven-mode resonant run and an engine reset sweep.
pub fn engine_hygiene() -> Outcome {
    const TITLE: &str = "engine hygiene";
    let mut total = Hygiene::default();
    let opts = EvolveOptions::default();

    let (pair, _) = mode_six_pair();
    let times = linspace(0.0, 3.0, 301);
    let single = engine::simulate_resonant_pe_with(
        &pair,
        &HilbertSpec::new(2, vec![3]).expect("small"),
        6,
        &times,
        &opts,
    );

    let device = presets::device_at_mode(GmonBias::MaxCoupling, 6);
    let spec = HilbertSpec::resonant(2, 7, 5, 2).expect("256-dimensional");
    let seven =
        engine::simulate_resonant_pe_with(&device, &spec, 6, &linspace(0.0, 0.5, 51), &opts);

    let cfg = ResetConfig {
        ratios: vec![0.05, 0.4, 3.0],
        t_max: 2.0,
        ..Default::default()
    };
    let sweep = reset::sweep_reset_with(&cfg, Dynamics::Engine(opts));

    match (single, seven, sweep) {
        (Ok(a), Ok(b), Ok((_, Some(c)))) => {
            total.merge(&a.hygiene);
            total.merge(&b.hygiene);
            total.merge(&c);
        }
        (a, b, c) => {
            return outcome(
                12,
                TITLE,
                false,
                format!("{:?} {:?} {:?}", a.err(), b.err(), c.err()),
            )
        }
    }
    let min_eig = total.min_eigenvalue.unwrap_or(f64::NAN);
    outcome(
        12,
        TITLE,
        total.max_trace_drift < TRACE_TOL
            && total.max_hermiticity_residual < HERMITICITY_TOL
            && min_eig > -POSITIVITY_TOL,
        format!(
            "{} states: trace drift {:.1e}, hermiticity {:.1e}, min eigenvalue {:.1e}",
            total.checked_states, total.max_trace_drift, total.max_hermiticity_residual, min_eig
        ),
    )
}

/// Regime of each mode at the given bias, with the qubit on resonance.
pub fn regime_table(bias: GmonBias) -> Vec<(u32, f64, f64, f64, analytic::RegimeLabel)> {
    (1..=7u32)
        .map(|m| {
            let p = presets::device_at_mode(bias, m);
            let gp = analytic::gamma_prime(&p, m).expect("preset device is valid");
            let mode = p.mode(m).expect("preset mode");
            (
                m,
                mode.g,
                gp,
                mode.kappa,
                analytic::classify_regime(mode.g, gp, mode.kappa),
            )
        })
        .collect()
}
