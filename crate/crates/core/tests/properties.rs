use cqad_core::analytic;
use cqad_core::engine;
use cqad_core::fitting;
use cqad_core::model::{linspace, HilbertSpec, ModeParams, QubitParams, SystemParams, TimeSeries};
use cqad_core::presets::{self, GmonBias};
use cqad_core::tof::{self, EchoModel, Envelope, TofInput};
use proptest::prelude::*;

fn system() -> impl Strategy<Value = SystemParams> {
    let qubit = (1000.0f64..9000.0, 50.0f64..400.0, 0.0f64..1.0);
    let mode = (-500.0f64..500.0, 1e-3f64..10.0, -5.0f64..5.0);
    (qubit, prop::collection::vec(mode, 0..8)).prop_map(|((f01, ec, gamma), ms)| SystemParams {
        qubit: QubitParams { f01, ec, gamma },
        modes: ms
            .into_iter()
            .enumerate()
            .map(|(k, (df, kappa, g))| ModeParams {
                index: 2 * k as u32 + 1,
                f: 4000.0 + 1000.0 * k as f64 + df,
                kappa,
                g,
            })
            .collect(),
    })
}

proptest! {
    #[test]
    fn toml_round_trip_is_byte_identical(p in system()) {
        let first = p.to_toml_string().unwrap();
        let parsed = SystemParams::from_toml_str(&first).unwrap();
        prop_assert_eq!(&parsed, &p);
        prop_assert_eq!(parsed.to_toml_string().unwrap(), first);
    }
}

#[test]
fn preset_devices_round_trip() {
    for bias in [GmonBias::Off, GmonBias::Dispersive, GmonBias::MaxCoupling] {
        let p = presets::device(bias);
        let s = p.to_toml_string().unwrap();
        assert_eq!(
            SystemParams::from_toml_str(&s)
                .unwrap()
                .to_toml_string()
                .unwrap(),
            s
        );
    }
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

#[test]
fn halving_noise_does_not_worsen_resonant_fits() {
    let gp = 0.0137;
    let times = linspace(0.0, 3.0, 301);
    let clean =
        TimeSeries::from_fn(&times, "P_e", |t| analytic::pe_exact(t, 1.67, gp, 0.78)).unwrap();
    let errors = |sigma: f64| {
        let (mut eg, mut ek) = (Vec::new(), Vec::new());
        for seed in 0..20 {
            let r = fitting::fit_resonant(&fitting::add_noise(&clean, sigma, seed), gp).unwrap();
            eg.push(r.fit.values[0].abs() - 1.67);
            ek.push(r.fit.values[1] - 0.78);
        }
        (rms(&eg), rms(&ek))
    };
    let mut prev = errors(0.04);
    for sigma in [0.02, 0.01, 0.005] {
        let next = errors(sigma);
        assert!(
            next.0 <= prev.0,
            "g error rose to {} at σ = {sigma}",
            next.0
        );
        assert!(
            next.1 <= prev.1,
            "κ error rose to {} at σ = {sigma}",
            next.1
        );
        prev = next;
    }
}

#[test]
fn halving_noise_does_not_worsen_exponential_fits() {
    let times = linspace(0.0, 6.0, 200);
    let clean = TimeSeries::from_fn(&times, "P_e", |t| 0.95 * (-t / 1.2).exp() + 0.05).unwrap();
    let error = |sigma: f64| {
        let e: Vec<f64> = (0..20)
            .map(|seed| {
                fitting::fit_exponential(&fitting::add_noise(&clean, sigma, seed))
                    .unwrap()
                    .values[1]
                    - 1.2
            })
            .collect();
        rms(&e)
    };
    let mut prev = error(0.04);
    for sigma in [0.02, 0.01, 0.005] {
        let next = error(sigma);
        assert!(next <= prev, "T1 error rose to {next} at σ = {sigma}");
        prev = next;
    }
}

#[test]
fn seeded_noise_is_reproducible() {
    let times = linspace(0.0, 1.0, 50);
    let clean = TimeSeries::from_fn(&times, "x", |t| t).unwrap();
    assert_eq!(
        fitting::add_noise(&clean, 0.1, 7),
        fitting::add_noise(&clean, 0.1, 7)
    );
    assert_ne!(
        fitting::add_noise(&clean, 0.1, 7),
        fitting::add_noise(&clean, 0.1, 8)
    );
}

fn geometry(dt1: f64) -> tof::TofGeometry {
    tof::geometry_from_timing(&TofInput {
        p_nm: presets::IDT_PERIOD_NM,
        f_center_mhz: presets::CENTER_FREQ_MHZ,
        d1_um: presets::IDT_GRATING_GAP_UM,
        dt1_ns: dt1,
        dt2_ns: 27.0,
    })
    .unwrap()
}

#[test]
fn echo_heights_decay_geometrically() {
    let mut model = EchoModel::from_geometry(&geometry(4.0));
    model.mirror_reflectivity = 0.95;
    model.loss_per_us = 0.5;
    let trace = tof::simulate_echo(&model, 30.0, Envelope::Gaussian, 300.0).unwrap();
    let peaks = tof::find_echo_peaks(&trace, 0.01);
    assert!(peaks.len() >= 6, "{} peaks", peaks.len());
    let logs: Vec<f64> = peaks.iter().map(|&i| trace.values[i].ln()).collect();
    let steps: Vec<f64> = logs.windows(2).map(|w| w[1] - w[0]).collect();
    for s in &steps {
        assert!((s - steps[0]).abs() < 1e-9, "{steps:?}");
    }
    // log-linear extraction of the propagation loss
    let period_us = model.round_trip_ns() * 1e-3;
    let loss = (2.0 * model.mirror_reflectivity.ln() - steps[0])
        / (2.0 * std::f64::consts::PI * period_us);
    assert!((loss - 0.5).abs() < 1e-6, "extracted loss {loss}");
}

#[test]
fn echo_arrivals_reproduce_measured_timings() {
    for dt1 in [3.0, 4.0] {
        let g = geometry(dt1);
        let model = EchoModel::from_geometry(&g);
        let paths = model.paths(100.0);
        let direct = paths[0].0;
        // the short right-mirror round trip arrives Δt₁ after the direct wave
        let right_first = 2.0 * (model.l_c_um - model.x_out_um) * 1e3 / model.v_e_m_per_s;
        assert!((right_first - dt1).abs() < 1e-9, "{right_first}");
        assert!(paths.iter().any(|p| (p.0 - direct - dt1).abs() < 1e-9));
        assert!(paths.iter().any(|p| (p.0 - direct - 27.0).abs() < 1e-9));
        let (back1, back2) = tof::timing_from_geometry(&g);
        assert!((back1 - dt1).abs() < 1e-9 && (back2 - 27.0).abs() < 1e-9);
    }
}

#[test]
fn concurrent_runs_match_serial_run() {
    let mut p = presets::device_at_mode(GmonBias::MaxCoupling, 6);
    p.modes.retain(|m| m.index == 6);
    let spec = HilbertSpec::new(2, vec![3]).unwrap();
    let times = linspace(0.0, 1.0, 101);
    let serial = engine::simulate_resonant_pe(&p, &spec, 6, &times).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (p, spec, times) = (p.clone(), spec.clone(), times.clone());
            std::thread::spawn(move || engine::simulate_resonant_pe(&p, &spec, 6, &times).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), serial);
    }
}
