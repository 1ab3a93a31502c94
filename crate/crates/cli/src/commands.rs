//! Subcommand configurations and runners. Every configuration is a TOML
//! table whose fields all have defaults, so an absent `--config` reproduces
//! the measured device.

use crate::output::{num, write_json, Table};
use anyhow::{anyhow, Context};
use cqad_core::acceptance;
use cqad_core::analytic;
use cqad_core::engine::{self, EvolveOptions, Hygiene};
use cqad_core::fitting::{self, FitResult, ResonantModel};
use cqad_core::model::{linspace, HilbertSpec, SystemParams, TimeSeries};
use cqad_core::presets::{self, GmonBias};
use cqad_core::reset::{self, Dynamics, ResetConfig};
use cqad_core::tof::{self, EchoModel, Envelope, TofInput};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Failure classes, mapped to distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "usage error: {e:#}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

fn numerical(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Numerical(e.into())
}

/// Reads a TOML configuration, or the defaults when no path is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(usage)?;
    toml::from_str(&text)
        .with_context(|| format!("malformed config {}", path.display()))
        .map_err(usage)
}

pub struct RunContext {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bias {
    Off,
    Dispersive,
    #[default]
    MaxCoupling,
}

impl From<Bias> for GmonBias {
    fn from(b: Bias) -> Self {
        match b {
            Bias::Off => GmonBias::Off,
            Bias::Dispersive => GmonBias::Dispersive,
            Bias::MaxCoupling => GmonBias::MaxCoupling,
        }
    }
}

/// Measured device at a coupler bias, unless an explicit `[device]` table
/// replaces it.
#[derive(Debug, Clone, Default)]
pub struct DeviceChoice {
    pub bias: Bias,
    pub device: Option<SystemParams>,
}

impl DeviceChoice {
    /// The device, with the intrinsic qubit rate measured at `mode` when
    /// the preset is used.
    fn at_mode(&self, mode: u32) -> Result<SystemParams> {
        match &self.device {
            Some(d) => d.clone().validate().map_err(usage),
            None => Ok(presets::device_at_mode(self.bias.into(), mode)),
        }
    }

    fn idle(&self) -> Result<SystemParams> {
        match &self.device {
            Some(d) => d.clone().validate().map_err(usage),
            None => Ok(presets::device(self.bias.into())),
        }
    }
}

fn mode_indices(p: &SystemParams, requested: &Option<Vec<u32>>) -> Result<Vec<u32>> {
    match requested {
        None => Ok(p.modes.iter().map(|m| m.index).collect()),
        Some(list) => {
            for &m in list {
                if p.mode(m).is_none() {
                    return Err(usage(anyhow!("mode {m} is not part of the device")));
                }
            }
            Ok(list.clone())
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub bias: Bias,
    pub device: Option<SystemParams>,
    /// Modes to run; all modes of the device when absent.
    pub modes: Option<Vec<u32>>,
    pub t_max_us: f64,
    pub points: usize,
    /// Fock levels kept for the resonant mode.
    pub mode_levels: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            bias: Bias::MaxCoupling,
            device: None,
            modes: None,
            t_max_us: 3.0,
            points: 301,
            mode_levels: 3,
        }
    }
}

#[derive(Serialize)]
struct EvolveSummaryRow {
    mode: u32,
    g_mhz: f64,
    kappa_mhz: f64,
    gamma_prime_mhz: f64,
    regime: analytic::Regime,
    max_engine_vs_exact: f64,
    engine_steps: usize,
}

#[derive(Serialize)]
struct EvolveSummary {
    modes: Vec<EvolveSummaryRow>,
    hygiene: HygieneJson,
}

#[derive(Serialize)]
struct HygieneJson {
    max_trace_drift: f64,
    max_hermiticity_residual: f64,
    min_eigenvalue: Option<f64>,
    checked_states: usize,
}

impl From<Hygiene> for HygieneJson {
    fn from(h: Hygiene) -> Self {
        Self {
            max_trace_drift: h.max_trace_drift,
            max_hermiticity_residual: h.max_hermiticity_residual,
            min_eigenvalue: h.min_eigenvalue,
            checked_states: h.checked_states,
        }
    }
}

/// Resonant swap per mode: the qubit is tuned onto the mode and decays at
/// the Purcell-corrected rate of the other modes.
pub fn evolve(ctx: &RunContext) -> Result<()> {
    let cfg: EvolveConfig = load_config(ctx.config.as_deref())?;
    if !cfg.t_max_us.is_finite() || cfg.t_max_us <= 0.0 || cfg.points < 2 || cfg.mode_levels < 2 {
        return Err(usage(anyhow!(
            "need finite t_max_us > 0, points ≥ 2 and mode_levels ≥ 2"
        )));
    }
    let times = linspace(0.0, cfg.t_max_us, cfg.points);
    let choice = DeviceChoice {
        bias: cfg.bias,
        device: cfg.device.clone(),
    };
    let indices = mode_indices(&choice.idle()?, &cfg.modes)?;
    let mut table = Table::new(&["mode", "t_us", "pe_engine", "pe_exact", "pe_approx"]);
    let mut rows = Vec::new();
    let mut hygiene = Hygiene::default();
    for m in indices {
        let device = choice.at_mode(m)?;
        let gp = analytic::gamma_prime(&device, m).map_err(numerical)?;
        let mode = *device.mode(m).expect("checked above");
        let mut pair = device.clone();
        pair.modes.retain(|x| x.index == m);
        pair.qubit.gamma = gp;
        let spec = HilbertSpec::new(2, vec![cfg.mode_levels]).map_err(usage)?;
        let run =
            engine::simulate_resonant_pe_with(&pair, &spec, m, &times, &EvolveOptions::default())
                .map_err(numerical)?;
        hygiene.merge(&run.hygiene);
        let mut worst: f64 = 0.0;
        for (t, pe) in run.series.iter() {
            let exact = analytic::pe_exact(t, mode.g, gp, mode.kappa);
            let approx = analytic::pe_paper(t, mode.g, gp, mode.kappa).unwrap_or(f64::NAN);
            worst = worst.max((pe - exact).abs());
            table.push(vec![
                m.to_string(),
                num(t),
                num(pe),
                num(exact),
                num(approx),
            ]);
        }
        rows.push(EvolveSummaryRow {
            mode: m,
            g_mhz: mode.g,
            kappa_mhz: mode.kappa,
            gamma_prime_mhz: gp,
            regime: analytic::classify_regime(mode.g, gp, mode.kappa).kind,
            max_engine_vs_exact: worst,
            engine_steps: run.stats.accepted,
        });
    }
    table
        .write(&ctx.out.join("evolve.csv"))
        .map_err(numerical)?;
    write_json(
        &ctx.out.join("evolve_summary.json"),
        &EvolveSummary {
            modes: rows,
            hygiene: hygiene.into(),
        },
    )
    .map_err(numerical)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StarkConfig {
    pub bias: Bias,
    pub device: Option<SystemParams>,
    /// Mean phonon numbers at which to tabulate the shift.
    pub nbar: Vec<f64>,
}

impl Default for StarkConfig {
    fn default() -> Self {
        Self {
            bias: Bias::Dispersive,
            device: None,
            nbar: vec![0.0, 1.0, 2.0, 5.0, 10.0],
        }
    }
}

/// Dispersive shift per mode at the idle point and the Stark shift it
/// produces for each phonon number.
pub fn stark(ctx: &RunContext) -> Result<()> {
    let cfg: StarkConfig = load_config(ctx.config.as_deref())?;
    let device = DeviceChoice {
        bias: cfg.bias,
        device: cfg.device,
    }
    .idle()?;
    let mut table = Table::new(&[
        "mode",
        "f_mhz",
        "g_mhz",
        "detuning_mhz",
        "chi_khz",
        "nbar",
        "shift_khz",
    ]);
    for m in &device.modes {
        let delta = device.qubit.f01 - m.f;
        let chi = analytic::chi_dispersive(m.g, delta, device.qubit.ec).map_err(numerical)?;
        for &n in &cfg.nbar {
            let shift = analytic::stark_shift(chi, n).map_err(usage)?;
            table.push(vec![
                m.index.to_string(),
                num(m.f),
                num(m.g),
                num(delta),
                num(chi * 1e3),
                num(n),
                num(shift * 1e3),
            ]);
        }
    }
    table.write(&ctx.out.join("stark.csv")).map_err(numerical)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurcellConfig {
    pub bias: Bias,
    pub device: Option<SystemParams>,
    /// Qubit frequency for the idle Purcell rate; the device `f01` when absent.
    pub f_idle_mhz: Option<f64>,
}

impl Default for PurcellConfig {
    fn default() -> Self {
        Self {
            bias: Bias::MaxCoupling,
            device: None,
            f_idle_mhz: None,
        }
    }
}

#[derive(Serialize)]
struct PurcellSummary {
    f_idle_mhz: f64,
    gamma0_mhz: f64,
    gamma_idle_mhz: f64,
}

/// Total qubit decay while resonant with each mode, and the idle Purcell
/// rate of the whole device.
pub fn purcell(ctx: &RunContext) -> Result<()> {
    let cfg: PurcellConfig = load_config(ctx.config.as_deref())?;
    let choice = DeviceChoice {
        bias: cfg.bias,
        device: cfg.device,
    };
    let idle = choice.idle()?;
    let printed = (choice.device.is_none()).then(|| GmonBias::from(cfg.bias).total_gamma_khz());
    let mut table = Table::new(&[
        "mode",
        "g_mhz",
        "kappa_mhz",
        "intrinsic_khz",
        "gamma_prime_khz",
        "printed_khz",
    ]);
    for m in &idle.modes {
        let device = choice.at_mode(m.index)?;
        let gp = analytic::gamma_prime(&device, m.index).map_err(numerical)?;
        let printed = printed
            .and_then(|p| p.get(m.index as usize - 1).copied())
            .unwrap_or(f64::NAN);
        table.push_nums(&[
            m.index as f64,
            m.g,
            m.kappa,
            device.qubit.gamma * 1e3,
            gp * 1e3,
            printed,
        ]);
    }
    table
        .write(&ctx.out.join("purcell.csv"))
        .map_err(numerical)?;
    let f_idle = cfg.f_idle_mhz.unwrap_or(idle.qubit.f01);
    let gamma_idle = analytic::purcell_idle(&idle, f_idle, idle.qubit.gamma).map_err(numerical)?;
    write_json(
        &ctx.out.join("purcell_summary.json"),
        &PurcellSummary {
            f_idle_mhz: f_idle,
            gamma0_mhz: idle.qubit.gamma,
            gamma_idle_mhz: gamma_idle,
        },
    )
    .map_err(numerical)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    #[default]
    Exponential,
    /// Exact resonant solution.
    Resonant,
    /// Closed-form approximation of the resonant solution.
    ResonantApprox,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// CSV with a header row; first column time (μs), second the signal.
    pub input: PathBuf,
    #[serde(default)]
    pub model: FitModel,
    /// Fixed qubit decay for the resonant models, MHz.
    pub gamma_prime_mhz: Option<f64>,
}

#[derive(Serialize)]
struct FitJson {
    model: &'static str,
    converged: bool,
    iterations: usize,
    residual_rms: f64,
    params: Vec<FitParam>,
    oscillatory: Option<bool>,
}

#[derive(Serialize)]
struct FitParam {
    name: String,
    value: f64,
    std_error: f64,
}

fn fit_json(model: &'static str, r: &FitResult, oscillatory: Option<bool>) -> FitJson {
    FitJson {
        model,
        converged: r.converged,
        iterations: r.iterations,
        residual_rms: r.residual_rms,
        params: r
            .param_names
            .iter()
            .zip(&r.values)
            .zip(&r.std_errors)
            .map(|((n, &v), &e)| FitParam {
                name: n.to_string(),
                value: v,
                std_error: e,
            })
            .collect(),
        oscillatory,
    }
}

fn read_series(path: &Path) -> Result<TimeSeries> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(usage)?;
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(usage)?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| anyhow!("row {} has fewer than two columns", k + 2))
                .and_then(|s| {
                    s.trim()
                        .parse::<f64>()
                        .with_context(|| format!("row {}: {s:?} is not a number", k + 2))
                })
                .map_err(usage)
        };
        t.push(field(0)?);
        v.push(field(1)?);
    }
    TimeSeries::new(t, v, path.display().to_string()).map_err(usage)
}

/// Fits a measured or synthetic trace with the named model.
pub fn fit(ctx: &RunContext) -> Result<()> {
    let Some(path) = ctx.config.as_deref() else {
        return Err(usage(anyhow!(
            "fit needs --config naming the input CSV and model"
        )));
    };
    let cfg: FitConfig = load_config(Some(path))?;
    // input paths are relative to the config file
    let input = path.parent().unwrap_or(Path::new(".")).join(&cfg.input);
    let data = read_series(&input)?;
    let gp = || {
        cfg.gamma_prime_mhz
            .ok_or_else(|| usage(anyhow!("resonant models need gamma_prime_mhz")))
    };
    let json = match cfg.model {
        FitModel::Exponential => fit_json(
            "exponential",
            &fitting::fit_exponential(&data).map_err(numerical)?,
            None,
        ),
        FitModel::Resonant => {
            let r = fitting::fit_resonant_with(&data, gp()?, ResonantModel::Exact)
                .map_err(numerical)?;
            fit_json("resonant", &r.fit, Some(r.oscillatory))
        }
        FitModel::ResonantApprox => {
            let r = fitting::fit_resonant_with(&data, gp()?, ResonantModel::Approximate)
                .map_err(numerical)?;
            fit_json("resonant-approx", &r.fit, Some(r.oscillatory))
        }
    };
    write_json(&ctx.out.join("fit.json"), &json).map_err(numerical)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TofConfig {
    pub p_nm: f64,
    pub f_center_mhz: f64,
    pub d1_um: f64,
    pub dt1_ns: f64,
    pub dt2_ns: f64,
}

impl Default for TofConfig {
    fn default() -> Self {
        Self {
            p_nm: presets::IDT_PERIOD_NM,
            f_center_mhz: presets::CENTER_FREQ_MHZ,
            d1_um: presets::IDT_GRATING_GAP_UM,
            dt1_ns: 3.0,
            dt2_ns: 27.0,
        }
    }
}

impl TofConfig {
    fn input(&self) -> TofInput {
        TofInput {
            p_nm: self.p_nm,
            f_center_mhz: self.f_center_mhz,
            d1_um: self.d1_um,
            dt1_ns: self.dt1_ns,
            dt2_ns: self.dt2_ns,
        }
    }
}

/// Cavity geometry from the measured time-of-flight intervals.
pub fn tof(ctx: &RunContext) -> Result<()> {
    let cfg: TofConfig = load_config(ctx.config.as_deref())?;
    let g = tof::geometry_from_timing(&cfg.input()).map_err(usage)?;
    write_json(&ctx.out.join("tof.json"), &g).map_err(numerical)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EchoConfig {
    /// Geometry source, as for `tof`.
    pub timing: TofConfig,
    pub pulse_len_ns: f64,
    pub envelope: Envelope,
    pub total_ns: f64,
    pub mirror_reflectivity: f64,
    pub loss_per_us: f64,
    pub sample_dt_ns: f64,
    /// Gaussian noise added to the trace, drawn from `--seed`.
    pub noise: f64,
}

impl Default for EchoConfig {
    fn default() -> Self {
        Self {
            timing: TofConfig {
                dt1_ns: 4.0,
                ..TofConfig::default()
            },
            pulse_len_ns: 12.0,
            envelope: Envelope::Gaussian,
            total_ns: 300.0,
            mirror_reflectivity: 0.9,
            loss_per_us: 0.0,
            sample_dt_ns: 0.1,
            noise: 0.0,
        }
    }
}

#[derive(Serialize)]
struct EchoSummary {
    round_trip_ns: f64,
    peak_times_ns: Vec<f64>,
    sub_echo: bool,
}

/// Echo train seen at the output transducer for one input pulse.
pub fn echo(ctx: &RunContext) -> Result<()> {
    let cfg: EchoConfig = load_config(ctx.config.as_deref())?;
    let geometry = tof::geometry_from_timing(&cfg.timing.input()).map_err(usage)?;
    let model = EchoModel {
        mirror_reflectivity: cfg.mirror_reflectivity,
        loss_per_us: cfg.loss_per_us,
        sample_dt_ns: cfg.sample_dt_ns,
        ..EchoModel::from_geometry(&geometry)
    };
    let clean =
        tof::simulate_echo(&model, cfg.pulse_len_ns, cfg.envelope, cfg.total_ns).map_err(usage)?;
    let trace = if cfg.noise > 0.0 {
        fitting::add_noise(&clean, cfg.noise, ctx.seed)
    } else {
        clean.clone()
    };
    let mut table = Table::new(&["t_ns", "amplitude"]);
    for (t, a) in trace.iter() {
        table.push_nums(&[t * 1e3, a]);
    }
    table.write(&ctx.out.join("echo.csv")).map_err(numerical)?;
    let peaks = tof::find_echo_peaks(&clean, 0.05);
    write_json(
        &ctx.out.join("echo_summary.json"),
        &EchoSummary {
            round_trip_ns: model.round_trip_ns(),
            peak_times_ns: peaks.iter().map(|&i| clean.times[i] * 1e3).collect(),
            sub_echo: tof::has_sub_echo(&model, &clean, cfg.pulse_len_ns),
        },
    )
    .map_err(numerical)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct ResetSweepConfig {
    #[serde(flatten)]
    pub sweep: ResetConfig,
    /// Integrate the master equation instead of the closed form.
    pub engine: bool,
    /// Purcell-impact levels to invert, as fractions of the intrinsic rate.
    pub impact_levels: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct Minimum {
    threshold: f64,
    ratio: Option<f64>,
    t_reset_us: Option<f64>,
}

#[derive(Serialize)]
struct ImpactCrossing {
    level: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct ResetSummary {
    minima: Vec<Minimum>,
    impact_crossings: Vec<ImpactCrossing>,
    hygiene: Option<HygieneJson>,
}

/// Reset time against coupling ratio for each fidelity threshold.
pub fn reset_sweep(ctx: &RunContext) -> Result<()> {
    let cfg: ResetSweepConfig = load_config(ctx.config.as_deref())?;
    cfg.sweep.validate().map_err(usage)?;
    let dynamics = if cfg.engine {
        Dynamics::Engine(EvolveOptions::default())
    } else {
        Dynamics::Exact
    };
    let (rows, hygiene) = reset::sweep_reset_with(&cfg.sweep, dynamics).map_err(numerical)?;
    let mut header = vec!["ratio".to_string()];
    header.extend(cfg.sweep.thresholds.iter().map(|&th| threshold_column(th)));
    let mut table = Table::new(&header);
    for r in &rows {
        let mut row = vec![r.ratio];
        row.extend(r.reset_times.iter().map(|t| t.or_inf()));
        table.push_nums(&row);
    }
    table
        .write(&ctx.out.join("reset_sweep.csv"))
        .map_err(numerical)?;

    let minima = cfg
        .sweep
        .thresholds
        .iter()
        .enumerate()
        .map(|(k, &threshold)| {
            let m = reset::sweep_minimum(&rows, k);
            Minimum {
                threshold,
                ratio: m.map(|x| x.0),
                t_reset_us: m.map(|x| x.1),
            }
        })
        .collect();
    let levels = cfg.impact_levels.unwrap_or_else(|| vec![0.01, 0.05, 0.10]);
    let crossings = reset::impact_crossings(&cfg.sweep, &levels).map_err(usage)?;
    write_json(
        &ctx.out.join("reset_summary.json"),
        &ResetSummary {
            minima,
            impact_crossings: levels
                .iter()
                .zip(crossings)
                .map(|(&level, ratio)| ImpactCrossing { level, ratio })
                .collect(),
            hygiene: hygiene.map(Into::into),
        },
    )
    .map_err(numerical)
}

/// Column name for a fidelity threshold: 0.99 → `t_reset_99_us`.
fn threshold_column(th: f64) -> String {
    let digits = format!("{th}");
    format!("t_reset_{}_us", digits.trim_start_matches("0."))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimesConfig {
    pub bias: Bias,
    pub device: Option<SystemParams>,
}

/// Damping regime of each mode with the qubit tuned onto it.
pub fn regimes(ctx: &RunContext) -> Result<()> {
    let cfg: RegimesConfig = load_config(ctx.config.as_deref())?;
    let choice = DeviceChoice {
        bias: cfg.bias,
        device: cfg.device,
    };
    let idle = choice.idle()?;
    let mut table = Table::new(&[
        "mode",
        "g_mhz",
        "gamma_prime_khz",
        "kappa_mhz",
        "discriminant_mhz",
        "regime",
    ]);
    for m in &idle.modes {
        let device = choice.at_mode(m.index)?;
        let gp = analytic::gamma_prime(&device, m.index).map_err(numerical)?;
        let label = analytic::classify_regime(m.g, gp, m.kappa);
        table.push(vec![
            m.index.to_string(),
            num(m.g),
            num(gp * 1e3),
            num(m.kappa),
            num(label.discriminant),
            label.kind.to_string(),
        ]);
    }
    table.write(&ctx.out.join("regimes.csv")).map_err(numerical)
}

#[derive(Serialize)]
struct SelftestLine {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
}

/// Runs every acceptance check; a numerical failure if any check fails.
pub fn selftest(ctx: &RunContext) -> Result<()> {
    if ctx.config.is_some() {
        return Err(usage(anyhow!("selftest takes no configuration")));
    }
    let outcomes = acceptance::run_all();
    for o in &outcomes {
        println!("{o}");
    }
    let lines: Vec<SelftestLine> = outcomes
        .iter()
        .map(|o| SelftestLine {
            id: o.id,
            title: o.title,
            passed: o.passed,
            detail: o.detail.clone(),
        })
        .collect();
    write_json(&ctx.out.join("selftest.json"), &lines).map_err(numerical)?;
    let failed: Vec<u32> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.id)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(numerical(anyhow!("checks {failed:?} failed")))
    }
}
