//! Lindblad master-equation integration.
//!
//! The state is the full density matrix, stepped with an adaptive
//! Dormand–Prince 5(4) scheme on
//!
//! ```text
//! dρ/dt = −i[H, ρ] + Σ_k (L_k ρ L_k† − ½{L_k†L_k, ρ})
//! ```
//!
//! written as `−i(H_eff ρ − ρ H_eff†) + Σ L ρ L†` with `H_eff = H − (i/2)Σ L†L`.
//! Operators are stored row-compressed so multimode runs only pay for their
//! nonzeros. Every output state is checked for unit trace, Hermiticity and
//! positivity; violations are reported as errors, never clipped.

mod dopri;
mod sparse;

use crate::analytic::{self, AnalyticError};
use crate::model::{angular, HilbertSpec, ModelError, SystemParams, TimeSeries};
use crate::operators::{self, OperatorError, OperatorMatrix};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use sparse::{adjoint_into, SparseOp};
use std::fmt;
use thiserror::Error;

pub use dopri::StepStats;

/// |Tr ρ − 1| bound.
pub const TRACE_TOL: f64 = 1e-8;
/// max |ρ − ρ†| bound.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue is `−POSITIVITY_TOL`.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Above this dimension positivity is certified by a shifted Cholesky
/// factorisation instead of a full eigen-decomposition.
const EIGEN_DIM_LIMIT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    Trace,
    Hermiticity,
    Positivity,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Invariant::Trace => "trace",
            Invariant::Hermiticity => "hermiticity",
            Invariant::Positivity => "positivity",
        })
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{what} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("output times must start at 0 and be strictly ascending")]
    BadTimes,
    #[error("invalid options: {0}")]
    Options(String),
    #[error("step size underflow at t = {t} μs (h = {h:e} μs)")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget exhausted at t = {t} μs")]
    TooManySteps { t: f64 },
    #[error("{which} invariant violated at t = {t} μs (value {value:e})")]
    InvariantViolation {
        which: Invariant,
        t: f64,
        value: f64,
    },
    #[error("observable is not Hermitian (residual {0:e})")]
    NonHermitian(f64),
    #[error("expectation value has imaginary residue {0:e}")]
    ImaginaryResidue(f64),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

impl From<dopri::Failure> for EngineError {
    fn from(f: dopri::Failure) -> Self {
        match f {
            dopri::Failure::StepUnderflow { t, h } => EngineError::StepUnderflow { t, h },
            dopri::Failure::TooManySteps { t } => EngineError::TooManySteps { t },
        }
    }
}

/// Finite-dimensional density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator(DMatrix<Complex64>);

impl DensityOperator {
    /// Wraps `m` after checking trace, Hermiticity and positivity.
    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self, EngineError> {
        if !m.is_square() {
            return Err(EngineError::DimensionMismatch {
                what: "density matrix columns".into(),
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let rho = Self(m);
        if let Some((which, value)) = rho.violation() {
            return Err(EngineError::InvariantViolation {
                which,
                t: 0.0,
                value,
            });
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<Complex64>) -> Self {
        Self(m)
    }

    /// Pure state `|ψ⟩⟨ψ|` (normalised internally).
    pub fn pure(psi: &[Complex64]) -> Self {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let v = nalgebra::DVector::from_iterator(psi.len(), psi.iter().map(|z| z / norm));
        Self(&v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn trace_drift(&self) -> f64 {
        (self.0.trace() - Complex64::new(1.0, 0.0)).norm()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        OperatorMatrix::from_matrix(self.0.clone()).hermiticity_residual()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    /// First violated invariant, if any.
    pub fn violation(&self) -> Option<(Invariant, f64)> {
        let drift = self.trace_drift();
        if drift >= TRACE_TOL {
            return Some((Invariant::Trace, drift));
        }
        let herm = self.hermiticity_residual();
        if herm >= HERMITICITY_TOL {
            return Some((Invariant::Hermiticity, herm));
        }
        match self.positivity() {
            Positivity::Exact(v) if v <= -POSITIVITY_TOL => Some((Invariant::Positivity, v)),
            Positivity::Failed => Some((Invariant::Positivity, self.min_eigenvalue())),
            _ => None,
        }
    }

    fn positivity(&self) -> Positivity {
        if self.dim() <= EIGEN_DIM_LIMIT {
            return Positivity::Exact(self.min_eigenvalue());
        }
        let n = self.dim();
        let shifted = (&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0)
            + DMatrix::<Complex64>::identity(n, n) * Complex64::new(POSITIVITY_TOL, 0.0);
        if nalgebra::Cholesky::new(shifted).is_some() {
            Positivity::Certified
        } else {
            Positivity::Failed
        }
    }
}

enum Positivity {
    Exact(f64),
    Certified,
    Failed,
}

/// Integrator settings. Tolerances apply per density-matrix entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step, μs.
    pub max_step: f64,
    /// Keep every output state (otherwise only the last).
    pub store_states: bool,
    pub check_positivity: bool,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            store_states: true,
            check_positivity: true,
            max_steps: 10_000_000,
        }
    }
}

impl EvolveOptions {
    fn validate(&self) -> Result<(), EngineError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(EngineError::Options("tolerances must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(EngineError::Options("max_step must be positive".into()));
        }
        Ok(())
    }
}

/// Worst invariant residuals seen over all output times of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hygiene {
    pub max_trace_drift: f64,
    pub max_hermiticity_residual: f64,
    /// Smallest eigenvalue seen, when computed exactly.
    pub min_eigenvalue: Option<f64>,
    pub checked_states: usize,
}

impl Default for Hygiene {
    fn default() -> Self {
        Self {
            max_trace_drift: 0.0,
            max_hermiticity_residual: 0.0,
            min_eigenvalue: None,
            checked_states: 0,
        }
    }
}

impl Hygiene {
    pub fn merge(&mut self, other: &Hygiene) {
        self.max_trace_drift = self.max_trace_drift.max(other.max_trace_drift);
        self.max_hermiticity_residual = self
            .max_hermiticity_residual
            .max(other.max_hermiticity_residual);
        self.min_eigenvalue = match (self.min_eigenvalue, other.min_eigenvalue) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.checked_states += other.checked_states;
    }

    fn check(
        &mut self,
        t: f64,
        rho: &DensityOperator,
        positivity: bool,
    ) -> Result<(), EngineError> {
        let drift = rho.trace_drift();
        let herm = rho.hermiticity_residual();
        self.max_trace_drift = self.max_trace_drift.max(drift);
        self.max_hermiticity_residual = self.max_hermiticity_residual.max(herm);
        self.checked_states += 1;
        if drift >= TRACE_TOL {
            return Err(EngineError::InvariantViolation {
                which: Invariant::Trace,
                t,
                value: drift,
            });
        }
        if herm >= HERMITICITY_TOL {
            return Err(EngineError::InvariantViolation {
                which: Invariant::Hermiticity,
                t,
                value: herm,
            });
        }
        if positivity {
            let bad = match rho.positivity() {
                Positivity::Exact(v) => {
                    self.min_eigenvalue = Some(self.min_eigenvalue.map_or(v, |m| m.min(v)));
                    (v <= -POSITIVITY_TOL).then_some(v)
                }
                Positivity::Certified => None,
                Positivity::Failed => Some(rho.min_eigenvalue()),
            };
            if let Some(value) = bad {
                return Err(EngineError::InvariantViolation {
                    which: Invariant::Positivity,
                    t,
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Output of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub times: Vec<f64>,
    /// One state per output time, or only the final state when
    /// `store_states` is off.
    pub states: Vec<DensityOperator>,
    pub stats: StepStats,
    pub hygiene: Hygiene,
}

/// Output of [`evolve_observables`]: `values[k][i]` is observable `k` at `times[i]`.
#[derive(Debug, Clone)]
pub struct ObservableTrace {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub stats: StepStats,
    pub hygiene: Hygiene,
}

struct Liouvillian {
    n: usize,
    heff: SparseOp,
    jumps: Vec<SparseOp>,
    a: Vec<Complex64>,
    at: Vec<Complex64>,
}

impl Liouvillian {
    fn new(h: &OperatorMatrix, collapse: &[OperatorMatrix]) -> Self {
        let n = h.dim();
        let mut heff = h.matrix().clone();
        let half_i = Complex64::new(0.0, 0.5);
        for l in collapse {
            let ldl = l.matrix().adjoint() * l.matrix();
            heff -= ldl * half_i;
        }
        Self {
            n,
            heff: SparseOp::from_dense(&heff),
            jumps: collapse
                .iter()
                .map(|l| SparseOp::from_dense(l.matrix()))
                .collect(),
            a: vec![Complex64::new(0.0, 0.0); n * n],
            at: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    /// `out = L(ρ)` for Hermitian row-major `ρ`.
    fn apply(&mut self, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let i = Complex64::new(0.0, 1.0);
        // −i H_eff ρ + i (H_eff ρ)†
        self.heff.mul_dense(rho, &mut self.a, n);
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = -i * self.a[r * n + c] + i * self.a[c * n + r].conj();
            }
        }
        // L ρ L† = L (L ρ)†
        for l in &self.jumps {
            l.mul_dense(rho, &mut self.a, n);
            adjoint_into(&self.a, &mut self.at, n);
            l.mul_dense_add(&self.at, out, n);
        }
    }
}

fn check_inputs(
    h: &OperatorMatrix,
    collapse: &[OperatorMatrix],
    rho0: &DensityOperator,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<(), EngineError> {
    opts.validate()?;
    let n = h.dim();
    if rho0.dim() != n {
        return Err(EngineError::DimensionMismatch {
            what: "initial state".into(),
            expected: n,
            got: rho0.dim(),
        });
    }
    for (k, l) in collapse.iter().enumerate() {
        if l.dim() != n {
            return Err(EngineError::DimensionMismatch {
                what: format!("collapse operator {k}"),
                expected: n,
                got: l.dim(),
            });
        }
    }
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EngineError::BadTimes);
    }
    Ok(())
}

fn run<F>(
    h: &OperatorMatrix,
    collapse: &[OperatorMatrix],
    rho0: &DensityOperator,
    times: &[f64],
    opts: &EvolveOptions,
    mut on_state: F,
) -> Result<(StepStats, Hygiene), EngineError>
where
    F: FnMut(usize, &DensityOperator) -> Result<(), EngineError>,
{
    check_inputs(h, collapse, rho0, times, opts)?;
    let n = h.dim();
    let mut liouv = Liouvillian::new(h, collapse);
    let y0: Vec<Complex64> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| rho0.matrix()[(r, c)])
        .collect();
    let tol = dopri::Tolerances {
        rel: opts.rel_tol,
        abs: opts.abs_tol,
        max_step: opts.max_step,
        max_steps: opts.max_steps,
    };
    let mut hygiene = Hygiene::default();
    let stats = dopri::integrate(
        |y, dy| liouv.apply(y, dy),
        &y0,
        times,
        &tol,
        |k, t, y| -> Result<(), EngineError> {
            let rho = DensityOperator(DMatrix::from_row_slice(n, n, y));
            hygiene.check(t, &rho, opts.check_positivity)?;
            on_state(k, &rho)
        },
    )?;
    Ok((stats, hygiene))
}

/// Evolves `rho0` under `H` and the dissipators `collapse`, returning the
/// state at each requested time (which must start at 0).
pub fn evolve(
    h: &OperatorMatrix,
    collapse: &[OperatorMatrix],
    rho0: &DensityOperator,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<Evolution, EngineError> {
    let mut states = Vec::with_capacity(if opts.store_states { times.len() } else { 1 });
    let last = times.len().saturating_sub(1);
    let (stats, hygiene) = run(h, collapse, rho0, times, opts, |k, rho| {
        if opts.store_states || k == last {
            states.push(rho.clone());
        }
        Ok(())
    })?;
    Ok(Evolution {
        times: times.to_vec(),
        states,
        stats,
        hygiene,
    })
}

/// Like [`evolve`] but records only expectation values of `observables`.
pub fn evolve_observables(
    h: &OperatorMatrix,
    collapse: &[OperatorMatrix],
    rho0: &DensityOperator,
    times: &[f64],
    observables: &[OperatorMatrix],
    opts: &EvolveOptions,
) -> Result<ObservableTrace, EngineError> {
    for op in observables {
        check_observable(op)?;
    }
    let mut values = vec![Vec::with_capacity(times.len()); observables.len()];
    let (stats, hygiene) = run(h, collapse, rho0, times, opts, |_, rho| {
        for (k, op) in observables.iter().enumerate() {
            values[k].push(expect(op, rho)?);
        }
        Ok(())
    })?;
    Ok(ObservableTrace {
        times: times.to_vec(),
        values,
        stats,
        hygiene,
    })
}

fn check_observable(op: &OperatorMatrix) -> Result<(), EngineError> {
    let residual = op.hermiticity_residual();
    if residual > 1e-12 * op.max_abs().max(1.0) {
        return Err(EngineError::NonHermitian(residual));
    }
    Ok(())
}

/// `Tr(ρ·op)` for Hermitian `op`.
pub fn expect(op: &OperatorMatrix, rho: &DensityOperator) -> Result<f64, EngineError> {
    if op.dim() != rho.dim() {
        return Err(EngineError::DimensionMismatch {
            what: "observable".into(),
            expected: rho.dim(),
            got: op.dim(),
        });
    }
    check_observable(op)?;
    let m = op.matrix();
    let r = rho.matrix();
    let n = op.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let o = m[(i, j)];
            if o != Complex64::new(0.0, 0.0) {
                acc += o * r[(j, i)];
            }
        }
    }
    if acc.im.abs() > 1e-10 {
        return Err(EngineError::ImaginaryResidue(acc.im));
    }
    Ok(acc.re)
}

/// Resonant-evolution run plus integrator diagnostics.
#[derive(Debug, Clone)]
pub struct ResonantRun {
    pub series: TimeSeries,
    pub stats: StepStats,
    pub hygiene: Hygiene,
    /// Total qubit decay rate used, MHz.
    pub gamma_prime: f64,
}

/// Qubit excited-state population after tuning the qubit onto mode
/// `resonant_index` and starting from `|e,0,…,0⟩`.
///
/// Uses the dispersive Hamiltonian in the frame of the resonant mode, a qubit
/// channel at the Purcell-corrected rate and the resonant mode's own decay.
/// Spectator modes start (and stay) in vacuum, so two levels each suffice.
pub fn simulate_resonant_pe(
    params: &SystemParams,
    spec: &HilbertSpec,
    resonant_index: u32,
    times: &[f64],
) -> Result<TimeSeries, EngineError> {
    Ok(simulate_resonant_pe_with(
        params,
        spec,
        resonant_index,
        times,
        &EvolveOptions::default(),
    )?
    .series)
}

pub fn simulate_resonant_pe_with(
    params: &SystemParams,
    spec: &HilbertSpec,
    resonant_index: u32,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<ResonantRun, EngineError> {
    params.check()?;
    let mode = *params
        .mode(resonant_index)
        .ok_or(OperatorError::UnknownMode(resonant_index))?;
    let pos = params.position(resonant_index).unwrap();
    let gamma_prime = analytic::gamma_prime(params, resonant_index)?;

    let mut tuned = params.clone();
    tuned.qubit.f01 = mode.f;
    let h = operators::hamiltonian_dispersive(&tuned, spec, resonant_index, mode.f)?;

    let mut collapse = Vec::with_capacity(2);
    if gamma_prime > 0.0 {
        let sm = operators::embed(&operators::sigma_minus(2)?, 0, spec)?;
        collapse.push(sm.scale(angular(gamma_prime).sqrt()));
    }
    let a = operators::embed(&operators::destroy(spec.mode_levels[pos])?, pos + 1, spec)?;
    collapse.push(a.scale(angular(mode.kappa).sqrt()));

    let rho0 = operators::initial_state(spec, true);
    let pe = operators::qubit_excited_projector(spec)?;
    let trace = evolve_observables(&h, &collapse, &rho0, times, &[pe], opts)?;
    let series = TimeSeries::new(
        times.to_vec(),
        trace.values.into_iter().next().unwrap(),
        format!("P_e mode {resonant_index}"),
    )?;
    Ok(ResonantRun {
        series,
        stats: trace.stats,
        hygiene: trace.hygiene,
        gamma_prime,
    })
}
