//! Hamiltonians, collapse operators and initial states on the truncated
//! composite space.
//!
//! Tensor factors are ordered qubit first, then modes in the order they appear
//! in [`SystemParams::modes`] (ascending index). Basis state `|q, n1, n2, …⟩`
//! has flat index `((q·d1 + n1)·d2 + n2)…`.
//!
//! Two-level qubit convention: `σ_z = |g⟩⟨g| − |e⟩⟨e|`, so the excited state
//! has `⟨σ_z⟩ = −1` and `−(ω_q/2)σ_z` places `|e⟩` at `+ω_q/2`.
//!
//! Hamiltonians are returned in rad/μs, collapse operators in √(rad/μs).

use crate::analytic::{self, AnalyticError};
use crate::engine::DensityOperator;
use crate::model::{angular, HilbertSpec, ModelError, SystemParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("operator needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("slot {slot} out of range (space has {slots} slots)")]
    SlotOutOfRange { slot: usize, slots: usize },
    #[error("operator dimension {got} does not match slot dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("params have {params} modes but the Hilbert space has {spec}")]
    ModeCountMismatch { params: usize, spec: usize },
    #[error("no mode with index {0}")]
    UnknownMode(u32),
    #[error("dispersive model needs a two-level qubit, got {0} levels")]
    NotTwoLevel(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

/// Dense square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix(DMatrix<Complex64>);

impl OperatorMatrix {
    pub fn from_matrix(m: DMatrix<Complex64>) -> Self {
        assert!(m.is_square(), "operator must be square");
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry of `|A − A†|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Hermitian to within `rel_tol` of the largest entry.
    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        let scale = self.max_abs();
        self.hermiticity_residual() <= rel_tol * scale.max(f64::MIN_POSITIVE)
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        self.0
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Bosonic lowering operator: entry `(n−1, n) = √n`.
pub fn destroy(levels: usize) -> Result<OperatorMatrix, OperatorError> {
    if levels < 2 {
        return Err(OperatorError::TooFewLevels(levels));
    }
    let mut m = DMatrix::zeros(levels, levels);
    for n in 1..levels {
        m[(n - 1, n)] = real((n as f64).sqrt());
    }
    Ok(OperatorMatrix(m))
}

pub fn number(levels: usize) -> Result<OperatorMatrix, OperatorError> {
    let a = destroy(levels)?;
    Ok(a.adjoint().mul(&a))
}

/// `|g⟩⟨e|` on a qubit with `levels` levels.
pub fn sigma_minus(levels: usize) -> Result<OperatorMatrix, OperatorError> {
    if levels < 2 {
        return Err(OperatorError::TooFewLevels(levels));
    }
    let mut m = DMatrix::zeros(levels, levels);
    m[(0, 1)] = real(1.0);
    Ok(OperatorMatrix(m))
}

/// `|g⟩⟨g| − |e⟩⟨e|`.
pub fn sigma_z() -> OperatorMatrix {
    let mut m = DMatrix::zeros(2, 2);
    m[(0, 0)] = real(1.0);
    m[(1, 1)] = real(-1.0);
    OperatorMatrix(m)
}

/// `|k⟩⟨k|` on a single factor.
pub fn projector(levels: usize, k: usize) -> OperatorMatrix {
    let mut m = DMatrix::zeros(levels, levels);
    m[(k, k)] = real(1.0);
    OperatorMatrix(m)
}

/// Places `op` on `slot` (0 = qubit, k = k-th mode) with identities elsewhere.
pub fn embed(
    op: &OperatorMatrix,
    slot: usize,
    spec: &HilbertSpec,
) -> Result<OperatorMatrix, OperatorError> {
    let slots = spec.n_modes() + 1;
    let local = spec
        .slot_dim(slot)
        .ok_or(OperatorError::SlotOutOfRange { slot, slots })?;
    if op.dim() != local {
        return Err(OperatorError::DimensionMismatch {
            expected: local,
            got: op.dim(),
        });
    }
    let before: usize = (0..slot).map(|s| spec.slot_dim(s).unwrap()).product();
    let after: usize = (slot + 1..slots)
        .map(|s| spec.slot_dim(s).unwrap())
        .product();
    let mut out = OperatorMatrix::identity(before).kron(op);
    if after > 1 {
        out = out.kron(&OperatorMatrix::identity(after));
    }
    Ok(out)
}

fn check_modes(params: &SystemParams, spec: &HilbertSpec) -> Result<(), OperatorError> {
    params.check()?;
    if params.modes.len() != spec.n_modes() {
        return Err(OperatorError::ModeCountMismatch {
            params: params.modes.len(),
            spec: spec.n_modes(),
        });
    }
    Ok(())
}

/// Full multimode transmon Hamiltonian in a frame rotating at `frame_mhz`:
///
/// `H = 2π(f_q−f_0) b†b − π E_c b†b†bb + Σ_m [2π(f_m−f_0) a_m†a_m + 2π g_m (b a_m† + b† a_m)]`
pub fn hamiltonian_full(
    params: &SystemParams,
    spec: &HilbertSpec,
    frame_mhz: f64,
) -> Result<OperatorMatrix, OperatorError> {
    check_modes(params, spec)?;
    let dim = spec.dim();
    let b_local = destroy(spec.qubit_levels)?;
    let b = embed(&b_local, 0, spec)?;
    let bd = b.adjoint();
    let nq = bd.mul(&b);

    let mut h = nq.scale(angular(params.qubit.f01 - frame_mhz));
    let kerr = bd.mul(&bd).mul(&b).mul(&b);
    h = h.sub(&kerr.scale(std::f64::consts::PI * params.qubit.ec));

    for (k, mode) in params.modes.iter().enumerate() {
        let a = embed(&destroy(spec.mode_levels[k])?, k + 1, spec)?;
        let ad = a.adjoint();
        h = h.add(&ad.mul(&a).scale(angular(mode.f - frame_mhz)));
        let exchange = b.mul(&ad).add(&bd.mul(&a));
        h = h.add(&exchange.scale(angular(mode.g)));
    }
    debug_assert_eq!(h.dim(), dim);
    Ok(h)
}

/// Dispersive coefficients χ_n (MHz) for every mode except `resonant_index`,
/// using the qubit's own f01 for the detuning. The resonant mode gets 0.
pub fn dispersive_shifts(
    params: &SystemParams,
    resonant_index: u32,
) -> Result<Vec<f64>, OperatorError> {
    params
        .modes
        .iter()
        .map(|m| {
            if m.index == resonant_index {
                Ok(0.0)
            } else {
                Ok(analytic::chi_dispersive(
                    m.g,
                    params.qubit.f01 - m.f,
                    params.qubit.ec,
                )?)
            }
        })
        .collect()
}

/// Dispersive Hamiltonian with one resonant mode, in a frame rotating at
/// `frame_mhz`:
///
/// `H = −π(f_q−f_0)σ_z + 2π(f_r−f_0)a_r†a_r + 2πg_r(σ₊a_r + σ₋a_r†)
///      + Σ_{n≠r}[2π(f_n−f_0)a_n†a_n + 2πχ_n σ_z a_n†a_n]`
pub fn hamiltonian_dispersive(
    params: &SystemParams,
    spec: &HilbertSpec,
    resonant_index: u32,
    frame_mhz: f64,
) -> Result<OperatorMatrix, OperatorError> {
    check_modes(params, spec)?;
    if spec.qubit_levels != 2 {
        return Err(OperatorError::NotTwoLevel(spec.qubit_levels));
    }
    let r = params
        .position(resonant_index)
        .ok_or(OperatorError::UnknownMode(resonant_index))?;
    let chi = dispersive_shifts(params, resonant_index)?;

    let sz = embed(&sigma_z(), 0, spec)?;
    let sm = embed(&sigma_minus(2)?, 0, spec)?;
    let sp = sm.adjoint();

    let mut h = sz.scale(-0.5 * angular(params.qubit.f01 - frame_mhz));
    for (k, mode) in params.modes.iter().enumerate() {
        let a = embed(&destroy(spec.mode_levels[k])?, k + 1, spec)?;
        let ad = a.adjoint();
        let n = ad.mul(&a);
        h = h.add(&n.scale(angular(mode.f - frame_mhz)));
        if k == r {
            let jc = sp.mul(&a).add(&sm.mul(&ad));
            h = h.add(&jc.scale(angular(mode.g)));
        } else if chi[k] != 0.0 {
            h = h.add(&sz.mul(&n).scale(angular(chi[k])));
        }
    }
    Ok(h)
}

/// Dissipation channels for `D[L]ρ = LρL† − ½{L†L,ρ}`: `√(2π·gamma)` times the
/// qubit lowering operator (omitted when gamma = 0), then `√(2π·κ_m) a_m` per
/// mode. With `two_level` the qubit channel is `|g⟩⟨e|` only; otherwise the
/// full ladder operator `b`.
pub fn collapse_ops(
    params: &SystemParams,
    spec: &HilbertSpec,
    two_level: bool,
) -> Result<Vec<OperatorMatrix>, OperatorError> {
    check_modes(params, spec)?;
    let mut ops = Vec::with_capacity(params.modes.len() + 1);
    if params.qubit.gamma > 0.0 {
        let local = if two_level {
            sigma_minus(spec.qubit_levels)?
        } else {
            destroy(spec.qubit_levels)?
        };
        ops.push(embed(&local, 0, spec)?.scale(angular(params.qubit.gamma).sqrt()));
    }
    for (k, mode) in params.modes.iter().enumerate() {
        let a = embed(&destroy(spec.mode_levels[k])?, k + 1, spec)?;
        ops.push(a.scale(angular(mode.kappa).sqrt()));
    }
    Ok(ops)
}

/// Pure `|e,0,…,0⟩` (or `|g,0,…,0⟩`) density operator.
pub fn initial_state(spec: &HilbertSpec, qubit_excited: bool) -> DensityOperator {
    let dim = spec.dim();
    // |q, 0, …, 0⟩ sits at q × (product of mode dims).
    let stride = dim / spec.qubit_levels;
    let k = if qubit_excited { stride } else { 0 };
    let mut m = DMatrix::zeros(dim, dim);
    m[(k, k)] = real(1.0);
    DensityOperator::from_matrix_unchecked(m)
}

/// Population of the qubit's first excited level.
pub fn qubit_excited_projector(spec: &HilbertSpec) -> Result<OperatorMatrix, OperatorError> {
    embed(&projector(spec.qubit_levels, 1), 0, spec)
}

/// Total excitation number `b†b + Σ a_m†a_m`.
pub fn excitation_number(spec: &HilbertSpec) -> Result<OperatorMatrix, OperatorError> {
    let mut n = embed(&number(spec.qubit_levels)?, 0, spec)?;
    for (k, &levels) in spec.mode_levels.iter().enumerate() {
        n = n.add(&embed(&number(levels)?, k + 1, spec)?);
    }
    Ok(n)
}
