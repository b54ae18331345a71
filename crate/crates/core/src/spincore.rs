//! Exact quantum mechanics of the ¹⁴N (spin-1) and NV electron (spin-1) system.
//!
//! Conventions used throughout the crate:
//!
//! - Configuration values are ordinary frequencies in Hz. Propagation applies
//!   `exp(-i·2π·H·t)`.
//! - The nuclear basis is ordered `m_I = +1, 0, -1`.
//! - The joint basis is the electron-major tensor product: index
//!   `3·i(m_S) + i(m_I)` with both factors ordered `+1, 0, -1`.
//! - Operators compose right-to-left: `a.then(b)` is the operator `b·a`.
//!
//! # Pulse convention
//!
//! Pulses are instantaneous rotating-frame unitaries. The flip angle refers to
//! the driven two-level transition: for the symmetric drive of both `0 ↔ ±1`
//! nuclear transitions, `|0⟩` couples only to the bright state
//! `|B_φ⟩ = (e^{-iφ}|+1⟩ + e^{iφ}|-1⟩)/√2`, and in the `{|0⟩, |B_φ⟩}` subspace
//! the spin-1 generator `G = S_x cos φ + S_y sin φ` acts as a Pauli matrix.
//! The pulse is therefore `exp(-i·(flip/2)·G)`: a flip of `π` empties `|0⟩`,
//! a flip of `2π` is a spin-1 `π` rotation that swaps `|+1⟩ ↔ |-1⟩` (the echo).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{GyroError, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Spin projections of a spin-1 in basis order.
pub const SPIN1_LEVELS: [i8; 3] = [1, 0, -1];

/// Index of projection `m` in a spin-1 factor.
pub fn level_index(m: i8) -> usize {
    debug_assert!((-1..=1).contains(&m));
    (1 - m) as usize
}

/// Index of `(m_S, m_I)` in the joint basis.
pub fn joint_index(m_s: i8, m_i: i8) -> usize {
    3 * level_index(m_s) + level_index(m_i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelBasis {
    /// ¹⁴N levels `m_I = +1, 0, -1`.
    Nuclear,
    /// NV electron ⊗ ¹⁴N, electron-major.
    Joint,
}

impl LevelBasis {
    pub fn dim(self) -> usize {
        match self {
            LevelBasis::Nuclear => 3,
            LevelBasis::Joint => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LevelBasis::Nuclear => "nuclear",
            LevelBasis::Joint => "joint",
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            LevelBasis::Nuclear => &["+1", "0", "-1"],
            LevelBasis::Joint => &[
                "+1,+1", "+1,0", "+1,-1", "0,+1", "0,0", "0,-1", "-1,+1", "-1,0", "-1,-1",
            ],
        }
    }

    fn check(self, other: LevelBasis) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(GyroError::BasisMismatch {
                expected: self.name(),
                found: other.name(),
            })
        }
    }
}

/// Normalized pure state over a [`LevelBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpinState {
    basis: LevelBasis,
    amplitudes: DVector<Complex64>,
}

impl SpinState {
    /// Builds a state from raw amplitudes, normalizing them.
    pub fn new(basis: LevelBasis, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(GyroError::precondition(format!(
                "{} amplitudes given for a {}-level basis",
                amplitudes.len(),
                basis.dim()
            )));
        }
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(GyroError::precondition("state has zero or non-finite norm"));
        }
        Ok(SpinState {
            basis,
            amplitudes: v.unscale(norm),
        })
    }

    pub fn basis_state(basis: LevelBasis, index: usize) -> Self {
        let mut v = DVector::from_element(basis.dim(), ZERO);
        v[index] = ONE;
        SpinState { basis, amplitudes: v }
    }

    /// Nuclear `|m_I⟩`.
    pub fn nuclear(m_i: i8) -> Self {
        Self::basis_state(LevelBasis::Nuclear, level_index(m_i))
    }

    /// Joint `|m_S, m_I⟩`.
    pub fn joint(m_s: i8, m_i: i8) -> Self {
        Self::basis_state(LevelBasis::Joint, joint_index(m_s, m_i))
    }

    pub fn basis(&self) -> LevelBasis {
        self.basis
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amplitudes[index]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &SpinState) -> Result<Complex64> {
        self.basis.check(other.basis)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `|⟨self|other⟩|`, equal to 1 when the states agree up to a global phase.
    pub fn overlap(&self, other: &SpinState) -> Result<f64> {
        Ok(self.inner(other)?.norm())
    }

    pub fn apply(&self, op: &OperatorMatrix) -> Result<SpinState> {
        op.basis.check(self.basis)?;
        Ok(SpinState {
            basis: self.basis,
            amplitudes: &op.entries * &self.amplitudes,
        })
    }

    /// Tensor product `electron ⊗ nuclear`.
    pub fn tensor(electron: &SpinState, nuclear: &SpinState) -> Result<SpinState> {
        LevelBasis::Nuclear.check(electron.basis)?;
        LevelBasis::Nuclear.check(nuclear.basis)?;
        Ok(SpinState {
            basis: LevelBasis::Joint,
            amplitudes: electron.amplitudes.kronecker(&nuclear.amplitudes),
        })
    }
}

/// Square complex matrix acting on a [`LevelBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    basis: LevelBasis,
    entries: DMatrix<Complex64>,
}

impl OperatorMatrix {
    pub fn new(basis: LevelBasis, entries: DMatrix<Complex64>) -> Result<Self> {
        let d = basis.dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(GyroError::precondition(format!(
                "{}x{} matrix given for a {}-level basis",
                entries.nrows(),
                entries.ncols(),
                d
            )));
        }
        Ok(OperatorMatrix { basis, entries })
    }

    pub fn identity(basis: LevelBasis) -> Self {
        let d = basis.dim();
        OperatorMatrix {
            basis,
            entries: DMatrix::identity(d, d),
        }
    }

    pub fn from_real_diagonal(basis: LevelBasis, diag: &[f64]) -> Self {
        assert_eq!(diag.len(), basis.dim());
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&x| Complex64::new(x, 0.0)));
        OperatorMatrix {
            basis,
            entries: DMatrix::from_diagonal(&v),
        }
    }

    pub fn basis(&self) -> LevelBasis {
        self.basis
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn dagger(&self) -> Self {
        OperatorMatrix {
            basis: self.basis,
            entries: self.entries.adjoint(),
        }
    }

    /// Operator for "apply `self`, then `next`", i.e. `next · self`.
    pub fn then(&self, next: &OperatorMatrix) -> Result<Self> {
        self.basis.check(next.basis)?;
        Ok(OperatorMatrix {
            basis: self.basis,
            entries: &next.entries * &self.entries,
        })
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.entries - self.entries.adjoint()))
    }

    /// `‖U†U − I‖_max`.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.basis.dim();
        max_abs(&(self.entries.adjoint() * &self.entries - DMatrix::<Complex64>::identity(d, d)))
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, state: &SpinState) -> Result<Complex64> {
        self.basis.check(state.basis)?;
        Ok(state.amplitudes.dotc(&(&self.entries * &state.amplitudes)))
    }

    /// `exp(-i·angle·self)` for Hermitian `self`.
    pub fn exp_i(&self, angle: f64) -> Result<OperatorMatrix> {
        if self.hermiticity_error() > 1e-9 * (1.0 + max_abs(&self.entries)) {
            return Err(GyroError::precondition("generator is not Hermitian"));
        }
        Ok(OperatorMatrix {
            basis: self.basis,
            entries: hermitian_exp(&self.entries, angle),
        })
    }
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `exp(-i·angle·h)` by eigendecomposition of the Hermitian matrix `h`.
fn hermitian_exp(h: &DMatrix<Complex64>, angle: f64) -> DMatrix<Complex64> {
    // Symmetrize so the solver sees an exactly Hermitian input.
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let phases = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, -angle * e)),
    );
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&phases) * v.adjoint()
}

/// Spin-1 operators in the `+1, 0, -1` ordering.
pub mod spin1 {
    use super::*;

    pub fn sz() -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![ONE, ZERO, -ONE]))
    }

    pub fn sx() -> DMatrix<Complex64> {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        DMatrix::from_row_slice(3, 3, &[ZERO, s, ZERO, s, ZERO, s, ZERO, s, ZERO])
    }

    pub fn sy() -> DMatrix<Complex64> {
        let s = Complex64::new(0.0, FRAC_1_SQRT_2);
        DMatrix::from_row_slice(3, 3, &[ZERO, -s, ZERO, s, ZERO, -s, ZERO, s, ZERO])
    }

    pub fn identity() -> DMatrix<Complex64> {
        DMatrix::identity(3, 3)
    }
}

/// Constants of the NV / ¹⁴N system. Frequencies in Hz, fields in gauss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    /// ¹⁴N quadrupole splitting. Literature magnitude ≈ 4.95 MHz.
    pub q_hz: f64,
    /// ¹⁴N gyromagnetic ratio. Literature value 307.7 Hz/G.
    pub gamma_n_hz_per_g: f64,
    /// Electron gyromagnetic ratio, 2.8025 MHz/G.
    pub gamma_e_hz_per_g: f64,
    /// NV zero-field splitting.
    pub delta_hz: f64,
    /// Longitudinal hyperfine coupling.
    pub a_hz: f64,
    /// Bias field along the NV axis.
    pub b_gauss: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            q_hz: 4.95e6,
            gamma_n_hz_per_g: 307.7,
            gamma_e_hz_per_g: 2.8025e6,
            delta_hz: 2.87e9,
            a_hz: 2.2e6,
            b_gauss: 20.0,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("q_hz", self.q_hz),
            ("gamma_n_hz_per_g", self.gamma_n_hz_per_g),
            ("gamma_e_hz_per_g", self.gamma_e_hz_per_g),
            ("delta_hz", self.delta_hz),
            ("a_hz", self.a_hz),
            ("b_gauss", self.b_gauss),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(GyroError::Config(format!("constants.{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Nuclear Zeeman shift `γ_N·b` in Hz.
    pub fn nuclear_zeeman_hz(&self) -> f64 {
        self.gamma_n_hz_per_g * self.b_gauss
    }

    /// Electron Zeeman shift `γ_e·b` in Hz.
    pub fn electron_zeeman_hz(&self) -> f64 {
        self.gamma_e_hz_per_g * self.b_gauss
    }
}

/// `H₀ = Q·m² + γ_N·b·m` on the nuclear basis (Hz).
pub fn build_nuclear_hamiltonian(c: &PhysicalConstants) -> OperatorMatrix {
    let diag: Vec<f64> = SPIN1_LEVELS
        .iter()
        .map(|&m| {
            let m = f64::from(m);
            c.q_hz * m * m + c.nuclear_zeeman_hz() * m
        })
        .collect();
    OperatorMatrix::from_real_diagonal(LevelBasis::Nuclear, &diag)
}

/// Secular electron–nuclear Hamiltonian on the joint basis (Hz):
/// `Δ·m_S² + γ_e·b·m_S + A·m_S·m_I + Q·m_I² + γ_N·b·m_I`.
pub fn build_joint_hamiltonian(c: &PhysicalConstants) -> OperatorMatrix {
    let mut diag = vec![0.0; 9];
    for &ms in &SPIN1_LEVELS {
        for &mi in &SPIN1_LEVELS {
            let (s, i) = (f64::from(ms), f64::from(mi));
            diag[joint_index(ms, mi)] = c.delta_hz * s * s
                + c.electron_zeeman_hz() * s
                + c.a_hz * s * i
                + c.q_hz * i * i
                + c.nuclear_zeeman_hz() * i;
        }
    }
    OperatorMatrix::from_real_diagonal(LevelBasis::Joint, &diag)
}

/// Propagator `exp(-i·2π·H·t)` for a Hamiltonian in Hz.
pub fn propagator(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    h.exp_i(2.0 * PI * t)
}

/// Evolves `state` under the time-independent Hamiltonian `h` (Hz) for `t` seconds.
pub fn propagate(state: &SpinState, h: &OperatorMatrix, t: f64) -> Result<SpinState> {
    h.basis.check(state.basis)?;
    state.apply(&propagator(h, t)?)
}

/// Which `0 ↔ ±1` transitions a nuclear rf pulse drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    /// Both `0 ↔ +1` and `0 ↔ -1`, symmetrically.
    Both,
    /// `0 ↔ +1` only.
    Upper,
    /// `0 ↔ -1` only.
    Lower,
}

/// Rotating-frame unitary of a hard rf pulse; see the module docs for the
/// flip-angle convention.
pub fn rf_pulse_unitary(axis_phase: f64, flip_angle: f64, transition: Transition) -> OperatorMatrix {
    let (cp, sp) = (axis_phase.cos(), axis_phase.sin());
    let generator = match transition {
        Transition::Both => spin1::sx().scale(cp) + spin1::sy().scale(sp),
        Transition::Upper | Transition::Lower => {
            // Pauli σ_φ restricted to the driven pair.
            let (a, b) = match transition {
                Transition::Upper => (level_index(1), level_index(0)),
                _ => (level_index(0), level_index(-1)),
            };
            let mut g = DMatrix::from_element(3, 3, ZERO);
            g[(a, b)] = Complex64::new(cp, -sp);
            g[(b, a)] = Complex64::new(cp, sp);
            g
        }
    };
    OperatorMatrix {
        basis: LevelBasis::Nuclear,
        entries: hermitian_exp(&generator, flip_angle / 2.0),
    }
}

/// `exp(-i·angle·S_z)` on the nuclear basis.
pub fn z_phase(angle: f64) -> OperatorMatrix {
    let diag = DVector::from_iterator(
        3,
        SPIN1_LEVELS
            .iter()
            .map(|&m| Complex64::from_polar(1.0, -angle * f64::from(m))),
    );
    OperatorMatrix {
        basis: LevelBasis::Nuclear,
        entries: DMatrix::from_diagonal(&diag),
    }
}

/// Lifts an electron operator to the joint basis as `op ⊗ 1`.
pub fn electron_operator(op: &DMatrix<Complex64>) -> OperatorMatrix {
    OperatorMatrix {
        basis: LevelBasis::Joint,
        entries: op.kronecker(&spin1::identity()),
    }
}

/// Joint operator `Σ_{m_I} U_{m_I} ⊗ |m_I⟩⟨m_I|` applying an electron unitary
/// conditioned on the nuclear level.
pub fn conditional_electron_operator(per_level: [&DMatrix<Complex64>; 3]) -> OperatorMatrix {
    let mut m = DMatrix::from_element(9, 9, ZERO);
    for (ni, u) in per_level.iter().enumerate() {
        let mut proj = DMatrix::from_element(3, 3, ZERO);
        proj[(ni, ni)] = ONE;
        m += u.kronecker(&proj);
    }
    OperatorMatrix {
        basis: LevelBasis::Joint,
        entries: m,
    }
}
