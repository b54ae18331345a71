//! Rotation-sensitive pulse sequences on the ¹⁴N spin and the readout mapping
//! onto the NV electron.
//!
//! The rf pulses are defined in the frame of the rf coils. When the diamond
//! rotates by `+Ω` about the NV axis, a pulse applied at time `t` has phase
//! `−Ωt` in the diamond frame. A Ramsey sequence `π - τ - π` (flip angles in
//! the two-level convention of [`crate::spincore`]) then leaves the nucleus in
//!
//! ```text
//! |ψ⟩ = −e^{iΩτ} sin(Ωτ)/√2 |+1⟩ − cos(Ωτ) |0⟩ + e^{−iΩτ} sin(Ωτ)/√2 |−1⟩
//! ```
//!
//! and the `|0⟩` population is `cos²(Ωτ)`. A static shift `δ` of the `S_z`
//! coefficient adds to the phase: `cos²(Ωτ + 2πδτ)`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{GyroError, Result};
use crate::noise::{nv_t1_dephasing_factor, OuIntegrator, OuProcess};
use crate::rng::stream;
use crate::spincore::{
    conditional_electron_operator, joint_index, level_index, rf_pulse_unitary, spin1, z_phase, LevelBasis,
    PhysicalConstants, SpinState, Transition, SPIN1_LEVELS,
};

/// Sequence durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceTiming {
    /// Free-evolution interrogation time.
    pub tau: f64,
    /// Nuclear → electron mapping time.
    pub t_map: f64,
    /// Polarization time.
    pub t_pol: f64,
    /// Total readout time.
    pub t_ro: f64,
}

impl Default for SequenceTiming {
    fn default() -> Self {
        SequenceTiming {
            tau: 1e-3,
            t_map: 230e-9,
            t_pol: 2e-6,
            t_ro: 150e-6,
        }
    }
}

impl SequenceTiming {
    /// Dead time `t_ro + t_pol`.
    pub fn dead_time(&self) -> f64 {
        self.t_ro + self.t_pol
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("t_map", self.t_map),
            ("t_pol", self.t_pol),
            ("t_ro", self.t_ro),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GyroError::precondition(format!(
                    "timing.{name} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Stochastic dephasing applied during free evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// OU noise on the `S_z` coefficient (rad/s).
    pub ou: Option<OuProcess>,
    /// NV electron T₁ (s); multiplies the `±1` coherence by `exp(−τ/T₁)`.
    pub nv_t1: Option<f64>,
    pub trials: usize,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            ou: None,
            nv_t1: None,
            trials: 1000,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if let Some(ou) = &self.ou {
            ou.validate()?;
        }
        if let Some(t1) = self.nv_t1 {
            if !(t1 > 0.0) {
                return Err(GyroError::Config("noise.nv_t1 must be positive".into()));
            }
        }
        if self.trials == 0 {
            return Err(GyroError::Config("noise.trials must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a Ramsey-type sequence on the nuclear spin.
#[derive(Debug, Clone, PartialEq)]
pub struct RamseyResult {
    /// Noise-free final state.
    pub final_state: SpinState,
    /// Level populations averaged over noise trials, `+1, 0, −1` order.
    pub populations: Vec<f64>,
    /// Population of `|0⟩`.
    pub signal: f64,
    pub signal_stderr: f64,
    pub trials: usize,
}

/// An aligned-axis sequence: rotation about the NV axis at `omega` (rad/s),
/// an extra static shift `detuning_hz` of the `S_z` coefficient, and an
/// optional echo pulse with the given phase at `τ/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlignedSequence {
    pub omega: f64,
    pub detuning_hz: f64,
    pub echo_phase: Option<f64>,
}

/// The second Ramsey pulse, in the family frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ReadPulse {
    pub phase: f64,
    pub flip: f64,
}

/// Noise-free state after `π(0) - τ/2 - [echo] - τ/2 - read`, with extra
/// `S_z` phases accumulated in each half.
fn compose(read: ReadPulse, shift_phase: f64, echo_phase: Option<f64>, noise: (f64, f64)) -> Result<SpinState> {
    let mut s = SpinState::nuclear(0).apply(&rf_pulse_unitary(0.0, PI, Transition::Both))?;
    s = s.apply(&z_phase(shift_phase / 2.0 + noise.0))?;
    if let Some(phi) = echo_phase {
        s = s.apply(&rf_pulse_unitary(phi, 2.0 * PI, Transition::Both))?;
    }
    s = s.apply(&z_phase(shift_phase / 2.0 + noise.1))?;
    s.apply(&rf_pulse_unitary(read.phase, read.flip, Transition::Both))
}

/// Runs the sequence with optional noise. `shift_hz` is the static `S_z`
/// frequency offset during free evolution.
pub(crate) fn run_sequence(
    read: ReadPulse,
    tau: f64,
    shift_hz: f64,
    echo_phase: Option<f64>,
    noise: Option<&NoiseModel>,
) -> Result<RamseyResult> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(GyroError::precondition(
            "interrogation time tau must be finite and >= 0",
        ));
    }
    let shift_phase = 2.0 * PI * shift_hz * tau;
    let clean = compose(read, shift_phase, echo_phase, (0.0, 0.0))?;

    let (mut populations, stderr, trials) = match noise.and_then(|n| n.ou.map(|ou| (ou, n.trials))) {
        Some((ou, trials)) => {
            if trials == 0 {
                return Err(GyroError::precondition("noise.trials must be >= 1"));
            }
            let runs: Vec<Result<Vec<f64>>> = (0..trials)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(ou.seed, i as u64);
                    let mut it = OuIntegrator::stationary(ou, &mut rng);
                    let first = it.advance(tau / 2.0, &mut rng);
                    let second = it.advance(tau / 2.0, &mut rng);
                    Ok(compose(read, shift_phase, echo_phase, (first, second))?.populations())
                })
                .collect();
            let mut sum = [0.0; 3];
            let mut sq0 = 0.0;
            for r in runs {
                let p = r?;
                for k in 0..3 {
                    sum[k] += p[k];
                }
                sq0 += p[level_index(0)].powi(2);
            }
            let n = trials as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let m0 = mean[level_index(0)];
            let se = if trials > 1 {
                ((sq0 / n - m0 * m0).max(0.0) / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, se, trials)
        }
        None => (clean.populations(), 0.0, 1),
    };

    if let Some(t1) = noise.and_then(|n| n.nv_t1) {
        apply_coherence_factor(&mut populations, nv_t1_dephasing_factor(t1, tau));
    }
    let signal = populations[level_index(0)];
    Ok(RamseyResult {
        final_state: clean,
        populations,
        signal,
        signal_stderr: stderr,
        trials,
    })
}

/// Shrinks the fringe contrast toward 1/2 by `factor`, keeping the ±1 ratio.
fn apply_coherence_factor(pops: &mut [f64], factor: f64) {
    let i0 = level_index(0);
    let p0 = pops[i0];
    let new0 = 0.5 + factor * (p0 - 0.5);
    let (ip, im) = (level_index(1), level_index(-1));
    let rest = pops[ip] + pops[im];
    if rest > 1e-12 {
        let scale = (1.0 - new0) / rest;
        pops[ip] *= scale;
        pops[im] *= scale;
    } else {
        pops[ip] = (1.0 - new0) / 2.0;
        pops[im] = (1.0 - new0) / 2.0;
    }
    pops[i0] = new0;
}

/// Runs an aligned-axis Ramsey or echo sequence.
pub fn run_aligned(
    seq: &AlignedSequence,
    timing: &SequenceTiming,
    c: &PhysicalConstants,
    noise: Option<&NoiseModel>,
) -> Result<RamseyResult> {
    timing.validate()?;
    let read = ReadPulse {
        phase: -seq.omega * timing.tau,
        flip: PI,
    };
    run_sequence(
        read,
        timing.tau,
        c.nuclear_zeeman_hz() + seq.detuning_hz,
        seq.echo_phase,
        noise,
    )
}

/// Ramsey sequence with the rotation axis along the NV axis.
pub fn run_ramsey_aligned(
    omega: f64,
    timing: &SequenceTiming,
    c: &PhysicalConstants,
    noise: Option<&NoiseModel>,
) -> Result<RamseyResult> {
    run_aligned(
        &AlignedSequence {
            omega,
            ..Default::default()
        },
        timing,
        c,
        noise,
    )
}

/// Echo sequence: a `2π` pulse (phase fixed in the diamond frame) at `τ/2`.
pub fn run_echo_aligned(
    omega: f64,
    detuning_hz: f64,
    timing: &SequenceTiming,
    c: &PhysicalConstants,
    noise: Option<&NoiseModel>,
) -> Result<RamseyResult> {
    run_aligned(
        &AlignedSequence {
            omega,
            detuning_hz,
            echo_phase: Some(0.0),
        },
        timing,
        c,
        noise,
    )
}

/// Draws an echo phase offset uniformly in `[0, 2π)`.
pub fn random_echo_phase<R: Rng>(rng: &mut R) -> f64 {
    2.0 * PI * rng.random::<f64>()
}

/// Maps a post-Ramsey nuclear state onto the NV electron.
///
/// The electron starts in `|0⟩`. Hyperfine-selective μw pulses resonant with
/// both `0 ↔ ±1` electron transitions for `m_I = ±1` (but not `m_I = 0`)
/// transfer the electron to its bright superposition, so that the electron
/// `m_S = 0` population equals the nuclear `|0⟩` population. Accepts either a
/// nuclear state or a joint state with the electron in `|0⟩`.
pub fn map_to_electron(state: &SpinState, _c: &PhysicalConstants) -> Result<SpinState> {
    let joint = match state.basis() {
        LevelBasis::Nuclear => SpinState::tensor(&SpinState::nuclear(0), state)?,
        LevelBasis::Joint => {
            let off: f64 = SPIN1_LEVELS
                .iter()
                .filter(|&&ms| ms != 0)
                .flat_map(|&ms| SPIN1_LEVELS.iter().map(move |&mi| joint_index(ms, mi)))
                .map(|i| state.amplitude(i).norm_sqr())
                .sum();
            if off > 1e-12 {
                return Err(GyroError::precondition(format!(
                    "electron must be in |0> before mapping (weight {off:.3e} outside m_S = 0)"
                )));
            }
            state.clone()
        }
    };
    let flip = rf_pulse_unitary(0.0, PI, Transition::Both);
    let id = spin1::identity();
    let map = conditional_electron_operator([flip.entries(), &id, flip.entries()]);
    joint.apply(&map)
}

/// Bright-state (`m_S = 0`) population of a joint state.
pub fn electron_signal(joint: &SpinState) -> Result<f64> {
    if joint.basis() != LevelBasis::Joint {
        return Err(GyroError::BasisMismatch {
            expected: "joint",
            found: joint.basis().name(),
        });
    }
    Ok(SPIN1_LEVELS
        .iter()
        .map(|&mi| joint.amplitude(joint_index(0, mi)).norm_sqr())
        .sum())
}

/// Contrast retained after NV dephasing during the mapping,
/// `exp[−(t_map/T₂*)²]`.
pub fn mapping_contrast(t_map: f64, t2_star_e: f64) -> f64 {
    (-(t_map / t2_star_e).powi(2)).exp()
}

/// Signal after contrast loss: the fringe shrinks toward 1/2.
pub fn apply_contrast(signal: f64, contrast: f64) -> f64 {
    0.5 + contrast * (signal - 0.5)
}

/// Closed-form post-Ramsey nuclear amplitudes (`+1, 0, −1`) for the aligned
/// case with accumulated phase `omega_t`.
pub fn aligned_ramsey_amplitudes(omega_t: f64) -> [Complex64; 3] {
    let s = omega_t.sin() / std::f64::consts::SQRT_2;
    [
        -Complex64::from_polar(s, omega_t),
        Complex64::new(-omega_t.cos(), 0.0),
        Complex64::from_polar(s, -omega_t),
    ]
}
