//! Decoherence models for the ¹⁴N sensor spin.
//!
//! Three sources are provided: a classical Ornstein–Uhlenbeck frequency noise
//! ([`ou`]), dephasing by NV electron T₁ flips ([`nv_t1_dephasing_factor`]) and
//! a small dipolar electron-spin bath treated at the level of flip-flopping
//! pairs ([`bath`]).

pub mod bath;
pub mod fit;
pub mod ou;

use serde::{Deserialize, Serialize};

pub use bath::{bath_coherence_simulation, coupling_scales, BathModel, CouplingScales};
pub use fit::{fit_stretched_exponential, StretchedFit};
pub use ou::{dephased_ramsey_coherence, sample_ou_path, OuIntegrator, OuProcess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Ramsey,
    Echo,
}

/// Ensemble-averaged coherence `⟨cos φ⟩` versus free-evolution time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub sequence: SequenceKind,
    pub times: Vec<f64>,
    pub coherence: Vec<f64>,
    /// Standard error of each coherence value.
    pub stderr: Vec<f64>,
    /// Decay time of the stretched-exponential fit, `None` when the curve
    /// does not decay enough to fit.
    pub fitted_t2: Option<f64>,
    pub fitted_exponent: Option<f64>,
}

impl CoherenceCurve {
    pub(crate) fn from_samples(sequence: SequenceKind, times: &[f64], sums: &[f64], sq_sums: &[f64], n: usize) -> Self {
        let nf = n as f64;
        let coherence: Vec<f64> = sums.iter().map(|s| s / nf).collect();
        let stderr = coherence
            .iter()
            .zip(sq_sums)
            .map(|(m, sq)| {
                if n < 2 {
                    0.0
                } else {
                    ((sq / nf - m * m).max(0.0) / (nf - 1.0)).sqrt()
                }
            })
            .collect();
        let fit = fit_stretched_exponential(times, &coherence);
        CoherenceCurve {
            sequence,
            times: times.to_vec(),
            coherence,
            stderr,
            fitted_t2: fit.map(|f| f.t2),
            fitted_exponent: fit.map(|f| f.exponent),
        }
    }

    /// Linear interpolation of the coherence at `t` (clamped to the grid).
    pub fn coherence_at(&self, t: f64) -> f64 {
        let ts = &self.times;
        if ts.is_empty() {
            return f64::NAN;
        }
        if t <= ts[0] {
            return self.coherence[0];
        }
        for i in 1..ts.len() {
            if t <= ts[i] {
                let w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
                return self.coherence[i - 1] * (1.0 - w) + self.coherence[i] * w;
            }
        }
        *self.coherence.last().unwrap()
    }

    /// First time the coherence falls to `level`, interpolated linearly
    /// between grid points.
    pub fn crossing_time(&self, level: f64) -> Option<f64> {
        let first = self.coherence.iter().position(|&c| c <= level)?;
        if first == 0 {
            return Some(self.times[0]);
        }
        let (c0, c1) = (self.coherence[first - 1], self.coherence[first]);
        let (t0, t1) = (self.times[first - 1], self.times[first]);
        Some(t0 + (t1 - t0) * (c0 - level) / (c0 - c1))
    }
}

/// Coherence factor `exp(-τ/T₁)` from NV electron flips scrambling the
/// hyperfine field seen by the nucleus.
pub fn nv_t1_dephasing_factor(t1: f64, tau: f64) -> f64 {
    debug_assert!(t1 > 0.0 && tau >= 0.0);
    (-tau / t1).exp()
}

/// Time grid of `n` points evenly spaced in log between `start` and `stop`.
pub fn log_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => {
            let (a, b) = (start.ln(), stop.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_time_interpolates() {
        let c = CoherenceCurve::from_samples(
            SequenceKind::Ramsey,
            &[0.0, 1.0, 2.0],
            &[4.0, 2.0, 0.0],
            &[4.0, 1.0, 0.0],
            4,
        );
        assert_eq!(c.crossing_time(0.75), Some(0.5));
        assert_eq!(c.crossing_time(1.0), Some(0.0));
        assert_eq!(c.crossing_time(-0.1), None);
    }

    #[test]
    fn t1_factor_values() {
        assert_eq!(nv_t1_dephasing_factor(2e-3, 0.0), 1.0);
        assert!((nv_t1_dephasing_factor(2e-3, 1e-3) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((nv_t1_dephasing_factor(2e-3, 1e-3) - 0.6065).abs() < 1e-4);
        assert!(nv_t1_dephasing_factor(1e30, 1e-3) >= 1.0 - 1e-30);
        assert_eq!(nv_t1_dephasing_factor(f64::INFINITY, 1e-3), 1.0);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-6, 1e-3, 4);
        assert!((g[0] - 1e-6).abs() < 1e-20);
        assert!((g[3] - 1e-3).abs() < 1e-15);
        assert!((g[1] - 1e-5).abs() < 1e-18);
    }
}
