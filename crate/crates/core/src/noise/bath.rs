//! Dipolar electron-spin bath acting on a central ¹⁴N.
//!
//! Bath spins are spin-½ electrons placed uniformly in a sphere around the
//! nucleus; the sphere radius follows from the density and the bath size.
//! Couplings are secular dipolar, `D·(1 − 3cos²ϑ)/r³`, with the quantization
//! axis along the NV axis (`z`).
//!
//! Dynamics are treated at pair level. Bath spins are partitioned into
//! strongly coupled flip-flop pairs (greedy by coupling strength). For a pair
//! `(j, k)` with nuclear couplings `b_j, b_k`, the nuclear frequency shift
//! splits into
//!
//! - a static part `(b_j + b_k)/2 · (s_j + s_k)`, conserved by flip-flops, and
//! - a fluctuating part `(b_j − b_k)/2 · (s_j − s_k)`, present only for
//!   antiparallel pairs, which switches sign at the pair flip-flop rate.
//!
//! The switching part is replaced by its Gaussian (OU) equivalent with
//! standard deviation `2π|b_j − b_k|/2` and correlation time `1/(2W)`, where
//! `W = π|J_jk|/2` is the flip-flop rate of a resonant pair with dipolar
//! coupling `J_jk`. Ramsey sees both parts; the echo cancels the static part
//! and only the motionally narrowed fluctuations remain.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::ou::{OuIntegrator, OuProcess};
use super::{CoherenceCurve, SequenceKind};
use crate::error::{GyroError, Result};
use crate::rng::{stream, stream_seed, StreamRng};

/// Electron–electron dipolar prefactor `μ₀ħγ_e²/(4π·2π)` in Hz·nm³.
pub const DIPOLAR_EE_HZ_NM3: f64 = 5.203_6e7;
/// Electron–¹⁴N dipolar prefactor `μ₀ħγ_eγ_N/(4π·2π)` in Hz·nm³.
pub const DIPOLAR_EN_HZ_NM3: f64 = 5.715_5e3;
/// Γ(4/3): mean nearest-neighbour distance of a Poisson gas is `Γ(4/3)·(4πn/3)^{-1/3}`.
const GAMMA_4_3: f64 = 0.892_979_511_569_249_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathModel {
    /// Electron-spin number density (cm⁻³).
    pub density_cm3: f64,
    /// Bath spins per central-spin realization.
    pub n_bath: usize,
    /// Central nuclear spins in the ensemble.
    pub n_central: usize,
    /// Noise trials per central spin.
    pub trials: usize,
    pub geometry_seed: u64,
    /// Minimum distance between any two spins (nm).
    pub exclusion_nm: f64,
}

impl Default for BathModel {
    fn default() -> Self {
        BathModel {
            density_cm3: 1.0e19,
            n_bath: 50,
            n_central: 20,
            trials: 200,
            geometry_seed: 1,
            exclusion_nm: 0.357,
        }
    }
}

impl BathModel {
    /// Radius (nm) of the sphere holding `n_bath` spins at the model density.
    pub fn sphere_radius_nm(&self) -> f64 {
        let n_nm3 = self.density_cm3 * 1e-21;
        (3.0 * self.n_bath as f64 / (4.0 * PI * n_nm3)).cbrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density_cm3 >= 0.0 && self.density_cm3.is_finite()) {
            return Err(GyroError::Config("bath density must be finite and non-negative".into()));
        }
        if self.n_central == 0 || self.trials == 0 {
            return Err(GyroError::Config("bath needs n_central >= 1 and trials >= 1".into()));
        }
        if !(self.exclusion_nm > 0.0) {
            return Err(GyroError::Config("bath exclusion_nm must be positive".into()));
        }
        if self.is_empty() {
            return Ok(());
        }
        let r = self.sphere_radius_nm();
        if r < 2.0 * self.exclusion_nm {
            return Err(GyroError::Config(format!(
                "bath sphere radius {r:.3} nm is below twice the exclusion distance {:.3} nm",
                self.exclusion_nm
            )));
        }
        Ok(())
    }

    fn is_empty(&self) -> bool {
        self.density_cm3 == 0.0 || self.n_bath == 0
    }

    /// Time scale `1/(2π·J_eN)` at the mean nearest-neighbour distance.
    pub fn characteristic_time(&self) -> f64 {
        1.0 / (2.0 * PI * coupling_scales(self.density_cm3).electron_nucleus_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingScales {
    pub mean_nn_distance_nm: f64,
    pub electron_electron_hz: f64,
    pub electron_nucleus_hz: f64,
}

/// Dipolar coupling magnitudes at the mean nearest-neighbour distance for a
/// density in cm⁻³.
pub fn coupling_scales(density_cm3: f64) -> CouplingScales {
    let n_nm3 = density_cm3 * 1e-21;
    let r = GAMMA_4_3 * (4.0 * PI * n_nm3 / 3.0).powf(-1.0 / 3.0);
    let r3 = r * r * r;
    CouplingScales {
        mean_nn_distance_nm: r,
        electron_electron_hz: DIPOLAR_EE_HZ_NM3 / r3,
        electron_nucleus_hz: DIPOLAR_EN_HZ_NM3 / r3,
    }
}

fn angular(v: [f64; 3]) -> (f64, f64) {
    let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let r = r2.sqrt();
    let cos2 = v[2] * v[2] / r2;
    (r, 1.0 - 3.0 * cos2)
}

/// Pair-level description of one central spin's bath.
#[derive(Debug, Clone)]
struct BathRealization {
    /// Nuclear couplings (Hz).
    nuclear: Vec<f64>,
    /// Disjoint flip-flop pairs `(j, k, W)` with W the flip-flop rate (1/s).
    pairs: Vec<(usize, usize, f64)>,
    /// Unpaired spins (static).
    singles: Vec<usize>,
}

fn sample_positions(bath: &BathModel, rng: &mut StreamRng) -> Result<Vec<[f64; 3]>> {
    let radius = bath.sphere_radius_nm();
    let excl2 = bath.exclusion_nm * bath.exclusion_nm;
    let mut pos: Vec<[f64; 3]> = Vec::with_capacity(bath.n_bath);
    let mut attempts = 0usize;
    while pos.len() < bath.n_bath {
        attempts += 1;
        if attempts > 1000 * bath.n_bath + 1000 {
            return Err(GyroError::Config(
                "could not place bath spins with the given exclusion distance".into(),
            ));
        }
        let p: [f64; 3] = std::array::from_fn(|_| radius * (2.0 * rng.random::<f64>() - 1.0));
        let d2 = p.iter().map(|x| x * x).sum::<f64>();
        if d2 > radius * radius || d2 < excl2 {
            continue;
        }
        let clash = pos.iter().any(|q| {
            let e: f64 = (0..3).map(|i| (p[i] - q[i]).powi(2)).sum();
            e < excl2
        });
        if !clash {
            pos.push(p);
        }
    }
    Ok(pos)
}

fn realize(bath: &BathModel, central: usize) -> Result<BathRealization> {
    let mut rng = stream(bath.geometry_seed, central as u64);
    let pos = sample_positions(bath, &mut rng)?;
    let nuclear: Vec<f64> = pos
        .iter()
        .map(|p| {
            let (r, ang) = angular(*p);
            DIPOLAR_EN_HZ_NM3 * ang / (r * r * r)
        })
        .collect();
    let n = pos.len();
    let mut couplings = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for j in 0..n {
        for k in (j + 1)..n {
            let d = [pos[k][0] - pos[j][0], pos[k][1] - pos[j][1], pos[k][2] - pos[j][2]];
            let (r, ang) = angular(d);
            couplings.push((j, k, DIPOLAR_EE_HZ_NM3 * ang / (r * r * r)));
        }
    }
    couplings.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used = vec![false; n];
    let mut pairs = Vec::new();
    for (j, k, jjk) in couplings {
        if !used[j] && !used[k] && jjk != 0.0 {
            used[j] = true;
            used[k] = true;
            pairs.push((j, k, PI * jjk.abs() / 2.0));
        }
    }
    let singles = (0..n).filter(|&j| !used[j]).collect();
    Ok(BathRealization {
        nuclear,
        pairs,
        singles,
    })
}

fn spin_half<R: Rng>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        0.5
    } else {
        -0.5
    }
}

/// Phases (rad) for one trial at every time in `taus`.
fn trial_phases(real: &BathRealization, taus: &[f64], sequence: SequenceKind, rng: &mut StreamRng) -> Vec<f64> {
    let two_pi = 2.0 * PI;
    let mut static_hz = 0.0;
    for &j in &real.singles {
        static_hz += real.nuclear[j] * spin_half(rng);
    }
    // (OU process, starting value, deviates for two half-steps)
    let mut fluct: Vec<(OuProcess, f64, [f64; 4])> = Vec::new();
    for &(j, k, w) in &real.pairs {
        let (sj, sk) = (spin_half(rng), spin_half(rng));
        let g: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let (bj, bk) = (real.nuclear[j], real.nuclear[k]);
        static_hz += 0.5 * (bj + bk) * (sj + sk);
        let amp = two_pi * 0.5 * (bj - bk);
        if sj != sk && amp != 0.0 {
            let p = OuProcess {
                sigma: amp.abs(),
                tau_c: 1.0 / (2.0 * w),
                seed: 0,
            };
            fluct.push((p, amp * (sj - sk), g));
        }
    }
    taus.iter()
        .map(|&tau| {
            let mut phase = match sequence {
                SequenceKind::Ramsey => two_pi * static_hz * tau,
                SequenceKind::Echo => 0.0,
            };
            for (p, x0, g) in &fluct {
                let mut it = OuIntegrator::starting_at(*p, *x0);
                let first = it.advance_with(tau / 2.0, g[0], g[1]);
                let second = it.advance_with(tau / 2.0, g[2], g[3]);
                phase += match sequence {
                    SequenceKind::Ramsey => first + second,
                    SequenceKind::Echo => first - second,
                };
            }
            phase
        })
        .collect()
}

/// Ensemble coherence of the central ¹⁴N under the pair-level bath model.
///
/// Deterministic in `(geometry_seed, trial index)`: central spin `c` uses the
/// geometry stream `c` and its trial `t` uses the stream for
/// `(stream_seed(geometry_seed, c), t)`.
pub fn bath_coherence_simulation(bath: &BathModel, sequence: SequenceKind, taus: &[f64]) -> Result<CoherenceCurve> {
    bath.validate()?;
    if taus.is_empty() || taus.iter().any(|t| !(*t >= 0.0)) {
        return Err(GyroError::precondition("bath simulation needs non-negative times"));
    }
    let n_total = bath.n_central * bath.trials;
    if bath.is_empty() {
        let ones = vec![n_total as f64; taus.len()];
        return Ok(CoherenceCurve::from_samples(sequence, taus, &ones, &ones, n_total));
    }
    let per_central: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..bath.n_central)
        .into_par_iter()
        .map(|c| {
            let real = realize(bath, c)?;
            let trial_master = stream_seed(bath.geometry_seed, c as u64) ^ 0xA5A5_5A5A_0F0F_F0F0;
            let mut sums = vec![0.0; taus.len()];
            let mut sq = vec![0.0; taus.len()];
            for t in 0..bath.trials {
                let mut rng = stream(trial_master, t as u64);
                for (k, phi) in trial_phases(&real, taus, sequence, &mut rng).into_iter().enumerate() {
                    let v = phi.cos();
                    sums[k] += v;
                    sq[k] += v * v;
                }
            }
            Ok((sums, sq))
        })
        .collect();
    let mut sums = vec![0.0; taus.len()];
    let mut sq = vec![0.0; taus.len()];
    for r in per_central {
        let (s, q) = r?;
        for k in 0..taus.len() {
            sums[k] += s[k];
            sq[k] += q[k];
        }
    }
    Ok(CoherenceCurve::from_samples(sequence, taus, &sums, &sq, n_total))
}
