//! Sensor budget: detection efficiency of repeated readout, the shot-noise
//! sensitivity `η = √(T₂ + t_d)/(C·T₂·√N)`, nuclear polarization transfer and
//! the sensitivity-versus-density sweep.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{GyroError, Result};
use crate::noise::{bath_coherence_simulation, log_grid, BathModel, OuIntegrator, OuProcess, SequenceKind};
use crate::rng::stream;
use crate::spincore::PhysicalConstants;

/// Milli-degrees per second in one rad/s.
pub const MDEG_PER_RAD: f64 = 180.0 / PI * 1e3;

pub fn rad_s_to_mdeg_s(x: f64) -> f64 {
    x * MDEG_PER_RAD
}

pub fn mdeg_s_to_rad_s(x: f64) -> f64 {
    x / MDEG_PER_RAD
}

/// Fluorescence readout parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutModel {
    /// Mean detected photons per readout from `m_S = 0`.
    pub n0: f64,
    /// Mean detected photons per readout from `m_S = ±1`.
    pub n1: f64,
    pub n_r: u32,
    /// Collection efficiency, scales both photon numbers.
    pub eta_m: f64,
    /// Duration of one readout (s).
    pub t_single: f64,
    /// Largest `n_r` allowed before nuclear relaxation under illumination.
    pub max_repeats: u32,
}

impl Default for ReadoutModel {
    /// Photon numbers with `n0 + n1 = 0.05` and `2(n0 + n1)/(n0 − n1)² = 1500`,
    /// which puts `C` at 0.25 for 100 repeats.
    fn default() -> Self {
        let sum = 0.05;
        let diff = (2.0 * sum / 1500.0f64).sqrt();
        ReadoutModel {
            n0: (sum + diff) / 2.0,
            n1: (sum - diff) / 2.0,
            n_r: 100,
            eta_m: 1.0,
            t_single: 1.5e-6,
            max_repeats: 100,
        }
    }
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.n1 >= 0.0 && self.n0 > self.n1) {
            return Err(GyroError::Config("readout requires n0 > n1 >= 0".into()));
        }
        if self.n_r == 0 || self.max_repeats == 0 {
            return Err(GyroError::Config("readout n_r and max_repeats must be >= 1".into()));
        }
        if !(self.eta_m > 0.0 && self.eta_m <= 1.0) {
            return Err(GyroError::Config("readout eta_m must lie in (0, 1]".into()));
        }
        if !(self.t_single > 0.0) {
            return Err(GyroError::Config("readout t_single must be positive".into()));
        }
        Ok(())
    }

    /// Total readout time `n_r·t_single`.
    pub fn readout_time(&self) -> f64 {
        f64::from(self.n_r) * self.t_single
    }

    fn noise_ratio(&self) -> Result<f64> {
        let (a, b) = (self.n0 * self.eta_m, self.n1 * self.eta_m);
        if a == b {
            return Err(GyroError::ZeroContrast);
        }
        Ok(2.0 * (a + b) / (a - b).powi(2))
    }
}

/// `C = (1 + 2(n0 + n1)/(n_r(n0 − n1)²))^{−1/2}`.
pub fn detection_efficiency(r: &ReadoutModel) -> Result<f64> {
    let k = r.noise_ratio()?;
    Ok((1.0 + k / f64::from(r.n_r.max(1))).powf(-0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityBudget {
    /// Nuclear coherence (interrogation) time (s).
    pub t2: f64,
    /// Dead time per cycle (s).
    pub t_d: f64,
    pub n_spins: f64,
    pub c: f64,
}

impl Default for SensitivityBudget {
    fn default() -> Self {
        SensitivityBudget {
            t2: 1e-3,
            t_d: 152e-6,
            n_spins: 2.5e14,
            c: 0.25,
        }
    }
}

impl SensitivityBudget {
    /// Budget for one family of an ensemble: `N = n_NV·V/4`, with the
    /// density in cm⁻³ and the volume in mm³.
    pub fn from_density(n_nv_cm3: f64, volume_mm3: f64, t2: f64, t_d: f64, c: f64) -> Self {
        SensitivityBudget {
            t2,
            t_d,
            n_spins: n_nv_cm3 * volume_mm3 * 1e-3 / 4.0,
            c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub rad_per_s: f64,
    pub mdeg_per_s: f64,
}

/// Shot-noise-limited rotation sensitivity per √Hz.
pub fn sensitivity(b: &SensitivityBudget) -> Result<Sensitivity> {
    if !(b.t2 > 0.0 && b.n_spins > 0.0 && b.c > 0.0 && b.t_d >= 0.0) {
        return Err(GyroError::precondition("sensitivity needs T2, N, C > 0 and t_d >= 0"));
    }
    let eta = (b.t2 + b.t_d).sqrt() / (b.c * b.t2 * b.n_spins.sqrt());
    Ok(Sensitivity {
        rad_per_s: eta,
        mdeg_per_s: rad_s_to_mdeg_s(eta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatOptimum {
    /// Best `n_r` within `1..=max_repeats`.
    pub n_r: u32,
    pub max_repeats: u32,
    /// Best `n_r` with no cap.
    pub unconstrained: u32,
    pub c_at_optimum: f64,
}

/// Minimizes `η(n_r)` with `t_d = n_r·t_single + t_pol` at fixed `T₂`.
pub fn optimal_repeats(r: &ReadoutModel, t2: f64, t_pol: f64) -> Result<RepeatOptimum> {
    r.validate()?;
    let k = r.noise_ratio()?;
    let cost = |n: u32| {
        let nf = f64::from(n);
        (t2 + t_pol + nf * r.t_single) * (1.0 + k / nf)
    };
    let argmin = |hi: u32| (1..=hi).min_by(|&a, &b| cost(a).total_cmp(&cost(b))).unwrap_or(1);
    // The cost is convex in n_r with its minimum at √((T₂ + t_pol)·k/t_single).
    let guess = ((t2 + t_pol) * k / r.t_single).sqrt();
    let unconstrained = argmin((4.0 * guess).ceil().clamp(1.0, 1e8) as u32);
    let n_r = argmin(r.max_repeats);
    let c_at_optimum = detection_efficiency(&ReadoutModel { n_r, ..*r })?;
    Ok(RepeatOptimum {
        n_r,
        max_repeats: r.max_repeats,
        unconstrained,
        c_at_optimum,
    })
}

/// Longitudinal drive used to polarize the ¹⁴N through the NV electron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarizationDrive {
    /// Longitudinal Rabi frequency (Hz).
    pub omega_r_hz: f64,
    /// Electron dephasing time (s).
    pub t2_star_e: f64,
    /// Re-polarize the electron and transfer a second time.
    pub two_step: bool,
    /// Correlation time of the electron frequency noise (s).
    pub noise_tau_c: f64,
}

impl Default for PolarizationDrive {
    fn default() -> Self {
        PolarizationDrive {
            omega_r_hz: 500e6,
            t2_star_e: 200e-9,
            two_step: false,
            noise_tau_c: 1e-6,
        }
    }
}

impl PolarizationDrive {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r_hz >= 0.0 && self.t2_star_e > 0.0 && self.noise_tau_c > 0.0) {
            return Err(GyroError::Config(
                "polarization needs omega_r_hz >= 0, t2_star_e > 0, noise_tau_c > 0".into(),
            ));
        }
        Ok(())
    }

    /// Electron frequency noise with static-limit dephasing time `t2_star_e`.
    pub fn electron_noise(&self, seed: u64) -> Result<OuProcess> {
        OuProcess::from_static_t2_star(self.t2_star_e, self.noise_tau_c, seed)
    }
}

fn detuned_sum_hz(c: &PhysicalConstants) -> f64 {
    c.delta_hz + c.electron_zeeman_hz() + c.q_hz
}

/// Transfer time `π(Δ + γ_e b + Q)/(A·Ω_R)` read with angular frequencies,
/// which is the Hz-valued expression divided by 2π.
pub fn polarization_time(c: &PhysicalConstants, d: &PolarizationDrive) -> f64 {
    polarization_time_hz_convention(c, d) / (2.0 * PI)
}

/// The same expression evaluated directly with Hz values.
pub fn polarization_time_hz_convention(c: &PhysicalConstants, d: &PolarizationDrive) -> f64 {
    PI * detuned_sum_hz(c) / (c.a_hz * d.omega_r_hz)
}

/// Effective flip-flop coupling (rad/s) that completes the transfer in
/// [`polarization_time`].
pub fn flip_flop_coupling(c: &PhysicalConstants, d: &PolarizationDrive) -> f64 {
    if d.omega_r_hz == 0.0 {
        return 0.0;
    }
    PI / (2.0 * polarization_time(c, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarizationSim {
    /// Time steps per transfer window.
    pub steps: usize,
    pub trials: usize,
}

impl Default for PolarizationSim {
    fn default() -> Self {
        PolarizationSim {
            steps: 200,
            trials: 200,
        }
    }
}

/// Nuclear polarization versus time. Polarization is the fraction of the
/// initially unpolarized `m_I = ±1` population moved into `m_I = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationTrajectory {
    pub times: Vec<f64>,
    pub polarization: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl PolarizationTrajectory {
    pub fn final_polarization(&self) -> f64 {
        *self.polarization.last().unwrap_or(&0.0)
    }
}

/// Exact propagator of `H = [[0, g], [g, d]]` over `h`, applied to `(a, b)`.
fn two_level_step(
    a: num_complex::Complex64,
    b: num_complex::Complex64,
    g: f64,
    d: f64,
    h: f64,
) -> [num_complex::Complex64; 2] {
    use num_complex::Complex64;
    let w = g.hypot(d / 2.0);
    let phase = Complex64::from_polar(1.0, -d * h / 2.0);
    let (s, cw) = (w * h).sin_cos();
    let sinc = if w == 0.0 { h } else { s / w };
    let i = Complex64::i();
    // exp(−i h M) with M = [[−d/2, g], [g, d/2]].
    let m00 = Complex64::new(cw, 0.0) + i * (d / 2.0) * sinc;
    let m11 = Complex64::new(cw, 0.0) - i * (d / 2.0) * sinc;
    let m01 = -i * g * sinc;
    [phase * (m00 * a + m01 * b), phase * (m01 * a + m11 * b)]
}

/// Polarization transfer under the longitudinal drive with OU dephasing of
/// the electron.
///
/// In the joint basis the drive couples `|0_e, ±1_N⟩ ↔ |±1_e, 0_N⟩` with
/// strength [`flip_flop_coupling`]; electron noise `x(t)·S_z` detunes each
/// pair by `±x`. The electron starts in `|0⟩`, the nucleus unpolarized. With
/// `two_step`, the electron is re-polarized after `duration` and a second
/// window of the same length follows, so the trajectory spans `2·duration`.
/// Trial `t` uses the stream `(noise.seed, t)`, so single- and two-step runs
/// share the first-window noise.
pub fn simulate_polarization_transfer(
    c: &PhysicalConstants,
    d: &PolarizationDrive,
    duration: f64,
    noise: Option<&OuProcess>,
    sim: &PolarizationSim,
) -> Result<PolarizationTrajectory> {
    use num_complex::Complex64;
    d.validate()?;
    if !(duration >= 0.0 && duration.is_finite()) || sim.steps == 0 || sim.trials == 0 {
        return Err(GyroError::precondition(
            "polarization needs duration >= 0, steps >= 1, trials >= 1",
        ));
    }
    let g = flip_flop_coupling(c, d);
    let h = duration / sim.steps as f64;
    let windows = if d.two_step { 2 } else { 1 };
    let n_points = windows * sim.steps + 1;
    let trials = if noise.is_some() { sim.trials } else { 1 };

    let runs: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = noise.map(|p| stream(p.seed, t as u64));
            let mut ou = match (noise, rng.as_mut()) {
                (Some(p), Some(r)) => Some(OuIntegrator::stationary(*p, r)),
                _ => None,
            };
            let mut out = Vec::with_capacity(n_points);
            out.push(0.0);
            let mut carried = 0.0;
            for _ in 0..windows {
                // Branches m_I = +1 and −1: amplitudes on (|0_e,±1⟩, |±1_e,0⟩).
                let mut branch = [[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]; 2];
                let remaining = 1.0 - carried;
                for _ in 0..sim.steps {
                    let x = match (ou.as_mut(), rng.as_mut()) {
                        (Some(o), Some(r)) if h > 0.0 => {
                            let (g1, g2): (f64, f64) = (r.sample(StandardNormal), r.sample(StandardNormal));
                            o.advance_with(h, g1, g2) / h
                        }
                        _ => 0.0,
                    };
                    for (k, sign) in [(0, 1.0), (1, -1.0)] {
                        let [a, b] = branch[k];
                        branch[k] = two_level_step(a, b, g, sign * x, h);
                    }
                    let moved = (branch[0][1].norm_sqr() + branch[1][1].norm_sqr()) / 2.0;
                    out.push((carried + remaining * moved).clamp(0.0, 1.0));
                }
                carried = *out.last().unwrap();
            }
            out
        })
        .collect();

    let n = trials as f64;
    let mut mean = vec![0.0; n_points];
    let mut sq = vec![0.0; n_points];
    for run in &runs {
        for (k, v) in run.iter().enumerate() {
            mean[k] += v / n;
            sq[k] += v * v / n;
        }
    }
    let stderr = mean
        .iter()
        .zip(&sq)
        .map(|(m, s)| {
            if trials > 1 {
                ((s - m * m).max(0.0) / (n - 1.0)).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(PolarizationTrajectory {
        times: (0..n_points).map(|k| k as f64 * h).collect(),
        polarization: mean,
        stderr,
    })
}

/// Ramsey dephasing time of the ¹⁴N versus NV density, from the bath model
/// with a P1 density `p1_ratio·n_NV`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2StarTable {
    pub densities: Vec<f64>,
    pub t2_star: Vec<f64>,
}

impl T2StarTable {
    pub fn from_bath(densities: &[f64], template: &BathModel, p1_ratio: f64) -> Result<Self> {
        if densities.is_empty() {
            return Err(GyroError::precondition("density grid is empty"));
        }
        let mut t2_star = Vec::with_capacity(densities.len());
        for &n in densities {
            let bath = BathModel {
                density_cm3: n * p1_ratio,
                ..*template
            };
            let tc = bath.characteristic_time();
            let taus = log_grid(1e-2 * tc, 1e2 * tc, 48);
            let curve = bath_coherence_simulation(&bath, SequenceKind::Ramsey, &taus)?;
            let t = curve
                .crossing_time((-1.0f64).exp())
                .or(curve.fitted_t2)
                .unwrap_or(*taus.last().unwrap());
            t2_star.push(t);
        }
        Ok(T2StarTable {
            densities: densities.to_vec(),
            t2_star,
        })
    }

    /// Log-log interpolation, clamped at the ends.
    pub fn lookup(&self, n: f64) -> f64 {
        let d = &self.densities;
        if n <= d[0] {
            return self.t2_star[0];
        }
        for i in 1..d.len() {
            if n <= d[i] {
                let w = (n / d[i - 1]).ln() / (d[i] / d[i - 1]).ln();
                return (self.t2_star[i - 1].ln() * (1.0 - w) + self.t2_star[i].ln() * w).exp();
            }
        }
        *self.t2_star.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ramsey,
    Echo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub scheme: Scheme,
    pub interrogation_time: f64,
    pub densities: Vec<f64>,
    /// Effective interrogation time `min(t, T_coh)` per density (s).
    pub effective_time: Vec<f64>,
    pub eta_rad_per_s: Vec<f64>,
    pub eta_mdeg_per_s: Vec<f64>,
}

/// Inputs shared by every point of a density sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySweep<'a> {
    pub volume_mm3: f64,
    pub t_d: f64,
    pub c: f64,
    /// Echo coherence time (s).
    pub t2_echo: f64,
    pub t2_star: &'a T2StarTable,
}

/// Sensitivity versus NV density. The interrogation time is capped by the
/// scheme's coherence time: the bath T₂* for Ramsey, `t2_echo` for echo.
pub fn sensitivity_vs_density(
    densities: &[f64],
    sweep: &DensitySweep<'_>,
    scheme: Scheme,
    t: f64,
) -> Result<DensityCurve> {
    if densities.is_empty() {
        return Err(GyroError::precondition("density grid is empty"));
    }
    let points: Vec<Result<(f64, Sensitivity)>> = densities
        .par_iter()
        .map(|&n| {
            let coh = match scheme {
                Scheme::Ramsey => sweep.t2_star.lookup(n),
                Scheme::Echo => sweep.t2_echo,
            };
            let t_int = t.min(coh);
            let s = sensitivity(&SensitivityBudget::from_density(
                n,
                sweep.volume_mm3,
                t_int,
                sweep.t_d,
                sweep.c,
            ))?;
            Ok((t_int, s))
        })
        .collect();
    let mut curve = DensityCurve {
        scheme,
        interrogation_time: t,
        densities: densities.to_vec(),
        effective_time: Vec::new(),
        eta_rad_per_s: Vec::new(),
        eta_mdeg_per_s: Vec::new(),
    };
    for p in points {
        let (t_int, s) = p?;
        curve.effective_time.push(t_int);
        curve.eta_rad_per_s.push(s.rad_per_s);
        curve.eta_mdeg_per_s.push(s.mdeg_per_s);
    }
    Ok(curve)
}

/// Default sensor volume `2.5 × 2.5 × 0.15` mm³.
pub const DEFAULT_VOLUME_MM3: f64 = 2.5 * 2.5 * 0.15;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headline_sensitivity() {
        let s = sensitivity(&SensitivityBudget::default()).unwrap();
        assert!((s.rad_per_s - 8.587e-6).abs() < 1e-8, "{s:?}");
        assert!((s.mdeg_per_s - 0.492).abs() < 1e-3, "{s:?}");
    }

    #[test]
    fn ideal_limit_and_spin_scaling() {
        let b = SensitivityBudget {
            t2: 2e-3,
            t_d: 0.0,
            n_spins: 1e12,
            c: 1.0,
        };
        let s = sensitivity(&b).unwrap();
        assert!((s.rad_per_s - 1.0 / (2e-3f64.sqrt() * 1e6)).abs() < 1e-15);
        let q = sensitivity(&SensitivityBudget { n_spins: 4e12, ..b }).unwrap();
        assert!((q.rad_per_s / s.rad_per_s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_monotonicity() {
        let base = SensitivityBudget::default();
        let eta = |b: SensitivityBudget| sensitivity(&b).unwrap().rad_per_s;
        let e0 = eta(base);
        for f in [0.5, 0.9, 1.1, 3.0] {
            let up = f > 1.0;
            assert_eq!(eta(SensitivityBudget { c: base.c * f, ..base }) < e0, up);
            assert_eq!(
                eta(SensitivityBudget {
                    n_spins: base.n_spins * f,
                    ..base
                }) < e0,
                up
            );
            assert_eq!(
                eta(SensitivityBudget {
                    t2: base.t2 * f,
                    ..base
                }) < e0,
                up
            );
            assert_eq!(
                eta(SensitivityBudget {
                    t_d: base.t_d * f,
                    ..base
                }) > e0,
                up
            );
        }
    }

    #[test]
    fn invalid_budget_rejected() {
        assert!(sensitivity(&SensitivityBudget {
            t2: 0.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn unit_round_trip() {
        for x in [1e-9, 8.6e-6, 3.0, 1e5] {
            assert!((mdeg_s_to_rad_s(rad_s_to_mdeg_s(x)) / x - 1.0).abs() < 1e-12);
        }
        assert!((rad_s_to_mdeg_s(PI / 180.0) - 1e3).abs() < 1e-9);
    }

    #[test]
    fn density_gives_spin_count() {
        let b = SensitivityBudget::from_density(1e18, DEFAULT_VOLUME_MM3, 1e-3, 0.0, 1.0);
        assert!((b.n_spins - 2.34375e14).abs() < 1e3);
    }

    #[test]
    fn efficiency_defaults() {
        let r = ReadoutModel::default();
        assert!((r.n0 + r.n1 - 0.05).abs() < 1e-15);
        assert!((r.n0 - r.n1 - 8.165e-3).abs() < 1e-6);
        let c100 = detection_efficiency(&r).unwrap();
        assert!((c100 - 0.25).abs() < 1e-12);
        let c1 = detection_efficiency(&ReadoutModel { n_r: 1, ..r }).unwrap();
        assert!((c1 - 0.0258).abs() < 1e-4);
        assert!((r.readout_time() - 150e-6).abs() < 1e-15);
    }

    #[test]
    fn efficiency_scaling_and_limit() {
        let r = ReadoutModel::default();
        let c = |n: u32| detection_efficiency(&ReadoutModel { n_r: n, ..r }).unwrap();
        for n in [1, 2, 5] {
            assert!((c(4 * n) / (2.0 * c(n)) - 1.0).abs() < 0.01);
        }
        assert!(c(u32::MAX) > 0.999);
    }

    #[test]
    fn equal_counts_have_no_contrast() {
        let r = ReadoutModel {
            n0: 0.03,
            n1: 0.03,
            ..Default::default()
        };
        assert!(matches!(detection_efficiency(&r), Err(GyroError::ZeroContrast)));
    }

    #[test]
    fn repeat_optimum() {
        let r = ReadoutModel::default();
        let o = optimal_repeats(&r, 1e-3, 2e-6).unwrap();
        assert_eq!(o.n_r, 100);
        let k = 1500.0f64;
        let expected = ((1e-3 + 2e-6) * k / 1.5e-6).sqrt();
        assert!((f64::from(o.unconstrained) - expected).abs() <= 1.0, "{o:?}");
        let loose = optimal_repeats(&ReadoutModel { max_repeats: 5000, ..r }, 1e-3, 2e-6).unwrap();
        assert_eq!(loose.n_r, o.unconstrained);
        let short = optimal_repeats(&r, 1e-6, 0.0).unwrap();
        assert!(short.n_r < 100);
    }

    #[test]
    fn polarization_time_values() {
        let k = PhysicalConstants::default();
        let d = PolarizationDrive::default();
        let t = polarization_time(&k, &d);
        assert!((t - 1.3323e-6).abs() < 1e-9, "{t:e}");
        assert!((polarization_time_hz_convention(&k, &d) - 8.371e-6).abs() < 1e-8);
        let fast = PolarizationDrive { omega_r_hz: 1e9, ..d };
        assert!((polarization_time(&k, &fast) / t - 0.5).abs() < 1e-14);
        let bare = PhysicalConstants {
            b_gauss: 0.0,
            q_hz: 0.0,
            ..k
        };
        assert!((polarization_time(&bare, &d) - k.delta_hz / (2.0 * k.a_hz * d.omega_r_hz)).abs() < 1e-20);
    }

    #[test]
    fn noiseless_transfer_completes_at_polarization_time() {
        let k = PhysicalConstants::default();
        let d = PolarizationDrive::default();
        let t = polarization_time(&k, &d);
        let traj = simulate_polarization_transfer(&k, &d, t, None, &PolarizationSim::default()).unwrap();
        assert!((traj.final_polarization() - 1.0).abs() < 1e-3);
        assert!(traj.polarization.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(traj.times.len(), 201);
    }

    #[test]
    fn no_drive_no_polarization() {
        let k = PhysicalConstants::default();
        let d = PolarizationDrive {
            omega_r_hz: 0.0,
            ..Default::default()
        };
        let noise = d.electron_noise(3).unwrap();
        let sim = PolarizationSim { steps: 50, trials: 20 };
        let traj = simulate_polarization_transfer(&k, &d, 2e-6, Some(&noise), &sim).unwrap();
        assert!(traj.final_polarization().abs() < 1e-12);
    }

    #[test]
    fn dephasing_limits_transfer_and_second_step_helps() {
        let k = PhysicalConstants::default();
        let d = PolarizationDrive::default();
        let t = polarization_time(&k, &d);
        let noise = d.electron_noise(11).unwrap();
        let sim = PolarizationSim {
            steps: 100,
            trials: 100,
        };
        let one = simulate_polarization_transfer(&k, &d, t, Some(&noise), &sim).unwrap();
        let two = simulate_polarization_transfer(&k, &PolarizationDrive { two_step: true, ..d }, t, Some(&noise), &sim)
            .unwrap();
        assert!(one.final_polarization() < 1.0);
        assert!(two.final_polarization() > one.final_polarization());
        // Paired seeds: the first window is identical.
        assert_eq!(&two.polarization[..=sim.steps], one.polarization.as_slice());
    }

    #[test]
    fn two_level_step_matches_matrix_exponential() {
        use crate::spincore::{LevelBasis, OperatorMatrix};
        use nalgebra::DMatrix;
        use num_complex::Complex64;
        // Embed the pair in a 3-level operator to reuse the Hermitian exponential.
        let (g, dd, h) = (1.3e6, -2.1e6, 3e-7);
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, g, 0.0, g, dd, 0.0, 0.0, 0.0, 0.0].map(|v| Complex64::new(v, 0.0)),
        );
        let u = OperatorMatrix::new(LevelBasis::Nuclear, m).unwrap().exp_i(h).unwrap();
        let [a, b] = two_level_step(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8), g, dd, h);
        let e = u.entries();
        let ra = e[(0, 0)] * 0.6 + e[(0, 1)] * Complex64::new(0.0, 0.8);
        let rb = e[(1, 0)] * 0.6 + e[(1, 1)] * Complex64::new(0.0, 0.8);
        assert!((a - ra).norm() < 1e-12 && (b - rb).norm() < 1e-12);
    }

    #[test]
    fn echo_beats_ramsey_and_improves_with_density() {
        let densities = [1e16, 1e17, 1e18];
        let template = BathModel {
            n_central: 4,
            trials: 40,
            ..Default::default()
        };
        let table = T2StarTable::from_bath(&densities, &template, 10.0).unwrap();
        assert!(table.t2_star.windows(2).all(|w| w[1] < w[0]), "{table:?}");
        let sweep = DensitySweep {
            volume_mm3: DEFAULT_VOLUME_MM3,
            t_d: 152e-6,
            c: 0.25,
            t2_echo: 1e-3,
            t2_star: &table,
        };
        let echo = sensitivity_vs_density(&densities, &sweep, Scheme::Echo, 1e-3).unwrap();
        let ramsey = sensitivity_vs_density(&densities, &sweep, Scheme::Ramsey, 1e-3).unwrap();
        assert!(echo.eta_mdeg_per_s.windows(2).all(|w| w[1] < w[0]));
        for i in 0..densities.len() {
            assert!(echo.eta_rad_per_s[i] <= ramsey.eta_rad_per_s[i]);
        }
        assert!(echo.eta_mdeg_per_s[2] < 1.0);
        assert!(sensitivity_vs_density(&[], &sweep, Scheme::Echo, 1e-3).is_err());
    }
}
