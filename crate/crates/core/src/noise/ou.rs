//! Ornstein–Uhlenbeck frequency noise.
//!
//! The process `x(t)` (rad/s) is stationary with variance `σ²` and
//! autocorrelation `σ²·exp(-|Δt|/τ_c)`. Steps are sampled exactly: the state
//! and its time integral over a step of length `h` are drawn jointly from
//! their bivariate Gaussian conditional on the state at the start of the
//! step, so accumulated phases do not depend on the step size.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CoherenceCurve, SequenceKind};
use crate::error::{GyroError, Result};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuProcess {
    /// Stationary standard deviation (rad/s).
    pub sigma: f64,
    /// Correlation time (s). `f64::INFINITY` gives static noise.
    pub tau_c: f64,
    pub seed: u64,
}

impl OuProcess {
    pub fn new(sigma: f64, tau_c: f64, seed: u64) -> Result<Self> {
        let p = OuProcess { sigma, tau_c, seed };
        p.validate()?;
        Ok(p)
    }

    /// Process whose static-limit Ramsey decay `exp(-σ²t²/2)` reaches `1/e`
    /// at `t2_star`.
    pub fn from_static_t2_star(t2_star: f64, tau_c: f64, seed: u64) -> Result<Self> {
        Self::new(std::f64::consts::SQRT_2 / t2_star, tau_c, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(GyroError::Config("OU sigma must be positive and finite".into()));
        }
        if !(self.tau_c > 0.0) {
            return Err(GyroError::Config("OU tau_c must be positive".into()));
        }
        Ok(())
    }

    /// Closed-form variance of `∫₀ᵗ x dt` for the stationary process.
    pub fn phase_variance(&self, t: f64) -> f64 {
        let (v, _, _) = self.step_moments(t);
        let (_, drift) = self.decay_and_drift(t);
        v + self.sigma * self.sigma * drift * drift
    }

    fn decay_and_drift(&self, h: f64) -> (f64, f64) {
        let u = h / self.tau_c;
        let decay = (-u).exp();
        // (1 - e^{-u}) / u, stable near u = 0
        let f = if u < 1e-8 { 1.0 - u / 2.0 } else { -(-u).exp_m1() / u };
        (decay, h * f)
    }

    /// Conditional moments over a step `h`: (var of integral, var of state, covariance).
    fn step_moments(&self, h: f64) -> (f64, f64, f64) {
        let s2 = self.sigma * self.sigma;
        let u = h / self.tau_c;
        let var_x = s2 * -(-2.0 * u).exp_m1();
        let g = if u < 1e-3 {
            2.0 * u / 3.0 - u * u / 2.0 + 7.0 * u * u * u / 30.0
        } else {
            (2.0 * u - 3.0 + 4.0 * (-u).exp() - (-2.0 * u).exp()) / (u * u)
        };
        let var_i = s2 * h * h * g;
        let f = if u < 1e-8 { 1.0 - u / 2.0 } else { -(-u).exp_m1() / u };
        let cov = s2 * h * u * f * f;
        (var_i, var_x, cov)
    }
}

/// Exact stepper for `(x, ∫x dt)`.
#[derive(Debug, Clone)]
pub struct OuIntegrator {
    process: OuProcess,
    x: f64,
}

impl OuIntegrator {
    /// Starts from a draw of the stationary distribution.
    pub fn stationary<R: Rng>(process: OuProcess, rng: &mut R) -> Self {
        let g: f64 = rng.sample(StandardNormal);
        Self::starting_at(process, process.sigma * g)
    }

    pub fn starting_at(process: OuProcess, x0: f64) -> Self {
        OuIntegrator { process, x: x0 }
    }

    pub fn value(&self) -> f64 {
        self.x
    }

    /// Advances by `h` using two standard-normal deviates, returning `∫x dt`
    /// over the step.
    pub fn advance_with(&mut self, h: f64, g1: f64, g2: f64) -> f64 {
        let (decay, drift) = self.process.decay_and_drift(h);
        let (var_i, var_x, cov) = self.process.step_moments(h);
        let (dx, di) = if var_x > 0.0 {
            let sd_x = var_x.sqrt();
            let resid = (var_i - cov * cov / var_x).max(0.0).sqrt();
            (sd_x * g1, cov / sd_x * g1 + resid * g2)
        } else {
            (0.0, var_i.max(0.0).sqrt() * g2)
        };
        let integral = self.x * drift + di;
        self.x = self.x * decay + dx;
        integral
    }

    pub fn advance<R: Rng>(&mut self, h: f64, rng: &mut R) -> f64 {
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        self.advance_with(h, g1, g2)
    }
}

/// Samples `n_steps` values `x(0), x(dt), …` starting from the stationary
/// distribution, using the stream for `p.seed`.
pub fn sample_ou_path(p: &OuProcess, dt: f64, n_steps: usize) -> Result<Vec<f64>> {
    p.validate()?;
    if !(dt > 0.0) || n_steps == 0 {
        return Err(GyroError::precondition("sample_ou_path needs dt > 0 and n_steps >= 1"));
    }
    let mut rng = stream(p.seed, 0);
    Ok(sample_path_with(p, dt, n_steps, &mut rng))
}

pub(crate) fn sample_path_with(p: &OuProcess, dt: f64, n_steps: usize, rng: &mut StreamRng) -> Vec<f64> {
    let mut it = OuIntegrator::stationary(*p, rng);
    let mut out = Vec::with_capacity(n_steps);
    out.push(it.value());
    for _ in 1..n_steps {
        it.advance(dt, rng);
        out.push(it.value());
    }
    out
}

/// Accumulated phase of one trial for each time in `taus`.
///
/// A trial draws its deviates once and reuses them at every `τ`, so curves are
/// smooth in `τ`. The echo variant reverses the sign of accumulation at `τ/2`.
fn trial_phases(p: &OuProcess, taus: &[f64], sequence: SequenceKind, rng: &mut StreamRng) -> Vec<f64> {
    let g: [f64; 5] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let x0 = p.sigma * g[0];
    taus.iter()
        .map(|&tau| match sequence {
            SequenceKind::Ramsey => OuIntegrator::starting_at(*p, x0).advance_with(tau, g[1], g[2]),
            SequenceKind::Echo => {
                let mut it = OuIntegrator::starting_at(*p, x0);
                let first = it.advance_with(tau / 2.0, g[1], g[2]);
                let second = it.advance_with(tau / 2.0, g[3], g[4]);
                first - second
            }
        })
        .collect()
}

/// Monte Carlo coherence `⟨cos ∫x dt⟩` under OU noise.
pub fn dephased_ramsey_coherence(
    p: &OuProcess,
    taus: &[f64],
    n_trials: usize,
    sequence: SequenceKind,
) -> Result<CoherenceCurve> {
    p.validate()?;
    if n_trials == 0 || taus.is_empty() {
        return Err(GyroError::precondition("need at least one trial and one time"));
    }
    if taus.iter().any(|t| !(*t >= 0.0)) {
        return Err(GyroError::precondition("times must be non-negative"));
    }
    let per_trial: Vec<Vec<f64>> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(p.seed, i as u64);
            trial_phases(p, taus, sequence, &mut rng)
                .into_iter()
                .map(f64::cos)
                .collect()
        })
        .collect();
    let mut sums = vec![0.0; taus.len()];
    let mut sq = vec![0.0; taus.len()];
    for row in &per_trial {
        for (k, v) in row.iter().enumerate() {
            sums[k] += v;
            sq[k] += v * v;
        }
    }
    Ok(CoherenceCurve::from_samples(sequence, taus, &sums, &sq, n_trials))
}
