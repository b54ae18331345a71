//! Inverse problem: rotation vector from family signals.
//!
//! Weighted least squares on the closed-form tilted signal. The cost surface
//! is periodic with local minima, so a coarse grid of directions and
//! magnitudes (up to the aliasing bound `π/τ_max`) seeds several damped
//! Gauss-Newton runs and the best one wins.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{fast_signal, norm, FamilyId, NvFamily, SignalMatrix};
use crate::error::{GyroError, Result};
use crate::spincore::PhysicalConstants;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateOptions {
    pub max_iterations: usize,
    /// Relative step size at which a local run stops.
    pub tolerance: f64,
    /// Start directions on the sphere.
    pub directions: usize,
    /// Start magnitudes per direction.
    pub magnitudes: usize,
    /// Number of best grid points refined.
    pub refine_starts: usize,
    /// Largest signal deviation from the zero-rotation model still reported
    /// as a null rotation.
    pub null_tolerance: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            max_iterations: 200,
            tolerance: 1e-13,
            directions: 64,
            magnitudes: 12,
            refine_starts: 8,
            null_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    NullRotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub omega_lab: [f64; 3],
    /// Euclidean norm of the weighted residual vector.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Condition number of the weighted Jacobian at the solution.
    pub condition_number: f64,
    pub status: FitStatus,
    /// Linearized covariance of `omega_lab` (rad²/s²); `None` if singular.
    pub covariance: Option<[[f64; 3]; 3]>,
    /// `‖Ω‖·τ_max` within 5% of `π`.
    pub aliasing_warning: bool,
    /// `Ω` and `−Ω` fit equally well.
    pub sign_ambiguous: bool,
}

impl EstimateReport {
    /// One-sigma uncertainties from the covariance diagonal.
    pub fn sigma(&self) -> Option<[f64; 3]> {
        self.covariance
            .map(|c| [c[0][0].sqrt(), c[1][1].sqrt(), c[2][2].sqrt()])
    }
}

struct Problem {
    points: Vec<(NvFamily, f64, f64, f64)>,
    shift_hz: f64,
}

impl Problem {
    fn residuals(&self, w: [f64; 3]) -> DVector<f64> {
        DVector::from_iterator(
            self.points.len(),
            self.points
                .iter()
                .map(|(fam, tau, y, sw)| sw * (fast_signal(fam, w, *tau, self.shift_hz) - y)),
        )
    }

    fn cost(&self, w: [f64; 3]) -> f64 {
        0.5 * self.residuals(w).norm_squared()
    }

    fn jacobian(&self, w: [f64; 3], scale: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.points.len(), 3);
        for k in 0..3 {
            let h = 1e-6 * w[k].abs().max(scale);
            let (mut up, mut dn) = (w, w);
            up[k] += h;
            dn[k] -= h;
            let d = (self.residuals(up) - self.residuals(dn)) / (2.0 * h);
            j.set_column(k, &d);
        }
        j
    }
}

struct LocalFit {
    omega: [f64; 3],
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(p: &Problem, start: [f64; 3], scale: f64, opts: &EstimateOptions) -> LocalFit {
    let mut w = start;
    let mut cost = p.cost(w);
    let mut lambda = 1e-3;
    for it in 1..=opts.max_iterations {
        let j = p.jacobian(w, scale);
        let r = p.residuals(w);
        let g = j.transpose() * &r;
        let a = j.transpose() * &j;
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = a.clone();
            for d in 0..3 {
                damped[(d, d)] += lambda * a[(d, d)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [w[0] + step[0], w[1] + step[1], w[2] + step[2]];
            let c = p.cost(trial);
            if c <= cost {
                let small = step.norm() <= opts.tolerance * (norm(w) + scale * 1e-6);
                w = trial;
                cost = c;
                lambda = (lambda / 3.0).max(1e-15);
                improved = true;
                if small || cost == 0.0 {
                    return LocalFit {
                        omega: w,
                        cost,
                        iterations: it,
                        converged: true,
                    };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // No downhill step at any damping: stationary point.
            return LocalFit {
                omega: w,
                cost,
                iterations: it,
                converged: true,
            };
        }
    }
    LocalFit {
        omega: w,
        cost,
        iterations: opts.max_iterations,
        converged: false,
    }
}

/// Points spread evenly over the unit sphere.
fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}

/// Fits the rotation vector to measured family signals.
pub fn estimate_rotation(
    signals: &SignalMatrix,
    c: &PhysicalConstants,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    signals.validate()?;
    let mut distinct: Vec<FamilyId> = signals.families.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(GyroError::Identifiability {
            families: distinct.len(),
        });
    }
    if signals.taus.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(GyroError::precondition("interrogation times must be finite and >= 0"));
    }
    let tau_max = signals.taus.iter().cloned().fold(0.0, f64::max);
    if tau_max <= 0.0 {
        return Err(GyroError::precondition(
            "at least one interrogation time must be positive",
        ));
    }

    // Canonical row order so relabeling the input cannot change the result.
    let mut order: Vec<usize> = (0..signals.families.len()).collect();
    order.sort_by_key(|&i| signals.families[i]);
    let weighted = signals.stderr.iter().flatten().all(|&s| s > 0.0);
    let mut points = Vec::new();
    for &i in &order {
        let fam = signals.families[i].family();
        for (j, &tau) in signals.taus.iter().enumerate() {
            let sw = if weighted { 1.0 / signals.stderr[i][j] } else { 1.0 };
            points.push((fam, tau, signals.signal[i][j], sw));
        }
    }
    let problem = Problem {
        points,
        shift_hz: c.nuclear_zeeman_hz(),
    };
    let bound = PI / tau_max;

    let null_dev = problem
        .points
        .iter()
        .map(|(fam, tau, y, _)| (fast_signal(fam, [0.0; 3], *tau, problem.shift_hz) - y).abs())
        .fold(0.0, f64::max);
    if null_dev <= opts.null_tolerance {
        return Ok(EstimateReport {
            omega_lab: [0.0; 3],
            residual_norm: problem.residuals([0.0; 3]).norm(),
            iterations: 0,
            condition_number: f64::INFINITY,
            status: FitStatus::NullRotation,
            covariance: None,
            aliasing_warning: false,
            sign_ambiguous: false,
        });
    }

    let dirs = fibonacci_sphere(opts.directions.max(1));
    let mags: Vec<f64> = (0..opts.magnitudes.max(1))
        .map(|k| bound * (k as f64 + 0.5) / opts.magnitudes.max(1) as f64)
        .collect();
    let grid: Vec<[f64; 3]> = dirs
        .iter()
        .flat_map(|d| mags.iter().map(move |m| [d[0] * m, d[1] * m, d[2] * m]))
        .collect();
    let mut scored: Vec<(f64, usize)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, w)| (problem.cost(*w), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let fits: Vec<LocalFit> = scored
        .iter()
        .take(opts.refine_starts.max(1))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(_, i)| levenberg_marquardt(&problem, grid[*i], bound, opts))
        .collect();
    let best = fits
        .into_iter()
        .reduce(|a, b| if b.cost < a.cost { b } else { a })
        .expect("at least one start");

    let mut omega = best.omega;
    let flipped = [-omega[0], -omega[1], -omega[2]];
    let sign_ambiguous = (problem.cost(flipped) - best.cost).abs() <= 1e-12 * (1.0 + best.cost);
    if sign_ambiguous {
        // Report the representative with a non-negative leading component.
        if omega.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0) {
            omega = flipped;
        }
    }

    let j = problem.jacobian(omega, bound);
    let sv = j.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let dof = problem.points.len().saturating_sub(3);
    let s2 = if weighted || dof == 0 {
        1.0
    } else {
        2.0 * best.cost / dof as f64
    };
    let jtj: Matrix3<f64> = Matrix3::from_fn(|r, c| j.column(r).dot(&j.column(c)));
    let covariance = jtj
        .try_inverse()
        .map(|inv| std::array::from_fn(|r| std::array::from_fn(|c| inv[(r, c)] * s2)));

    Ok(EstimateReport {
        omega_lab: omega,
        residual_norm: (2.0 * best.cost).sqrt(),
        iterations: best.iterations,
        condition_number,
        status: if best.converged {
            FitStatus::Converged
        } else {
            FitStatus::MaxIterations
        },
        covariance,
        aliasing_warning: Vector3::from(omega).norm() * tau_max > 0.95 * PI,
        sign_ambiguous,
    })
}
