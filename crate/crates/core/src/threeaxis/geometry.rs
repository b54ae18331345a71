//! Geometry of the second Ramsey pulse when the rotation axis is tilted away
//! from the NV axis.
//!
//! The rf field is along the family `x` axis when the first pulse fires. By
//! the second pulse the diamond has turned, so in the family frame the field
//! direction is `e = R_n(Ωt)·x̂`, with `n` the rotation axis at polar angles
//! `(θ, φ)`. Only the transverse part of `e` drives the nuclear transition:
//! its in-plane angle is `ψ` and its length scales the nominal `π` flip.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Second-pulse geometry for one family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedPulseGeometry {
    pub psi: f64,
    pub alpha: f64,
    pub theta: f64,
    pub phi: f64,
    pub omega_t: f64,
}

impl TiltedPulseGeometry {
    /// Contrast factor `sin²(α/2)`.
    pub fn contrast(&self) -> f64 {
        (self.alpha / 2.0).sin().powi(2)
    }
}

pub(crate) fn axis_from_angles(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Rodrigues rotation of `v` by `angle` about the unit vector `n`.
pub(crate) fn rotate(n: [f64; 3], angle: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let cross = [
        n[1] * v[2] - n[2] * v[1],
        n[2] * v[0] - n[0] * v[2],
        n[0] * v[1] - n[1] * v[0],
    ];
    let dot = n[0] * v[0] + n[1] * v[1] + n[2] * v[2];
    std::array::from_fn(|i| v[i] * c + cross[i] * s + n[i] * dot * (1.0 - c))
}

/// In-plane angle and flip angle for a rotated rf direction.
pub(crate) fn pulse_from_direction(e: [f64; 3]) -> (f64, f64) {
    let transverse = e[0].hypot(e[1]).min(1.0);
    (e[1].atan2(e[0]), PI * transverse)
}

/// Rotates the rf direction explicitly and decomposes the result.
pub fn tilted_geometry_bruteforce(theta: f64, phi: f64, omega_t: f64) -> TiltedPulseGeometry {
    let e = rotate(axis_from_angles(theta, phi), omega_t, [1.0, 0.0, 0.0]);
    let (psi, alpha) = pulse_from_direction(e);
    TiltedPulseGeometry {
        psi,
        alpha,
        theta,
        phi,
        omega_t,
    }
}

/// Numerator and denominator of the closed-form `tan ψ` expression.
pub fn tan_psi_parts(theta: f64, phi: f64, omega_t: f64) -> (f64, f64) {
    let s2 = (omega_t / 2.0).sin().powi(2);
    let num = 4.0 * (theta.sin().powi(2) * (2.0 * phi).sin() * s2 + theta.cos() * omega_t.sin());
    let den =
        2.0 * s2 * ((2.0 * phi).cos() - 2.0 * (2.0 * theta).cos() * phi.cos().powi(2)) + 3.0 * omega_t.cos() + 1.0;
    (num, den)
}

/// Closed form for `tan ψ`.
pub fn tan_psi_closed_form(theta: f64, phi: f64, omega_t: f64) -> f64 {
    let (num, den) = tan_psi_parts(theta, phi, omega_t);
    num / den
}

/// Closed form for the squared transverse drive amplitude `(α/π)²`. It
/// equals 1 in the aligned limit.
pub fn transverse_weight_closed_form(theta: f64, phi: f64, omega_t: f64) -> f64 {
    let (num, den) = tan_psi_parts(theta, phi, omega_t);
    den * den / 16.0 + num * num / 16.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wrap(x: f64) -> f64 {
        (x + PI).rem_euclid(2.0 * PI) - PI
    }

    #[test]
    fn aligned_limit() {
        for phi in [0.0, 1.0, 4.0] {
            let g = tilted_geometry_bruteforce(0.0, phi, 0.7);
            assert!((g.psi - 0.7).abs() < 1e-14);
            assert!((g.alpha - PI).abs() < 1e-14);
            assert!((tan_psi_closed_form(0.0, phi, 0.7) - 0.7f64.tan()).abs() < 1e-12);
        }
    }

    #[test]
    fn perpendicular_half_turn_about_x_leaves_field() {
        let g = tilted_geometry_bruteforce(PI / 2.0, 0.0, PI);
        assert!(g.psi.abs() < 1e-14);
        assert!((g.alpha - PI).abs() < 1e-14);
    }

    #[test]
    fn perpendicular_half_turn_about_y_inverts_field() {
        let g = tilted_geometry_bruteforce(PI / 2.0, PI / 2.0, PI);
        assert!((wrap(g.psi).abs() - PI).abs() < 1e-12);
        assert!((g.alpha - PI).abs() < 1e-12);
        // A quarter turn about y tips the field onto the NV axis.
        let q = tilted_geometry_bruteforce(PI / 2.0, PI / 2.0, PI / 2.0);
        assert!(q.alpha < 1e-12);
    }

    #[test]
    fn closed_form_at_reference_point() {
        let (t, p, w) = (0.3, 0.5, 0.4);
        let g = tilted_geometry_bruteforce(t, p, w);
        assert!((tan_psi_closed_form(t, p, w) - g.psi.tan()).abs() < 1e-8);
        assert!((transverse_weight_closed_form(t, p, w) - (g.alpha / PI).powi(2)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn closed_forms_match_rotation(t in 0.0..PI, p in 0.0..2.0 * PI, w in -6.0f64..6.0) {
            let g = tilted_geometry_bruteforce(t, p, w);
            let (num, den) = tan_psi_parts(t, p, w);
            // Compare the direction of (den, num) with ψ to avoid poles of tan.
            let scale = num.hypot(den);
            prop_assume!(scale > 1e-6);
            prop_assert!((den / scale - g.psi.cos()).abs() < 1e-9);
            prop_assert!((num / scale - g.psi.sin()).abs() < 1e-9);
            prop_assert!((transverse_weight_closed_form(t, p, w) - (g.alpha / PI).powi(2)).abs() < 1e-12);
            prop_assert!(g.alpha <= PI + 1e-12 && g.alpha >= 0.0);
        }
    }
}
