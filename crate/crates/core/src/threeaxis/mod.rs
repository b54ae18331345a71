//! Three-axis rotation sensing with the four NV orientation families.
//!
//! Each family sees the rotation in its own frame `(x, y, axis)`, where `x`
//! is the rf direction. A rotation with a component transverse to the NV axis
//! both rotates the second pulse in the `x-y` plane and shortens it, so the
//! four families respond differently and the full vector can be recovered.

mod estimate;
mod geometry;

pub use estimate::{estimate_rotation, EstimateOptions, EstimateReport, FitStatus};
pub use geometry::{
    tan_psi_closed_form, tan_psi_parts, tilted_geometry_bruteforce, transverse_weight_closed_form, TiltedPulseGeometry,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{GyroError, Result};
use crate::sequence::{run_sequence, NoiseModel, RamseyResult, ReadPulse};
use crate::spincore::PhysicalConstants;

/// Rotation rate vector (rad/s) in the diamond frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationSpec {
    pub omega_lab: [f64; 3],
}

impl RotationSpec {
    pub fn new(omega_lab: [f64; 3]) -> Result<Self> {
        let r = RotationSpec { omega_lab };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega_lab.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GyroError::Config("rotation.omega_lab must be finite".into()))
        }
    }

    pub fn magnitude(&self) -> f64 {
        norm(self.omega_lab)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FamilyId {
    F1,
    F2,
    F3,
    F4,
}

impl FamilyId {
    pub const ALL: [FamilyId; 4] = [FamilyId::F1, FamilyId::F2, FamilyId::F3, FamilyId::F4];

    pub fn family(self) -> NvFamily {
        NvFamily::new(self)
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for FamilyId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "F1" => Ok(FamilyId::F1),
            "F2" => Ok(FamilyId::F2),
            "F3" => Ok(FamilyId::F3),
            "F4" => Ok(FamilyId::F4),
            other => Err(format!("unknown family '{other}' (expected F1..F4)")),
        }
    }
}

/// One NV orientation class with its frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvFamily {
    pub id: FamilyId,
    pub axis: [f64; 3],
    /// `x` (rf direction) and `y = axis × x`.
    pub transverse_frame: [[f64; 3]; 2],
}

impl NvFamily {
    pub fn new(id: FamilyId) -> Self {
        let raw = match id {
            FamilyId::F1 => [1.0, 1.0, 1.0],
            FamilyId::F2 => [1.0, -1.0, -1.0],
            FamilyId::F3 => [-1.0, 1.0, -1.0],
            FamilyId::F4 => [-1.0, -1.0, 1.0],
        };
        let axis = normalize(raw);
        let x = normalize(cross(axis, [0.0, 0.0, 1.0]));
        let y = cross(axis, x);
        NvFamily {
            id,
            axis,
            transverse_frame: [x, y],
        }
    }

    /// Components of a lab vector in the family frame `(x, y, axis)`.
    pub fn to_family_frame(&self, v: [f64; 3]) -> [f64; 3] {
        [
            dot(v, self.transverse_frame[0]),
            dot(v, self.transverse_frame[1]),
            dot(v, self.axis),
        ]
    }

    /// Second-pulse geometry after interrogation time `tau`.
    pub fn pulse_geometry(&self, rot: &RotationSpec, tau: f64) -> TiltedPulseGeometry {
        let w = self.to_family_frame(rot.omega_lab);
        let mag = norm(w);
        if mag == 0.0 {
            return tilted_geometry_bruteforce(0.0, 0.0, 0.0);
        }
        let theta = (w[2] / mag).clamp(-1.0, 1.0).acos();
        let phi = w[1].atan2(w[0]).rem_euclid(2.0 * PI);
        // The rf axis turns backwards as seen from the diamond.
        tilted_geometry_bruteforce(theta, phi, -mag * tau)
    }
}

/// Ramsey sequence on one family with an arbitrary rotation axis.
pub fn run_ramsey_tilted(
    family: &NvFamily,
    rot: &RotationSpec,
    tau: f64,
    c: &PhysicalConstants,
    noise: Option<&NoiseModel>,
) -> Result<RamseyResult> {
    rot.validate()?;
    let g = family.pulse_geometry(rot, tau);
    run_sequence(
        ReadPulse {
            phase: g.psi,
            flip: g.alpha,
        },
        tau,
        c.nuclear_zeeman_hz(),
        None,
        noise,
    )
}

/// Noise-free tilted signal `sin²(α/2)·cos²(ψ − 2πδτ)`.
pub(crate) fn fast_signal(family: &NvFamily, omega: [f64; 3], tau: f64, shift_hz: f64) -> f64 {
    let w = family.to_family_frame(omega);
    let mag = norm(w);
    let e = if mag == 0.0 {
        [1.0, 0.0, 0.0]
    } else {
        geometry::rotate([w[0] / mag, w[1] / mag, w[2] / mag], -mag * tau, [1.0, 0.0, 0.0])
    };
    let (psi, alpha) = geometry::pulse_from_direction(e);
    (alpha / 2.0).sin().powi(2) * (psi - 2.0 * PI * shift_hz * tau).cos().powi(2)
}

/// Signals indexed by family (rows) and interrogation time (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMatrix {
    pub families: Vec<FamilyId>,
    pub taus: Vec<f64>,
    pub signal: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl SignalMatrix {
    pub fn validate(&self) -> Result<()> {
        let rows = self.families.len();
        let cols = self.taus.len();
        let shape_ok = self.signal.len() == rows
            && self.stderr.len() == rows
            && self.signal.iter().chain(&self.stderr).all(|r| r.len() == cols);
        if !shape_ok {
            return Err(GyroError::precondition(
                "signal matrix shape does not match families x taus",
            ));
        }
        Ok(())
    }

    /// Row for a family, if present.
    pub fn row(&self, id: FamilyId) -> Option<&[f64]> {
        self.families
            .iter()
            .position(|&f| f == id)
            .map(|i| self.signal[i].as_slice())
    }
}

/// Signals for every family and interrogation time.
pub fn forward_model(
    rot: &RotationSpec,
    taus: &[f64],
    families: &[FamilyId],
    c: &PhysicalConstants,
    noise: Option<&NoiseModel>,
) -> Result<SignalMatrix> {
    if taus.is_empty() || families.is_empty() {
        return Err(GyroError::precondition(
            "forward model needs at least one family and one tau",
        ));
    }
    let cells: Vec<Result<RamseyResult>> = families
        .par_iter()
        .flat_map_iter(|id| {
            let fam = id.family();
            taus.iter().map(move |&tau| run_ramsey_tilted(&fam, rot, tau, c, noise))
        })
        .collect();
    let mut signal = vec![Vec::with_capacity(taus.len()); families.len()];
    let mut stderr = vec![Vec::with_capacity(taus.len()); families.len()];
    for (k, cell) in cells.into_iter().enumerate() {
        let r = cell?;
        signal[k / taus.len()].push(r.signal);
        stderr[k / taus.len()].push(r.signal_stderr);
    }
    Ok(SignalMatrix {
        families: families.to_vec(),
        taus: taus.to_vec(),
        signal,
        stderr,
    })
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}
