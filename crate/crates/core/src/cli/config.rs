//! Run configuration: one JSON document, every section optional, unknown keys
//! rejected.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{GyroError, Result};
use crate::noise::BathModel;
use crate::rng::stream_seed;
use crate::sensor::{PolarizationDrive, PolarizationSim, ReadoutModel, SensitivityBudget, DEFAULT_VOLUME_MM3};
use crate::sequence::{NoiseModel, SequenceTiming};
use crate::spincore::PhysicalConstants;
use crate::threeaxis::{EstimateOptions, FamilyId, RotationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    #[default]
    Omega,
    Tau,
}

/// Aligned-axis Ramsey / echo sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    /// Rotation rate (rad/s) for a τ sweep.
    pub omega: f64,
    /// Extra static frequency shift (Hz).
    pub detuning_hz: f64,
    /// Echo pulse phase (rad).
    pub echo_phase: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            variable: SweepVariable::Omega,
            start: 0.0,
            stop: 3000.0,
            points: 101,
            omega: 300.0,
            detuning_hz: 0.0,
            echo_phase: 0.0,
        }
    }
}

impl SweepConfig {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            1 => vec![self.start],
            n => (0..n)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamiliesConfig {
    pub families: Vec<FamilyId>,
    pub taus: Vec<f64>,
    /// Binomial shot noise with this many counts per cell.
    pub shot_counts: Option<u64>,
}

impl Default for FamiliesConfig {
    fn default() -> Self {
        FamiliesConfig {
            families: FamilyId::ALL.to_vec(),
            taus: vec![0.4, 0.8, 1.2, 1.6, 2.0],
            shot_counts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    /// Signal matrix file (`family,tau_s,signal,stderr`).
    pub signals: Option<PathBuf>,
    pub options: EstimateOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub budget: SensitivityBudget,
    /// NV densities (cm⁻³).
    pub densities: Vec<f64>,
    pub volume_mm3: f64,
    pub interrogation_times: Vec<f64>,
    pub t2_echo: f64,
    /// P1 density as a multiple of the NV density.
    pub p1_ratio: f64,
    pub bath: BathModel,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            budget: SensitivityBudget::default(),
            densities: (0..9).map(|k| 10f64.powf(15.0 + 0.5 * k as f64)).collect(),
            volume_mm3: DEFAULT_VOLUME_MM3,
            interrogation_times: vec![1e-4, 1e-3],
            t2_echo: 1e-3,
            p1_ratio: 10.0,
            bath: BathModel {
                n_central: 8,
                trials: 100,
                ..BathModel::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathConfig {
    /// Bath (P1) densities (cm⁻³).
    pub densities: Vec<f64>,
    pub model: BathModel,
    /// Time points per density, log-spaced over four decades around the
    /// characteristic coupling time.
    pub points: usize,
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig {
            densities: vec![0.35e19, 1.06e19, 3.17e19],
            model: BathModel::default(),
            points: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolarizeConfig {
    pub drive: PolarizationDrive,
    pub sim: PolarizationSim,
    /// Transfer window (s); the polarization time when absent.
    pub duration: Option<f64>,
    /// Electron dephasing on or off.
    pub noise: bool,
}

impl Default for PolarizeConfig {
    fn default() -> Self {
        PolarizeConfig {
            drive: PolarizationDrive::default(),
            sim: PolarizationSim::default(),
            duration: None,
            noise: true,
        }
    }
}

/// Everything a run needs. The master `seed` feeds every random stream.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub format: OutputFormat,
    pub constants: PhysicalConstants,
    pub timing: SequenceTiming,
    pub noise: NoiseModel,
    pub rotation: RotationSpec,
    pub readout: ReadoutModel,
    pub sweep: SweepConfig,
    pub families: FamiliesConfig,
    pub estimate: EstimateConfig,
    pub sensitivity: SensitivityConfig,
    pub bath: BathConfig,
    pub polarize: PolarizeConfig,
}

/// Stream indices derived from the master seed.
const OU_STREAM: u64 = 1;
const BATH_STREAM: u64 = 2;
const SENSITIVITY_BATH_STREAM: u64 = 3;
pub(crate) const SHOT_STREAM: u64 = 4;
pub(crate) const POLARIZE_STREAM: u64 = 5;

impl RunConfig {
    /// Parses a config file; errors carry `path:line:column`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GyroError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            GyroError::Config(m) => GyroError::Config(format!("{}:{m}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GyroError::Config(format!("{}:{}: {e}", e.line(), e.column())))
    }

    /// Pushes the master seed into every seeded component and validates.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(ou) = self.noise.ou.as_mut() {
            ou.seed = stream_seed(self.seed, OU_STREAM);
        }
        self.bath.model.geometry_seed = stream_seed(self.seed, BATH_STREAM);
        self.sensitivity.bath.geometry_seed = stream_seed(self.seed, SENSITIVITY_BATH_STREAM);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.timing.validate().map_err(as_config)?;
        self.noise.validate()?;
        self.rotation.validate()?;
        self.readout.validate()?;
        let s = &self.sweep;
        if s.points == 0 || !(s.start.is_finite() && s.stop.is_finite()) {
            return Err(GyroError::Config("sweep needs points >= 1 and finite bounds".into()));
        }
        if s.variable == SweepVariable::Tau && (s.start < 0.0 || s.stop < 0.0) {
            return Err(GyroError::Config("sweep over tau needs non-negative bounds".into()));
        }
        let f = &self.families;
        if f.families.is_empty() || f.taus.is_empty() || f.taus.iter().any(|t| !(*t >= 0.0)) {
            return Err(GyroError::Config(
                "families needs at least one family and non-negative taus".into(),
            ));
        }
        if f.shot_counts == Some(0) {
            return Err(GyroError::Config("families.shot_counts must be >= 1".into()));
        }
        let sen = &self.sensitivity;
        if sen.densities.is_empty() || sen.densities.iter().any(|d| !(*d > 0.0)) {
            return Err(GyroError::Config(
                "sensitivity.densities must be positive and non-empty".into(),
            ));
        }
        if sen.interrogation_times.iter().any(|t| !(*t > 0.0)) || !(sen.volume_mm3 > 0.0 && sen.t2_echo > 0.0) {
            return Err(GyroError::Config(
                "sensitivity times, volume_mm3 and t2_echo must be positive".into(),
            ));
        }
        if !(sen.p1_ratio > 0.0) {
            return Err(GyroError::Config("sensitivity.p1_ratio must be positive".into()));
        }
        sen.bath.validate()?;
        if self.bath.points < 2 || self.bath.densities.iter().any(|d| !(*d >= 0.0)) {
            return Err(GyroError::Config(
                "bath needs points >= 2 and non-negative densities".into(),
            ));
        }
        for &d in &self.bath.densities {
            BathModel {
                density_cm3: d,
                ..self.bath.model
            }
            .validate()?;
        }
        self.polarize.drive.validate()?;
        if self.polarize.sim.steps == 0 || self.polarize.sim.trials == 0 {
            return Err(GyroError::Config("polarize.sim needs steps and trials >= 1".into()));
        }
        if let Some(d) = self.polarize.duration {
            if !(d > 0.0) {
                return Err(GyroError::Config("polarize.duration must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn polarize_seed(&self) -> u64 {
        stream_seed(self.seed, POLARIZE_STREAM)
    }
}

fn as_config(e: GyroError) -> GyroError {
    match e {
        GyroError::Precondition(m) => GyroError::Config(m),
        other => other,
    }
}
