//! Run configuration. Every section is optional and falls back to the
//! reference scenario; unknown keys are rejected at every level.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::budget::BudgetScenario;
use crate::params::{derive_trap, DiamondSpec, PhysicalConstants, TrapConfig};
use crate::pulses::PulseSequence;
use crate::rotation::TrapFieldConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// JSON Schema of [`RunConfig`].
pub const SCHEMA: &str = include_str!("../schema/run_config.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: OutputFormat,
    /// Destination file; standard output when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapSection {
    /// Magnetic field gradient, T/m.
    pub gradient: f64,
}

impl Default for TrapSection {
    fn default() -> Self {
        Self { gradient: 1e3 }
    }
}

/// How to build the pulse sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SequenceSpec {
    /// `n_pulses` pulses splitting `duration` into equal intervals.
    Uniform {
        n_pulses: usize,
        duration: f64,
    },
    /// `n_intervals` equal intervals, the last pulse falling at the end.
    UniformTerminal {
        n_intervals: usize,
        duration: f64,
    },
    /// Resonant with the trap: spacing π/ω.
    Resonant {
        pulses_per_half: usize,
    },
    Custom {
        pulse_times: Vec<f64>,
        duration: f64,
    },
    File {
        path: PathBuf,
    },
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec::Resonant {
            pulses_per_half: 55,
        }
    }
}

impl SequenceSpec {
    pub fn build(&self, trap: &TrapConfig) -> Result<PulseSequence> {
        match self {
            SequenceSpec::Uniform { n_pulses, duration } => {
                PulseSequence::uniform(*n_pulses, *duration)
            }
            SequenceSpec::UniformTerminal {
                n_intervals,
                duration,
            } => PulseSequence::uniform_with_terminal_pulse(*n_intervals, *duration),
            SequenceSpec::Resonant { pulses_per_half } => {
                PulseSequence::resonant_amplification(trap.omega, *pulses_per_half)
            }
            SequenceSpec::Custom {
                pulse_times,
                duration,
            } => PulseSequence::new(pulse_times.clone(), *duration),
            SequenceSpec::File { path } => PulseSequence::from_file(path),
        }
    }
}

/// Surface-spin noise and Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub n_spins: usize,
    /// Spin relaxation time, s.
    pub tau: f64,
    pub trials: usize,
    /// Spin counts of a variance sweep.
    pub sweep_n_spins: Vec<usize>,
    /// Relaxation times of a variance sweep, s.
    pub sweep_taus: Vec<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            n_spins: 1000,
            tau: 1000.0,
            trials: 100,
            sweep_n_spins: vec![1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000],
            sweep_taus: vec![1.0, 10.0, 100.0, 1000.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationSection {
    /// Initial tilt, rad.
    pub theta0: f64,
    /// Integration step, s; the largest admissible step when absent.
    pub dt: Option<f64>,
    pub field: TrapFieldConfig,
}

impl Default for RotationSection {
    fn default() -> Self {
        Self {
            theta0: std::f64::consts::FRAC_PI_3,
            dt: None,
            field: TrapFieldConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub output: OutputConfig,
    pub constants: PhysicalConstants,
    pub diamond: DiamondSpec,
    pub trap: TrapSection,
    pub sequence: SequenceSpec,
    pub noise: NoiseSection,
    pub rotation: RotationSection,
    pub budget: BudgetScenario,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output: OutputConfig::default(),
            constants: PhysicalConstants::default(),
            diamond: DiamondSpec::default(),
            trap: TrapSection::default(),
            sequence: SequenceSpec::default(),
            noise: NoiseSection::default(),
            rotation: RotationSection::default(),
            budget: BudgetScenario::reference(),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.constants.validate()?;
        self.diamond.validate()?;
        if !(self.trap.gradient > 0.0) || !self.trap.gradient.is_finite() {
            return Err(Error::validation(format!(
                "trap.gradient must be positive, got {}",
                self.trap.gradient
            )));
        }
        if !(self.noise.tau > 0.0) || self.noise.sweep_taus.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::validation("relaxation times must be positive"));
        }
        if !self.rotation.theta0.is_finite() || self.rotation.dt.is_some_and(|dt| !(dt > 0.0)) {
            return Err(Error::validation(
                "rotation.theta0 must be finite and rotation.dt positive",
            ));
        }
        self.rotation.field.validate()?;
        Ok(())
    }

    pub fn trap(&self) -> Result<TrapConfig> {
        derive_trap(&self.constants, &self.diamond, self.trap.gradient)
    }

    pub fn pulse_sequence(&self) -> Result<PulseSequence> {
        self.sequence.build(&self.trap()?)
    }
}
