//! π-pulse sequences and the ±1 modulation functions they generate.
//!
//! Pulses are instantaneous sign flips. A pulse at `t` affects `[t, next)`,
//! so every modulation function is right-continuous.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::CompensatedSum;
use crate::{Error, Result};

/// Construction family of a [`PulseSequence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    Uniform,
    ResonantAmplification,
    Doubled,
    Custom,
}

/// An ordered set of pulse times inside `(0, duration)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pulse_times: Vec<f64>,
    duration: f64,
    #[serde(default = "custom_kind")]
    kind: SequenceKind,
}

fn custom_kind() -> SequenceKind {
    SequenceKind::Custom
}

/// Outcome of [`PulseSequence::validate_phase_cancelling`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CancellationReport {
    pub is_cancelling: bool,
    /// ∫₀ᵀ P(t) dt, s.
    pub residual: f64,
}

impl PulseSequence {
    /// Validates and wraps an arbitrary set of pulse times.
    pub fn new(pulse_times: Vec<f64>, duration: f64) -> Result<Self> {
        Self::with_kind(pulse_times, duration, SequenceKind::Custom)
    }

    fn with_kind(pulse_times: Vec<f64>, duration: f64, kind: SequenceKind) -> Result<Self> {
        let seq = Self {
            pulse_times,
            duration,
            kind,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// A sequence with no pulses at all.
    pub fn empty(duration: f64) -> Result<Self> {
        Self::with_kind(Vec::new(), duration, SequenceKind::Uniform)
    }

    /// `n_pulses` pulses at `k·T/(n+1)`, `k = 1..=n`.
    pub fn uniform(n_pulses: usize, duration: f64) -> Result<Self> {
        let intervals = (n_pulses + 1) as f64;
        let times = (1..=n_pulses)
            .map(|k| k as f64 * duration / intervals)
            .collect();
        Self::with_kind(times, duration, SequenceKind::Uniform)
    }

    /// `n_intervals` equal intervals whose final pulse coincides with the end
    /// of the protocol; only the `n_intervals − 1` interior pulses are stored.
    pub fn uniform_with_terminal_pulse(n_intervals: usize, duration: f64) -> Result<Self> {
        if n_intervals == 0 {
            return Err(Error::validation("at least one interval is required"));
        }
        Self::uniform(n_intervals - 1, duration)
    }

    /// Resonant amplification sequence: spacing π/ω, `pulses_per_half` pulses
    /// in each half, no pulse at the midpoint and a mirrored second half.
    pub fn resonant_amplification(omega: f64, pulses_per_half: usize) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::domain(format!(
                "omega must be positive, got {omega}"
            )));
        }
        if pulses_per_half == 0 || pulses_per_half.is_multiple_of(2) {
            return Err(Error::validation(format!(
                "pulses per half must be odd and at least 1, got {pulses_per_half}"
            )));
        }
        let spacing = PI / omega;
        let n = pulses_per_half;
        let intervals_per_half = (n + 1) as f64;
        let duration = 2.0 * intervals_per_half * spacing;
        let first = (1..=n).map(|k| k as f64 * spacing);
        let second = (1..=n)
            .rev()
            .map(|k| (2.0 * intervals_per_half - k as f64) * spacing);
        let times = first.chain(second).collect();
        Self::with_kind(times, duration, SequenceKind::ResonantAmplification)
    }

    pub fn pulse_times(&self) -> &[f64] {
        &self.pulse_times
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.pulse_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulse_times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::validation(format!(
                "sequence duration must be positive, got {}",
                self.duration
            )));
        }
        let mut prev = 0.0;
        for &t in &self.pulse_times {
            if !(t > prev) {
                return Err(Error::validation(format!(
                    "pulse times must be strictly increasing and positive (got {t} after {prev})"
                )));
            }
            prev = t;
        }
        if prev >= self.duration && !self.pulse_times.is_empty() {
            return Err(Error::validation(format!(
                "pulse at {prev} is not before the sequence end {}",
                self.duration
            )));
        }
        if self.kind == SequenceKind::ResonantAmplification {
            self.validate_amplification_shape()?;
        }
        Ok(())
    }

    fn validate_amplification_shape(&self) -> Result<()> {
        let n = self.pulse_times.len();
        if n == 0 || !n.is_multiple_of(2) || (n / 2).is_multiple_of(2) {
            return Err(Error::validation(
                "amplification sequences need an odd number of pulses in each half",
            ));
        }
        let mid = 0.5 * self.duration;
        let half = n / 2;
        if self.pulse_times[half - 1] >= mid || self.pulse_times[half] <= mid {
            return Err(Error::validation("amplification halves are unbalanced"));
        }
        let spacing = self.pulse_times[0];
        let tol = 1e-9 * self.duration;
        for (i, &t) in self.pulse_times[..half].iter().enumerate() {
            if (t - (i + 1) as f64 * spacing).abs() > tol {
                return Err(Error::validation(
                    "amplification pulses are not equally spaced",
                ));
            }
        }
        for (a, b) in self.pulse_times[..half]
            .iter()
            .zip(self.pulse_times[half..].iter().rev())
        {
            if (a + b - self.duration).abs() > tol {
                return Err(Error::validation(
                    "amplification sequence is not mirror symmetric",
                ));
            }
        }
        Ok(())
    }

    /// Boundaries `0, t₁, …, tₙ, T`.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.pulse_times.len() + 2);
        b.push(0.0);
        b.extend_from_slice(&self.pulse_times);
        b.push(self.duration);
        b
    }

    /// Number of pulses at or before `t`.
    pub fn flips_until(&self, t: f64) -> usize {
        self.pulse_times.partition_point(|&p| p <= t)
    }

    /// Modulation value `initial_sign·(−1)^{#pulses ≤ t}` on `[0, T]`.
    pub fn eval_modulation(&self, initial_sign: i8, t: f64) -> Result<i8> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::domain(format!(
                "time {t} outside the sequence span [0, {}]",
                self.duration
            )));
        }
        Ok(self.sign_at(initial_sign, t))
    }

    /// Unchecked modulation lookup; `t` outside `[0, T]` is clamped by the
    /// pulse count.
    pub(crate) fn sign_at(&self, initial_sign: i8, t: f64) -> i8 {
        if self.flips_until(t).is_multiple_of(2) {
            initial_sign
        } else {
            -initial_sign
        }
    }

    pub fn modulation(&self, initial_sign: i8) -> ModulationFunction<'_> {
        ModulationFunction {
            sequence: self,
            initial_sign,
        }
    }

    /// ∫₀ᵗ P(s) ds for `P` starting at +1. `t` is clamped to `[0, T]`.
    pub fn integral_p_until(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        let mut acc = CompensatedSum::new();
        let mut start = 0.0;
        let mut sign = 1.0;
        for &p in &self.pulse_times {
            if p > t {
                break;
            }
            acc.add(sign * p);
            acc.add(-sign * start);
            start = p;
            sign = -sign;
        }
        acc.add(sign * t);
        acc.add(-sign * start);
        acc.value()
    }

    /// ∫₀ᵀ P(t) dt, exact piecewise sum.
    pub fn integral_p(&self) -> f64 {
        self.integral_p_until(self.duration)
    }

    pub fn validate_phase_cancelling(&self) -> CancellationReport {
        let residual = self.integral_p();
        CancellationReport {
            is_cancelling: residual.abs() < 1e-12 * self.duration,
            residual,
        }
    }

    /// Repeats the sequence after an extra pulse at `T`, so the second copy
    /// runs with inverted sign.
    pub fn doubled(&self) -> PulseSequence {
        let t = self.duration;
        let mut times = Vec::with_capacity(2 * self.pulse_times.len() + 1);
        times.extend_from_slice(&self.pulse_times);
        times.push(t);
        times.extend(self.pulse_times.iter().map(|&p| p + t));
        PulseSequence {
            pulse_times: times,
            duration: 2.0 * t,
            kind: SequenceKind::Doubled,
        }
    }

    /// Sequence restricted to `[start, end)`, with times shifted to start at 0.
    pub fn window(&self, start: f64, end: f64) -> Result<PulseSequence> {
        let times = self
            .pulse_times
            .iter()
            .filter(|&&p| p > start && p < end)
            .map(|&p| p - start)
            .collect();
        PulseSequence::new(times, end - start)
    }

    /// Interval lengths between consecutive boundaries.
    pub fn interval_lengths(&self) -> Vec<f64> {
        self.boundaries().windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let seq: PulseSequence = serde_json::from_str(text)?;
        seq.validate()?;
        Ok(seq)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sequence serialises")
    }
}

/// A ±1 function generated by a sequence and a starting sign.
#[derive(Debug, Clone, Copy)]
pub struct ModulationFunction<'a> {
    pub sequence: &'a PulseSequence,
    pub initial_sign: i8,
}

impl ModulationFunction<'_> {
    pub fn eval(&self, t: f64) -> Result<i8> {
        self.sequence.eval_modulation(self.initial_sign, t)
    }

    /// Integral over `[0, t]`.
    pub fn integral_until(&self, t: f64) -> f64 {
        f64::from(self.initial_sign) * self.sequence.integral_p_until(t)
    }
}
