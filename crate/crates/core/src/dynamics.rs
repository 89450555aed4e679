//! Translational dynamics of the two superposed spin branches.
//!
//! Two independent routes are provided: the closed-form coherent displacement
//! `α(t) = −iλ∫₀ᵗ F(t′)e^{−iωt′}dt′` (exact, since the Magnus series
//! terminates at second order), and classical branch trajectories integrated
//! with a fixed-step fourth-order scheme.
//!
//! Sign conventions: branch `s = ±1` has its equilibrium at `s·2x₀λ/ω`, so the
//! classical equation of motion is `ẍ = −ω²x + s·F(t)·2λx₀ω`. Separations are
//! reported signed as `2x₀(α + α*)`, which for a free oscillation reproduces
//! `Δx_eq(cos ωt − 1)`. At multiples of half a trap period the lab-frame
//! difference `x₊ − x₋` has the same magnitude.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numeric::{adaptive_simpson, rk4_piecewise, CompensatedSum};
use crate::params::{DiamondSpec, PhysicalConstants, TrapConfig};
use crate::pulses::PulseSequence;
use crate::{Error, Result};

/// NV spin state label, `|+⟩` or `|−⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinBranch {
    Plus,
    Minus,
}

impl SpinBranch {
    pub fn sign(self) -> f64 {
        match self {
            SpinBranch::Plus => 1.0,
            SpinBranch::Minus => -1.0,
        }
    }

    pub fn label(self) -> i8 {
        match self {
            SpinBranch::Plus => 1,
            SpinBranch::Minus => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            SpinBranch::Plus => SpinBranch::Minus,
            SpinBranch::Minus => SpinBranch::Plus,
        }
    }
}

/// One sample of a classical path: time, coordinate and its rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub value: f64,
    pub rate: f64,
}

/// Time-sampled classical path of one branch. The grid is uniform inside
/// every inter-pulse interval, with the nominal step `dt` shortened so that
/// pulse times are hit exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub branch: SpinBranch,
    pub dt: f64,
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn last(&self) -> TrajectorySample {
        *self
            .samples
            .last()
            .expect("trajectory has at least one sample")
    }

    /// Value at `t`, linearly interpolated between samples.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.samples.partition_point(|s| s.t < t);
        if idx == 0 {
            return self.samples[0].value;
        }
        if idx >= self.samples.len() {
            return self.last().value;
        }
        let (a, b) = (self.samples[idx - 1], self.samples[idx]);
        if b.t == a.t {
            return b.value;
        }
        a.value + (b.value - a.value) * (t - a.t) / (b.t - a.t)
    }
}

/// Coherent-state displacement accumulated up to time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementAlpha {
    pub alpha: Complex64,
    pub t: f64,
}

/// Branch separation without any pulses, `Δx_eq(cos ωt − 1)`.
pub fn separation_no_sequence(trap: &TrapConfig, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    Ok(trap.delta_x_eq * ((trap.omega * t).cos() - 1.0))
}

/// Closed-form `α(t)`: the integral is summed interval by interval, the last
/// interval possibly partial.
pub fn alpha_integral(seq: &PulseSequence, trap: &TrapConfig, t: f64) -> Result<DisplacementAlpha> {
    if !(0.0..=seq.duration()).contains(&t) {
        return Err(Error::domain(format!(
            "time {t} outside the sequence span [0, {}]",
            seq.duration()
        )));
    }
    let omega = trap.omega;
    let phasor = |s: f64| Complex64::from_polar(1.0, -omega * s);
    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    let mut start = 0.0;
    let mut sign = 1.0;
    let mut push = |a: f64, b: f64, sign: f64| {
        let term = (phasor(b) - phasor(a)) * sign;
        re.add(term.re);
        im.add(term.im);
    };
    for &p in seq.pulse_times() {
        if p >= t {
            break;
        }
        push(start, p, sign);
        start = p;
        sign = -sign;
    }
    push(start, t, sign);
    // −iλ · (e^{−iωb} − e^{−iωa}) / (−iω) = (λ/ω)(e^{−iωb} − e^{−iωa})
    let alpha = Complex64::new(re.value(), im.value()) * (trap.lambda / omega);
    Ok(DisplacementAlpha { alpha, t })
}

/// Signed branch separation `2x₀(α + α*)` at time `t` under `seq`.
pub fn pulsed_separation(seq: &PulseSequence, trap: &TrapConfig, t: f64) -> Result<f64> {
    let a = alpha_integral(seq, trap, t)?;
    Ok(4.0 * trap.x0 * a.alpha.re)
}

/// Magnitude of the linear separation growth rate under resonant driving,
/// `(4ħγₑ/(πV))·sqrt(µ₀/(−χ_V ρ_D))`. Independent of the gradient.
pub fn max_separation_rate(constants: &PhysicalConstants, diamond: &DiamondSpec) -> Result<f64> {
    diamond.validate()?;
    let c = constants;
    let rate =
        4.0 * c.hbar * c.gamma_e / (PI * diamond.volume()) * (c.mu0 / (-c.chi_v * c.rho_d)).sqrt();
    debug_assert!({
        // (8/π)·x₀λ from the resonance value of α, at an arbitrary gradient.
        let trap = crate::params::derive_trap(c, diamond, 1e3).expect("valid trap");
        let via_alpha = 8.0 / PI * trap.x0 * trap.lambda;
        ((via_alpha - rate) / rate).abs() < 1e-10
    });
    Ok(rate)
}

/// Integrates the classical path of one branch under `seq`.
///
/// `dt` is the nominal step and must not exceed a two-hundredth of the trap
/// period; it is shortened within each interval so pulses are stepped onto
/// exactly.
pub fn classical_trajectory(
    trap: &TrapConfig,
    seq: &PulseSequence,
    branch: SpinBranch,
    x_init: f64,
    v_init: f64,
    dt: f64,
) -> Result<Trajectory> {
    let max_dt = trap.period() / 200.0;
    if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
        return Err(Error::validation(format!(
            "step {dt} s must be positive and at most period/200 = {max_dt} s"
        )));
    }
    let omega2 = trap.omega * trap.omega;
    let drive = branch.sign() * 2.0 * trap.lambda * trap.x0 * trap.omega;
    let boundaries = seq.boundaries();
    let samples = rk4_piecewise(&boundaries, dt, [x_init, v_init], |interval, y| {
        let f = if interval % 2 == 0 { 1.0 } else { -1.0 };
        [y[1], -omega2 * y[0] + f * drive]
    });
    Ok(Trajectory {
        branch,
        dt,
        samples: samples
            .into_iter()
            .map(|(t, y)| TrajectorySample {
                t,
                value: y[0],
                rate: y[1],
            })
            .collect(),
    })
}

/// Result of [`extended_body_force_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtendedBodyForce {
    /// `(χ_V B′²/µ₀)∫x f(x − Δx)dx`, N.
    pub force: f64,
    /// `(χ_V B′² V/µ₀)·Δx`, N.
    pub point_model_force: f64,
    /// `∫f dx`, m³.
    pub volume: f64,
}

/// Diamagnetic force on an extended body described by its cross-section area
/// profile `f(x)` supported on `support`, displaced by `delta_x` from
/// equilibrium, compared with the point-particle model.
pub fn extended_body_force_check<F: Fn(f64) -> f64>(
    profile: F,
    support: (f64, f64),
    delta_x: f64,
    constants: &PhysicalConstants,
    trap: &TrapConfig,
) -> Result<ExtendedBodyForce> {
    let (a, b) = support;
    if !(b > a) {
        return Err(Error::validation(
            "profile support must be a non-empty interval",
        ));
    }
    const PROBES: usize = 2000;
    for k in 0..=PROBES {
        let x = a + (b - a) * k as f64 / PROBES as f64;
        let v = profile(x);
        if v < 0.0 || !v.is_finite() {
            return Err(Error::validation(format!(
                "area profile must be non-negative and finite, got {v} at x = {x}"
            )));
        }
    }
    let width = b - a;
    let volume = adaptive_simpson(
        &profile,
        a,
        b,
        1e-15 * width * profile((a + b) / 2.0).abs().max(1e-300),
    );
    if !(volume > 0.0) {
        return Err(Error::validation("area profile encloses no volume"));
    }
    let tol = 1e-14 * volume * width;
    let first_moment = adaptive_simpson(&|x: f64| x * profile(x), a, b, tol);
    if first_moment.abs() > 1e-9 * volume * width {
        return Err(Error::validation(format!(
            "profile is not centered: ∫x f(x)dx = {first_moment:e}"
        )));
    }
    let shifted = adaptive_simpson(
        &|x: f64| x * profile(x - delta_x),
        a + delta_x,
        b + delta_x,
        tol,
    );
    let coupling = constants.chi_v * trap.b_prime * trap.b_prime / constants.mu0;
    Ok(ExtendedBodyForce {
        force: coupling * shifted,
        point_model_force: coupling * volume * delta_x,
        volume,
    })
}
