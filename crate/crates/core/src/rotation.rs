//! Rotation of the particle about its centre of mass.
//!
//! The NV axis tilt θ obeys `θ̈ = s·F(t)·q·sin θ` for branch `s`. Linearised,
//! each inter-pulse interval is propagated by `exp(A±·Δt)` with
//! `A± = [[0, 1], [±q, 0]]`.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SpinBranch, Trajectory, TrajectorySample};
use crate::numeric::rk4_piecewise;
use crate::params::{DiamondSpec, PhysicalConstants, TrapConfig};
use crate::pulses::PulseSequence;
use crate::{Error, Result};

/// Angle and angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl RotState {
    pub fn at_rest(theta: f64) -> Self {
        Self {
            theta,
            theta_dot: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || !self.theta_dot.is_finite() {
            return Err(Error::domain("rotation state must be finite"));
        }
        Ok(())
    }
}

/// Largest admissible step for [`simulate_rotation`].
pub fn max_rotation_step(q: f64, seq: &PulseSequence) -> f64 {
    let shortest = seq
        .interval_lengths()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    (2.0 * PI / q.sqrt()).min(shortest) / 200.0
}

/// Integrates the nonlinear angle equation for one branch. Samples carry θ
/// in `value` and θ̇ in `rate`.
pub fn simulate_rotation(
    q: f64,
    seq: &PulseSequence,
    branch: SpinBranch,
    init: RotState,
    dt: f64,
) -> Result<Trajectory> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::domain(format!(
            "torque strength must be positive, got {q}"
        )));
    }
    init.validate()?;
    let max_dt = max_rotation_step(q, seq);
    if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
        return Err(Error::validation(format!(
            "step {dt} s must be positive and at most {max_dt} s"
        )));
    }
    let s = branch.sign();
    let samples = rk4_piecewise(
        &seq.boundaries(),
        dt,
        [init.theta, init.theta_dot],
        |k, y| {
            let f = if k % 2 == 0 { 1.0 } else { -1.0 };
            [y[1], s * f * q * y[0].sin()]
        },
    );
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

/// Transfer matrix acting on `(θ, θ̇)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPropagator {
    pub matrix: Matrix2<f64>,
}

impl LinearPropagator {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix2::identity(),
        }
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// `self` applied after `earlier`.
    pub fn then_after(&self, earlier: &LinearPropagator) -> Self {
        Self {
            matrix: self.matrix * earlier.matrix,
        }
    }

    pub fn apply(&self, state: RotState) -> RotState {
        let m = &self.matrix;
        RotState {
            theta: m[(0, 0)] * state.theta + m[(0, 1)] * state.theta_dot,
            theta_dot: m[(1, 0)] * state.theta + m[(1, 1)] * state.theta_dot,
        }
    }
}

/// `exp(A±·dt)` in closed form; `sign > 0` is the unstable (hyperbolic) case.
pub fn linear_propagator(q: f64, sign: f64, dt: f64) -> Result<LinearPropagator> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::domain(format!(
            "torque strength must be positive, got {q}"
        )));
    }
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!(
            "interval must be non-negative, got {dt}"
        )));
    }
    let k = q.sqrt();
    let x = k * dt;
    let matrix = if sign > 0.0 {
        let (c, s) = (x.cosh(), x.sinh());
        Matrix2::new(c, s / k, k * s, c)
    } else {
        let (s, c) = x.sin_cos();
        Matrix2::new(c, s / k, -k * s, c)
    };
    Ok(LinearPropagator { matrix })
}

/// Ordered product over the intervals in `[start, end]` for a branch whose
/// first interval has torque sign `first_sign`.
fn interval_product(
    q: f64,
    seq: &PulseSequence,
    first_sign: f64,
    start: f64,
    end: f64,
) -> Result<LinearPropagator> {
    let mut acc = LinearPropagator::identity();
    let mut sign = first_sign;
    for w in seq.boundaries().windows(2) {
        let (a, b) = (w[0].max(start), w[1].min(end));
        if b > a {
            acc = linear_propagator(q, sign, b - a)?.then_after(&acc);
        }
        sign = -sign;
    }
    Ok(acc)
}

/// Outcome of [`refocus_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefocusReport {
    /// Diagonal of the full-sequence propagator of branch `+`, `X₂⁺X₁⁺`.
    pub diag_plus: [f64; 2],
    /// Diagonal of the full-sequence propagator of branch `−`.
    pub diag_minus: [f64; 2],
    /// Diagonal of the half-swapped product `X₁⁺X₂⁺`.
    pub diag_swapped: [f64; 2],
    pub pulses_per_half: usize,
    /// Branch `−` halves equal the swapped branch `+` halves.
    pub hypotheses_hold: bool,
    /// `X₂⁺ = σx·(X₁⁺)ᵀ·σx`.
    pub antidiagonal_identity: bool,
    pub diagonals_match: bool,
    /// Diagonals match and the hypotheses hold.
    pub equal: bool,
    pub diagnostic: Option<String>,
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-10 * scale
}

fn matrices_close(a: &Matrix2<f64>, b: &Matrix2<f64>) -> bool {
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    a.iter().zip(b.iter()).all(|(x, y)| close(*x, *y, scale))
}

/// Checks that both branches end with the same angle from rest under the
/// linearised dynamics, by comparing propagator diagonals.
pub fn refocus_check(q: f64, seq: &PulseSequence) -> Result<RefocusReport> {
    let t = seq.duration();
    let mid = t / 2.0;
    for (&a, &b) in seq.pulse_times().iter().zip(seq.pulse_times().iter().rev()) {
        if !close(a, t - b, t) {
            return Err(Error::validation(
                "sequence is not mirror-symmetric about its midpoint",
            ));
        }
    }
    if seq.pulse_times().iter().any(|&p| close(p, mid, t)) {
        return Err(Error::validation("sequence must not pulse at its midpoint"));
    }
    let pulses_per_half = seq.flips_until(mid);
    let x1p = interval_product(q, seq, 1.0, 0.0, mid)?;
    let x2p = interval_product(q, seq, 1.0, mid, t)?;
    let x1m = interval_product(q, seq, -1.0, 0.0, mid)?;
    let x2m = interval_product(q, seq, -1.0, mid, t)?;
    let plus = x2p.matrix * x1p.matrix;
    let minus = x2m.matrix * x1m.matrix;
    let swapped = x1p.matrix * x2p.matrix;
    let sigma_x = Matrix2::new(0.0, 1.0, 1.0, 0.0);
    let antidiagonal_identity =
        matrices_close(&x2p.matrix, &(sigma_x * x1p.matrix.transpose() * sigma_x));
    let hypotheses_hold =
        matrices_close(&x1m.matrix, &x2p.matrix) && matrices_close(&x2m.matrix, &x1p.matrix);
    let scale = plus.amax().max(minus.amax());
    let diagonals_match =
        close(plus[(0, 0)], minus[(0, 0)], scale) && close(plus[(1, 1)], minus[(1, 1)], scale);
    let diagnostic = if pulses_per_half.is_multiple_of(2) {
        Some(format!(
            "{pulses_per_half} pulses per half: each half needs an odd count for the branches to exchange halves"
        ))
    } else if !hypotheses_hold {
        Some("branch halves do not exchange; interval layout breaks the theorem".to_string())
    } else {
        None
    };
    let diag = |m: &Matrix2<f64>| [m[(0, 0)], m[(1, 1)]];
    Ok(RefocusReport {
        diag_plus: diag(&plus),
        diag_minus: diag(&minus),
        diag_swapped: diag(&swapped),
        pulses_per_half,
        hypotheses_hold,
        antidiagonal_identity,
        diagonals_match,
        equal: diagonals_match && hypotheses_hold,
        diagnostic,
    })
}

/// Linearised final state of one branch.
pub fn linear_final_state(
    q: f64,
    seq: &PulseSequence,
    branch: SpinBranch,
    init: RotState,
) -> Result<RotState> {
    let x = interval_product(q, seq, branch.sign(), 0.0, seq.duration())?;
    Ok(x.apply(init))
}

/// Relative rotation `3e·r_d·ΔE·t²/(40πρr⁵)` from a stray field difference,
/// taking the dipole at π/4 to the field.
pub fn dipole_relative_rotation(
    constants: &PhysicalConstants,
    diamond: &DiamondSpec,
    delta_e: f64,
    t: f64,
) -> f64 {
    dipole_rotation_coefficient(constants, diamond) * delta_e * t * t
}

/// `3e·r_d/(40πρr⁵)`, rad·m/(V·s²).
pub fn dipole_rotation_coefficient(constants: &PhysicalConstants, diamond: &DiamondSpec) -> f64 {
    3.0 * constants.e_charge * diamond.dipole_separation
        / (40.0 * PI * constants.rho_d * diamond.radius.powi(5))
}

/// Applied electric field used for rotational trapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapFieldConfig {
    /// Applied field amplitude, V/m.
    pub e_applied: f64,
    /// Field oscillation frequency, rad/s.
    pub e_osc_freq: f64,
    /// Electric susceptibility anisotropy χx − χy.
    pub chi_anisotropy: f64,
    /// Stray field amplitude, V/m.
    pub e_stray: f64,
}

impl Default for TrapFieldConfig {
    fn default() -> Self {
        Self {
            e_applied: 1e6,
            e_osc_freq: 2.0 * PI * 1e7,
            chi_anisotropy: 0.3,
            e_stray: 0.0,
        }
    }
}

impl TrapFieldConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("e_applied", self.e_applied),
            ("e_osc_freq", self.e_osc_freq),
            ("chi_anisotropy", self.chi_anisotropy),
            ("e_stray", self.e_stray),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Torques from the applied field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrappingTorques {
    /// Restoring torque from the susceptibility anisotropy, N·m.
    pub tau_induced: f64,
    /// Worst-case torque on the intrinsic dipole, N·m.
    pub tau_intrinsic: f64,
    /// Thermal angular spread at the requested temperature, rad.
    pub theta_max_thermal: f64,
}

/// `V·Δχ/(2µ₀c²)`: the induced torque is this times `E²·sinθ·cosθ`.
pub fn induced_torque_coefficient(
    constants: &PhysicalConstants,
    diamond: &DiamondSpec,
    chi_anisotropy: f64,
) -> f64 {
    let c = constants;
    diamond.volume() * chi_anisotropy / (2.0 * c.mu0 * c.c * c.c)
}

/// `sqrt(2µ₀k_B/(V·Δχ))·c`: the thermal angle is this times `√T/E`.
pub fn thermal_angle_coefficient(
    constants: &PhysicalConstants,
    diamond: &DiamondSpec,
    chi_anisotropy: f64,
) -> f64 {
    let c = constants;
    (2.0 * c.mu0 * c.k_b / (diamond.volume() * chi_anisotropy)).sqrt() * c.c
}

pub fn trapping_torques(
    constants: &PhysicalConstants,
    cfg: &TrapFieldConfig,
    diamond: &DiamondSpec,
    theta: f64,
    temperature: f64,
) -> Result<TrappingTorques> {
    cfg.validate()?;
    if !(temperature >= 0.0) {
        return Err(Error::domain(format!(
            "temperature must be non-negative, got {temperature}"
        )));
    }
    let e = cfg.e_applied;
    let tau_induced = induced_torque_coefficient(constants, diamond, cfg.chi_anisotropy)
        * e
        * e
        * theta.sin()
        * theta.cos();
    let tau_intrinsic = constants.e_charge * diamond.dipole_separation * e;
    let theta_max_thermal = if e > 0.0 {
        thermal_angle_coefficient(constants, diamond, cfg.chi_anisotropy) * temperature.sqrt() / e
    } else {
        f64::INFINITY
    };
    Ok(TrappingTorques {
        tau_induced,
        tau_intrinsic,
        theta_max_thermal,
    })
}

/// Off-resonant Stark coupling of the NV to an oscillating field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarkShift {
    /// `d⊥·E/2`, Hz.
    pub rabi: f64,
    /// `Ω_E²/α`, Hz.
    pub eff_shift: f64,
    /// `α > 10·2πΩ_E`.
    pub rwa_valid: bool,
}

impl StarkShift {
    /// Accumulated phase `2π·eff_shift·t`, rad.
    pub fn phase_over(&self, t: f64) -> f64 {
        2.0 * PI * self.eff_shift * t
    }
}

/// Stark shift for field amplitude `e` (V/m) oscillating at `alpha` (rad/s).
pub fn stark_attenuation(constants: &PhysicalConstants, e: f64, alpha: f64) -> Result<StarkShift> {
    if !(e >= 0.0) || !(alpha > 0.0) {
        return Err(Error::domain(
            "field must be non-negative and frequency positive",
        ));
    }
    let rabi = constants.d_perp * e / 2.0;
    Ok(StarkShift {
        rabi,
        eff_shift: rabi * rabi / alpha,
        rwa_valid: alpha > 10.0 * 2.0 * PI * rabi,
    })
}

/// Largest relative rotation that keeps the surface displacement below the
/// ground-state extent, `x₀/r`.
pub fn rotation_overlap_bound(diamond: &DiamondSpec, trap: &TrapConfig) -> f64 {
    trap.x0 / diamond.radius
}
