//! Physical constants, particle geometry and the trap-level quantities that
//! follow from a magnetic field gradient.
//!
//! All frequencies are angular (rad/s); conversion to Hz happens only at
//! presentation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{derive_seed, pairwise_sum};
use crate::{Error, Result};

/// Material and fundamental constants. Every field is overridable from a
/// configuration file; defaults are the values used throughout the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Vacuum permeability, T·m/A.
    pub mu0: f64,
    /// Speed of light, m/s.
    pub c: f64,
    /// Gravitational acceleration, m/s².
    pub g: f64,
    /// Elementary charge, C.
    pub e_charge: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Electron gyromagnetic ratio, rad/(s·T).
    pub gamma_e: f64,
    /// ¹³C nuclear gyromagnetic ratio, rad/(s·T).
    pub gamma_n: f64,
    /// NV zero-field splitting, rad/s.
    pub d_zfs: f64,
    /// Axial ground-state electric dipole moment, Hz·m/V.
    pub d_par: f64,
    /// Transverse ground-state electric dipole moment, Hz·m/V.
    pub d_perp: f64,
    /// Volume magnetic susceptibility of diamond (negative: diamagnetic).
    pub chi_v: f64,
    /// Mass density of diamond, kg/m³.
    pub rho_d: f64,
    /// Relative permittivity of diamond.
    pub eps_r: f64,
    /// Newtonian gravitational constant, m³/(kg·s²).
    pub big_g: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.054_571_817e-34,
            mu0: 1.256_637_062_12e-6,
            c: 299_792_458.0,
            g: 9.81,
            e_charge: 1.602_176_634e-19,
            k_b: 1.380_649e-23,
            gamma_e: 2.0 * PI * 28.0e9,
            gamma_n: 2.0 * PI * 10.7084e6,
            d_zfs: 2.0 * PI * 2.8e9,
            d_par: 0.17,
            d_perp: 3.5e-3,
            chi_v: -2.2e-5,
            rho_d: 3510.0,
            eps_r: 5.7,
            big_g: 6.674_30e-11,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi_v < 0.0) {
            return Err(Error::validation("constants.chi_v must be negative"));
        }
        let positive = [
            ("hbar", self.hbar),
            ("mu0", self.mu0),
            ("c", self.c),
            ("g", self.g),
            ("e_charge", self.e_charge),
            ("k_b", self.k_b),
            ("gamma_e", self.gamma_e),
            ("gamma_n", self.gamma_n),
            ("d_zfs", self.d_zfs),
            ("d_par", self.d_par),
            ("d_perp", self.d_perp),
            ("rho_d", self.rho_d),
            ("eps_r", self.eps_r),
            ("big_g", self.big_g),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::validation(format!(
                    "constants.{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Coulomb constant 1/(4πε₀) = µ₀c²/(4π).
    pub fn coulomb_k(&self) -> f64 {
        self.mu0 * self.c * self.c / (4.0 * PI)
    }
}

/// Particle geometry and spin content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiamondSpec {
    /// Radius of the (equivalent) sphere, m.
    pub radius: f64,
    /// Optional explicit volume, m³. When absent the sphere volume is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
    /// NV distance from the center of mass as a fraction of the radius.
    pub nv_offset_fraction: f64,
    /// Separation between the NV charge and its compensating charge, m.
    pub dipole_separation: f64,
    /// Number of electronic surface spins.
    pub n_surface_spins: u64,
    /// Number of nuclear (¹³C) spins.
    pub n_nuclear_spins: u64,
    /// Longitudinal relaxation time of the surface spins, s.
    pub spin_relax_tau: f64,
}

impl Default for DiamondSpec {
    fn default() -> Self {
        Self {
            radius: 230e-9,
            volume: None,
            nv_offset_fraction: 0.8,
            dipole_separation: 1e-7,
            n_surface_spins: 1000,
            n_nuclear_spins: 1000,
            spin_relax_tau: 1000.0,
        }
    }
}

impl DiamondSpec {
    /// A spherical particle of the given radius with default spin content.
    pub fn sphere(radius: f64) -> Self {
        Self {
            radius,
            ..Self::default()
        }
    }

    pub fn volume(&self) -> f64 {
        self.volume
            .unwrap_or_else(|| 4.0 / 3.0 * PI * self.radius.powi(3))
    }

    pub fn mass(&self, constants: &PhysicalConstants) -> f64 {
        constants.rho_d * self.volume()
    }

    /// Moment of inertia of a homogeneous sphere, (2/5)Mr².
    pub fn moment_of_inertia(&self, constants: &PhysicalConstants) -> f64 {
        0.4 * self.mass(constants) * self.radius * self.radius
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::domain(format!(
                "diamond radius must be positive, got {}",
                self.radius
            )));
        }
        if let Some(v) = self.volume {
            if !(v > 0.0) {
                return Err(Error::domain(format!(
                    "diamond volume must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.nv_offset_fraction) {
            return Err(Error::validation(format!(
                "nv_offset_fraction must lie in [0, 1], got {}",
                self.nv_offset_fraction
            )));
        }
        if !(self.dipole_separation >= 0.0) {
            return Err(Error::validation("dipole_separation must be non-negative"));
        }
        if !(self.spin_relax_tau > 0.0) {
            return Err(Error::validation("spin_relax_tau must be positive"));
        }
        Ok(())
    }
}

/// Oscillator quantities at a fixed magnetic field gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrapConfig {
    /// Magnetic field gradient B′, T/m.
    pub b_prime: f64,
    /// Trap frequency, rad/s.
    pub omega: f64,
    /// Spin-motion coupling, rad/s.
    pub lambda: f64,
    /// Ground-state extent sqrt(ħ/(2Mω)), m.
    pub x0: f64,
    /// Distance between the equilibria of the two spin branches, m.
    pub delta_x_eq: f64,
    /// Rotational torque strength entering θ̈ = ±F(t)·q·sin θ, 1/s².
    pub q_rot: f64,
}

/// Offset fraction at which the rotational coupling takes its reference form.
const REFERENCE_NV_OFFSET: f64 = 0.8;

/// Derives the trap quantities for gradient `b_prime`.
pub fn derive_trap(
    constants: &PhysicalConstants,
    diamond: &DiamondSpec,
    b_prime: f64,
) -> Result<TrapConfig> {
    if !(b_prime > 0.0) || !b_prime.is_finite() {
        return Err(Error::domain(format!(
            "magnetic field gradient must be positive, got {b_prime}"
        )));
    }
    diamond.validate()?;
    let c = constants;
    let mass = diamond.mass(c);
    let omega = (-c.chi_v / (c.rho_d * c.mu0)).sqrt() * b_prime;
    let x0 = (c.hbar / (2.0 * mass * omega)).sqrt();
    let lambda = c.gamma_e * x0 * b_prime;
    let delta_x_eq = 4.0 * x0 * lambda / omega;
    let r = diamond.radius;
    let q_rot = 3.0 * c.hbar * c.gamma_e * b_prime / (2.0 * PI * c.rho_d * r.powi(4))
        * (diamond.nv_offset_fraction / REFERENCE_NV_OFFSET);
    Ok(TrapConfig {
        b_prime,
        omega,
        lambda,
        x0,
        delta_x_eq,
        q_rot,
    })
}

impl TrapConfig {
    /// Closed-form equilibrium separation 2ħγₑµ₀/((−χ_V)·V·B′).
    pub fn delta_x_eq_closed_form(
        constants: &PhysicalConstants,
        diamond: &DiamondSpec,
        b_prime: f64,
    ) -> f64 {
        2.0 * constants.hbar * constants.gamma_e * constants.mu0
            / (-constants.chi_v * diamond.volume() * b_prime)
    }

    /// Oscillation period 2π/ω, s.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Branch equilibrium ±2x₀λ/ω for branch sign `s`.
    pub fn branch_equilibrium(&self, sign: f64) -> f64 {
        sign * 2.0 * self.x0 * self.lambda / self.omega
    }
}

/// Gradient at which the trap period equals `period`.
pub fn gradient_for_period(constants: &PhysicalConstants, period: f64) -> Result<f64> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::domain(format!(
            "period must be positive, got {period}"
        )));
    }
    Ok((constants.mu0 * constants.rho_d / -constants.chi_v).sqrt() * 2.0 * PI / period)
}

const MC_CHUNK: usize = 1 << 15;

/// Monte-Carlo estimate of E|X − Y|² for X, Y independent and uniform in a
/// ball of the given radius (m²). Deterministic for a fixed seed whatever the
/// thread count.
pub fn nv_charge_mean_square_distance(radius: f64, n_samples: usize, seed: u64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::domain(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if n_samples < 10_000 {
        return Err(Error::validation(format!(
            "at least 10^4 samples are required, got {n_samples}"
        )));
    }
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let partials: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[chunk as u64]));
            let count = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
            let values: Vec<f64> = (0..count)
                .map(|_| {
                    let a = sample_unit_ball(&mut rng);
                    let b = sample_unit_ball(&mut rng);
                    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>()
                })
                .collect();
            pairwise_sum(&values)
        })
        .collect();
    Ok(pairwise_sum(&partials) / n_samples as f64 * radius * radius)
}

fn sample_unit_ball<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let p = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0 {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn paper_geometry_trap_values() {
        let c = PhysicalConstants::default();
        let trap = derive_trap(&c, &DiamondSpec::sphere(230e-9), 1e3).unwrap();
        // sqrt(2.2e-5 / (3510 · 4π·1e-7)) · 1e3
        assert!(rel(trap.omega, 70.624_087_58) < 1e-8);
        assert!(rel(trap.delta_x_eq, 43e-9) < 0.05);
    }

    #[test]
    fn both_separation_forms_agree() {
        let c = PhysicalConstants::default();
        let d = DiamondSpec::sphere(230e-9);
        let trap = derive_trap(&c, &d, 1e3).unwrap();
        let closed = TrapConfig::delta_x_eq_closed_form(&c, &d, 1e3);
        assert!(rel(trap.delta_x_eq, closed) < 1e-12);
    }

    #[test]
    fn non_positive_inputs_are_domain_errors() {
        let c = PhysicalConstants::default();
        let d = DiamondSpec::sphere(230e-9);
        assert!(matches!(derive_trap(&c, &d, 0.0), Err(Error::Domain(_))));
        assert!(matches!(derive_trap(&c, &d, -5.0), Err(Error::Domain(_))));
        assert!(matches!(
            derive_trap(&c, &DiamondSpec::sphere(0.0), 1e3),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            gradient_for_period(&c, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gradient_for_period_round_trips() {
        let c = PhysicalConstants::default();
        let b = gradient_for_period(&c, 0.5).unwrap();
        assert!(rel(b, 181.86) < 0.03);
        let trap = derive_trap(&c, &DiamondSpec::default(), b).unwrap();
        assert!(rel(trap.omega, 2.0 * PI / 0.5) < 1e-12);
        let b1 = gradient_for_period(&c, 1.0).unwrap();
        assert_eq!(b1, b / 2.0);
    }

    #[test]
    fn gradient_for_period_with_overridden_susceptibility() {
        let c = PhysicalConstants {
            chi_v: -2.1e-5,
            ..PhysicalConstants::default()
        };
        // sqrt(4π·1e-7 · 3510 / 2.1e-5) · 2π / 0.5 = 182.12 T/m
        let b = gradient_for_period(&c, 0.5).unwrap();
        assert!(rel(b, 182.12) < 1e-3);
    }

    #[test]
    fn rotational_coupling_is_linear_in_nv_offset() {
        let c = PhysicalConstants::default();
        let mut d = DiamondSpec::sphere(230e-9);
        let q08 = derive_trap(&c, &d, 1e4).unwrap().q_rot;
        // 3ħγₑB′/(2πρr⁴) at B′ = 1e4
        assert!(rel(q08, 9.0186e3) < 1e-3);
        d.nv_offset_fraction = 0.4;
        let q04 = derive_trap(&c, &d, 1e4).unwrap().q_rot;
        assert!(rel(q04, q08 / 2.0) < 1e-14);
    }

    #[test]
    fn constants_validation() {
        assert!(PhysicalConstants::default().validate().is_ok());
        let bad = PhysicalConstants {
            chi_v: 2.2e-5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let d = DiamondSpec {
            nv_offset_fraction: 1.5,
            ..Default::default()
        };
        assert!(d.validate().is_err());
    }

    #[test]
    fn mean_square_distance_scales_with_radius() {
        let a = nv_charge_mean_square_distance(1.0, 200_000, 3).unwrap();
        let b = nv_charge_mean_square_distance(2.0, 200_000, 3).unwrap();
        assert!(rel(b, 4.0 * a) < 1e-12);
        assert!((a - 1.2).abs() < 0.01);
        assert!(nv_charge_mean_square_distance(1.0, 10, 3).is_err());
    }
}
