//! Closed-form estimates of perturbing forces, phases and rotations, hard
//! limits on the usable gradient, and a ranked report comparing each
//! estimate with the level that would spoil interference.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::params::{derive_trap, DiamondSpec, PhysicalConstants};
use crate::rotation::{dipole_relative_rotation, rotation_overlap_bound, stark_attenuation};
use crate::{Error, Result};

/// `M·g·sin β` for a trap axis tilted by `beta` from horizontal, N.
pub fn misalignment_force(constants: &PhysicalConstants, diamond: &DiamondSpec, beta: f64) -> f64 {
    diamond.mass(constants) * constants.g * beta.sin()
}

/// Thermal spin-½ polarisation `½·tanh(ħγB/(2k_BT))`.
pub fn thermal_polarisation(
    constants: &PhysicalConstants,
    gamma: f64,
    temperature: f64,
    field: f64,
) -> f64 {
    0.5 * (constants.hbar * gamma * field / (2.0 * constants.k_b * temperature)).tanh()
}

/// Net magnetic moment of the nuclear and electronic spin baths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MagneticMoment {
    /// Mean moment, J/T.
    pub mu_d: f64,
    /// Shot-to-shot spread, J/T.
    pub delta_mu_d: f64,
    pub sz_nuclear: f64,
    pub sz_electron: f64,
}

impl MagneticMoment {
    /// Force in a gradient `b_prime`, N.
    pub fn force_at(&self, b_prime: f64) -> f64 {
        self.mu_d * b_prime
    }
}

pub fn magnetic_moment_estimate(
    constants: &PhysicalConstants,
    n_nuclear: f64,
    n_electron: f64,
    temperature: f64,
    field: f64,
) -> Result<MagneticMoment> {
    if !(temperature > 0.0) {
        return Err(Error::domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if !(n_nuclear >= 0.0) || !(n_electron >= 0.0) {
        return Err(Error::domain("spin counts must be non-negative"));
    }
    let c = constants;
    let sz_n = thermal_polarisation(c, c.gamma_n, temperature, field);
    let sz_e = thermal_polarisation(c, c.gamma_e, temperature, field);
    Ok(MagneticMoment {
        mu_d: c.hbar * (n_nuclear * c.gamma_n * sz_n + n_electron * c.gamma_e * sz_e),
        delta_mu_d: c.hbar
            * (n_nuclear.sqrt() * c.gamma_n * sz_n + n_electron.sqrt() * c.gamma_e * sz_e),
        sz_nuclear: sz_n,
        sz_electron: sz_e,
    })
}

/// Elementary charge times separation, C·m.
pub fn dipole_moment(constants: &PhysicalConstants, separation: f64) -> f64 {
    constants.e_charge * separation
}

/// `d·∇E`, N.
pub fn electric_dipole_force(dipole: f64, field_gradient: f64) -> f64 {
    dipole * field_gradient
}

/// Field gradient `2k_e·e/r³` of an elementary charge at distance `r`, V/m².
pub fn point_charge_gradient(constants: &PhysicalConstants, r: f64) -> f64 {
    2.0 * constants.coulomb_k() * constants.e_charge / r.powi(3)
}

/// Limits from requiring the branch wave packets to overlap at recombination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapBounds {
    /// Largest branch force difference acting for `force_time`, N.
    pub delta_f_max: f64,
    pub force_time: f64,
    pub total_time: f64,
    pub mass: f64,
}

impl OverlapBounds {
    /// Phase `g·ΔF·t²·T/(2ħ)` from a force difference acting for the force time.
    pub fn grav_phase(&self, constants: &PhysicalConstants, delta_f: f64) -> f64 {
        constants.g * delta_f * self.force_time * self.force_time * self.total_time
            / (2.0 * constants.hbar)
    }

    /// Static displacement `ΔF/(Mω²)` along a trapped axis.
    pub fn trapped_axis_displacement(&self, delta_f: f64, omega: f64) -> f64 {
        delta_f / (self.mass * omega * omega)
    }
}

pub fn overlap_bounds(
    constants: &PhysicalConstants,
    diamond: &DiamondSpec,
    force_time: f64,
    x_min: f64,
    total_time: f64,
) -> Result<OverlapBounds> {
    if !(force_time > 0.0) || !(total_time > 0.0) {
        return Err(Error::domain("times must be positive"));
    }
    if !(x_min >= 0.0) {
        return Err(Error::domain(format!(
            "x_min must be non-negative, got {x_min}"
        )));
    }
    let mass = diamond.mass(constants);
    Ok(OverlapBounds {
        delta_f_max: 2.0 * x_min * mass / (force_time * force_time),
        force_time,
        total_time,
        mass,
    })
}

/// Outcome of [`casimir_limit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CasimirResult {
    /// `161ħcR₁³/(4π)·((εr−1)/(εr+2))²`, J·m⁷ per m³ of tip.
    pub c_prefactor: f64,
    /// Tolerated potential gradient `2ħΔφ/Δr`, N.
    pub dv_dr: f64,
    /// Optimal tip radius, equal to the optimal tip distance, m.
    pub r_opt: f64,
    /// Gradient bound at the optimum, T/m.
    pub b_grad_max: f64,
    /// Same bound with the potential gradient also divided by the drop time.
    pub b_grad_max_with_drop_time: f64,
}

const CASIMIR_GEOMETRY: f64 = 16.0;

fn casimir_optimum(c_prefactor: f64, mu0_m: f64, dv_dr: f64) -> (f64, f64) {
    let r_opt = 1.5_f64.powf(1.6) * (c_prefactor / dv_dr).powf(0.2);
    let b = mu0_m / (CASIMIR_GEOMETRY * 1.5_f64.powf(1.6) * (c_prefactor / dv_dr).powf(0.2));
    (r_opt, b)
}

/// Largest gradient a spherical magnetic tip can supply before the
/// Casimir-Polder force gradient exceeds the phase budget.
pub fn casimir_limit(
    constants: &PhysicalConstants,
    r1: f64,
    eps_r: f64,
    mu0_m: f64,
    delta_r: f64,
    drop_time: f64,
    phase_budget: f64,
) -> Result<CasimirResult> {
    for (name, v) in [
        ("particle radius", r1),
        ("relative permittivity", eps_r),
        ("tip flux", mu0_m),
        ("position uncertainty", delta_r),
        ("drop time", drop_time),
        ("phase budget", phase_budget),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    if phase_budget > 1.0 {
        return Err(Error::domain(format!(
            "phase budget must not exceed 1 rad, got {phase_budget}"
        )));
    }
    let c = constants;
    let clausius = (eps_r - 1.0) / (eps_r + 2.0);
    let c_prefactor = 161.0 * c.hbar * c.c * r1.powi(3) / (4.0 * PI) * clausius * clausius;
    let dv_dr = 2.0 * c.hbar * phase_budget / delta_r;
    let (r_opt, b_grad_max) = casimir_optimum(c_prefactor, mu0_m, dv_dr);
    let (_, b_grad_max_with_drop_time) = casimir_optimum(c_prefactor, mu0_m, dv_dr / drop_time);
    Ok(CasimirResult {
        c_prefactor,
        dv_dr,
        r_opt,
        b_grad_max,
        b_grad_max_with_drop_time,
    })
}

/// Two-particle geometry for the entanglement estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntanglementSetup {
    /// Particle mass, kg.
    pub mass: f64,
    pub d_ll: f64,
    pub d_rl: f64,
    pub d_lr: f64,
    /// Magnetic field at the particles, T.
    pub field: f64,
    /// Particle volume, m³.
    pub volume: f64,
    /// Interaction time, s.
    pub t_exp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntanglementPhases {
    /// `G·m²·t/(ħ·d_RL)`, rad.
    pub phi_grav: f64,
    /// `µ₀µ_ind²·t/(4π·d_RL³·ħ)`, rad.
    pub phi_dip: f64,
    /// Induced moment `V·|χ_V|·B/(2µ₀)`, J/T.
    pub mu_ind: f64,
    /// `phi_dip/phi_grav`.
    pub ratio: f64,
}

/// Scaling estimates of the gravitational and induced-dipole phases between
/// two particles; only `d_rl` enters, the other distances are validated.
pub fn entanglement_phases(
    constants: &PhysicalConstants,
    setup: &EntanglementSetup,
) -> Result<EntanglementPhases> {
    let s = setup;
    for (name, v) in [
        ("d_ll", s.d_ll),
        ("d_rl", s.d_rl),
        ("d_lr", s.d_lr),
        ("mass", s.mass),
        ("volume", s.volume),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(s.t_exp >= 0.0) {
        return Err(Error::domain(format!(
            "t_exp must be non-negative, got {}",
            s.t_exp
        )));
    }
    let c = constants;
    let phi_grav = c.big_g * s.mass * s.mass * s.t_exp / (c.hbar * s.d_rl);
    let mu_ind = s.volume * c.chi_v.abs() * s.field / (2.0 * c.mu0);
    let phi_dip = c.mu0 * mu_ind * mu_ind * s.t_exp / (4.0 * PI * s.d_rl.powi(3) * c.hbar);
    Ok(EntanglementPhases {
        phi_grav,
        phi_dip,
        mu_ind,
        ratio: if phi_grav > 0.0 {
            phi_dip / phi_grav
        } else {
            f64::NAN
        },
    })
}

/// Physical dimension of a budget entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantityKind {
    Force,
    Phase,
    Displacement,
    Rotation,
    Gradient,
}

impl QuantityKind {
    pub fn unit(self) -> &'static str {
        match self {
            QuantityKind::Force => "N",
            QuantityKind::Phase => "rad",
            QuantityKind::Displacement => "m",
            QuantityKind::Rotation => "rad",
            QuantityKind::Gradient => "T/m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetEntry {
    pub source: String,
    pub kind: QuantityKind,
    pub value: f64,
    pub threshold: Option<f64>,
    /// `|value|/threshold`, zero without a threshold.
    pub severity: f64,
    pub pass: bool,
    pub notes: String,
}

impl BudgetEntry {
    fn new(
        source: &str,
        kind: QuantityKind,
        value: f64,
        threshold: Option<f64>,
        notes: &str,
    ) -> Self {
        let (severity, pass) = match threshold {
            Some(t) => (value.abs() / t, value.abs() < t),
            None => (0.0, true),
        };
        Self {
            source: source.to_string(),
            kind,
            value,
            threshold,
            severity,
            pass,
            notes: notes.to_string(),
        }
    }
}

/// Inputs of [`build_report`]. Every key is required; they are optional
/// here only so that all missing keys can be reported at once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetScenario {
    /// Particle radius, m.
    pub radius: Option<f64>,
    /// Magnetic field gradient, T/m.
    pub gradient: Option<f64>,
    /// Protocol duration, s.
    pub duration: Option<f64>,
    /// Tilt of the trap axis from horizontal, rad.
    pub misalignment_angle: Option<f64>,
    pub n_nuclear_spins: Option<f64>,
    pub n_surface_spins: Option<f64>,
    /// Bath temperature, K.
    pub temperature: Option<f64>,
    /// Bias field polarising the spin baths, T.
    pub bias_field: Option<f64>,
    /// Intrinsic charge separation of the particle dipole, m.
    pub dipole_separation: Option<f64>,
    /// Electric field gradient at the particle, V/m².
    pub electric_field_gradient: Option<f64>,
    /// Duration of the branch force difference, s.
    pub force_time: Option<f64>,
    /// Tolerated residual separation at recombination, m.
    pub x_min: Option<f64>,
    /// Branch force difference, N.
    pub force_difference: Option<f64>,
    /// Stray field difference across the particle, V/m.
    pub stray_field_difference: Option<f64>,
    /// Amplitude of the oscillating trapping field, V/m.
    pub trapping_field: Option<f64>,
    /// Angular frequency of the trapping field, rad/s.
    pub trapping_frequency: Option<f64>,
    /// Trapped flux of the magnetic tip, T.
    pub tip_flux: Option<f64>,
    /// Position uncertainty relative to the tip, m.
    pub position_uncertainty: Option<f64>,
}

/// Resolved, complete scenario.
struct Resolved {
    radius: f64,
    gradient: f64,
    duration: f64,
    misalignment_angle: f64,
    n_nuclear_spins: f64,
    n_surface_spins: f64,
    temperature: f64,
    bias_field: f64,
    dipole_separation: f64,
    electric_field_gradient: f64,
    force_time: f64,
    x_min: f64,
    force_difference: f64,
    stray_field_difference: f64,
    trapping_field: f64,
    trapping_frequency: f64,
    tip_flux: f64,
    position_uncertainty: f64,
}

impl BudgetScenario {
    /// The levitated-particle scenario at 230 nm radius, 10³ T/m and 0.5 s.
    pub fn reference() -> Self {
        Self {
            radius: Some(230e-9),
            gradient: Some(1e3),
            duration: Some(0.5),
            misalignment_angle: Some(1e-9),
            n_nuclear_spins: Some(1e3),
            n_surface_spins: Some(1e3),
            temperature: Some(1.0),
            bias_field: Some(1e-2),
            dipole_separation: Some(200e-9),
            electric_field_gradient: Some(30.0),
            force_time: Some(1e-3),
            x_min: Some(1e-11),
            force_difference: Some(1e-26),
            stray_field_difference: Some(1e-2),
            trapping_field: Some(1e5),
            trapping_frequency: Some(2.0 * PI * 1e7),
            tip_flux: Some(1.0),
            position_uncertainty: Some(1e-10),
        }
    }

    fn resolve(&self) -> Result<Resolved> {
        let mut missing = Vec::new();
        let mut get = |name: &'static str, v: Option<f64>| {
            if v.is_none() {
                missing.push(name);
            }
            v.unwrap_or(f64::NAN)
        };
        let r = Resolved {
            radius: get("radius", self.radius),
            gradient: get("gradient", self.gradient),
            duration: get("duration", self.duration),
            misalignment_angle: get("misalignment_angle", self.misalignment_angle),
            n_nuclear_spins: get("n_nuclear_spins", self.n_nuclear_spins),
            n_surface_spins: get("n_surface_spins", self.n_surface_spins),
            temperature: get("temperature", self.temperature),
            bias_field: get("bias_field", self.bias_field),
            dipole_separation: get("dipole_separation", self.dipole_separation),
            electric_field_gradient: get("electric_field_gradient", self.electric_field_gradient),
            force_time: get("force_time", self.force_time),
            x_min: get("x_min", self.x_min),
            force_difference: get("force_difference", self.force_difference),
            stray_field_difference: get("stray_field_difference", self.stray_field_difference),
            trapping_field: get("trapping_field", self.trapping_field),
            trapping_frequency: get("trapping_frequency", self.trapping_frequency),
            tip_flux: get("tip_flux", self.tip_flux),
            position_uncertainty: get("position_uncertainty", self.position_uncertainty),
        };
        if !missing.is_empty() {
            return Err(Error::validation(format!(
                "missing scenario keys: {}",
                missing.join(", ")
            )));
        }
        Ok(r)
    }
}

/// Entries sorted by descending severity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub entries: Vec<BudgetEntry>,
    /// Constant force producing 1 rad of relative phase over the protocol, N.
    pub force_threshold: f64,
    pub delta_f_max: f64,
    pub casimir: CasimirResult,
    pub notes: Vec<String>,
}

impl BudgetReport {
    pub fn entry(&self, source: &str) -> Option<&BudgetEntry> {
        self.entries.iter().find(|e| e.source == source)
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn to_markdown(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
        let mut out = String::from(
            "| source | value | threshold | unit | severity | pass |\n|---|---|---|---|---|---|\n",
        );
        for e in &self.entries {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {:.3e} | {} |\n",
                e.source,
                fmt(Some(e.value)),
                fmt(e.threshold),
                e.kind.unit(),
                e.severity,
                if e.pass { "yes" } else { "no" }
            ));
        }
        for n in &self.notes {
            out.push_str(&format!("\n- {n}"));
        }
        if !self.notes.is_empty() {
            out.push('\n');
        }
        out
    }
}

pub const SOURCE_MAGNETIC_MOMENT: &str = "magnetic moment force";
pub const SOURCE_MISALIGNMENT: &str = "gravity misalignment force";
pub const SOURCE_ELECTRIC_DIPOLE: &str = "electric dipole force";
pub const SOURCE_FORCE_DIFFERENCE: &str = "branch force difference";
pub const SOURCE_GRAV_PHASE: &str = "force difference phase";
pub const SOURCE_STRAY_ROTATION: &str = "stray field rotation";
pub const SOURCE_STARK_PHASE: &str = "stark phase";
pub const SOURCE_CASIMIR: &str = "casimir gradient limit";

pub fn build_report(
    constants: &PhysicalConstants,
    scenario: &BudgetScenario,
) -> Result<BudgetReport> {
    let s = scenario.resolve()?;
    let c = constants;
    let mut diamond = DiamondSpec::sphere(s.radius);
    diamond.dipole_separation = s.dipole_separation;
    diamond.validate()?;
    let trap = derive_trap(c, &diamond, s.gradient)?;
    if !(s.duration > 0.0) {
        return Err(Error::validation("duration must be positive"));
    }
    let force_threshold = c.hbar / (trap.delta_x_eq * s.duration);

    let moment = magnetic_moment_estimate(
        c,
        s.n_nuclear_spins,
        s.n_surface_spins,
        s.temperature,
        s.bias_field,
    )?;
    let overlap = overlap_bounds(c, &diamond, s.force_time, s.x_min, s.duration)?;
    let casimir = casimir_limit(
        c,
        s.radius,
        c.eps_r,
        s.tip_flux,
        s.position_uncertainty,
        s.duration,
        1.0,
    )?;
    let stark = stark_attenuation(c, s.trapping_field, s.trapping_frequency)?;
    let free = "relative to free evolution; cancelled by a phase-cancelling sequence";

    let mut entries = vec![
        BudgetEntry::new(
            SOURCE_MISALIGNMENT,
            QuantityKind::Force,
            misalignment_force(c, &diamond, s.misalignment_angle),
            Some(force_threshold),
            free,
        ),
        BudgetEntry::new(
            SOURCE_MAGNETIC_MOMENT,
            QuantityKind::Force,
            moment.force_at(s.gradient),
            Some(force_threshold),
            free,
        ),
        BudgetEntry::new(
            SOURCE_ELECTRIC_DIPOLE,
            QuantityKind::Force,
            electric_dipole_force(
                dipole_moment(c, s.dipole_separation),
                s.electric_field_gradient,
            ),
            Some(force_threshold),
            free,
        ),
        BudgetEntry::new(
            SOURCE_FORCE_DIFFERENCE,
            QuantityKind::Force,
            s.force_difference,
            Some(overlap.delta_f_max),
            "wave packets must overlap at recombination",
        ),
        BudgetEntry::new(
            SOURCE_GRAV_PHASE,
            QuantityKind::Phase,
            overlap.grav_phase(c, s.force_difference),
            Some(1.0),
            "phase picked up in gravity during the displaced flight",
        ),
        BudgetEntry::new(
            SOURCE_STRAY_ROTATION,
            QuantityKind::Rotation,
            dipole_relative_rotation(c, &diamond, s.stray_field_difference, s.duration),
            Some(rotation_overlap_bound(&diamond, &trap)),
            "unrefocused worst case",
        ),
        BudgetEntry::new(
            SOURCE_STARK_PHASE,
            QuantityKind::Phase,
            stark.phase_over(s.duration),
            Some(1.0),
            if stark.rwa_valid {
                "off-resonant trapping field"
            } else {
                "rotating-wave approximation not valid"
            },
        ),
        BudgetEntry::new(
            SOURCE_CASIMIR,
            QuantityKind::Gradient,
            s.gradient,
            Some(casimir.b_grad_max),
            "upper bound on the gradient from a spherical tip",
        ),
    ];
    entries.sort_by(|a, b| b.severity.total_cmp(&a.severity));

    let mut notes = vec![format!(
        "force threshold {force_threshold:.3e} N gives 1 rad over {} s without pulses",
        s.duration
    )];
    if !stark.rwa_valid {
        notes.push("trapping field frequency too low for the Stark estimate".to_string());
    }
    Ok(BudgetReport {
        entries,
        force_threshold,
        delta_f_max: overlap.delta_f_max,
        casimir,
        notes,
    })
}
