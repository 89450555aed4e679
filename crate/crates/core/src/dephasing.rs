//! Relative phases between the two branches.
//!
//! Sources covered: a homogeneous static force, telegraph noise from surface
//! spins (Monte Carlo), arbitrary weak static potentials evaluated along the
//! classical branch paths, and the terms added by a second-order field
//! gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{SpinBranch, Trajectory};
use crate::numeric::{derive_seed, pairwise_sum, wrap_phase, CompensatedSum};
use crate::params::{DiamondSpec, PhysicalConstants, TrapConfig};
use crate::pulses::PulseSequence;
use crate::{Error, Result};

/// Phase rate per unit of the surface-spin sum η, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiRate {
    pub phi: f64,
}

/// `φ = ħγₑ²µ₀/(−χ_V·V)`; independent of the gradient.
pub fn phi_rate(constants: &PhysicalConstants, diamond: &DiamondSpec) -> Result<PhiRate> {
    diamond.validate()?;
    let c = constants;
    Ok(PhiRate {
        phi: c.hbar * c.gamma_e * c.gamma_e * c.mu0 / (-c.chi_v * diamond.volume()),
    })
}

/// Relative phase from a constant force `f0` acting for `t`: `Δx_eq·F₀·t/ħ`.
pub fn constant_force_phase(
    constants: &PhysicalConstants,
    trap: &TrapConfig,
    f0: f64,
    t: f64,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    Ok(trap.delta_x_eq * f0 * t / constants.hbar)
}

/// Relative phase from a constant force under `seq`: the free-evolution rate
/// weighted by `∫₀ᵀ P`.
pub fn sequenced_force_phase(
    constants: &PhysicalConstants,
    trap: &TrapConfig,
    f0: f64,
    seq: &PulseSequence,
) -> f64 {
    trap.delta_x_eq * f0 * seq.integral_p() / constants.hbar
}

/// Surface-spin bath: `n_spins` independent telegraph signals with flip rate
/// `flip_rate` on `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TelegraphEnsemble {
    pub n_spins: usize,
    pub flip_rate: f64,
    pub duration: f64,
    pub seed: u64,
}

impl TelegraphEnsemble {
    /// Ensemble with flip rate `1/tau`; an infinite `tau` means no flips.
    pub fn with_tau(n_spins: usize, tau: f64, duration: f64, seed: u64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::domain(format!(
                "relaxation time must be positive, got {tau}"
            )));
        }
        let ens = Self {
            n_spins,
            flip_rate: 1.0 / tau,
            duration,
            seed,
        };
        ens.validate()?;
        Ok(ens)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flip_rate >= 0.0) || !self.flip_rate.is_finite() {
            return Err(Error::domain(format!(
                "flip rate must be non-negative, got {}",
                self.flip_rate
            )));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::domain(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        Ok(())
    }
}

/// One spin's telegraph signal, `initial_sign·(−1)^{#flips ≤ t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinPath {
    pub initial_sign: i8,
    pub flips: Vec<f64>,
}

/// Draws the signal of spin `index`. Depends only on `(seed, index)`, the
/// flip rate and the duration, so ensembles of different size share their
/// common spins.
pub fn sample_spin(seed: u64, index: usize, flip_rate: f64, duration: f64) -> SpinPath {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[index as u64]));
    let initial_sign = if rng.random::<bool>() { 1 } else { -1 };
    let mut flips = Vec::new();
    if flip_rate > 0.0 {
        let exp = Exp::new(flip_rate).expect("positive rate");
        let mut t = exp.sample(&mut rng);
        while t < duration {
            flips.push(t);
            t += exp.sample(&mut rng);
        }
    }
    SpinPath {
        initial_sign,
        flips,
    }
}

/// Sampled η(t) = Σᵢ Xᵢ(t). Flip times of spin `i` are
/// `flips[offsets[i]..offsets[i + 1]]`, each run sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaPath {
    pub duration: f64,
    pub initial_signs: Vec<i8>,
    pub offsets: Vec<usize>,
    pub flips: Vec<f64>,
}

impl EtaPath {
    pub fn n_spins(&self) -> usize {
        self.initial_signs.len()
    }

    pub fn spin_flips(&self, i: usize) -> &[f64] {
        &self.flips[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn spin_value(&self, i: usize, t: f64) -> i8 {
        let n = self.spin_flips(i).partition_point(|&f| f <= t);
        if n % 2 == 0 {
            self.initial_signs[i]
        } else {
            -self.initial_signs[i]
        }
    }

    pub fn eval(&self, t: f64) -> i64 {
        (0..self.n_spins())
            .map(|i| i64::from(self.spin_value(i, t)))
            .sum()
    }

    /// All flips merged in time order as `(t, Δη)`, Δη = ±2.
    pub fn events(&self) -> Vec<(f64, i64)> {
        let mut events = Vec::with_capacity(self.flips.len());
        for i in 0..self.n_spins() {
            let mut sign = i64::from(self.initial_signs[i]);
            for &f in self.spin_flips(i) {
                events.push((f, -2 * sign));
                sign = -sign;
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        events
    }
}

/// Draws η for the whole ensemble.
pub fn sample_eta(ensemble: &TelegraphEnsemble) -> Result<EtaPath> {
    ensemble.validate()?;
    let mut initial_signs = Vec::with_capacity(ensemble.n_spins);
    let mut offsets = Vec::with_capacity(ensemble.n_spins + 1);
    let mut flips = Vec::new();
    offsets.push(0);
    for i in 0..ensemble.n_spins {
        let s = sample_spin(ensemble.seed, i, ensemble.flip_rate, ensemble.duration);
        initial_signs.push(s.initial_sign);
        flips.extend(s.flips);
        offsets.push(flips.len());
    }
    Ok(EtaPath {
        duration: ensemble.duration,
        initial_signs,
        offsets,
        flips,
    })
}

/// A stochastic phase, unwrapped and wrapped into (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseSample {
    pub raw: f64,
    pub wrapped: f64,
}

impl PhaseSample {
    pub fn from_raw(raw: f64) -> Self {
        Self {
            raw,
            wrapped: wrap_phase(raw),
        }
    }
}

/// `G(t) = ∫₀ᵗ P` in O(log n) per lookup.
struct PIntegral<'a> {
    seq: &'a PulseSequence,
    at_pulse: Vec<f64>,
}

impl<'a> PIntegral<'a> {
    fn new(seq: &'a PulseSequence) -> Self {
        let at_pulse = seq
            .pulse_times()
            .iter()
            .map(|&p| seq.integral_p_until(p))
            .collect();
        Self { seq, at_pulse }
    }

    fn at(&self, t: f64) -> f64 {
        let k = self.seq.flips_until(t);
        if k == 0 {
            return t;
        }
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        self.at_pulse[k - 1] + sign * (t - self.seq.pulse_times()[k - 1])
    }

    /// ∫₀ᵀ Xᵢ P for one spin. Between its flips Xᵢ is constant, so the
    /// integral is an alternating sum of `G` differences.
    fn spin_integral(&self, initial_sign: i8, flips: &[f64]) -> f64 {
        let mut acc = CompensatedSum::new();
        let mut start = 0.0;
        let mut sign = 1.0;
        for &f in flips {
            acc.add(sign * (self.at(f) - self.at(start)));
            start = f;
            sign = -sign;
        }
        acc.add(sign * (self.at(self.seq.duration()) - self.at(start)));
        f64::from(initial_sign) * acc.value()
    }
}

fn check_durations(eta_duration: f64, seq: &PulseSequence) -> Result<()> {
    let t = seq.duration();
    if (eta_duration - t).abs() > 1e-12 * t {
        return Err(Error::validation(format!(
            "noise path spans {eta_duration} s but the sequence spans {t} s"
        )));
    }
    Ok(())
}

/// `Φ = 2φ∫₀ᵀ η(s)P(s)ds`, integrated exactly: each spin contributes the
/// integral of a product of two piecewise-constant signals.
pub fn stochastic_phase(phi: PhiRate, path: &EtaPath, seq: &PulseSequence) -> Result<PhaseSample> {
    check_durations(path.duration, seq)?;
    let g = PIntegral::new(seq);
    let mut acc = CompensatedSum::new();
    for i in 0..path.n_spins() {
        acc.add(g.spin_integral(path.initial_signs[i], path.spin_flips(i)));
    }
    Ok(PhaseSample::from_raw(2.0 * phi.phi * acc.value()))
}

/// Summary statistics of the wrapped phase over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub n_trials: usize,
    pub mean: f64,
    /// Unbiased sample variance, rad².
    pub variance: f64,
    /// Standard error of the variance estimate, rad².
    pub std_error: f64,
}

/// Sample statistics of `values` (at least two).
pub fn variance_estimate(values: &[f64]) -> VarianceEstimate {
    let n = values.len();
    assert!(n >= 2, "variance needs at least two samples");
    let nf = n as f64;
    let mean = pairwise_sum(values) / nf;
    let dev2: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let dev4: Vec<f64> = dev2.iter().map(|d| d * d).collect();
    let m2 = pairwise_sum(&dev2) / nf;
    let m4 = pairwise_sum(&dev4) / nf;
    let variance = m2 * nf / (nf - 1.0);
    let se2 = (m4 - variance * variance * (nf - 3.0) / (nf - 1.0)) / nf;
    VarianceEstimate {
        n_trials: n,
        mean,
        variance,
        std_error: se2.max(0.0).sqrt(),
    }
}

/// Seed of trial `trial` within a run seeded with `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, &[trial as u64])
}

/// Per-trial phases for `n_trials` independent noise realisations. Results
/// are in trial order and do not depend on the thread count.
pub fn phase_trials(
    phi: PhiRate,
    ensemble: &TelegraphEnsemble,
    seq: &PulseSequence,
    n_trials: usize,
) -> Result<Vec<PhaseSample>> {
    ensemble.validate()?;
    check_durations(ensemble.duration, seq)?;
    (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let ens = TelegraphEnsemble {
                seed: trial_seed(ensemble.seed, trial),
                ..*ensemble
            };
            stochastic_phase(phi, &sample_eta(&ens)?, seq)
        })
        .collect()
}

/// Variance of the wrapped phase over `n_trials` realisations.
pub fn phase_variance_mc(
    phi: PhiRate,
    ensemble: &TelegraphEnsemble,
    seq: &PulseSequence,
    n_trials: usize,
) -> Result<VarianceEstimate> {
    if n_trials < 2 {
        return Err(Error::validation(format!(
            "at least 2 trials are required, got {n_trials}"
        )));
    }
    let wrapped: Vec<f64> = phase_trials(phi, ensemble, seq, n_trials)?
        .iter()
        .map(|p| p.wrapped)
        .collect();
    Ok(variance_estimate(&wrapped))
}

/// One cell of a spin-count by relaxation-time variance table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub n_spins: usize,
    pub tau: f64,
    pub variance: f64,
    pub std_error: f64,
    pub n_trials: usize,
}

/// Variance table over `n_spins × taus`.
///
/// Within a trial the spin signals are shared across all spin counts, so each
/// larger ensemble extends the smaller ones. Every cell equals the value
/// [`phase_variance_mc`] returns for the same seed.
pub fn variance_sweep(
    phi: PhiRate,
    n_spins: &[usize],
    taus: &[f64],
    seq: &PulseSequence,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<SweepCell>> {
    if n_trials < 2 {
        return Err(Error::validation(format!(
            "at least 2 trials are required, got {n_trials}"
        )));
    }
    let mut counts = n_spins.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let max_n = counts.last().copied().unwrap_or(0);
    let duration = seq.duration();
    let g = PIntegral::new(seq);
    let mut cells = Vec::with_capacity(counts.len() * taus.len());
    for &tau in taus {
        let ens = TelegraphEnsemble::with_tau(max_n, tau, duration, seed)?;
        // per_trial[trial][j]: wrapped phase with counts[j] spins.
        let per_trial: Vec<Vec<f64>> = (0..n_trials)
            .into_par_iter()
            .map(|trial| {
                let ts = trial_seed(seed, trial);
                let mut acc = CompensatedSum::new();
                let mut out = Vec::with_capacity(counts.len());
                let mut next = 0;
                while next < counts.len() && counts[next] == 0 {
                    out.push(wrap_phase(0.0));
                    next += 1;
                }
                for i in 0..max_n {
                    let s = sample_spin(ts, i, ens.flip_rate, duration);
                    acc.add(g.spin_integral(s.initial_sign, &s.flips));
                    while next < counts.len() && counts[next] == i + 1 {
                        out.push(wrap_phase(2.0 * phi.phi * acc.value()));
                        next += 1;
                    }
                }
                out
            })
            .collect();
        for (j, &n) in counts.iter().enumerate() {
            let column: Vec<f64> = per_trial.iter().map(|row| row[j]).collect();
            let est = variance_estimate(&column);
            cells.push(SweepCell {
                n_spins: n,
                tau,
                variance: est.variance,
                std_error: est.std_error,
                n_trials,
            });
        }
    }
    Ok(cells)
}

/// Phase accumulated along one classical branch path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathPhase {
    pub branch: SpinBranch,
    /// `(1/ħ)∫V(x(t))dt`, rad.
    pub phase: f64,
    pub max_abs_potential: f64,
    /// False when `max|V| ≥ 0.01·ħω`, outside the weak-potential regime.
    pub weak: bool,
}

/// Trapezoidal `(1/ħ)∫V(x(t))dt` along `trajectory`.
pub fn path_phase<V: Fn(f64) -> f64>(
    constants: &PhysicalConstants,
    trap: &TrapConfig,
    potential: V,
    trajectory: &Trajectory,
) -> PathPhase {
    let values: Vec<f64> = trajectory
        .samples
        .iter()
        .map(|s| potential(s.value))
        .collect();
    let mut acc = CompensatedSum::new();
    for (w, v) in trajectory.samples.windows(2).zip(values.windows(2)) {
        acc.add(0.5 * (w[1].t - w[0].t) * (v[0] + v[1]));
    }
    let max_abs_potential = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    PathPhase {
        branch: trajectory.branch,
        phase: acc.value() / constants.hbar,
        max_abs_potential,
        weak: max_abs_potential < 0.01 * constants.hbar * trap.omega,
    }
}

/// Perturbation terms from a second-order gradient `B″`, J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticGradientTerms {
    /// `−(χ_V V/2µ₀)·B′B″x³`
    pub cubic: f64,
    /// `−(χ_V V/2µ₀)·B″²x⁴`
    pub quartic: f64,
    /// `−ħγₑB″x²·s`
    pub spin: f64,
}

impl QuadraticGradientTerms {
    pub fn total(&self) -> f64 {
        self.cubic + self.quartic + self.spin
    }
}

pub fn quadratic_gradient_terms(
    constants: &PhysicalConstants,
    diamond: &DiamondSpec,
    trap: &TrapConfig,
    b_double_prime: f64,
    x: f64,
    branch: SpinBranch,
) -> QuadraticGradientTerms {
    let c = constants;
    let k = -c.chi_v * diamond.volume() / (2.0 * c.mu0);
    let b2 = b_double_prime;
    QuadraticGradientTerms {
        cubic: k * trap.b_prime * b2 * x.powi(3),
        quartic: k * b2 * b2 * x.powi(4),
        spin: -c.hbar * c.gamma_e * b2 * x * x * branch.sign(),
    }
}

/// Whether the expansion around the linear gradient holds: `B″|x| < 0.01·B′`.
pub fn quadratic_gradient_valid(b_prime: f64, b_double_prime: f64, mean_x: f64) -> bool {
    (b_double_prime * mean_x).abs() < 0.01 * b_prime.abs()
}
