//! Fast self-check of the core invariants, run by `mdd check`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::budget::casimir_limit;
use crate::dephasing::{phase_trials, phi_rate, sequenced_force_phase, TelegraphEnsemble};
use crate::dynamics::{alpha_integral, classical_trajectory, pulsed_separation, SpinBranch};
use crate::numeric::wrap_phase;
use crate::params::{derive_trap, DiamondSpec, PhysicalConstants, TrapConfig};
use crate::pulses::PulseSequence;
use crate::rotation::{linear_propagator, refocus_check};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((pass, detail)) => CheckResult { name, pass, detail },
        Err(e) => CheckResult {
            name,
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn reference_trap(c: &PhysicalConstants, b: f64) -> Result<TrapConfig> {
    derive_trap(c, &DiamondSpec::sphere(230e-9), b)
}

/// Runs every check; the whole suite takes well under a second.
pub fn run_all(constants: &PhysicalConstants) -> Vec<CheckResult> {
    let c = *constants;
    vec![
        check("equilibrium separation closed form", || {
            let d = DiamondSpec::sphere(230e-9);
            let t = derive_trap(&c, &d, 1e3)?;
            let closed = TrapConfig::delta_x_eq_closed_form(&c, &d, 1e3);
            let rel = ((t.delta_x_eq - closed) / closed).abs();
            Ok((rel < 1e-12, format!("relative difference {rel:e}")))
        }),
        check("resonant displacement grows linearly", || {
            let t = reference_trap(&c, 1e4)?;
            let seq = PulseSequence::resonant_amplification(t.omega, 11)?;
            let mut worst = 0.0_f64;
            for k in 1..=12 {
                let time = k as f64 * PI / t.omega;
                let a = alpha_integral(&seq, &t, time)?.alpha.re;
                let expected = -2.0 * t.lambda * time / PI;
                worst = worst.max(((a - expected) / expected).abs());
            }
            Ok((worst < 1e-12, format!("max relative error {worst:e}")))
        }),
        check("classical paths match the displacement", || {
            let t = reference_trap(&c, 1e3)?;
            let seq = PulseSequence::resonant_amplification(t.omega, 3)?;
            let dt = t.period() / 400.0;
            let p = classical_trajectory(&t, &seq, SpinBranch::Plus, 0.0, 0.0, dt)?;
            let m = classical_trajectory(&t, &seq, SpinBranch::Minus, 0.0, 0.0, dt)?;
            let mut worst = 0.0_f64;
            for &b in &seq.boundaries()[1..] {
                let lab = (p.value_at(b) - m.value_at(b)).abs();
                let exact = pulsed_separation(&seq, &t, b)?.abs();
                worst = worst.max((lab - exact).abs() / t.delta_x_eq);
            }
            Ok((worst < 1e-4, format!("max deviation {worst:e} Δx_eq")))
        }),
        check("odd pulse counts cancel static forces", || {
            let t = reference_trap(&c, 1e3)?;
            let free = t.delta_x_eq * 0.5 / c.hbar;
            let mut worst = 0.0_f64;
            for n in (1..200).step_by(2) {
                let seq = PulseSequence::uniform(n, 0.5)?;
                worst = worst.max(sequenced_force_phase(&c, &t, 1.0, &seq).abs() / free);
            }
            Ok((worst < 1e-12, format!("max residual {worst:e}")))
        }),
        check("phase wrapping", || {
            let ok = wrap_phase(0.0) == 0.0
                && wrap_phase(PI) == PI
                && wrap_phase(-PI) == PI
                && (wrap_phase(1.0 + 6.0 * PI) - 1.0).abs() < 1e-12;
            Ok((ok, "0 -> 0, ±π -> π, 2π periodic".into()))
        }),
        check("telegraph Monte Carlo is reproducible", || {
            let phi = phi_rate(&c, &DiamondSpec::sphere(230e-9))?;
            let seq = PulseSequence::uniform(99, 0.5)?;
            let ens = TelegraphEnsemble::with_tau(200, 1.0, 0.5, 17)?;
            let a = phase_trials(phi, &ens, &seq, 16)?;
            let b = phase_trials(phi, &ens, &seq, 16)?;
            Ok((a == b, "16 trials rerun bitwise".into()))
        }),
        check("propagators are unimodular", || {
            let mut worst = 0.0_f64;
            for (q, dt) in [(1.0, 0.3), (9000.0, 4.4e-3), (50.0, 0.7)] {
                for s in [1.0, -1.0] {
                    worst = worst.max((linear_propagator(q, s, dt)?.determinant() - 1.0).abs());
                }
            }
            Ok((worst < 1e-10, format!("max |det - 1| {worst:e}")))
        }),
        check("rotational refocusing", || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..50 {
                let q = 10f64.powf(rng.random_range(0.0..4.0));
                let spacing = rng.random_range(0.05..1.5) / q.sqrt();
                let n = 2 * rng.random_range(0..10) + 1;
                let seq = PulseSequence::resonant_amplification(PI / spacing, n)?;
                if !refocus_check(q, &seq)?.equal {
                    return Ok((false, format!("fails at q = {q}, {n} pulses per half")));
                }
            }
            Ok((true, "50 random sequences".into()))
        }),
        check("casimir scaling", || {
            let a = casimir_limit(&c, 1e-6, c.eps_r, 1.0, 1e-10, 0.5, 1.0)?;
            let b = casimir_limit(&c, 1e-7, c.eps_r, 1.0, 1e-10, 0.5, 1.0)?;
            let ratio = b.b_grad_max / a.b_grad_max;
            Ok((
                (ratio - 10f64.powf(0.6)).abs() < 1e-9,
                format!("ratio {ratio}"),
            ))
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_all(&PhysicalConstants::default()) {
            assert!(r.pass, "{}: {}", r.name, r.detail);
        }
    }
}
