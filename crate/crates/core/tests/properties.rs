use std::f64::consts::PI;

use proptest::prelude::*;

use mdd_core::budget::{
    build_report, casimir_limit, entanglement_phases, overlap_bounds, BudgetScenario,
    EntanglementSetup,
};
use mdd_core::dephasing::{
    phi_rate, sample_eta, sequenced_force_phase, stochastic_phase, EtaPath, TelegraphEnsemble,
};
use mdd_core::dynamics::{alpha_integral, max_separation_rate, pulsed_separation, SpinBranch};
use mdd_core::numeric::wrap_phase;
use mdd_core::params::{derive_trap, DiamondSpec, PhysicalConstants, TrapConfig};
use mdd_core::pulses::PulseSequence;
use mdd_core::rotation::{
    linear_final_state, linear_propagator, max_rotation_step, refocus_check, simulate_rotation,
    RotState,
};

fn c() -> PhysicalConstants {
    PhysicalConstants::default()
}

fn trap(radius: f64, b: f64) -> TrapConfig {
    derive_trap(&c(), &DiamondSpec::sphere(radius), b).unwrap()
}

fn radius() -> impl Strategy<Value = f64> {
    (-7.0..-5.5f64).prop_map(|e| 10f64.powf(e))
}

fn gradient() -> impl Strategy<Value = f64> {
    (1.0..4.5f64).prop_map(|e| 10f64.powf(e))
}

fn odd(max: usize) -> impl Strategy<Value = usize> {
    (0..max / 2).prop_map(|k| 2 * k + 1)
}

/// Strictly increasing pulse times inside `(0, duration)`.
fn custom_sequence() -> impl Strategy<Value = PulseSequence> {
    (0.01..10.0f64, prop::collection::vec(0.001..0.999f64, 0..30)).prop_filter_map(
        "distinct times",
        |(t, mut u)| {
            u.sort_by(f64::total_cmp);
            u.dedup();
            PulseSequence::new(u.into_iter().map(|x| x * t).collect(), t).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn wrap_is_periodic_and_idempotent(x in -1e4..1e4f64, k in -50i32..50) {
        let w = wrap_phase(x);
        prop_assert!(w > -PI && w <= PI);
        prop_assert_eq!(wrap_phase(w), w);
        let shifted = wrap_phase(x + 2.0 * PI * k as f64);
        let d = (shifted - w).abs();
        prop_assert!(d < 1e-9 || (2.0 * PI - d) < 1e-9, "{} vs {}", shifted, w);
    }

    #[test]
    fn trap_invariants(r in radius(), b in gradient(), offset in 0.0..1.0f64) {
        let consts = c();
        let d = DiamondSpec { nv_offset_fraction: offset, ..DiamondSpec::sphere(r) };
        let t = derive_trap(&consts, &d, b).unwrap();
        let closed = TrapConfig::delta_x_eq_closed_form(&consts, &d, b);
        prop_assert!(((t.delta_x_eq - closed) / closed).abs() < 1e-12);
        let twice = derive_trap(&consts, &d, 2.0 * b).unwrap();
        prop_assert!((twice.omega / t.omega - 2.0).abs() < 1e-12);
        prop_assert!((twice.delta_x_eq * 2.0 / t.delta_x_eq - 1.0).abs() < 1e-12);
        let reference = derive_trap(&consts, &DiamondSpec::sphere(r), b).unwrap();
        prop_assert!((t.q_rot - reference.q_rot * offset / 0.8).abs() <= 1e-12 * reference.q_rot);
        // The resonant growth rate does not depend on the gradient.
        let rate = max_separation_rate(&consts, &d).unwrap();
        prop_assert!((8.0 / PI * t.x0 * t.lambda - rate).abs() < 1e-10 * rate);
    }

    #[test]
    fn modulation_counts_pulses(seq in custom_sequence(), u in 0.0..1.0f64, sign in prop::sample::select(vec![1i8, -1])) {
        let t = u * seq.duration();
        let expected = if seq.flips_until(t) % 2 == 0 { sign } else { -sign };
        prop_assert_eq!(seq.eval_modulation(sign, t).unwrap(), expected);
        prop_assert_eq!(seq.modulation(sign).eval(t).unwrap(), expected);
    }

    #[test]
    fn resonant_sequences_are_mirrored(omega in 0.1..1e4f64, n in odd(60), u in 0.0..1.0f64) {
        let seq = PulseSequence::resonant_amplification(omega, n).unwrap();
        let half = seq.duration() / 2.0;
        prop_assert_eq!(seq.len(), 2 * n);
        prop_assert_eq!(seq.flips_until(half), n);
        let h = u * half;
        let spacing = PI / omega;
        // Skip probes that land on a pulse.
        let frac = ((half - h) / spacing).fract();
        prop_assume!(frac > 1e-6 && frac < 1.0 - 1e-6);
        prop_assert_eq!(seq.eval_modulation(1, half + h).unwrap(), seq.eval_modulation(1, half - h).unwrap());
        prop_assert!(seq.integral_p().abs() < 1e-12 * seq.duration());
    }

    #[test]
    fn doubled_sequences_invert_the_repeat(seq in custom_sequence(), u in 0.0..1.0f64) {
        let d = seq.doubled();
        let t = seq.duration();
        let h = u * t;
        prop_assume!(!seq.pulse_times().contains(&h) && h > 0.0 && h < t);
        // The junction pulse leaves the repeat inverted when the sequence
        // itself ends with the sign it started with.
        let parity: i8 = if seq.len() % 2 == 0 { -1 } else { 1 };
        prop_assert_eq!(d.eval_modulation(1, t + h).unwrap(), parity * seq.eval_modulation(1, h).unwrap());
        let expected = if seq.len() % 2 == 0 { 0.0 } else { 2.0 * seq.integral_p() };
        prop_assert!((d.integral_p() - expected).abs() < 1e-12 * d.duration());
    }

    #[test]
    fn sequences_round_trip_through_json(seq in custom_sequence()) {
        prop_assert_eq!(PulseSequence::from_json_str(&seq.to_json()).unwrap(), seq);
    }

    #[test]
    fn resonant_alpha_is_real_at_boundaries(r in radius(), b in gradient(), n in odd(40)) {
        let t = trap(r, b);
        let seq = PulseSequence::resonant_amplification(t.omega, n).unwrap();
        for &time in &seq.boundaries()[1..] {
            let a = alpha_integral(&seq, &t, time).unwrap().alpha;
            // α closes back to zero at the end of the sequence.
            let scale = a.norm().max(t.lambda / t.omega);
            prop_assert!(a.im.abs() < 1e-10 * scale, "{:?} at {}", a, time);
        }
    }

    #[test]
    fn even_uniform_sequences_leave_one_interval(r in radius(), n in (0usize..50).prop_map(|k| 2 * k), duration in 0.01..5.0f64) {
        let consts = c();
        let t = trap(r, 1e3);
        let seq = PulseSequence::uniform(n, duration).unwrap();
        let free = t.delta_x_eq * 1e-20 * duration / consts.hbar;
        let residual = sequenced_force_phase(&consts, &t, 1e-20, &seq);
        prop_assert!((residual - free / (n + 1) as f64).abs() < 1e-12 * free);
    }

    #[test]
    fn propagators_are_unimodular(q in (-3.0..6.0f64).prop_map(|e| 10f64.powf(e)), x in 0.0..12.0f64, sign in prop::sample::select(vec![1.0, -1.0])) {
        let dt = x / q.sqrt();
        let p = linear_propagator(q, sign, dt).unwrap();
        prop_assert!((p.determinant() - 1.0).abs() < 1e-10 * p.matrix.amax().powi(2).max(1.0));
    }

    #[test]
    fn odd_halves_refocus_even_halves_report(q in (-2.0..5.0f64).prop_map(|e| 10f64.powf(e)), s in 0.05..1.5f64, n in odd(30)) {
        let spacing = s / q.sqrt();
        let seq = PulseSequence::resonant_amplification(PI / spacing, n).unwrap();
        let report = refocus_check(q, &seq).unwrap();
        prop_assert!(report.equal);
        prop_assert!(report.antidiagonal_identity);
        // Both branches end at the same angle from rest.
        let p = linear_final_state(q, &seq, SpinBranch::Plus, RotState::at_rest(0.3)).unwrap();
        let m = linear_final_state(q, &seq, SpinBranch::Minus, RotState::at_rest(0.3)).unwrap();
        prop_assert!((p.theta - m.theta).abs() <= 1e-10 * p.theta.abs().max(m.theta.abs()).max(1.0));

        // Dropping the outermost pulse of each half leaves an even count.
        let t = seq.duration();
        let mut times: Vec<f64> = seq.pulse_times().iter().copied().filter(|&p| p > spacing * 1.5 && p < t - spacing * 1.5).collect();
        times.sort_by(f64::total_cmp);
        let even = PulseSequence::new(times, t).unwrap();
        let r = refocus_check(q, &even).unwrap();
        prop_assert!(!r.equal);
        prop_assert!(r.diagnostic.is_some());
    }

    #[test]
    fn flipping_all_spins_negates_the_phase(n in 0usize..200, tau in 0.01..100.0f64, seed in any::<u64>(), pulses in 0usize..40) {
        let phi = phi_rate(&c(), &DiamondSpec::sphere(230e-9)).unwrap();
        let seq = PulseSequence::uniform(pulses, 0.5).unwrap();
        let ens = TelegraphEnsemble::with_tau(n, tau, 0.5, seed).unwrap();
        let path = sample_eta(&ens).unwrap();
        let flipped = EtaPath { initial_signs: path.initial_signs.iter().map(|s| -s).collect(), ..path.clone() };
        let a = stochastic_phase(phi, &path, &seq).unwrap();
        let b = stochastic_phase(phi, &flipped, &seq).unwrap();
        prop_assert_eq!(a.raw, -b.raw);
        for k in 0..=20 {
            let t = 0.5 * k as f64 / 20.0;
            prop_assert!(path.eval(t).unsigned_abs() as usize <= n);
            prop_assert_eq!(path.eval(t).rem_euclid(2), (n as i64) % 2);
        }
        for (_, step) in path.events() {
            prop_assert_eq!(step.abs(), 2);
        }
    }

    #[test]
    fn static_spins_cancel_under_odd_sequences(n in 0usize..500, seed in any::<u64>(), pulses in odd(100)) {
        let phi = phi_rate(&c(), &DiamondSpec::sphere(230e-9)).unwrap();
        let seq = PulseSequence::uniform(pulses, 0.5).unwrap();
        let ens = TelegraphEnsemble::with_tau(n, f64::INFINITY, 0.5, seed).unwrap();
        let p = stochastic_phase(phi, &sample_eta(&ens).unwrap(), &seq).unwrap();
        prop_assert!(p.raw.abs() <= 1e-9 * phi.phi * n.max(1) as f64);
    }

    #[test]
    fn overlap_force_bound_scales_as_inverse_square_time(t1 in 1e-4..1.0f64, t2 in 1e-4..1.0f64, x_min in 1e-12..1e-9f64) {
        let d = DiamondSpec::sphere(230e-9);
        let a = overlap_bounds(&c(), &d, t1, x_min, 0.5).unwrap();
        let b = overlap_bounds(&c(), &d, t2, x_min, 0.5).unwrap();
        let (ka, kb) = (a.delta_f_max * t1 * t1, b.delta_f_max * t2 * t2);
        prop_assert!((ka - kb).abs() <= 1e-12 * ka);
    }

    #[test]
    fn casimir_optimum_is_consistent(r1 in 1e-8..1e-5f64, delta_r in 1e-12..1e-8f64, budget in 0.01..1.0f64) {
        let consts = c();
        let a = casimir_limit(&consts, r1, consts.eps_r, 1.0, delta_r, 0.5, budget).unwrap();
        let expected = 1.5f64.powf(1.6) * (a.c_prefactor / a.dv_dr).powf(0.2);
        prop_assert!((a.r_opt - expected).abs() <= 1e-12 * expected);
        prop_assert!(a.b_grad_max.is_finite() && a.b_grad_max > 0.0);
        let b = casimir_limit(&consts, 2.0 * r1, consts.eps_r, 1.0, delta_r, 0.5, budget).unwrap();
        prop_assert!((b.b_grad_max / a.b_grad_max - 2f64.powf(-0.6)).abs() < 1e-12);
    }

    #[test]
    fn dipole_phase_is_quadratic_in_the_moment(field in 1e-3..10.0f64, k in 0.1..10.0f64) {
        let setup = EntanglementSetup {
            mass: 1e-14, d_ll: 2e-4, d_rl: 2e-4, d_lr: 2.5e-4, field, volume: 4e-18, t_exp: 1.0,
        };
        let a = entanglement_phases(&c(), &setup).unwrap();
        let b = entanglement_phases(&c(), &EntanglementSetup { field: field * k, ..setup }).unwrap();
        prop_assert!((b.phi_dip / a.phi_dip - k * k).abs() <= 1e-12 * k * k);
        prop_assert_eq!(a.phi_grav, b.phi_grav);
    }

    #[test]
    fn budget_entries_pass_below_threshold(b in 1e1..1e4f64, beta in 0.0..1e-6f64, n_spins in 0.0..1e5f64) {
        let s = BudgetScenario {
            gradient: Some(b),
            misalignment_angle: Some(beta),
            n_surface_spins: Some(n_spins),
            ..BudgetScenario::reference()
        };
        let report = build_report(&c(), &s).unwrap();
        for e in &report.entries {
            if let Some(t) = e.threshold {
                prop_assert_eq!(e.pass, e.value.abs() < t);
            }
        }
        for w in report.entries.windows(2) {
            prop_assert!(w[0].severity >= w[1].severity);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gradient_does_not_change_resonant_growth(r in radius(), b in gradient(), n in odd(20)) {
        let rate = |b: f64| {
            let t = trap(r, b);
            let seq = PulseSequence::resonant_amplification(t.omega, n).unwrap();
            let half = seq.duration() / 2.0;
            pulsed_separation(&seq, &t, half).unwrap() / half
        };
        prop_assert!((rate(b) / rate(10.0 * b) - 1.0).abs() < 1e-8);
    }

    /// The linearised branches refocus exactly, so the nonlinear mismatch
    /// starts at third order in the initial angle.
    #[test]
    fn nonlinear_mismatch_is_cubic(theta0 in 0.02..0.08f64, n in prop::sample::select(vec![5usize, 11, 21])) {
        let t = trap(230e-9, 1e4);
        let seq = PulseSequence::resonant_amplification(t.omega, n).unwrap();
        let dt = max_rotation_step(t.q_rot, &seq) / 4.0;
        let mismatch = |th: f64| {
            let run = |b| simulate_rotation(t.q_rot, &seq, b, RotState::at_rest(th), dt).unwrap().last().value;
            (run(SpinBranch::Plus) - run(SpinBranch::Minus)).abs()
        };
        let ratio = mismatch(theta0) / mismatch(theta0 / 2.0);
        prop_assert!((ratio - 8.0).abs() < 1.0, "ratio {}", ratio);
    }
}
