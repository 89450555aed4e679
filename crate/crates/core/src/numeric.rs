//! Small numerical helpers shared across modules.

use std::f64::consts::PI;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on how the slice was produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Wraps an angle into (−π, π], mapping 0 to 0.
pub fn wrap_phase(raw: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let wrapped = raw - two_pi * ((raw - PI) / two_pi).ceil();
    // Rounding in the subtraction can land a hair outside the interval.
    if wrapped <= -PI {
        wrapped + two_pi
    } else if wrapped > PI {
        wrapped - two_pi
    } else {
        wrapped
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }

    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Spearman rank correlation with average ranks for ties. Returns `None` when
/// either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// SplitMix64 finaliser, used to derive independent sub-seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for a `(seed, path...)` coordinate.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Classic fourth-order Runge-Kutta over consecutive intervals
/// `boundaries[i]..boundaries[i + 1]`, each split into equal steps no longer
/// than `max_step`. Every boundary is hit exactly, so a right-hand side that
/// is discontinuous at the boundaries is never stepped across.
///
/// `rhs(interval, state)` returns the time derivative. The returned samples
/// start with `(boundaries[0], y0)` and include every step end.
pub fn rk4_piecewise<F>(
    boundaries: &[f64],
    max_step: f64,
    y0: [f64; 2],
    mut rhs: F,
) -> Vec<(f64, [f64; 2])>
where
    F: FnMut(usize, [f64; 2]) -> [f64; 2],
{
    let mut samples = vec![(boundaries[0], y0)];
    let mut y = y0;
    for (interval, w) in boundaries.windows(2).enumerate() {
        let (start, end) = (w[0], w[1]);
        let len = end - start;
        if len <= 0.0 {
            continue;
        }
        let steps = (len / max_step).ceil().max(1.0) as usize;
        let h = len / steps as f64;
        for k in 0..steps {
            let k1 = rhs(interval, y);
            let k2 = rhs(interval, axpy(y, 0.5 * h, k1));
            let k3 = rhs(interval, axpy(y, 0.5 * h, k2));
            let k4 = rhs(interval, axpy(y, h, k3));
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let t = if k + 1 == steps {
                end
            } else {
                start + (k + 1) as f64 * h
            };
            samples.push((t, y));
        }
    }
    samples
}

#[inline]
fn axpy(y: [f64; 2], a: f64, x: [f64; 2]) -> [f64; 2] {
    [y[0] + a * x[0], y[1] + a * x[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_phase_interval_and_zero() {
        assert_eq!(wrap_phase(0.0), 0.0);
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        for k in -5..=5 {
            let raw = 0.3 + 2.0 * PI * k as f64;
            assert!((wrap_phase(raw) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let acc: CompensatedSum = [1e16, 1.0, -1e16].into_iter().collect();
        assert_eq!(acc.value(), 1.0);
    }

    #[test]
    fn simpson_integrates_cubic_exactly() {
        let v = adaptive_simpson(&|x: f64| x * x * x - 2.0 * x, 0.0, 2.0, 1e-14);
        assert!((v - 0.0).abs() < 1e-12);
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn spearman_handles_ties_and_order() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[2.0, 4.0, 9.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 1.0, 2.0]).unwrap();
        assert!(rho > 0.9 && rho < 1.0);
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 1.0]), None);
    }

    #[test]
    fn rk4_harmonic_oscillator_hits_boundaries() {
        let b = [0.0, 0.3, 1.0, 2.0 * PI];
        let out = rk4_piecewise(&b, 1e-3, [1.0, 0.0], |_, y| [y[1], -y[0]]);
        assert!(out.iter().any(|(t, _)| *t == 0.3));
        assert!(out.iter().any(|(t, _)| *t == 1.0));
        let (t, y) = *out.last().unwrap();
        assert_eq!(t, 2.0 * PI);
        assert!((y[0] - 1.0).abs() < 1e-11 && y[1].abs() < 1e-11);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, &[0, 1]), derive_seed(7, &[1, 0]));
        assert_eq!(derive_seed(7, &[3, 4]), derive_seed(7, &[3, 4]));
    }
}
