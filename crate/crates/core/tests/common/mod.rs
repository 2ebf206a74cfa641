#![allow(dead_code)]

use ldp_confseq::harness::engine::{privatize_values, ResolvedMechanism};
use ldp_confseq::mechanisms::{PrivacyParams, PrivateRecord, RandomSource};

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// `∫ f` over `[a, b]` split into `pieces` equal panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize, tol: f64) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces).map(|k| adaptive_simpson(&f, a + k as f64 * h, a + (k + 1) as f64 * h, tol / pieces as f64)).sum()
}

/// `ln ∫ exp(λ s - t λ²/8) dF(λ)` for `F = N(0, ρ²)`, or its positive half
/// folded onto `λ > 0` when `one_sided`.
pub fn mixture_by_quadrature(s: f64, t: u64, rho: f64, one_sided: bool) -> f64 {
    // exponent λ s - λ² A / 2 with A = t/4 + 1/ρ², peaked at λ* = s/A
    let a = t as f64 / 4.0 + 1.0 / (rho * rho);
    let (mode, sd) = (s / a, 1.0 / a.sqrt());
    let (mut lo, hi) = (mode - 40.0 * sd, mode + 40.0 * sd);
    if one_sided {
        lo = lo.max(0.0);
    }
    // scale by the largest exponent on the domain so the tolerance is relative
    let top = mode.clamp(lo, hi);
    let peak = top * s - 0.5 * a * top * top;
    if hi <= lo {
        return f64::NEG_INFINITY;
    }
    let g = |l: f64| (l * s - 0.5 * a * l * l - peak).exp();
    let mass = integrate(g, lo, hi, 64, 1e-14);
    let norm = (2.0 * std::f64::consts::PI).sqrt() * rho;
    let fold = if one_sided { 2.0f64.ln() } else { 0.0 };
    peak + mass.ln() - norm.ln() + fold
}

pub fn nprr_records(xs: &[f64], params: PrivacyParams, rng: &mut RandomSource) -> Vec<PrivateRecord> {
    privatize_values(xs, ResolvedMechanism::Nprr(params), rng).unwrap()
}

pub fn sirr_records(xs: &[f64], params: PrivacyParams, rng: &mut RandomSource) -> Vec<PrivateRecord> {
    privatize_values(xs, ResolvedMechanism::Sirr(params), rng).unwrap()
}

pub fn bernoulli_values(p: f64, n: usize, rng: &mut RandomSource) -> Vec<f64> {
    (0..n).map(|_| if rng.bernoulli(p) { 1.0 } else { 0.0 }).collect()
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
