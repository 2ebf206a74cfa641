//! Confidence intervals and confidence sequences from privatized streams.
//!
//! Every NPRR method works on the privatized scale through
//! `ζ(μ) = r μ + (1 - r)/2`, the conditional mean of `Z` given mean `μ`.
//! Upper bounds come from running the lower-bound machinery on the reflected
//! stream `1 - Z`, whose conditional mean is `ζ(1 - μ)`.
//!
//! Supermartingale products are accumulated in log space throughout.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mechanisms::{PrivacyParams, PrivateRecord, RecordParams};
use crate::schedules::{
    check_alpha, lambda_betting_unclamped, lambda_laplace, laplace_cgf, ln_normal_cdf, LambdaSchedule,
    MixtureConfig, VarianceState,
};

/// Identifies the construction that produced a [`BoundSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    HoeffdingCs,
    HoeffdingCi,
    MixtureTwoSided,
    MixtureLower,
    LaplaceHoeffdingCs,
    LaplaceHoeffdingCi,
    PmKellyCi,
    GridKellyCs,
    SirrLrCs,
    AbLowerCs,
    AbTwoSidedCs,
}

/// Bounds at one time. A set found to be empty is stored with `lower > upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub t: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BoundEntry {
    pub fn is_empty(&self) -> bool {
        self.lower > self.upper
    }

    pub fn contains(&self, mu: f64) -> bool {
        self.lower <= mu && mu <= self.upper
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    pub entries: Vec<BoundEntry>,
    pub alpha: f64,
    pub method: MethodTag,
}

impl BoundSeries {
    pub fn new(alpha: f64, method: MethodTag) -> Self {
        Self { entries: Vec::new(), alpha, method }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&BoundEntry> {
        self.entries.last()
    }

    pub fn at(&self, t: u64) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.t == t)
    }

    /// Intersect each set with all earlier ones.
    pub fn running_intersection(&self) -> BoundSeries {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let entries = self
            .entries
            .iter()
            .map(|e| {
                lo = lo.max(e.lower);
                hi = hi.min(e.upper);
                BoundEntry { t: e.t, estimate: clamp_into(e.estimate, lo, hi), lower: lo, upper: hi }
            })
            .collect();
        BoundSeries { entries, alpha: self.alpha, method: self.method }
    }
}

/// Knobs for numerical set inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionSettings {
    pub grid_step: f64,
    pub tol: f64,
}

impl Default for InversionSettings {
    fn default() -> Self {
        Self { grid_step: 1e-3, tol: 1e-6 }
    }
}

pub fn zeta(mu: f64, r: f64) -> f64 {
    r * mu + (1.0 - r) / 2.0
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn clamp_into(x: f64, lo: f64, hi: f64) -> f64 {
    if lo <= hi {
        x.clamp(lo, hi)
    } else {
        x
    }
}

fn nprr_params(rec: &PrivateRecord) -> Result<PrivacyParams> {
    rec.nprr_params()
        .ok_or_else(|| Error::Argument(format!("record {} is not an NPRR record", rec.index)))
}

fn check_indices(records: &[PrivateRecord]) -> Result<()> {
    for (i, rec) in records.iter().enumerate() {
        if rec.index != i as u64 + 1 {
            return Err(Error::Contract(format!(
                "record indices must run 1, 2, ...; found {} at position {}",
                rec.index,
                i + 1
            )));
        }
    }
    Ok(())
}

/// The stream `1 - Z`, used to build upper bounds from lower-bound code.
pub fn reflect(records: &[PrivateRecord]) -> Vec<PrivateRecord> {
    records.iter().map(|r| PrivateRecord { z: 1.0 - r.z, ..*r }).collect()
}

/// Non-interactive parameters shared by the whole stream.
pub fn constant_params(records: &[PrivateRecord]) -> Result<PrivacyParams> {
    let first = match records.first() {
        Some(rec) => nprr_params(rec)?,
        None => return Err(Error::Argument("empty stream".into())),
    };
    for rec in records {
        if nprr_params(rec)? != first {
            return Err(Error::Contract(format!(
                "record {} changes (r, G); this method requires a non-interactive stream",
                rec.index
            )));
        }
    }
    Ok(first)
}

/// Running sums behind the Hoeffding-type bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MartingaleAccumulator {
    pub t: u64,
    /// `Σ λ_i (Z_i - (1 - r_i)/2)`
    pub weighted_sum: f64,
    /// `Σ r_i λ_i`
    pub weight_sum: f64,
    /// `Σ λ_i² / 8`
    pub quad_sum: f64,
    /// `Σ (Z_i - (1 - r_i)/2)`
    pub plain_sum: f64,
    /// `Σ r_i`
    pub r_sum: f64,
}

impl MartingaleAccumulator {
    pub fn push(&mut self, z: f64, r: f64, lambda: f64) {
        let centered = z - (1.0 - r) / 2.0;
        self.t += 1;
        self.weighted_sum += lambda * centered;
        self.weight_sum += r * lambda;
        self.quad_sum += lambda * lambda / 8.0;
        self.plain_sum += centered;
        self.r_sum += r;
    }

    /// `μ̂_t(λ)`
    pub fn estimate(&self) -> f64 {
        self.weighted_sum / self.weight_sum
    }

    /// `(ln(1/α) + Σ λ²/8) / Σ r λ`
    pub fn boundary(&self, alpha: f64) -> f64 {
        ((1.0 / alpha).ln() + self.quad_sum) / self.weight_sum
    }

    /// Unweighted debiased mean `Σ (Z - (1-r)/2) / Σ r`.
    pub fn plain_estimate(&self) -> f64 {
        self.plain_sum / self.r_sum
    }
}

fn hoeffding_lower_path(
    records: &[PrivateRecord],
    schedule: &LambdaSchedule,
    alpha: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut acc = MartingaleAccumulator::default();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let r = nprr_params(rec)?.r();
        let lambda = schedule.hoeffding_lambda(acc.t + 1)?;
        if !(lambda > 0.0) {
            return domain(format!("schedule produced non-positive lambda {lambda}"));
        }
        acc.push(rec.z, r, lambda);
        let est = acc.estimate();
        out.push((est, est - acc.boundary(alpha)));
    }
    Ok(out)
}

/// Hoeffding confidence sequence, each side at level `alpha`.
pub fn hoeffding_cs(records: &[PrivateRecord], schedule: LambdaSchedule, alpha: f64) -> Result<BoundSeries> {
    check_alpha(alpha)?;
    check_indices(records)?;
    let lows = hoeffding_lower_path(records, &schedule, alpha)?;
    let highs = hoeffding_lower_path(&reflect(records), &schedule, alpha)?;
    let mut series = BoundSeries::new(alpha, MethodTag::HoeffdingCs);
    for (i, ((est, lo), (_, hi))) in lows.into_iter().zip(highs).enumerate() {
        series.entries.push(BoundEntry {
            t: i as u64 + 1,
            estimate: clip01(est),
            lower: clip01(lo),
            upper: clip01(1.0 - hi),
        });
    }
    Ok(series)
}

/// Hoeffding CI at sample size `n` with λ tuned for `n`.
pub fn hoeffding_ci(records: &[PrivateRecord], n: u64, alpha: f64) -> Result<BoundSeries> {
    check_alpha(alpha)?;
    hoeffding_ci_with(records, n, LambdaSchedule::FixedN { n, alpha }, alpha)
}

/// Hoeffding CI from running extrema of the per-time bounds.
pub fn hoeffding_ci_with(
    records: &[PrivateRecord],
    n: u64,
    schedule: LambdaSchedule,
    alpha: f64,
) -> Result<BoundSeries> {
    if records.len() as u64 != n {
        return Err(Error::Argument(format!("expected {n} records, got {}", records.len())));
    }
    check_alpha(alpha)?;
    check_indices(records)?;
    let lows = hoeffding_lower_path(records, &schedule, alpha)?;
    let highs = hoeffding_lower_path(&reflect(records), &schedule, alpha)?;
    let lower = lows.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let upper = 1.0 - highs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (lower, upper) = (clip01(lower), clip01(upper));
    let est = lows.last().map_or(0.5, |p| p.0);
    let mut series = BoundSeries::new(alpha, MethodTag::HoeffdingCi);
    series.entries.push(BoundEntry { t: n, estimate: clamp_into(clip01(est), lower, upper), lower, upper });
    Ok(series)
}

/// Two-sided mixture radius `B̃^±_t`.
pub fn mixture_boundary_two_sided(t: u64, r: f64, beta: f64, alpha: f64) -> f64 {
    let t = t as f64;
    let v = t * beta * beta + 1.0;
    let trb = t * r * beta;
    (v / (2.0 * trb * trb) * (v.sqrt() / alpha).ln()).sqrt()
}

/// One-sided mixture radius `B̃_t`.
pub fn mixture_boundary_one_sided(t: u64, r: f64, beta: f64, alpha: f64) -> f64 {
    let t = t as f64;
    let v = t * beta * beta + 1.0;
    let trb = t * r * beta;
    (v / (2.0 * trb * trb) * (v.sqrt() / (2.0 * alpha)).ln_1p()).sqrt()
}

fn mixture_path(records: &[PrivateRecord]) -> Result<(PrivacyParams, Vec<f64>)> {
    check_indices(records)?;
    let params = constant_params(records)?;
    let r = params.r();
    let mut sum = 0.0;
    let est = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            sum += rec.z - (1.0 - r) / 2.0;
            sum / ((i as f64 + 1.0) * r)
        })
        .collect();
    Ok((params, est))
}

/// Two-sided CS for the running average of possibly time-varying means.
pub fn mixture_cs_two_sided(records: &[PrivateRecord], config: MixtureConfig) -> Result<BoundSeries> {
    let mut series = BoundSeries::new(config.alpha, MethodTag::MixtureTwoSided);
    if records.is_empty() {
        return Ok(series);
    }
    let (params, est) = mixture_path(records)?;
    for (i, mu) in est.into_iter().enumerate() {
        let t = i as u64 + 1;
        let b = mixture_boundary_two_sided(t, params.r(), config.beta, config.alpha);
        series.entries.push(BoundEntry { t, estimate: clip01(mu), lower: clip01(mu - b), upper: clip01(mu + b) });
    }
    Ok(series)
}

/// Lower CS for the running average of possibly time-varying means.
pub fn mixture_cs_lower(records: &[PrivateRecord], config: MixtureConfig) -> Result<BoundSeries> {
    let mut series = BoundSeries::new(config.alpha, MethodTag::MixtureLower);
    if records.is_empty() {
        return Ok(series);
    }
    let (params, est) = mixture_path(records)?;
    for (i, mu) in est.into_iter().enumerate() {
        let t = i as u64 + 1;
        let b = mixture_boundary_one_sided(t, params.r(), config.beta, config.alpha);
        let lower = clip01(mu - b);
        series.entries.push(BoundEntry { t, estimate: clip01(mu).max(lower), lower, upper: 1.0 });
    }
    Ok(series)
}

/// `ln M_t` of the Gaussian-mixture supermartingale with mixing variance `ρ²`.
pub fn two_sided_mixture_nsm(s: f64, t: u64, rho: f64) -> f64 {
    let a = t as f64 * rho * rho / 4.0 + 1.0;
    rho * rho * s * s / (2.0 * a) - 0.5 * a.ln()
}

/// `ln M_t` of the folded-Gaussian mixture supermartingale.
pub fn one_sided_mixture_nsm(s: f64, t: u64, rho: f64) -> f64 {
    let a = t as f64 * rho * rho / 4.0 + 1.0;
    std::f64::consts::LN_2 - 0.5 * a.ln() + rho * rho * s * s / (2.0 * a) + ln_normal_cdf(rho * s / a.sqrt())
}

fn laplace_lower_path(
    records: &[PrivateRecord],
    schedule: &LambdaSchedule,
    alpha: f64,
) -> Result<Vec<(f64, f64)>> {
    let LambdaSchedule::Laplace { alpha: sched_alpha, c, n } = *schedule else {
        return Err(Error::Argument("Laplace bounds need a Laplace schedule".into()));
    };
    let mut inv_sum = 0.0;
    let mut lam_sum = 0.0;
    let mut lam_z = 0.0;
    let mut penalty = 0.0;
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let RecordParams::Laplace { epsilon } = rec.params else {
            return Err(Error::Argument(format!("record {} is not a Laplace record", rec.index)));
        };
        let t = i as u64 + 1;
        inv_sum += 0.125 + 1.0 / (epsilon * epsilon);
        let lambda = lambda_laplace(t, sched_alpha, c, epsilon, inv_sum, n);
        assert!(lambda < epsilon, "truncation must keep lambda below epsilon");
        lam_sum += lambda;
        lam_z += lambda * rec.z;
        penalty += lambda * lambda / 8.0 + laplace_cgf(lambda, epsilon)?;
        let est = lam_z / lam_sum;
        out.push((est, est - ((1.0 / alpha).ln() + penalty) / lam_sum));
    }
    Ok(out)
}

/// Laplace-Hoeffding CS with bounds clipped to `[0, 1]`.
pub fn laplace_hoeffding_cs(records: &[PrivateRecord], schedule: LambdaSchedule, alpha: f64) -> Result<BoundSeries> {
    laplace_hoeffding_cs_with(records, schedule, alpha, true)
}

pub fn laplace_hoeffding_cs_with(
    records: &[PrivateRecord],
    schedule: LambdaSchedule,
    alpha: f64,
    clip: bool,
) -> Result<BoundSeries> {
    check_alpha(alpha)?;
    check_indices(records)?;
    let lows = laplace_lower_path(records, &schedule, alpha)?;
    let highs = laplace_lower_path(&reflect(records), &schedule, alpha)?;
    let f = |x: f64| if clip { clip01(x) } else { x };
    let mut series = BoundSeries::new(alpha, MethodTag::LaplaceHoeffdingCs);
    for (i, ((est, lo), (_, hi))) in lows.into_iter().zip(highs).enumerate() {
        series.entries.push(BoundEntry { t: i as u64 + 1, estimate: f(est), lower: f(lo), upper: f(1.0 - hi) });
    }
    Ok(series)
}

/// Laplace-Hoeffding CI at sample size `n` with truncation scale `c`.
pub fn laplace_hoeffding_ci(records: &[PrivateRecord], n: u64, alpha: f64, c: f64) -> Result<BoundSeries> {
    if records.len() as u64 != n {
        return Err(Error::Argument(format!("expected {n} records, got {}", records.len())));
    }
    check_alpha(alpha)?;
    check_indices(records)?;
    let schedule = LambdaSchedule::Laplace { alpha, c, n: Some(n) };
    let lows = laplace_lower_path(records, &schedule, alpha)?;
    let highs = laplace_lower_path(&reflect(records), &schedule, alpha)?;
    let lower = clip01(lows.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
    let upper = clip01(1.0 - highs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
    let est = lows.last().map_or(0.5, |p| p.0);
    let mut series = BoundSeries::new(alpha, MethodTag::LaplaceHoeffdingCi);
    series.entries.push(BoundEntry { t: n, estimate: clamp_into(clip01(est), lower, upper), lower, upper });
    Ok(series)
}

fn bisect_down(f: &impl Fn(f64) -> f64, threshold: f64, mut out: f64, mut inside: f64, tol: f64) -> f64 {
    // Invariant: f(out) >= threshold > f(inside). Returns the outer end.
    while (inside - out).abs() > tol {
        let mid = 0.5 * (out + inside);
        if f(mid) < threshold {
            inside = mid;
        } else {
            out = mid;
        }
    }
    out
}

/// `inf {x ∈ [lo, hi] : f(x) < threshold}` for nonincreasing `f`, to within `tol`
/// and never inside the set. Returns `hi` when the set is empty.
pub fn invert_monotone(f: impl Fn(f64) -> f64, threshold: f64, lo: f64, hi: f64, tol: f64) -> f64 {
    invert_monotone_with(&f, threshold, lo, hi, tol, 1e-3)
}

pub fn invert_monotone_with(
    f: &impl Fn(f64) -> f64,
    threshold: f64,
    lo: f64,
    hi: f64,
    tol: f64,
    grid_step: f64,
) -> f64 {
    if f(lo) < threshold {
        return lo;
    }
    let steps = ((hi - lo) / grid_step).ceil().max(1.0) as usize;
    let mut prev = lo;
    for k in 1..=steps {
        let x = if k == steps { hi } else { lo + k as f64 * (hi - lo) / steps as f64 };
        if f(x) < threshold {
            return bisect_down(f, threshold, prev, x, tol);
        }
        prev = x;
    }
    hi
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd { (c, fc) } else { (d, fd) }
}

/// Sublevel set `{x ∈ [0, 1] : f(x) < threshold}` of a convex `f` as an
/// interval, widened outward by at most `tol`. `None` when empty.
pub fn convex_sublevel_interval(
    f: impl Fn(f64) -> f64,
    threshold: f64,
    settings: InversionSettings,
) -> Option<(f64, f64)> {
    let steps = (1.0 / settings.grid_step).round().max(2.0) as usize;
    let grid = |k: usize| k as f64 / steps as f64;
    let values: Vec<f64> = (0..=steps).map(|k| f(grid(k))).collect();
    let (kmin, vmin) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
    let inside = if vmin < threshold {
        grid(kmin)
    } else {
        let a = grid(kmin.saturating_sub(1));
        let b = grid((kmin + 1).min(steps));
        let (x, v) = golden_min(&f, a, b, settings.tol);
        if v < threshold {
            x
        } else {
            return None;
        }
    };
    let lower = if f(0.0) < threshold {
        0.0
    } else {
        let first = values.iter().position(|&v| v < threshold);
        match first {
            Some(k) if grid(k) <= inside => bisect_down(&f, threshold, grid(k - 1), grid(k), settings.tol),
            _ => {
                let k = (inside * steps as f64).floor() as usize;
                bisect_down(&f, threshold, grid(k), inside, settings.tol)
            }
        }
    };
    let upper = if f(1.0) < threshold {
        1.0
    } else {
        let last = values.iter().rposition(|&v| v < threshold);
        match last {
            Some(k) if grid(k) >= inside => bisect_down(&f, threshold, grid(k + 1), grid(k), settings.tol),
            _ => {
                let k = ((inside * steps as f64).ceil() as usize).min(steps);
                bisect_down(&f, threshold, grid(k), inside, settings.tol)
            }
        }
    };
    Some((lower, upper))
}

/// `ln 𝒦_{t,n}(μ)` of the predictable-mixture betting process over the
/// first `t` observations.
pub fn pmkelly_log_wealth(zs: &[f64], rs: &[f64], t: usize, n: u64, alpha: f64, c: f64, mu: f64) -> f64 {
    let mut state = VarianceState::new();
    let mut log_k = 0.0;
    for i in 0..t {
        let zeta_mu = zeta(mu, rs[i]);
        let lambda = lambda_betting_unclamped(&state, n, alpha).min(c / zeta_mu);
        log_k += (lambda * (zs[i] - zeta_mu)).ln_1p();
        state.update(zs[i]);
    }
    log_k
}

fn pmkelly_lower(zs: &[f64], rs: &[f64], n: u64, alpha: f64, c: f64, settings: InversionSettings) -> f64 {
    if alpha >= 1.0 || zs.is_empty() {
        return 0.0;
    }
    let threshold = (1.0 / alpha).ln();
    let steps = (1.0 / settings.grid_step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let mut log_k = vec![0.0f64; steps + 1];
    let mut state = VarianceState::new();
    // Grid index of the largest per-time lower bound seen so far, and the
    // time attaining it with the least margin below the threshold there.
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..zs.len() {
        let eta = lambda_betting_unclamped(&state, n, alpha);
        let (z, r) = (zs[i], rs[i]);
        let start = best.map_or(0, |b| b.0.saturating_sub(1));
        for k in start..=steps {
            let zeta_mu = zeta(grid[k], r);
            let lambda = eta.min(c / zeta_mu);
            log_k[k] += (lambda * (z - zeta_mu)).ln_1p();
        }
        state.update(z);
        let j = (start..=steps).find(|&k| log_k[k] < threshold).unwrap_or(steps + 1);
        let better = match best {
            None => true,
            Some((bj, _, margin)) => j > bj || (j == bj && j <= steps && log_k[j] > margin),
        };
        if better {
            let margin = if j <= steps { log_k[j] } else { f64::INFINITY };
            best = Some((j, i + 1, margin));
        }
    }
    let (j, t, _) = best.expect("non-empty stream");
    if j == 0 {
        return 0.0;
    }
    if j > steps {
        return 1.0;
    }
    let f = |mu: f64| pmkelly_log_wealth(zs, rs, t, n, alpha, c, mu);
    bisect_down(&f, threshold, grid[j - 1], grid[j], settings.tol)
}

fn z_and_r(records: &[PrivateRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut zs = Vec::with_capacity(records.len());
    let mut rs = Vec::with_capacity(records.len());
    for rec in records {
        zs.push(rec.z);
        rs.push(nprr_params(rec)?.r());
    }
    Ok((zs, rs))
}

fn plain_estimate(zs: &[f64], rs: &[f64]) -> f64 {
    let num: f64 = zs.iter().zip(rs).map(|(z, r)| z - (1.0 - r) / 2.0).sum();
    let den: f64 = rs.iter().sum();
    if den > 0.0 { num / den } else { 0.5 }
}

/// Predictable-mixture betting CI at sample size `n`, each side at `alpha`.
pub fn pmkelly_ci(records: &[PrivateRecord], n: u64, alpha: f64, c: f64) -> Result<BoundSeries> {
    pmkelly_ci_with(records, n, alpha, c, InversionSettings::default())
}

pub fn pmkelly_ci_with(
    records: &[PrivateRecord],
    n: u64,
    alpha: f64,
    c: f64,
    settings: InversionSettings,
) -> Result<BoundSeries> {
    if records.len() as u64 != n {
        return Err(Error::Argument(format!("expected {n} records, got {}", records.len())));
    }
    check_alpha(alpha)?;
    if !(c > 0.0 && c < 1.0) {
        return domain(format!("truncation scale c must lie in (0, 1), got {c}"));
    }
    check_indices(records)?;
    let (zs, rs) = z_and_r(records)?;
    let flipped: Vec<f64> = zs.iter().map(|z| 1.0 - z).collect();
    let lower = pmkelly_lower(&zs, &rs, n, alpha, c, settings);
    let upper = 1.0 - pmkelly_lower(&flipped, &rs, n, alpha, c, settings);
    let mut series = BoundSeries::new(alpha, MethodTag::PmKellyCi);
    series.entries.push(BoundEntry {
        t: n,
        estimate: clamp_into(clip01(plain_estimate(&zs, &rs)), lower, upper),
        lower,
        upper,
    });
    Ok(series)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if !m.is_finite() {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn ln_g_plus(z: f64, zeta_mu: f64, a: f64) -> f64 {
    if zeta_mu <= 0.0 {
        return if z > 0.0 { f64::INFINITY } else { (-a).ln_1p() };
    }
    (a * (z / zeta_mu - 1.0)).ln_1p()
}

fn ln_g_minus(z: f64, zeta_mu: f64, a: f64) -> f64 {
    if zeta_mu >= 1.0 {
        return if z < 1.0 { f64::INFINITY } else { (-a).ln_1p() };
    }
    (a * ((1.0 - z) / (1.0 - zeta_mu) - 1.0)).ln_1p()
}

/// Sufficient statistics for the grid Kelly process: counts of distinct
/// `(r, z)` pairs, which let `𝒦_t^GK(μ)` be evaluated at any `μ` cheaply.
#[derive(Debug, Clone)]
pub struct GridKellyAccumulator {
    d: u32,
    theta: f64,
    t: u64,
    groups: Vec<(f64, f64, f64)>,
    lookup: HashMap<(u64, u64), usize>,
}

impl GridKellyAccumulator {
    pub fn new(d: u32, theta: f64) -> Result<Self> {
        if d < 2 {
            return domain(format!("D must be at least 2, got {d}"));
        }
        if !(0.0..=1.0).contains(&theta) {
            return domain(format!("theta must lie in [0, 1], got {theta}"));
        }
        Ok(Self { d, theta, t: 0, groups: Vec::new(), lookup: HashMap::new() })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn push(&mut self, z: f64, r: f64) {
        self.t += 1;
        let key = (r.to_bits(), z.to_bits());
        let groups = &mut self.groups;
        let idx = *self.lookup.entry(key).or_insert_with(|| {
            groups.push((r, z, 0.0));
            groups.len() - 1
        });
        self.groups[idx].2 += 1.0;
    }

    /// `(ln 𝒦_t^+(μ), ln 𝒦_t^-(μ))`, each averaged over the `D` bets.
    pub fn log_components(&self, mu: f64) -> (f64, f64) {
        let d = self.d as usize;
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        for &(r, z, count) in &self.groups {
            let zeta_mu = zeta(mu, r);
            for k in 0..d {
                let a = (k + 1) as f64 / (d + 1) as f64;
                plus[k] += count * ln_g_plus(z, zeta_mu, a);
                minus[k] += count * ln_g_minus(z, zeta_mu, a);
            }
        }
        let ln_d = (d as f64).ln();
        (log_sum_exp(&plus) - ln_d, log_sum_exp(&minus) - ln_d)
    }

    pub fn log_wealth(&self, mu: f64) -> f64 {
        let (plus, minus) = self.log_components(mu);
        if self.theta >= 1.0 {
            plus
        } else if self.theta <= 0.0 {
            minus
        } else {
            log_add_exp(self.theta.ln() + plus, (1.0 - self.theta).ln() + minus)
        }
    }

    /// The confidence set at the current time, `None` if empty.
    pub fn interval(&self, alpha: f64, settings: InversionSettings) -> Option<(f64, f64)> {
        if self.t == 0 {
            return Some((0.0, 1.0));
        }
        convex_sublevel_interval(|mu| self.log_wealth(mu), (1.0 / alpha).ln(), settings)
    }

    pub fn plain_estimate(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &(r, z, count) in &self.groups {
            num += count * (z - (1.0 - r) / 2.0);
            den += count * r;
        }
        if den > 0.0 { num / den } else { 0.5 }
    }
}

fn entry_from_interval(t: u64, est: f64, set: Option<(f64, f64)>) -> BoundEntry {
    match set {
        Some((lower, upper)) => BoundEntry { t, estimate: clamp_into(clip01(est), lower, upper), lower, upper },
        None => BoundEntry { t, estimate: clip01(est), lower: 1.0, upper: 0.0 },
    }
}

/// Grid Kelly confidence sequence.
pub fn gridkelly_cs(records: &[PrivateRecord], d: u32, theta: f64, alpha: f64) -> Result<BoundSeries> {
    gridkelly_cs_with(records, d, theta, alpha, InversionSettings::default())
}

pub fn gridkelly_cs_with(
    records: &[PrivateRecord],
    d: u32,
    theta: f64,
    alpha: f64,
    settings: InversionSettings,
) -> Result<BoundSeries> {
    check_alpha(alpha)?;
    check_indices(records)?;
    let mut acc = GridKellyAccumulator::new(d, theta)?;
    let mut series = BoundSeries::new(alpha, MethodTag::GridKellyCs);
    for rec in records {
        acc.push(rec.z, nprr_params(rec)?.r());
        let set = acc.interval(alpha, settings);
        series.entries.push(entry_from_interval(acc.t(), acc.plain_estimate(), set));
    }
    Ok(series)
}

/// Running likelihood ratio of a plug-in alternative against Bernoulli
/// `ζ(p)` for randomized-response data.
#[derive(Debug, Clone, Default)]
pub struct SirrLrAccumulator {
    t: u64,
    sum_z: f64,
    log_plugin: f64,
    groups: Vec<(f64, f64, f64)>,
}

impl SirrLrAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Plug-in `ζ̂_{t-1} = (1/2 + Σ_{i<t} Z_i)/t` for the next observation.
    pub fn plugin(&self) -> f64 {
        (0.5 + self.sum_z) / (self.t as f64 + 1.0)
    }

    pub fn push(&mut self, z: f64, r: f64) -> Result<()> {
        if z != 0.0 && z != 1.0 {
            return domain(format!("likelihood-ratio CS needs binary records, got {z}"));
        }
        let q = self.plugin();
        self.log_plugin += if z == 1.0 { q.ln() } else { (1.0 - q).ln() };
        self.t += 1;
        self.sum_z += z;
        let slot = match self.groups.iter().position(|g| g.0 == r) {
            Some(i) => i,
            None => {
                self.groups.push((r, 0.0, 0.0));
                self.groups.len() - 1
            }
        };
        if z == 1.0 {
            self.groups[slot].1 += 1.0;
        } else {
            self.groups[slot].2 += 1.0;
        }
        Ok(())
    }

    /// `ln M_t^LR(p)`.
    pub fn log_martingale(&self, p: f64) -> f64 {
        let mut denom = 0.0;
        for &(r, ones, zeros) in &self.groups {
            let q = zeta(p, r);
            if ones > 0.0 {
                denom += ones * q.ln();
            }
            if zeros > 0.0 {
                denom += zeros * (1.0 - q).ln();
            }
        }
        self.log_plugin - denom
    }

    pub fn interval(&self, alpha: f64, settings: InversionSettings) -> Option<(f64, f64)> {
        if self.t == 0 {
            return Some((0.0, 1.0));
        }
        convex_sublevel_interval(|p| self.log_martingale(p), (1.0 / alpha).ln(), settings)
    }

    pub fn plain_estimate(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &(r, ones, zeros) in &self.groups {
            num += ones * (1.0 - (1.0 - r) / 2.0) - zeros * (1.0 - r) / 2.0;
            den += (ones + zeros) * r;
        }
        if den > 0.0 { num / den } else { 0.5 }
    }
}

/// Likelihood-ratio CS for the success probability behind randomized response.
pub fn sirr_lr_cs(records: &[PrivateRecord], alpha: f64) -> Result<BoundSeries> {
    sirr_lr_cs_with(records, alpha, InversionSettings::default())
}

pub fn sirr_lr_cs_with(records: &[PrivateRecord], alpha: f64, settings: InversionSettings) -> Result<BoundSeries> {
    check_alpha(alpha)?;
    check_indices(records)?;
    let mut acc = SirrLrAccumulator::new();
    let mut series = BoundSeries::new(alpha, MethodTag::SirrLrCs);
    for rec in records {
        let params = nprr_params(rec)?;
        if params.g() != 1 {
            return domain(format!("record {} has G={}, expected 1", rec.index, params.g()));
        }
        acc.push(rec.z, params.r())?;
        let set = acc.interval(alpha, settings);
        series.entries.push(entry_from_interval(acc.t(), acc.plain_estimate(), set));
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(zs: &[f64], r: f64, g: u32) -> Vec<PrivateRecord> {
        let p = PrivacyParams::new(r, g).unwrap();
        zs.iter().enumerate().map(|(i, &z)| PrivateRecord::nprr(i as u64 + 1, z, p)).collect()
    }

    #[test]
    fn zeta_examples() {
        assert_eq!(zeta(0.3, 1.0), 0.3);
        assert!((zeta(0.4, 0.5) - 0.45).abs() < 1e-15);
        assert_eq!(zeta(0.5, 0.37), 0.5);
    }

    #[test]
    fn hoeffding_half_width_example() {
        let recs = stream(&vec![0.5; 100], 1.0, 1);
        let sched = LambdaSchedule::FixedN { n: 100, alpha: 0.05 };
        let cs = hoeffding_cs(&recs, sched, 0.05).unwrap();
        let e = cs.last().unwrap();
        let half = (e.upper - e.lower) / 2.0;
        assert!((half - (20f64.ln() / 200.0).sqrt()).abs() < 1e-12);
        assert!((half - 0.1224).abs() < 1e-4);
    }

    #[test]
    fn hoeffding_ci_single_step() {
        let recs = stream(&[0.5], 1.0, 1);
        let ci = hoeffding_ci_with(&recs, 1, LambdaSchedule::Constant { lambda: 1.0 }, 1.0).unwrap();
        assert_eq!(ci.len(), 1);
        assert!((ci.entries[0].lower - 0.375).abs() < 1e-15);
        assert!(hoeffding_ci(&recs, 2, 0.1).is_err());
    }

    #[test]
    fn mixture_boundary_examples() {
        assert!((mixture_boundary_two_sided(100, 1.0, 0.28166, 0.05) - 0.1518).abs() < 1e-4);
        assert!((mixture_boundary_one_sided(100, 1.0, 0.28166, 0.05) - 0.1389).abs() < 1e-4);
    }

    #[test]
    fn nsm_examples() {
        assert!((two_sided_mixture_nsm(1.0, 1, 2.0) - (1.0 - 0.5 * 2f64.ln())).abs() < 1e-14);
        let a = 10.0f64 * 0.25 / 4.0 + 1.0;
        assert!((one_sided_mixture_nsm(0.0, 10, 0.5) + 0.5 * a.ln()).abs() < 1e-14);
        assert!(one_sided_mixture_nsm(-1e6, 10, 0.5).is_finite());
    }

    #[test]
    fn mixture_rejects_interactive_streams() {
        let mut recs = stream(&[1.0, 0.0, 1.0], 0.5, 1);
        recs[2] = PrivateRecord::nprr(3, 1.0, PrivacyParams::new(0.6, 1).unwrap());
        let cfg = MixtureConfig::two_sided(100, 0.05).unwrap();
        assert!(matches!(mixture_cs_two_sided(&recs, cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn invert_monotone_examples() {
        let x = invert_monotone(|x| 1.0 - x, 0.5, 0.0, 1.0, 1e-9);
        assert!((x - 0.5).abs() <= 1e-9);
        assert_eq!(invert_monotone(|_| 0.0, 0.5, 0.2, 1.0, 1e-9), 0.2);
        assert_eq!(invert_monotone(|_| 1.0, 0.5, 0.0, 1.0, 1e-9), 1.0);
    }

    #[test]
    fn gridkelly_lambda_example() {
        // D = 2, d = 1, ζ = 0.5: λ⁺ = 1/(3 · 0.5); one observation Z = 1.
        let mut acc = GridKellyAccumulator::new(2, 1.0).unwrap();
        acc.push(1.0, 1.0);
        let lam1 = 1.0 / (3.0 * 0.5);
        let lam2 = 2.0 / (3.0 * 0.5);
        let expected = ((1.0 + lam1 * 0.5) + (1.0 + lam2 * 0.5)) / 2.0;
        assert!((acc.log_wealth(0.5) - f64::ln(expected)).abs() < 1e-14);
    }

    #[test]
    fn sirr_lr_hand_example() {
        let mut acc = SirrLrAccumulator::new();
        acc.push(1.0, 1.0).unwrap();
        for p in [0.1, 0.3, 0.9] {
            assert!((acc.log_martingale(p) - (0.5 / p).ln()).abs() < 1e-14);
        }
        let (lo, hi) = acc.interval(0.1, InversionSettings::default()).unwrap();
        assert!((lo - 0.05).abs() < 1e-5);
        assert_eq!(hi, 1.0);
        assert!(acc.push(0.5, 1.0).is_err());
    }

    #[test]
    fn sirr_lr_empty_stream_is_everything() {
        let acc = SirrLrAccumulator::new();
        assert_eq!(acc.interval(0.05, InversionSettings::default()), Some((0.0, 1.0)));
    }

    #[test]
    fn pmkelly_all_ones_moves_up() {
        let n = 200;
        let recs = stream(&vec![1.0; n], 1.0, 1);
        let short = pmkelly_ci(&recs[..20].to_vec(), 20, 0.05, 0.8).unwrap();
        let long = pmkelly_ci(&recs, n as u64, 0.05, 0.8).unwrap();
        assert!(long.entries[0].lower > short.entries[0].lower);
        assert!(long.entries[0].lower > 0.9);
        let degenerate = pmkelly_ci(&recs, n as u64, 1.0, 0.8).unwrap();
        assert_eq!(degenerate.entries[0].lower, 0.0);
    }
}
