//! Local privacy mechanisms for data in `[0, 1]`.
//!
//! Three mechanisms are provided:
//!
//! * NPRR (nonparametric randomized response): stochastically round `x` onto
//!   the grid `{0, 1/G, ..., 1}`, keep the rounded value with probability `r`,
//!   and otherwise replace it with a uniform draw from the grid. It is
//!   `ε`-LDP with `ε = ln(1 + (G+1) r / (1-r))`.
//! * SIRR: Warner's randomized response for binary data, the `G = 1` case.
//! * Laplace: additive mean-zero Laplace noise with scale `1/ε`.
//!
//! All randomness flows through an explicit [`RandomSource`], so a fixed
//! `(seed, stream)` pair reproduces a privatized stream bit for bit.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Resolution of the `r` scan in [`tune_rg`].
pub const TUNE_R_STEP: f64 = 1e-3;
/// Largest granularity [`tune_rg`] will consider.
pub const TUNE_MAX_G: u32 = 1_000_000;

const GRID_EPS: f64 = 1e-9;

/// Parameters `(r, G)` of NPRR. The privacy level is derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    r: f64,
    #[serde(rename = "G")]
    g: u32,
}

impl PrivacyParams {
    pub fn new(r: f64, g: u32) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return domain(format!("r must lie in (0, 1], got {r}"));
        }
        if g == 0 {
            return domain("G must be at least 1");
        }
        Ok(Self { r, g })
    }

    /// Parameters achieving exactly `epsilon` at granularity `g`.
    pub fn for_epsilon(epsilon: f64, g: u32) -> Result<Self> {
        Self::new(r_of(epsilon, g)?, g)
    }

    /// The `r = 1` limit: no privacy, `ε = +∞`.
    pub fn non_private(g: u32) -> Result<Self> {
        Self::new(1.0, g)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn g(&self) -> u32 {
        self.g
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_of(self.r, self.g).unwrap_or(f64::INFINITY)
    }
}

/// Per-record mechanism parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "kebab-case")]
pub enum RecordParams {
    /// NPRR or SIRR (SIRR is NPRR with `G = 1` on binary input).
    Nprr(PrivacyParams),
    Laplace { epsilon: f64 },
}

/// One privatized observation `Z_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivateRecord {
    pub index: u64,
    pub z: f64,
    pub params: RecordParams,
}

impl PrivateRecord {
    pub fn nprr(index: u64, z: f64, params: PrivacyParams) -> Self {
        Self { index, z, params: RecordParams::Nprr(params) }
    }

    pub fn laplace(index: u64, z: f64, epsilon: f64) -> Self {
        Self { index, z, params: RecordParams::Laplace { epsilon } }
    }

    pub fn nprr_params(&self) -> Option<PrivacyParams> {
        match self.params {
            RecordParams::Nprr(p) => Some(p),
            RecordParams::Laplace { .. } => None,
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self.params {
            RecordParams::Nprr(p) => p.epsilon(),
            RecordParams::Laplace { epsilon } => epsilon,
        }
    }
}

/// Seeded randomness for the mechanisms and data generators.
///
/// The `stream` id selects an independent ChaCha stream under the same seed,
/// which is how replications get non-overlapping randomness.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn open_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform on `{0, ..., n}`.
    pub fn index_inclusive(&mut self, n: u32) -> u32 {
        self.rng.random_range(0..=n)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        domain(format!("input must lie in [0, 1], got {x}"))
    }
}

fn discretize_index(x: f64, g: u32, rng: &mut RandomSource) -> Result<u32> {
    check_unit(x)?;
    let gx = x * g as f64;
    let nearest = gx.round();
    if (gx - nearest).abs() <= GRID_EPS {
        return Ok(nearest as u32);
    }
    let floor = gx.floor();
    let up = rng.bernoulli(gx - floor);
    Ok(floor as u32 + u32::from(up))
}

/// Stochastic rounding of `x` onto `{0, 1/G, ..., 1}` preserving the mean.
pub fn discretize(x: f64, g: u32, rng: &mut RandomSource) -> Result<f64> {
    if g == 0 {
        return domain("G must be at least 1");
    }
    Ok(discretize_index(x, g, rng)? as f64 / g as f64)
}

/// Privatize one observation with NPRR.
pub fn nprr_privatize(
    x: f64,
    params: PrivacyParams,
    index: u64,
    rng: &mut RandomSource,
) -> Result<PrivateRecord> {
    let g = params.g();
    let y = discretize_index(x, g, rng)?;
    let k = if params.r() >= 1.0 || rng.bernoulli(params.r()) {
        y
    } else {
        rng.index_inclusive(g)
    };
    Ok(PrivateRecord::nprr(index, k as f64 / g as f64, params))
}

/// Privatize one binary observation with randomized response.
pub fn sirr_privatize(x: f64, r: f64, index: u64, rng: &mut RandomSource) -> Result<PrivateRecord> {
    if x != 0.0 && x != 1.0 {
        return domain(format!("randomized response needs binary input, got {x}"));
    }
    let params = PrivacyParams::new(r, 1)?;
    let z = if r >= 1.0 || rng.bernoulli(r) {
        x
    } else if rng.bernoulli(0.5) {
        1.0
    } else {
        0.0
    };
    Ok(PrivateRecord::nprr(index, z, params))
}

/// Laplace noise with scale `1/epsilon` from a single uniform `u ∈ (0, 1)`.
pub fn laplace_noise(u: f64, epsilon: f64) -> f64 {
    let d = u - 0.5;
    -d.signum() * (1.0 / epsilon) * (1.0 - 2.0 * d.abs()).ln()
}

/// Privatize one observation with the Laplace mechanism.
pub fn laplace_privatize(
    x: f64,
    epsilon: f64,
    index: u64,
    rng: &mut RandomSource,
) -> Result<PrivateRecord> {
    check_unit(x)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return domain(format!("epsilon must be finite and positive, got {epsilon}"));
    }
    let u = rng.open_uniform();
    Ok(PrivateRecord::laplace(index, x + laplace_noise(u, epsilon), epsilon))
}

/// Privatize a whole stream with fixed NPRR parameters, indexing from 1.
pub fn nprr_stream(xs: &[f64], params: PrivacyParams, rng: &mut RandomSource) -> Result<Vec<PrivateRecord>> {
    xs.iter()
        .enumerate()
        .map(|(i, &x)| nprr_privatize(x, params, i as u64 + 1, rng))
        .collect()
}

/// The LDP level of NPRR. Returns `+∞` when `r ≥ 1`.
pub fn epsilon_of(r: f64, g: u32) -> Result<f64> {
    if !(r > 0.0) || g == 0 {
        return domain(format!("need r > 0 and G >= 1, got r={r}, G={g}"));
    }
    if r >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(((g as f64 + 1.0) * r / (1.0 - r)).ln_1p())
}

/// The retention probability achieving `epsilon` at granularity `g`.
pub fn r_of(epsilon: f64, g: u32) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) || g == 0 {
        return domain(format!("need finite epsilon > 0 and G >= 1, got {epsilon}, {g}"));
    }
    // (e^ε − 1)/(e^ε + G) rewritten in e^{−ε} so that large ε cannot overflow.
    let em = (-epsilon).exp();
    Ok(-(-epsilon).exp_m1() / (1.0 + g as f64 * em))
}

fn grid_index(z: f64, g: u32) -> Result<u32> {
    let gz = z * g as f64;
    let k = gz.round();
    if (gz - k).abs() > GRID_EPS || k < 0.0 || k > g as f64 {
        return domain(format!("{z} is not on the grid with G={g}"));
    }
    Ok(k as u32)
}

/// Grid index `k` with `z = k/G`, or an error for off-grid values.
pub fn grid_position(z: f64, g: u32) -> Result<u32> {
    grid_index(z, g)
}

/// Exact probability of releasing `z` given input `x`.
pub fn conditional_pmf(z: f64, x: f64, params: PrivacyParams) -> Result<f64> {
    check_unit(x)?;
    let g = params.g();
    let k = grid_index(z, g)? as f64;
    let gx = x * g as f64;
    let nearest = gx.round();
    let p_y = if (gx - nearest).abs() <= GRID_EPS {
        if k == nearest { 1.0 } else { 0.0 }
    } else {
        let floor = gx.floor();
        if k == floor {
            floor + 1.0 - gx
        } else if k == floor + 1.0 {
            gx - floor
        } else {
            0.0
        }
    };
    let r = params.r();
    Ok((1.0 - r) / (g as f64 + 1.0) + r * p_y)
}

/// Which surrogate [`tune_rg_with`] minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyObjective {
    /// `(G-1) p0 log2 p0 + 2 p1 log2 p1`, exactly as stated (no leading minus).
    #[default]
    AsWritten,
    /// The conventional conditional entropy, i.e. the negated expression.
    SignCorrected,
}

/// Surrogate conditional entropy of NPRR output under uniform input.
pub fn surrogate_entropy(r: f64, g: u32, objective: EntropyObjective) -> f64 {
    let p0 = (1.0 - r) / (g as f64 + 1.0);
    let p1 = p0 + r / 2.0;
    let plogp = |p: f64| if p > 0.0 { p * p.log2() } else { 0.0 };
    let value = (g as f64 - 1.0) * plogp(p0) + 2.0 * plogp(p1);
    match objective {
        EntropyObjective::AsWritten => value,
        EntropyObjective::SignCorrected => -value,
    }
}

/// Choose `(r, G)` at privacy level `epsilon` with the as-written objective.
pub fn tune_rg(epsilon: f64) -> Result<PrivacyParams> {
    tune_rg_with(epsilon, EntropyObjective::AsWritten)
}

/// Scan `r` over `{0.001, ..., 0.999}`, map each to the real-valued
/// `G̃ = (e^ε - 1)(1 - r)/r - 1`, and score `⌊G̃⌋` and `⌈G̃⌉` with `r`
/// re-solved so that `ε` stays exact.
pub fn tune_rg_with(epsilon: f64, objective: EntropyObjective) -> Result<PrivacyParams> {
    let fallback = PrivacyParams::for_epsilon(epsilon, 1)?;
    let growth = epsilon.exp_m1();
    let steps = (1.0 / TUNE_R_STEP).round() as u32;
    let mut best: Option<(f64, PrivacyParams)> = None;
    for i in 1..steps {
        let r = i as f64 * TUNE_R_STEP;
        let g_real = growth * (1.0 - r) / r - 1.0;
        if !(g_real >= 1.0) {
            continue;
        }
        let lo = g_real.floor().min(TUNE_MAX_G as f64) as u32;
        let hi = g_real.ceil().min(TUNE_MAX_G as f64) as u32;
        for g in [lo, hi] {
            let candidate = PrivacyParams::for_epsilon(epsilon, g)?;
            let value = surrogate_entropy(candidate.r(), g, objective);
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, candidate));
            }
        }
    }
    Ok(best.map_or(fallback, |(_, p)| p))
}

impl std::fmt::Display for PrivacyParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r={} G={} epsilon={}", self.r, self.g, self.epsilon())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn epsilon_examples() {
        assert!(close(epsilon_of(0.5, 1).unwrap(), 3f64.ln(), 1e-12));
        assert!(close(epsilon_of(0.5, 3).unwrap(), 5f64.ln(), 1e-12));
        assert!(close(epsilon_of(0.7616, 1).unwrap(), 2.0, 1e-3));
        assert_eq!(epsilon_of(1.0, 4).unwrap(), f64::INFINITY);
    }

    #[test]
    fn r_examples() {
        assert!(close(r_of(2.0, 1).unwrap(), 0.7616, 5e-5));
        assert!(close(r_of(3f64.ln(), 1).unwrap(), 0.5, 1e-12));
        assert!(close(r_of(4.0, 1).unwrap(), 0.9640, 5e-5));
        assert!(r_of(0.0, 1).is_err());
        assert!(r_of(800.0, 1).unwrap() <= 1.0);
    }

    #[test]
    fn pmf_examples() {
        let p = PrivacyParams::new(0.5, 1).unwrap();
        assert!(close(conditional_pmf(1.0, 1.0, p).unwrap(), 0.75, 1e-15));
        assert!(close(conditional_pmf(0.0, 0.5, p).unwrap(), 0.5, 1e-15));
        assert!(conditional_pmf(0.5, 0.5, p).is_err());
    }

    #[test]
    fn discretize_gridpoint_is_deterministic() {
        let mut rng = RandomSource::new(1, 0);
        for _ in 0..100 {
            assert_eq!(discretize(0.5, 2, &mut rng).unwrap(), 0.5);
            assert_eq!(discretize(0.3, 10, &mut rng).unwrap(), 0.3);
        }
        assert!(discretize(1.2, 2, &mut rng).is_err());
    }

    #[test]
    fn discretize_weights() {
        let mut rng = RandomSource::new(7, 0);
        let n = 200_000;
        let ups = (0..n).filter(|_| discretize(0.3, 4, &mut rng).unwrap() == 0.5).count();
        let p = ups as f64 / n as f64;
        assert!((p - 0.2).abs() < 4.0 * (0.2f64 * 0.8 / n as f64).sqrt());
    }

    #[test]
    fn laplace_inverse_cdf() {
        assert!(close(laplace_noise(0.9, 2.0), 0.8047, 1e-4));
        assert_eq!(laplace_noise(0.5, 2.0), 0.0);
        assert!(close(laplace_noise(0.1, 2.0), -0.8047, 1e-4));
    }

    #[test]
    fn sirr_rejects_nonbinary() {
        let mut rng = RandomSource::new(0, 0);
        assert!(sirr_privatize(0.5, 0.5, 1, &mut rng).is_err());
        assert_eq!(sirr_privatize(1.0, 1.0, 1, &mut rng).unwrap().z, 1.0);
    }

    #[test]
    fn tune_as_written_at_g1_is_minus_one() {
        for r in [0.1, 0.5, 0.9] {
            assert!(close(surrogate_entropy(r, 1, EntropyObjective::AsWritten), -1.0, 1e-12));
        }
    }

    #[test]
    fn tune_keeps_epsilon_exact() {
        for eps in [0.5, 1.0, 2.0, 4.0, 8.0] {
            for obj in [EntropyObjective::AsWritten, EntropyObjective::SignCorrected] {
                let p = tune_rg_with(eps, obj).unwrap();
                assert!((p.epsilon() - eps).abs() <= 1e-9, "{eps} {obj:?} {p}");
            }
        }
    }

    #[test]
    fn tune_sign_corrected_small_epsilon_is_binary() {
        let p = tune_rg_with(0.5, EntropyObjective::SignCorrected).unwrap();
        assert_eq!(p.g(), 1);
    }

    #[test]
    fn tune_as_written_prefers_small_r() {
        let p = tune_rg(2.0).unwrap();
        assert!(p.g() > 1000);
        assert!(p.r() < 0.002);
    }
}
