//! Tuning sequences and scalar special functions.
//!
//! Covers the λ schedules for Hoeffding-type and betting bounds, the mixture
//! parameter β, the standard normal CDF and the Laplace cumulant generating
//! function.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Truncation scale for the predictable-mixture betting CI.
pub const DEFAULT_BETTING_C: f64 = 0.8;
/// Truncation scale for Laplace-Hoeffding bounds.
pub const DEFAULT_LAPLACE_C: f64 = 0.1;

/// A rule producing `λ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LambdaSchedule {
    /// The same λ at every step.
    Constant { lambda: f64 },
    /// `√(8 ln(1/α)/n)`, tight at sample size `n`.
    FixedN { n: u64, alpha: f64 },
    /// `√(8 ln(1/α)/(t ln(t+1))) ∧ 1`.
    TimeUniform { alpha: f64 },
    /// Variance-adaptive bets, see [`lambda_betting`].
    BettingPredictable { n: u64, alpha: f64, c: f64 },
    /// Laplace-Hoeffding bets, see [`lambda_laplace`]. `n` selects the
    /// fixed-sample variant.
    Laplace { alpha: f64, c: f64, n: Option<u64> },
}

impl LambdaSchedule {
    /// λ_t for the schedules that depend on `t` only.
    pub fn hoeffding_lambda(&self, t: u64) -> Result<f64> {
        match *self {
            LambdaSchedule::Constant { lambda } => Ok(lambda),
            LambdaSchedule::FixedN { n, alpha } => Ok(lambda_fixed_n(n, alpha)),
            LambdaSchedule::TimeUniform { alpha } => Ok(lambda_time_uniform(t, alpha)),
            other => Err(Error::Argument(format!(
                "{other:?} is data dependent and has no closed-form λ_t"
            ))),
        }
    }
}

pub fn lambda_fixed_n(n: u64, alpha: f64) -> f64 {
    (8.0 * (1.0 / alpha).ln() / n as f64).sqrt()
}

pub fn lambda_time_uniform(t: u64, alpha: f64) -> f64 {
    let t = t as f64;
    (8.0 * (1.0 / alpha).ln() / (t * (t + 1.0).ln())).sqrt().min(1.0)
}

/// Running empirical mean and variance with the `1/2` and `1/4` priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceState {
    pub t: u64,
    pub sum_z: f64,
    pub sum_sq_dev: f64,
    pub zeta_hat: f64,
    pub gamma_sq_hat: f64,
}

impl Default for VarianceState {
    fn default() -> Self {
        Self { t: 0, sum_z: 0.0, sum_sq_dev: 0.0, zeta_hat: 0.5, gamma_sq_hat: 0.25 }
    }
}

impl VarianceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, z: f64) {
        self.t += 1;
        let denom = self.t as f64 + 1.0;
        self.sum_z += z;
        self.zeta_hat = (0.5 + self.sum_z) / denom;
        let dev = z - self.zeta_hat;
        self.sum_sq_dev += dev * dev;
        self.gamma_sq_hat = (0.25 + self.sum_sq_dev) / denom;
    }

    pub fn from_slice(zs: &[f64]) -> Self {
        let mut s = Self::new();
        for &z in zs {
            s.update(z);
        }
        s
    }
}

/// The μ-free part of the betting λ: `√(2 ln(1/α)/(γ̂²_{t-1} n))`.
pub fn lambda_betting_unclamped(state: &VarianceState, n: u64, alpha: f64) -> f64 {
    (2.0 * (1.0 / alpha).ln() / (state.gamma_sq_hat * n as f64)).sqrt()
}

/// `λ_{t,n}(μ)`. `state` must summarize observations strictly before `t`.
pub fn lambda_betting(state: &VarianceState, n: u64, alpha: f64, c: f64, zeta_at_mu: f64) -> f64 {
    lambda_betting_unclamped(state, n, alpha).min(c / zeta_at_mu)
}

/// Laplace-Hoeffding λ_t. `inv_sum` is `Σ_{i≤t} (1/8 + 1/ε_i²)`.
pub fn lambda_laplace(t: u64, alpha: f64, c: f64, epsilon_t: f64, inv_sum: f64, n: Option<u64>) -> f64 {
    let log_inv = (1.0 / alpha).ln();
    let raw = match n {
        Some(n) => (log_inv / (n as f64 / t as f64 * inv_sum)).sqrt(),
        None => (log_inv / (inv_sum * (t as f64 + 1.0).ln())).sqrt(),
    };
    raw.min(c * epsilon_t)
}

/// The mixture parameter optimizing the two-sided boundary near `t0`.
pub fn beta_opt(t0: u64, alpha: f64) -> f64 {
    let l = alpha.ln();
    let inner = -2.0 * l + 1.0 - alpha * alpha;
    assert!(inner > 0.0, "beta_opt: alpha must lie in (0, 1)");
    ((-alpha * alpha - 2.0 * l + inner.ln()) / t0 as f64).sqrt()
}

/// Parameters of the sub-Gaussian mixture bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub beta: f64,
    pub alpha: f64,
    pub t0: Option<u64>,
}

impl MixtureConfig {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return domain(format!("beta must be positive, got {beta}"));
        }
        check_alpha(alpha)?;
        Ok(Self { beta, alpha, t0: None })
    }

    /// β tuned for the two-sided boundary at `t0`.
    pub fn two_sided(t0: u64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { beta: beta_opt(t0, alpha), alpha, t0: Some(t0) })
    }

    /// β tuned for the one-sided boundary at `t0`, using `β_{2α}(t0)`.
    pub fn one_sided(t0: u64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if 2.0 * alpha >= 1.0 {
            return domain("one-sided tuning needs alpha < 1/2");
        }
        Ok(Self { beta: beta_opt(t0, 2.0 * alpha), alpha, t0: Some(t0) })
    }

    /// `ρ = 2β`, the Gaussian mixing scale of the underlying supermartingales.
    pub fn rho(&self) -> f64 {
        2.0 * self.beta
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        domain(format!("alpha must lie in (0, 1], got {alpha}"))
    }
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * libm::erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > -30.0 {
        normal_cdf(x).ln()
    } else {
        // Mills-ratio expansion: Φ(x) ≈ φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸).
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2);
        -0.5 * x2 - 0.5 * (2.0 * std::f64::consts::PI).ln() - (-x).ln() + series.ln()
    }
}

/// `ψ(λ) = -ln(1 - λ²/ε²)`, the CGF of Laplace noise with scale `1/ε`.
pub fn laplace_cgf(lambda: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return domain(format!("epsilon must be positive, got {epsilon}"));
    }
    let ratio = lambda / epsilon;
    if !(lambda.abs() < epsilon) {
        return domain(format!("lambda {lambda} must be below epsilon {epsilon}"));
    }
    Ok(-(-ratio * ratio).ln_1p())
}
