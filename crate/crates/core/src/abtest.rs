//! Locally private online A/B testing.
//!
//! Each subject is assigned to treatment with probability `π`. The outcome
//! and arm are folded into an inverse-probability-weighted pseudo-outcome
//! `φ ∈ [0, 1]`, which is privatized with binary randomized response. The
//! running average treatment effect `Δ̃_t` is an affine image of the running
//! mean of `φ`, so the mixture bounds carry over directly.

use serde::{Deserialize, Serialize};

use crate::confseq::{
    mixture_boundary_one_sided, mixture_boundary_two_sided, one_sided_mixture_nsm, BoundEntry, BoundSeries,
    MethodTag,
};
use crate::eprocess::EProcessSeries;
use crate::error::{domain, Error, Result};
use crate::mechanisms::{nprr_privatize, PrivacyParams, RandomSource};
use crate::schedules::{beta_opt, check_alpha};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ABConfig {
    pub pi: f64,
    pub mechanism: PrivacyParams,
    pub alpha: f64,
    pub beta: f64,
}

impl ABConfig {
    pub fn new(pi: f64, mechanism: PrivacyParams, alpha: f64, beta: f64) -> Result<Self> {
        check_pi(pi)?;
        check_alpha(alpha)?;
        if mechanism.g() != 1 {
            return domain(format!("A/B mechanism needs G = 1, got {}", mechanism.g()));
        }
        if !(beta > 0.0) {
            return domain(format!("beta must be positive, got {beta}"));
        }
        Ok(Self { pi, mechanism, alpha, beta })
    }

    /// `r = r_of(ε, 1)` and the one-sided β tuned at `t0`.
    pub fn for_epsilon(pi: f64, epsilon: f64, alpha: f64, t0: u64) -> Result<Self> {
        check_alpha(alpha)?;
        Self::new(pi, PrivacyParams::for_epsilon(epsilon, 1)?, alpha, beta_opt(t0, 2.0 * alpha))
    }

    fn scale(&self) -> f64 {
        1.0 / self.pi + 1.0 / (1.0 - self.pi)
    }

    fn offset(&self) -> f64 {
        1.0 / (1.0 - self.pi)
    }

    /// Map a mean on the pseudo-outcome scale to a treatment effect.
    pub fn to_effect(&self, phi: f64) -> f64 {
        -self.offset() + self.scale() * phi
    }

    /// The pseudo-outcome mean corresponding to zero effect.
    pub fn null_phi(&self) -> f64 {
        self.offset() / self.scale()
    }
}

/// A privatized pseudo-outcome with its arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ABRecord {
    pub index: u64,
    pub a: u8,
    pub psi: f64,
}

fn check_pi(pi: f64) -> Result<()> {
    if pi > 0.0 && pi < 1.0 {
        Ok(())
    } else {
        domain(format!("assignment probability must lie in (0, 1), got {pi}"))
    }
}

/// `φ = (f + 1/(1-π)) / (1/π + 1/(1-π))` with `f = x a/π - x (1-a)/(1-π)`.
pub fn pseudo_outcome(x: f64, a: u8, pi: f64) -> Result<f64> {
    check_pi(pi)?;
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("outcome must lie in [0, 1], got {x}"));
    }
    if a > 1 {
        return domain(format!("arm must be 0 or 1, got {a}"));
    }
    let a = a as f64;
    let f = x * a / pi - x * (1.0 - a) / (1.0 - pi);
    Ok(((f + 1.0 / (1.0 - pi)) / (1.0 / pi + 1.0 / (1.0 - pi))).clamp(0.0, 1.0))
}

/// Privatize one `(x, a)` pair.
pub fn privatize_ab(x: f64, a: u8, config: &ABConfig, index: u64, rng: &mut RandomSource) -> Result<ABRecord> {
    let phi = pseudo_outcome(x, a, config.pi)?;
    let rec = nprr_privatize(phi, config.mechanism, index, rng)?;
    Ok(ABRecord { index, a, psi: rec.z })
}

fn phi_hat_path(records: &[ABRecord], config: &ABConfig) -> Result<Vec<f64>> {
    let r = config.mechanism.r();
    let mut sum = 0.0;
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            if rec.index != i as u64 + 1 {
                return Err(Error::Contract(format!("record indices must run 1, 2, ...; found {}", rec.index)));
            }
            if rec.psi != 0.0 && rec.psi != 1.0 {
                return domain(format!("record {} has non-binary psi {}", rec.index, rec.psi));
            }
            sum += rec.psi - (1.0 - r) / 2.0;
            Ok(sum / ((i as f64 + 1.0) * r))
        })
        .collect()
}

/// Lower CS for the running average treatment effect.
pub fn ab_lower_cs(records: &[ABRecord], config: &ABConfig) -> Result<BoundSeries> {
    let r = config.mechanism.r();
    let path = phi_hat_path(records, config)?;
    let mut series = BoundSeries::new(config.alpha, MethodTag::AbLowerCs);
    for (i, phi) in path.into_iter().enumerate() {
        let t = i as u64 + 1;
        let b = mixture_boundary_one_sided(t, r, config.beta, config.alpha);
        let lower = config.to_effect((phi - b).clamp(0.0, 1.0));
        let estimate = config.to_effect(phi.clamp(0.0, 1.0)).max(lower);
        series.entries.push(BoundEntry { t, estimate, lower, upper: 1.0 / config.pi });
    }
    Ok(series)
}

/// Two-sided CS for the running average treatment effect.
pub fn ab_two_sided_cs(records: &[ABRecord], config: &ABConfig) -> Result<BoundSeries> {
    let r = config.mechanism.r();
    let path = phi_hat_path(records, config)?;
    let mut series = BoundSeries::new(config.alpha, MethodTag::AbTwoSidedCs);
    for (i, phi) in path.into_iter().enumerate() {
        let t = i as u64 + 1;
        let b = mixture_boundary_two_sided(t, r, config.beta, config.alpha);
        series.entries.push(BoundEntry {
            t,
            estimate: config.to_effect(phi.clamp(0.0, 1.0)),
            lower: config.to_effect((phi - b).clamp(0.0, 1.0)),
            upper: config.to_effect((phi + b).clamp(0.0, 1.0)),
        });
    }
    Ok(series)
}

/// e-process for the weak null that the running average effect is `≤ 0`
/// at every time.
pub fn weak_null_eprocess(records: &[ABRecord], config: &ABConfig) -> Result<EProcessSeries> {
    let r = config.mechanism.r();
    phi_hat_path(records, config)?;
    let rho = 2.0 * config.beta;
    let null_phi = config.null_phi();
    let mut sum = 0.0;
    let values: Vec<f64> = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let t = i as u64 + 1;
            sum += rec.psi - (1.0 - r) / 2.0;
            one_sided_mixture_nsm(sum - t as f64 * r * null_phi, t, rho)
        })
        .collect();
    Ok(EProcessSeries::from_log_values(values))
}

/// `Δ_t = 1.8 (e^{t/300}/(1 + e^{t/300}) - 1/2)`
pub fn delta_path_fig5(t: u64) -> f64 {
    let x = t as f64 / 300.0;
    1.8 * (1.0 / (1.0 + (-x).exp()) - 0.5)
}

/// `Δ̃_t = (1/t) Σ_{i≤t} Δ_i` by direct summation.
pub fn delta_running_average_fig5(t: u64) -> f64 {
    if t == 0 {
        return 0.0;
    }
    (1..=t).map(delta_path_fig5).sum::<f64>() / t as f64
}

/// First `t ≤ horizon` at which `Δ̃_t` changes sign relative to `Δ̃_{t-1}`.
pub fn first_sign_change_fig5(horizon: u64) -> Option<u64> {
    let mut sum = 0.0;
    let mut prev_sign = 0.0;
    for t in 1..=horizon {
        sum += delta_path_fig5(t);
        let sign = (sum / t as f64).signum();
        if t > 1 && sign != prev_sign {
            return Some(t);
        }
        prev_sign = sign;
    }
    None
}
