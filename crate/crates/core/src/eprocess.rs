//! Sequential tests, anytime p-values and e-processes.
//!
//! A confidence sequence yields a level-α sequential test by rejecting as soon
//! as the set is disjoint from the null. Conversely the supermartingales
//! behind each bound, evaluated at the null, are e-processes whose reciprocals
//! are anytime-valid p-values.

use serde::{Deserialize, Serialize};

use crate::confseq::{constant_params, one_sided_mixture_nsm, two_sided_mixture_nsm, zeta, BoundEntry, BoundSeries};
use crate::error::{domain, Error, Result};
use crate::mechanisms::PrivateRecord;
use crate::schedules::{LambdaSchedule, MixtureConfig};

/// A null hypothesis about the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NullSpec {
    Point { mu0: f64 },
    /// `μ ≤ mu0`
    OneSidedLe { mu0: f64 },
    /// `μ ≥ mu0`
    OneSidedGe { mu0: f64 },
    Interval { lo: f64, hi: f64 },
}

impl NullSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| (0.0..=1.0).contains(&x);
        let valid = match *self {
            NullSpec::Point { mu0 } | NullSpec::OneSidedLe { mu0 } | NullSpec::OneSidedGe { mu0 } => ok(mu0),
            NullSpec::Interval { lo, hi } => ok(lo) && ok(hi) && lo <= hi,
        };
        if valid {
            Ok(())
        } else {
            domain(format!("null {self:?} must lie within [0, 1]"))
        }
    }

    /// The null as a closed subset `[lo, hi]` of `[0, 1]`.
    pub fn as_interval(&self) -> (f64, f64) {
        match *self {
            NullSpec::Point { mu0 } => (mu0, mu0),
            NullSpec::OneSidedLe { mu0 } => (0.0, mu0),
            NullSpec::OneSidedGe { mu0 } => (mu0, 1.0),
            NullSpec::Interval { lo, hi } => (lo, hi),
        }
    }

    pub fn is_disjoint(&self, entry: &BoundEntry) -> bool {
        if entry.is_empty() {
            return true;
        }
        let (lo, hi) = self.as_interval();
        entry.upper < lo || entry.lower > hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub rejected: bool,
    pub first_rejection_time: Option<u64>,
    pub alpha: f64,
}

/// Reject at the first time the confidence set misses the null.
pub fn test_via_cs(bounds: &BoundSeries, null: NullSpec) -> Result<TestDecision> {
    null.validate()?;
    let first = bounds.entries.iter().find(|e| null.is_disjoint(e)).map(|e| e.t);
    Ok(TestDecision { rejected: first.is_some(), first_rejection_time: first, alpha: bounds.alpha })
}

const P_FLOOR: f64 = 1e-10;

/// `inf {α : C_t(α) ∩ Θ0 = ∅}` by bisection over `α ∈ [1e-10, 1]`.
///
/// `factory` must return sets that shrink as α grows; a violation observed
/// during the search is reported as a contract error.
pub fn anytime_p_via_cs<F>(factory: F, null: NullSpec, t: u64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<BoundSeries>,
{
    null.validate()?;
    let set_at = |alpha: f64| -> Result<BoundEntry> {
        let series = factory(alpha)?;
        series
            .at(t)
            .copied()
            .ok_or_else(|| Error::Argument(format!("series at alpha={alpha} has no entry at t={t}")))
    };
    let nested = |wide: &BoundEntry, narrow: &BoundEntry| {
        narrow.is_empty() || (wide.lower <= narrow.lower + 1e-12 && narrow.upper <= wide.upper + 1e-12)
    };
    let mut lo_alpha = P_FLOOR;
    let mut hi_alpha = 1.0;
    let mut lo_set = set_at(lo_alpha)?;
    let mut hi_set = set_at(hi_alpha)?;
    if !nested(&lo_set, &hi_set) {
        return Err(Error::Contract("confidence sets are not nested in alpha".into()));
    }
    if null.is_disjoint(&lo_set) {
        return Ok(P_FLOOR);
    }
    if !null.is_disjoint(&hi_set) {
        return Ok(1.0);
    }
    while hi_alpha - lo_alpha > tol {
        let mid = 0.5 * (lo_alpha + hi_alpha);
        let mid_set = set_at(mid)?;
        if !nested(&lo_set, &mid_set) || !nested(&mid_set, &hi_set) {
            return Err(Error::Contract("confidence sets are not nested in alpha".into()));
        }
        if null.is_disjoint(&mid_set) {
            hi_alpha = mid;
            hi_set = mid_set;
        } else {
            lo_alpha = mid;
            lo_set = mid_set;
        }
    }
    Ok(hi_alpha)
}

/// One step of an e-process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EProcessState {
    pub t: u64,
    pub log_e: f64,
    /// `min_{s ≤ t} min(1, 1/E_s)`
    pub running_min_inv: f64,
}

impl EProcessState {
    pub fn e_value(&self) -> f64 {
        self.log_e.exp()
    }

    /// `p̄_t = min(1, 1/E_t)`
    pub fn p_value(&self) -> f64 {
        (-self.log_e).exp().min(1.0)
    }
}

/// An e-process path together with its level-α test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EProcessSeries {
    pub states: Vec<EProcessState>,
}

impl EProcessSeries {
    pub fn from_log_values(log_values: impl IntoIterator<Item = f64>) -> Self {
        let mut running = 1.0f64;
        let states = log_values
            .into_iter()
            .enumerate()
            .map(|(i, log_e)| {
                running = running.min((-log_e).exp().min(1.0));
                EProcessState { t: i as u64 + 1, log_e, running_min_inv: running }
            })
            .collect();
        Self { states }
    }

    /// `E_τ`, an e-value for any stopping time `τ`. `E_0 = 1`.
    pub fn e_value_at(&self, tau: u64) -> Option<f64> {
        if tau == 0 {
            return Some(1.0);
        }
        self.states.get(tau as usize - 1).map(EProcessState::e_value)
    }

    /// `ṗ_n = min_{t ≤ n} 1/E_t`, capped at 1.
    pub fn fixed_n_p_value(&self, n: u64) -> Option<f64> {
        if n == 0 {
            return Some(1.0);
        }
        self.states.get(n as usize - 1).map(|s| s.running_min_inv)
    }

    /// Reject once `E_t ≥ 1/α`.
    pub fn decision(&self, alpha: f64) -> TestDecision {
        let threshold = (1.0 / alpha).ln();
        let first = self.states.iter().find(|s| s.log_e >= threshold).map(|s| s.t);
        TestDecision { rejected: first.is_some(), first_rejection_time: first, alpha }
    }
}

/// `ln E_t = Σ [λ_i (Z_i - ζ_i(μ0)) - λ_i²/8]`
pub fn eprocess_hoeffding(records: &[PrivateRecord], schedule: LambdaSchedule, mu0: f64) -> Result<EProcessSeries> {
    NullSpec::Point { mu0 }.validate()?;
    let mut log_e = 0.0;
    let mut values = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let r = rec
            .nprr_params()
            .ok_or_else(|| Error::Argument(format!("record {} is not an NPRR record", rec.index)))?
            .r();
        let lambda = schedule.hoeffding_lambda(i as u64 + 1)?;
        log_e += lambda * (rec.z - zeta(mu0, r)) - lambda * lambda / 8.0;
        values.push(log_e);
    }
    Ok(EProcessSeries::from_log_values(values))
}

/// Mixture e-process for a null about the running-average mean.
///
/// One-sided nulls use the folded-Gaussian mixture evaluated at the null
/// boundary; point and interval nulls use the two-sided mixture, minimized
/// over the null.
pub fn eprocess_mixture(records: &[PrivateRecord], config: MixtureConfig, null: NullSpec) -> Result<EProcessSeries> {
    null.validate()?;
    if records.is_empty() {
        return Ok(EProcessSeries { states: Vec::new() });
    }
    let r = constant_params(records)?.r();
    let rho = config.rho();
    let mut sum = 0.0;
    let mut values = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let t = i as u64 + 1;
        sum += rec.z - (1.0 - r) / 2.0;
        // S_t(μ) = Σ (Z_i - (1-r)/2) - t r μ
        let s_at = |mu: f64| sum - t as f64 * r * mu;
        let log_e = match null {
            NullSpec::OneSidedLe { mu0 } => one_sided_mixture_nsm(s_at(mu0), t, rho),
            NullSpec::OneSidedGe { mu0 } => one_sided_mixture_nsm(-s_at(mu0), t, rho),
            NullSpec::Point { mu0 } => two_sided_mixture_nsm(s_at(mu0), t, rho),
            NullSpec::Interval { lo, hi } => {
                let (s_lo, s_hi) = (s_at(lo), s_at(hi));
                let s = if s_lo >= 0.0 && s_hi <= 0.0 { 0.0 } else { s_lo.abs().min(s_hi.abs()) };
                two_sided_mixture_nsm(s, t, rho)
            }
        };
        values.push(log_e);
    }
    Ok(EProcessSeries::from_log_values(values))
}
