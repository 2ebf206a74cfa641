//! Monte Carlo engine: generate, privatize, infer, aggregate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abtest::{ab_lower_cs, ab_two_sided_cs, privatize_ab, weak_null_eprocess, ABConfig, ABRecord};
use crate::confseq::{
    hoeffding_ci, hoeffding_cs, laplace_hoeffding_ci, laplace_hoeffding_cs, mixture_cs_lower,
    mixture_cs_two_sided, pmkelly_ci, BoundEntry, BoundSeries, GridKellyAccumulator, InversionSettings,
    SirrLrAccumulator,
};
use crate::eprocess::{eprocess_hoeffding, eprocess_mixture, EProcessSeries, NullSpec};
use crate::error::{Error, Result};
use crate::mechanisms::{
    laplace_privatize, nprr_privatize, sirr_privatize, tune_rg_with, EntropyObjective, PrivacyParams, PrivateRecord,
    RandomSource,
};
use crate::schedules::{beta_opt, LambdaSchedule, MixtureConfig};

use super::config::{ExperimentConfig, MechanismConfig, MechanismKind, MethodConfig};
use super::generate::{generate, RawStream};

/// One aggregated line of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub t: u64,
    pub method: String,
    pub mean_width: f64,
    pub empirical_miscoverage: f64,
    pub mean_lower: f64,
    pub mean_upper: f64,
    pub replications: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// A mechanism with its parameters fully resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedMechanism {
    Nprr(PrivacyParams),
    Sirr(PrivacyParams),
    Laplace(f64),
}

/// Fill in defaults: `G = 1` for Hoeffding-type and mixture methods, the
/// sign-corrected entropy tuning for variance-adaptive ones.
pub fn resolve_mechanism(mech: &MechanismConfig, method: &MethodConfig) -> Result<ResolvedMechanism> {
    match mech.kind {
        MechanismKind::Laplace => {
            let eps = mech.epsilon.ok_or_else(|| Error::Config("Laplace needs epsilon".into()))?;
            Ok(ResolvedMechanism::Laplace(eps))
        }
        MechanismKind::Nprr | MechanismKind::Sirr => {
            let params = match (mech.r, mech.epsilon) {
                (Some(r), _) => PrivacyParams::new(r, mech.g.unwrap_or(1))?,
                (None, Some(eps)) if eps.is_finite() => {
                    let g = match mech.g {
                        Some(g) => g,
                        None if method.is_variance_adaptive() && mech.kind == MechanismKind::Nprr => {
                            tune_rg_with(eps, EntropyObjective::SignCorrected)?.g()
                        }
                        None => 1,
                    };
                    PrivacyParams::for_epsilon(eps, g)?
                }
                _ => PrivacyParams::non_private(mech.g.unwrap_or(1))?,
            };
            Ok(if mech.kind == MechanismKind::Sirr {
                ResolvedMechanism::Sirr(params)
            } else {
                ResolvedMechanism::Nprr(params)
            })
        }
    }
}

/// Privatize a scalar stream, indexing from 1.
pub fn privatize_values(xs: &[f64], mech: ResolvedMechanism, rng: &mut RandomSource) -> Result<Vec<PrivateRecord>> {
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let index = i as u64 + 1;
            match mech {
                ResolvedMechanism::Nprr(p) => nprr_privatize(x, p, index, rng),
                ResolvedMechanism::Sirr(p) => sirr_privatize(x, p.r(), index, rng),
                ResolvedMechanism::Laplace(eps) => laplace_privatize(x, eps, index, rng),
            }
        })
        .collect()
}

/// Bounds at each checkpoint and whether the target was missed by then.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointOutcome {
    pub t: u64,
    pub lower: f64,
    pub upper: f64,
    pub missed: bool,
}

fn miss_flags(entries: &[BoundEntry], truth: &[f64]) -> Vec<bool> {
    let mut ever = false;
    entries
        .iter()
        .zip(truth)
        .map(|(e, &mu)| {
            ever |= !e.contains(mu);
            ever
        })
        .collect()
}

fn from_series(series: &BoundSeries, truth: &[f64], checkpoints: &[u64]) -> Vec<CheckpointOutcome> {
    let flags = miss_flags(&series.entries, truth);
    checkpoints
        .iter()
        .map(|&t| {
            let e = series.entries[t as usize - 1];
            CheckpointOutcome { t, lower: e.lower, upper: e.upper, missed: flags[t as usize - 1] }
        })
        .collect()
}

fn from_eprocess(e: &EProcessSeries, alpha: f64, checkpoints: &[u64]) -> Vec<CheckpointOutcome> {
    let threshold = (1.0 / alpha).ln();
    let mut ever = false;
    let flags: Vec<bool> = e
        .states
        .iter()
        .map(|s| {
            ever |= s.log_e >= threshold;
            ever
        })
        .collect();
    checkpoints
        .iter()
        .map(|&t| {
            let s = e.states[t as usize - 1];
            CheckpointOutcome { t, lower: s.p_value(), upper: s.running_min_inv, missed: flags[t as usize - 1] }
        })
        .collect()
}

/// Accumulator-based CS: exact membership at the truth every step, intervals
/// only at checkpoints.
fn from_accumulator(
    log_value: impl Fn(f64) -> f64,
    mut push: impl FnMut(usize) -> Result<()>,
    interval: impl Fn() -> Option<(f64, f64)>,
    truth: &[f64],
    alpha: f64,
    checkpoints: &[u64],
) -> Result<Vec<CheckpointOutcome>> {
    let threshold = (1.0 / alpha).ln();
    let mut ever = false;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for (i, &mu) in truth.iter().enumerate() {
        push(i)?;
        ever |= log_value(mu) >= threshold;
        if next < checkpoints.len() && checkpoints[next] == i as u64 + 1 {
            let (lower, upper) = interval().unwrap_or((1.0, 0.0));
            out.push(CheckpointOutcome { t: i as u64 + 1, lower, upper, missed: ever });
            next += 1;
        }
    }
    Ok(out)
}

fn ab_config(config: &ExperimentConfig, params: PrivacyParams, pi: f64, two_sided: bool, t0: u64) -> Result<ABConfig> {
    let beta = if two_sided { beta_opt(t0, config.alpha) } else { beta_opt(t0, 2.0 * config.alpha) };
    ABConfig::new(pi, params, config.alpha, beta)
}

fn nprr_of(mech: ResolvedMechanism) -> Result<PrivacyParams> {
    match mech {
        ResolvedMechanism::Nprr(p) | ResolvedMechanism::Sirr(p) => Ok(p),
        ResolvedMechanism::Laplace(_) => Err(Error::Config("method needs an NPRR/SIRR mechanism".into())),
    }
}

/// Run replication `rep` and report its checkpoint outcomes.
pub fn run_replication(config: &ExperimentConfig, rep: u64) -> Result<Vec<CheckpointOutcome>> {
    let mut rng = RandomSource::new(config.seed, rep);
    let raw = generate(&config.data, config.horizon, &mut rng)?;
    let mech = resolve_mechanism(&config.mechanism, &config.method)?;
    let cps = config.checkpoint_list();
    let alpha = config.alpha;
    let truth = raw.truth().to_vec();

    if let RawStream::Ab { xs, arms, .. } = &raw {
        let params = nprr_of(mech)?;
        let pi = match config.data {
            super::config::DataLaw::Fig5Ab { pi, .. } => pi,
            _ => unreachable!("A/B stream from a non-A/B law"),
        };
        let (two_sided, t0) = match config.method {
            MethodConfig::AbTwoSidedCs { t0 } => (true, t0),
            MethodConfig::AbLowerCs { t0 } | MethodConfig::WeakNullEprocess { t0 } => (false, t0),
            _ => return Err(Error::Config("A/B data needs an A/B method".into())),
        };
        let ab = ab_config(config, params, pi, two_sided, t0)?;
        let recs: Vec<ABRecord> = xs
            .iter()
            .zip(arms)
            .enumerate()
            .map(|(i, (&x, &a))| privatize_ab(x, a, &ab, i as u64 + 1, &mut rng))
            .collect::<Result<_>>()?;
        return Ok(match config.method {
            MethodConfig::AbLowerCs { .. } => from_series(&ab_lower_cs(&recs, &ab)?, &truth, &cps),
            MethodConfig::AbTwoSidedCs { .. } => from_series(&ab_two_sided_cs(&recs, &ab)?, &truth, &cps),
            _ => from_eprocess(&weak_null_eprocess(&recs, &ab)?, alpha, &cps),
        });
    }

    let RawStream::Scalar { xs, .. } = &raw else { unreachable!() };
    let recs = privatize_values(xs, mech, &mut rng)?;
    let half = alpha / 2.0;
    Ok(match config.method {
        MethodConfig::HoeffdingCs => {
            from_series(&hoeffding_cs(&recs, LambdaSchedule::TimeUniform { alpha: half }, half)?, &truth, &cps)
        }
        MethodConfig::MixtureTwoSided { t0 } => {
            from_series(&mixture_cs_two_sided(&recs, MixtureConfig::two_sided(t0, alpha)?)?, &truth, &cps)
        }
        MethodConfig::MixtureLower { t0 } => {
            from_series(&mixture_cs_lower(&recs, MixtureConfig::one_sided(t0, alpha)?)?, &truth, &cps)
        }
        MethodConfig::LaplaceHoeffdingCs { c } => from_series(
            &laplace_hoeffding_cs(&recs, LambdaSchedule::Laplace { alpha: half, c, n: None }, half)?,
            &truth,
            &cps,
        ),
        MethodConfig::GridkellyCs { d, theta } => {
            let acc = std::cell::RefCell::new(GridKellyAccumulator::new(d, theta)?);
            from_accumulator(
                |mu| acc.borrow().log_wealth(mu),
                |i| {
                    let r = nprr_of(mech)?.r();
                    acc.borrow_mut().push(recs[i].z, r);
                    Ok(())
                },
                || acc.borrow().interval(alpha, InversionSettings::default()),
                &truth,
                alpha,
                &cps,
            )?
        }
        MethodConfig::SirrLrCs => {
            let acc = std::cell::RefCell::new(SirrLrAccumulator::new());
            let params = nprr_of(mech)?;
            if params.g() != 1 {
                return Err(Error::Config("sirr-lr-cs needs G = 1".into()));
            }
            from_accumulator(
                |p| acc.borrow().log_martingale(p),
                |i| acc.borrow_mut().push(recs[i].z, params.r()),
                || acc.borrow().interval(alpha, InversionSettings::default()),
                &truth,
                alpha,
                &cps,
            )?
        }
        MethodConfig::HoeffdingEprocess { mu0 } => {
            let mu0 = mu0.unwrap_or(truth[0]);
            from_eprocess(&eprocess_hoeffding(&recs, LambdaSchedule::TimeUniform { alpha }, mu0)?, alpha, &cps)
        }
        MethodConfig::MixtureEprocess { mu0, t0 } => {
            let mu0 = mu0.unwrap_or(truth[0]);
            let cfg = MixtureConfig::one_sided(t0, alpha)?;
            from_eprocess(&eprocess_mixture(&recs, cfg, NullSpec::OneSidedLe { mu0 })?, alpha, &cps)
        }
        MethodConfig::HoeffdingCi | MethodConfig::LaplaceHoeffdingCi { .. } | MethodConfig::PmkellyCi { .. } => {
            let mut out = Vec::with_capacity(cps.len());
            for &n in &cps {
                let prefix = &recs[..n as usize];
                let series = match config.method {
                    MethodConfig::HoeffdingCi => hoeffding_ci(prefix, n, half)?,
                    MethodConfig::LaplaceHoeffdingCi { c } => laplace_hoeffding_ci(prefix, n, half, c)?,
                    MethodConfig::PmkellyCi { c } => pmkelly_ci(prefix, n, half, c)?,
                    _ => unreachable!(),
                };
                let e = series.entries[0];
                out.push(CheckpointOutcome {
                    t: n,
                    lower: e.lower,
                    upper: e.upper,
                    missed: !e.contains(truth[n as usize - 1]),
                });
            }
            out
        }
        MethodConfig::AbLowerCs { .. } | MethodConfig::AbTwoSidedCs { .. } | MethodConfig::WeakNullEprocess { .. } => {
            return Err(Error::Config("A/B methods need the fig5-ab law".into()))
        }
    })
}

fn aggregate(config: &ExperimentConfig, outcomes: &[Vec<CheckpointOutcome>]) -> ResultTable {
    let cps = config.checkpoint_list();
    let reps = outcomes.len() as f64;
    let rows = cps
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let (mut width, mut miss, mut lo, mut hi) = (0.0, 0.0, 0.0, 0.0);
            for rep in outcomes {
                let o = rep[j];
                width += (o.upper - o.lower).max(0.0);
                miss += f64::from(u8::from(o.missed));
                lo += o.lower;
                hi += o.upper;
            }
            ResultRow {
                t,
                method: config.method.name().to_string(),
                mean_width: if config.method.is_eprocess() { 0.0 } else { width / reps },
                empirical_miscoverage: miss / reps,
                mean_lower: lo / reps,
                mean_upper: hi / reps,
                replications: outcomes.len() as u64,
            }
        })
        .collect();
    ResultTable { rows }
}

/// Run every replication and aggregate in replication order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let work = || -> Result<Vec<Vec<CheckpointOutcome>>> {
        (0..config.replications).into_par_iter().map(|rep| run_replication(config, rep)).collect()
    };
    let outcomes = match config.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(aggregate(config, &outcomes))
}
