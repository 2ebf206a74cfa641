//! Synthetic data laws.

use rand_distr::{Beta, Distribution};

use crate::abtest::delta_path_fig5;
use crate::error::{Error, Result};
use crate::mechanisms::RandomSource;

use super::config::DataLaw;

/// Raw (pre-privatization) data with the running-average target per time.
#[derive(Debug, Clone, PartialEq)]
pub enum RawStream {
    Scalar { xs: Vec<f64>, truth: Vec<f64> },
    Ab { xs: Vec<f64>, arms: Vec<u8>, truth: Vec<f64> },
}

impl RawStream {
    /// Running-average target at each `t` (mean, or treatment effect for A/B).
    pub fn truth(&self) -> &[f64] {
        match self {
            RawStream::Scalar { truth, .. } | RawStream::Ab { truth, .. } => truth,
        }
    }

    pub fn len(&self) -> usize {
        self.truth().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `μ_t = 1 - sin(2 ln(e + t)) / (2 ln(e + 0.01 t))`, before clamping.
pub fn sinusoidal_mean_raw(t: u64) -> f64 {
    let t = t as f64;
    let e = std::f64::consts::E;
    1.0 - 0.5 * (2.0 * (e + t).ln()).sin() / (e + 0.01 * t).ln()
}

/// The emitted Bernoulli mean: the raw path clamped to `[0, 1]`.
pub fn sinusoidal_mean(t: u64) -> f64 {
    sinusoidal_mean_raw(t).clamp(0.0, 1.0)
}

fn running_average(means: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut sum = 0.0;
    means
        .enumerate()
        .map(|(i, m)| {
            sum += m;
            sum / (i as f64 + 1.0)
        })
        .collect()
}

/// Draw `horizon` observations from `law`.
pub fn generate(law: &DataLaw, horizon: u64, rng: &mut RandomSource) -> Result<RawStream> {
    let n = horizon as usize;
    Ok(match *law {
        DataLaw::Bernoulli { p } => RawStream::Scalar {
            xs: (0..n).map(|_| f64::from(u8::from(rng.bernoulli(p)))).collect(),
            truth: vec![p; n],
        },
        DataLaw::Beta { a, b } => {
            let dist = Beta::new(a, b).map_err(|e| Error::Config(e.to_string()))?;
            RawStream::Scalar {
                xs: (0..n).map(|_| dist.sample(rng.rng_mut())).collect(),
                truth: vec![a / (a + b); n],
            }
        }
        DataLaw::Uniform => RawStream::Scalar { xs: (0..n).map(|_| rng.uniform()).collect(), truth: vec![0.5; n] },
        DataLaw::SinusoidalMean => RawStream::Scalar {
            xs: (1..=horizon).map(|t| f64::from(u8::from(rng.bernoulli(sinusoidal_mean(t))))).collect(),
            truth: running_average((1..=horizon).map(sinusoidal_mean)),
        },
        DataLaw::Fig5Ab { pi, swap_arms } => {
            let sign = if swap_arms { -1.0 } else { 1.0 };
            let mut xs = Vec::with_capacity(n);
            let mut arms = Vec::with_capacity(n);
            for t in 1..=horizon {
                let delta = sign * delta_path_fig5(t);
                let a = u8::from(rng.bernoulli(pi));
                let mean = if a == 1 { 0.5 + delta / 2.0 } else { 0.5 - delta / 2.0 };
                arms.push(a);
                xs.push(f64::from(u8::from(rng.bernoulli(mean))));
            }
            RawStream::Ab { xs, arms, truth: running_average((1..=horizon).map(|t| sign * delta_path_fig5(t))) }
        }
    })
}
