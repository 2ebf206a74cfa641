//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 42
//! replications = 100
//! alpha = 0.1            # overall miscoverage of the reported sets
//! horizon = 10000        # n for CIs, t-max for CSs
//! checkpoints = [100, 1000, 10000]   # optional; defaults to a 1-2-5 ladder
//! threads = 4            # optional; defaults to the global rayon pool
//!
//! [data]
//! law = "beta"           # bernoulli | beta | uniform | sinusoidal-mean | fig5-ab
//! a = 10.0
//! b = 30.0
//!
//! [mechanism]
//! kind = "nprr"          # nprr | sirr | laplace
//! epsilon = 2.0          # omit for the non-private limit (NPRR/SIRR only)
//! # r = 0.7616           # optional explicit parameters instead of epsilon
//! # g = 1
//!
//! [method]
//! name = "pmkelly-ci"
//! c = 0.8
//! ```
//!
//! Method names and their optional keys:
//!
//! | name | keys |
//! |---|---|
//! | `hoeffding-ci`, `hoeffding-cs` | |
//! | `mixture-two-sided`, `mixture-lower` | `t0` (100) |
//! | `laplace-hoeffding-ci`, `laplace-hoeffding-cs` | `c` (0.1) |
//! | `pmkelly-ci` | `c` (0.8) |
//! | `gridkelly-cs` | `d` (30), `theta` (0.5) |
//! | `sirr-lr-cs` | |
//! | `hoeffding-eprocess` | `mu0` (truth) |
//! | `mixture-eprocess` | `mu0` (truth), `t0` (100) |
//! | `ab-lower-cs`, `ab-two-sided-cs`, `weak-null-eprocess` | `t0` (100) |
//!
//! Two-sided sets built from a union of one-sided bounds (Hoeffding, Laplace,
//! pmKelly) spend `alpha/2` per side. e-process methods test the null
//! `μ ≤ mu0`, or `Δ̃ ≤ 0` for the weak null, and report rejection rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replications: u64,
    pub alpha: f64,
    pub horizon: u64,
    #[serde(default)]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default)]
    pub threads: Option<usize>,
    pub data: DataLaw,
    pub mechanism: MechanismConfig,
    pub method: MethodConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataLaw {
    Bernoulli { p: f64 },
    Beta { a: f64, b: f64 },
    Uniform,
    /// Bernoulli draws around `μ_t = 1 - sin(2 ln(e + t)) / (2 ln(e + t/100))`.
    SinusoidalMean,
    /// Two arms with effect `Δ_t`, assignment probability `pi`.
    Fig5Ab {
        #[serde(default = "default_pi")]
        pi: f64,
        #[serde(default)]
        swap_arms: bool,
    },
}

fn default_pi() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Nprr,
    Sirr,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub g: Option<u32>,
}

fn default_t0() -> u64 {
    100
}

fn default_betting_c() -> f64 {
    crate::schedules::DEFAULT_BETTING_C
}

fn default_laplace_c() -> f64 {
    crate::schedules::DEFAULT_LAPLACE_C
}

fn default_d() -> u32 {
    30
}

fn default_theta() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodConfig {
    HoeffdingCi,
    HoeffdingCs,
    MixtureTwoSided {
        #[serde(default = "default_t0")]
        t0: u64,
    },
    MixtureLower {
        #[serde(default = "default_t0")]
        t0: u64,
    },
    LaplaceHoeffdingCi {
        #[serde(default = "default_laplace_c")]
        c: f64,
    },
    LaplaceHoeffdingCs {
        #[serde(default = "default_laplace_c")]
        c: f64,
    },
    PmkellyCi {
        #[serde(default = "default_betting_c")]
        c: f64,
    },
    GridkellyCs {
        #[serde(default = "default_d")]
        d: u32,
        #[serde(default = "default_theta")]
        theta: f64,
    },
    SirrLrCs,
    HoeffdingEprocess {
        #[serde(default)]
        mu0: Option<f64>,
    },
    MixtureEprocess {
        #[serde(default)]
        mu0: Option<f64>,
        #[serde(default = "default_t0")]
        t0: u64,
    },
    AbLowerCs {
        #[serde(default = "default_t0")]
        t0: u64,
    },
    AbTwoSidedCs {
        #[serde(default = "default_t0")]
        t0: u64,
    },
    WeakNullEprocess {
        #[serde(default = "default_t0")]
        t0: u64,
    },
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::HoeffdingCi => "hoeffding-ci",
            MethodConfig::HoeffdingCs => "hoeffding-cs",
            MethodConfig::MixtureTwoSided { .. } => "mixture-two-sided",
            MethodConfig::MixtureLower { .. } => "mixture-lower",
            MethodConfig::LaplaceHoeffdingCi { .. } => "laplace-hoeffding-ci",
            MethodConfig::LaplaceHoeffdingCs { .. } => "laplace-hoeffding-cs",
            MethodConfig::PmkellyCi { .. } => "pmkelly-ci",
            MethodConfig::GridkellyCs { .. } => "gridkelly-cs",
            MethodConfig::SirrLrCs => "sirr-lr-cs",
            MethodConfig::HoeffdingEprocess { .. } => "hoeffding-eprocess",
            MethodConfig::MixtureEprocess { .. } => "mixture-eprocess",
            MethodConfig::AbLowerCs { .. } => "ab-lower-cs",
            MethodConfig::AbTwoSidedCs { .. } => "ab-two-sided-cs",
            MethodConfig::WeakNullEprocess { .. } => "weak-null-eprocess",
        }
    }

    /// Fixed-sample methods report a fresh interval at each checkpoint `n`.
    pub fn is_fixed_n(&self) -> bool {
        matches!(
            self,
            MethodConfig::HoeffdingCi | MethodConfig::LaplaceHoeffdingCi { .. } | MethodConfig::PmkellyCi { .. }
        )
    }

    pub fn is_ab(&self) -> bool {
        matches!(
            self,
            MethodConfig::AbLowerCs { .. } | MethodConfig::AbTwoSidedCs { .. } | MethodConfig::WeakNullEprocess { .. }
        )
    }

    pub fn is_laplace(&self) -> bool {
        matches!(self, MethodConfig::LaplaceHoeffdingCi { .. } | MethodConfig::LaplaceHoeffdingCs { .. })
    }

    pub fn is_eprocess(&self) -> bool {
        matches!(
            self,
            MethodConfig::HoeffdingEprocess { .. }
                | MethodConfig::MixtureEprocess { .. }
                | MethodConfig::WeakNullEprocess { .. }
        )
    }

    /// Methods that gain from `G > 1`.
    pub fn is_variance_adaptive(&self) -> bool {
        matches!(self, MethodConfig::PmkellyCi { .. } | MethodConfig::GridkellyCs { .. })
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return config_err("replications must be at least 1");
        }
        if self.horizon == 0 {
            return config_err("horizon must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return config_err(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let Some(cps) = &self.checkpoints {
            if cps.is_empty() || cps.iter().any(|&c| c == 0 || c > self.horizon) {
                return config_err("checkpoints must be non-empty and lie in 1..=horizon");
            }
        }
        if self.threads == Some(0) {
            return config_err("threads must be at least 1");
        }
        match self.data {
            DataLaw::Bernoulli { p } if !(0.0..=1.0).contains(&p) => return config_err("bernoulli p must lie in [0, 1]"),
            DataLaw::Beta { a, b } if !(a > 0.0 && b > 0.0) => return config_err("beta parameters must be positive"),
            DataLaw::Fig5Ab { pi, .. } if !(pi > 0.0 && pi < 1.0) => return config_err("pi must lie in (0, 1)"),
            _ => {}
        }
        let binary = matches!(self.data, DataLaw::Bernoulli { .. } | DataLaw::SinusoidalMean | DataLaw::Fig5Ab { .. });
        let m = &self.method;
        if m.is_ab() != matches!(self.data, DataLaw::Fig5Ab { .. }) {
            return config_err("A/B methods go with the fig5-ab law and only with it");
        }
        match self.mechanism.kind {
            MechanismKind::Laplace => {
                if !m.is_laplace() {
                    return config_err(format!("{} needs an NPRR or SIRR mechanism", m.name()));
                }
                if !self.mechanism.epsilon.is_some_and(|e| e > 0.0 && e.is_finite()) {
                    return config_err("the Laplace mechanism needs a finite epsilon > 0");
                }
            }
            MechanismKind::Sirr | MechanismKind::Nprr => {
                if m.is_laplace() {
                    return config_err(format!("{} needs the Laplace mechanism", m.name()));
                }
                if self.mechanism.kind == MechanismKind::Sirr && !binary {
                    return config_err("SIRR needs binary data");
                }
                if let Some(e) = self.mechanism.epsilon {
                    if !(e > 0.0) {
                        return config_err("epsilon must be positive");
                    }
                }
                if self.mechanism.r.is_some() && self.mechanism.epsilon.is_some() {
                    return config_err("give either epsilon or r, not both");
                }
            }
        }
        let needs_g1 = matches!(m, MethodConfig::SirrLrCs) || m.is_ab() || self.mechanism.kind == MechanismKind::Sirr;
        if needs_g1 && self.mechanism.g.is_some_and(|g| g != 1) {
            return config_err(format!("{} requires G = 1", m.name()));
        }
        if matches!(m, MethodConfig::SirrLrCs) && !binary {
            return config_err("sirr-lr-cs needs binary data");
        }
        if matches!(m, MethodConfig::MixtureLower { .. } | MethodConfig::AbLowerCs { .. } | MethodConfig::MixtureEprocess { .. } | MethodConfig::WeakNullEprocess { .. })
            && self.alpha >= 0.5
        {
            return config_err("one-sided mixture tuning needs alpha < 1/2");
        }
        if let MethodConfig::GridkellyCs { d, theta } = *m {
            if d < 2 || !(0.0..=1.0).contains(&theta) {
                return config_err("gridkelly-cs needs d >= 2 and theta in [0, 1]");
            }
        }
        if let MethodConfig::PmkellyCi { c } | MethodConfig::LaplaceHoeffdingCi { c } | MethodConfig::LaplaceHoeffdingCs { c } = *m {
            if !(c > 0.0 && c < 1.0) {
                return config_err("truncation scale c must lie in (0, 1)");
            }
        }
        Ok(())
    }

    /// Checkpoints in increasing order.
    pub fn checkpoint_list(&self) -> Vec<u64> {
        let mut cps = match &self.checkpoints {
            Some(c) => c.clone(),
            None => {
                let mut out = Vec::new();
                let mut base = 1u64;
                'outer: loop {
                    for m in [1u64, 2, 5] {
                        let v = base.saturating_mul(m);
                        if v >= self.horizon {
                            break 'outer;
                        }
                        if v >= 10 {
                            out.push(v);
                        }
                    }
                    base = base.saturating_mul(10);
                }
                out.push(self.horizon);
                out
            }
        };
        cps.sort_unstable();
        cps.dedup();
        cps
    }
}
