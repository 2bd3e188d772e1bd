//! Declarative experiment description. Configs are JSON documents with exactly
//! these fields; unknown keys are rejected.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Finite,
    Infinite,
    Mnist,
}

impl Setting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Setting::Finite => "finite",
            Setting::Infinite => "infinite",
            Setting::Mnist => "mnist",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    MlinGreedy,
    IndependentGreedy,
    E2tc,
    Pege,
}

impl Algo {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algo::MlinGreedy => "mlin_greedy",
            Algo::IndependentGreedy => "independent_greedy",
            Algo::E2tc => "e2tc",
            Algo::Pege => "pege",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlin_greedy" => Ok(Algo::MlinGreedy),
            "independent_greedy" => Ok(Algo::IndependentGreedy),
            "e2tc" => Ok(Algo::E2tc),
            "pege" => Ok(Algo::Pege),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Stage-budget constants for the explore-explore-then-commit schedule.
/// `exponent_c` switches the stage-1 budget to `d^c·k·√(N/T)`; when absent the
/// theoretical exponent 1.5 applies.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E2tcParams {
    #[serde(default = "default_constant")]
    pub c1: f64,
    #[serde(default = "default_constant")]
    pub c2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent_c: Option<f64>,
}

fn default_constant() -> f64 {
    1.0
}

impl Default for E2tcParams {
    fn default() -> Self {
        E2tcParams {
            c1: 1.0,
            c2: 1.0,
            exponent_c: None,
        }
    }
}

/// File locations and task selection for MNIST runs. `digits` accepts a range
/// like "0-4" or a comma list like "3,7" and defaults to all ten digits. The
/// optional test split, when given, is merged into the digit pools.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistConfig {
    pub images: String,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digits: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_dim: Option<usize>,
}

/// Full description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: Setting,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "k")]
    pub rank: usize,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub num_actions: Option<usize>,
    #[serde(rename = "T")]
    pub num_tasks: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub algo: Algo,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2tc: Option<E2tcParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist: Option<MnistConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_path: Option<String>,
}

/// Digits selector: "a-b" ranges or comma-separated digits.
pub fn parse_digits(spec: &str) -> Result<Vec<u8>> {
    let spec = spec.trim();
    let digits: Vec<u8> = if let Some((a, b)) = spec.split_once('-') {
        let lo: u8 = a
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad digit range '{spec}'")))?;
        let hi: u8 = b
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad digit range '{spec}'")))?;
        if lo > hi {
            return Err(Error::Config(format!("empty digit range '{spec}'")));
        }
        (lo..=hi).collect()
    } else {
        spec.split(',')
            .map(|part| {
                part.trim()
                    .parse::<u8>()
                    .map_err(|_| Error::Config(format!("bad digit '{part}'")))
            })
            .collect::<Result<_>>()?
    };
    if digits.iter().any(|d| *d > 9) {
        return Err(Error::Config(format!("digits out of 0..=9 in '{spec}'")));
    }
    Ok(digits)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Digits for MNIST runs (defaults to 0..=9).
    pub fn mnist_digits(&self) -> Result<Vec<u8>> {
        match &self.mnist {
            Some(m) => match &m.digits {
                Some(spec) => parse_digits(spec),
                None => Ok((0..=9).collect()),
            },
            None => Err(Error::Config("mnist paths are missing".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.num_tasks == 0 {
            return Err(Error::Config("T must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("N must be positive".into()));
        }
        if self.rank == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        match self.setting {
            Setting::Finite => {
                if self.rank > self.dim {
                    return Err(Error::Config(format!(
                        "k = {} exceeds d = {}",
                        self.rank, self.dim
                    )));
                }
                let k_actions = self
                    .num_actions
                    .ok_or_else(|| Error::Config("finite setting requires K".into()))?;
                if k_actions < 2 {
                    return Err(Error::Config("finite setting requires K >= 2".into()));
                }
            }
            Setting::Infinite => {
                if self.rank > self.dim {
                    return Err(Error::Config(format!(
                        "k = {} exceeds d = {}",
                        self.rank, self.dim
                    )));
                }
                if self.num_tasks < self.rank {
                    return Err(Error::Config(format!(
                        "infinite setting requires T >= k, got T = {}, k = {}",
                        self.num_tasks, self.rank
                    )));
                }
            }
            Setting::Mnist => {
                let m = self
                    .mnist
                    .as_ref()
                    .ok_or_else(|| Error::Config("mnist setting requires file paths".into()))?;
                let digits = self.mnist_digits()?;
                if digits.len() < 2 {
                    return Err(Error::Config("mnist requires at least two digits".into()));
                }
                let derived_t = digits.len() * (digits.len() - 1) / 2;
                if self.num_tasks != derived_t {
                    return Err(Error::Config(format!(
                        "T = {} does not match C({}, 2) = {derived_t} for digits '{}'",
                        self.num_tasks,
                        digits.len(),
                        m.digits.as_deref().unwrap_or("0-9")
                    )));
                }
                if let Some(k_actions) = self.num_actions {
                    if k_actions != 2 {
                        return Err(Error::Config(
                            "mnist tasks offer exactly K = 2 actions".into(),
                        ));
                    }
                }
            }
        }
        match self.algo {
            Algo::MlinGreedy | Algo::IndependentGreedy => {
                if self.setting == Setting::Infinite {
                    return Err(Error::Config(format!(
                        "{} requires a finite-action setting",
                        self.algo.as_str()
                    )));
                }
                if self.horizon < 4 {
                    return Err(Error::Config(
                        "epoch-scheduled algorithms require N >= 4".into(),
                    ));
                }
            }
            Algo::E2tc | Algo::Pege => {
                if self.setting != Setting::Infinite {
                    return Err(Error::Config(format!(
                        "{} requires the infinite-action setting",
                        self.algo.as_str()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Clone with a different algorithm (used by sweeps).
    pub fn with_algo(&self, algo: Algo) -> Self {
        let mut c = self.clone();
        c.algo = algo;
        c
    }
}
