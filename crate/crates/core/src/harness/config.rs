//! Flat key-value experiment configuration.
//!
//! A TOML file whose keys match the CLI flags (with `_` in place of `-`).
//! Command-line values override file values key by key.
//!
//! ```toml
//! env = "bernoulli"
//! arms = 10
//! horizon = 2000
//! seeds = 10              # or an explicit list: [3, 5, 8]
//! samples = 64
//! ba_iters = 100
//! ba_tol = 1e-6
//! agents = ["ts", "uniform"]
//! beta = [0.001, 1.0, 8192.0]
//! adaptive_beta = true
//! out = "results"
//! threads = 4
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use super::{AgentSpec, ExperimentConfig, OutputOptions};
use crate::agents::{BetaSchedule, DEFAULT_ADAPTIVE_EPSILON};
use crate::bandit::{BanditKind, DEFAULT_REWARD_NOISE_SD};
use crate::belief::Prior;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum SeedsSpec {
    /// Seeds `0..n`.
    Count(u64),
    List(Vec<u64>),
}

impl SeedsSpec {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            SeedsSpec::Count(n) => (0..*n).collect(),
            SeedsSpec::List(v) => v.clone(),
        }
    }
}

impl FromStr for SeedsSpec {
    type Err = Error;

    /// `10` (count), `3,5,8` (list) or `4..9` (half-open range).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse seeds `{s}`"));
        let s = s.trim();
        if let Some((lo, hi)) = s.split_once("..") {
            let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
            return Ok(SeedsSpec::List((lo..hi).collect()));
        }
        if s.contains(',') {
            return s
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.trim().parse().map_err(|_| bad()))
                .collect::<Result<Vec<u64>>>()
                .map(SeedsSpec::List);
        }
        s.parse().map(SeedsSpec::Count).map_err(|_| bad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    Bernoulli,
    Gaussian,
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bernoulli" => Ok(EnvName::Bernoulli),
            "gaussian" => Ok(EnvName::Gaussian),
            other => Err(Error::Config(format!("unknown env `{other}`"))),
        }
    }
}

/// Every key is optional; unset keys fall back to the desk-scale defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub env: Option<EnvName>,
    pub arms: Option<usize>,
    pub horizon: Option<usize>,
    pub seeds: Option<SeedsSpec>,
    pub samples: Option<usize>,
    pub ba_iters: Option<usize>,
    pub ba_tol: Option<f64>,
    /// Agent specs such as `ts`, `uniform`, `blasts:4`, `blasts:adaptive`.
    pub agents: Option<Vec<String>>,
    /// Adds one fixed-beta BLASTS agent per value.
    pub beta: Option<Vec<f64>>,
    /// Adds an adaptive-beta BLASTS agent.
    pub adaptive_beta: Option<bool>,
    pub adaptive_epsilon: Option<f64>,
    pub reward_noise_sd: Option<f64>,
    pub prior_alpha: Option<f64>,
    pub prior_beta: Option<f64>,
    pub prior_mean: Option<f64>,
    pub prior_var: Option<f64>,
    pub noise_var: Option<f64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub force: Option<bool>,
    pub svg: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Values set in `top` replace the corresponding values in `self`.
    pub fn overlay(mut self, top: FileConfig) -> Self {
        overlay!(self, top; env, arms, horizon, seeds, samples, ba_iters, ba_tol, agents, beta,
            adaptive_beta, adaptive_epsilon, reward_noise_sd, prior_alpha, prior_beta, prior_mean,
            prior_var, noise_var, out, threads, force, svg);
        self
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results"))
    }

    pub fn output_options(&self) -> OutputOptions {
        OutputOptions {
            force: self.force.unwrap_or(false),
            svg: self.svg.unwrap_or(true),
        }
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let defaults = ExperimentConfig::desk_scale();
        let kind = match self.env.unwrap_or(EnvName::Bernoulli) {
            EnvName::Bernoulli => BanditKind::Bernoulli,
            EnvName::Gaussian => {
                BanditKind::gaussian(self.reward_noise_sd.unwrap_or(DEFAULT_REWARD_NOISE_SD))?
            }
        };
        let prior = match Prior::default_for(kind) {
            Prior::Beta { alpha, beta } => Prior::Beta {
                alpha: self.prior_alpha.unwrap_or(alpha),
                beta: self.prior_beta.unwrap_or(beta),
            },
            Prior::Normal {
                mean,
                var,
                noise_var,
            } => Prior::Normal {
                mean: self.prior_mean.unwrap_or(mean),
                var: self.prior_var.unwrap_or(var),
                noise_var: self.noise_var.unwrap_or(noise_var),
            },
        };

        let mut agents: Vec<AgentSpec> = match &self.agents {
            Some(list) => list.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            None => defaults.agents.clone(),
        };
        for &beta in self.beta.iter().flatten() {
            agents.push(AgentSpec::Blasts(BetaSchedule::Fixed(beta)));
        }
        if self.adaptive_beta.unwrap_or(false) {
            agents.push(AgentSpec::Blasts(BetaSchedule::AdaptiveInfoRatio {
                epsilon: self.adaptive_epsilon.unwrap_or(DEFAULT_ADAPTIVE_EPSILON),
            }));
        }
        let mut unique = Vec::with_capacity(agents.len());
        for a in agents {
            if !unique.contains(&a) {
                unique.push(a);
            }
        }

        let config = ExperimentConfig {
            kind,
            num_arms: self.arms.unwrap_or(defaults.num_arms),
            horizon: self.horizon.unwrap_or(defaults.horizon),
            agents: unique,
            samples: self.samples.unwrap_or(defaults.samples),
            ba_max_iters: self.ba_iters.unwrap_or(defaults.ba_max_iters),
            ba_tol: self.ba_tol.unwrap_or(defaults.ba_tol),
            seeds: self
                .seeds
                .as_ref()
                .map(SeedsSpec::to_vec)
                .unwrap_or(defaults.seeds),
            prior,
            threads: self.threads.unwrap_or(defaults.threads),
        };
        config.validate()?;
        Ok(config)
    }
}
