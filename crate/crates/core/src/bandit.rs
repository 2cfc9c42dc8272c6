//! Ground-truth bandit environments with independent Bernoulli or Gaussian
//! arms.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const DEFAULT_REWARD_NOISE_SD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BanditKind {
    Bernoulli,
    Gaussian { reward_noise_sd: f64 },
}

impl BanditKind {
    pub fn gaussian(reward_noise_sd: f64) -> Result<Self> {
        if !(reward_noise_sd > 0.0) || !reward_noise_sd.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "reward noise sd must be positive and finite, got {reward_noise_sd}"
            )));
        }
        Ok(BanditKind::Gaussian { reward_noise_sd })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BanditKind::Bernoulli => "bernoulli",
            BanditKind::Gaussian { .. } => "gaussian",
        }
    }
}

/// True mean reward of every arm.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSample {
    means: Vec<f64>,
}

impl EnvironmentSample {
    pub fn new(means: Vec<f64>) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "an environment needs at least 2 arms, got {}",
                means.len()
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("environment means"));
        }
        Ok(Self { means })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmStats {
    pub optimal_arm: usize,
    pub optimal_mean: f64,
    /// `optimal_mean - means[a]` for every arm.
    pub gaps: Vec<f64>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws every arm mean i.i.d. from Uniform(0, 1).
pub fn sample_environment<R: Rng + ?Sized>(
    _kind: BanditKind,
    num_arms: usize,
    rng: &mut R,
) -> Result<EnvironmentSample> {
    if num_arms < 2 {
        return Err(Error::InvalidParameter(format!(
            "an environment needs at least 2 arms, got {num_arms}"
        )));
    }
    let means = (0..num_arms).map(|_| rng.random::<f64>()).collect();
    EnvironmentSample::new(means)
}

pub fn pull<R: Rng + ?Sized>(
    kind: BanditKind,
    env: &EnvironmentSample,
    action: usize,
    rng: &mut R,
) -> Result<f64> {
    let mean = *env.means.get(action).ok_or(Error::ActionOutOfRange {
        action,
        num_arms: env.num_arms(),
    })?;
    Ok(match kind {
        BanditKind::Bernoulli => {
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
        BanditKind::Gaussian { reward_noise_sd } => {
            let noise: f64 = StandardNormal.sample(rng);
            mean + reward_noise_sd * noise
        }
    })
}

pub fn optimal_stats(env: &EnvironmentSample) -> ArmStats {
    let optimal_arm = argmax(&env.means);
    let optimal_mean = env.means[optimal_arm];
    ArmStats {
        optimal_arm,
        optimal_mean,
        gaps: env.means.iter().map(|m| optimal_mean - m).collect(),
    }
}
