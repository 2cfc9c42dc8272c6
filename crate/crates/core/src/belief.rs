//! Exact conjugate posteriors over arm means, and batch posterior sampling.
//!
//! Bernoulli arms carry a Beta posterior. Gaussian arms carry a Normal
//! posterior with a known likelihood noise variance.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::bandit::BanditKind;
use crate::error::{Error, Result};

pub const DEFAULT_BETA_PRIOR: (f64, f64) = (1.0, 1.0);
pub const DEFAULT_NORMAL_PRIOR_MEAN: f64 = 0.5;
pub const DEFAULT_NORMAL_PRIOR_VAR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Beta { alpha: f64, beta: f64 },
    Normal { mean: f64, var: f64, noise_var: f64 },
}

impl Prior {
    /// Beta(1, 1) for Bernoulli arms; N(0.5, 1) with likelihood variance
    /// equal to the true reward variance for Gaussian arms.
    pub fn default_for(kind: BanditKind) -> Self {
        match kind {
            BanditKind::Bernoulli => Prior::Beta {
                alpha: DEFAULT_BETA_PRIOR.0,
                beta: DEFAULT_BETA_PRIOR.1,
            },
            BanditKind::Gaussian { reward_noise_sd } => Prior::Normal {
                mean: DEFAULT_NORMAL_PRIOR_MEAN,
                var: DEFAULT_NORMAL_PRIOR_VAR,
                noise_var: reward_noise_sd * reward_noise_sd,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Beta { alpha, beta } => {
                alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()
            }
            Prior::Normal {
                mean,
                var,
                noise_var,
            } => {
                mean.is_finite()
                    && var > 0.0
                    && var.is_finite()
                    && noise_var > 0.0
                    && noise_var.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid prior {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmPosterior {
    Beta { alpha: f64, beta: f64 },
    Normal { mean: f64, var: f64 },
}

impl ArmPosterior {
    pub fn mean(&self) -> f64 {
        match *self {
            ArmPosterior::Beta { alpha, beta } => alpha / (alpha + beta),
            ArmPosterior::Normal { mean, .. } => mean,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArmPosterior::Beta { alpha, beta } => Beta::new(alpha, beta)
                .expect("posterior parameters stay positive")
                .sample(rng),
            ArmPosterior::Normal { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
        }
    }
}

/// Per-arm posterior state, the sufficient statistic of the history.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    kind: BanditKind,
    prior: Prior,
    arms: Vec<ArmPosterior>,
    pulls: Vec<u64>,
}

/// `Z x K` matrix of sampled mean vectors, one row per sampled environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSamples {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl EnsembleSamples {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "ensemble {rows}x{cols} with {} entries",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ensemble samples"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension(
                "ensemble rows have unequal lengths".into(),
            ));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Number of sampled environments `Z`.
    pub fn num_samples(&self) -> usize {
        self.rows
    }

    pub fn num_arms(&self) -> usize {
        self.cols
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.data[z * self.cols..(z + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }
}

impl BeliefState {
    pub fn new(kind: BanditKind, num_arms: usize, prior: Prior) -> Result<Self> {
        if num_arms == 0 {
            return Err(Error::InvalidParameter(
                "belief needs at least one arm".into(),
            ));
        }
        prior.validate()?;
        let arm = match (kind, prior) {
            (BanditKind::Bernoulli, Prior::Beta { alpha, beta }) => {
                ArmPosterior::Beta { alpha, beta }
            }
            (BanditKind::Gaussian { .. }, Prior::Normal { mean, var, .. }) => {
                ArmPosterior::Normal { mean, var }
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "prior {prior:?} does not match {} arms",
                    kind.name()
                )))
            }
        };
        Ok(Self {
            kind,
            prior,
            arms: vec![arm; num_arms],
            pulls: vec![0; num_arms],
        })
    }

    /// Belief with explicit per-arm posteriors, e.g. a point mass or a
    /// state restored from elsewhere. Pull counts start at zero.
    pub fn with_arms(kind: BanditKind, prior: Prior, arms: Vec<ArmPosterior>) -> Result<Self> {
        let mut belief = Self::new(kind, arms.len(), prior)?;
        for arm in &arms {
            let ok = match (*arm, belief.arms[0]) {
                (ArmPosterior::Beta { alpha, beta }, ArmPosterior::Beta { .. }) => {
                    alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()
                }
                (ArmPosterior::Normal { mean, var }, ArmPosterior::Normal { .. }) => {
                    mean.is_finite() && var > 0.0 && var.is_finite()
                }
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "arm posterior {arm:?} is invalid for {} arms",
                    kind.name()
                )));
            }
        }
        belief.arms = arms;
        Ok(belief)
    }

    pub fn kind(&self) -> BanditKind {
        self.kind
    }

    pub fn prior(&self) -> Prior {
        self.prior
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arms(&self) -> &[ArmPosterior] {
        &self.arms
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    /// Conjugate update of the pulled arm; every other arm is untouched.
    pub fn update(&mut self, action: usize, reward: f64) -> Result<()> {
        let num_arms = self.arms.len();
        let arm = self
            .arms
            .get_mut(action)
            .ok_or(Error::ActionOutOfRange { action, num_arms })?;
        match (arm, self.prior) {
            (ArmPosterior::Beta { alpha, beta }, _) => {
                if reward != 0.0 && reward != 1.0 {
                    return Err(Error::InvalidReward(reward));
                }
                *alpha += reward;
                *beta += 1.0 - reward;
            }
            (ArmPosterior::Normal { mean, var }, Prior::Normal { noise_var, .. }) => {
                if !reward.is_finite() {
                    return Err(Error::NonFinite("reward"));
                }
                let post_var = 1.0 / (1.0 / *var + 1.0 / noise_var);
                *mean = post_var * (*mean / *var + reward / noise_var);
                *var = post_var;
            }
            (ArmPosterior::Normal { .. }, Prior::Beta { .. }) => {
                unreachable!("constructor pairs Normal arms with a Normal prior")
            }
        }
        self.pulls[action] += 1;
        Ok(())
    }

    /// Value-returning form of [`BeliefState::update`].
    pub fn updated(&self, action: usize, reward: f64) -> Result<Self> {
        let mut next = self.clone();
        next.update(action, reward)?;
        Ok(next)
    }

    /// Draws `count` independent mean vectors; within a row every arm is
    /// sampled independently from its posterior, in arm order.
    pub fn sample_means<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<EnsembleSamples> {
        if count == 0 {
            return Err(Error::InvalidParameter(
                "sample count must be at least 1".into(),
            ));
        }
        let mut data = Vec::with_capacity(count * self.arms.len());
        for _ in 0..count {
            data.extend(self.arms.iter().map(|arm| arm.sample(rng)));
        }
        EnsembleSamples::new(count, self.arms.len(), data)
    }

    /// A single posterior draw of the mean vector.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.arms.iter().map(|arm| arm.sample(rng)).collect()
    }
}
