//! Action-selection policies: BLASTS, Thompson sampling and a uniform
//! baseline, plus the pieces BLASTS is assembled from (distortion
//! construction, the variance-based information-ratio minimizer that drives
//! adaptive `beta`) and regret-bound diagnostics.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;

use crate::bandit::argmax;
use crate::belief::{BeliefState, EnsembleSamples};
use crate::error::{Error, Result};
use crate::rdcore::{solve_rate_distortion, DistortionMatrix, RdSolution, SourceWeights};

/// Added to the variance denominator and to the minimized ratio before it is
/// inverted.
pub const DEFAULT_ADAPTIVE_EPSILON: f64 = 1e-8;

pub const DEFAULT_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    Fixed(f64),
    /// `beta_t = 1 / (min_pi Psi_t(pi) + epsilon)`, recomputed every step.
    AdaptiveInfoRatio {
        epsilon: f64,
    },
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Fixed(b) if b.is_finite() && b >= 0.0 => Ok(()),
            BetaSchedule::AdaptiveInfoRatio { epsilon } if epsilon.is_finite() && epsilon > 0.0 => {
                Ok(())
            }
            other => Err(Error::InvalidParameter(format!(
                "invalid beta schedule {other:?}"
            ))),
        }
    }
}

/// Per-step solver summary recorded alongside a BLASTS action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub beta_used: f64,
    pub rate_bits: f64,
    pub achieved_distortion: f64,
    pub ba_iterations: usize,
    pub psi_bar: Option<f64>,
    /// `sqrt(achieved_distortion)`, the performance shortfall of the target.
    pub epsilon_target: f64,
}

impl StepDiagnostics {
    pub fn first_non_finite(&self) -> Option<&'static str> {
        if !self.beta_used.is_finite() {
            Some("beta_used")
        } else if !self.rate_bits.is_finite() {
            Some("rate_bits")
        } else if !self.achieved_distortion.is_finite() {
            Some("achieved_distortion")
        } else if self.psi_bar.is_some_and(|p| !p.is_finite()) {
            Some("psi_bar")
        } else if !self.epsilon_target.is_finite() {
            Some("epsilon_target")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoRatioEstimate {
    pub deltas: Vec<f64>,
    pub variances: Vec<f64>,
    pub psi_bar: f64,
    /// Minimizing policy; at most two arms carry mass.
    pub minimizer: Vec<f64>,
}

/// `d[z][a] = (max_a' e_z[a'] - e_z[a])^2`.
///
/// Given a sampled environment the optimal arm and every mean reward are
/// fixed, so the conditional expected squared regret is this pointwise value.
pub fn build_distortion_matrix(samples: &EnsembleSamples) -> Result<DistortionMatrix> {
    let mut data = Vec::with_capacity(samples.num_samples() * samples.num_arms());
    for row in samples.rows() {
        let best = row[argmax(row)];
        data.extend(row.iter().map(|&v| {
            let gap = best - v;
            gap * gap
        }));
    }
    DistortionMatrix::new(samples.num_samples(), samples.num_arms(), data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlastsParams {
    pub schedule: BetaSchedule,
    /// Posterior samples `Z` per step.
    pub samples: usize,
    pub ba_max_iters: usize,
    pub ba_tol: f64,
}

impl BlastsParams {
    pub fn new(schedule: BetaSchedule) -> Self {
        Self {
            schedule,
            samples: DEFAULT_SAMPLES,
            ba_max_iters: crate::rdcore::DEFAULT_MAX_ITERS,
            ba_tol: crate::rdcore::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlastsDecision {
    pub action: usize,
    /// Index of the posterior sample whose channel row was used.
    pub sample_index: usize,
    pub diagnostics: StepDiagnostics,
    pub solution: RdSolution,
}

/// One BLASTS step: sample `Z` environments from the belief, solve the
/// rate-distortion problem for the target action, then probability-match
/// through a uniformly chosen sample's channel row.
///
/// `sample_rng` drives posterior sampling; `action_rng` picks the sample
/// index and the action.
pub fn blasts_select<R1, R2>(
    belief: &BeliefState,
    params: &BlastsParams,
    sample_rng: &mut R1,
    action_rng: &mut R2,
) -> Result<BlastsDecision>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    params.schedule.validate()?;
    let samples = belief.sample_means(params.samples, sample_rng)?;
    let d = build_distortion_matrix(&samples)?;
    let (beta, psi_bar) = match params.schedule {
        BetaSchedule::Fixed(beta) => (beta, None),
        BetaSchedule::AdaptiveInfoRatio { epsilon } => {
            let (beta, estimate) = adaptive_beta(&samples, epsilon)?;
            (beta, Some(estimate.psi_bar))
        }
    };
    let weights = SourceWeights::uniform(samples.num_samples())?;
    let solution = solve_rate_distortion(&weights, &d, beta, params.ba_max_iters, params.ba_tol)?;

    let sample_index = action_rng.random_range(0..samples.num_samples());
    let row = solution.channel.row(sample_index);
    let action = WeightedIndex::new(row)
        .map_err(|e| Error::InvalidDistribution(format!("channel row {sample_index}: {e}")))?
        .sample(action_rng);

    let diagnostics = StepDiagnostics {
        beta_used: beta,
        rate_bits: solution.rate_bits,
        achieved_distortion: solution.distortion,
        ba_iterations: solution.iterations,
        psi_bar,
        epsilon_target: solution.distortion.sqrt(),
    };
    Ok(BlastsDecision {
        action,
        sample_index,
        diagnostics,
        solution,
    })
}

/// Thompson sampling: the argmax of a single posterior draw.
pub fn ts_select<R: Rng + ?Sized>(belief: &BeliefState, rng: &mut R) -> usize {
    argmax(&belief.sample_one(rng))
}

pub fn uniform_select<R: Rng + ?Sized>(num_arms: usize, rng: &mut R) -> Result<usize> {
    if num_arms == 0 {
        return Err(Error::InvalidParameter(
            "uniform policy needs at least one arm".into(),
        ));
    }
    Ok(rng.random_range(0..num_arms))
}

fn ratio(delta: f64, variance: f64) -> f64 {
    delta * delta / variance
}

/// Minimizes `(sum_a pi_a delta_a)^2 / (sum_a pi_a v_a + epsilon)` over the
/// simplex.
///
/// Some minimizer is supported on at most two arms, so the search runs over
/// every point mass and every arm pair. Along a pair the objective is a
/// squared linear function over a positive linear one, hence convex in the
/// mixing weight; its minimum is at an endpoint, at the numerator's root, or
/// at the single interior stationary point, all of which are evaluated.
pub fn info_ratio_min(
    deltas: &[f64],
    variances: &[f64],
    epsilon: f64,
) -> Result<InfoRatioEstimate> {
    if deltas.is_empty() || deltas.len() != variances.len() {
        return Err(Error::Dimension(format!(
            "{} deltas and {} variances",
            deltas.len(),
            variances.len()
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if deltas
        .iter()
        .chain(variances)
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(Error::InvalidParameter(
            "deltas and variances must be finite and nonnegative".into(),
        ));
    }

    let k = deltas.len();
    // (value, a, b, weight on a)
    let mut best = (f64::INFINITY, 0, 0, 1.0);
    for a in 0..k {
        let value = ratio(deltas[a], variances[a] + epsilon);
        if value < best.0 {
            best = (value, a, a, 1.0);
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            let u0 = deltas[b];
            let du = deltas[a] - deltas[b];
            let v0 = variances[b] + epsilon;
            let dv = variances[a] - variances[b];
            let mut candidates = [f64::NAN; 2];
            if du != 0.0 {
                candidates[0] = -u0 / du;
                if dv != 0.0 {
                    candidates[1] = (dv * u0 - 2.0 * du * v0) / (du * dv);
                }
            }
            for lambda in candidates {
                if !(lambda > 0.0 && lambda < 1.0) {
                    continue;
                }
                let value = ratio(u0 + lambda * du, v0 + lambda * dv);
                if value < best.0 {
                    best = (value, a, b, lambda);
                }
            }
        }
    }

    let (psi_bar, a, b, lambda) = best;
    let mut minimizer = vec![0.0; k];
    minimizer[a] += lambda;
    minimizer[b] += 1.0 - lambda;
    Ok(InfoRatioEstimate {
        deltas: deltas.to_vec(),
        variances: variances.to_vec(),
        psi_bar: psi_bar.max(0.0),
        minimizer,
    })
}

/// Per-arm expected regret and (population) variance of the arm mean under
/// the ensemble.
pub fn ensemble_regret_and_variance(samples: &EnsembleSamples) -> (Vec<f64>, Vec<f64>) {
    let z = samples.num_samples() as f64;
    let k = samples.num_arms();
    let mut deltas = vec![0.0; k];
    let mut means = vec![0.0; k];
    for row in samples.rows() {
        let best = row[argmax(row)];
        for a in 0..k {
            deltas[a] += best - row[a];
            means[a] += row[a];
        }
    }
    deltas.iter_mut().for_each(|d| *d /= z);
    means.iter_mut().for_each(|m| *m /= z);
    let mut variances = vec![0.0; k];
    for row in samples.rows() {
        for a in 0..k {
            let dev = row[a] - means[a];
            variances[a] += dev * dev;
        }
    }
    variances.iter_mut().for_each(|v| *v /= z);
    (deltas, variances)
}

/// `beta_t = 1 / (psi_bar + epsilon)` from a fresh ensemble.
pub fn adaptive_beta(samples: &EnsembleSamples, epsilon: f64) -> Result<(f64, InfoRatioEstimate)> {
    if samples.num_samples() < 2 {
        return Err(Error::InvalidParameter(
            "adaptive beta needs at least two posterior samples".into(),
        ));
    }
    let (deltas, variances) = ensemble_regret_and_variance(samples);
    let estimate = info_ratio_min(&deltas, &variances, epsilon)?;
    Ok((1.0 / (estimate.psi_bar + epsilon), estimate))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundMode {
    Discounted { gamma: f64 },
    FiniteHorizon { horizon: usize },
}

/// Right-hand side of the information-theoretic regret bound for a target
/// with rate `rate_bits` and shortfall `epsilon_target`:
///
/// * discounted: `2 sqrt(G I / (1 - gamma^2)) + 2 eps / (1 - gamma)`
/// * finite horizon: `2 sqrt(G T I) + 2 T eps`
///
/// The analysis is in nats, so the rate is converted from bits first.
pub fn regret_bound_rhs(
    rate_bits: f64,
    epsilon_target: f64,
    info_ratio_bound: f64,
    mode: BoundMode,
) -> Result<f64> {
    if !(info_ratio_bound > 0.0) || !info_ratio_bound.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "information ratio bound must be positive, got {info_ratio_bound}"
        )));
    }
    if !(rate_bits >= 0.0) || !(epsilon_target >= 0.0) {
        return Err(Error::InvalidParameter(
            "rate and epsilon must be nonnegative".into(),
        ));
    }
    let rate_nats = rate_bits * std::f64::consts::LN_2;
    match mode {
        BoundMode::Discounted { gamma } => {
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::InvalidParameter(format!(
                    "discount must lie in [0, 1), got {gamma}"
                )));
            }
            Ok(
                2.0 * (info_ratio_bound * rate_nats / (1.0 - gamma * gamma)).sqrt()
                    + 2.0 * epsilon_target / (1.0 - gamma),
            )
        }
        BoundMode::FiniteHorizon { horizon } => {
            if horizon == 0 {
                return Err(Error::InvalidParameter("horizon must be at least 1".into()));
            }
            let t = horizon as f64;
            Ok(2.0 * (info_ratio_bound * t * rate_nats).sqrt() + 2.0 * t * epsilon_target)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::BanditKind;
    use crate::belief::{ArmPosterior, Prior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bernoulli(k: usize) -> BeliefState {
        BeliefState::new(
            BanditKind::Bernoulli,
            k,
            Prior::default_for(BanditKind::Bernoulli),
        )
        .unwrap()
    }

    fn four_sigma_ok(count: usize, n: usize, p: f64) -> bool {
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        (count as f64 - n as f64 * p).abs() <= 4.0 * sd
    }

    #[test]
    fn distortion_rows() {
        let s = EnsembleSamples::from_rows(&[vec![1.0, 0.3], vec![0.5, 0.5, 0.5][..2].to_vec()])
            .unwrap();
        let d = build_distortion_matrix(&s).unwrap();
        assert_eq!(d.row(0)[0], 0.0);
        assert!((d.row(0)[1] - 0.49).abs() < 1e-15);
        assert_eq!(d.row(1), &[0.0, 0.0]);

        let s = EnsembleSamples::from_rows(&[vec![0.5, 0.5, 0.5], vec![0.2, 0.9, 0.4]]).unwrap();
        let d = build_distortion_matrix(&s).unwrap();
        assert_eq!(d.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(d.row(1)[1], 0.0);
    }

    #[test]
    fn zero_beta_matches_uniform_policy() {
        let belief = bernoulli(5);
        let params = BlastsParams::new(BetaSchedule::Fixed(0.0));
        let mut sample_rng = ChaCha8Rng::seed_from_u64(1);
        let mut action_rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mut counts = [0usize; 5];
        let first = blasts_select(&belief, &params, &mut sample_rng, &mut action_rng).unwrap();
        assert_eq!(
            first.solution.channel,
            crate::rdcore::Channel::uniform(64, 5).unwrap()
        );
        assert_eq!(first.diagnostics.rate_bits, 0.0);
        counts[first.action] += 1;
        for _ in 1..n {
            let dec = blasts_select(&belief, &params, &mut sample_rng, &mut action_rng).unwrap();
            counts[dec.action] += 1;
        }
        for c in counts {
            assert!(four_sigma_ok(c, n, 0.2), "counts {counts:?}");
        }
    }

    fn point_belief(means: &[f64], var: f64) -> BeliefState {
        let kind = BanditKind::gaussian(1.0).unwrap();
        let arms = means
            .iter()
            .map(|&mean| ArmPosterior::Normal { mean, var })
            .collect();
        BeliefState::with_arms(kind, Prior::default_for(kind), arms).unwrap()
    }

    #[test]
    fn huge_beta_selects_sample_argmax() {
        // Sampled gaps stay near 0.4, far above the 0.1 needed for d >= 0.01.
        let belief = point_belief(&[0.1, 0.5, 0.9], 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut action_rng = ChaCha8Rng::seed_from_u64(5);
        let params = BlastsParams::new(BetaSchedule::Fixed(2f64.powi(20)));
        for _ in 0..200 {
            let dec = blasts_select(&belief, &params, &mut rng, &mut action_rng).unwrap();
            let row = dec.solution.channel.row(dec.sample_index);
            assert_eq!(dec.action, argmax(row));
            assert_eq!(dec.action, 2);
            assert!(row[dec.action] >= 1.0 - 1e-6);
        }
    }

    #[test]
    fn fifty_arm_solve_respects_rate_ceiling() {
        let belief = bernoulli(50);
        let params = BlastsParams {
            schedule: BetaSchedule::Fixed(16.0),
            samples: 64,
            ba_max_iters: 100,
            ba_tol: 1e-6,
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(8);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let dec = blasts_select(&belief, &params, &mut r1, &mut r2).unwrap();
        assert!(dec.diagnostics.ba_iterations <= 100);
        assert!(dec.diagnostics.rate_bits <= 50f64.log2());
        assert!(dec.action < 50);
    }

    #[test]
    fn thompson_examples() {
        let mut belief = bernoulli(2);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 10_000;
        let ones = (0..n).filter(|_| ts_select(&belief, &mut rng) == 1).count();
        assert!(four_sigma_ok(ones, n, 0.5));

        for _ in 0..99 {
            belief.update(0, 1.0).unwrap();
            belief.update(1, 0.0).unwrap();
        }
        assert_eq!(
            belief.arms()[0],
            ArmPosterior::Beta {
                alpha: 100.0,
                beta: 1.0
            }
        );
        let zeros = (0..1000)
            .filter(|_| ts_select(&belief, &mut rng) == 0)
            .count();
        assert!(zeros >= 990);

        let point = point_belief(&[0.1, 0.9], 1e-30);
        assert!((0..500).all(|_| ts_select(&point, &mut rng) == 1));
    }

    #[test]
    fn uniform_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(uniform_select(1, &mut rng).unwrap(), 0);
        assert!(uniform_select(0, &mut rng).is_err());
        let n = 100_000;
        let mut counts = vec![0usize; 50];
        for _ in 0..n {
            counts[uniform_select(50, &mut rng).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| four_sigma_ok(c, n, 0.02)));
        let a: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            (0..20)
                .map(|_| uniform_select(7, &mut r).unwrap())
                .collect()
        };
        let b: Vec<usize> = {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            (0..20)
                .map(|_| uniform_select(7, &mut r).unwrap())
                .collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn info_ratio_trivial_cases() {
        let eps = 1e-8;
        let est = info_ratio_min(&[0.3, 0.0, 0.2], &[0.1, 0.0, 0.2], eps).unwrap();
        assert_eq!(est.psi_bar, 0.0);
        assert_eq!(est.minimizer, vec![0.0, 1.0, 0.0]);

        let est = info_ratio_min(&[0.5], &[0.1], eps).unwrap();
        assert_eq!(est.psi_bar, 0.25 / (0.1 + eps));
        assert_eq!(est.minimizer, vec![1.0]);

        let est = info_ratio_min(&[0.2, 0.3], &[0.0, 0.0], eps).unwrap();
        assert!((est.psi_bar - 0.04 / eps).abs() / (0.04 / eps) < 1e-12);

        assert!(info_ratio_min(&[0.1], &[0.1, 0.2], eps).is_err());
        assert!(info_ratio_min(&[0.1], &[0.1], 0.0).is_err());
    }

    #[test]
    fn info_ratio_mixes_when_it_helps() {
        // Arm 0: no regret but no information; arm 1: regret with information.
        // Mixing beats both point masses.
        let est = info_ratio_min(&[0.1, 0.5], &[0.0, 1.0], 1e-8).unwrap();
        let pure = (0.1f64 * 0.1 / 1e-8).min(0.25 / (1.0 + 1e-8));
        assert!(est.psi_bar < pure);
        assert_eq!(est.minimizer.iter().filter(|&&p| p > 0.0).count(), 2);
    }

    #[test]
    fn adaptive_beta_cases() {
        let eps = 1e-8;
        // Arm 1 is the row argmax everywhere, so its expected regret is zero.
        let s =
            EnsembleSamples::from_rows(&[vec![0.1, 0.9], vec![0.3, 0.8], vec![0.2, 0.7]]).unwrap();
        let (beta, est) = adaptive_beta(&s, eps).unwrap();
        assert_eq!(est.psi_bar, 0.0);
        assert_eq!(beta, 1.0 / eps);

        let s = EnsembleSamples::from_rows(&[vec![0.1, 0.9, 0.4], vec![0.1, 0.9, 0.4]]).unwrap();
        let (beta, est) = adaptive_beta(&s, eps).unwrap();
        assert!(est.variances.iter().all(|&v| v == 0.0));
        // The shared argmax arm still has zero regret.
        assert_eq!(est.psi_bar, 0.0);
        assert_eq!(beta, 1.0 / eps);

        let one = EnsembleSamples::from_rows(&[vec![0.1, 0.9]]).unwrap();
        assert!(adaptive_beta(&one, eps).is_err());

        let belief = bernoulli(10);
        let s = belief
            .sample_means(64, &mut ChaCha8Rng::seed_from_u64(21))
            .unwrap();
        let (b1, _) = adaptive_beta(&s, eps).unwrap();
        let (b2, _) = adaptive_beta(&s, eps).unwrap();
        assert!(b1 > 0.0 && b1.is_finite());
        assert_eq!(b1.to_bits(), b2.to_bits());
    }

    #[test]
    fn bound_examples() {
        for mode in [
            BoundMode::Discounted { gamma: 0.9 },
            BoundMode::FiniteHorizon { horizon: 50 },
        ] {
            assert_eq!(regret_bound_rhs(0.0, 0.0, 5.0, mode).unwrap(), 0.0);
        }
        let finite =
            regret_bound_rhs(2.0, 0.0, 5.0, BoundMode::FiniteHorizon { horizon: 100 }).unwrap();
        assert!(
            (finite - 2.0 * (5.0f64 * 100.0 * 2.0 * std::f64::consts::LN_2).sqrt()).abs() < 1e-12
        );
        assert!((finite - 52.655).abs() < 1e-3);

        let disc = regret_bound_rhs(2.0, 0.01, 5.0, BoundMode::Discounted { gamma: 0.99 }).unwrap();
        let expected = 2.0 * (5.0 * 2.0 * std::f64::consts::LN_2 / (1.0 - 0.99f64 * 0.99)).sqrt()
            + 0.02 / 0.01;
        assert!((disc - expected).abs() < 1e-9);

        assert!(regret_bound_rhs(1.0, 0.0, 5.0, BoundMode::Discounted { gamma: 1.0 }).is_err());
        assert!(regret_bound_rhs(1.0, 0.0, 0.0, BoundMode::FiniteHorizon { horizon: 1 }).is_err());
    }
}
