//! Seeded experiment runner, aggregation across seeds, and output files.

pub mod config;
pub mod output;
pub mod rng;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::agents::{
    blasts_select, regret_bound_rhs, ts_select, uniform_select, BetaSchedule, BlastsParams,
    BoundMode, StepDiagnostics, DEFAULT_ADAPTIVE_EPSILON,
};
use crate::bandit::{optimal_stats, pull, sample_environment, BanditKind};
use crate::belief::{BeliefState, Prior};
use crate::error::{Error, Result};

pub use output::{emit_outputs, OutputOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentSpec {
    Thompson,
    Uniform,
    Blasts(BetaSchedule),
}

impl AgentSpec {
    pub fn id(&self) -> &'static str {
        match self {
            AgentSpec::Thompson => "ts",
            AgentSpec::Uniform => "uniform",
            AgentSpec::Blasts(_) => "blasts",
        }
    }

    /// `fixed` or `adaptive` for BLASTS agents, empty otherwise.
    pub fn beta_mode(&self) -> &'static str {
        match self {
            AgentSpec::Blasts(BetaSchedule::Fixed(_)) => "fixed",
            AgentSpec::Blasts(BetaSchedule::AdaptiveInfoRatio { .. }) => "adaptive",
            _ => "",
        }
    }

    /// The configured `beta` for fixed schedules, empty otherwise.
    pub fn beta_label(&self) -> String {
        match self {
            AgentSpec::Blasts(BetaSchedule::Fixed(b)) => b.to_string(),
            _ => String::new(),
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Thompson => f.write_str("ts"),
            AgentSpec::Uniform => f.write_str("uniform"),
            AgentSpec::Blasts(BetaSchedule::Fixed(b)) => write!(f, "blasts:{b}"),
            AgentSpec::Blasts(BetaSchedule::AdaptiveInfoRatio { epsilon }) => {
                write!(f, "blasts:adaptive:{epsilon}")
            }
        }
    }
}

impl FromStr for AgentSpec {
    type Err = Error;

    /// Accepts `ts`, `uniform`, `blasts:<beta>`, `blasts:adaptive` and
    /// `blasts:adaptive:<epsilon>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown agent `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let spec = match parts.as_slice() {
            ["ts"] | ["thompson"] => AgentSpec::Thompson,
            ["uniform"] => AgentSpec::Uniform,
            ["blasts", "adaptive"] => AgentSpec::Blasts(BetaSchedule::AdaptiveInfoRatio {
                epsilon: DEFAULT_ADAPTIVE_EPSILON,
            }),
            ["blasts", "adaptive", eps] => AgentSpec::Blasts(BetaSchedule::AdaptiveInfoRatio {
                epsilon: eps.parse().map_err(|_| bad())?,
            }),
            ["blasts", beta] => {
                AgentSpec::Blasts(BetaSchedule::Fixed(beta.parse().map_err(|_| bad())?))
            }
            _ => return Err(bad()),
        };
        if let AgentSpec::Blasts(schedule) = spec {
            schedule.validate()?;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: BanditKind,
    pub num_arms: usize,
    pub horizon: usize,
    pub agents: Vec<AgentSpec>,
    /// Posterior samples `Z` per BLASTS step.
    pub samples: usize,
    pub ba_max_iters: usize,
    pub ba_tol: f64,
    pub seeds: Vec<u64>,
    pub prior: Prior,
    /// Worker threads for running (agent, seed) pairs.
    pub threads: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults: 10-arm Bernoulli, `T = 2000`, seeds `0..10`,
    /// Thompson sampling and the uniform baseline.
    pub fn desk_scale() -> Self {
        let kind = BanditKind::Bernoulli;
        Self {
            kind,
            num_arms: 10,
            horizon: 2000,
            agents: vec![AgentSpec::Thompson, AgentSpec::Uniform],
            samples: crate::agents::DEFAULT_SAMPLES,
            ba_max_iters: crate::rdcore::DEFAULT_MAX_ITERS,
            ba_tol: crate::rdcore::DEFAULT_TOL,
            seeds: (0..10).collect(),
            prior: Prior::default_for(kind),
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if self.num_arms < 2 {
            return fail(format!("need at least 2 arms, got {}", self.num_arms));
        }
        if self.agents.is_empty() {
            return fail("at least one agent is required".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.threads == 0 {
            return fail("threads must be at least 1".into());
        }
        if self.samples == 0 || self.ba_max_iters == 0 {
            return fail("samples and ba_iters must be at least 1".into());
        }
        if !(self.ba_tol > 0.0) || !self.ba_tol.is_finite() {
            return fail(format!("ba_tol must be positive, got {}", self.ba_tol));
        }
        for (i, agent) in self.agents.iter().enumerate() {
            if self.agents[..i].contains(agent) {
                return fail(format!("agent {agent} is listed twice"));
            }
            if let AgentSpec::Blasts(schedule) = agent {
                schedule.validate()?;
                if matches!(schedule, BetaSchedule::AdaptiveInfoRatio { .. }) && self.samples < 2 {
                    return fail("adaptive beta needs samples >= 2".into());
                }
            }
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return fail("seeds must be distinct".into());
        }
        BeliefState::new(self.kind, self.num_arms, self.prior)?;
        Ok(())
    }

    fn blasts_params(&self, schedule: BetaSchedule) -> BlastsParams {
        BlastsParams {
            schedule,
            samples: self.samples,
            ba_max_iters: self.ba_max_iters,
            ba_tol: self.ba_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub action: usize,
    pub reward: f64,
    /// Mean-reward gap between the optimal arm and the chosen one.
    pub expected_regret: f64,
    pub cum_regret: f64,
    pub diagnostics: Option<StepDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub agent: AgentSpec,
    pub seed: u64,
    pub env_means: Vec<f64>,
    pub optimal_arm: usize,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn final_cum_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_regret)
    }
}

/// Runs one seeded episode of `agent`: sample an environment, then
/// select, pull and update for `horizon` steps.
pub fn run_episode(config: &ExperimentConfig, agent: AgentSpec, seed: u64) -> Result<Trajectory> {
    let scope = agent.to_string();
    let mut env_rng = rng::derive_stream(seed, "", rng::ENVIRONMENT);
    let mut reward_rng = rng::derive_stream(seed, &scope, rng::REWARD);
    let mut belief_rng = rng::derive_stream(seed, &scope, rng::BELIEF);
    let mut action_rng = rng::derive_stream(seed, &scope, rng::ACTION);

    let env = sample_environment(config.kind, config.num_arms, &mut env_rng)?;
    let stats = optimal_stats(&env);
    let mut belief = BeliefState::new(config.kind, config.num_arms, config.prior)?;
    let mut steps = Vec::with_capacity(config.horizon);
    let mut cum_regret = 0.0;

    for t in 0..config.horizon {
        let (action, diagnostics) = match agent {
            AgentSpec::Thompson => (ts_select(&belief, &mut belief_rng), None),
            AgentSpec::Uniform => (uniform_select(config.num_arms, &mut action_rng)?, None),
            AgentSpec::Blasts(schedule) => {
                let decision = blasts_select(
                    &belief,
                    &config.blasts_params(schedule),
                    &mut belief_rng,
                    &mut action_rng,
                )?;
                if let Some(what) = decision.diagnostics.first_non_finite() {
                    return Err(Error::NonFiniteDiagnostic { step: t, what });
                }
                (decision.action, Some(decision.diagnostics))
            }
        };
        let reward = pull(config.kind, &env, action, &mut reward_rng)?;
        belief.update(action, reward)?;
        let expected_regret = stats.gaps[action];
        cum_regret += expected_regret;
        steps.push(StepRecord {
            t,
            action,
            reward,
            expected_regret,
            cum_regret,
            diagnostics,
        });
    }

    Ok(Trajectory {
        agent,
        seed,
        env_means: env.means().to_vec(),
        optimal_arm: stats.optimal_arm,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub agent: AgentSpec,
    pub t: usize,
    pub mean_cum_regret: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn final_row(&self, agent: &AgentSpec) -> Option<&SummaryRow> {
        self.rows.iter().rev().find(|r| &r.agent == agent)
    }

    pub fn row_at(&self, agent: &AgentSpec, t: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| &r.agent == agent && r.t == t)
    }
}

/// Mean and 95% normal-approximation interval half-width,
/// `1.96 * s / sqrt(n)` with the sample standard deviation `s`.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Per agent and time step: mean cumulative regret over seeds with a 95%
/// confidence interval. Agents appear in order of first appearance; seeds are
/// reduced in ascending order so the result does not depend on input order.
pub fn summarize(trajectories: &[Trajectory]) -> SummaryTable {
    let mut agents: Vec<AgentSpec> = Vec::new();
    for tr in trajectories {
        if !agents.contains(&tr.agent) {
            agents.push(tr.agent);
        }
    }
    let mut rows = Vec::new();
    for agent in agents {
        let mut group: Vec<&Trajectory> =
            trajectories.iter().filter(|t| t.agent == agent).collect();
        group.sort_by_key(|t| t.seed);
        let horizon = group.iter().map(|t| t.steps.len()).min().unwrap_or(0);
        let mut column = Vec::with_capacity(group.len());
        for t in 0..horizon {
            column.clear();
            column.extend(group.iter().map(|tr| tr.steps[t].cum_regret));
            let (mean, half) = mean_ci95(&column);
            rows.push(SummaryRow {
                agent,
                t,
                mean_cum_regret: mean,
                ci95_lo: mean - half,
                ci95_hi: mean + half,
            });
        }
    }
    SummaryTable { rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeFailure {
    pub agent: AgentSpec,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    /// Completed episodes, agent-major then in configured seed order.
    pub trajectories: Vec<Trajectory>,
    pub failures: Vec<EpisodeFailure>,
    pub summary: SummaryTable,
}

/// Runs every (agent, seed) pair on `config.threads` workers and aggregates
/// the completed ones. Results are merged in a fixed order, so output does
/// not depend on the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let pairs: Vec<(AgentSpec, u64)> = config
        .agents
        .iter()
        .flat_map(|a| config.seeds.iter().map(move |s| (*a, *s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<Trajectory>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(agent, seed)| run_episode(config, agent, seed))
            .collect()
    });

    let mut trajectories = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for ((agent, seed), outcome) in pairs.into_iter().zip(outcomes) {
        match outcome {
            Ok(tr) => trajectories.push(tr),
            Err(e) => failures.push(EpisodeFailure {
                agent,
                seed,
                message: e.to_string(),
            }),
        }
    }
    let summary = summarize(&trajectories);
    Ok(ExperimentResults {
        config: config.clone(),
        trajectories,
        failures,
        summary,
    })
}

/// Measured regret of a BLASTS episode next to the finite-horizon bound
/// evaluated at the run-averaged rate and shortfall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub measured: f64,
    pub bound: f64,
    pub mean_rate_bits: f64,
    pub mean_epsilon: f64,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound
    }
}

/// `None` for trajectories without BLASTS diagnostics.
pub fn bound_report(trajectory: &Trajectory, info_ratio_bound: f64) -> Option<Result<BoundReport>> {
    let diags: Vec<&StepDiagnostics> = trajectory
        .steps
        .iter()
        .filter_map(|s| s.diagnostics.as_ref())
        .collect();
    if diags.is_empty() {
        return None;
    }
    let n = diags.len() as f64;
    let mean_rate_bits = diags.iter().map(|d| d.rate_bits).sum::<f64>() / n;
    let mean_epsilon = diags.iter().map(|d| d.epsilon_target).sum::<f64>() / n;
    let horizon = trajectory.steps.len();
    Some(
        regret_bound_rhs(
            mean_rate_bits,
            mean_epsilon,
            info_ratio_bound,
            BoundMode::FiniteHorizon { horizon },
        )
        .map(|bound| BoundReport {
            measured: trajectory.final_cum_regret(),
            bound,
            mean_rate_bits,
            mean_epsilon,
        }),
    )
}

/// Default information-ratio bound for a `K`-armed bandit, `K / 2`.
pub fn default_info_ratio_bound(num_arms: usize) -> f64 {
    num_arms as f64 / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(agents: Vec<AgentSpec>, seeds: Vec<u64>, horizon: usize) -> ExperimentConfig {
        ExperimentConfig {
            horizon,
            agents,
            seeds,
            num_arms: 4,
            ..ExperimentConfig::desk_scale()
        }
    }

    #[test]
    fn agent_spec_round_trip() {
        for s in [
            "ts",
            "uniform",
            "blasts:0.5",
            "blasts:8192",
            "blasts:adaptive:0.001",
        ] {
            let spec: AgentSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!(
            "blasts:adaptive".parse::<AgentSpec>().unwrap(),
            AgentSpec::Blasts(BetaSchedule::AdaptiveInfoRatio { epsilon: 1e-8 })
        );
        assert!("blasts:-1".parse::<AgentSpec>().is_err());
        assert!("greedy".parse::<AgentSpec>().is_err());
    }

    #[test]
    fn summary_ci_arithmetic() {
        let (mean, half) = mean_ci95(&[10.0, 20.0]);
        assert_eq!(mean, 15.0);
        assert!((half - 1.96 * (50f64.sqrt() / 2f64.sqrt())).abs() < 1e-12);
        assert!((half - 9.8).abs() < 1e-9);
        assert_eq!(mean_ci95(&[3.0]), (3.0, 0.0));
        assert_eq!(mean_ci95(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }

    #[test]
    fn summarize_identical_and_single() {
        let cfg = small_config(vec![AgentSpec::Uniform], vec![4], 30);
        let tr = run_episode(&cfg, AgentSpec::Uniform, 4).unwrap();
        let mut twin = tr.clone();
        twin.seed = 5;
        let table = summarize(&[tr.clone(), twin]);
        assert_eq!(table.rows.len(), 30);
        assert!(table
            .rows
            .iter()
            .all(|r| r.ci95_lo == r.mean_cum_regret && r.ci95_hi == r.mean_cum_regret));

        let single = summarize(std::slice::from_ref(&tr));
        for (row, step) in single.rows.iter().zip(&tr.steps) {
            assert_eq!(row.mean_cum_regret, step.cum_regret);
            assert_eq!(row.ci95_lo, row.ci95_hi);
        }
    }

    #[test]
    fn summarize_ignores_seed_order() {
        let cfg = small_config(vec![AgentSpec::Thompson], vec![1, 2, 3], 40);
        let trs: Vec<Trajectory> = [1, 2, 3]
            .iter()
            .map(|&s| run_episode(&cfg, AgentSpec::Thompson, s).unwrap())
            .collect();
        let mut reversed = trs.clone();
        reversed.reverse();
        assert_eq!(summarize(&trs), summarize(&reversed));
    }

    #[test]
    fn episode_invariants_and_determinism() {
        let agents = [
            AgentSpec::Thompson,
            AgentSpec::Uniform,
            AgentSpec::Blasts(BetaSchedule::Fixed(4.0)),
            AgentSpec::Blasts(BetaSchedule::AdaptiveInfoRatio { epsilon: 1e-8 }),
        ];
        let cfg = small_config(agents.to_vec(), vec![0], 60);
        for agent in agents {
            let a = run_episode(&cfg, agent, 7).unwrap();
            let b = run_episode(&cfg, agent, 7).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.steps.len(), 60);
            let mut prev = 0.0;
            for s in &a.steps {
                assert!(s.expected_regret >= 0.0);
                assert!(s.cum_regret >= prev);
                prev = s.cum_regret;
                if let Some(d) = s.diagnostics {
                    assert!(d.rate_bits <= (cfg.num_arms as f64).log2() + 1e-6);
                }
            }
            assert_eq!(
                a.steps.iter().any(|s| s.diagnostics.is_some()),
                matches!(agent, AgentSpec::Blasts(_))
            );
        }
    }

    #[test]
    fn agents_share_environment_per_seed() {
        let cfg = small_config(vec![AgentSpec::Thompson, AgentSpec::Uniform], vec![0], 5);
        let a = run_episode(&cfg, AgentSpec::Thompson, 3).unwrap();
        let b = run_episode(&cfg, AgentSpec::Uniform, 3).unwrap();
        assert_eq!(a.env_means, b.env_means);
    }

    #[test]
    fn experiment_shape_and_validation() {
        let cfg = small_config(
            vec![
                AgentSpec::Thompson,
                AgentSpec::Blasts(BetaSchedule::Fixed(2.0)),
            ],
            (0..10).collect(),
            20,
        );
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.trajectories.len(), 20);
        assert!(res.failures.is_empty());
        assert_eq!(res.summary.rows.len(), 2 * 20);

        let empty = small_config(vec![AgentSpec::Thompson], vec![], 20);
        assert!(matches!(run_experiment(&empty), Err(Error::Config(_))));
        let no_agents = small_config(vec![], vec![1], 20);
        assert!(run_experiment(&no_agents).is_err());
        let dup = small_config(vec![AgentSpec::Uniform, AgentSpec::Uniform], vec![1], 20);
        assert!(run_experiment(&dup).is_err());
        let zero_t = small_config(vec![AgentSpec::Uniform], vec![1], 0);
        assert!(run_experiment(&zero_t).is_err());
    }

    #[test]
    fn bound_report_only_for_blasts() {
        let cfg = small_config(vec![AgentSpec::Uniform], vec![0], 50);
        let tr = run_episode(&cfg, AgentSpec::Uniform, 0).unwrap();
        assert!(bound_report(&tr, 2.0).is_none());
        let tr = run_episode(&cfg, AgentSpec::Blasts(BetaSchedule::Fixed(1.0)), 0).unwrap();
        let rep = bound_report(&tr, 2.0).unwrap().unwrap();
        assert!(rep.bound.is_finite() && rep.bound > 0.0);
        assert_eq!(rep.measured, tr.final_cum_regret());
    }
}
