use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use blasts::agents::build_distortion_matrix;
use blasts::bandit::BanditKind;
use blasts::belief::{BeliefState, Prior};
use blasts::harness::config::{EnvName, FileConfig, SeedsSpec};
use blasts::harness::output::{
    emit_rd_curve, read_summary_series, render_svg, SUMMARY_FILE, SVG_FILE,
};
use blasts::harness::{bound_report, default_info_ratio_bound, emit_outputs, rng, run_experiment};
use blasts::rdcore::{rd_curve, DistortionMatrix, SourceWeights};

#[derive(Parser)]
#[command(
    name = "blasts",
    version,
    about = "Blahut-Arimoto satisficing Thompson sampling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a config file and/or flags.
    Run(ExperimentArgs),
    /// Run one fixed-beta BLASTS agent per value in --betas, next to the configured agents.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
        #[command(flatten)]
        common: ExperimentArgs,
    },
    /// Compute a standalone rate-distortion curve and write rdcurve.csv.
    RdCurve(RdCurveArgs),
    /// Render summary.csv as summary.svg.
    Plot {
        /// Defaults to <out>/summary.csv.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// TOML file with keys named like these flags (underscores for dashes).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvName>,
    #[arg(long)]
    arms: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Seed count (`10`), list (`3,5,8`) or range (`0..10`).
    #[arg(long)]
    seeds: Option<SeedsSpec>,
    /// Posterior samples per BLASTS step.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    ba_iters: Option<usize>,
    #[arg(long)]
    ba_tol: Option<f64>,
    /// Comma-separated agents: ts, uniform, blasts:<beta>, blasts:adaptive[:<eps>].
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
    /// Adds a fixed-beta BLASTS agent per value.
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Adds an adaptive-beta BLASTS agent.
    #[arg(long)]
    adaptive_beta: bool,
    #[arg(long)]
    adaptive_epsilon: Option<f64>,
    #[arg(long)]
    reward_noise_sd: Option<f64>,
    #[arg(long)]
    prior_alpha: Option<f64>,
    #[arg(long)]
    prior_beta: Option<f64>,
    #[arg(long)]
    prior_mean: Option<f64>,
    #[arg(long)]
    prior_var: Option<f64>,
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Write summary.svg (default true).
    #[arg(long)]
    svg: Option<bool>,
}

impl ExperimentArgs {
    fn into_file_config(self) -> Result<FileConfig> {
        let base = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let flags = FileConfig {
            env: self.env,
            arms: self.arms,
            horizon: self.horizon,
            seeds: self.seeds,
            samples: self.samples,
            ba_iters: self.ba_iters,
            ba_tol: self.ba_tol,
            agents: self.agents,
            beta: self.beta,
            adaptive_beta: self.adaptive_beta.then_some(true),
            adaptive_epsilon: self.adaptive_epsilon,
            reward_noise_sd: self.reward_noise_sd,
            prior_alpha: self.prior_alpha,
            prior_beta: self.prior_beta,
            prior_mean: self.prior_mean,
            prior_var: self.prior_var,
            noise_var: self.noise_var,
            out: self.out,
            threads: self.threads,
            force: self.force.then_some(true),
            svg: self.svg,
        };
        Ok(base.overlay(flags))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Synthetic {
    /// Two equiprobable source points with Hamming distortion.
    BinaryHamming,
    /// Squared-regret distortion over posterior samples of a fresh belief.
    Bandit,
}

#[derive(Args)]
struct RdCurveArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4,8,16")]
    betas: Vec<f64>,
    /// Headerless CSV distortion matrix, one row per source point.
    #[arg(long)]
    distortion: Option<PathBuf>,
    /// Headerless CSV of source weights (defaults to uniform).
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "binary-hamming")]
    synthetic: Synthetic,
    #[arg(long, default_value = "bernoulli")]
    env: EnvName,
    #[arg(long, default_value_t = 10)]
    arms: usize,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = blasts::rdcore::DEFAULT_MAX_ITERS)]
    ba_iters: usize,
    #[arg(long, default_value_t = blasts::rdcore::DEFAULT_TOL)]
    ba_tol: f64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn read_numbers(path: &PathBuf) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        let row = record
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| {
                f.parse::<f64>()
                    .with_context(|| format!("{}: bad number `{f}`", path.display()))
            })
            .collect::<Result<Vec<f64>>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    Ok(rows)
}

fn run_rd_curve(args: RdCurveArgs) -> Result<()> {
    let d = match (&args.distortion, args.synthetic) {
        (Some(path), _) => DistortionMatrix::from_rows(&read_numbers(path)?)?,
        (None, Synthetic::BinaryHamming) => {
            DistortionMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])?
        }
        (None, Synthetic::Bandit) => {
            let kind = match args.env {
                EnvName::Bernoulli => BanditKind::Bernoulli,
                EnvName::Gaussian => BanditKind::gaussian(1.0)?,
            };
            let belief = BeliefState::new(kind, args.arms, Prior::default_for(kind))?;
            let mut stream = rng::derive_stream(args.seed, "rd-curve", rng::BELIEF);
            build_distortion_matrix(&belief.sample_means(args.samples, &mut stream)?)?
        }
    };
    let weights = match &args.weights {
        Some(path) => SourceWeights::new(read_numbers(path)?.concat())?,
        None => SourceWeights::uniform(d.rows())?,
    };
    let points = rd_curve(&weights, &d, &args.betas, args.ba_iters, args.ba_tol)?;
    let path = emit_rd_curve(&points, &args.out, args.force)?;
    for p in &points {
        println!(
            "beta={:<10} rate={:.6} bits  distortion={:.6}  iters={}{}",
            p.beta,
            p.rate_bits,
            p.distortion,
            p.iterations,
            if p.converged { "" } else { " (not converged)" }
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn run_experiment_cmd(file: FileConfig) -> Result<()> {
    let config = file.resolve()?;
    let out_dir = file.out_dir();
    let results = run_experiment(&config)?;
    for f in &results.failures {
        eprintln!("warning: {} seed {} failed: {}", f.agent, f.seed, f.message);
    }
    if results.trajectories.is_empty() {
        bail!("every episode failed");
    }
    let written = emit_outputs(&results, &out_dir, file.output_options())?;

    let gamma_bound = default_info_ratio_bound(config.num_arms);
    for agent in &config.agents {
        let Some(row) = results.summary.final_row(agent) else {
            continue;
        };
        let mut line = format!(
            "{:<28} final cum regret {:>9.3}  95% CI [{:.3}, {:.3}]",
            agent.to_string(),
            row.mean_cum_regret,
            row.ci95_lo,
            row.ci95_hi
        );
        let reports: Vec<_> = results
            .trajectories
            .iter()
            .filter(|t| t.agent == *agent)
            .filter_map(|t| bound_report(t, gamma_bound))
            .collect::<Result<_, _>>()?;
        if !reports.is_empty() {
            let holds = reports.iter().filter(|r| r.holds()).count();
            line.push_str(&format!("  bound holds {holds}/{}", reports.len()));
        }
        println!("{line}");
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => run_experiment_cmd(args.into_file_config()?),
        Command::Sweep { betas, common } => {
            let mut file = common.into_file_config()?;
            file.beta.get_or_insert_with(Vec::new).extend(betas);
            run_experiment_cmd(file)
        }
        Command::RdCurve(args) => run_rd_curve(args),
        Command::Plot {
            summary,
            out,
            force,
        } => {
            let summary = summary.unwrap_or_else(|| out.join(SUMMARY_FILE));
            let series = read_summary_series(&summary)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let target = out.join(SVG_FILE);
            if target.exists() && !force {
                bail!(
                    "refusing to overwrite {} (pass --force to replace it)",
                    target.display()
                );
            }
            std::fs::write(&target, render_svg(&series))
                .with_context(|| format!("writing {}", target.display()))?;
            println!("wrote {}", target.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
