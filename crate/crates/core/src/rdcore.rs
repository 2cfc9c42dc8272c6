//! Base-2 Blahut-Arimoto solver for the Lagrangian rate-distortion problem
//! over a finite, weighted source.
//!
//! The solver minimizes `I(E; A) + beta * E[d(E, A)]` over channels
//! `p(a | z)`. Every information quantity is in bits and the update uses
//! `2^(-beta * d)`, so `beta` is the (negated) slope of the rate-distortion
//! curve in bits per unit of distortion. Runs with a natural-base exponent
//! use a `beta` that is larger by a factor of `1 / ln 2`.
//!
//! Updates are carried out in the log domain with a max-shifted
//! normalization, so no channel row can underflow to all zeros however
//! large `beta` gets.

use std::io::Write;

use crate::error::{Error, Result};

/// Tolerance on row sums and total mass of probability vectors.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Floor applied to marginal entries that are exactly zero before taking
/// their logarithm.
pub const MARGINAL_FLOOR_LOG2: f64 = -60.0;

/// Mutual information below this is reported as exactly zero.
const MI_ROUNDING_FLOOR: f64 = 1e-14;

/// Default stopping threshold on the change in expected distortion.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Default iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 100;

fn check_distribution(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidDistribution(format!("{what} is empty")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "{what} has non-finite entry {v}"
        )));
    }
    if let Some(v) = values.iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what} has negative entry {v}"
        )));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Probability weights over the source points.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceWeights(Vec<f64>);

impl SourceWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_distribution(&weights, "source weights")?;
        Ok(Self(weights))
    }

    /// Equal weight on `n` points, the empirical analog of a posterior
    /// expectation over `n` samples.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution(
                "source weights need at least one point".into(),
            ));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Nonnegative `Z x A` distortion matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DistortionMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "distortion matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "distortion matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distortion matrix"));
        }
        if let Some(v) = data.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "distortion entries must be nonnegative, got {v}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (r, c, data) = flatten(rows, "distortion matrix")?;
        Self::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.data[z * self.cols..(z + 1) * self.cols]
    }

    pub fn get(&self, z: usize, a: usize) -> f64 {
        self.data[z * self.cols + a]
    }
}

/// Row-stochastic `Z x A` conditional distribution `p(a | z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Channel {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "channel must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "channel {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("channel"));
        }
        for z in 0..rows {
            check_distribution(&data[z * cols..(z + 1) * cols], &format!("channel row {z}"))?;
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (r, c, data) = flatten(rows, "channel")?;
        Self::new(r, c, data)
    }

    /// Every row uniform over the `cols` outputs.
    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "channel must be non-empty, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: vec![1.0 / cols as f64; rows * cols],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.data[z * self.cols..(z + 1) * self.cols]
    }

    pub fn get(&self, z: usize, a: usize) -> f64 {
        self.data[z * self.cols + a]
    }

    /// Output marginal `q(a) = sum_z w_z p(a | z)`.
    pub fn marginal(&self, weights: &SourceWeights) -> Result<Marginal> {
        if weights.len() != self.rows {
            return Err(Error::Dimension(format!(
                "{} source weights for a channel with {} rows",
                weights.len(),
                self.rows
            )));
        }
        let mut q = vec![0.0; self.cols];
        accumulate_marginal(&self.data, weights.as_slice(), self.cols, &mut q);
        Ok(Marginal(q))
    }
}

fn flatten(rows: &[Vec<f64>], what: &str) -> Result<(usize, usize, Vec<f64>)> {
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension(format!(
            "{what} rows have unequal lengths"
        )));
    }
    Ok((rows.len(), cols, rows.concat()))
}

fn accumulate_marginal(channel: &[f64], weights: &[f64], cols: usize, q: &mut [f64]) {
    q.iter_mut().for_each(|v| *v = 0.0);
    for (row, &w) in channel.chunks_exact(cols).zip(weights) {
        for (qa, &p) in q.iter_mut().zip(row) {
            *qa += w * p;
        }
    }
}

/// Output marginal of a channel under the source weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal(Vec<f64>);

impl Marginal {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Converged output of [`solve_rate_distortion`].
#[derive(Debug, Clone)]
pub struct RdSolution {
    pub channel: Channel,
    /// Marginal induced by `channel`.
    pub marginal: Marginal,
    pub rate_bits: f64,
    pub distortion: f64,
    pub iterations: usize,
    /// True when the distortion change fell below `tol` before or at the
    /// iteration cap.
    pub converged: bool,
    /// `rate + beta * distortion` for the initial uniform channel followed by
    /// one entry per iteration, so its length is `iterations + 1`.
    pub lagrangian_trace: Vec<f64>,
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() {
        return Err(Error::NonFinite("beta"));
    }
    if beta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    Ok(())
}

fn check_dims(channel: &Channel, weights: &SourceWeights, d: &DistortionMatrix) -> Result<()> {
    if channel.rows != weights.len() || d.rows != weights.len() {
        return Err(Error::Dimension(format!(
            "channel has {} rows, distortion has {} rows, weights have {} entries",
            channel.rows,
            d.rows,
            weights.len()
        )));
    }
    if channel.cols != d.cols {
        return Err(Error::Dimension(format!(
            "channel has {} columns, distortion has {}",
            channel.cols, d.cols
        )));
    }
    Ok(())
}

/// Scratch buffers for repeated updates on one instance.
struct Workspace {
    cols: usize,
    log_q: Vec<f64>,
    logits: Vec<f64>,
}

/// Statistics of a freshly updated channel, gathered during the update.
struct StepStats {
    /// `sum_z w_z sum_a p log2 p`, i.e. minus the conditional entropy.
    neg_cond_entropy: f64,
}

impl Workspace {
    fn new(cols: usize) -> Self {
        Self {
            cols,
            log_q: vec![0.0; cols],
            logits: vec![0.0; cols],
        }
    }

    /// Writes `p'(a|z) ∝ q(a) 2^(-beta d[z][a])` into `out` given marginal `q`.
    fn update(
        &mut self,
        q: &[f64],
        weights: &[f64],
        d: &DistortionMatrix,
        beta: f64,
        out: &mut [f64],
    ) -> StepStats {
        for (lq, &qa) in self.log_q.iter_mut().zip(q) {
            *lq = if qa > 0.0 {
                qa.log2()
            } else {
                MARGINAL_FLOOR_LOG2
            };
        }
        let mut neg_cond_entropy = 0.0;
        for ((row_out, d_row), &w) in out
            .chunks_exact_mut(self.cols)
            .zip(d.data.chunks_exact(self.cols))
            .zip(weights)
        {
            let mut max = f64::NEG_INFINITY;
            for ((s, &lq), &dist) in self.logits.iter_mut().zip(&self.log_q).zip(d_row) {
                *s = lq - beta * dist;
                if *s > max {
                    max = *s;
                }
            }
            let mut total = 0.0;
            for (p, &s) in row_out.iter_mut().zip(&self.logits) {
                *p = (s - max).exp2();
                total += *p;
            }
            let log_total = total.log2();
            let mut row_plogp = 0.0;
            for (p, &s) in row_out.iter_mut().zip(&self.logits) {
                *p /= total;
                if *p > 0.0 {
                    row_plogp += *p * (s - max - log_total);
                }
            }
            neg_cond_entropy += w * row_plogp;
        }
        StepStats { neg_cond_entropy }
    }
}

fn entropy_bits(q: &[f64]) -> f64 {
    q.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum()
}

fn distortion_of(channel: &[f64], weights: &[f64], d: &DistortionMatrix) -> f64 {
    channel
        .chunks_exact(d.cols)
        .zip(d.data.chunks_exact(d.cols))
        .zip(weights)
        .map(|((p_row, d_row), &w)| {
            w * p_row
                .iter()
                .zip(d_row)
                .map(|(p, dist)| p * dist)
                .sum::<f64>()
        })
        .sum()
}

/// One Blahut-Arimoto step: computes the marginal `q` of `channel`, then the
/// updated channel `p'(a|z) ∝ q(a) 2^(-beta d[z][a])`.
///
/// Returns the updated channel together with the marginal it was built from.
pub fn ba_iterate(
    channel: &Channel,
    weights: &SourceWeights,
    d: &DistortionMatrix,
    beta: f64,
) -> Result<(Channel, Marginal)> {
    check_beta(beta)?;
    check_dims(channel, weights, d)?;
    let q = channel.marginal(weights)?;
    let mut out = vec![0.0; channel.data.len()];
    Workspace::new(d.cols).update(q.as_slice(), weights.as_slice(), d, beta, &mut out);
    Ok((
        Channel {
            rows: channel.rows,
            cols: channel.cols,
            data: out,
        },
        q,
    ))
}

/// Runs Blahut-Arimoto from the uniform channel until the expected distortion
/// changes by less than `tol` between consecutive iterates, or `max_iters`
/// updates have been made.
pub fn solve_rate_distortion(
    weights: &SourceWeights,
    d: &DistortionMatrix,
    beta: f64,
    max_iters: usize,
    tol: f64,
) -> Result<RdSolution> {
    check_beta(beta)?;
    if max_iters == 0 {
        return Err(Error::InvalidParameter(
            "max_iters must be at least 1".into(),
        ));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "tol must be positive and finite, got {tol}"
        )));
    }
    let mut current = Channel::uniform(d.rows, d.cols)?;
    check_dims(&current, weights, d)?;
    let w = weights.as_slice();

    let mut ws = Workspace::new(d.cols);
    let mut next = vec![0.0; current.data.len()];
    let mut q = vec![0.0; d.cols];

    let mut distortion = distortion_of(&current.data, w, d);
    let mut trace = Vec::with_capacity(max_iters + 1);
    trace.push(beta * distortion);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        accumulate_marginal(&current.data, w, d.cols, &mut q);
        let stats = ws.update(&q, w, d, beta, &mut next);
        std::mem::swap(&mut current.data, &mut next);
        iterations += 1;

        accumulate_marginal(&current.data, w, d.cols, &mut q);
        let rate = (entropy_bits(&q) + stats.neg_cond_entropy).max(0.0);
        let new_distortion = distortion_of(&current.data, w, d);
        trace.push(rate + beta * new_distortion);
        let delta = (new_distortion - distortion).abs();
        distortion = new_distortion;
        if delta < tol {
            converged = true;
            break;
        }
    }

    let marginal = Marginal(q);
    let rate_bits = mutual_information_bits(weights, &current)?;
    Ok(RdSolution {
        channel: current,
        marginal,
        rate_bits,
        distortion,
        iterations,
        converged,
        lagrangian_trace: trace,
    })
}

/// Mutual information `I(Z; A)` in bits between the source and the channel
/// output.
pub fn mutual_information_bits(weights: &SourceWeights, channel: &Channel) -> Result<f64> {
    let q = channel.marginal(weights)?;
    let q = q.as_slice();
    let mut total = 0.0;
    for (row, &w) in channel
        .data
        .chunks_exact(channel.cols)
        .zip(weights.as_slice())
    {
        if w == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for (&p, &qa) in row.iter().zip(q) {
            // qa can underflow to zero when w * p is subnormal; the term is
            // then below resolution anyway.
            if p > 0.0 && qa > 0.0 {
                inner += p * (p.log2() - qa.log2());
            }
        }
        total += w * inner;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("mutual information"));
    }
    // Uniform-like channels leave rounding residue of a few ulps.
    Ok(if total < MI_ROUNDING_FLOOR {
        0.0
    } else {
        total
    })
}

/// `sum_z w_z sum_a p(a|z) d[z][a]`.
pub fn expected_distortion(
    weights: &SourceWeights,
    channel: &Channel,
    d: &DistortionMatrix,
) -> Result<f64> {
    check_dims(channel, weights, d)?;
    Ok(distortion_of(&channel.data, weights.as_slice(), d))
}

/// One point of a rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub beta: f64,
    pub rate_bits: f64,
    pub distortion: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves one rate-distortion problem per `beta`, returning points ordered by
/// ascending `beta`.
pub fn rd_curve(
    weights: &SourceWeights,
    d: &DistortionMatrix,
    betas: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<Vec<RdPoint>> {
    if betas.is_empty() {
        return Err(Error::InvalidParameter("betas must be non-empty".into()));
    }
    for &b in betas {
        check_beta(b)?;
    }
    let mut sorted = betas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .into_iter()
        .map(|beta| {
            let sol = solve_rate_distortion(weights, d, beta, max_iters, tol)?;
            Ok(RdPoint {
                beta,
                rate_bits: sol.rate_bits,
                distortion: sol.distortion,
                iterations: sol.iterations,
                converged: sol.converged,
            })
        })
        .collect()
}

pub const RD_CURVE_HEADER: [&str; 5] =
    ["beta", "rate_bits", "distortion", "iterations", "converged"];

/// Writes curve points as CSV with the header
/// `beta,rate_bits,distortion,iterations,converged`.
pub fn write_rd_curve_csv<W: Write>(points: &[RdPoint], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(RD_CURVE_HEADER)?;
    for p in points {
        writer.write_record([
            p.beta.to_string(),
            p.rate_bits.to_string(),
            p.distortion.to_string(),
            p.iterations.to_string(),
            p.converged.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
