//! Monte Carlo cross-validation of the closed-form SCR and allocations.
//!
//! The centred-normal reading of the standard formula makes the two-level
//! square-root aggregate equal to the 99.5% value-at-risk of a sum of
//! jointly normal losses whose correlation is the macro matrix within each
//! block and the single cross-macro coefficient between blocks. This module
//! samples that joint distribution and estimates the VaR and the
//! conditional-expectation contributions `E[Y_i | Y = VaR]`, which the
//! closed-form Euler allocations must match. Everything here runs in `f64`;
//! generic trees are widened on entry.
//!
//! Sampling is chunked: chunk `c` draws from its own counter-derived
//! substream, so results are bit-identical for a fixed seed regardless of
//! thread count, and the contribution accumulators are combined in chunk
//! order after the parallel phase for the same reason.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::allocate::{allocate_tree, AllocateError};
use crate::linalg;
use crate::model::RiskTree;
use crate::normal;
use crate::scalar::Real;

/// Minimum number of samples the VaR window must contain.
pub const MIN_WINDOW_SAMPLES: usize = 100;

/// Threshold on the `|z|` score beyond which a comparison row is flagged.
pub const Z_FLAG_THRESHOLD: f64 = 4.0;

const CHUNK_SIZE: usize = 16_384;

/// Monte Carlo failures.
#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid Monte Carlo configuration: {detail}")]
    InvalidConfig { detail: String },
    #[error(
        "micro-level correlation is not positive semidefinite (min eigenvalue {min_eigenvalue:.6e}); enable eigenvalue-clipping repair to proceed"
    )]
    NotPsd { min_eigenvalue: f64 },
    #[error(
        "only {count} samples fall in the VaR window (need at least {required}); increase sample_count or window_fraction"
    )]
    EmptyWindow { count: usize, required: usize },
    #[error(transparent)]
    ClosedForm(#[from] AllocateError),
}

/// How to handle an indefinite micro-level correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PsdRepair {
    /// Reject the matrix.
    Off,
    /// Clip negative eigenvalues to zero and rescale to unit diagonal.
    ClipEigenvalues,
}

/// Simulation configuration.
#[derive(Debug, Clone, Serialize)]
pub struct McConfig {
    pub sample_count: usize,
    pub seed: u64,
    /// Confidence level of the estimated value-at-risk.
    pub var_level: f64,
    /// Half-width of the conditioning window, as a fraction of the sample
    /// count on each side of the VaR rank.
    pub window_fraction: f64,
    pub psd_repair: PsdRepair,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            sample_count: 1_000_000,
            seed: 0,
            var_level: 0.995,
            window_fraction: 0.001,
            psd_repair: PsdRepair::Off,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<(), McError> {
        if self.sample_count == 0 {
            return Err(McError::InvalidConfig {
                detail: "sample_count must be positive".into(),
            });
        }
        if !(self.var_level > 0.0 && self.var_level < 1.0) {
            return Err(McError::InvalidConfig {
                detail: format!("var_level {} is outside (0, 1)", self.var_level),
            });
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 0.05) {
            return Err(McError::InvalidConfig {
                detail: format!(
                    "window_fraction {} is outside (0, 0.05]",
                    self.window_fraction
                ),
            });
        }
        Ok(())
    }
}

/// Covariance of the joint normal losses over all micro coordinates.
#[derive(Debug, Clone)]
pub struct Covariance {
    labels: Vec<String>,
    macro_ids: Vec<String>,
    /// For each coordinate, the index of its macro in `macro_ids`.
    leaf_macro: Vec<usize>,
    matrix: DMatrix<f64>,
    repaired: bool,
    min_correlation_eigenvalue: f64,
}

impl Covariance {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Leaf paths `macro/micro`, in tree order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn macro_ids(&self) -> &[String] {
        &self.macro_ids
    }

    /// Whether eigenvalue clipping changed the correlation structure.
    pub fn repaired(&self) -> bool {
        self.repaired
    }

    /// Smallest eigenvalue of the assembled correlation before any repair.
    pub fn min_correlation_eigenvalue(&self) -> f64 {
        self.min_correlation_eigenvalue
    }
}

/// Builds the joint covariance over all micro coordinates.
///
/// Standard deviations are the SCRs divided by the normal quantile at the
/// configured level. Correlations come from the macro matrices within each
/// block. Across blocks the structure is one-factor: micro `x` of block `i`
/// and micro `w` of block `j` get `rho_ij * a_ix * a_jw`, where `a_ix` is
/// the implied correlation of the micro with its own block sum,
/// `(R_i sigma_i)_x / sqrt(sigma_i' R_i sigma_i)`. This is exactly the
/// Gaussian model whose block sums have correlation `rho_ij`, so the
/// portfolio VaR reproduces the two-level square-root aggregate and the
/// Euler contributions converge to the closed-form allocations.
pub fn build_covariance<T: Real>(
    tree: &RiskTree<T>,
    config: &McConfig,
) -> Result<Covariance, McError> {
    config.validate()?;

    let macro_ids: Vec<String> = tree.macros.iter().map(|g| g.id.clone()).collect();
    let mut labels = Vec::with_capacity(tree.micro_count());
    let mut leaf_macro = Vec::with_capacity(tree.micro_count());
    let mut sigmas = Vec::with_capacity(tree.micro_count());
    // (macro index, index within macro) per coordinate.
    let mut coords = Vec::with_capacity(tree.micro_count());
    let alpha = normal::quantile(config.var_level);
    for (gi, g) in tree.macros.iter().enumerate() {
        for (mi, m) in g.micros.iter().enumerate() {
            labels.push(format!("{}/{}", g.id, m.id));
            leaf_macro.push(gi);
            sigmas.push(m.scr.as_f64() / alpha);
            coords.push((gi, mi));
        }
    }

    let d = labels.len();

    // Implied correlation of each micro with its block sum. Zero-variance
    // blocks contribute no cross-block coupling.
    let mut block_factor = vec![0.0f64; d];
    let mut offset = 0usize;
    for g in &tree.macros {
        let k = g.micros.len();
        let sig = &sigmas[offset..offset + k];
        for x in 0..k {
            let mut r_sig = 0.0;
            for (w, &sw) in sig.iter().enumerate() {
                r_sig += g.correlation.at(x, w).as_f64() * sw;
            }
            block_factor[offset + x] = r_sig;
        }
        let radicand: f64 = (0..k).map(|x| sig[x] * block_factor[offset + x]).sum();
        let block_sigma = radicand.max(0.0).sqrt();
        for x in 0..k {
            block_factor[offset + x] = if block_sigma > 0.0 {
                block_factor[offset + x] / block_sigma
            } else {
                0.0
            };
        }
        offset += k;
    }

    let mut corr = DMatrix::zeros(d, d);
    for a in 0..d {
        let (ga, xa) = coords[a];
        for b in 0..d {
            let (gb, xb) = coords[b];
            corr[(a, b)] = if a == b {
                1.0
            } else if ga == gb {
                tree.macros[ga].correlation.at(xa, xb).as_f64()
            } else {
                tree.correlation.at(ga, gb).as_f64() * block_factor[a] * block_factor[b]
            };
        }
    }

    let min_eigenvalue = linalg::min_symmetric_eigenvalue(&corr);
    let mut repaired = false;
    if min_eigenvalue < -1e-10 {
        match config.psd_repair {
            PsdRepair::Off => {
                return Err(McError::NotPsd {
                    min_eigenvalue,
                });
            }
            PsdRepair::ClipEigenvalues => {
                corr = linalg::clip_to_correlation(&corr);
                repaired = true;
            }
        }
    }

    let mut matrix = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            matrix[(a, b)] = corr[(a, b)] * sigmas[a] * sigmas[b];
        }
    }

    Ok(Covariance {
        labels,
        macro_ids,
        leaf_macro,
        matrix,
        repaired,
        min_correlation_eigenvalue: min_eigenvalue,
    })
}

/// Estimated value-at-risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarEstimate {
    pub value: f64,
    /// Order-statistic asymptotic standard error.
    pub std_error: f64,
}

/// One node's estimated Euler contribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionEstimate {
    pub node: String,
    pub estimate: f64,
    /// Combined window-sampling and window-location standard error.
    pub std_error: f64,
}

/// Full simulation output.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub var: VarEstimate,
    pub macro_contributions: Vec<ContributionEstimate>,
    pub micro_contributions: Vec<ContributionEstimate>,
    /// Samples that fell inside the conditioning window.
    pub window_count: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub var_level: f64,
}

/// One row of the closed-form versus Monte Carlo comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    /// `total`, a macro id, or a `macro/micro` leaf path.
    pub node: String,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub flagged: bool,
}

/// Closed-form versus Monte Carlo cross-validation report.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub max_abs_z: f64,
    pub any_flagged: bool,
    pub repaired: bool,
    pub window_count: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub var_level: f64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent substream for one chunk, derived from (seed, chunk index).
fn substream(seed: u64, chunk: u64) -> ChaCha12Rng {
    let mut state = seed ^ chunk.wrapping_mul(0xA24B_AED4_963E_E407);
    let mut key = [0u8; 32];
    for word in key.chunks_exact_mut(8) {
        word.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Portfolio sums `w . z` per sample, where `w = L^T 1` collapses the
/// factor so the first pass needs no per-coordinate storage.
fn portfolio_sums(weights: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let mut sums = vec![0.0f64; n];
    sums.par_chunks_mut(CHUNK_SIZE)
        .enumerate()
        .for_each(|(ci, out)| {
            let mut rng = substream(seed, ci as u64);
            for slot in out.iter_mut() {
                let mut acc = 0.0;
                for &w in weights {
                    let z: f64 = rng.sample(StandardNormal);
                    acc += w * z;
                }
                *slot = acc;
            }
        });
    sums
}

/// `k`-th smallest of the values at quantile `level` (empirical inverse
/// CDF, left-continuous convention).
fn order_statistic(values: &mut [f64], level: f64) -> f64 {
    let n = values.len();
    let k = ((n as f64 * level).ceil() as usize)
        .saturating_sub(1)
        .min(n - 1);
    let (_, kth, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    *kth
}

struct VarWithWindow {
    var: VarEstimate,
    window_lo: f64,
    window_hi: f64,
}

fn estimate_var_and_window(
    sums: &[f64],
    config: &McConfig,
) -> Result<VarWithWindow, McError> {
    let n = sums.len();
    let p = config.var_level;
    let mut buf = sums.to_vec();

    let value = order_statistic(&mut buf, p);

    // Asymptotic SE of the order statistic: sqrt(p(1-p)/n) / f(VaR), with
    // the density estimated from the quantile spread over a +-delta band.
    let half = (p * (1.0 - p) / n as f64).sqrt();
    let delta = (4.0 * half).min((1.0 - p) / 2.0).min(p / 2.0);
    let std_error = if delta > 0.0 {
        let q_lo = order_statistic(&mut buf, p - delta);
        let q_hi = order_statistic(&mut buf, p + delta);
        half * (q_hi - q_lo) / (2.0 * delta)
    } else {
        0.0
    };

    // The rank band around the level gives the window's value bounds.
    // Whether enough samples actually land inside is checked by the
    // membership pass, so degenerate (heavily tied) data still estimates
    // a VaR.
    let lo_level = (p - config.window_fraction).max(0.0);
    let hi_level = (p + config.window_fraction).min(1.0);
    let window_lo = order_statistic(&mut buf, lo_level);
    let window_hi = order_statistic(&mut buf, hi_level);

    Ok(VarWithWindow {
        var: VarEstimate { value, std_error },
        window_lo,
        window_hi,
    })
}

/// Estimates the portfolio VaR at the configured level.
pub fn simulate_var(cov: &Covariance, config: &McConfig) -> Result<VarEstimate, McError> {
    config.validate()?;
    let factor = linalg::psd_factor(&cov.matrix);
    let weights = factor_column_sums(&factor);
    let sums = portfolio_sums(&weights, config.sample_count, config.seed);
    Ok(estimate_var_and_window(&sums, config)?.var)
}

fn factor_column_sums(factor: &DMatrix<f64>) -> Vec<f64> {
    (0..factor.ncols())
        .map(|j| factor.column(j).iter().sum())
        .collect()
}

#[derive(Clone)]
struct WindowAccum {
    count: u64,
    coord_sum: Vec<f64>,
    coord_sq: Vec<f64>,
    macro_sum: Vec<f64>,
    macro_sq: Vec<f64>,
}

impl WindowAccum {
    fn new(d: usize, g: usize) -> Self {
        Self {
            count: 0,
            coord_sum: vec![0.0; d],
            coord_sq: vec![0.0; d],
            macro_sum: vec![0.0; g],
            macro_sq: vec![0.0; g],
        }
    }

    fn merge(&mut self, other: &WindowAccum) {
        self.count += other.count;
        for (a, b) in self.coord_sum.iter_mut().zip(&other.coord_sum) {
            *a += b;
        }
        for (a, b) in self.coord_sq.iter_mut().zip(&other.coord_sq) {
            *a += b;
        }
        for (a, b) in self.macro_sum.iter_mut().zip(&other.macro_sum) {
            *a += b;
        }
        for (a, b) in self.macro_sq.iter_mut().zip(&other.macro_sq) {
            *a += b;
        }
    }
}

/// Estimates the VaR and the per-node Euler contributions
/// `E[Y_node | Y in VaR window]`.
pub fn estimate_contributions(
    cov: &Covariance,
    config: &McConfig,
) -> Result<McEstimate, McError> {
    config.validate()?;
    let d = cov.dim();
    let g = cov.macro_ids.len();
    let factor = linalg::psd_factor(&cov.matrix);
    let weights = factor_column_sums(&factor);
    let n = config.sample_count;

    let sums = portfolio_sums(&weights, n, config.seed);
    let vw = estimate_var_and_window(&sums, config)?;
    drop(sums);

    // Second pass: regenerate each chunk's draws (identical substreams),
    // recompute the portfolio sum with the same operation order, and
    // accumulate coordinates for samples inside the window. Per-chunk
    // accumulators are collected in chunk order and merged sequentially so
    // the result does not depend on thread scheduling.
    let chunk_count = n.div_ceil(CHUNK_SIZE);
    let factor_rows: Vec<Vec<f64>> = (0..d)
        .map(|i| factor.row(i).iter().copied().collect())
        .collect();
    let partials: Vec<WindowAccum> = (0..chunk_count)
        .into_par_iter()
        .map(|ci| {
            let mut acc = WindowAccum::new(d, g);
            let mut rng = substream(config.seed, ci as u64);
            let chunk_len = CHUNK_SIZE.min(n - ci * CHUNK_SIZE);
            let mut z = vec![0.0f64; d];
            let mut y = vec![0.0f64; d];
            for _ in 0..chunk_len {
                let mut s = 0.0;
                for (zk, &w) in z.iter_mut().zip(&weights) {
                    *zk = rng.sample(StandardNormal);
                    s += w * *zk;
                }
                if s < vw.window_lo || s > vw.window_hi {
                    continue;
                }
                acc.count += 1;
                let mut macro_part = vec![0.0f64; g];
                for i in 0..d {
                    let row = &factor_rows[i];
                    let mut yi = 0.0;
                    for (l, zk) in row.iter().zip(&z) {
                        yi += l * zk;
                    }
                    y[i] = yi;
                    acc.coord_sum[i] += yi;
                    acc.coord_sq[i] += yi * yi;
                    macro_part[cov.leaf_macro[i]] += yi;
                }
                for (gi, part) in macro_part.iter().enumerate() {
                    acc.macro_sum[gi] += part;
                    acc.macro_sq[gi] += part * part;
                }
            }
            acc
        })
        .collect();

    let mut total = WindowAccum::new(d, g);
    for p in &partials {
        total.merge(p);
    }

    let count = total.count as usize;
    if count < MIN_WINDOW_SAMPLES {
        return Err(McError::EmptyWindow {
            count,
            required: MIN_WINDOW_SAMPLES,
        });
    }

    // A contribution estimate carries two error sources: the sampling noise
    // of the conditional mean inside the window, and the placement of the
    // window itself, which sits on the empirical quantile. Conditional means
    // scale linearly with the window center, each in proportion to its own
    // share of the VaR, so the location term is the VaR standard error
    // scaled by that share.
    let var_estimate = vw.var;
    let to_estimates = |nodes: &[String], sum: &[f64], sq: &[f64]| {
        nodes
            .iter()
            .zip(sum.iter().zip(sq))
            .map(|(node, (&s, &q))| {
                let mean = s / count as f64;
                let var = ((q - count as f64 * mean * mean) / (count as f64 - 1.0)).max(0.0);
                let within = var / count as f64;
                let location = if var_estimate.value != 0.0 {
                    (mean / var_estimate.value) * var_estimate.std_error
                } else {
                    0.0
                };
                ContributionEstimate {
                    node: node.clone(),
                    estimate: mean,
                    std_error: (within + location * location).sqrt(),
                }
            })
            .collect::<Vec<_>>()
    };

    Ok(McEstimate {
        var: vw.var,
        macro_contributions: to_estimates(&cov.macro_ids, &total.macro_sum, &total.macro_sq),
        micro_contributions: to_estimates(&cov.labels, &total.coord_sum, &total.coord_sq),
        window_count: count,
        sample_count: n,
        seed: config.seed,
        var_level: config.var_level,
    })
}

fn comparison_row(node: String, closed: f64, estimate: f64, std_error: f64) -> ComparisonRow {
    let diff = estimate - closed;
    let z_score = if std_error > 0.0 {
        diff / std_error
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    };
    ComparisonRow {
        node,
        closed_form: closed,
        mc_estimate: estimate,
        std_error,
        flagged: z_score.is_nan() || z_score.abs() > Z_FLAG_THRESHOLD,
        z_score,
    }
}

/// Runs the simulation and compares every estimate against the closed-form
/// aggregate and Euler allocations, flagging nodes beyond four standard
/// errors.
pub fn compare_with_closed_form<T: Real>(
    tree: &RiskTree<T>,
    config: &McConfig,
) -> Result<ComparisonReport, McError> {
    let cov = build_covariance(tree, config)?;
    let est = estimate_contributions(&cov, config)?;
    let alloc = allocate_tree(tree)?;

    let mut rows = Vec::with_capacity(1 + est.macro_contributions.len() + est.micro_contributions.len());
    rows.push(comparison_row(
        "total".to_string(),
        alloc.total_scr.as_f64(),
        est.var.value,
        est.var.std_error,
    ));
    for c in &est.macro_contributions {
        let closed = alloc
            .macro_row(&c.node)
            .map(|m| m.allocated.as_f64())
            .unwrap_or(0.0);
        rows.push(comparison_row(c.node.clone(), closed, c.estimate, c.std_error));
    }
    for c in &est.micro_contributions {
        let closed = c
            .node
            .split_once('/')
            .and_then(|(g, m)| alloc.micro_row(g, m))
            .map(|m| m.allocated.as_f64())
            .unwrap_or(0.0);
        rows.push(comparison_row(c.node.clone(), closed, c.estimate, c.std_error));
    }

    let max_abs_z = rows
        .iter()
        .map(|r| r.z_score.abs())
        .fold(0.0f64, f64::max);
    let any_flagged = rows.iter().any(|r| r.flagged);
    Ok(ComparisonReport {
        rows,
        max_abs_z,
        any_flagged,
        repaired: cov.repaired(),
        window_count: est.window_count,
        sample_count: est.sample_count,
        seed: est.seed,
        var_level: est.var_level,
    })
}
