//! Square-root correlation aggregation.
//!
//! One level aggregates standalone capital figures `s` under a correlation
//! matrix `R` as `sqrt(s' R s)`; a tree applies this once inside every macro
//! group and once across the group results. Under the centred-normal reading
//! of SCR the same formula is exact at both levels, which is what makes the
//! closed-form allocation and the Monte Carlo cross-check in this crate
//! comparable.

use thiserror::Error;

use crate::model::{CorrelationMatrix, RiskTree};
use crate::normal;
use crate::scalar::{kahan_sum, Real};

/// Relative tolerance for a negative radicand, scaled by `(sum of SCRs)^2`.
///
/// Valid correlation input cannot drive `s' R s` below zero by more than
/// rounding noise; anything past this band signals a genuinely indefinite
/// matrix and is reported instead of clamped.
pub const RADICAND_TOLERANCE: f64 = 1e-9;

/// Aggregation failures.
#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("{len} SCR entries do not match the {dim}x{dim} correlation matrix at {path:?}")]
    DimensionMismatch { len: usize, dim: usize, path: String },
    #[error("negative SCR {value} at index {index} at {path:?}")]
    NegativeScr { value: f64, index: usize, path: String },
    #[error(
        "quadratic form {radicand:.6e} at {path:?} is negative beyond tolerance {tolerance:.6e}; the correlation matrix is materially indefinite"
    )]
    NegativeRadicand {
        radicand: f64,
        tolerance: f64,
        path: String,
    },
}

/// Aggregated SCRs of a whole tree.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AggregationOutput<T> {
    /// Per-macro aggregated SCRs, in tree order.
    pub macro_scrs: Vec<MacroScr<T>>,
    /// Top-level SCR across macro groups.
    pub total_scr: T,
}

/// One macro group's aggregated SCR.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MacroScr<T> {
    pub id: String,
    pub scr: T,
}

impl<T: Real> AggregationOutput<T> {
    pub fn macro_scr(&self, id: &str) -> Option<T> {
        self.macro_scrs.iter().find(|m| m.id == id).map(|m| m.scr)
    }

    pub(crate) fn scr_vector(&self) -> Vec<T> {
        self.macro_scrs.iter().map(|m| m.scr).collect()
    }
}

/// `sqrt(s' R s)` for one level, with compensated summation of the
/// quadratic form.
///
/// Radicands within `RADICAND_TOLERANCE * (sum s)^2` of zero from below are
/// treated as rounding noise and clamped to zero; more negative values
/// error. SCR entries must be nonnegative and match the matrix dimension.
pub fn aggregate_level<T: Real>(
    scrs: &[T],
    corr: &CorrelationMatrix<T>,
) -> Result<T, AggregateError> {
    aggregate_level_at(scrs, corr, "")
}

fn aggregate_level_at<T: Real>(
    scrs: &[T],
    corr: &CorrelationMatrix<T>,
    path: &str,
) -> Result<T, AggregateError> {
    if scrs.len() != corr.dim() {
        return Err(AggregateError::DimensionMismatch {
            len: scrs.len(),
            dim: corr.dim(),
            path: path.to_string(),
        });
    }
    for (index, s) in scrs.iter().enumerate() {
        if *s < T::zero() || !s.as_f64().is_finite() {
            return Err(AggregateError::NegativeScr {
                value: s.as_f64(),
                index,
                path: path.to_string(),
            });
        }
    }

    let radicand = kahan_sum((0..scrs.len()).map(|i| {
        let row = corr.row(i);
        scrs[i] * kahan_sum(row.iter().zip(scrs).map(|(r, s)| *r * *s))
    }));

    let scale = kahan_sum(scrs.iter().copied());
    let tolerance = T::from_f64(RADICAND_TOLERANCE) * scale * scale;
    if radicand < -tolerance {
        return Err(AggregateError::NegativeRadicand {
            radicand: radicand.as_f64(),
            tolerance: tolerance.as_f64(),
            path: path.to_string(),
        });
    }
    Ok(radicand.max(T::zero()).sqrt())
}

/// Aggregates every macro group, then the top level.
pub fn aggregate_tree<T: Real>(tree: &RiskTree<T>) -> Result<AggregationOutput<T>, AggregateError> {
    let mut macro_scrs = Vec::with_capacity(tree.macros.len());
    for g in &tree.macros {
        let scr = aggregate_level_at(&g.micro_scrs(), &g.correlation, &g.id)?;
        macro_scrs.push(MacroScr {
            id: g.id.clone(),
            scr,
        });
    }
    let level: Vec<T> = macro_scrs.iter().map(|m| m.scr).collect();
    let total_scr = aggregate_level_at(&level, &tree.correlation, &tree.name)?;
    Ok(AggregationOutput {
        macro_scrs,
        total_scr,
    })
}

/// Standard deviation of the centred normal whose 99.5% value-at-risk
/// equals `scr`.
pub fn implied_sigma<T: Real>(scr: T) -> T {
    implied_sigma_at(scr, 0.995)
}

/// As [`implied_sigma`] at an arbitrary confidence level in (0.5, 1).
pub fn implied_sigma_at<T: Real>(scr: T, level: f64) -> T {
    scr / T::from_f64(normal::quantile(level))
}
