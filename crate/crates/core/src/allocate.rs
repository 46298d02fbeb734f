//! Euler capital allocation on the two-level tree.
//!
//! The square-root aggregate is positively homogeneous, so Euler's theorem
//! splits it along gradient directions:
//!
//! * macro level: `allocated_i = s_i * (R s)_i / total`
//! * micro level: `allocated_ix = s_ix * (R_i s_i)_x / s_i * AR_i`
//!
//! where `AR_i = allocated_i / s_i` is the macro's allocation ratio. The
//! micro formula is the chain rule through the macro aggregate, so the
//! allocations sum back exactly at both levels and equal each micro SCR
//! times the total's partial derivative in that micro SCR.

use serde::Serialize;
use thiserror::Error;

use crate::aggregate::{aggregate_tree, AggregateError, AggregationOutput};
use crate::model::{NodeRef, RiskTree};
use crate::scalar::{kahan_sum, Real};

/// Allocation failures.
#[derive(Debug, Error)]
pub enum AllocateError {
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(
        "total SCR is zero while macro {macro_id:?} has standalone SCR {standalone}; Euler contributions are undefined"
    )]
    ZeroTotalScr { macro_id: String, standalone: f64 },
    #[error(
        "macro {macro_id:?} has zero SCR while micro {micro_id:?} has standalone SCR {standalone}; Euler contributions are undefined"
    )]
    ZeroMacroScr {
        macro_id: String,
        micro_id: String,
        standalone: f64,
    },
}

/// One macro group's allocation row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroAllocation<T> {
    pub id: String,
    /// Aggregated standalone SCR of the group.
    pub standalone: T,
    /// Euler contribution to the total SCR.
    pub allocated: T,
    /// `allocated / standalone`; kept meaningful at zero standalone by
    /// falling back to the gradient factor itself.
    pub allocation_ratio: T,
    /// `standalone - allocated`.
    pub diversification: T,
}

/// One micro risk's allocation row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicroAllocation<T> {
    pub macro_id: String,
    pub micro_id: String,
    pub standalone: T,
    /// Euler contribution to the total SCR through the macro level.
    pub allocated: T,
    pub diversification: T,
}

/// Full allocation of a tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationResult<T> {
    pub macros: Vec<MacroAllocation<T>>,
    pub micros: Vec<MicroAllocation<T>>,
    pub total_scr: T,
}

impl<T: Real> AllocationResult<T> {
    pub fn macro_row(&self, id: &str) -> Option<&MacroAllocation<T>> {
        self.macros.iter().find(|m| m.id == id)
    }

    pub fn micro_row(&self, macro_id: &str, micro_id: &str) -> Option<&MicroAllocation<T>> {
        self.micros
            .iter()
            .find(|m| m.macro_id == macro_id && m.micro_id == micro_id)
    }

    /// Allocated capital for a node reference, if the node exists.
    pub fn allocated_for(&self, node: &NodeRef) -> Option<T> {
        match node {
            NodeRef::Macro { macro_id } => self.macro_row(macro_id).map(|m| m.allocated),
            NodeRef::Micro { macro_id, micro_id } => {
                self.micro_row(macro_id, micro_id).map(|m| m.allocated)
            }
        }
    }
}

/// Partial derivative of the total SCR in one micro SCR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientEntry<T> {
    pub macro_id: String,
    pub micro_id: String,
    pub value: T,
}

/// Gradient factor `(R s)_i / aggregate` with the zero conventions spelled
/// out: a level that aggregates to zero can only have all-zero members
/// (anything else is an error handled by the callers), and then every
/// contribution factor is zero.
fn level_factors<T: Real>(scrs: &[T], corr: &crate::model::CorrelationMatrix<T>, level_scr: T) -> Vec<T> {
    (0..scrs.len())
        .map(|i| {
            if level_scr > T::zero() {
                kahan_sum(corr.row(i).iter().zip(scrs).map(|(r, s)| *r * *s)) / level_scr
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Euler allocation of the total SCR to macro groups.
pub fn allocate_macros<T: Real>(
    tree: &RiskTree<T>,
    agg: &AggregationOutput<T>,
) -> Result<Vec<MacroAllocation<T>>, AllocateError> {
    let scrs = agg.scr_vector();
    if agg.total_scr <= T::zero() {
        if let Some(m) = agg.macro_scrs.iter().find(|m| m.scr > T::zero()) {
            return Err(AllocateError::ZeroTotalScr {
                macro_id: m.id.clone(),
                standalone: m.scr.as_f64(),
            });
        }
    }
    let factors = level_factors(&scrs, &tree.correlation, agg.total_scr);
    Ok(agg
        .macro_scrs
        .iter()
        .zip(factors)
        .map(|(m, factor)| {
            let allocated = m.scr * factor;
            MacroAllocation {
                id: m.id.clone(),
                standalone: m.scr,
                allocated,
                allocation_ratio: factor,
                diversification: m.scr - allocated,
            }
        })
        .collect())
}

/// Euler allocation of each macro's contribution down to its micro risks.
pub fn allocate_micros<T: Real>(
    tree: &RiskTree<T>,
    agg: &AggregationOutput<T>,
    macros: &[MacroAllocation<T>],
) -> Result<Vec<MicroAllocation<T>>, AllocateError> {
    let mut out = Vec::with_capacity(tree.micro_count());
    for (g, alloc) in tree.macros.iter().zip(macros) {
        let scrs = g.micro_scrs();
        let macro_scr = agg.macro_scr(&g.id).unwrap_or_else(T::zero);
        if macro_scr <= T::zero() {
            if let Some(m) = g.micros.iter().find(|m| m.scr > T::zero()) {
                return Err(AllocateError::ZeroMacroScr {
                    macro_id: g.id.clone(),
                    micro_id: m.id.clone(),
                    standalone: m.scr.as_f64(),
                });
            }
        }
        let factors = level_factors(&scrs, &g.correlation, macro_scr);
        for (m, factor) in g.micros.iter().zip(factors) {
            let allocated = m.scr * factor * alloc.allocation_ratio;
            out.push(MicroAllocation {
                macro_id: g.id.clone(),
                micro_id: m.id.clone(),
                standalone: m.scr,
                allocated,
                diversification: m.scr - allocated,
            });
        }
    }
    Ok(out)
}

/// Aggregates and allocates a tree at both levels.
pub fn allocate_tree<T: Real>(tree: &RiskTree<T>) -> Result<AllocationResult<T>, AllocateError> {
    let agg = aggregate_tree(tree)?;
    let macros = allocate_macros(tree, &agg)?;
    let micros = allocate_micros(tree, &agg, &macros)?;
    Ok(AllocationResult {
        macros,
        micros,
        total_scr: agg.total_scr,
    })
}

/// Gradient of the total SCR in every micro SCR, in tree order.
///
/// Componentwise this equals each micro's allocated capital divided by its
/// standalone SCR; it is computed directly from the two chained gradient
/// factors so zero-SCR micros get a well-defined value.
pub fn gradient<T: Real>(tree: &RiskTree<T>) -> Result<Vec<GradientEntry<T>>, AllocateError> {
    let agg = aggregate_tree(tree)?;
    let macros = allocate_macros(tree, &agg)?;
    let mut out = Vec::with_capacity(tree.micro_count());
    for (g, alloc) in tree.macros.iter().zip(&macros) {
        let scrs = g.micro_scrs();
        let macro_scr = agg.macro_scr(&g.id).unwrap_or_else(T::zero);
        if macro_scr <= T::zero() {
            if let Some(m) = g.micros.iter().find(|m| m.scr > T::zero()) {
                return Err(AllocateError::ZeroMacroScr {
                    macro_id: g.id.clone(),
                    micro_id: m.id.clone(),
                    standalone: m.scr.as_f64(),
                });
            }
        }
        let factors = level_factors(&scrs, &g.correlation, macro_scr);
        for (m, factor) in g.micros.iter().zip(factors) {
            out.push(GradientEntry {
                macro_id: g.id.clone(),
                micro_id: m.id.clone(),
                value: factor * alloc.allocation_ratio,
            });
        }
    }
    Ok(out)
}

/// Standalone-versus-allocated comparison for every node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversificationRow<T> {
    /// Macro id, or `macro/micro` path for leaf rows.
    pub node: String,
    pub standalone: T,
    pub allocated: T,
    pub delta: T,
}

/// Diversification summary across the tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversificationReport<T> {
    pub rows: Vec<DiversificationRow<T>>,
    /// Sum of standalone macro SCRs.
    pub total_standalone: T,
    pub total_scr: T,
    /// `total_standalone - total_scr`.
    pub total_diversification: T,
}

/// Tabulates standalone vs allocated capital for every macro and micro.
pub fn diversification_report<T: Real>(result: &AllocationResult<T>) -> DiversificationReport<T> {
    let mut rows = Vec::with_capacity(result.macros.len() + result.micros.len());
    for m in &result.macros {
        rows.push(DiversificationRow {
            node: m.id.clone(),
            standalone: m.standalone,
            allocated: m.allocated,
            delta: m.diversification,
        });
    }
    for m in &result.micros {
        rows.push(DiversificationRow {
            node: format!("{}/{}", m.macro_id, m.micro_id),
            standalone: m.standalone,
            allocated: m.allocated,
            delta: m.diversification,
        });
    }
    let total_standalone = kahan_sum(result.macros.iter().map(|m| m.standalone));
    DiversificationReport {
        rows,
        total_standalone,
        total_scr: result.total_scr,
        total_diversification: total_standalone - result.total_scr,
    }
}
