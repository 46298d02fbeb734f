//! Return on risk-adjusted capital over an allocated tree.
//!
//! Income statistics attach to leaf nodes by `macro/micro` path; each leaf's
//! RORAC divides its expected income by its Euler-allocated capital, so the
//! capital-weighted mean of the leaf figures reproduces the portfolio RORAC
//! exactly. Income volatilities are carried through the same division when
//! present; no dependence between LoB incomes is modelled, so the portfolio
//! volatility figure is the capital-weighted average of the per-leaf ones.

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::aggregate::aggregate_tree;
use crate::allocate::{allocate_tree, AllocateError, AllocationResult};
use crate::model::{NodeRef, RiskTree};
use crate::scalar::{kahan_sum, Real};

/// RORAC computation failures.
#[derive(Debug, Error)]
pub enum RoracError {
    #[error("node {node:?} has income but zero allocated capital")]
    ZeroCapitalWithIncome { node: String },
    #[error("income entry {node:?} does not match any micro risk in the portfolio")]
    UnknownIncomeNode { node: String },
    #[error("income stdev for {node:?} is negative: {value}")]
    NegativeIncomeStdev { node: String, value: f64 },
    #[error("unknown node path {path:?}")]
    UnknownNode { path: String },
    #[error(transparent)]
    Allocation(#[from] AllocateError),
}

/// One leaf's income distribution summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncomeEntry<T> {
    /// Expected one-year income, in currency units.
    pub mean: T,
    /// Income standard deviation, when known.
    pub stdev: Option<T>,
}

/// Income statistics keyed by `macro/micro` leaf path, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IncomeStats<T> {
    entries: IndexMap<String, IncomeEntry<T>>,
}

impl<T: Real> IncomeStats<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    /// Sets the entry for a leaf path, replacing any previous one.
    pub fn insert(&mut self, path: impl Into<String>, entry: IncomeEntry<T>) {
        self.entries.insert(path.into(), entry);
    }

    pub fn get(&self, path: &str) -> Option<&IncomeEntry<T>> {
        self.entries.get(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &IncomeEntry<T>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T: Real> FromIterator<(String, IncomeEntry<T>)> for IncomeStats<T> {
    fn from_iter<I: IntoIterator<Item = (String, IncomeEntry<T>)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

/// One leaf row of the RORAC report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoracRow<T> {
    /// Leaf path `macro/micro`.
    pub node: String,
    /// Display name of the micro risk.
    pub label: String,
    pub income_mean: T,
    pub income_stdev: Option<T>,
    pub allocated: T,
    /// `income_mean / allocated`; zero for zero-income zero-capital leaves.
    pub expected_rorac: T,
    /// `income_stdev / allocated` when the stdev is known.
    pub rorac_stdev: Option<T>,
    /// `rorac_stdev / expected_rorac`; only defined for a known stdev and a
    /// strictly positive expected RORAC.
    pub coefficient_of_variation: Option<T>,
}

/// RORAC figures per leaf plus portfolio totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoracReport<T> {
    pub rows: Vec<RoracRow<T>>,
    pub total_income: T,
    /// Equals the total SCR: Euler allocation is full.
    pub total_allocated: T,
    /// `total_income / total_allocated`, which equals the capital-weighted
    /// mean of the row figures.
    pub expected_rorac: T,
    /// Capital-weighted mean of the row volatilities, with absent row
    /// volatilities contributing zero.
    pub rorac_stdev: T,
}

impl<T: Real> RoracReport<T> {
    pub fn row(&self, node: &str) -> Option<&RoracRow<T>> {
        self.rows.iter().find(|r| r.node == node)
    }
}

/// Computes per-leaf and total RORAC for an allocated tree.
///
/// Every micro risk becomes a row; leaves without an income entry count as
/// zero expected income with unknown volatility. Income entries that match
/// no leaf are rejected, as is income on a leaf that ends up with zero
/// allocated capital.
pub fn compute_rorac<T: Real>(
    alloc: &AllocationResult<T>,
    income: &IncomeStats<T>,
) -> Result<RoracReport<T>, RoracError> {
    compute_rorac_with_labels(alloc, income, None)
}

/// As [`compute_rorac`], with row labels taken from the tree's micro risk
/// names instead of repeating the leaf paths.
pub fn compute_rorac_for_tree<T: Real>(
    tree: &RiskTree<T>,
    alloc: &AllocationResult<T>,
    income: &IncomeStats<T>,
) -> Result<RoracReport<T>, RoracError> {
    compute_rorac_with_labels(alloc, income, Some(tree))
}

fn compute_rorac_with_labels<T: Real>(
    alloc: &AllocationResult<T>,
    income: &IncomeStats<T>,
    tree: Option<&RiskTree<T>>,
) -> Result<RoracReport<T>, RoracError> {
    for (node, entry) in income.iter() {
        let known = alloc
            .micros
            .iter()
            .any(|m| format!("{}/{}", m.macro_id, m.micro_id) == *node);
        if !known {
            return Err(RoracError::UnknownIncomeNode { node: node.clone() });
        }
        if let Some(s) = entry.stdev {
            if s < T::zero() {
                return Err(RoracError::NegativeIncomeStdev {
                    node: node.clone(),
                    value: s.as_f64(),
                });
            }
        }
    }

    let mut rows = Vec::with_capacity(alloc.micros.len());
    for m in &alloc.micros {
        let node = format!("{}/{}", m.macro_id, m.micro_id);
        let entry = income.get(&node).copied().unwrap_or(IncomeEntry {
            mean: T::zero(),
            stdev: None,
        });
        let has_income = entry.mean != T::zero()
            || entry.stdev.is_some_and(|s| s > T::zero());
        if m.allocated == T::zero() && has_income {
            return Err(RoracError::ZeroCapitalWithIncome { node });
        }
        let expected_rorac = if m.allocated == T::zero() {
            T::zero()
        } else {
            entry.mean / m.allocated
        };
        let rorac_stdev = entry.stdev.map(|s| {
            if m.allocated == T::zero() {
                T::zero()
            } else {
                s / m.allocated
            }
        });
        let coefficient_of_variation = match rorac_stdev {
            Some(s) if expected_rorac > T::zero() => Some(s / expected_rorac),
            _ => None,
        };
        let label = tree
            .and_then(|t| t.find_micro(&m.macro_id, &m.micro_id))
            .map(|micro| micro.name.clone())
            .unwrap_or_else(|| node.clone());
        rows.push(RoracRow {
            node,
            label,
            income_mean: entry.mean,
            income_stdev: entry.stdev,
            allocated: m.allocated,
            expected_rorac,
            rorac_stdev,
            coefficient_of_variation,
        });
    }

    let total_income = kahan_sum(rows.iter().map(|r| r.income_mean));
    let total_allocated = alloc.total_scr;
    let expected_rorac = if total_allocated > T::zero() {
        total_income / total_allocated
    } else {
        T::zero()
    };
    let weighted_stdev = kahan_sum(
        rows.iter()
            .map(|r| r.rorac_stdev.unwrap_or_else(T::zero) * r.allocated),
    );
    let rorac_stdev = if total_allocated > T::zero() {
        weighted_stdev / total_allocated
    } else {
        T::zero()
    };

    Ok(RoracReport {
        rows,
        total_income,
        total_allocated,
        expected_rorac,
        rorac_stdev,
    })
}

/// Outcome of the compatibility check at one scaling step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityPoint<T> {
    pub h: f64,
    pub total_rorac: T,
    /// Change in total RORAC versus the unscaled portfolio.
    pub delta: T,
    pub pass: bool,
}

/// Verdict of the RORAC compatibility check for one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityVerdict<T> {
    pub node: String,
    pub node_rorac: T,
    pub base_rorac: T,
    pub points: Vec<CompatibilityPoint<T>>,
    pub pass: bool,
}

/// Default scaling grid: ten logarithmic points in `[1e-4, 1e-2]`.
pub fn default_h_grid() -> Vec<f64> {
    let (lo, hi, n) = (1e-4f64, 1e-2f64, 10);
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

/// Checks whether growing one node's exposure moves the portfolio RORAC in
/// the direction its own RORAC predicts.
///
/// Growing a node by `1+h` scales its standalone SCRs and expected incomes
/// together, which is the positive-homogeneity reading of adding `h` units
/// of that sub-portfolio. A grid point passes when the change in total
/// RORAC is not decisively opposed to the sign of `node RORAC - total
/// RORAC`; changes within the 1e-12 margin are treated as indeterminate
/// rather than as contradictions, and a node whose RORAC matches the total
/// passes vacuously.
pub fn check_rorac_compatibility<T: Real>(
    tree: &RiskTree<T>,
    income: &IncomeStats<T>,
    node: &NodeRef,
    h_grid: &[f64],
) -> Result<CompatibilityVerdict<T>, RoracError> {
    let node_exists = match node {
        NodeRef::Macro { macro_id } => tree.find_macro(macro_id).is_some(),
        NodeRef::Micro { macro_id, micro_id } => tree.find_micro(macro_id, micro_id).is_some(),
    };
    if !node_exists {
        return Err(RoracError::UnknownNode {
            path: node.to_string(),
        });
    }

    let alloc = allocate_tree(tree)?;
    let base = compute_rorac(&alloc, income)?;

    let node_income = node_income_mean(tree, income, node);
    let node_allocated = alloc.allocated_for(node).unwrap_or_else(T::zero);
    let node_rorac = if node_allocated != T::zero() {
        node_income / node_allocated
    } else {
        T::zero()
    };

    let margin = T::from_f64(1e-12);
    let premise = node_rorac - base.expected_rorac;

    let mut points = Vec::with_capacity(h_grid.len());
    let mut all_pass = true;
    for &h in h_grid {
        let scaled_tree = scale_node_tree(tree, node, T::from_f64(1.0 + h));
        let scaled_income = scale_node_income(tree, income, node, T::from_f64(1.0 + h));
        let total_income = kahan_sum(scaled_income.iter().map(|(_, e)| e.mean));
        let total_scr = aggregate_tree(&scaled_tree)
            .map_err(AllocateError::from)?
            .total_scr;
        let total_rorac = if total_scr > T::zero() {
            total_income / total_scr
        } else {
            T::zero()
        };
        let delta = total_rorac - base.expected_rorac;
        let pass = if premise > margin {
            delta >= -margin
        } else if premise < -margin {
            delta <= margin
        } else {
            true
        };
        all_pass &= pass;
        points.push(CompatibilityPoint {
            h,
            total_rorac,
            delta,
            pass,
        });
    }

    Ok(CompatibilityVerdict {
        node: node.to_string(),
        node_rorac,
        base_rorac: base.expected_rorac,
        points,
        pass: all_pass,
    })
}

fn node_income_mean<T: Real>(
    tree: &RiskTree<T>,
    income: &IncomeStats<T>,
    node: &NodeRef,
) -> T {
    match node {
        NodeRef::Micro { macro_id, micro_id } => income
            .get(&format!("{macro_id}/{micro_id}"))
            .map(|e| e.mean)
            .unwrap_or_else(T::zero),
        NodeRef::Macro { macro_id } => tree
            .find_macro(macro_id)
            .map(|g| {
                kahan_sum(g.micros.iter().map(|m| {
                    income
                        .get(&format!("{}/{}", macro_id, m.id))
                        .map(|e| e.mean)
                        .unwrap_or_else(T::zero)
                }))
            })
            .unwrap_or_else(T::zero),
    }
}

fn node_covers(node: &NodeRef, macro_id: &str, micro_id: &str) -> bool {
    match node {
        NodeRef::Macro { macro_id: m } => m == macro_id,
        NodeRef::Micro {
            macro_id: m,
            micro_id: x,
        } => m == macro_id && x == micro_id,
    }
}

fn scale_node_tree<T: Real>(tree: &RiskTree<T>, node: &NodeRef, factor: T) -> RiskTree<T> {
    let mut scaled = tree.clone();
    for g in &mut scaled.macros {
        for m in &mut g.micros {
            if node_covers(node, &g.id, &m.id) {
                m.scr *= factor;
            }
        }
    }
    scaled
}

fn scale_node_income<T: Real>(
    tree: &RiskTree<T>,
    income: &IncomeStats<T>,
    node: &NodeRef,
    factor: T,
) -> IncomeStats<T> {
    // Leaves without an explicit entry have zero mean, which scaling fixes.
    tree.macros
        .iter()
        .flat_map(|g| g.micros.iter().map(move |m| (g.id.as_str(), m.id.as_str())))
        .map(|(gid, mid)| {
            let path = format!("{gid}/{mid}");
            let mut entry = income.get(&path).copied().unwrap_or(IncomeEntry {
                mean: T::zero(),
                stdev: None,
            });
            if node_covers(node, gid, mid) {
                entry.mean *= factor;
            }
            (path, entry)
        })
        .collect()
}
