//! Capital aggregation and allocation for Solvency II standard-formula
//! portfolios.
//!
//! The library models a two-level risk tree (macro risks holding micro
//! risks, correlated at each level), computes the SCR by square-root
//! correlation aggregation, distributes it back onto the nodes with the
//! closed-form Euler rule, and layers return-on-risk analytics on top:
//!
//! - [`aggregate`]: the nested square-root aggregation and implied
//!   normal-model volatilities.
//! - [`allocate`]: Euler capital allocation at both levels, gradients and
//!   diversification reports.
//! - [`rorac`]: return on risk-adjusted capital per node, and the
//!   first-order compatibility check that growing an outperforming node
//!   raises the portfolio RORAC.
//! - [`mc`]: a Monte Carlo estimator of the same VaR and Euler
//!   contributions under the multivariate normal model, used as an
//!   independent cross-check of the closed forms.
//! - [`optimize`]: exhaustive scenario selection under SCR, premium,
//!   coefficient-of-variation and reinsurance constraints.
//! - [`checks`]: a self-contained property suite (full allocation,
//!   gradient agreement, homogeneity, subadditivity, no-undercut,
//!   symmetry, RORAC sign compatibility) over one portfolio.
//! - [`io`]: JSON input documents and deterministic CSV/JSON/SVG reports.
//!
//! Numeric code is generic over [`scalar::Real`] (implemented for `f32`
//! and `f64`); the `*64` aliases at the crate root fix the conventional
//! double-precision choice.

pub mod aggregate;
pub mod allocate;
pub mod checks;
pub mod io;
mod linalg;
pub mod mc;
pub mod model;
pub mod normal;
pub mod optimize;
pub mod rorac;
pub mod scalar;

pub use aggregate::{
    aggregate_level, aggregate_tree, implied_sigma, implied_sigma_at, AggregateError,
    AggregationOutput,
};
pub use allocate::{
    allocate_macros, allocate_micros, allocate_tree, diversification_report, gradient,
    AllocateError, AllocationResult, DiversificationReport,
};
pub use checks::{run_property_suite, CheckConfig, CheckError, CheckStatus, PropertyCheck};
pub use mc::{
    build_covariance, compare_with_closed_form, estimate_contributions, simulate_var,
    ComparisonReport, Covariance, McConfig, McError, McEstimate, PsdRepair,
};
pub use model::{
    validate_tree, validate_tree_with, CorrelationMatrix, MacroRisk, MicroRisk, ModelError,
    NodeRef, RiskTree, Severity, ValidationConfig, ValidationReport, Violation,
};
pub use optimize::{
    check_feasibility, emit_frontier, evaluate_scenario, frontier_from_rorac, optimize,
    ConstraintSet, CvCap, FrontierDataset, NamedRule, OptimizationReport, OptimizeError,
    PremiumBound, ReinsuranceDescriptor, ReinsuranceRule, Scenario,
};
pub use rorac::{
    check_rorac_compatibility, compute_rorac, compute_rorac_for_tree, default_h_grid,
    CompatibilityVerdict, IncomeEntry, IncomeStats, RoracError, RoracReport,
};
pub use scalar::Real;

/// Double-precision aliases for the common instantiation.
pub type RiskTree64 = model::RiskTree<f64>;
pub type MacroRisk64 = model::MacroRisk<f64>;
pub type MicroRisk64 = model::MicroRisk<f64>;
pub type CorrelationMatrix64 = model::CorrelationMatrix<f64>;
pub type AggregationOutput64 = aggregate::AggregationOutput<f64>;
pub type AllocationResult64 = allocate::AllocationResult<f64>;
pub type IncomeStats64 = rorac::IncomeStats<f64>;
pub type RoracReport64 = rorac::RoracReport<f64>;
pub type Scenario64 = optimize::Scenario<f64>;
pub type ConstraintSet64 = optimize::ConstraintSet<f64>;
pub type OptimizationReport64 = optimize::OptimizationReport<f64>;
pub type FrontierDataset64 = optimize::FrontierDataset<f64>;
