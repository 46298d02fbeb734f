//! Constrained strategy selection over a finite scenario set.
//!
//! Each scenario bundles a premium vector, a reinsurance descriptor and the
//! risk tree plus income statistics it induces. The optimizer evaluates
//! every scenario end-to-end (aggregate, allocate, RORAC), screens it
//! against the constraint set, and picks the feasible scenario with the
//! highest expected total RORAC. Ties break deterministically toward lower
//! total SCR, then lexicographically smaller id.

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::allocate::{allocate_tree, AllocationResult};
use crate::model::RiskTree;
use crate::rorac::{compute_rorac_for_tree, IncomeStats, RoracReport};
use crate::scalar::Real;

/// Optimizer failures.
#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("scenario list is empty; at least one scenario is required")]
    NoScenarios,
    #[error("scenario {scenario_id:?}: {source}")]
    Evaluation {
        scenario_id: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("no feasible scenario; closest is {closest_id:?} violating [{violated}]")]
    NoFeasibleScenario { closest_id: String, violated: String },
    #[error("constraint set is inconsistent: {detail}")]
    InvalidConstraints { detail: String },
}

/// Free-form reinsurance program description: qualitative tags plus named
/// numeric parameters, screened by declarative rules.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReinsuranceDescriptor<T> {
    pub tags: Vec<String>,
    pub parameters: IndexMap<String, T>,
}

impl<T: Real> ReinsuranceDescriptor<T> {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

/// One candidate underwriting/reinsurance strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub id: String,
    /// Premium per line of business, keyed by `macro/micro` leaf path.
    pub premiums: IndexMap<String, T>,
    pub reinsurance: ReinsuranceDescriptor<T>,
    pub tree: RiskTree<T>,
    pub income: IncomeStats<T>,
}

/// Results of running one scenario through the engine.
#[derive(Debug, Clone)]
pub struct EvaluatedScenario<T> {
    pub id: String,
    pub total_scr: T,
    pub allocation: AllocationResult<T>,
    pub rorac: RoracReport<T>,
}

/// Runs aggregation, allocation and RORAC for one scenario.
pub fn evaluate_scenario<T: Real>(
    scenario: &Scenario<T>,
) -> Result<EvaluatedScenario<T>, OptimizeError> {
    let tag = |e: Box<dyn std::error::Error + Send + Sync>| OptimizeError::Evaluation {
        scenario_id: scenario.id.clone(),
        source: e,
    };
    let allocation = allocate_tree(&scenario.tree).map_err(|e| tag(Box::new(e)))?;
    let rorac = compute_rorac_for_tree(&scenario.tree, &allocation, &scenario.income)
        .map_err(|e| tag(Box::new(e)))?;
    Ok(EvaluatedScenario {
        id: scenario.id.clone(),
        total_scr: allocation.total_scr,
        allocation,
        rorac,
    })
}

/// Declarative predicate over a scenario's reinsurance descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum ReinsuranceRule<T> {
    /// The descriptor carries this tag.
    HasTag { tag: String },
    /// The descriptor does not carry this tag.
    LacksTag { tag: String },
    /// The descriptor carries at least one of these tags.
    TagIn { any_of: Vec<String> },
    /// Named parameter exists and is `<=` the limit.
    ParamAtMost { key: String, limit: T },
    /// Named parameter exists and is `>=` the limit.
    ParamAtLeast { key: String, limit: T },
}

/// A reinsurance rule with a stable id for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedRule<T> {
    pub id: String,
    pub rule: ReinsuranceRule<T>,
}

/// Premium band for one line of business.
#[derive(Debug, Clone, PartialEq)]
pub struct PremiumBound<T> {
    /// Leaf path `macro/micro`.
    pub lob: String,
    pub min: Option<T>,
    pub max: Option<T>,
}

/// Cap on the per-LoB coefficient of variation of RORAC.
#[derive(Debug, Clone, PartialEq)]
pub enum CvCap<T> {
    /// One scalar cap applied to every LoB.
    Uniform(T),
    /// Per-LoB caps; LoBs without an entry are uncapped.
    PerLob(IndexMap<String, T>),
}

/// Full constraint set. Every field is optional; an empty set is vacuous.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet<T> {
    /// Lower SCR bound (exclusive by default).
    pub scr_min: Option<T>,
    /// Upper SCR bound (exclusive by default).
    pub scr_max: Option<T>,
    pub premium_bounds: Vec<PremiumBound<T>>,
    pub cv_cap: Option<CvCap<T>>,
    pub reinsurance_rules: Vec<NamedRule<T>>,
    /// Compare with `<=`/`>=` instead of the strict inequalities.
    pub weak_inequalities: bool,
}

impl<T: Real> ConstraintSet<T> {
    /// Checks internal consistency of the bounds.
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if let (Some(lo), Some(hi)) = (self.scr_min, self.scr_max) {
            if lo > hi {
                return Err(OptimizeError::InvalidConstraints {
                    detail: format!("scr_min {lo} exceeds scr_max {hi}"),
                });
            }
        }
        for b in &self.premium_bounds {
            if let (Some(lo), Some(hi)) = (b.min, b.max) {
                if lo > hi {
                    return Err(OptimizeError::InvalidConstraints {
                        detail: format!(
                            "premium bounds for {:?} are inverted: {lo} > {hi}",
                            b.lob
                        ),
                    });
                }
            }
        }
        let caps: Vec<(&str, T)> = match &self.cv_cap {
            Some(CvCap::Uniform(cap)) => vec![("*", *cap)],
            Some(CvCap::PerLob(map)) => {
                map.iter().map(|(k, v)| (k.as_str(), *v)).collect()
            }
            None => vec![],
        };
        for (lob, cap) in caps {
            if cap.is_nan() || cap <= T::zero() {
                return Err(OptimizeError::InvalidConstraints {
                    detail: format!("cv cap for {lob:?} must be positive, got {cap}"),
                });
            }
        }
        Ok(())
    }

    fn cv_cap_for(&self, lob: &str) -> Option<T> {
        match &self.cv_cap {
            Some(CvCap::Uniform(cap)) => Some(*cap),
            Some(CvCap::PerLob(map)) => map.get(lob).copied(),
            None => None,
        }
    }
}

/// One constraint's outcome for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck<T> {
    /// Stable id, e.g. `scr-max`, `premium-min:A/x`, `cv-cap:A/x`, or a
    /// reinsurance rule id.
    pub id: String,
    pub passed: bool,
    /// Slack toward the bound; positive means satisfied with room. Absent
    /// for non-numeric rules and undefined quantities.
    pub margin: Option<T>,
    pub detail: String,
}

/// All constraint outcomes for one scenario.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityVerdict<T> {
    pub scenario_id: String,
    pub feasible: bool,
    pub checks: Vec<ConstraintCheck<T>>,
}

impl<T> FeasibilityVerdict<T> {
    pub fn violated_ids(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.id.clone())
            .collect()
    }
}

/// Screens an evaluated scenario against the constraint set.
///
/// Inequalities are strict by default, matching the program statement; the
/// `weak_inequalities` flag relaxes them to non-strict. A LoB whose expected
/// RORAC is not positive has an undefined coefficient of variation and
/// fails any CV cap that applies to it; a LoB without volatility data
/// passes the cap for lack of evidence, with the outcome spelled out.
pub fn check_feasibility<T: Real>(
    scenario: &Scenario<T>,
    evaluated: &EvaluatedScenario<T>,
    constraints: &ConstraintSet<T>,
) -> FeasibilityVerdict<T> {
    let mut checks = Vec::new();
    let strict = !constraints.weak_inequalities;
    let above = |x: T, bound: T| if strict { x > bound } else { x >= bound };
    let below = |x: T, bound: T| if strict { x < bound } else { x <= bound };

    if let Some(lo) = constraints.scr_min {
        checks.push(ConstraintCheck {
            id: "scr-min".into(),
            passed: above(evaluated.total_scr, lo),
            margin: Some(evaluated.total_scr - lo),
            detail: format!("total SCR {} vs lower bound {}", evaluated.total_scr, lo),
        });
    }
    if let Some(hi) = constraints.scr_max {
        checks.push(ConstraintCheck {
            id: "scr-max".into(),
            passed: below(evaluated.total_scr, hi),
            margin: Some(hi - evaluated.total_scr),
            detail: format!("total SCR {} vs upper bound {}", evaluated.total_scr, hi),
        });
    }

    for b in &constraints.premium_bounds {
        // A missing premium entry counts as zero written premium.
        let premium = scenario
            .premiums
            .get(&b.lob)
            .copied()
            .unwrap_or_else(T::zero);
        if let Some(lo) = b.min {
            checks.push(ConstraintCheck {
                id: format!("premium-min:{}", b.lob),
                passed: above(premium, lo),
                margin: Some(premium - lo),
                detail: format!("premium {} vs lower bound {}", premium, lo),
            });
        }
        if let Some(hi) = b.max {
            checks.push(ConstraintCheck {
                id: format!("premium-max:{}", b.lob),
                passed: below(premium, hi),
                margin: Some(hi - premium),
                detail: format!("premium {} vs upper bound {}", premium, hi),
            });
        }
    }

    for row in &evaluated.rorac.rows {
        let Some(cap) = constraints.cv_cap_for(&row.node) else {
            continue;
        };
        let id = format!("cv-cap:{}", row.node);
        match row.coefficient_of_variation {
            Some(cv) => checks.push(ConstraintCheck {
                id,
                passed: below(cv, cap),
                margin: Some(cap - cv),
                detail: format!("CV {} vs cap {}", cv, cap),
            }),
            None if row.expected_rorac <= T::zero() && row.income_stdev.is_some() => {
                checks.push(ConstraintCheck {
                    id,
                    passed: false,
                    margin: None,
                    detail: format!(
                        "CV undefined: expected RORAC {} is not positive",
                        row.expected_rorac
                    ),
                })
            }
            None => checks.push(ConstraintCheck {
                id,
                passed: true,
                margin: None,
                detail: "no income volatility data; cap not contradicted".into(),
            }),
        }
    }

    for named in &constraints.reinsurance_rules {
        let r = &scenario.reinsurance;
        let (passed, margin, detail) = match &named.rule {
            ReinsuranceRule::HasTag { tag } => (
                r.has_tag(tag),
                None,
                format!("requires tag {tag:?}"),
            ),
            ReinsuranceRule::LacksTag { tag } => (
                !r.has_tag(tag),
                None,
                format!("forbids tag {tag:?}"),
            ),
            ReinsuranceRule::TagIn { any_of } => (
                any_of.iter().any(|t| r.has_tag(t)),
                None,
                format!("requires one of {any_of:?}"),
            ),
            ReinsuranceRule::ParamAtMost { key, limit } => match r.parameters.get(key) {
                Some(&v) => (
                    v <= *limit,
                    Some(*limit - v),
                    format!("parameter {key:?} = {v} vs limit {limit}"),
                ),
                None => (false, None, format!("parameter {key:?} missing")),
            },
            ReinsuranceRule::ParamAtLeast { key, limit } => match r.parameters.get(key) {
                Some(&v) => (
                    v >= *limit,
                    Some(v - *limit),
                    format!("parameter {key:?} = {v} vs floor {limit}"),
                ),
                None => (false, None, format!("parameter {key:?} missing")),
            },
        };
        checks.push(ConstraintCheck {
            id: named.id.clone(),
            passed,
            margin,
            detail,
        });
    }

    FeasibilityVerdict {
        scenario_id: scenario.id.clone(),
        feasible: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// Per-scenario line of the optimization report.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome<T> {
    pub id: String,
    pub feasible: bool,
    pub total_scr: T,
    pub expected_rorac: T,
    pub violated: Vec<String>,
    pub checks: Vec<ConstraintCheck<T>>,
}

/// The winning scenario.
#[derive(Debug, Clone, Serialize)]
pub struct SelectedOptimum<T> {
    pub id: String,
    pub total_scr: T,
    pub expected_rorac: T,
}

/// One feasible scenario's point on the risk-return frontier.
#[derive(Debug, Clone, Serialize)]
pub struct FrontierPoint<T> {
    pub scenario_id: String,
    pub total_scr: T,
    pub expected_rorac: T,
}

/// Exhaustive-search result over the scenario set.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizationReport<T> {
    /// One outcome per input scenario, in input order.
    pub outcomes: Vec<ScenarioOutcome<T>>,
    /// Feasible argmax of expected RORAC, if any scenario is feasible.
    pub selected: Option<SelectedOptimum<T>>,
    /// (total SCR, expected RORAC) of every feasible scenario, input order.
    pub frontier: Vec<FrontierPoint<T>>,
    /// Full RORAC report of the selected scenario, for downstream tables
    /// and plots.
    pub selected_rorac: Option<RoracReport<T>>,
}

impl<T: Real> OptimizationReport<T> {
    /// The selected optimum, or the error the program statement prescribes
    /// when the feasible set is empty: the scenario with the fewest violated
    /// constraints is named together with what it violates.
    pub fn require_selected(&self) -> Result<&SelectedOptimum<T>, OptimizeError> {
        self.selected.as_ref().ok_or_else(|| {
            let closest = self
                .outcomes
                .iter()
                .min_by_key(|o| o.violated.len())
                .expect("at least one scenario");
            OptimizeError::NoFeasibleScenario {
                closest_id: closest.id.clone(),
                violated: closest.violated.join(", "),
            }
        })
    }
}

/// `true` when candidate `(e, scr, id)` beats the incumbent under the
/// deterministic order: higher expected RORAC, then lower total SCR, then
/// lexicographically smaller id.
fn beats<T: Real>(candidate: (T, T, &str), incumbent: (T, T, &str)) -> bool {
    let (ce, cs, cid) = candidate;
    let (ie, is, iid) = incumbent;
    if ce != ie {
        return ce > ie;
    }
    if cs != is {
        return cs < is;
    }
    cid < iid
}

/// Evaluates and screens every scenario, returning the full report.
///
/// Evaluation failures abort with the offending scenario id. An empty
/// feasible set is not an error here: the report carries `selected: None`
/// and [`OptimizationReport::require_selected`] produces the diagnostic.
pub fn optimize<T: Real>(
    scenarios: &[Scenario<T>],
    constraints: &ConstraintSet<T>,
) -> Result<OptimizationReport<T>, OptimizeError> {
    if scenarios.is_empty() {
        return Err(OptimizeError::NoScenarios);
    }
    constraints.validate()?;

    let mut outcomes = Vec::with_capacity(scenarios.len());
    let mut frontier = Vec::new();
    let mut best: Option<(T, T, String)> = None;
    let mut best_rorac: Option<RoracReport<T>> = None;

    for scenario in scenarios {
        let evaluated = evaluate_scenario(scenario)?;
        let verdict = check_feasibility(scenario, &evaluated, constraints);
        let expected_rorac = evaluated.rorac.expected_rorac;

        if verdict.feasible {
            frontier.push(FrontierPoint {
                scenario_id: scenario.id.clone(),
                total_scr: evaluated.total_scr,
                expected_rorac,
            });
            let candidate = (expected_rorac, evaluated.total_scr, scenario.id.as_str());
            let wins = match &best {
                None => true,
                Some((be, bs, bid)) => beats(candidate, (*be, *bs, bid.as_str())),
            };
            if wins {
                best = Some((expected_rorac, evaluated.total_scr, scenario.id.clone()));
                best_rorac = Some(evaluated.rorac.clone());
            }
        }

        outcomes.push(ScenarioOutcome {
            id: scenario.id.clone(),
            feasible: verdict.feasible,
            total_scr: evaluated.total_scr,
            expected_rorac,
            violated: verdict.violated_ids(),
            checks: verdict.checks,
        });
    }

    let selected = best.map(|(e, s, id)| SelectedOptimum {
        id,
        total_scr: s,
        expected_rorac: e,
    });

    Ok(OptimizationReport {
        outcomes,
        selected,
        frontier,
        selected_rorac: best_rorac,
    })
}

/// One marker of the risk-return scatter.
#[derive(Debug, Clone, Serialize)]
pub struct LobPoint<T> {
    pub label: String,
    pub allocated: T,
    pub expected_rorac: T,
    pub rorac_stdev: Option<T>,
}

/// Scatter dataset: one point per LoB of the selected scenario plus the
/// portfolio total.
#[derive(Debug, Clone, Serialize)]
pub struct FrontierDataset<T> {
    pub rows: Vec<LobPoint<T>>,
    pub total: Option<LobPoint<T>>,
    /// Set when there is nothing to plot, explaining why.
    pub note: Option<String>,
}

/// Builds the per-LoB risk-return dataset from an optimization report.
pub fn emit_frontier<T: Real>(report: &OptimizationReport<T>) -> FrontierDataset<T> {
    match &report.selected_rorac {
        Some(rorac) => frontier_from_rorac(rorac),
        None => FrontierDataset {
            rows: Vec::new(),
            total: None,
            note: Some("no feasible scenario".to_string()),
        },
    }
}

/// Builds the same dataset directly from a RORAC report.
pub fn frontier_from_rorac<T: Real>(rorac: &RoracReport<T>) -> FrontierDataset<T> {
    let rows = rorac
        .rows
        .iter()
        .map(|r| LobPoint {
            label: r.label.clone(),
            allocated: r.allocated,
            expected_rorac: r.expected_rorac,
            rorac_stdev: r.rorac_stdev,
        })
        .collect();
    FrontierDataset {
        rows,
        total: Some(LobPoint {
            label: "Total".to_string(),
            allocated: rorac.total_allocated,
            expected_rorac: rorac.expected_rorac,
            rorac_stdev: Some(rorac.rorac_stdev),
        }),
        note: None,
    }
}
