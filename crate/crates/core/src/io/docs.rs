//! JSON document formats for trees, income statistics, scenarios and
//! constraints, with parse and emit in both directions.
//!
//! Documents use point decimals and plain numbers throughout; percent-like
//! quantities are stored as decimal fractions. Emission is deterministic:
//! fixed key order, shortest round-trip float formatting, trailing newline.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CorrelationMatrix, MacroRisk, MicroRisk, NodeRef, RiskTree, validate_tree};
use crate::optimize::{
    ConstraintSet, CvCap, NamedRule, PremiumBound, ReinsuranceDescriptor, ReinsuranceRule,
    Scenario,
};
use crate::rorac::{IncomeEntry, IncomeStats};

/// Parse or schema failure; JSON syntax errors keep their line/column.
#[derive(Debug, Error)]
pub enum DocError {
    // The syntax error's message (with position) is embedded in the
    // display, so it is deliberately not also exposed as source().
    #[error("malformed document: {0}")]
    Json(serde_json::Error),
    #[error("{0}")]
    Schema(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
}

impl From<serde_json::Error> for DocError {
    fn from(err: serde_json::Error) -> Self {
        DocError::Json(err)
    }
}

fn schema(detail: impl Into<String>) -> DocError {
    DocError::Schema(detail.into())
}

/// Correlation matrix as written in documents: either rows or a flat
/// row-major array whose length is a perfect square.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrelationDoc {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl CorrelationDoc {
    fn build(&self, context: &str) -> Result<CorrelationMatrix<f64>, DocError> {
        let built = match self {
            CorrelationDoc::Rows(rows) => CorrelationMatrix::from_rows(rows.clone()),
            CorrelationDoc::Flat(entries) => {
                let dim = (entries.len() as f64).sqrt().round() as usize;
                CorrelationMatrix::from_flat(dim, entries.clone())
            }
        };
        built.map_err(|e| schema(format!("correlation at {context}: {e}")))
    }

    fn from_matrix(m: &CorrelationMatrix<f64>) -> Self {
        let d = m.dim();
        CorrelationDoc::Rows((0..d).map(|i| (0..d).map(|j| m.at(i, j)).collect()).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub scr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub correlation: CorrelationDoc,
    pub micros: Vec<MicroDoc>,
}

/// Top-level tree document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    pub name: String,
    pub correlation: CorrelationDoc,
    pub macros: Vec<MacroDoc>,
}

impl TreeDoc {
    fn build(&self) -> Result<RiskTree<f64>, DocError> {
        let mut macros = Vec::with_capacity(self.macros.len());
        for g in &self.macros {
            let corr = g.correlation.build(&format!("/{}", g.id))?;
            let micros = g
                .micros
                .iter()
                .map(|m| {
                    let mut micro = MicroRisk::new(m.id.clone(), m.scr);
                    if let Some(name) = &m.name {
                        micro.name = name.clone();
                    }
                    micro
                })
                .collect();
            let mut mac = MacroRisk::new(g.id.clone(), micros, corr);
            if let Some(name) = &g.name {
                mac.name = name.clone();
            }
            macros.push(mac);
        }
        let corr = self.correlation.build("/")?;
        Ok(RiskTree::new(self.name.clone(), macros, corr))
    }

    fn from_tree(tree: &RiskTree<f64>) -> Self {
        TreeDoc {
            name: tree.name.clone(),
            correlation: CorrelationDoc::from_matrix(&tree.correlation),
            macros: tree
                .macros
                .iter()
                .map(|g| MacroDoc {
                    id: g.id.clone(),
                    name: (g.name != g.id).then(|| g.name.clone()),
                    correlation: CorrelationDoc::from_matrix(&g.correlation),
                    micros: g
                        .micros
                        .iter()
                        .map(|m| MicroDoc {
                            id: m.id.clone(),
                            name: (m.name != m.id).then(|| m.name.clone()),
                            scr: m.scr,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Parses a tree document and validates the result. Validation errors fail
/// the parse; warnings (such as an indefinite correlation matrix) do not.
pub fn parse_tree(text: &str) -> Result<RiskTree<f64>, DocError> {
    let doc: TreeDoc = serde_json::from_str(text)?;
    let tree = doc.build()?;
    let report = validate_tree(&tree);
    if report.has_errors() {
        let detail: Vec<String> = report
            .errors()
            .map(|v| format!("{} [{}]: {}", v.path, v.rule, v.detail))
            .collect();
        return Err(DocError::InvalidTree(detail.join("; ")));
    }
    Ok(tree)
}

/// Serializes a tree as a pretty-printed document.
pub fn emit_tree(tree: &RiskTree<f64>) -> String {
    pretty(&TreeDoc::from_tree(tree))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncomeRowDoc {
    /// Leaf path `macro/micro`.
    pub node: String,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdev: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncomeDoc {
    pub incomes: Vec<IncomeRowDoc>,
}

fn income_from_rows(rows: &[IncomeRowDoc]) -> Result<IncomeStats<f64>, DocError> {
    let mut stats = IncomeStats::new();
    for row in rows {
        match NodeRef::parse(&row.node) {
            Some(NodeRef::Micro { .. }) => {}
            _ => {
                return Err(schema(format!(
                    "income node {:?} is not a leaf path of the form macro/micro",
                    row.node
                )))
            }
        }
        if stats.get(&row.node).is_some() {
            return Err(schema(format!("duplicate income node {:?}", row.node)));
        }
        if !row.mean.is_finite() || row.stdev.is_some_and(|s| !s.is_finite()) {
            return Err(schema(format!("non-finite income for node {:?}", row.node)));
        }
        if row.stdev.is_some_and(|s| s < 0.0) {
            return Err(schema(format!("negative income stdev for node {:?}", row.node)));
        }
        stats.insert(
            row.node.clone(),
            IncomeEntry {
                mean: row.mean,
                stdev: row.stdev,
            },
        );
    }
    Ok(stats)
}

/// Parses an income-statistics document keyed by leaf path.
pub fn parse_income(text: &str) -> Result<IncomeStats<f64>, DocError> {
    let doc: IncomeDoc = serde_json::from_str(text)?;
    income_from_rows(&doc.incomes)
}

/// Serializes income statistics in insertion order.
pub fn emit_income(income: &IncomeStats<f64>) -> String {
    let doc = IncomeDoc {
        incomes: income
            .iter()
            .map(|(node, e)| IncomeRowDoc {
                node: node.clone(),
                mean: e.mean,
                stdev: e.stdev,
            })
            .collect(),
    };
    pretty(&doc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiumDoc {
    pub lob: String,
    pub amount: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDoc {
    pub key: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReinsuranceDoc {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parameters: Vec<ParamDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub premiums: Vec<PremiumDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reinsurance: Option<ReinsuranceDoc>,
    pub tree: TreeDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub incomes: Vec<IncomeRowDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenariosDoc {
    pub scenarios: Vec<ScenarioDoc>,
}

/// Parses a scenario-set document. Requires at least one scenario; each
/// scenario's induced tree must validate and premiums must be nonnegative.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario<f64>>, DocError> {
    let doc: ScenariosDoc = serde_json::from_str(text)?;
    if doc.scenarios.is_empty() {
        return Err(schema("at least one scenario is required"));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(doc.scenarios.len());
    for s in &doc.scenarios {
        if !seen.insert(s.id.clone()) {
            return Err(schema(format!("duplicate scenario id {:?}", s.id)));
        }
        let mut premiums = IndexMap::new();
        for p in &s.premiums {
            if !p.amount.is_finite() || p.amount < 0.0 {
                return Err(schema(format!(
                    "scenario {:?}: premium for {:?} must be finite and nonnegative",
                    s.id, p.lob
                )));
            }
            if premiums.insert(p.lob.clone(), p.amount).is_some() {
                return Err(schema(format!(
                    "scenario {:?}: duplicate premium entry for {:?}",
                    s.id, p.lob
                )));
            }
        }
        let mut reinsurance = ReinsuranceDescriptor::default();
        if let Some(r) = &s.reinsurance {
            reinsurance.tags = r.tags.clone();
            for p in &r.parameters {
                if reinsurance.parameters.insert(p.key.clone(), p.value).is_some() {
                    return Err(schema(format!(
                        "scenario {:?}: duplicate reinsurance parameter {:?}",
                        s.id, p.key
                    )));
                }
            }
        }
        let tree = s.tree.build()?;
        let report = validate_tree(&tree);
        if report.has_errors() {
            let detail: Vec<String> = report
                .errors()
                .map(|v| format!("{} [{}]: {}", v.path, v.rule, v.detail))
                .collect();
            return Err(DocError::InvalidTree(format!(
                "scenario {:?}: {}",
                s.id,
                detail.join("; ")
            )));
        }
        let income = income_from_rows(&s.incomes)
            .map_err(|e| schema(format!("scenario {:?}: {e}", s.id)))?;
        out.push(Scenario {
            id: s.id.clone(),
            premiums,
            reinsurance,
            tree,
            income,
        });
    }
    Ok(out)
}

/// Serializes a scenario set.
pub fn emit_scenarios(scenarios: &[Scenario<f64>]) -> String {
    let doc = ScenariosDoc {
        scenarios: scenarios
            .iter()
            .map(|s| ScenarioDoc {
                id: s.id.clone(),
                premiums: s
                    .premiums
                    .iter()
                    .map(|(lob, &amount)| PremiumDoc {
                        lob: lob.clone(),
                        amount,
                    })
                    .collect(),
                reinsurance: (!s.reinsurance.tags.is_empty()
                    || !s.reinsurance.parameters.is_empty())
                .then(|| ReinsuranceDoc {
                    tags: s.reinsurance.tags.clone(),
                    parameters: s
                        .reinsurance
                        .parameters
                        .iter()
                        .map(|(key, &value)| ParamDoc {
                            key: key.clone(),
                            value,
                        })
                        .collect(),
                }),
                tree: TreeDoc::from_tree(&s.tree),
                incomes: s
                    .income
                    .iter()
                    .map(|(node, e)| IncomeRowDoc {
                        node: node.clone(),
                        mean: e.mean,
                        stdev: e.stdev,
                    })
                    .collect(),
            })
            .collect(),
    };
    pretty(&doc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiumBoundDoc {
    pub lob: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvCapDoc {
    pub lob: String,
    pub cap: f64,
}

/// Rule payload; the `kind` field selects the predicate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKindDoc {
    HasTag { tag: String },
    LacksTag { tag: String },
    TagIn { any_of: Vec<String> },
    ParamAtMost { key: String, limit: f64 },
    ParamAtLeast { key: String, limit: f64 },
}

/// Named reinsurance rule. `deny_unknown_fields` does not compose with the
/// flattened kind payload, so unknown keys here are ignored by serde.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleDoc {
    pub id: String,
    #[serde(flatten)]
    pub kind: RuleKindDoc,
}

/// Constraint document; every field optional, `{}` parses as vacuous.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scr_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scr_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub premium_bounds: Vec<PremiumBoundDoc>,
    /// Scalar cap applied to every LoB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv_cap: Option<f64>,
    /// Per-LoB caps; mutually exclusive with `cv_cap`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cv_caps: Vec<CvCapDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reinsurance_rules: Vec<RuleDoc>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub weak_inequalities: bool,
}

/// Parses a constraint document and checks bound consistency.
pub fn parse_constraints(text: &str) -> Result<ConstraintSet<f64>, DocError> {
    let doc: ConstraintsDoc = serde_json::from_str(text)?;
    if doc.cv_cap.is_some() && !doc.cv_caps.is_empty() {
        return Err(schema("cv_cap and cv_caps are mutually exclusive"));
    }
    let cv_cap = if let Some(cap) = doc.cv_cap {
        Some(CvCap::Uniform(cap))
    } else if !doc.cv_caps.is_empty() {
        let mut caps = IndexMap::new();
        for c in &doc.cv_caps {
            if caps.insert(c.lob.clone(), c.cap).is_some() {
                return Err(schema(format!("duplicate cv cap for {:?}", c.lob)));
            }
        }
        Some(CvCap::PerLob(caps))
    } else {
        None
    };
    let mut rule_ids = std::collections::BTreeSet::new();
    let reinsurance_rules = doc
        .reinsurance_rules
        .iter()
        .map(|r| {
            if !rule_ids.insert(r.id.clone()) {
                return Err(schema(format!("duplicate rule id {:?}", r.id)));
            }
            Ok(NamedRule {
                id: r.id.clone(),
                rule: match &r.kind {
                    RuleKindDoc::HasTag { tag } => ReinsuranceRule::HasTag { tag: tag.clone() },
                    RuleKindDoc::LacksTag { tag } => {
                        ReinsuranceRule::LacksTag { tag: tag.clone() }
                    }
                    RuleKindDoc::TagIn { any_of } => ReinsuranceRule::TagIn {
                        any_of: any_of.clone(),
                    },
                    RuleKindDoc::ParamAtMost { key, limit } => ReinsuranceRule::ParamAtMost {
                        key: key.clone(),
                        limit: *limit,
                    },
                    RuleKindDoc::ParamAtLeast { key, limit } => ReinsuranceRule::ParamAtLeast {
                        key: key.clone(),
                        limit: *limit,
                    },
                },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut bound_lobs = std::collections::BTreeSet::new();
    for b in &doc.premium_bounds {
        if !bound_lobs.insert(b.lob.clone()) {
            return Err(schema(format!("duplicate premium bound for {:?}", b.lob)));
        }
    }
    let set = ConstraintSet {
        scr_min: doc.scr_min,
        scr_max: doc.scr_max,
        premium_bounds: doc
            .premium_bounds
            .iter()
            .map(|b| PremiumBound {
                lob: b.lob.clone(),
                min: b.min,
                max: b.max,
            })
            .collect(),
        cv_cap,
        reinsurance_rules,
        weak_inequalities: doc.weak_inequalities,
    };
    set.validate().map_err(|e| schema(e.to_string()))?;
    Ok(set)
}

/// Serializes a constraint set.
pub fn emit_constraints(set: &ConstraintSet<f64>) -> String {
    let (cv_cap, cv_caps) = match &set.cv_cap {
        None => (None, Vec::new()),
        Some(CvCap::Uniform(cap)) => (Some(*cap), Vec::new()),
        Some(CvCap::PerLob(caps)) => (
            None,
            caps.iter()
                .map(|(lob, &cap)| CvCapDoc {
                    lob: lob.clone(),
                    cap,
                })
                .collect(),
        ),
    };
    let doc = ConstraintsDoc {
        scr_min: set.scr_min,
        scr_max: set.scr_max,
        premium_bounds: set
            .premium_bounds
            .iter()
            .map(|b| PremiumBoundDoc {
                lob: b.lob.clone(),
                min: b.min,
                max: b.max,
            })
            .collect(),
        cv_cap,
        cv_caps,
        reinsurance_rules: set
            .reinsurance_rules
            .iter()
            .map(|r| RuleDoc {
                id: r.id.clone(),
                kind: match &r.rule {
                    ReinsuranceRule::HasTag { tag } => RuleKindDoc::HasTag { tag: tag.clone() },
                    ReinsuranceRule::LacksTag { tag } => {
                        RuleKindDoc::LacksTag { tag: tag.clone() }
                    }
                    ReinsuranceRule::TagIn { any_of } => RuleKindDoc::TagIn {
                        any_of: any_of.clone(),
                    },
                    ReinsuranceRule::ParamAtMost { key, limit } => RuleKindDoc::ParamAtMost {
                        key: key.clone(),
                        limit: *limit,
                    },
                    ReinsuranceRule::ParamAtLeast { key, limit } => RuleKindDoc::ParamAtLeast {
                        key: key.clone(),
                        limit: *limit,
                    },
                },
            })
            .collect(),
        weak_inequalities: set.weak_inequalities,
    };
    pretty(&doc)
}

fn pretty<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize infallibly");
    s.push('\n');
    s
}
