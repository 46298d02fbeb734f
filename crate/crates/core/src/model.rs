//! Portfolio model: correlation matrices, the two-level risk tree and
//! structural validation.
//!
//! Construction is lenient on purpose: only shape invariants that later code
//! depends on unconditionally (matrix squareness) are enforced up front.
//! Everything else is reported by [`validate_tree`], which collects all
//! violations instead of stopping at the first, so a caller can show a
//! complete diagnosis of a bad input file in one pass.

use thiserror::Error;

use crate::linalg;
use crate::scalar::Real;

/// Errors for direct matrix construction.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("correlation matrix must have positive dimension")]
    EmptyMatrix,
    #[error("entry count {len} is not a perfect square of the dimension {dim}")]
    NotSquare { len: usize, dim: usize },
    #[error("correlation matrix is not symmetric at ({i},{j}): {a} vs {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },
}

/// Dense symmetric correlation matrix in row-major storage.
///
/// Immutable after construction. Entries are kept exactly as supplied;
/// properties such as symmetry, unit diagonal and positive semidefiniteness
/// are checked by [`validate_tree`] rather than forced here.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix<T> {
    dim: usize,
    entries: Vec<T>,
}

impl<T: Real> CorrelationMatrix<T> {
    /// Builds from a row-major flat slice of length `dim * dim`.
    pub fn from_flat(dim: usize, entries: Vec<T>) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::EmptyMatrix);
        }
        if entries.len() != dim * dim {
            return Err(ModelError::NotSquare {
                len: entries.len(),
                dim,
            });
        }
        Ok(Self { dim, entries })
    }

    /// Builds from nested rows; every row must have length `rows.len()`.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, ModelError> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(ModelError::NotSquare {
                    len: rows.iter().map(Vec::len).sum(),
                    dim,
                });
            }
            entries.extend(row.iter().copied());
        }
        Self::from_flat(dim, entries)
    }

    /// Identity matrix (independent risks).
    pub fn identity(dim: usize) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::EmptyMatrix);
        }
        let mut entries = vec![T::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = T::one();
        }
        Ok(Self { dim, entries })
    }

    /// Matrix of all ones (comonotone risks).
    pub fn comonotone(dim: usize) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::EmptyMatrix);
        }
        Ok(Self {
            dim,
            entries: vec![T::one(); dim * dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.entries[i * self.dim + j]
    }

    /// Row-major view of the entries.
    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub(crate) fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    /// Smallest eigenvalue, computed in `f64`.
    ///
    /// Fails when the matrix is not symmetric within `sym_tol` (absolute),
    /// since eigenvalues of a non-symmetric matrix need not be real.
    pub fn min_eigenvalue(&self, sym_tol: f64) -> Result<f64, ModelError> {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let a = self.at(i, j).as_f64();
                let b = self.at(j, i).as_f64();
                let gap = (a - b).abs();
                if gap.is_nan() || gap > sym_tol {
                    return Err(ModelError::NotSymmetric { i, j, a, b });
                }
            }
        }
        Ok(linalg::min_symmetric_eigenvalue(&self.to_f64_matrix()))
    }

    /// Whether the matrix is positive semidefinite within the default
    /// eigenvalue tolerance. Non-symmetric or non-finite input counts as
    /// not PSD.
    pub fn is_psd(&self) -> bool {
        if self.entries.iter().any(|x| !x.as_f64().is_finite()) {
            return false;
        }
        match self.min_eigenvalue(ValidationConfig::default().symmetry_tolerance) {
            Ok(lambda) => lambda >= -ValidationConfig::default().psd_tolerance,
            Err(_) => false,
        }
    }

    pub(crate) fn to_f64_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| self.at(i, j).as_f64())
    }
}

/// Leaf risk: one line of business or sub-risk with a standalone SCR.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroRisk<T> {
    pub id: String,
    /// Display name for reports; defaults to the id when absent in input.
    pub name: String,
    pub scr: T,
}

impl<T: Real> MicroRisk<T> {
    pub fn new(id: impl Into<String>, scr: T) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            scr,
        }
    }
}

/// Macro risk: a named group of micro risks with an intra-group correlation
/// matrix of matching dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroRisk<T> {
    pub id: String,
    pub name: String,
    pub micros: Vec<MicroRisk<T>>,
    pub correlation: CorrelationMatrix<T>,
}

impl<T: Real> MacroRisk<T> {
    pub fn new(
        id: impl Into<String>,
        micros: Vec<MicroRisk<T>>,
        correlation: CorrelationMatrix<T>,
    ) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            micros,
            correlation,
        }
    }

    /// Standalone SCRs of the member micro risks, in declaration order.
    pub fn micro_scrs(&self) -> Vec<T> {
        self.micros.iter().map(|m| m.scr).collect()
    }
}

/// Two-level portfolio: macro risks correlated at the top level, each
/// holding its own correlated micro risks.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTree<T> {
    pub name: String,
    pub macros: Vec<MacroRisk<T>>,
    pub correlation: CorrelationMatrix<T>,
}

impl<T: Real> RiskTree<T> {
    pub fn new(
        name: impl Into<String>,
        macros: Vec<MacroRisk<T>>,
        correlation: CorrelationMatrix<T>,
    ) -> Self {
        Self {
            name: name.into(),
            macros,
            correlation,
        }
    }

    /// Total number of micro risks across all macro groups.
    pub fn micro_count(&self) -> usize {
        self.macros.iter().map(|m| m.micros.len()).sum()
    }

    /// Slash-joined `macro/micro` paths of every leaf, in tree order.
    pub fn leaf_paths(&self) -> Vec<String> {
        self.macros
            .iter()
            .flat_map(|g| {
                g.micros
                    .iter()
                    .map(move |m| format!("{}/{}", g.id, m.id))
            })
            .collect()
    }

    pub fn find_macro(&self, id: &str) -> Option<&MacroRisk<T>> {
        self.macros.iter().find(|m| m.id == id)
    }

    pub fn find_micro(&self, macro_id: &str, micro_id: &str) -> Option<&MicroRisk<T>> {
        self.find_macro(macro_id)?
            .micros
            .iter()
            .find(|m| m.id == micro_id)
    }
}

/// Reference to a node in the tree, parsed from `macro` or `macro/micro`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeRef {
    Macro { macro_id: String },
    Micro { macro_id: String, micro_id: String },
}

impl NodeRef {
    /// Parses `"A"` as a macro reference and `"A/x"` as a micro reference.
    pub fn parse(path: &str) -> Option<Self> {
        let mut parts = path.split('/');
        let first = parts.next()?.trim();
        if first.is_empty() {
            return None;
        }
        match parts.next() {
            None => Some(NodeRef::Macro {
                macro_id: first.to_string(),
            }),
            Some(second) => {
                let second = second.trim();
                if second.is_empty() || parts.next().is_some() {
                    None
                } else {
                    Some(NodeRef::Micro {
                        macro_id: first.to_string(),
                        micro_id: second.to_string(),
                    })
                }
            }
        }
    }
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeRef::Macro { macro_id } => write!(f, "{macro_id}"),
            NodeRef::Micro { macro_id, micro_id } => write!(f, "{macro_id}/{micro_id}"),
        }
    }
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// The model is unusable as given.
    Error,
    /// The model is usable but outside the theory's guarantees.
    Warning,
}

/// One validation finding, located by a slash path from the tree root.
#[derive(Debug, Clone)]
pub struct Violation {
    /// `/` for the tree, `/A` for macro A, `/A/x` for micro x in A.
    pub path: String,
    /// Stable machine-readable rule id.
    pub rule: &'static str,
    pub severity: Severity,
    pub detail: String,
}

/// Result of validating a tree: all findings, in tree order.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.violations
            .iter()
            .any(|v| v.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Warning)
    }
}

/// Numeric tolerances used by validation.
#[derive(Debug, Clone)]
pub struct ValidationConfig {
    /// Absolute tolerance for `|r_ij - r_ji|`.
    pub symmetry_tolerance: f64,
    /// A matrix counts as PSD when its smallest eigenvalue is at least
    /// `-psd_tolerance`.
    pub psd_tolerance: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            symmetry_tolerance: 1e-12,
            psd_tolerance: 1e-10,
        }
    }
}

/// Validates a tree with default tolerances. See [`validate_tree_with`].
pub fn validate_tree<T: Real>(tree: &RiskTree<T>) -> ValidationReport {
    validate_tree_with(tree, &ValidationConfig::default())
}

/// Validates structure and numeric sanity of a tree, collecting every
/// violation rather than stopping at the first.
///
/// Errors: negative or non-finite SCRs, duplicate ids, correlation dimension
/// mismatches, asymmetry, non-unit diagonals, entries outside `[-1, 1]`,
/// non-finite entries, empty groups. A correlation matrix that is valid
/// entry-wise but not positive semidefinite is reported as a warning:
/// aggregation still evaluates, but coherence guarantees no longer apply.
pub fn validate_tree_with<T: Real>(
    tree: &RiskTree<T>,
    config: &ValidationConfig,
) -> ValidationReport {
    let mut out = Vec::new();

    if tree.macros.is_empty() {
        out.push(Violation {
            path: "/".to_string(),
            rule: "tree-empty",
            severity: Severity::Error,
            detail: "tree has no macro risks".to_string(),
        });
    }

    let mut seen_macro = std::collections::HashSet::new();
    for g in &tree.macros {
        if !seen_macro.insert(g.id.as_str()) {
            out.push(Violation {
                path: format!("/{}", g.id),
                rule: "macro-id-duplicate",
                severity: Severity::Error,
                detail: format!("macro id {:?} appears more than once", g.id),
            });
        }
    }

    validate_matrix(
        &tree.correlation,
        tree.macros.len(),
        "/",
        config,
        &mut out,
    );

    for g in &tree.macros {
        let path = format!("/{}", g.id);
        if g.micros.is_empty() {
            out.push(Violation {
                path: path.clone(),
                rule: "macro-empty",
                severity: Severity::Error,
                detail: format!("macro {:?} has no micro risks", g.id),
            });
        }

        let mut seen_micro = std::collections::HashSet::new();
        for m in &g.micros {
            let leaf = format!("{}/{}", path, m.id);
            if !seen_micro.insert(m.id.as_str()) {
                out.push(Violation {
                    path: leaf.clone(),
                    rule: "micro-id-duplicate",
                    severity: Severity::Error,
                    detail: format!("micro id {:?} appears more than once in macro {:?}", m.id, g.id),
                });
            }
            let scr = m.scr.as_f64();
            if !scr.is_finite() {
                out.push(Violation {
                    path: leaf,
                    rule: "scr-not-finite",
                    severity: Severity::Error,
                    detail: format!("scr is {scr}"),
                });
            } else if scr < 0.0 {
                out.push(Violation {
                    path: leaf,
                    rule: "scr-negative",
                    severity: Severity::Error,
                    detail: format!("scr {scr} is negative"),
                });
            }
        }

        validate_matrix(&g.correlation, g.micros.len(), &path, config, &mut out);
    }

    ValidationReport { violations: out }
}

fn validate_matrix<T: Real>(
    corr: &CorrelationMatrix<T>,
    expected_dim: usize,
    path: &str,
    config: &ValidationConfig,
    out: &mut Vec<Violation>,
) {
    if corr.dim() != expected_dim {
        out.push(Violation {
            path: path.to_string(),
            rule: "corr-dim-mismatch",
            severity: Severity::Error,
            detail: format!(
                "correlation is {0}x{0} but the level has {1} risks",
                corr.dim(),
                expected_dim
            ),
        });
        // Entry checks still apply; the PSD check below runs on the matrix
        // as stored, which is fine for reporting purposes.
    }

    let dim = corr.dim();
    let mut entrywise_ok = true;
    for i in 0..dim {
        for j in 0..dim {
            let v = corr.at(i, j).as_f64();
            if !v.is_finite() {
                entrywise_ok = false;
                out.push(Violation {
                    path: path.to_string(),
                    rule: "corr-entry-not-finite",
                    severity: Severity::Error,
                    detail: format!("entry ({i},{j}) is {v}"),
                });
                continue;
            }
            if i == j {
                if v != 1.0 {
                    entrywise_ok = false;
                    out.push(Violation {
                        path: path.to_string(),
                        rule: "corr-diagonal-not-unit",
                        severity: Severity::Error,
                        detail: format!("diagonal entry ({i},{i}) is {v}, expected exactly 1"),
                    });
                }
            } else if !(-1.0..=1.0).contains(&v) {
                entrywise_ok = false;
                out.push(Violation {
                    path: path.to_string(),
                    rule: "corr-entry-out-of-range",
                    severity: Severity::Error,
                    detail: format!("entry ({i},{j}) = {v} is out of [-1, 1]"),
                });
            }
            if j > i {
                let w = corr.at(j, i).as_f64();
                if w.is_finite() && (v - w).abs() > config.symmetry_tolerance {
                    entrywise_ok = false;
                    out.push(Violation {
                        path: path.to_string(),
                        rule: "corr-not-symmetric",
                        severity: Severity::Error,
                        detail: format!("entries ({i},{j}) = {v} and ({j},{i}) = {w} differ"),
                    });
                }
            }
        }
    }

    if entrywise_ok {
        if let Ok(lambda) = corr.min_eigenvalue(config.symmetry_tolerance) {
            if lambda < -config.psd_tolerance {
                out.push(Violation {
                    path: path.to_string(),
                    rule: "corr-not-psd",
                    severity: Severity::Warning,
                    detail: format!(
                        "smallest eigenvalue {lambda:.6e} is negative; aggregation remains defined but coherence guarantees do not apply"
                    ),
                });
            }
        }
    }
}
