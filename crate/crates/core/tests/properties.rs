//! Randomized invariants of aggregation, allocation, RORAC evaluation and
//! the document round-trips.
//!
//! Correlation matrices are drawn as normalized Gram matrices of random
//! vectors, so they are positive semidefinite by construction and the
//! algebraic identities below (linearity under scaling, closure of the
//! allocation, standalone bounds, order independence) must hold up to
//! floating-point rounding.

use indexmap::IndexMap;
use proptest::prelude::*;

use scralloc::io::{
    emit_constraints, emit_income, emit_scenarios, emit_tree, parse_constraints, parse_income,
    parse_scenarios, parse_tree,
};
use scralloc::model::{CorrelationMatrix, MacroRisk, MicroRisk, RiskTree};
use scralloc::{
    aggregate_tree, allocate_tree, compute_rorac_for_tree, gradient, ConstraintSet64,
    CorrelationMatrix64, CvCap, IncomeEntry, IncomeStats64, MacroRisk64, MicroRisk64, NamedRule,
    PremiumBound, ReinsuranceDescriptor, ReinsuranceRule, RiskTree64, Scenario64,
};

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

fn standalone_sum(tree: &RiskTree64) -> f64 {
    tree.macros
        .iter()
        .flat_map(|g| g.micros.iter())
        .map(|m| m.scr)
        .sum()
}

fn leaf_paths(tree: &RiskTree64) -> Vec<String> {
    tree.macros
        .iter()
        .flat_map(|g| {
            let gid = g.id.clone();
            g.micros.iter().map(move |m| format!("{gid}/{}", m.id))
        })
        .collect()
}

/// Normalized Gram matrix of the given vectors. Zero vectors are nudged to
/// keep the norms positive, and off-diagonals are clamped so that rounding
/// at nearly parallel vectors cannot push an entry past one.
fn gram_correlation(vectors: &[Vec<f64>]) -> CorrelationMatrix64 {
    let safe: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let norm2: f64 = v.iter().map(|x| x * x).sum();
            if norm2 < 1e-12 {
                let mut w = v.clone();
                w[0] = 1.0;
                w
            } else {
                v.clone()
            }
        })
        .collect();
    let norms: Vec<f64> = safe
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let dim = safe.len();
    let rows: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        let dot: f64 = safe[i].iter().zip(&safe[j]).map(|(a, b)| a * b).sum();
                        (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    CorrelationMatrix64::from_rows(rows).expect("normalized Gram rows are a valid correlation")
}

fn correlation_vectors(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, dim + 2), dim)
}

fn group_strategy(max_micros: usize) -> impl Strategy<Value = MacroRisk64> {
    (1usize..=max_micros).prop_flat_map(|m| {
        (
            proptest::collection::vec(0.5f64..100.0, m),
            correlation_vectors(m),
        )
            .prop_map(|(scrs, vectors)| {
                let micros: Vec<MicroRisk64> = scrs
                    .iter()
                    .enumerate()
                    .map(|(j, s)| MicroRisk64::new(format!("m{j}"), *s))
                    .collect();
                MacroRisk64::new("g", micros, gram_correlation(&vectors))
            })
    })
}

fn tree_strategy(max_macros: usize, max_micros: usize) -> impl Strategy<Value = RiskTree64> {
    (1usize..=max_macros).prop_flat_map(move |n| {
        (
            proptest::collection::vec(group_strategy(max_micros), n),
            correlation_vectors(n),
        )
            .prop_map(|(mut groups, vectors)| {
                for (i, g) in groups.iter_mut().enumerate() {
                    g.id = format!("g{i}");
                    g.name = g.id.clone();
                }
                RiskTree64::new("portfolio", groups, gram_correlation(&vectors))
            })
    })
}

fn tree_and_income_strategy() -> impl Strategy<Value = (RiskTree64, IncomeStats64)> {
    tree_strategy(3, 4).prop_flat_map(|tree| {
        let paths = leaf_paths(&tree);
        let rows = proptest::collection::vec(
            (-4.0f64..16.0, proptest::option::of(0.1f64..6.0)),
            paths.len(),
        );
        rows.prop_map(move |entries| {
            let mut income = IncomeStats64::default();
            for (path, (mean, stdev)) in paths.iter().zip(entries) {
                income.insert(path.clone(), IncomeEntry { mean, stdev });
            }
            (tree.clone(), income)
        })
    })
}

fn constraints_strategy() -> impl Strategy<Value = ConstraintSet64> {
    (
        proptest::option::of(5.0f64..40.0),
        proptest::option::of(40.0f64..260.0),
        any::<bool>(),
        proptest::option::of((
            proptest::option::of(0.0f64..10.0),
            proptest::option::of(10.0f64..60.0),
        )),
        proptest::option::of(prop_oneof![
            (0.2f64..8.0).prop_map(CvCap::Uniform),
            (0.2f64..8.0).prop_map(|c| {
                let mut caps = IndexMap::new();
                caps.insert("g0/m0".to_string(), c);
                CvCap::PerLob(caps)
            }),
        ]),
        proptest::option::of(prop_oneof![
            Just(ReinsuranceRule::HasTag {
                tag: "quota-share".to_string(),
            }),
            Just(ReinsuranceRule::LacksTag {
                tag: "stop-loss".to_string(),
            }),
            Just(ReinsuranceRule::TagIn {
                any_of: vec!["quota-share".to_string(), "excess-of-loss".to_string()],
            }),
            (0.2f64..0.9).prop_map(|limit| ReinsuranceRule::ParamAtMost {
                key: "cession".to_string(),
                limit,
            }),
            (0.5f64..9.0).prop_map(|limit| ReinsuranceRule::ParamAtLeast {
                key: "retention".to_string(),
                limit,
            }),
        ]),
    )
        .prop_map(|(scr_min, scr_max, weak, premium, cv_cap, rule)| {
            let mut set = ConstraintSet64 {
                scr_min,
                scr_max,
                cv_cap,
                weak_inequalities: weak,
                ..ConstraintSet64::default()
            };
            if let Some((min, max)) = premium {
                set.premium_bounds.push(PremiumBound {
                    lob: "g0/m0".to_string(),
                    min,
                    max,
                });
            }
            if let Some(rule) = rule {
                set.reinsurance_rules.push(NamedRule {
                    id: "rule-0".to_string(),
                    rule,
                });
            }
            set
        })
}

fn scenario_strategy() -> impl Strategy<Value = Scenario64> {
    (
        tree_and_income_strategy(),
        proptest::collection::vec(0.0f64..50.0, 0..=4),
        any::<bool>(),
        proptest::option::of(0.0f64..1.0),
    )
        .prop_map(|((tree, income), premium_values, tagged, cession)| {
            let mut premiums = IndexMap::new();
            for (path, v) in leaf_paths(&tree).iter().zip(&premium_values) {
                premiums.insert(path.clone(), *v);
            }
            let mut reinsurance = ReinsuranceDescriptor::default();
            if tagged {
                reinsurance.tags.push("quota-share".to_string());
            }
            if let Some(c) = cession {
                reinsurance.parameters.insert("cession".to_string(), c);
            }
            Scenario64 {
                id: "s0".to_string(),
                premiums,
                reinsurance,
                tree,
                income,
            }
        })
}

fn scale_tree(tree: &RiskTree64, lambda: f64) -> RiskTree64 {
    let mut scaled = tree.clone();
    for g in &mut scaled.macros {
        for m in &mut g.micros {
            m.scr *= lambda;
        }
    }
    scaled
}

fn scale_income(income: &IncomeStats64, lambda: f64) -> IncomeStats64 {
    let mut out = IncomeStats64::default();
    for (path, e) in income.iter() {
        out.insert(
            path.clone(),
            IncomeEntry {
                mean: e.mean * lambda,
                stdev: e.stdev.map(|s| s * lambda),
            },
        );
    }
    out
}

/// Same tree with both levels listed in reverse order and the correlation
/// matrices permuted to match, so every node keeps its id and its
/// neighborhood but the iteration order changes.
fn reversed_tree(tree: &RiskTree64) -> RiskTree64 {
    let n = tree.macros.len();
    let macros: Vec<MacroRisk64> = tree
        .macros
        .iter()
        .rev()
        .map(|g| {
            let m = g.micros.len();
            let micros: Vec<MicroRisk64> = g.micros.iter().rev().cloned().collect();
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| g.correlation.at(m - 1 - i, m - 1 - j))
                        .collect()
                })
                .collect();
            let mut rev = MacroRisk64::new(
                g.id.clone(),
                micros,
                CorrelationMatrix64::from_rows(rows).unwrap(),
            );
            rev.name = g.name.clone();
            rev
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| tree.correlation.at(n - 1 - i, n - 1 - j))
                .collect()
        })
        .collect();
    RiskTree64::new(
        tree.name.clone(),
        macros,
        CorrelationMatrix64::from_rows(rows).unwrap(),
    )
}

/// Builds the same two-group portfolio at any scalar precision: one
/// equicorrelated group plus a singleton, joined by a nonnegative top-level
/// correlation, so no precision is lost to cancellation.
fn two_group_tree<T: scralloc::Real>(
    scrs: &[f64],
    rho_group: f64,
    scr_single: f64,
    rho_top: f64,
) -> RiskTree<T> {
    let m = scrs.len();
    let group_rows: Vec<Vec<T>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if i == j {
                        T::from_f64(1.0)
                    } else {
                        T::from_f64(rho_group)
                    }
                })
                .collect()
        })
        .collect();
    let group = MacroRisk::new(
        "a",
        scrs.iter()
            .enumerate()
            .map(|(j, s)| MicroRisk::new(format!("m{j}"), T::from_f64(*s)))
            .collect(),
        CorrelationMatrix::from_rows(group_rows).unwrap(),
    );
    let single = MacroRisk::new(
        "b",
        vec![MicroRisk::new("m0", T::from_f64(scr_single))],
        CorrelationMatrix::from_rows(vec![vec![T::from_f64(1.0)]]).unwrap(),
    );
    let top = CorrelationMatrix::from_rows(vec![
        vec![T::from_f64(1.0), T::from_f64(rho_top)],
        vec![T::from_f64(rho_top), T::from_f64(1.0)],
    ])
    .unwrap();
    RiskTree::new("mixed", vec![group, single], top)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Scaling every leaf SCR by a positive factor scales the total and
    /// every allocation by the same factor.
    #[test]
    fn totals_and_allocations_scale_linearly(
        tree in tree_strategy(4, 5),
        lambda in 0.05f64..20.0,
    ) {
        let base = allocate_tree(&tree).unwrap();
        // Rounding error is measured against the size of the quadratic
        // form's terms, so totals drowned in cancellation carry no
        // resolvable ratio.
        prop_assume!(base.total_scr > 1e-9 * standalone_sum(&tree));
        let scaled = allocate_tree(&scale_tree(&tree, lambda)).unwrap();
        let tol = 1e-12 * lambda * (base.total_scr + standalone_sum(&tree));

        prop_assert!((scaled.total_scr - lambda * base.total_scr).abs() <= tol);
        for (a, b) in base.macros.iter().zip(&scaled.macros) {
            prop_assert!((b.allocated - lambda * a.allocated).abs() <= tol);
        }
        for (a, b) in base.micros.iter().zip(&scaled.micros) {
            prop_assert!((b.allocated - lambda * a.allocated).abs() <= tol);
        }
    }

    /// Group allocations sum to the total and leaf allocations sum to their
    /// group's allocation, with no remainder term.
    #[test]
    fn allocation_closes_at_both_levels(tree in tree_strategy(5, 6)) {
        let alloc = allocate_tree(&tree).unwrap();
        let sum_abs: f64 = alloc.macros.iter().map(|g| g.allocated.abs()).sum();
        let tol = 1e-12 * (alloc.total_scr + sum_abs + standalone_sum(&tree));

        let macro_sum: f64 = alloc.macros.iter().map(|g| g.allocated).sum();
        prop_assert!((macro_sum - alloc.total_scr).abs() <= tol);
        for g in &alloc.macros {
            let micro_sum: f64 = alloc
                .micros
                .iter()
                .filter(|m| m.macro_id == g.id)
                .map(|m| m.allocated)
                .sum();
            prop_assert!((micro_sum - g.allocated).abs() <= tol);
        }
    }

    /// Leaf allocations equal the leaf SCR times the published gradient
    /// factor, coordinate by coordinate.
    #[test]
    fn micro_allocation_equals_scr_times_gradient(tree in tree_strategy(4, 5)) {
        let alloc = allocate_tree(&tree).unwrap();
        let grad = gradient(&tree).unwrap();
        prop_assert_eq!(alloc.micros.len(), grad.len());
        let tol = 1e-12 * (alloc.total_scr + standalone_sum(&tree));

        for (m, g) in alloc.micros.iter().zip(&grad) {
            prop_assert_eq!((&m.macro_id, &m.micro_id), (&g.macro_id, &g.micro_id));
            let scr = tree.find_micro(&m.macro_id, &m.micro_id).unwrap().scr;
            prop_assert!((m.allocated - scr * g.value).abs() <= tol);
        }
    }

    /// With unit-diagonal positive semidefinite correlations, no node's
    /// allocation can exceed its standalone SCR in magnitude.
    #[test]
    fn no_allocation_exceeds_standalone(tree in tree_strategy(4, 5)) {
        let alloc = allocate_tree(&tree).unwrap();
        let slack = 1e-9 * (alloc.total_scr + standalone_sum(&tree));
        for g in &alloc.macros {
            prop_assert!(g.allocated.abs() <= g.standalone + slack);
        }
        for m in &alloc.micros {
            prop_assert!(m.allocated.abs() <= m.standalone + slack);
        }
    }

    /// Expressing capital and income in a different currency leaves every
    /// RORAC figure unchanged: the ratios are scale-free.
    #[test]
    fn rorac_is_invariant_under_currency_rescaling(
        (tree, income) in tree_and_income_strategy(),
        lambda in 0.1f64..10.0,
    ) {
        let alloc = allocate_tree(&tree).unwrap();
        prop_assume!(alloc.total_scr > 1e-9 * standalone_sum(&tree));
        let base = compute_rorac_for_tree(&tree, &alloc, &income).unwrap();

        let scaled_tree = scale_tree(&tree, lambda);
        let scaled_alloc = allocate_tree(&scaled_tree).unwrap();
        let scaled_income = scale_income(&income, lambda);
        let scaled = compute_rorac_for_tree(&scaled_tree, &scaled_alloc, &scaled_income).unwrap();

        let abs_income: f64 = income.iter().map(|(_, e)| e.mean.abs()).sum();
        let total_tol = 1e-9 * (1.0 + abs_income / alloc.total_scr);
        prop_assert!((scaled.expected_rorac - base.expected_rorac).abs() <= total_tol);
        prop_assert!((scaled.rorac_stdev - base.rorac_stdev).abs() <= total_tol);

        let floor = 1e-3 * (alloc.total_scr + standalone_sum(&tree));
        for (b, s) in base.rows.iter().zip(&scaled.rows) {
            prop_assert_eq!(&b.node, &s.node);
            // Ratios over a vanishing capital base amplify rounding without
            // bound, so only resolvable rows are compared.
            if b.allocated.abs() < floor {
                continue;
            }
            prop_assert!(rel(s.expected_rorac, b.expected_rorac) <= 1e-9);
            prop_assert_eq!(b.rorac_stdev.is_some(), s.rorac_stdev.is_some());
            if let (Some(bs), Some(ss)) = (b.rorac_stdev, s.rorac_stdev) {
                prop_assert!(rel(ss, bs) <= 1e-9);
            }
            prop_assert_eq!(
                b.coefficient_of_variation.is_some(),
                s.coefficient_of_variation.is_some()
            );
            if let (Some(bc), Some(sc)) = (b.coefficient_of_variation, s.coefficient_of_variation) {
                prop_assert!(rel(sc, bc) <= 1e-9);
            }
        }
    }

    /// Exchangeable leaves (equal SCRs, equal pairwise correlation) receive
    /// exactly equal shares of the total.
    #[test]
    fn exchangeable_leaves_split_capital_evenly(
        m in 2usize..=6,
        scr in 0.5f64..100.0,
        rho_seed in 0.0f64..1.0,
    ) {
        // Any rho in (-1/(m-1), 1) keeps the equicorrelation matrix PSD;
        // stay off the singular endpoint where the total collapses to zero.
        let rho_low = -1.0 / (m as f64 - 1.0);
        let rho = rho_low + (1.0 - rho_low) * (1e-3 + 0.998 * rho_seed);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { rho }).collect())
            .collect();
        let micros: Vec<MicroRisk64> = (0..m)
            .map(|j| MicroRisk64::new(format!("m{j}"), scr))
            .collect();
        let group = MacroRisk64::new("a", micros, CorrelationMatrix64::from_rows(rows).unwrap());
        let tree = RiskTree64::new(
            "exchangeable",
            vec![group],
            CorrelationMatrix64::identity(1).unwrap(),
        );

        let alloc = allocate_tree(&tree).unwrap();
        let share = alloc.total_scr / m as f64;
        for micro in &alloc.micros {
            prop_assert!((micro.allocated - share).abs() <= 1e-12 * alloc.total_scr);
        }
    }

    /// Listing the groups and leaves in a different order changes nothing:
    /// every id keeps its allocation and the total is identical.
    #[test]
    fn node_order_does_not_change_allocations(tree in tree_strategy(3, 4)) {
        let base = allocate_tree(&tree).unwrap();
        let rev = allocate_tree(&reversed_tree(&tree)).unwrap();
        let tol = 1e-12 * (base.total_scr.abs() + standalone_sum(&tree));

        prop_assert!((base.total_scr - rev.total_scr).abs() <= tol);
        for m in &base.micros {
            let twin = rev
                .micros
                .iter()
                .find(|x| x.macro_id == m.macro_id && x.micro_id == m.micro_id)
                .unwrap();
            prop_assert!((m.allocated - twin.allocated).abs() <= tol);
        }
    }

    /// A tree written out and read back is the same tree, bit for bit.
    #[test]
    fn tree_documents_round_trip(tree in tree_strategy(3, 4)) {
        let parsed = parse_tree(&emit_tree(&tree)).unwrap();
        prop_assert_eq!(parsed, tree);
    }

    /// Income statistics survive the document round-trip unchanged,
    /// including entry order and absent standard deviations.
    #[test]
    fn income_documents_round_trip((_tree, income) in tree_and_income_strategy()) {
        let parsed = parse_income(&emit_income(&income)).unwrap();
        prop_assert_eq!(parsed, income);
    }

    /// Constraint sets survive the document round-trip unchanged across all
    /// bound kinds, cap shapes and rule variants.
    #[test]
    fn constraint_documents_round_trip(set in constraints_strategy()) {
        let parsed = parse_constraints(&emit_constraints(&set)).unwrap();
        prop_assert_eq!(parsed, set);
    }

    /// Scenario sets survive the document round-trip unchanged, including
    /// premium maps, reinsurance descriptors and per-scenario incomes.
    #[test]
    fn scenario_documents_round_trip(
        raw in proptest::collection::vec(scenario_strategy(), 1..=2),
    ) {
        let scenarios: Vec<Scenario64> = raw
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.id = format!("s{i}");
                s
            })
            .collect();
        let parsed = parse_scenarios(&emit_scenarios(&scenarios)).unwrap();
        prop_assert_eq!(parsed, scenarios);
    }

    /// The engine is generic over the scalar: single precision reproduces
    /// the double-precision totals and allocations to single-precision
    /// accuracy when the correlations are nonnegative (no cancellation).
    #[test]
    fn single_precision_tracks_double_precision(
        scrs in proptest::collection::vec(0.5f64..100.0, 1..=5),
        rho_group in 0.0f64..1.0,
        scr_single in 0.5f64..100.0,
        rho_top in 0.0f64..1.0,
    ) {
        let tree64: RiskTree<f64> = two_group_tree(&scrs, rho_group, scr_single, rho_top);
        let tree32: RiskTree<f32> = two_group_tree(&scrs, rho_group, scr_single, rho_top);

        let total64 = aggregate_tree(&tree64).unwrap().total_scr;
        let total32 = aggregate_tree(&tree32).unwrap().total_scr as f64;
        prop_assert!(rel(total32, total64) <= 1e-5);

        let alloc64 = allocate_tree(&tree64).unwrap();
        let alloc32 = allocate_tree(&tree32).unwrap();
        let tol = 1e-4 * (total64 + standalone_sum(&tree64));
        for (a, b) in alloc64.micros.iter().zip(&alloc32.micros) {
            prop_assert!((b.allocated as f64 - a.allocated).abs() <= tol);
        }
    }
}
