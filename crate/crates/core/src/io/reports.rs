//! Deterministic report rendering: CSV tables and pretty JSON.
//!
//! All numeric output goes through [`format_g`], which mirrors C's `%.12g`
//! (12 significant digits, fixed or scientific as magnitude demands,
//! trailing zeros trimmed). Reparsing a CSV therefore recovers every value
//! to 12 significant digits, and byte output is stable across runs.

use serde::Serialize;

use crate::aggregate::AggregationOutput;
use crate::allocate::{diversification_report, AllocationResult};
use crate::checks::PropertyCheck;
use crate::mc::ComparisonReport;
use crate::optimize::{FrontierDataset, OptimizationReport};
use crate::rorac::RoracReport;
use crate::scalar::Real;

/// Formats with the given number of significant digits, `%g`-style.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let p = digits.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exponent) = sci.split_once('e').expect("float exponential form");
    let e: i32 = exponent.parse().expect("float exponent");
    if e < -4 || e >= p as i32 {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa),
            if e < 0 { "-" } else { "+" },
            e.abs()
        )
    } else {
        let decimals = (p as i32 - 1 - e).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    }
}

/// `%.12g` equivalent; the fixed report format.
pub fn format_g(x: f64) -> String {
    format_sig(x, 12)
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Quotes a CSV field when it contains a delimiter, quote or newline.
pub fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn row(fields: &[String]) -> String {
    fields
        .iter()
        .map(|f| csv_escape(f))
        .collect::<Vec<_>>()
        .join(",")
}

fn num<T: Real>(x: T) -> String {
    format_g(x.as_f64())
}

fn opt_num<T: Real>(x: Option<T>) -> String {
    x.map(num).unwrap_or_default()
}

/// Aggregation report: one row per macro plus the total.
pub fn aggregation_csv<T: Real>(agg: &AggregationOutput<T>) -> String {
    let mut out = String::from("node,scr\n");
    for m in &agg.macro_scrs {
        out.push_str(&row(&[m.id.clone(), num(m.scr)]));
        out.push('\n');
    }
    out.push_str(&row(&["total".to_string(), num(agg.total_scr)]));
    out.push('\n');
    out
}

/// Allocation report with diversification deltas; macro rows carry the
/// allocation ratio, micro rows leave it blank.
pub fn allocation_csv<T: Real>(alloc: &AllocationResult<T>) -> String {
    let div = diversification_report(alloc);
    let mut out =
        String::from("node,level,standalone,allocated,diversification,allocation_ratio\n");
    for m in &alloc.macros {
        out.push_str(&row(&[
            m.id.clone(),
            "macro".to_string(),
            num(m.standalone),
            num(m.allocated),
            num(m.diversification),
            num(m.allocation_ratio),
        ]));
        out.push('\n');
    }
    for m in &alloc.micros {
        out.push_str(&row(&[
            format!("{}/{}", m.macro_id, m.micro_id),
            "micro".to_string(),
            num(m.standalone),
            num(m.allocated),
            num(m.diversification),
            String::new(),
        ]));
        out.push('\n');
    }
    out.push_str(&row(&[
        "total".to_string(),
        "portfolio".to_string(),
        num(div.total_standalone),
        num(div.total_scr),
        num(div.total_diversification),
        String::new(),
    ]));
    out.push('\n');
    out
}

/// RORAC report: one row per leaf plus the capital-weighted total.
pub fn rorac_csv<T: Real>(report: &RoracReport<T>) -> String {
    let mut out = String::from(
        "node,label,income_mean,income_stdev,allocated,expected_rorac,rorac_stdev,coefficient_of_variation\n",
    );
    for r in &report.rows {
        out.push_str(&row(&[
            r.node.clone(),
            r.label.clone(),
            num(r.income_mean),
            opt_num(r.income_stdev),
            num(r.allocated),
            num(r.expected_rorac),
            opt_num(r.rorac_stdev),
            opt_num(r.coefficient_of_variation),
        ]));
        out.push('\n');
    }
    out.push_str(&row(&[
        "total".to_string(),
        "Total".to_string(),
        num(report.total_income),
        String::new(),
        num(report.total_allocated),
        num(report.expected_rorac),
        num(report.rorac_stdev),
        String::new(),
    ]));
    out.push('\n');
    out
}

/// Simulation cross-check report: closed form vs estimate per node.
pub fn mc_comparison_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("node,closed_form,mc_estimate,std_error,z_score,flagged\n");
    for r in &report.rows {
        out.push_str(&row(&[
            r.node.clone(),
            format_g(r.closed_form),
            format_g(r.mc_estimate),
            format_g(r.std_error),
            format_g(r.z_score),
            r.flagged.to_string(),
        ]));
        out.push('\n');
    }
    out
}

/// Scenario-selection report: one row per scenario, selected flag included.
pub fn optimization_csv<T: Real>(report: &OptimizationReport<T>) -> String {
    let selected = report.selected.as_ref().map(|s| s.id.as_str());
    let mut out = String::from("scenario,selected,feasible,total_scr,expected_rorac,violated\n");
    for o in &report.outcomes {
        out.push_str(&row(&[
            o.id.clone(),
            (selected == Some(o.id.as_str())).to_string(),
            o.feasible.to_string(),
            num(o.total_scr),
            num(o.expected_rorac),
            o.violated.join("; "),
        ]));
        out.push('\n');
    }
    out
}

/// Frontier dataset as the four-column table (LoB, return, spread, capital).
pub fn frontier_csv<T: Real>(dataset: &FrontierDataset<T>) -> String {
    let mut out = String::new();
    if let Some(note) = &dataset.note {
        out.push_str(&format!("# {note}\n"));
    }
    out.push_str("lob,expected_rorac,rorac_stdev,allocated_scr\n");
    for p in &dataset.rows {
        out.push_str(&row(&[
            p.label.clone(),
            num(p.expected_rorac),
            opt_num(p.rorac_stdev),
            num(p.allocated),
        ]));
        out.push('\n');
    }
    if let Some(t) = &dataset.total {
        out.push_str(&row(&[
            t.label.clone(),
            num(t.expected_rorac),
            opt_num(t.rorac_stdev),
            num(t.allocated),
        ]));
        out.push('\n');
    }
    out
}

/// Property-suite verdicts as a table.
pub fn checks_csv(checks: &[PropertyCheck]) -> String {
    let mut out = String::from("check,status,detail\n");
    for c in checks {
        out.push_str(&row(&[
            c.name.to_string(),
            format!("{:?}", c.status),
            c.detail.clone(),
        ]));
        out.push('\n');
    }
    out
}

/// Pretty JSON with a trailing newline; field order is declaration order.
pub fn report_json<S: Serialize>(report: &S) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize infallibly");
    s.push('\n');
    s
}
