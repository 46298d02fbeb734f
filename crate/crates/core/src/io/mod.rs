//! External artifact formats: JSON documents in, CSV/JSON/SVG reports out.

pub mod docs;
pub mod reports;
pub mod svg;

pub use docs::{
    emit_constraints, emit_income, emit_scenarios, emit_tree, parse_constraints, parse_income,
    parse_scenarios, parse_tree, DocError,
};
pub use reports::{
    aggregation_csv, allocation_csv, checks_csv, csv_escape, format_g, format_sig, frontier_csv,
    mc_comparison_csv, optimization_csv, report_json, rorac_csv,
};
pub use svg::emit_svg_scatter;
