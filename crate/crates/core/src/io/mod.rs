//! Case files and run reports.

mod case;
mod report;

pub use case::{
    parse_case_file, parse_case_str, CaseError, CaseFile, DemandBlockRecord, DemandRecord, FixedLoadRecord,
    GenBlockRecord, GeneratorRecord, LineRecord, Metadata, NetworkSection, ParseOptions, ParsedCase, WindSection,
    DEFAULT_LINE_CAPACITY_MW, DEFAULT_RESERVE_COST_B, DEFAULT_RESERVE_COST_C, SCHEMA_VERSION,
};
pub use report::{
    emit_report, render_text, BusPrice, LineFlow, OracleSummary, ReportFormat, RunReport, ShiftSummary,
    SolutionSummary, UnitDispatch, CERTIFICATE_CSV_HEADER, DISPATCH_CSV_HEADER, SETTLEMENT_CSV_HEADER,
};
