use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::experiment::{io_err, RunError, RunReport};

pub const CSV_HEADER: &str = "node_count,opt_cost,iters,pde_solves,kkt_residual,constraint_value";

pub fn format_csv(report: &RunReport) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in &report.rows {
        writeln!(
            s,
            "{},{:.10e},{},{},{:.6e},{:.10e}",
            r.node_count, r.opt_cost, r.iters, r.pde_solves, r.kkt_residual, r.constraint_value
        )
        .expect("writing to a String");
    }
    s
}

pub fn format_table(report: &RunReport) -> String {
    let mut s = format!(
        "{:>6} {:>10} {:>14} {:>6} {:>10} {:>12} {:>16}  {}\n",
        "n", "nodes", "opt_cost", "iters", "pde_solves", "kkt_resid", "constraint", "status"
    );
    for r in &report.rows {
        writeln!(
            s,
            "{:>6} {:>10} {:>14.6e} {:>6} {:>10} {:>12.3e} {:>16.10}  {:?}",
            r.grid_size,
            r.node_count,
            r.opt_cost,
            r.iters,
            r.pde_solves,
            r.kkt_residual,
            r.constraint_value,
            r.termination
        )
        .expect("writing to a String");
    }
    s
}

/// Writes `<out>/report.csv` and returns the text table.
pub fn emit_report(report: &RunReport, out: &Path) -> Result<String, RunError> {
    if report.rows.is_empty() {
        return Err(RunError::EmptyReport);
    }
    let path = out.join("report.csv");
    fs::write(&path, format_csv(report)).map_err(io_err(&path))?;
    Ok(format_table(report))
}
