//! Plain-text artifacts: field dumps, polylines and convergence logs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use statecon::{DescentTrace, Field, Grid};

use crate::experiment::{io_err, RunError};

/// One line per interior node: `x y value`, 17 significant digits.
pub fn format_field(field: &Field) -> String {
    let grid = field.grid();
    let mut s = String::with_capacity(field.len() * 72);
    for (k, v) in field.values().iter().enumerate() {
        let [x, y] = grid.coords(k);
        writeln!(s, "{x:.16e} {y:.16e} {v:.16e}").expect("writing to a String");
    }
    s
}

pub fn write_field(path: &Path, field: &Field) -> Result<(), RunError> {
    fs::write(path, format_field(field)).map_err(io_err(path))
}

pub fn write_polyline(path: &Path, points: &[[f64; 2]]) -> Result<(), RunError> {
    let mut s = String::new();
    for [x, y] in points {
        writeln!(s, "{x:.16e} {y:.16e}").expect("writing to a String");
    }
    fs::write(path, s).map_err(io_err(path))
}

pub fn format_convergence(trace: &DescentTrace) -> String {
    let mut s = String::from("k,cost,min_norm,step,solves\n");
    for r in &trace.records {
        writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{}",
            r.k, r.cost, r.min_norm, r.step, r.solves
        )
        .expect("writing to a String");
    }
    s
}

pub fn write_convergence(path: &Path, trace: &DescentTrace) -> Result<(), RunError> {
    fs::write(path, format_convergence(trace)).map_err(io_err(path))
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read dump: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("dump has {got} nodes, grid has {expected}")]
    NodeCount { expected: usize, got: usize },
}

/// Reads a field dump back onto `grid`, checking node coordinates.
pub fn read_field(path: &Path, grid: &Arc<Grid>) -> Result<Field, LoadError> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::with_capacity(grid.len());
    for (i, line) in text.lines().enumerate() {
        let bad = |msg: &str| LoadError::Malformed {
            line: i + 1,
            msg: msg.to_owned(),
        };
        let cols: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<_, _>>()?;
        if cols.len() != 3 {
            return Err(bad("expected `x y value`"));
        }
        let k = values.len();
        if k >= grid.len() {
            return Err(LoadError::NodeCount {
                expected: grid.len(),
                got: text.lines().count(),
            });
        }
        let [x, y] = grid.coords(k);
        if (cols[0] - x).abs() > 1e-12 || (cols[1] - y).abs() > 1e-12 {
            return Err(bad("coordinates do not match the grid"));
        }
        values.push(cols[2]);
    }
    if values.len() != grid.len() {
        return Err(LoadError::NodeCount {
            expected: grid.len(),
            got: values.len(),
        });
    }
    Ok(Field::from_values(grid, values).expect("length checked"))
}
