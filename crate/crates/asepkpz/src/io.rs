//! CSV and column-file rendering, content hashes.

use sha2::{Digest, Sha256};

use crate::asep::Trajectory;
use crate::she::{CompareRow, FieldPath};

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

pub fn csv(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(Cell::render).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Whitespace-separated `(x, y, yerr)` columns.
pub fn column_file(points: &[(f64, f64, f64)]) -> String {
    points.iter().map(|(x, y, e)| format!("{} {} {}\n", fmt_f64(*x), fmt_f64(*y), fmt_f64(*e))).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `(time, site, eta)` and `(time, site, h)` tables.
pub fn trajectory_csvs(traj: &Trajectory) -> (String, String) {
    let mut eta = Vec::new();
    let mut h = Vec::new();
    for (t, s) in traj.sample_times.iter().zip(&traj.snapshots) {
        for (i, &e) in s.config.eta.iter().enumerate() {
            eta.push(vec![Cell::F(*t), Cell::from(i + 1), Cell::I(e as i64)]);
        }
        for (x, &v) in s.height.h.iter().enumerate() {
            h.push(vec![Cell::F(*t), Cell::from(x), Cell::I(v)]);
        }
    }
    (csv(&["time", "site", "eta"], &eta), csv(&["time", "site", "h"], &h))
}

/// `(T, X, value, log_value)`.
pub fn field_csv(path: &FieldPath) -> String {
    let mut rows = Vec::new();
    for (t, row) in path.times.iter().zip(&path.values) {
        for (x, v) in path.x.iter().zip(row) {
            rows.push(vec![Cell::F(*t), Cell::F(*x), Cell::F(*v), Cell::F(v.ln())]);
        }
    }
    csv(&["T", "X", "value", "kpz"], &rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let body: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            [r.epsilon, r.t, r.x, r.asep_mean, r.she_mean, r.mean_gap, r.asep_var, r.she_var, r.var_gap, r.mc_sigma]
                .into_iter()
                .map(Cell::F)
                .collect()
        })
        .collect();
    csv(
        &["epsilon", "T", "X", "asep_mean", "she_mean", "mean_gap", "asep_var", "she_var", "var_gap", "mc_sigma"],
        &body,
    )
}
