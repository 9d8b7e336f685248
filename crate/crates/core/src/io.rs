//! Deterministic text formatting shared by every CSV writer.

use std::fmt::Write as _;

/// Twelve significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000000e0".to_string();
    }
    format!("{x:.11e}")
}

pub struct CsvTable {
    units: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(units: &str, header: &[&str]) -> Self {
        CsvTable { units: units.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.units);
        let _ = writeln!(s, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}
