//! Tabular report assembly and emission.
//!
//! Every command produces one table whose cells are already formatted
//! text, so CSV and JSON renderings of the same run carry field-identical
//! content and identical runs produce byte-identical files.

use std::fs;
use std::path::Path;

use crate::CliError;

/// Floats are printed with 12 significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

/// A homogeneous report: fixed column order, stringified cells.
pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "ragged report row");
        self.rows.push(row);
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Header line plus one line per row. Cells never contain commas,
    /// quotes, or newlines, so no quoting dialect is needed.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Array of objects with the same keys and cell text as the CSV, in
    /// column order.
    pub fn to_json(&self) -> String {
        if self.rows.is_empty() {
            return "[]\n".to_string();
        }
        let mut out = String::from("[\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str("  {");
            for (j, (col, cell)) in self.columns.iter().zip(row).enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                out.push('"');
                out.push_str(&json_escape(col));
                out.push_str("\": \"");
                out.push_str(&json_escape(cell));
                out.push('"');
            }
            out.push('}');
            if i + 1 < self.rows.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("]\n");
        out
    }
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Renders the table and either writes it to `out` (printing a one-line
/// summary, plus `note` when given) or streams it to stdout.
pub fn emit(
    table: &Table,
    format: &str,
    out: Option<&Path>,
    note: Option<&str>,
) -> Result<(), CliError> {
    let body = match format {
        "csv" => table.to_csv(),
        "json" => table.to_json(),
        other => {
            return Err(CliError::Usage(format!(
                "unknown format {other:?}; expected csv or json"
            )))
        }
    };
    match out {
        Some(path) => {
            fs::write(path, &body).map_err(|e| {
                CliError::Io(format!("cannot write {}: {e}", path.display()))
            })?;
            let mut line = format!(
                "wrote {} rows to {} ({format})",
                table.row_count(),
                path.display()
            );
            if let Some(n) = note {
                line.push_str("; ");
                line.push_str(n);
            }
            println!("{line}");
        }
        None => {
            print!("{body}");
            if let Some(n) = note {
                eprintln!("{n}");
            }
        }
    }
    Ok(())
}
