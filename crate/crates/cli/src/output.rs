//! CSV persistence. Figures are always drawn from a CSV read back from disk.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{LabError, LabResult};
use crate::sweep::{Status, SweepResult};

/// Fixed-width scientific formatting with `digits` significant digits.
pub fn format_value(x: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), x)
}

fn csv_err(path: &Path, e: csv::Error) -> LabError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => return LabError::io(path, io),
            _ => unreachable!(),
        }
    }
    LabError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes the result to any sink: a `#` comment line with the schema and
/// units, the header row, then one line per point.
pub fn write_csv<W: Write>(result: &SweepResult, precision: usize, sink: W) -> csv::Result<()> {
    let mut sink = sink;
    let units: Vec<String> = result
        .coord_columns
        .iter()
        .chain(&result.value_columns)
        .map(|c| format!("{} [{}]", c.name, c.unit))
        .collect();
    writeln!(
        sink,
        "# ancilla-lab schema {}; {}; axis {}; units: {}",
        result.schema_version,
        result.name,
        result.axis.as_str(),
        units.join(", ")
    )?;
    let mut w = csv::Writer::from_writer(sink);
    let mut header = result.column_names();
    header.push("status");
    w.write_record(&header)?;
    for row in &result.rows {
        let mut record: Vec<String> = row.coords.iter().map(|&x| format_value(x, precision)).collect();
        record.extend(
            row.values
                .iter()
                .map(|v| v.map(|x| format_value(x, precision)).unwrap_or_default()),
        );
        record.push(row.status.as_str().to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(result: &SweepResult, precision: usize, path: &Path) -> LabResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| LabError::io(path, e))?;
    write_csv(result, precision, BufWriter::new(file)).map_err(|e| csv_err(path, e))
}

/// A CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    /// Column names without `status`.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub status: Vec<Status>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv(path: &Path) -> LabResult<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let title = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .and_then(|l| l.split("; ").nth(1))
        .unwrap_or("")
        .to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let bad = |message: String| LabError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let mut columns: Vec<String> = header.iter().map(str::to_string).collect();
    if columns.last().map(String::as_str) != Some("status") {
        return Err(bad("missing status column".into()));
    }
    columns.pop();
    let mut rows = Vec::new();
    let mut status = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let mut row = Vec::with_capacity(columns.len());
        for field in record.iter().take(columns.len()) {
            row.push(if field.is_empty() {
                None
            } else {
                Some(field.parse::<f64>().map_err(|e| bad(format!("bad number `{field}`: {e}")))?)
            });
        }
        let s = record.get(columns.len()).unwrap_or("");
        status.push(Status::parse(s).ok_or_else(|| bad(format!("bad status `{s}`")))?);
        rows.push(row);
    }
    Ok(Table {
        title,
        columns,
        rows,
        status,
    })
}
