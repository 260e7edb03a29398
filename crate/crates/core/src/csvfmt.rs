//! Numeric CSV conventions: 17 significant digits, `.` decimal separator,
//! `\n` line endings. Values written here parse back bit-identically.

use std::io::BufRead;

use crate::error::{Error, Result};

/// Format with 17 significant digits in scientific notation, which is
/// enough to round-trip every binary64 value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "NaN" | "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// Read a headed CSV of numbers. `header_ok` validates the header fields.
/// Returns each data row with its 1-based line number.
pub fn read_numeric_rows<R: BufRead>(
    input: R,
    header_ok: impl Fn(&[&str]) -> bool,
) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut rows = Vec::new();
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let fields: Vec<&str> = header.split(',').collect();
    if !header_ok(&fields) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header '{header}'"),
        });
    }
    for (idx, line) in lines.enumerate() {
        let line_no = idx as u64 + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                parse_f64(f).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("bad number '{f}'"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != fields.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, got {}", fields.len(), row.len()),
            });
        }
        rows.push((line_no, row));
    }
    Ok(rows)
}
