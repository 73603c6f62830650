//! `n,score` CSV tables used for observation sets, holdouts and ground-truth curves.

use std::io::Read;

use crate::error::{Error, Result};

pub const HEADER: [&str; 2] = ["n", "score"];

/// Parse an `n,score` table. Errors carry the 1-based line number.
pub fn read_points<R: Read>(reader: R) -> Result<Vec<(u64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Parse {
            line: 1,
            message: "empty file; expected header 'n,score'".into(),
        });
    }
    if headers.len() != 2 || headers[0] != *HEADER[0] || headers[1] != *HEADER[1] {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header 'n,score', found '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut points: Vec<(u64, f64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_error(e, line)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let n: u64 = record[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("size '{}' is not a non-negative integer", &record[0]),
        })?;
        let score: f64 = record[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("score '{}' is not a number", &record[1]),
        })?;
        if n < 1 {
            return Err(Error::Parse {
                line,
                message: "size must be >= 1".into(),
            });
        }
        if !score.is_finite() || !(0.0..=100.0).contains(&score) {
            return Err(Error::Parse {
                line,
                message: format!("score {score} is outside [0, 100]"),
            });
        }
        if let Some(&(prev, _)) = points.last() {
            if n <= prev {
                return Err(Error::Parse {
                    line,
                    message: format!("size {n} does not increase (previous row has {prev})"),
                });
            }
        }
        points.push((n, score));
    }
    if points.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(points)
}

pub fn parse_points(text: &str) -> Result<Vec<(u64, f64)>> {
    read_points(text.as_bytes())
}

/// Render points as an `n,score` table with LF line endings.
pub fn write_points(points: &[(u64, f64)]) -> String {
    let mut out = String::from("n,score\n");
    for (n, s) in points {
        out.push_str(&format!("{n},{s}\n"));
    }
    out
}

fn csv_error(e: csv::Error, line: u64) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
