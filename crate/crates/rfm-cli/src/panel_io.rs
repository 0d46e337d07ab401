//! The canonical panel file and CSV ingestion.
//!
//! Panel files are CSV with a one-line header
//! `# panel d=<d> N=<N> preprocessing=<mode>`, a series-id header row, and `d`
//! data rows. Values are written with Rust's shortest round-trip float
//! formatting, so a written panel reads back bit-exact.

use crate::error::{io_err, CliError};
use ndarray::Array2;
use rfm_core::stats::log_returns;
use rfm_core::{DataPanel, Preprocessing};
use std::fmt::Write as _;
use std::path::Path;

pub fn panel_to_string(panel: &DataPanel, ids: &[String]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# panel d={} N={} preprocessing={}",
        panel.d(),
        panel.n_series(),
        panel.preprocessing()
    )
    .unwrap();
    writeln!(out, "{}", ids.join(",")).unwrap();
    for row in panel.values().rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn write_panel(path: &Path, panel: &DataPanel, ids: &[String]) -> Result<(), CliError> {
    std::fs::write(path, panel_to_string(panel, ids))
        .map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

pub fn read_panel(path: &Path) -> Result<(DataPanel, Vec<String>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    parse_panel(&text).map_err(|msg| {
        CliError::Validation(format!("{}: {msg}", path.display()))
    })
}

fn parse_panel(text: &str) -> Result<(DataPanel, Vec<String>), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty panel file")?;
    let rest = header
        .strip_prefix("# panel ")
        .ok_or("first line must be `# panel d=<d> N=<N> preprocessing=<mode>`")?;
    let mut d = None;
    let mut n = None;
    let mut prep = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format!("malformed header field `{field}`"))?;
        match key {
            "d" => d = Some(value.parse::<usize>().map_err(|_| "bad d in header")?),
            "N" => n = Some(value.parse::<usize>().map_err(|_| "bad N in header")?),
            "preprocessing" => {
                prep = Some(
                    Preprocessing::from_name(value)
                        .ok_or_else(|| format!("unknown preprocessing `{value}`"))?,
                )
            }
            _ => return Err(format!("unknown header field `{key}`")),
        }
    }
    let d = d.ok_or("header missing d")?;
    let n = n.ok_or("header missing N")?;
    let prep = prep.ok_or("header missing preprocessing")?;

    let ids_line = lines.next().ok_or("missing series-id row")?;
    let ids: Vec<String> = ids_line.split(',').map(|s| s.trim().to_string()).collect();
    if ids.len() != n {
        return Err(format!("expected {n} series ids, found {}", ids.len()));
    }

    let mut values = Array2::zeros((d, n));
    let mut rows_seen = 0usize;
    for (r, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if r >= d {
            return Err(format!("more than {d} data rows"));
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(format!("row {} has {} cells, expected {n}", r + 1, cells.len()));
        }
        for (c, cell) in cells.iter().enumerate() {
            values[[r, c]] = cell.trim().parse::<f64>().map_err(|_| {
                format!("row {}, column {}: bad number `{cell}`", r + 1, c + 1)
            })?;
        }
        rows_seen += 1;
    }
    if rows_seen != d {
        return Err(format!("expected {d} data rows, found {rows_seen}"));
    }

    // The header's preprocessing claim is verified, not trusted; values are
    // kept bit-exact so write/read round trips are identities.
    let panel = DataPanel::with_preprocessing(values, prep).map_err(|e| e.to_string())?;
    Ok((panel, ids))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestMode {
    /// Columns are prices: take log-returns, then standardize.
    Prices,
    /// Columns are already returns: standardize directly.
    Returns,
}

/// Parse an input CSV: a header row of series identifiers and one row per
/// date, the first column holding an ISO-8601 date. Dates must be strictly
/// increasing; every cell must be numeric (missing values are reported with
/// their row and column).
pub fn ingest_csv(text: &str, mode: IngestMode) -> Result<(DataPanel, Vec<String>), CliError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Validation("empty input".into()))?;
    let header_cells: Vec<&str> = header.split(',').map(str::trim).collect();
    if header_cells.len() < 2 {
        return Err(CliError::Validation(
            "header must list a date column and at least one series".into(),
        ));
    }
    let ids: Vec<String> = header_cells[1..].iter().map(|s| s.to_string()).collect();
    let n = ids.len();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut prev_date: Option<String> = None;
    for (idx, line) in lines {
        let row_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n + 1 {
            return Err(CliError::Validation(format!(
                "row {row_no}: {} cells, expected {}",
                cells.len(),
                n + 1
            )));
        }
        let date = cells[0];
        if !is_iso_date(date) {
            return Err(CliError::Validation(format!(
                "row {row_no}: `{date}` is not an ISO-8601 date"
            )));
        }
        if let Some(prev) = &prev_date {
            if date <= prev.as_str() {
                return Err(CliError::Validation(format!(
                    "row {row_no}: dates not strictly increasing ({prev} then {date})"
                )));
            }
        }
        prev_date = Some(date.to_string());
        let mut row = Vec::with_capacity(n);
        for (c, cell) in cells[1..].iter().enumerate() {
            if cell.is_empty() {
                return Err(CliError::Validation(format!(
                    "missing value at row {row_no}, column {} ({})",
                    c + 2,
                    ids[c]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Validation(format!(
                    "bad number `{cell}` at row {row_no}, column {} ({})",
                    c + 2,
                    ids[c]
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }

    let observations = rows.len();
    let mut values = Array2::zeros((observations, n));
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            values[[r, c]] = v;
        }
    }

    let panel_values = match mode {
        IngestMode::Returns => values,
        IngestMode::Prices => {
            if observations < 2 {
                return Err(CliError::Validation(
                    "price input needs at least two rows".into(),
                ));
            }
            let mut returns = Array2::zeros((observations - 1, n));
            for c in 0..n {
                let prices: Vec<f64> = values.column(c).to_vec();
                let rets = log_returns(&prices).map_err(|e| {
                    CliError::Validation(format!("series {}: {e}", ids[c]))
                })?;
                for (r, v) in rets.into_iter().enumerate() {
                    returns[[r, c]] = v;
                }
            }
            returns
        }
    };

    let panel = DataPanel::new(panel_values)
        .and_then(|p| p.standardize())
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok((panel, ids))
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: std::ops::Range<usize>| b[r].iter().all(|c| c.is_ascii_digit());
    if !(digits(0..4) && digits(5..7) && digits(8..10)) {
        return false;
    }
    let month: u32 = s[5..7].parse().unwrap();
    let day: u32 = s[8..10].parse().unwrap();
    (1..=12).contains(&month) && (1..=31).contains(&day)
}
