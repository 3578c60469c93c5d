//! CSV ingestion and output.
//!
//! Files carry a header row; values are parsed as `f64` and must be finite.
//! Diagnostics name the file line and the column header.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use vrnnaug_core::data::TimeSeries;

use crate::error::{CliError, Result};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(CliError::io(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::format(path, format!("{other:?}")),
    }
}

fn parse_cell(path: &Path, line: u64, column: &str, cell: Option<&str>) -> Result<f64> {
    let at = || format!("{}: line {line}, column {column:?}", path.display());
    match cell {
        None | Some("") => Err(CliError::Data(format!("{}: missing value", at()))),
        Some(s) => match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(CliError::Data(format!("{}: non-finite value {s:?}", at()))),
            Err(_) => Err(CliError::Data(format!("{}: cannot parse {s:?} as a number", at()))),
        },
    }
}

/// Named columns of a headed CSV, row-major per group.
pub struct Columns {
    pub rows: usize,
    pub groups: Vec<Vec<f64>>,
}

/// Reads the named column groups from a headed CSV file.
pub fn read_columns(path: &Path, groups: &[&[String]]) -> Result<Columns> {
    let mut rdr = reader(path)?;
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(path, e))?,
        None => return Err(CliError::Data(format!("{}: file is empty", path.display()))),
    };
    let names: Vec<&str> = header.iter().collect();
    let index = |want: &String| {
        names.iter().position(|n| n == want).ok_or_else(|| {
            CliError::Data(format!(
                "{}: column {want:?} not found (header has {})",
                path.display(),
                names.join(", ")
            ))
        })
    };
    let idx: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| g.iter().map(index).collect::<Result<_>>())
        .collect::<Result<_>>()?;

    let mut out: Vec<Vec<f64>> = vec![Vec::new(); groups.len()];
    let mut rows = 0;
    for rec in records {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        for ((cols, g), buf) in idx.iter().zip(groups).zip(&mut out) {
            for (&c, name) in cols.iter().zip(g.iter()) {
                buf.push(parse_cell(path, line, name, rec.get(c))?);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(Columns { rows, groups: out })
}

/// Loads a series from the given input and output columns.
pub fn load_csv(path: &Path, u_columns: &[String], y_columns: &[String]) -> Result<TimeSeries> {
    if u_columns.is_empty() || y_columns.is_empty() {
        return Err(CliError::Argument(
            "at least one input column and one output column are required".into(),
        ));
    }
    let cols = read_columns(path, &[u_columns, y_columns])?;
    let mut g = cols.groups.into_iter();
    let (u, y) = (g.next().unwrap(), g.next().unwrap());
    let series = TimeSeries::new(u, y, u_columns.len(), y_columns.len())?
        .with_names(u_columns.to_vec(), y_columns.to_vec())?
        .with_label(path.display().to_string());
    Ok(series)
}

/// Two-column time/acceleration file; time is the input. A header row is
/// optional. Repeated time stamps are allowed.
pub fn load_motorcycle(path: &Path) -> Result<TimeSeries> {
    let mut rdr = reader(path)?;
    let (mut u, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 2 {
            return Err(CliError::Data(format!(
                "{}: line {line}: expected 2 columns (time, acceleration), found {}",
                path.display(),
                rec.len()
            )));
        }
        if i == 0 && rec[0].parse::<f64>().is_err() {
            continue;
        }
        u.push(parse_cell(path, line, "time", rec.get(0))?);
        y.push(parse_cell(path, line, "acceleration", rec.get(1))?);
    }
    if u.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(TimeSeries::new(u, y, 1, 1)?
        .with_names(vec!["time".into()], vec!["accel".into()])?
        .with_label(path.display().to_string()))
}

pub(crate) fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    File::create(path).map_err(CliError::io(path))
}

/// Writes a headed CSV from a header and rows of numbers.
pub fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e.into_error(),
        })?
        .flush()
        .map_err(CliError::io(path))
}

/// Input columns followed by output columns, with the series' names.
pub fn write_series(path: &Path, s: &TimeSeries) -> Result<()> {
    let header: Vec<String> = s.u_names.iter().chain(&s.y_names).cloned().collect();
    write_table(
        path,
        &header,
        (0..s.len()).map(|t| s.u_row(t).iter().chain(s.y_row(t)).copied().collect()),
    )
}
