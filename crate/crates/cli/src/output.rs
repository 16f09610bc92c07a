//! CSV artifacts and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::CliError;

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Runtime(format!("bad output path {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let io = |e: std::io::Error| CliError::Runtime(format!("writing {}: {e}", path.display()));
    let mut file = fs::File::create(&tmp).map_err(io)?;
    file.write_all(contents).map_err(io)?;
    file.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))
}

/// `%.15e`-style value formatting.
pub fn format_value(v: f64) -> String {
    format!("{v:.15e}")
}

/// `v` to `digits` significant digits, plain notation for moderate magnitudes.
pub fn significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.*e}", digits - 1)
    }
}

/// `pdf_t<time>.csv`, with the time rounded to nine decimals.
pub fn snapshot_name(t: f64) -> String {
    let t = (t * 1e9).round() / 1e9;
    format!("pdf_t{t}.csv")
}

/// CSV text with a header row and formatted numeric rows.
pub fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(|v| format_value(*v))).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_pdf(path: &Path, xs: &[f64], fs: &[f64]) -> Result<(), CliError> {
    let rows = xs.iter().zip(fs).map(|(x, f)| vec![*x, *f]);
    write_atomic(path, &table(&["x", "f"], rows))
}

/// Reads an `x,f` density file; the grid must be strictly increasing.
pub fn read_pdf(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let bad = |reason: String| CliError::Config(format!("{}: {reason}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["x", "f"] {
        return Err(bad("expected header `x,f`".into()));
    }
    let mut xs = Vec::new();
    let mut fs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let parse = |k: usize| -> Result<f64, CliError> {
            record
                .get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {}: bad number", i + 2)))
        };
        xs.push(parse(0)?);
        fs.push(parse(1)?);
    }
    if xs.len() < 2 {
        return Err(bad("needs at least two rows".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("x must increase strictly".into()));
    }
    Ok((xs, fs))
}
