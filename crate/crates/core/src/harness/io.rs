//! File formats.
//!
//! Privatized records are CSV with header `t,z,r,G` (NPRR/SIRR) or
//! `t,z,epsilon` (Laplace); JSON files hold an array of objects with the same
//! fields. Raw inputs are CSV with a column `x` (and `a` for A/B data).
//! Floating-point values are written in shortest round-trip form, so reading
//! a file back reproduces the in-memory values exactly.

use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::abtest::ABRecord;
use crate::confseq::{BoundEntry, BoundSeries};
use crate::eprocess::EProcessSeries;
use crate::error::{Error, Result};
use crate::mechanisms::{grid_position, PrivacyParams, PrivateRecord, RecordParams};

use super::engine::ResultTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Serialize, Deserialize)]
struct NprrRow {
    t: u64,
    z: f64,
    r: f64,
    #[serde(rename = "G")]
    g: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct LaplaceRow {
    t: u64,
    z: f64,
    epsilon: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AnyRow {
    Nprr(NprrRow),
    Laplace(LaplaceRow),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    x: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAbRow {
    x: f64,
    a: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct AbRow {
    t: u64,
    a: u8,
    psi: f64,
    r: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EProcessRow {
    t: u64,
    log_e: f64,
    p_value: f64,
    running_min_p: f64,
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Io(format!("line {}: {e}", i + 2))))
        .collect()
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer.write_record(header).map_err(io_err)?;
    for row in rows {
        writer.serialize(row).map_err(io_err)?;
    }
    let bytes = writer.into_inner().map_err(io_err)?;
    String::from_utf8(bytes).map_err(io_err)
}

fn csv_headers(text: &str) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    Ok(reader.headers().map_err(io_err)?.iter().map(str::to_string).collect())
}

fn nprr_record(row: NprrRow) -> Result<PrivateRecord> {
    let params = PrivacyParams::new(row.r, row.g)?;
    grid_position(row.z, row.g)?;
    Ok(PrivateRecord::nprr(row.t, row.z, params))
}

fn laplace_record(row: LaplaceRow) -> Result<PrivateRecord> {
    if !(row.epsilon > 0.0 && row.epsilon.is_finite()) || !row.z.is_finite() {
        return Err(Error::Domain(format!("bad Laplace record at t={}", row.t)));
    }
    Ok(PrivateRecord::laplace(row.t, row.z, row.epsilon))
}

fn check_sequence(records: &[PrivateRecord]) -> Result<()> {
    for (i, rec) in records.iter().enumerate() {
        if rec.index != i as u64 + 1 {
            return Err(Error::Io(format!("expected t={} but found t={}", i + 1, rec.index)));
        }
    }
    Ok(())
}

/// Parse privatized records.
pub fn read_records(text: &str, format: Format) -> Result<Vec<PrivateRecord>> {
    let records: Vec<PrivateRecord> = match format {
        Format::Csv => {
            let headers = csv_headers(text)?;
            let has = |h: &str| headers.iter().any(|x| x == h);
            if has("epsilon") {
                parse_csv::<LaplaceRow>(text)?.into_iter().map(laplace_record).collect::<Result<_>>()?
            } else if has("r") && has("G") {
                parse_csv::<NprrRow>(text)?.into_iter().map(nprr_record).collect::<Result<_>>()?
            } else {
                return Err(Error::Io("record header must be t,z,r,G or t,z,epsilon".into()));
            }
        }
        Format::Json => {
            let rows: Vec<AnyRow> = serde_json::from_str(text).map_err(io_err)?;
            rows.into_iter()
                .map(|row| match row {
                    AnyRow::Nprr(r) => nprr_record(r),
                    AnyRow::Laplace(r) => laplace_record(r),
                })
                .collect::<Result<_>>()?
        }
    };
    check_sequence(&records)?;
    Ok(records)
}

/// Serialize privatized records. A stream must not mix mechanisms.
pub fn records_to_string(records: &[PrivateRecord], format: Format) -> Result<String> {
    let laplace = matches!(records.first().map(|r| r.params), Some(RecordParams::Laplace { .. }));
    if laplace {
        let rows = records
            .iter()
            .map(|r| match r.params {
                RecordParams::Laplace { epsilon } => Ok(LaplaceRow { t: r.index, z: r.z, epsilon }),
                RecordParams::Nprr(_) => Err(Error::Argument("stream mixes mechanisms".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        match format {
            Format::Csv => csv_string(rows, &["t", "z", "epsilon"]),
            Format::Json => serde_json::to_string_pretty(&rows).map_err(io_err),
        }
    } else {
        let rows = records
            .iter()
            .map(|r| match r.params {
                RecordParams::Nprr(p) => Ok(NprrRow { t: r.index, z: r.z, r: p.r(), g: p.g() }),
                RecordParams::Laplace { .. } => Err(Error::Argument("stream mixes mechanisms".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        match format {
            Format::Csv => csv_string(rows, &["t", "z", "r", "G"]),
            Format::Json => serde_json::to_string_pretty(&rows).map_err(io_err),
        }
    }
}

/// Raw values from a CSV with column `x`.
pub fn read_raw_values(text: &str) -> Result<Vec<f64>> {
    Ok(parse_csv::<RawRow>(text)?.into_iter().map(|r| r.x).collect())
}

/// Raw A/B data from a CSV with columns `x,a`.
pub fn read_raw_ab(text: &str) -> Result<Vec<(f64, u8)>> {
    Ok(parse_csv::<RawAbRow>(text)?.into_iter().map(|r| (r.x, r.a)).collect())
}

/// Privatized A/B records (`t,a,psi,r`) and their common `r`.
pub fn read_ab_records(text: &str, format: Format) -> Result<(Vec<ABRecord>, f64)> {
    let rows: Vec<AbRow> = match format {
        Format::Csv => parse_csv(text)?,
        Format::Json => serde_json::from_str(text).map_err(io_err)?,
    };
    let r = rows.first().map(|row| row.r).ok_or_else(|| Error::Io("no A/B records".into()))?;
    for (i, row) in rows.iter().enumerate() {
        if row.t != i as u64 + 1 {
            return Err(Error::Io(format!("expected t={} but found t={}", i + 1, row.t)));
        }
        if row.r != r {
            return Err(Error::Io(format!("r changes at t={}", row.t)));
        }
        if row.a > 1 || !(row.psi == 0.0 || row.psi == 1.0) {
            return Err(Error::Domain(format!("bad A/B record at t={}", row.t)));
        }
    }
    Ok((rows.into_iter().map(|row| ABRecord { index: row.t, a: row.a, psi: row.psi }).collect(), r))
}

pub fn ab_records_to_string(records: &[ABRecord], r: f64, format: Format) -> Result<String> {
    let rows: Vec<AbRow> = records.iter().map(|x| AbRow { t: x.index, a: x.a, psi: x.psi, r }).collect();
    match format {
        Format::Csv => csv_string(rows, &["t", "a", "psi", "r"]),
        Format::Json => serde_json::to_string_pretty(&rows).map_err(io_err),
    }
}

/// Per-time bounds, CSV header `t,estimate,lower,upper`.
pub fn bounds_to_string(series: &BoundSeries, format: Format) -> Result<String> {
    match format {
        Format::Csv => csv_string(series.entries.iter(), &["t", "estimate", "lower", "upper"]),
        Format::Json => serde_json::to_string_pretty(series).map_err(io_err),
    }
}

pub fn read_bounds_csv(text: &str) -> Result<Vec<BoundEntry>> {
    parse_csv(text)
}

pub fn eprocess_to_string(series: &EProcessSeries, format: Format) -> Result<String> {
    let rows: Vec<EProcessRow> = series
        .states
        .iter()
        .map(|s| EProcessRow { t: s.t, log_e: s.log_e, p_value: s.p_value(), running_min_p: s.running_min_inv })
        .collect();
    match format {
        Format::Csv => csv_string(rows, &["t", "log_e", "p_value", "running_min_p"]),
        Format::Json => serde_json::to_string_pretty(&rows).map_err(io_err),
    }
}

pub fn table_to_string(table: &ResultTable, format: Format) -> Result<String> {
    match format {
        Format::Csv => csv_string(
            table.rows.iter(),
            &["t", "method", "mean_width", "empirical_miscoverage", "mean_lower", "mean_upper", "replications"],
        ),
        Format::Json => serde_json::to_string_pretty(table).map_err(io_err),
    }
}

/// Write `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::Io(format!("{}: {e}", path.display())));
    }
    Ok(())
}
