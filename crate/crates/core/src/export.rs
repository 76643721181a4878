//! Trajectory CSV and JSON summaries.
//!
//! CSV columns: `t,x,y,theta_deg,v_xr,omega_deg_s,F_d,F1,F2,phase,e_y,e_theta`
//! in s, m, deg, m/s, deg/s, N, brake flags (0/1), phase name, m, deg.
//! Numbers are printed in fixed notation with six significant digits.

use crate::simulator::{LogRecord, TrajectoryLog};
use crate::wrap_degrees;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const CSV_HEADER: [&str; 12] =
    ["t", "x", "y", "theta_deg", "v_xr", "omega_deg_s", "F_d", "F1", "F2", "phase", "e_y", "e_theta"];

/// Values this small are printed as `0` rather than as a long run of zeros.
const MAX_DECIMALS: i32 = 15;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
}

/// Fixed-point text with six significant digits.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { v.to_string() };
    }
    let mut exponent = v.abs().log10().floor() as i32;
    // rounding can carry into the next decade (9.999999 -> 10.0000)
    if (v.abs() / 10f64.powi(exponent - 5)).round() >= 1e6 {
        exponent += 1;
    }
    let decimals = (5 - exponent).clamp(0, MAX_DECIMALS) as usize;
    let text = format!("{v:.decimals$}");
    if text.bytes().all(|b| matches!(b, b'-' | b'0' | b'.')) {
        "0".into()
    } else {
        text
    }
}

/// One CSV line. Also the shape rows are parsed back into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta_deg: f64,
    pub v_xr: f64,
    pub omega_deg_s: f64,
    #[serde(rename = "F_d")]
    pub f_d: f64,
    #[serde(rename = "F1")]
    pub f1: u8,
    #[serde(rename = "F2")]
    pub f2: u8,
    pub phase: String,
    pub e_y: f64,
    pub e_theta: f64,
}

impl CsvRow {
    /// Exact (unrounded) row for a log record.
    pub fn from_record(r: &LogRecord) -> Self {
        CsvRow {
            t: r.t,
            x: r.x,
            y: r.y,
            theta_deg: wrap_degrees(r.theta.to_degrees()),
            v_xr: r.v_xr,
            omega_deg_s: r.omega.to_degrees(),
            f_d: r.drive_force,
            f1: r.brakes.left as u8,
            f2: r.brakes.right as u8,
            phase: r.phase.as_str().to_string(),
            e_y: r.e_y,
            e_theta: r.e_theta,
        }
    }

    fn fields(&self) -> [String; 12] {
        let f = format_sig6;
        [
            f(self.t),
            f(self.x),
            f(self.y),
            f(self.theta_deg),
            f(self.v_xr),
            f(self.omega_deg_s),
            f(self.f_d),
            self.f1.to_string(),
            self.f2.to_string(),
            self.phase.clone(),
            f(self.e_y),
            f(self.e_theta),
        ]
    }
}

pub fn write_csv<W: Write>(records: &[LogRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(CsvRow::from_record(r).fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> csv::Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        )));
    }
    r.deserialize().collect()
}

pub fn write_trajectory(log: &TrajectoryLog, path: &Path) -> Result<(), ExportError> {
    let file = File::create(path).map_err(|source| ExportError::Io { path: path.to_path_buf(), source })?;
    write_csv(&log.records, BufWriter::new(file)).map_err(|source| ExportError::Csv { path: path.to_path_buf(), source })
}

pub fn read_trajectory(path: &Path) -> Result<Vec<CsvRow>, ExportError> {
    let file = File::open(path).map_err(|source| ExportError::Io { path: path.to_path_buf(), source })?;
    read_csv(file).map_err(|source| ExportError::Csv { path: path.to_path_buf(), source })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), ExportError> {
    let file = File::create(path).map_err(|source| ExportError::Io { path: path.to_path_buf(), source })?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|source| ExportError::Json { path: path.to_path_buf(), source })?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|source| ExportError::Io { path: path.to_path_buf(), source })
}
