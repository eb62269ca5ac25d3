//! Timestamp ingestion and CSV/JSON emission.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use coxkernel::acf::AcfEstimate;
use coxkernel::simulate::RatePath;
use coxkernel::varci::CiBand;
use coxkernel::{ArrivalData, RateEstimate};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// On-disk layout of a timestamp file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One decimal timestamp per line; blank lines and `#` comments are skipped.
    #[default]
    Text,
    /// Packed little-endian `f64`, no header.
    Binary,
}

impl FromStr for InputFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "text" | "txt" => Ok(InputFormat::Text),
            "binary" | "bin" | "f64" => Ok(InputFormat::Binary),
            other => Err(CliError::Usage(format!(
                "unknown input format '{other}' (text|binary)"
            ))),
        }
    }
}

/// Parsed timestamps before they are bound to a window.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: ArrivalData,
    /// The file was not in ascending order.
    pub resorted: bool,
    pub warnings: Vec<String>,
}

/// Parses text timestamps. Errors name the 1-based line.
pub fn parse_text<R: BufRead>(reader: R) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let t: f64 = s
            .parse()
            .map_err(|_| CliError::Data(format!("line {}: '{s}' is not a number", i + 1)))?;
        check_timestamp(t, || format!("line {}", i + 1))?;
        out.push(t);
    }
    Ok(out)
}

/// Parses packed little-endian `f64`. Errors name the byte offset.
pub fn parse_binary(bytes: &[u8]) -> Result<Vec<f64>, CliError> {
    if bytes.len() % 8 != 0 {
        return Err(CliError::Data(format!(
            "binary input has {} bytes, not a multiple of 8",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(8)
        .enumerate()
        .map(|(i, c)| {
            let t = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
            check_timestamp(t, || format!("byte offset {}", i * 8))?;
            Ok(t)
        })
        .collect()
}

fn check_timestamp(t: f64, at: impl Fn() -> String) -> Result<(), CliError> {
    if !t.is_finite() {
        return Err(CliError::Data(format!(
            "{}: timestamp {t} is not finite",
            at()
        )));
    }
    if t < 0.0 {
        return Err(CliError::Data(format!(
            "{}: timestamp {t} is negative",
            at()
        )));
    }
    Ok(())
}

/// Reads `path` and binds the events to `[0, T]`. `T` defaults to the
/// largest timestamp.
pub fn ingest(
    path: &Path,
    format: InputFormat,
    horizon: Option<f64>,
) -> Result<Ingested, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let times = match format {
        InputFormat::Text => parse_text(BufReader::new(file))?,
        InputFormat::Binary => {
            let mut bytes = Vec::new();
            BufReader::new(file)
                .read_to_end(&mut bytes)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            parse_binary(&bytes)?
        }
    };
    bind(times, horizon)
}

/// Sorts if needed and attaches the observation window.
pub fn bind(times: Vec<f64>, horizon: Option<f64>) -> Result<Ingested, CliError> {
    if times.is_empty() {
        return Err(CliError::Data("input contains no timestamps".into()));
    }
    let max = times.iter().cloned().fold(f64::MIN, f64::max);
    let mut warnings = Vec::new();
    let horizon = match horizon {
        Some(t) => {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Usage(format!("horizon {t} must be positive")));
            }
            if max > t {
                return Err(CliError::Data(format!(
                    "timestamp {max} exceeds the horizon {t}"
                )));
            }
            if max < 0.99 * t {
                warnings.push(format!(
                    "last timestamp {max} is well before the horizon {t}"
                ));
            }
            t
        }
        None => {
            if max <= 0.0 {
                return Err(CliError::Data(
                    "cannot infer a horizon: all timestamps are 0".into(),
                ));
            }
            max
        }
    };
    let (data, resorted) = ArrivalData::from_unsorted(times, horizon).map_err(CliError::from)?;
    if resorted {
        warnings.push("timestamps were not in ascending order and have been sorted".into());
    }
    Ok(Ingested {
        data,
        resorted,
        warnings,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes timestamps with shortest round-trip formatting.
pub fn write_timestamps(path: &Path, times: &[f64], format: InputFormat) -> Result<(), CliError> {
    let mut w = create(path)?;
    let err = io_err(path);
    match format {
        InputFormat::Text => {
            for t in times {
                writeln!(w, "{t}").map_err(&err)?;
            }
        }
        InputFormat::Binary => {
            for t in times {
                w.write_all(&t.to_le_bytes()).map_err(&err)?;
            }
        }
    }
    w.flush().map_err(&err)
}

/// `breakpoint,value` per segment.
pub fn write_path_csv(path: &Path, rate_path: &RatePath) -> Result<(), CliError> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "breakpoint,value").map_err(&err)?;
    for (b, v) in rate_path.breakpoints().iter().zip(rate_path.values()) {
        writeln!(w, "{b},{v}").map_err(&err)?;
    }
    w.flush().map_err(&err)
}

/// `t,lambda_hat` per grid point.
pub fn write_rate_csv(path: &Path, est: &RateEstimate) -> Result<(), CliError> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "t,lambda_hat").map_err(&err)?;
    for (t, v) in est.times().zip(est.values()) {
        writeln!(w, "{t},{v}").map_err(&err)?;
    }
    w.flush().map_err(&err)
}

fn log10_or_empty(v: f64) -> String {
    if v > 0.0 {
        format!("{}", v.log10())
    } else {
        String::new()
    }
}

/// ACF table: raw, corrected, bandwidth, values normalized by the corrected
/// value at the smallest lag, log10 columns, and the band when given.
pub fn write_acf_csv(
    path: &Path,
    acf: &AcfEstimate,
    band: Option<&CiBand>,
) -> Result<(), CliError> {
    let mut w = create(path)?;
    let err = io_err(path);
    let norm = acf.corrected.first().copied().unwrap_or(f64::NAN);
    let mut header =
        "t,t_effective,raw,corrected,h_used,corrected_normalized,log10_t,log10_corrected"
            .to_string();
    if band.is_some() {
        header.push_str(",variance,lower,upper,lower_normalized,upper_normalized");
    }
    writeln!(w, "{header}").map_err(&err)?;
    for i in 0..acf.len() {
        let mut line = format!(
            "{},{},{},{},{},{},{},{}",
            acf.lags[i],
            acf.effective_lags[i],
            acf.raw[i],
            acf.corrected[i],
            acf.h_used[i],
            acf.corrected[i] / norm,
            log10_or_empty(acf.effective_lags[i]),
            log10_or_empty(acf.corrected[i]),
        );
        if let Some(b) = band {
            line.push_str(&format!(
                ",{},{},{},{},{}",
                b.variance[i],
                b.lower[i],
                b.upper[i],
                b.lower[i] / norm,
                b.upper[i] / norm
            ));
        }
        writeln!(w, "{line}").map_err(&err)?;
    }
    w.flush().map_err(&err)
}

/// Band-only table: `t,corrected,variance,lower,upper` plus normalized columns.
pub fn write_ci_csv(path: &Path, band: &CiBand) -> Result<(), CliError> {
    let mut w = create(path)?;
    let err = io_err(path);
    let norm = band.corrected.first().copied().unwrap_or(f64::NAN);
    writeln!(
        w,
        "t,t_effective,corrected,variance,lower,upper,corrected_normalized,lower_normalized,upper_normalized"
    )
    .map_err(&err)?;
    for i in 0..band.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            band.lags[i],
            band.effective_lags[i],
            band.corrected[i],
            band.variance[i],
            band.lower[i],
            band.upper[i],
            band.corrected[i] / norm,
            band.lower[i] / norm,
            band.upper[i] / norm
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    let err = io_err(path);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writeln!(w).map_err(&err)?;
    w.flush().map_err(&err)
}
