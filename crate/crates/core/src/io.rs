//! File formats: numeric CSV matrices, 16-bit binary PGM, JSON documents.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::waveform::SampledSignal;
use crate::{Error, Result};

/// Writes a row-major matrix as CSV with full `f64` round-trip precision.
pub fn write_matrix_csv(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            actual: values.len(),
        });
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in values.chunks(cols.max(1)) {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless numeric CSV. Returns `(rows, cols, values)`.
pub fn read_matrix_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if cols.is_some_and(|c| c != rec.len()) {
            return Err(Error::Parse(format!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                rows + 1,
                rec.len(),
                cols.unwrap_or(0)
            )));
        }
        cols = Some(rec.len());
        for field in rec.iter() {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}: '{field}': {e}", path.display())))?,
            );
        }
        rows += 1;
    }
    Ok((rows, cols.unwrap_or(0), values))
}

/// One column per slot stream, with a `slot_<i>` header.
pub fn write_streams_csv(path: &Path, streams: &[SampledSignal]) -> Result<()> {
    let len = streams.first().map_or(0, |s| s.len());
    if let Some(bad) = streams.iter().find(|s| s.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            actual: bad.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..streams.len()).map(|i| format!("slot_{i}")))?;
    for n in 0..len {
        w.write_record(streams.iter().map(|s| format!("{:e}", s.samples[n])))?;
    }
    w.flush()?;
    Ok(())
}

/// Maps linear values to 16-bit grey levels. Linear scaling puts the maximum
/// at 65535; log scaling spans `[log10(min positive), log10(max)]`.
/// Nonpositive values map to 0 in both.
pub fn to_grey16(values: &[f64], log_display: bool) -> Vec<u16> {
    let max = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0; values.len()];
    }
    let scale = |t: f64| (t.clamp(0.0, 1.0) * 65535.0).round() as u16;
    if !log_display {
        return values
            .iter()
            .map(|&v| if v > 0.0 { scale(v / max) } else { 0 })
            .collect();
    }
    let lo = values
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(max, f64::min)
        .log10();
    let hi = max.log10();
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if !(v > 0.0) {
                0
            } else if span == 0.0 {
                65535
            } else {
                // Keep the dimmest positive pixel distinguishable from zero.
                scale((v.log10() - lo) / span).max(1)
            }
        })
        .collect()
}

/// Writes a binary (P5) PGM with maxval 65535, big-endian samples.
pub fn write_pgm16(path: &Path, rows: usize, cols: usize, grey: &[u16]) -> Result<()> {
    if grey.len() != rows * cols {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            actual: grey.len(),
        });
    }
    let mut out = Vec::with_capacity(32 + 2 * grey.len());
    write!(out, "P5\n{cols} {rows}\n65535\n")?;
    for g in grey {
        out.extend_from_slice(&g.to_be_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a 16-bit P5 PGM. Returns `(rows, cols, grey)`.
pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::Parse(format!("{}: {msg}", path.display()));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (cols, rows, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 65535 {
        return Err(bad("only 16-bit PGM is supported"));
    }
    let data = &bytes[pos + 1..];
    if data.len() != 2 * rows * cols {
        return Err(bad("pixel data length does not match header"));
    }
    let grey = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((rows, cols, grey))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let v = vec![1.0, 1e-7, 0.1 + 0.2, -3.5, 0.0, 123456.789];
        write_matrix_csv(&p, 2, 3, &v).unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), (2, 3, v));
        assert!(write_matrix_csv(&p, 2, 2, &[0.0; 3]).is_err());
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.pgm");
        let g = vec![0, 1, 256, 65535, 300, 7];
        write_pgm16(&p, 2, 3, &g).unwrap();
        assert_eq!(read_pgm16(&p).unwrap(), (2, 3, g));
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n65535\n"));
    }

    #[test]
    fn grey_scaling() {
        let v = [1.0, 0.5, 0.0, -0.1];
        assert_eq!(to_grey16(&v, false), vec![65535, 32768, 0, 0]);
        let v = [1.0, 1e-3, 1e-6, 0.0];
        assert_eq!(to_grey16(&v, true), vec![65535, 32768, 1, 0]);
        assert_eq!(to_grey16(&[0.0, 0.0], true), vec![0, 0]);
        assert_eq!(to_grey16(&[2.0, 2.0], true), vec![65535, 65535]);
    }
}
