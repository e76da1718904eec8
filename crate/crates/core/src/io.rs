//! Matrix and vector files.
//!
//! CSV: comma-separated rows, no header, 17 significant digits. Vectors are
//! one value per line.
//!
//! Binary: `b"QTPB"`, version byte `1`, rows and cols as `u64` little endian,
//! then the row-major `f64` little-endian payload. A vector is stored as an
//! `n x 1` matrix. Readers detect the format from the magic bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QTPB";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 8 + 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Bin,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "bin" => Ok(Format::Bin),
            other => Err(Error::Invalid(format!("unknown format {other:?} (expected csv or bin)"))),
        }
    }
}

fn parse_err(path: &Path, location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("{}:{location}", path.display()),
        message: message.into(),
    }
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        decode_binary(path, &bytes)
    } else {
        decode_csv(path, &bytes)
    }
}

/// Reads a vector stored as one value per line, as a single CSV row, or as a
/// binary `n x 1` or `1 x n` matrix.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Array1<f64>> {
    let path = path.as_ref();
    let x = read_matrix(path)?;
    match x.dim() {
        (_, 1) | (1, _) => Ok(Array1::from_iter(x.iter().copied())),
        (r, c) => Err(parse_err(path, "1".into(), format!("expected a vector, found a {r}x{c} matrix"))),
    }
}

pub fn write_matrix(path: impl AsRef<Path>, x: &Array2<f64>, format: Format) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => {
            for row in x.rows() {
                let mut first = true;
                for v in row {
                    if !first {
                        w.write_all(b",")?;
                    }
                    first = false;
                    write!(w, "{v:.16e}")?;
                }
                w.write_all(b"\n")?;
            }
        }
        Format::Bin => write_binary(&mut w, x.nrows(), x.ncols(), x.iter().copied())?,
    }
    w.flush()?;
    Ok(())
}

pub fn write_vector(path: impl AsRef<Path>, v: &Array1<f64>, format: Format) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => {
            for x in v {
                writeln!(w, "{x:.16e}")?;
            }
        }
        Format::Bin => write_binary(&mut w, v.len(), 1, v.iter().copied())?,
    }
    w.flush()?;
    Ok(())
}

fn write_binary(w: &mut impl Write, rows: usize, cols: usize, data: impl Iterator<Item = f64>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn decode_binary(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(parse_err(path, "byte 0".into(), "truncated binary header"));
    }
    if bytes[4] != VERSION {
        return Err(parse_err(path, "byte 4".into(), format!("unsupported version {}", bytes[4])));
    }
    let dim = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let (rows, cols) = (dim(5), dim(13));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| parse_err(path, "byte 5".into(), format!("dimensions {rows}x{cols} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if Some(payload.len()) != count.checked_mul(8) {
        return Err(parse_err(
            path,
            format!("byte {HEADER_LEN}"),
            format!("payload has {} bytes, {rows}x{cols} needs {}", payload.len(), count.saturating_mul(8)),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows as usize, cols as usize), data).map_err(|e| Error::Shape(e.to_string()))
}

fn decode_csv(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(BufReader::new(bytes));
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or_else(|| "?".to_string(), |p| p.line().to_string());
            parse_err(path, format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(
                    path,
                    format!("line {line}"),
                    format!("expected {c} fields, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(path, format!("line {line}, field {}", k + 1), format!("not a number: {field:?}"))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(path, "line 1".into(), "empty file"))?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Shape(e.to_string()))
}

/// Reads the whole of `r` and decodes it as a matrix; for stdin use.
pub fn read_matrix_from(mut r: impl Read, name: &str) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let path = Path::new(name);
    if bytes.starts_with(MAGIC) {
        decode_binary(path, &bytes)
    } else {
        decode_csv(path, &bytes)
    }
}
