//! UTF-8 CSV interchange for matrices and vectors, plus the JSON sidecar that
//! records how an instance was generated.
//!
//! One CSV row per matrix row. Real entries are plain decimals; complex
//! entries are written `a+bi` / `a-bi`. Decimals use Rust's shortest
//! round-trip formatting, so a write/read cycle is bit-exact.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{MatrixEnsemble, SignalDistribution, SnrDb};
use crate::error::{Error, Result};
use crate::linalg::{Scalar, ScalarField};

/// A matrix whose field is only known at run time (e.g. loaded from disk).
#[derive(Debug, Clone, PartialEq)]
pub enum SensingMatrix {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl SensingMatrix {
    pub fn field(&self) -> ScalarField {
        match self {
            SensingMatrix::Real(_) => ScalarField::Real,
            SensingMatrix::Complex(_) => ScalarField::Complex,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            SensingMatrix::Real(a) => a.shape(),
            SensingMatrix::Complex(a) => a.shape(),
        }
    }

    /// Converts to a concrete scalar type; real data widens to complex, the
    /// reverse is a field mismatch.
    pub fn into_typed<T: Scalar>(self) -> Result<DMatrix<T>> {
        match (self, T::FIELD) {
            (SensingMatrix::Real(a), _) => Ok(a.map(|v| T::from_parts(v, 0.0))),
            (SensingMatrix::Complex(a), ScalarField::Complex) => Ok(a.map(|v| T::from_parts(v.re, v.im))),
            (SensingMatrix::Complex(_), expected) => Err(Error::FieldMismatch {
                expected,
                found: ScalarField::Complex,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensingVector {
    Real(DVector<f64>),
    Complex(DVector<Complex64>),
}

impl SensingVector {
    pub fn field(&self) -> ScalarField {
        match self {
            SensingVector::Real(_) => ScalarField::Real,
            SensingVector::Complex(_) => ScalarField::Complex,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SensingVector::Real(v) => v.len(),
            SensingVector::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_typed<T: Scalar>(self) -> Result<DVector<T>> {
        match (self, T::FIELD) {
            (SensingVector::Real(v), _) => Ok(v.map(|x| T::from_parts(x, 0.0))),
            (SensingVector::Complex(v), ScalarField::Complex) => Ok(v.map(|x| T::from_parts(x.re, x.im))),
            (SensingVector::Complex(_), expected) => Err(Error::FieldMismatch {
                expected,
                found: ScalarField::Complex,
            }),
        }
    }

    pub fn into_complex(self) -> DVector<Complex64> {
        match self {
            SensingVector::Real(v) => v.map(|x| Complex64::new(x, 0.0)),
            SensingVector::Complex(v) => v,
        }
    }
}

pub(crate) fn format_scalar<T: Scalar>(v: T) -> String {
    let (re, im) = v.parts();
    match T::FIELD {
        ScalarField::Real => format!("{re}"),
        ScalarField::Complex => {
            let sign = if im.is_sign_negative() { '-' } else { '+' };
            format!("{re}{sign}{}i", im.abs())
        }
    }
}

/// Parses `a`, `a+bi`, `a-bi`, `bi`; returns `(re, im, had_imaginary_part)`.
pub(crate) fn parse_scalar(text: &str) -> Option<(f64, f64, bool)> {
    let t = text.trim();
    let Some(body) = t.strip_suffix('i') else {
        return t.parse().ok().map(|re| (re, 0.0, false));
    };
    // Split at the last sign that is not leading and not part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => {
            let re = body[..k].parse().ok()?;
            let im_text = &body[k..];
            let im = match im_text {
                "+" => 1.0,
                "-" => -1.0,
                _ => im_text.parse().ok()?,
            };
            Some((re, im, true))
        }
        None => {
            let im = match body {
                "" | "+" => 1.0,
                "-" => -1.0,
                _ => body.parse().ok()?,
            };
            Some((0.0, im, true))
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn matrix_to_csv<T: Scalar>(a: &DMatrix<T>) -> String {
    let mut out = String::new();
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format_scalar(a[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv<T: Scalar>(path: impl AsRef<Path>, a: &DMatrix<T>) -> Result<()> {
    write_text(path.as_ref(), &matrix_to_csv(a))
}

pub fn write_vector_csv<T: Scalar>(path: impl AsRef<Path>, v: &DVector<T>) -> Result<()> {
    let mut out = String::new();
    for x in v.iter() {
        out.push_str(&format_scalar(*x));
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

fn parse_rows(text: &str, file: &str) -> Result<(Vec<Vec<(f64, f64)>>, bool)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut complex = false;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let (re, im, had_im) = parse_scalar(field).ok_or_else(|| Error::Parse {
                file: file.to_string(),
                message: format!("row {}, column {}: cannot parse `{field}`", line + 1, col + 1),
            })?;
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::Parse {
                    file: file.to_string(),
                    message: format!("row {}, column {}: non-finite entry", line + 1, col + 1),
                });
            }
            complex |= had_im;
            row.push((re, im));
        }
        rows.push(row);
    }
    Ok((rows, complex))
}

/// Reads a matrix; any entry with an imaginary part makes the whole matrix complex.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<SensingMatrix> {
    let path = path.as_ref();
    let file = path.display().to_string();
    let (rows, complex) = parse_rows(&read_text(path)?, &file)?;
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    if m == 0 || n == 0 {
        return Err(Error::Parse {
            file,
            message: "empty matrix".into(),
        });
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::Parse {
            file,
            message: format!("row {} has {} entries, expected {n}", bad + 1, rows[bad].len()),
        });
    }
    Ok(if complex {
        SensingMatrix::Complex(DMatrix::from_fn(m, n, |i, j| {
            Complex64::new(rows[i][j].0, rows[i][j].1)
        }))
    } else {
        SensingMatrix::Real(DMatrix::from_fn(m, n, |i, j| rows[i][j].0))
    })
}

/// Reads a vector stored one entry per line (a single-column CSV).
pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<SensingVector> {
    let path = path.as_ref();
    let file = path.display().to_string();
    let (rows, complex) = parse_rows(&read_text(path)?, &file)?;
    let values: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(Error::Parse {
            file,
            message: "empty vector".into(),
        });
    }
    Ok(if complex {
        SensingVector::Complex(DVector::from_iterator(
            values.len(),
            values.iter().map(|&(re, im)| Complex64::new(re, im)),
        ))
    } else {
        SensingVector::Real(DVector::from_iterator(values.len(), values.iter().map(|v| v.0)))
    })
}

/// JSON sidecar describing a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetadata {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub snr_db: SnrDb,
    pub seed: u64,
    pub ensemble: MatrixEnsemble,
    pub distribution: SignalDistribution,
}

pub fn write_metadata(path: impl AsRef<Path>, meta: &InstanceMetadata) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    write_text(path.as_ref(), &text)
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<InstanceMetadata> {
    Ok(serde_json::from_str(&read_text(path.as_ref())?)?)
}
