//! Binary matrix files with a CSV fallback.
//!
//! Layout: a 16-byte header followed by row-major little-endian values.
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 0..4  | magic `ZSLM`                            |
//! | 4..6  | version (`u16`, currently 1)            |
//! | 6..10 | rows (`u32`)                            |
//! | 10..14| cols (`u32`)                            |
//! | 14    | dtype: 4 = `f32`, 8 = `f64`             |
//! | 15    | tag, see [`MatrixTag`]                  |

use std::fs;
use std::path::Path;

use crate::error::{Result, ZslError};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"ZSLM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn of<T: Scalar>() -> Self {
        if std::mem::size_of::<T>() == 4 {
            Dtype::F32
        } else {
            Dtype::F64
        }
    }
}

/// What the rows of a stored matrix are. Prototype files use it to record
/// how they were built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixTag {
    #[default]
    Plain,
    EmpiricalMean,
    Transferred,
    Mixed,
}

impl MatrixTag {
    fn byte(self) -> u8 {
        match self {
            MatrixTag::Plain => 0,
            MatrixTag::EmpiricalMean => 1,
            MatrixTag::Transferred => 2,
            MatrixTag::Mixed => 3,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => MatrixTag::Plain,
            1 => MatrixTag::EmpiricalMean,
            2 => MatrixTag::Transferred,
            3 => MatrixTag::Mixed,
            _ => return None,
        })
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> ZslError {
    ZslError::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn data_err(path: &Path, message: impl Into<String>) -> ZslError {
    ZslError::Data {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Encodes `m` in the binary layout, with the dtype of `T`.
pub fn encode_matrix<T: Scalar>(m: &DenseMatrix<T>, tag: MatrixTag) -> Result<Vec<u8>> {
    let (rows, cols) = m.shape();
    let too_big = |n: usize| {
        u32::try_from(n).map_err(|_| ZslError::invalid(format!("dimension {n} exceeds u32")))
    };
    let dtype = Dtype::of::<T>();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&too_big(rows)?.to_le_bytes());
    out.extend_from_slice(&too_big(cols)?.to_le_bytes());
    out.push(dtype.width() as u8);
    out.push(tag.byte());
    for &v in m.as_slice() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_f64_lossy().to_le_bytes()),
        }
    }
    Ok(out)
}

/// Decodes the binary layout. `path` is only used in error messages. Values
/// stored with a different dtype than `T` are converted.
pub fn decode_matrix<T: Scalar>(bytes: &[u8], path: &Path) -> Result<(DenseMatrix<T>, MatrixTag)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(format_err(path, 0, "bad magic, expected ZSLM"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format_err(path, bytes.len(), "truncated header"));
    }
    let u32_at =
        |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format_err(
            path,
            4,
            format!("unsupported version {version}"),
        ));
    }
    let (rows, cols) = (u32_at(6), u32_at(10));
    let dtype = match bytes[14] {
        4 => Dtype::F32,
        8 => Dtype::F64,
        other => return Err(format_err(path, 14, format!("unknown dtype code {other}"))),
    };
    let tag = MatrixTag::from_byte(bytes[15])
        .ok_or_else(|| format_err(path, 15, format!("unknown tag {}", bytes[15])))?;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.width()))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format_err(path, 6, "matrix dimensions overflow"))?;
    if bytes.len() < expected {
        return Err(format_err(
            path,
            bytes.len(),
            format!("truncated payload: {rows}x{cols} needs {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(path, expected, "trailing bytes after payload"));
    }
    let payload = &bytes[HEADER_LEN..];
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in payload.chunks_exact(dtype.width()).enumerate() {
        let v = match dtype {
            Dtype::F32 => T::from_f32(f32::from_le_bytes(chunk.try_into().expect("4 bytes"))),
            Dtype::F64 => T::from_f64(f64::from_le_bytes(chunk.try_into().expect("8 bytes"))),
        }
        .unwrap_or_else(T::nan);
        if !v.is_finite() {
            return Err(data_err(
                path,
                format!(
                    "non-finite value at row {}, column {}",
                    i / cols.max(1),
                    i % cols.max(1)
                ),
            ));
        }
        data.push(v);
    }
    Ok((DenseMatrix::from_vec(rows, cols, data)?, tag))
}

/// Parses comma-separated rows; blank lines are skipped.
pub fn parse_csv_matrix<T: Scalar>(text: &str, path: &Path) -> Result<DenseMatrix<T>> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut n = 0;
        for field in trimmed.split(',') {
            let field = field.trim();
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(path, start, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(data_err(
                    path,
                    format!("non-finite value at row {rows}, column {n}"),
                ));
            }
            data.push(T::lit(v));
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(format_err(
                    path,
                    start,
                    format!("row {rows} has {n} fields, expected {c}"),
                ));
            }
            _ => {}
        }
        rows += 1;
    }
    DenseMatrix::from_vec(rows, cols.unwrap_or(0), data)
}

pub fn format_csv_matrix<T: Scalar>(m: &DenseMatrix<T>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_f64_lossy().to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn load_matrix_tagged<T: Scalar>(path: &Path) -> Result<(DenseMatrix<T>, MatrixTag)> {
    if is_csv(path) {
        let text = fs::read_to_string(path).map_err(|e| ZslError::io(path, e))?;
        return Ok((parse_csv_matrix(&text, path)?, MatrixTag::Plain));
    }
    let bytes = fs::read(path).map_err(|e| ZslError::io(path, e))?;
    decode_matrix(&bytes, path)
}

/// Reads a binary matrix, or CSV when the extension is `.csv`.
pub fn load_matrix<T: Scalar>(path: &Path) -> Result<DenseMatrix<T>> {
    load_matrix_tagged(path).map(|(m, _)| m)
}

/// Writes the binary layout, or CSV when the extension is `.csv` (the tag
/// is dropped in that case).
pub fn save_matrix_tagged<T: Scalar>(
    m: &DenseMatrix<T>,
    tag: MatrixTag,
    path: &Path,
) -> Result<()> {
    let bytes = if is_csv(path) {
        format_csv_matrix(m).into_bytes()
    } else {
        encode_matrix(m, tag)?
    };
    fs::write(path, bytes).map_err(|e| ZslError::io(path, e))
}

pub fn save_matrix<T: Scalar>(m: &DenseMatrix<T>, path: &Path) -> Result<()> {
    save_matrix_tagged(m, MatrixTag::Plain, path)
}
