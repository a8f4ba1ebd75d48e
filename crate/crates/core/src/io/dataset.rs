//! Feature dataset files.
//!
//! Layout (little-endian):
//!
//! ```text
//! offset 0   magic  "RLFV1\0"                 6 bytes
//! offset 6   u32    sample count N
//! offset 10  u32    feature dim d
//! offset 14  u32    class count C
//! offset 18  f32    N·d features, row-major
//!            u32    N class indices, each < C
//! ```
//!
//! Total length is exactly `18 + 4·N·d + 4·N` bytes. Error offsets point at
//! the offending value, or at the end of the data for truncation.

use std::path::Path;

use crate::error::{Error, FormatErrorKind, Result};
use crate::numkit::DenseMatrix;
use crate::synth::LabeledSet;

pub const DATASET_MAGIC: &[u8; 6] = b"RLFV1\0";
const HEADER_LEN: usize = 18;

fn format_err(kind: FormatErrorKind, offset: usize) -> Error {
    Error::Format {
        kind,
        offset: offset as u64,
    }
}

/// Serializes features as `f32`; values are rounded to single precision.
pub fn encode_dataset(set: &LabeledSet) -> Result<Vec<u8>> {
    let (n, d) = set.features.shape();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Parameter(format!("{what} {v} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * d + 4 * n);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&to_u32(n, "sample count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(d, "feature dim")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.num_classes, "class count")?.to_le_bytes());
    for (i, v) in set.features.data().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Data {
                row: i / d.max(1),
                msg: "non-finite feature".into(),
            });
        }
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for &c in &set.labels {
        out.extend_from_slice(&to_u32(c, "label")?.to_le_bytes());
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledSet> {
    if bytes.len() < DATASET_MAGIC.len() || &bytes[..6] != DATASET_MAGIC {
        return Err(format_err(FormatErrorKind::BadMagic, 0));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format_err(FormatErrorKind::Truncated, bytes.len()));
    }
    let n = read_u32(bytes, 6) as usize;
    let d = read_u32(bytes, 10) as usize;
    let classes = read_u32(bytes, 14) as usize;
    let feature_end = HEADER_LEN as u64 + 4 * n as u64 * d as u64;
    let expected = feature_end + 4 * n as u64;
    if (bytes.len() as u64) < expected {
        return Err(format_err(FormatErrorKind::Truncated, bytes.len()));
    }
    if (bytes.len() as u64) > expected {
        return Err(format_err(FormatErrorKind::TrailingBytes, expected as usize));
    }
    let feature_end = feature_end as usize;

    let mut data = Vec::with_capacity(n * d);
    for at in (HEADER_LEN..feature_end).step_by(4) {
        let v = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(format_err(FormatErrorKind::NonFinite, at));
        }
        data.push(v as f64);
    }
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let at = feature_end + 4 * i;
        let c = read_u32(bytes, at) as usize;
        if c >= classes {
            return Err(format_err(FormatErrorKind::LabelOutOfRange, at));
        }
        labels.push(c);
    }
    LabeledSet::new(DenseMatrix::new(n, d, data)?, labels, classes)
}

pub fn save_dataset(path: impl AsRef<Path>, set: &LabeledSet) -> Result<()> {
    std::fs::write(path, encode_dataset(set)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledSet> {
    decode_dataset(&std::fs::read(path)?)
}

/// CSV import: one header row, feature columns, integer label in the last
/// column. Features pass through `f32` so the result matches a binary file
/// holding the same numbers. `num_classes` defaults to `max label + 1`.
pub fn load_csv(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabeledSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Data {
                row,
                msg: "need at least one feature column and a label".into(),
            });
        }
        let d = record.len() - 1;
        if *width.get_or_insert(d) != d {
            return Err(Error::Data {
                row,
                msg: format!("expected {} feature columns, found {d}", width.unwrap_or(0)),
            });
        }
        for field in record.iter().take(d) {
            let v: f32 = field.trim().parse().map_err(|_| Error::Data {
                row,
                msg: format!("bad feature value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    msg: "non-finite feature".into(),
                });
            }
            data.push(v as f64);
        }
        let label = record.get(d).unwrap_or_default().trim();
        labels.push(label.parse::<usize>().map_err(|_| Error::Data {
            row,
            msg: format!("bad label {label:?}"),
        })?);
    }
    let d = width.unwrap_or(0);
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    LabeledSet::new(DenseMatrix::new(labels.len(), d, data)?, labels, classes)
}
