//! Model checkpoints.
//!
//! ```text
//! magic   "RLCK1\0"
//! u32     section count
//! section u8 tag (1 backbone, 2 buffer, 3 classifier)
//!         u32 dims count, then that many u64 dims
//!         u64 payload length in f64 values, then the f64 payload
//! u32     CRC-32 (IEEE) of every byte between the magic and the CRC
//! ```
//!
//! Dims per tag:
//! * backbone: `[frozen, layer_count + 1, widths...]`; payload is the layer
//!   weights in order, each row-major.
//! * buffer: `[d_cnn, d_b, seed, activation]` (activation 0 identity,
//!   1 ReLU); payload is `W_B`.
//! * classifier: `[d_b, classes, phase_index]`; payload is `γ`, then `W`,
//!   then `R`.
//!
//! All integers and floats are little-endian; floats are stored bit-exactly.

use std::path::Path;

use crate::analytic::{AnalyticClassifier, BufferActivation, BufferLayer};
use crate::backbone::MlpBackbone;
use crate::error::{Error, FormatErrorKind, Result};
use crate::mlp::Mlp;
use crate::numkit::DenseMatrix;
use crate::rng::RngSeed;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"RLCK1\0";

const TAG_BACKBONE: u8 = 1;
const TAG_BUFFER: u8 = 2;
const TAG_CLASSIFIER: u8 = 3;

/// Any subset of the trained models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelBundle {
    pub backbone: Option<MlpBackbone>,
    pub buffer: Option<BufferLayer>,
    pub classifier: Option<AnalyticClassifier>,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn section(&mut self, tag: u8, dims: &[u64], payload: impl Iterator<Item = f64> + Clone) {
        self.buf.push(tag);
        self.buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            self.buf.extend_from_slice(&d.to_le_bytes());
        }
        let count = payload.clone().count() as u64;
        self.buf.extend_from_slice(&count.to_le_bytes());
        for v in payload {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(bundle: &ModelBundle) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    let count = bundle.backbone.is_some() as u32 + bundle.buffer.is_some() as u32 + bundle.classifier.is_some() as u32;
    w.buf.extend_from_slice(&count.to_le_bytes());

    if let Some(b) = &bundle.backbone {
        let widths = b.widths();
        let mut dims = vec![b.is_frozen() as u64, widths.len() as u64];
        dims.extend(widths.iter().map(|&x| x as u64));
        w.section(
            TAG_BACKBONE,
            &dims,
            b.weights().iter().flat_map(|m| m.data().iter().copied()),
        );
    }
    if let Some(b) = &bundle.buffer {
        let act = match b.activation() {
            BufferActivation::Identity => 0,
            BufferActivation::Relu => 1,
        };
        w.section(
            TAG_BUFFER,
            &[b.d_cnn() as u64, b.d_b() as u64, b.seed().0, act],
            b.weight().data().iter().copied(),
        );
    }
    if let Some(c) = &bundle.classifier {
        w.section(
            TAG_CLASSIFIER,
            &[c.d_b() as u64, c.classes_seen() as u64, c.phase_index() as u64],
            std::iter::once(c.gamma())
                .chain(c.weight().data().iter().copied())
                .chain(c.memory().data().iter().copied()),
        );
    }
    let crc = crc32fast::hash(&w.buf);
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend_from_slice(&w.buf);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.end - self.pos < n {
            return Err(Error::Format {
                kind: FormatErrorKind::Truncated,
                offset: self.end as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.bad())?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8")))
            .collect())
    }

    fn bad(&self) -> Error {
        Error::Format {
            kind: FormatErrorKind::BadSection,
            offset: self.pos as u64,
        }
    }
}

fn usize_dim(v: u64) -> usize {
    usize::try_from(v).unwrap_or(usize::MAX)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            kind: FormatErrorKind::BadMagic,
            offset: 0,
        });
    }
    if bytes.len() < 6 + 4 + 4 {
        return Err(Error::Format {
            kind: FormatErrorKind::Truncated,
            offset: bytes.len() as u64,
        });
    }
    let crc_at = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[crc_at..].try_into().expect("4"));
    let computed = crc32fast::hash(&bytes[6..crc_at]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader {
        bytes,
        pos: 6,
        end: crc_at,
    };
    let mut bundle = ModelBundle::default();
    let sections = r.u32()?;
    for _ in 0..sections {
        let start = r.pos;
        let tag = r.u8()?;
        let ndims = r.u32()? as usize;
        if ndims > (r.end - r.pos) / 8 {
            return Err(r.bad());
        }
        let dims: Vec<u64> = (0..ndims).map(|_| r.u64()).collect::<Result<_>>()?;
        let count = usize_dim(r.u64()?);
        let payload = r.f64s(count)?;
        let bad = || Error::Format {
            kind: FormatErrorKind::BadSection,
            offset: start as u64,
        };
        match tag {
            TAG_BACKBONE => {
                if dims.len() < 2 || dims.len() != 2 + usize_dim(dims[1]) || dims[1] < 2 {
                    return Err(bad());
                }
                let widths: Vec<usize> = dims[2..].iter().map(|&v| usize_dim(v)).collect();
                let expected: usize = widths.windows(2).map(|w| w[0] * w[1]).sum();
                if expected != payload.len() {
                    return Err(bad());
                }
                let mut offset = 0;
                let mut layers = Vec::new();
                for w in widths.windows(2) {
                    let len = w[0] * w[1];
                    layers.push(DenseMatrix::new(w[0], w[1], payload[offset..offset + len].to_vec())?);
                    offset += len;
                }
                bundle.backbone = Some(MlpBackbone::from_mlp(Mlp::from_weights(layers)?, dims[0] != 0));
            }
            TAG_BUFFER => {
                if dims.len() != 4 {
                    return Err(bad());
                }
                let (d_cnn, d_b) = (usize_dim(dims[0]), usize_dim(dims[1]));
                if d_cnn.checked_mul(d_b) != Some(payload.len()) {
                    return Err(bad());
                }
                let layer = BufferLayer::from_weight(DenseMatrix::new(d_cnn, d_b, payload)?, RngSeed(dims[2]))?;
                let act = match dims[3] {
                    0 => BufferActivation::Identity,
                    1 => BufferActivation::Relu,
                    _ => return Err(bad()),
                };
                bundle.buffer = Some(layer.with_activation(act));
            }
            TAG_CLASSIFIER => {
                if dims.len() != 3 {
                    return Err(bad());
                }
                let (d_b, classes) = (usize_dim(dims[0]), usize_dim(dims[1]));
                if 1 + d_b * classes + d_b * d_b != payload.len() {
                    return Err(bad());
                }
                let gamma = payload[0];
                let weight = DenseMatrix::new(d_b, classes, payload[1..1 + d_b * classes].to_vec())?;
                let memory = DenseMatrix::new(d_b, d_b, payload[1 + d_b * classes..].to_vec())?;
                bundle.classifier = Some(AnalyticClassifier::from_parts(
                    weight,
                    memory,
                    gamma,
                    usize_dim(dims[2]),
                )?);
            }
            _ => return Err(bad()),
        }
    }
    if r.pos != r.end {
        return Err(Error::Format {
            kind: FormatErrorKind::TrailingBytes,
            offset: r.pos as u64,
        });
    }
    Ok(bundle)
}

pub fn save_checkpoint(path: impl AsRef<Path>, bundle: &ModelBundle) -> Result<()> {
    std::fs::write(path, encode_checkpoint(bundle))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelBundle> {
    decode_checkpoint(&std::fs::read(path)?)
}
