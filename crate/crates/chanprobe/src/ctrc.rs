//! CTRC v1 trace container.
//!
//! Layout, with no padding between sections:
//!
//! ```text
//! magic        6 bytes   "CTRC1\n"
//! header_len   u32 LE
//! header       header_len bytes of UTF-8 JSON
//! matrix       num_samples × total_channels f32 LE, row-major
//! labels       num_samples × u32 LE, only if has_labels
//! ```
//!
//! The header is `{"version":1,"layers":[{"name":..,"channels":..}],
//! "num_samples":..,"has_labels":..,"class_names":[..]}` with `class_names`
//! omitted when absent.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chanprobe_core::{ActivationTrace, LayerInfo, TraceError};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 6] = b"CTRC1\n";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CtrcError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes, not a CTRC v1 file")]
    BadMagic,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported CTRC version {0}")]
    UnsupportedVersion(u32),
    #[error("{section} section has {actual} bytes, expected {expected}")]
    LengthMismatch {
        section: &'static str,
        expected: u64,
        actual: u64,
    },
    #[error("non-finite intensity at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: u32, classes: usize },
    #[error("invalid trace: {0}")]
    Invalid(TraceError),
}

impl From<TraceError> for CtrcError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::NonFinite { row, column } => CtrcError::NonFinite { row, column },
            TraceError::LabelOutOfRange {
                row,
                label,
                classes,
            } => CtrcError::LabelOutOfRange {
                row,
                label,
                classes,
            },
            other => CtrcError::Invalid(other),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    layers: Vec<HeaderLayer>,
    num_samples: u64,
    has_labels: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_names: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLayer {
    name: String,
    channels: u64,
}

const ROWS_PER_CHUNK: usize = 1024;

/// Writes `trace` as CTRC v1 and returns the number of bytes written.
///
/// Output is byte-identical for equal traces. Non-finite values are rejected
/// before anything reaches the sink.
pub fn write_trace<W: Write>(trace: &ActivationTrace, mut sink: W) -> Result<u64, CtrcError> {
    let width = trace.total_channels();
    if let Some(pos) = trace.intensities().iter().position(|v| !v.is_finite()) {
        return Err(CtrcError::NonFinite {
            row: pos / width,
            column: pos % width,
        });
    }
    let header = Header {
        version: VERSION,
        layers: trace
            .layers()
            .iter()
            .map(|l| HeaderLayer {
                name: l.name.clone(),
                channels: l.channels as u64,
            })
            .collect(),
        num_samples: trace.num_samples() as u64,
        has_labels: trace.labels().is_some(),
        class_names: trace.class_names().map(<[String]>::to_vec),
    };
    let json = serde_json::to_vec(&header).map_err(|e| CtrcError::Header(e.to_string()))?;
    let header_len = u32::try_from(json.len())
        .map_err(|_| CtrcError::Header("header exceeds 4 GiB".to_string()))?;

    sink.write_all(MAGIC)?;
    sink.write_all(&header_len.to_le_bytes())?;
    sink.write_all(&json)?;
    let mut written = (MAGIC.len() + 4 + json.len()) as u64;

    let mut buf = Vec::with_capacity(ROWS_PER_CHUNK * width.max(1) * 4);
    for chunk in trace.intensities().chunks((ROWS_PER_CHUNK * width).max(1)) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        sink.write_all(&buf)?;
        written += buf.len() as u64;
    }
    if let Some(labels) = trace.labels() {
        buf.clear();
        for l in labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        sink.write_all(&buf)?;
        written += buf.len() as u64;
    }
    sink.flush()?;
    Ok(written)
}

fn read_section<R: Read>(
    source: &mut R,
    section: &'static str,
    expected: u64,
) -> Result<Vec<u8>, CtrcError> {
    let mut buf = Vec::new();
    source.by_ref().take(expected).read_to_end(&mut buf)?;
    if (buf.len() as u64) < expected {
        return Err(CtrcError::LengthMismatch {
            section,
            expected,
            actual: buf.len() as u64,
        });
    }
    Ok(buf)
}

/// Reads a CTRC v1 stream. The stream must end right after the last section.
pub fn read_trace<R: Read>(mut source: R) -> Result<ActivationTrace, CtrcError> {
    let mut magic = [0u8; 6];
    let mut got = 0;
    while got < magic.len() {
        match source.read(&mut magic[got..])? {
            0 => return Err(CtrcError::BadMagic),
            n => got += n,
        }
    }
    if &magic != MAGIC {
        return Err(CtrcError::BadMagic);
    }

    let len_bytes = read_section(&mut source, "header length", 4)?;
    let header_len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes"));
    let json = read_section(&mut source, "header", u64::from(header_len))?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| CtrcError::Header(e.to_string()))?;
    if header.version != VERSION {
        return Err(CtrcError::UnsupportedVersion(header.version));
    }
    if header.has_labels && header.class_names.is_none() {
        return Err(CtrcError::Header(
            "has_labels is set but class_names is missing".to_string(),
        ));
    }

    let total: u64 = header
        .layers
        .iter()
        .try_fold(0u64, |acc, l| acc.checked_add(l.channels))
        .ok_or_else(|| CtrcError::Header("channel count overflow".to_string()))?;
    let matrix_len = header
        .num_samples
        .checked_mul(total)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| CtrcError::Header("matrix size overflow".to_string()))?;
    let matrix = read_section(&mut source, "matrix", matrix_len)?;
    let intensities: Vec<f32> = matrix
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let labels = if header.has_labels {
        let bytes = read_section(&mut source, "labels", header.num_samples * 4)?;
        Some(
            bytes
                .chunks_exact(4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        )
    } else {
        None
    };

    let mut rest = [0u8; 1];
    let trailing = source.read(&mut rest)?;
    if trailing != 0 {
        let extra = 1 + io::copy(&mut source, &mut io::sink())?;
        return Err(CtrcError::LengthMismatch {
            section: "file",
            expected: 0,
            actual: extra,
        });
    }

    let layers = header
        .layers
        .into_iter()
        .map(|l| LayerInfo::new(l.name, l.channels as usize))
        .collect();
    Ok(ActivationTrace::new(
        layers,
        header.num_samples as usize,
        intensities,
        labels,
        header.class_names,
    )?)
}

pub fn write_trace_file(trace: &ActivationTrace, path: &Path) -> Result<u64, CtrcError> {
    write_trace(trace, BufWriter::new(File::create(path)?))
}

pub fn read_trace_file(path: &Path) -> Result<ActivationTrace, CtrcError> {
    read_trace(BufReader::new(File::open(path)?))
}
