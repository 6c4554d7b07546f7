//! CSV ingestion of intensity tables.
//!
//! The first line is a header. An optional leading `label` column holds
//! integer class ids; the remaining columns are one per channel, in layer
//! order. Class names are the decimal ids `0..=max_label`.

use std::io::Read;

use chanprobe_core::{ActivationTrace, LayerInfo, TraceError};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: cannot parse {value:?}")]
    Unparsable {
        line: u64,
        column: usize,
        value: String,
    },
    #[error("line {line}, column {column}: value {value:?} is not a finite f32")]
    NonFinite {
        line: u64,
        column: usize,
        value: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

pub fn ingest_csv<R: Read>(source: R, layer_spec: &[LayerInfo]) -> Result<ActivationTrace, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let channels: usize = layer_spec.iter().map(|l| l.channels).sum();
    let headers = reader.headers()?.clone();
    let has_labels = headers.get(0) == Some("label");
    let expected = channels + usize::from(has_labels);
    if headers.len() != expected {
        return Err(IngestError::ColumnCount {
            line: 1,
            expected,
            found: headers.len(),
        });
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected {
            return Err(IngestError::ColumnCount {
                line,
                expected,
                found: record.len(),
            });
        }
        let mut cells = record.iter().enumerate();
        if has_labels {
            let (_, cell) = cells.next().expect("label column");
            let label = cell.parse::<u32>().map_err(|_| IngestError::Unparsable {
                line,
                column: 0,
                value: cell.to_string(),
            })?;
            labels.push(label);
        }
        for (column, cell) in cells {
            let v: f64 = cell.parse().map_err(|_| IngestError::Unparsable {
                line,
                column,
                value: cell.to_string(),
            })?;
            let narrowed = v as f32;
            if !narrowed.is_finite() {
                return Err(IngestError::NonFinite {
                    line,
                    column,
                    value: cell.to_string(),
                });
            }
            values.push(narrowed);
        }
        rows += 1;
    }

    let (labels, class_names) = if has_labels {
        let classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
        (
            Some(labels),
            Some((0..classes).map(|c| c.to_string()).collect()),
        )
    } else {
        (None, None)
    };
    Ok(ActivationTrace::new(
        layer_spec.to_vec(),
        rows,
        values,
        labels,
        class_names,
    )?)
}
