//! Activation-intensity traces.
//!
//! A trace is a dense `num_samples × total_channels` matrix of channel
//! intensities, one row per input sample, columns grouped by layer in layer
//! order. Values are kept as `f32` (the on-disk precision); every statistic
//! computed from them widens to `f64` first.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("intensity matrix has {actual} values, expected {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("label vector has {actual} entries, expected {expected}")]
    LabelCountMismatch { expected: usize, actual: usize },
    #[error("non-finite intensity at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: u32, classes: usize },
    #[error("labels are present but no class names were given")]
    MissingClassNames,
    #[error("duplicate layer name {0:?}")]
    DuplicateLayer(String),
    #[error("trace has no labels")]
    Unlabeled,
    #[error("unknown class id {0}")]
    UnknownClass(u32),
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelRef),
}

/// A channel identified by its layer position and index within the layer.
///
/// Ordering is by `(layer_index, channel_index)`, which is also the
/// tie-breaking order used by selection and ranking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelRef {
    pub layer_index: usize,
    pub channel_index: usize,
    pub layer_name: String,
}

impl ChannelRef {
    pub fn new(layer_index: usize, channel_index: usize, layer_name: impl Into<String>) -> Self {
        Self {
            layer_index,
            channel_index,
            layer_name: layer_name.into(),
        }
    }
}

impl fmt::Display for ChannelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer_name, self.channel_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub channels: usize,
}

impl LayerInfo {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            channels,
        }
    }
}

/// Validated intensity matrix with optional per-sample class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    layers: Vec<LayerInfo>,
    offsets: Vec<usize>,
    num_samples: usize,
    intensities: Vec<f32>,
    labels: Option<Vec<u32>>,
    class_names: Option<Vec<String>>,
}

impl ActivationTrace {
    /// Builds a trace from a row-major intensity matrix.
    ///
    /// Fails unless the matrix has `num_samples` rows of `Σ channels` finite
    /// values, and every label indexes into `class_names`.
    pub fn new(
        layers: Vec<LayerInfo>,
        num_samples: usize,
        intensities: Vec<f32>,
        labels: Option<Vec<u32>>,
        class_names: Option<Vec<String>>,
    ) -> Result<Self, TraceError> {
        for (i, layer) in layers.iter().enumerate() {
            if layers[..i].iter().any(|l| l.name == layer.name) {
                return Err(TraceError::DuplicateLayer(layer.name.clone()));
            }
        }
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for layer in &layers {
            total += layer.channels;
            offsets.push(total);
        }
        let expected = num_samples * total;
        if intensities.len() != expected {
            return Err(TraceError::ShapeMismatch {
                expected,
                actual: intensities.len(),
            });
        }
        if let Some(pos) = intensities.iter().position(|v| !v.is_finite()) {
            return Err(TraceError::NonFinite {
                row: pos / total,
                column: pos % total,
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != num_samples {
                return Err(TraceError::LabelCountMismatch {
                    expected: num_samples,
                    actual: labels.len(),
                });
            }
            let classes = class_names
                .as_ref()
                .ok_or(TraceError::MissingClassNames)?
                .len();
            if let Some((row, &label)) = labels
                .iter()
                .enumerate()
                .find(|(_, &l)| l as usize >= classes)
            {
                return Err(TraceError::LabelOutOfRange {
                    row,
                    label,
                    classes,
                });
            }
        }
        Ok(Self {
            layers,
            offsets,
            num_samples,
            intensities,
            labels,
            class_names,
        })
    }

    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn total_channels(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Row-major matrix, `num_samples × total_channels`.
    pub fn intensities(&self) -> &[f32] {
        &self.intensities
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.as_ref().map_or(0, Vec::len)
    }

    pub fn row(&self, row: usize) -> &[f32] {
        let width = self.total_channels();
        &self.intensities[row * width..(row + 1) * width]
    }

    #[inline]
    pub fn value(&self, row: usize, column: usize) -> f32 {
        self.intensities[row * self.total_channels() + column]
    }

    pub fn layer_by_name(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Global column range occupied by a layer.
    pub fn layer_columns(&self, layer_index: usize) -> Option<Range<usize>> {
        (layer_index < self.layers.len())
            .then(|| self.offsets[layer_index]..self.offsets[layer_index + 1])
    }

    pub fn channel(&self, layer_index: usize, channel_index: usize) -> Option<ChannelRef> {
        let layer = self.layers.get(layer_index)?;
        (channel_index < layer.channels)
            .then(|| ChannelRef::new(layer_index, channel_index, layer.name.clone()))
    }

    /// Every channel of every layer, in column order.
    pub fn channels(&self) -> Vec<ChannelRef> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(li, layer)| {
                (0..layer.channels).map(move |ci| ChannelRef::new(li, ci, layer.name.clone()))
            })
            .collect()
    }

    /// Global column of a channel; the layer name must match too.
    pub fn column_of(&self, channel: &ChannelRef) -> Result<usize, TraceError> {
        match self.layers.get(channel.layer_index) {
            Some(layer)
                if layer.name == channel.layer_name && channel.channel_index < layer.channels =>
            {
                Ok(self.offsets[channel.layer_index] + channel.channel_index)
            }
            _ => Err(TraceError::UnknownChannel(channel.clone())),
        }
    }

    /// True when both traces have the same layers, in the same order.
    pub fn same_schema(&self, other: &ActivationTrace) -> bool {
        self.layers == other.layers
    }
}

/// A view of a subset of trace rows.
///
/// Statistics are generic over this trait so that whole traces, class slices
/// and arbitrary row groups share one code path.
pub trait IntensitySource {
    fn trace(&self) -> &ActivationTrace;
    fn row_count(&self) -> usize;
    /// Trace row backing the `k`-th row of this source.
    fn row_at(&self, k: usize) -> usize;
    /// Class filter the rows were selected by, if any.
    fn class_filter(&self) -> Option<u32> {
        None
    }

    /// One column as `f64`, in source row order.
    fn column(&self, column: usize) -> Vec<f64> {
        let trace = self.trace();
        (0..self.row_count())
            .map(|k| f64::from(trace.value(self.row_at(k), column)))
            .collect()
    }
}

impl IntensitySource for ActivationTrace {
    fn trace(&self) -> &ActivationTrace {
        self
    }

    fn row_count(&self) -> usize {
        self.num_samples
    }

    fn row_at(&self, k: usize) -> usize {
        k
    }

    fn column(&self, column: usize) -> Vec<f64> {
        let width = self.total_channels();
        self.intensities
            .iter()
            .skip(column)
            .step_by(width.max(1))
            .take(self.num_samples)
            .map(|&v| f64::from(v))
            .collect()
    }
}

/// Rows of a trace sharing one class label, in original order.
#[derive(Debug, Clone)]
pub struct ClassSlice<'a> {
    trace: &'a ActivationTrace,
    class_id: u32,
    rows: Vec<usize>,
}

impl<'a> ClassSlice<'a> {
    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl IntensitySource for ClassSlice<'_> {
    fn trace(&self) -> &ActivationTrace {
        self.trace
    }

    fn row_count(&self) -> usize {
        self.rows.len()
    }

    fn row_at(&self, k: usize) -> usize {
        self.rows[k]
    }

    fn class_filter(&self) -> Option<u32> {
        Some(self.class_id)
    }
}

/// Selects the rows labeled `class_id`.
///
/// A valid class that simply has no rows yields an empty slice.
pub fn slice_by_class(trace: &ActivationTrace, class_id: u32) -> Result<ClassSlice<'_>, TraceError> {
    let labels = trace.labels().ok_or(TraceError::Unlabeled)?;
    if class_id as usize >= trace.num_classes() {
        return Err(TraceError::UnknownClass(class_id));
    }
    let rows = labels
        .iter()
        .enumerate()
        .filter_map(|(row, &label)| (label == class_id).then_some(row))
        .collect();
    Ok(ClassSlice {
        trace,
        class_id,
        rows,
    })
}

/// An arbitrary row subset, e.g. one sub-group of a class.
#[derive(Debug, Clone)]
pub struct RowSubset<'a> {
    trace: &'a ActivationTrace,
    rows: Vec<usize>,
}

impl<'a> RowSubset<'a> {
    /// Panics if a row index is out of range.
    pub fn new(trace: &'a ActivationTrace, rows: Vec<usize>) -> Self {
        assert!(
            rows.iter().all(|&r| r < trace.num_samples()),
            "row index out of range"
        );
        Self { trace, rows }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
}

impl IntensitySource for RowSubset<'_> {
    fn trace(&self) -> &ActivationTrace {
        self.trace
    }

    fn row_count(&self) -> usize {
        self.rows.len()
    }

    fn row_at(&self, k: usize) -> usize {
        self.rows[k]
    }
}
