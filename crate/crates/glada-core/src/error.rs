//! Error type shared by all core operations.

use alloc::string::String;
use core::fmt;

/// Errors raised by dataset handling, network evaluation, and training.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Dataset contents violate an invariant (NaN samples, bad label, bad dims).
    InvalidDataset(String),
    /// An array did not have the shape an operation requires.
    ShapeMismatch { context: &'static str, expected: usize, got: usize },
    /// Input channel count does not match the encoder configuration.
    ChannelMismatch { expected: usize, got: usize },
    /// Time axis too short to survive the pooling stack.
    SequenceTooShort { len: usize, min: usize },
    /// A parameter bank was used in a role it does not have.
    RoleMismatch { expected: &'static str, got: &'static str },
    /// An operation received no data.
    EmptyInput(&'static str),
    /// Train/test ratio outside (0, 1).
    RatioOutOfRange(f64),
    /// Stratified masking found a class with no samples.
    EmptyClass { class: usize },
    /// A gradient contained NaN or infinity; the batch is rejected.
    NonFiniteGradient,
    /// A training loss became NaN or infinite.
    NonFiniteLoss { context: String },
    /// Discriminator outputs must lie strictly inside (0, 1).
    ProbabilityOutOfRange(f64),
    /// Label spreading needs at least one labeled sample.
    AllUnlabeled,
    /// Agreement injection received predictions that do not cover the
    /// unlabeled set exactly.
    CoverageMismatch { expected: usize, got: usize },
    /// Fine-tuning requires a nonempty labeled target set; an empty one
    /// means threshold initialization produced no labels.
    EmptyLabeledSet,
    /// Classifier width and label range disagree.
    ClassCountMismatch { classifier: usize, data: usize },
    /// Threshold retry walked down to its floor without labeling anything.
    ThresholdExhausted { floor: f64 },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidDataset(msg) => write!(f, "invalid dataset: {msg}"),
            CoreError::ShapeMismatch { context, expected, got } => {
                write!(f, "shape mismatch in {context}: expected {expected}, got {got}")
            }
            CoreError::ChannelMismatch { expected, got } => {
                write!(f, "channel mismatch: encoder expects {expected}, input has {got}")
            }
            CoreError::SequenceTooShort { len, min } => {
                write!(f, "sequence length {len} below minimum {min}")
            }
            CoreError::RoleMismatch { expected, got } => {
                write!(f, "parameter role mismatch: expected {expected}, got {got}")
            }
            CoreError::EmptyInput(what) => write!(f, "empty input: {what}"),
            CoreError::RatioOutOfRange(r) => write!(f, "split ratio {r} outside (0, 1)"),
            CoreError::EmptyClass { class } => write!(f, "class {class} has no samples"),
            CoreError::NonFiniteGradient => write!(f, "non-finite gradient; batch rejected"),
            CoreError::NonFiniteLoss { context } => write!(f, "non-finite loss in {context}"),
            CoreError::ProbabilityOutOfRange(v) => {
                write!(f, "probability {v} outside (0, 1)")
            }
            CoreError::AllUnlabeled => write!(f, "label spreading needs at least one labeled sample"),
            CoreError::CoverageMismatch { expected, got } => {
                write!(f, "predictions cover {got} samples, unlabeled set has {expected}")
            }
            CoreError::EmptyLabeledSet => {
                write!(f, "labeled target set is empty; lower the threshold or abort")
            }
            CoreError::ClassCountMismatch { classifier, data } => {
                write!(f, "classifier has {classifier} outputs, data has {data} classes")
            }
            CoreError::ThresholdExhausted { floor } => {
                write!(f, "no sample cleared the confidence threshold even at floor {floor}")
            }
        }
    }
}

impl core::error::Error for CoreError {}
