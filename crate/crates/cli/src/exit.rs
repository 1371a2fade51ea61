use std::fmt;

use swinct_core::CoreError;
use swinct_ct::CtError;
use swinct_tensor::io::FormatError;
use swinct_tensor::TensorError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

/// A bad flag combination or configuration value.
#[derive(Debug)]
pub struct UsageError(pub String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn tensor_code(e: &TensorError) -> i32 {
    match e {
        TensorError::NonFinite { .. } => EXIT_NUMERIC,
        _ => EXIT_INTERNAL,
    }
}

fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Usage(_) | CoreError::Config(_) => EXIT_USAGE,
        CoreError::Data(_) | CoreError::Format(_) | CoreError::Io { .. } | CoreError::Checkpoint { .. } => EXIT_DATA,
        CoreError::NonFinite { .. } => EXIT_NUMERIC,
        CoreError::Tensor(t) => tensor_code(t),
        CoreError::Overflow(_) => EXIT_INTERNAL,
    }
}

/// Process exit code for an error: 2 usage, 3 data or format, 4 numeric
/// (non-finite loss or gradient), 5 anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<clap::Error>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<CtError>() {
            return match e {
                CtError::Usage(_) => EXIT_USAGE,
                CtError::Data(_) | CtError::Format { .. } | CtError::Io { .. } => EXIT_DATA,
                CtError::Core(c) => core_code(c),
            };
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
        if let Some(e) = cause.downcast_ref::<TensorError>() {
            return tensor_code(e);
        }
        if cause.is::<FormatError>() || cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return EXIT_DATA;
        }
    }
    EXIT_INTERNAL
}
