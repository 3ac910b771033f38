use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One rejected CSV row. `line` is the 1-based data row index (header excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: usize,
    pub column: String,
    pub value: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "row {}: column {:?} has non-numeric value {:?}",
            self.line, self.column, self.value
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("missing column {0:?} in CSV header")]
    MissingColumn(String),

    #[error("{count} invalid row(s); first: {}", .rows.first().map(ToString::to_string).unwrap_or_default())]
    InvalidRows { count: usize, rows: Vec<RowError> },

    #[error("dataset needs {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failures reading or using a serialized model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("not a DOC model file")]
    BadMagic,

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("model file checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("model file truncated: needed {needed} more byte(s) while reading {field}")]
    Truncated { field: &'static str, needed: usize },

    #[error("model file is malformed: {0}")]
    Malformed(String),

    #[error(
        "input schema does not match the model: model was trained on {expected} column(s) [{expected_columns}], \
         input has {actual} column(s) [{actual_columns}]; retrain or pass matching --drop/--label-column flags"
    )]
    SchemaMismatch {
        expected: usize,
        actual: usize,
        expected_columns: String,
        actual_columns: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
