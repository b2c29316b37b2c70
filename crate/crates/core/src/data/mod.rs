//! Time-series datasets, preprocessing, windowing, CSV ingestion and synthetic benchmarks.

mod csv_io;
mod preprocess;
mod synth;
mod windows;

pub use csv_io::{load_csv_dataset, write_csv_dataset, TEST_FILE, TEST_LABELS_FILE, TRAIN_FILE};
pub use preprocess::{
    cumulative_sum, difference, normalize, DiffOrder, Normalizer, PreparedSeries, Preprocessor,
};
pub use synth::{
    generate_synthetic, generate_synthetic_paired, AnomalyKind, Injection, SynthSpec,
    SyntheticSplits,
};
pub use windows::{make_windows, scoring_starts, window_starts, WindowBatch};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("series of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("window length {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("invalid windowing: {0}")]
    InvalidWindowing(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: expected {expected} columns, found {found}", path.display())]
    Ragged {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{}:{line}: column {column} is not numeric: {value:?}", path.display())]
    NonNumeric {
        path: PathBuf,
        line: usize,
        column: usize,
        value: String,
    },
    #[error("{}: {labels} labels for {rows} test rows", path.display())]
    LabelMismatch {
        path: PathBuf,
        labels: usize,
        rows: usize,
    },
    #[error("{}:{line}: label must be 0 or 1, found {value:?}", path.display())]
    InvalidLabel {
        path: PathBuf,
        line: usize,
        value: String,
    },
    #[error("train has {train} variables but test has {test}")]
    DimensionMismatch { train: usize, test: usize },
    #[error("{}: {msg}", path.display())]
    Csv { path: PathBuf, msg: String },
    #[error("invalid dataset configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A multivariate series stored variable-major: `values[v][t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    pub split: Split,
    pub variable_names: Vec<String>,
    values: Vec<Vec<f64>>,
    labels: Option<Vec<u8>>,
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        values: Vec<Vec<f64>>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self, DataError> {
        let len = values.first().map_or(0, Vec::len);
        if values.is_empty() {
            return Err(DataError::Config("dataset has no variables".into()));
        }
        if let Some(bad) = values.iter().find(|v| v.len() != len) {
            return Err(DataError::Config(format!(
                "variables have unequal lengths ({len} vs {})",
                bad.len()
            )));
        }
        if len < 2 {
            return Err(DataError::TooShort { len, min: 2 });
        }
        if let Some(labels) = &labels {
            if labels.len() != len {
                return Err(DataError::Config(format!(
                    "{} labels for series of length {len}",
                    labels.len()
                )));
            }
            if labels.iter().any(|l| *l > 1) {
                return Err(DataError::Config("labels must be 0 or 1".into()));
            }
        }
        let variable_names = (0..values.len()).map(|i| format!("x{i}")).collect();
        Ok(Self {
            name: name.into(),
            split,
            variable_names,
            values,
            labels,
        })
    }

    pub fn with_variable_names(mut self, names: Vec<String>) -> Self {
        debug_assert_eq!(names.len(), self.values.len());
        self.variable_names = names;
        self
    }

    /// Number of variables `d`.
    pub fn dims(&self) -> usize {
        self.values.len()
    }

    /// Number of timestamps `T`.
    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Values at timestamp `t` across all variables.
    pub fn at(&self, t: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[t]).collect()
    }
}
