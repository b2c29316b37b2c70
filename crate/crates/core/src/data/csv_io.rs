use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Split, TimeSeriesDataset};

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const TEST_LABELS_FILE: &str = "test_labels.csv";

fn open(path: &Path) -> Result<csv::Reader<fs::File>, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> DataError {
    DataError::Csv {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Reads a header row plus numeric rows; returns the header and variable-major values.
fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), DataError> {
    let mut reader = open(path)?;
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(r) => r
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect(),
        None => {
            return Err(DataError::Csv {
                path: path.to_path_buf(),
                msg: "empty file".into(),
            })
        }
    };
    let d = header.len();
    let mut columns = vec![Vec::new(); d];
    for (i, record) in records.enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(i + 2, |p| p.line() as usize);
        if record.len() != d {
            return Err(DataError::Ragged {
                path: path.to_path_buf(),
                line,
                expected: d,
                found: record.len(),
            });
        }
        for (column, (cell, out)) in record.iter().zip(columns.iter_mut()).enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| DataError::NonNumeric {
                path: path.to_path_buf(),
                line,
                column,
                value: cell.to_string(),
            })?;
            out.push(value);
        }
    }
    Ok((header, columns))
}

fn read_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut reader = open(path)?;
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        let cell = record.get(0).unwrap_or("").trim();
        if record.len() != 1 {
            return Err(DataError::Ragged {
                path: path.to_path_buf(),
                line,
                expected: 1,
                found: record.len(),
            });
        }
        match cell {
            "0" => labels.push(0),
            "1" => labels.push(1),
            // an optional non-numeric header on the first line
            _ if i == 0 && cell.parse::<f64>().is_err() => {}
            _ => {
                return Err(DataError::InvalidLabel {
                    path: path.to_path_buf(),
                    line,
                    value: cell.to_string(),
                })
            }
        }
    }
    Ok(labels)
}

/// Loads `train.csv`, `test.csv` and `test_labels.csv` from `dir`.
pub fn load_csv_dataset(dir: &Path) -> Result<(TimeSeriesDataset, TimeSeriesDataset), DataError> {
    let name = dir.file_name().map_or_else(
        || "dataset".to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    let train_path = dir.join(TRAIN_FILE);
    let test_path = dir.join(TEST_FILE);
    let labels_path = dir.join(TEST_LABELS_FILE);
    for p in [&train_path, &test_path, &labels_path] {
        if !p.is_file() {
            return Err(DataError::MissingFile(p.clone()));
        }
    }

    let (train_header, train_values) = read_matrix(&train_path)?;
    let (test_header, test_values) = read_matrix(&test_path)?;
    if train_values.len() != test_values.len() {
        return Err(DataError::DimensionMismatch {
            train: train_values.len(),
            test: test_values.len(),
        });
    }
    let labels = read_labels(&labels_path)?;
    let rows = test_values.first().map_or(0, Vec::len);
    if labels.len() != rows {
        return Err(DataError::LabelMismatch {
            path: labels_path,
            labels: labels.len(),
            rows,
        });
    }

    let train = TimeSeriesDataset::new(name.clone(), Split::Train, train_values, None)?
        .with_variable_names(train_header);
    let test = TimeSeriesDataset::new(name, Split::Test, test_values, Some(labels))?
        .with_variable_names(test_header);
    Ok((train, test))
}

fn write_matrix(path: PathBuf, data: &TimeSeriesDataset) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.clone(),
        source,
    };
    let mut writer = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    writer
        .write_record(&data.variable_names)
        .map_err(|e| csv_err(&path, e))?;
    for t in 0..data.len() {
        writer
            .write_record(data.values().iter().map(|v| v[t].to_string()))
            .map_err(|e| csv_err(&path, e))?;
    }
    writer.flush().map_err(io)
}

/// Writes a train/test pair in the layout read by [`load_csv_dataset`].
pub fn write_csv_dataset(
    dir: &Path,
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_matrix(dir.join(TRAIN_FILE), train)?;
    write_matrix(dir.join(TEST_FILE), test)?;

    let labels_path = dir.join(TEST_LABELS_FILE);
    let mut text = String::from("label\n");
    let fallback = vec![0u8; test.len()];
    for l in test.labels().unwrap_or(&fallback) {
        text.push_str(if *l == 1 { "1\n" } else { "0\n" });
    }
    fs::write(&labels_path, text).map_err(|source| DataError::Io {
        path: labels_path,
        source,
    })
}
