use std::fs::File;
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

/// Label column name used when writing generated datasets.
pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// Upper bound on distinct label values accepted by the loader.
pub const MAX_CLASSES: usize = 64;

/// Loads a headed, comma-separated file. Labels are mapped to class indices
/// in order of first appearance; empty feature cells become missing (`NaN`).
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    load_csv_with_classes(path, label_column, None)
}

/// Like [`load_csv`], but with an optional fixed label mapping. With a mapping,
/// labels outside it are rejected instead of being appended.
pub fn load_csv_with_classes(
    path: impl AsRef<Path>,
    label_column: &str,
    classes: Option<&[String]>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::Schema(format!(
                "label column '{label_column}' not found in header of {}",
                path.display()
            ))
        })?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&i| headers[i].to_string()).collect();

    let fixed = classes.is_some();
    let mut class_names: Vec<String> = classes.map(<[String]>::to_vec).unwrap_or_default();
    let mut values = Vec::new();
    let mut labels = Vec::new();

    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based data row number, header excluded
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        for &c in &feature_cols {
            let cell = &record[c];
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(Error::Parse {
                            row,
                            column: headers[c].to_string(),
                            message: format!("'{cell}' is not a finite number"),
                        })
                    }
                }
            };
            values.push(v);
        }
        let raw = &record[label_idx];
        if raw.is_empty() {
            return Err(Error::Parse {
                row,
                column: label_column.to_string(),
                message: "empty label".into(),
            });
        }
        let class = match class_names.iter().position(|c| c == raw) {
            Some(c) => c,
            None if fixed => {
                return Err(Error::Schema(format!(
                    "label '{raw}' at row {row} is not one of {class_names:?}"
                )))
            }
            None => {
                if class_names.len() == MAX_CLASSES {
                    return Err(Error::Validation(format!(
                        "label column '{label_column}' has more than {MAX_CLASSES} distinct values"
                    )));
                }
                class_names.push(raw.to_string());
                class_names.len() - 1
            }
        };
        labels.push(class);
    }

    if class_names.len() < 2 {
        return Err(Error::Validation(format!(
            "{} contains a single class; need at least 2",
            path.display()
        )));
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, feature_names.len()), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Dataset::new(features, labels, feature_names, class_names)
}

/// Writes `ds` in the format [`load_csv`] reads: one column per feature and a
/// trailing label column holding the raw class names. Missing cells are left empty.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(label_column);
    writer.write_record(&header)?;

    let mut row = Vec::with_capacity(ds.n_features() + 1);
    for (i, x) in ds.features().rows().into_iter().enumerate() {
        row.clear();
        row.extend(x.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        row.push(ds.class_names()[ds.labels()[i]].clone());
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
