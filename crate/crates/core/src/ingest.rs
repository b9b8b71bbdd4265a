//! Dataset parsing, feature scaling, chronological splitting, and sliding windows.
//!
//! Input files are either CSV with a header row or ARFF with `@attribute`
//! declarations. A feature named `time` is dropped when present, and a column
//! named `result`, `label`, or `binary result` (case-insensitive) is split out
//! as the per-row attack label.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Column names recognised as the label column, compared case-insensitively.
const LABEL_NAMES: [&str; 3] = ["result", "label", "binary result"];

/// A parsed telemetry table: named feature columns plus optional row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordTable {
    pub feature_names: Vec<String>,
    /// n x m row-major feature matrix.
    pub rows: Array2<f64>,
    /// Per-row flag, 0 = normal, 1 = attack. `None` for unlabeled captures.
    pub labels: Option<Vec<u8>>,
}

impl RecordTable {
    pub fn new(
        feature_names: Vec<String>,
        rows: Array2<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if feature_names.len() != rows.ncols() {
            return Err(Error::shape(
                format!("{} feature columns", feature_names.len()),
                format!("{} row columns", rows.ncols()),
            ));
        }
        if let Some(labels) = &labels {
            if labels.len() != rows.nrows() {
                return Err(Error::shape(
                    format!("{} labels", rows.nrows()),
                    format!("{} labels", labels.len()),
                ));
            }
            if let Some(bad) = labels.iter().find(|&&v| v > 1) {
                return Err(Error::InvalidArgument(format!(
                    "labels must be 0 or 1, got {bad}"
                )));
            }
        }
        Ok(RecordTable {
            feature_names,
            rows,
            labels,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.rows.ncols()
    }

    /// Number of rows with label 0. Unlabeled tables count every row as normal.
    pub fn normal_row_count(&self) -> usize {
        match &self.labels {
            Some(labels) => labels.iter().filter(|&&v| v == 0).count(),
            None => self.num_rows(),
        }
    }
}

/// Accepted dataset file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Arff,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "arff" => Ok(DatasetFormat::Arff),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format {other:?} (expected csv or arff)"
            ))),
        }
    }
}

/// Parse a telemetry file into a [`RecordTable`].
///
/// The declared column order is preserved, `time` is dropped, and any label
/// column is split out. Malformed rows are reported with their 1-based line
/// number.
pub fn parse_dataset(raw: &[u8], format: DatasetFormat) -> Result<RecordTable> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Parse {
        line: 0,
        message: format!("input is not valid UTF-8: {e}"),
    })?;
    match format {
        DatasetFormat::Csv => parse_csv(text),
        DatasetFormat::Arff => parse_arff(text),
    }
}

fn is_label_name(name: &str) -> bool {
    LABEL_NAMES
        .iter()
        .any(|l| name.eq_ignore_ascii_case(l.trim()))
}

fn is_time_name(name: &str) -> bool {
    name.eq_ignore_ascii_case("time")
}

fn parse_field(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric field {:?}", field.trim()),
    })
}

fn parse_label_value(field: &str, line: usize) -> Result<u8> {
    let value = parse_field(field, line)?;
    if value == 0.0 {
        Ok(0)
    } else if value == 1.0 {
        Ok(1)
    } else {
        Err(Error::Parse {
            line,
            message: format!("label must be 0 or 1, got {value}"),
        })
    }
}

/// Shared row assembler: strips the time/label columns and checks arity.
struct ColumnPlan {
    /// Kept feature names in declared order.
    feature_names: Vec<String>,
    /// Index into the raw row for each kept feature.
    keep: Vec<usize>,
    label_index: Option<usize>,
    arity: usize,
}

impl ColumnPlan {
    fn from_names(names: &[String]) -> ColumnPlan {
        let mut feature_names = Vec::new();
        let mut keep = Vec::new();
        let mut label_index = None;
        for (i, name) in names.iter().enumerate() {
            if is_label_name(name) {
                // First label-like column wins.
                if label_index.is_none() {
                    label_index = Some(i);
                    continue;
                }
            }
            if is_time_name(name) {
                continue;
            }
            feature_names.push(name.clone());
            keep.push(i);
        }
        ColumnPlan {
            feature_names,
            keep,
            label_index,
            arity: names.len(),
        }
    }

    fn consume_row(
        &self,
        fields: &[&str],
        line: usize,
        data: &mut Vec<f64>,
        labels: &mut Vec<u8>,
    ) -> Result<()> {
        if fields.len() != self.arity {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", self.arity, fields.len()),
            });
        }
        for &i in &self.keep {
            data.push(parse_field(fields[i], line)?);
        }
        if let Some(li) = self.label_index {
            labels.push(parse_label_value(fields[li], line)?);
        }
        Ok(())
    }

    fn finish(self, data: Vec<f64>, labels: Vec<u8>, n_rows: usize) -> Result<RecordTable> {
        if n_rows == 0 {
            return Err(Error::Parse {
                line: 0,
                message: "no data rows".into(),
            });
        }
        let rows = Array2::from_shape_vec((n_rows, self.feature_names.len()), data)
            .expect("row assembly is shape-consistent");
        let labels = self.label_index.map(|_| labels);
        RecordTable::new(self.feature_names, rows, labels)
    }
}

fn parse_csv(text: &str) -> Result<RecordTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        message: "empty input".into(),
    })?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let plan = ColumnPlan::from_names(&names);

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut n_rows = 0usize;
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').collect();
        plan.consume_row(&fields, line, &mut data, &mut labels)?;
        n_rows += 1;
    }
    plan.finish(data, labels, n_rows)
}

fn parse_arff(text: &str) -> Result<RecordTable> {
    let mut names: Vec<String> = Vec::new();
    let mut in_data = false;
    let mut plan: Option<ColumnPlan> = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut n_rows = 0usize;

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            }
            if lower.starts_with("@attribute") {
                let rest = line["@attribute".len()..].trim();
                let (name, decl) = split_attribute(rest, line_no)?;
                let decl_lower = decl.to_ascii_lowercase();
                let numeric = matches!(decl_lower.as_str(), "numeric" | "real" | "integer");
                let nominal = decl.starts_with('{');
                if !numeric && !nominal {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unsupported attribute type {decl:?}"),
                    });
                }
                if nominal && !is_label_name(&name) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!(
                            "nominal attribute {name:?} is only supported for the label column"
                        ),
                    });
                }
                names.push(name);
                continue;
            }
            if lower.starts_with("@data") {
                if names.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "@data before any @attribute".into(),
                    });
                }
                plan = Some(ColumnPlan::from_names(&names));
                in_data = true;
                continue;
            }
            return Err(Error::Parse {
                line: line_no,
                message: format!("unexpected header line {line:?}"),
            });
        }
        let plan = plan.as_ref().expect("plan built at @data");
        let fields: Vec<&str> = line.split(',').collect();
        plan.consume_row(&fields, line_no, &mut data, &mut labels)?;
        n_rows += 1;
    }

    match plan {
        Some(plan) => plan.finish(data, labels, n_rows),
        None => Err(Error::Parse {
            line: 0,
            message: "no @data section".into(),
        }),
    }
}

/// Split an `@attribute` body into the name and its type declaration.
/// Names may be quoted with single quotes to include spaces.
fn split_attribute(rest: &str, line: usize) -> Result<(String, String)> {
    let rest = rest.trim();
    if let Some(stripped) = rest.strip_prefix('\'') {
        let end = stripped.find('\'').ok_or(Error::Parse {
            line,
            message: "unterminated attribute name quote".into(),
        })?;
        let name = stripped[..end].to_string();
        let decl = stripped[end + 1..].trim().to_string();
        return Ok((name, decl));
    }
    let mut parts = rest.splitn(2, char::is_whitespace);
    let name = parts.next().unwrap_or("").to_string();
    let decl = parts.next().unwrap_or("").trim().to_string();
    if name.is_empty() || decl.is_empty() {
        return Err(Error::Parse {
            line,
            message: format!("malformed @attribute {rest:?}"),
        });
    }
    Ok((name, decl))
}

/// Per-feature min-max scaler fitted on training rows.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scaler {
    pub minimum: Vec<f64>,
    pub maximum: Vec<f64>,
}

impl Scaler {
    /// Fit column-wise extrema over a table.
    pub fn fit(table: &RecordTable) -> Result<Scaler> {
        if table.num_rows() == 0 {
            return Err(Error::EmptyInput("cannot fit scaler on empty table".into()));
        }
        let m = table.num_features();
        let mut minimum = vec![f64::INFINITY; m];
        let mut maximum = vec![f64::NEG_INFINITY; m];
        for row in table.rows.rows() {
            for (k, &v) in row.iter().enumerate() {
                minimum[k] = minimum[k].min(v);
                maximum[k] = maximum[k].max(v);
            }
        }
        Ok(Scaler { minimum, maximum })
    }

    pub fn num_features(&self) -> usize {
        self.minimum.len()
    }

    /// Map each value in column k to (v - min_k) / (max_k - min_k).
    /// Constant columns map to 0.0.
    pub fn apply(&self, table: &RecordTable) -> Result<RecordTable> {
        self.check_dims(table)?;
        let mut rows = table.rows.clone();
        for mut row in rows.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                let span = self.maximum[k] - self.minimum[k];
                *v = if span == 0.0 {
                    0.0
                } else {
                    (*v - self.minimum[k]) / span
                };
            }
        }
        Ok(RecordTable {
            feature_names: table.feature_names.clone(),
            rows,
            labels: table.labels.clone(),
        })
    }

    /// Undo [`Scaler::apply`]. Constant columns map back to their fitted minimum.
    pub fn invert(&self, table: &RecordTable) -> Result<RecordTable> {
        self.check_dims(table)?;
        let mut rows = table.rows.clone();
        for mut row in rows.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                let span = self.maximum[k] - self.minimum[k];
                *v = if span == 0.0 {
                    self.minimum[k]
                } else {
                    *v * span + self.minimum[k]
                };
            }
        }
        Ok(RecordTable {
            feature_names: table.feature_names.clone(),
            rows,
            labels: table.labels.clone(),
        })
    }

    fn check_dims(&self, table: &RecordTable) -> Result<()> {
        if table.num_features() != self.num_features() {
            return Err(Error::shape(
                format!("{} columns", self.num_features()),
                format!("{} columns", table.num_features()),
            ));
        }
        Ok(())
    }
}

/// One sliding-window slice of the source table.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start_index: usize,
    /// l x m slice; row t equals source row `start_index + t`.
    pub values: Array2<f64>,
    /// 1 iff any covered source row has label 1.
    pub label: u8,
}

impl Window {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn num_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
}

/// Cut a table into the n - l + 1 overlapping windows of length `l`.
pub fn make_windows(table: &RecordTable, l: usize) -> Result<Vec<Window>> {
    let n = table.num_rows();
    if l < 1 || l > n {
        return Err(Error::InvalidArgument(format!(
            "window length {l} out of range 1..={n}"
        )));
    }
    let mut windows = Vec::with_capacity(n - l + 1);
    for start in 0..=(n - l) {
        let values = table.rows.slice(ndarray::s![start..start + l, ..]).to_owned();
        let label = match &table.labels {
            Some(labels) => u8::from(labels[start..start + l].contains(&1)),
            None => 0,
        };
        windows.push(Window {
            start_index: start,
            values,
            label,
        });
    }
    Ok(windows)
}

/// Chronological split: the first floor(n * train_fraction) rows become the
/// training table, the rest the test table. No shuffling.
pub fn split_train_test(table: &RecordTable, train_fraction: f64) -> Result<(RecordTable, RecordTable)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = table.num_rows();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    let take = |range: std::ops::Range<usize>| RecordTable {
        feature_names: table.feature_names.clone(),
        rows: table.rows.slice(ndarray::s![range.clone(), ..]).to_owned(),
        labels: table.labels.as_ref().map(|l| l[range].to_vec()),
    };
    Ok((take(0..n_train), take(n_train..n)))
}
