use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::Tensor;

/// Train/validation/test proportions, e.g. `6:2:2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl SplitRatio {
    pub const fn new(train: u32, val: u32, test: u32) -> Self {
        SplitRatio { train, val, test }
    }

    pub fn total(&self) -> u32 {
        self.train + self.val + self.test
    }

    /// `(train_end, val_end)` row boundaries for a series of `n` steps.
    pub fn bounds(&self, n: usize) -> (usize, usize) {
        let total = self.total() as usize;
        let train_end = n * self.train as usize / total;
        let val_end = train_end + n * self.val as usize / total;
        (train_end, val_end)
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio::new(7, 1, 2)
    }
}

/// A multivariate series stored as `values[L_total × C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    pub id: String,
    pub domain: String,
    pub frequency: String,
    pub channel_names: Vec<String>,
    pub split: SplitRatio,
    values: Tensor,
    columns: Vec<Vec<f64>>,
}

impl TimeSeriesDataset {
    pub fn new(
        id: impl Into<String>,
        domain: impl Into<String>,
        frequency: impl Into<String>,
        channel_names: Vec<String>,
        values: Tensor,
        split: SplitRatio,
    ) -> Result<Self> {
        let (n, c) = match values.shape() {
            [n, c] => (*n, *c),
            s => return Err(invalid!("dataset values must be [steps x channels], got {s:?}")),
        };
        if channel_names.len() != c {
            return Err(invalid!("{} channel names for {c} channels", channel_names.len()));
        }
        if split.total() == 0 {
            return Err(invalid!("split ratio must not be all zero"));
        }
        values.validate("dataset values")?;
        let columns = (0..c).map(|j| (0..n).map(|i| values.at(i, j)).collect()).collect();
        Ok(TimeSeriesDataset {
            id: id.into(),
            domain: domain.into(),
            frequency: frequency.into(),
            channel_names,
            split,
            values,
            columns,
        })
    }

    /// Build from per-channel columns of equal length.
    pub fn from_columns(
        id: impl Into<String>,
        domain: impl Into<String>,
        frequency: impl Into<String>,
        columns: Vec<Vec<f64>>,
        split: SplitRatio,
    ) -> Result<Self> {
        let n = columns.first().map(Vec::len).unwrap_or(0);
        if columns.iter().any(|c| c.len() != n) {
            return Err(invalid!("channels have different lengths"));
        }
        let rows: Vec<Vec<f64>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
        let names = (0..columns.len()).map(|j| format!("ch{j}")).collect();
        Self::new(id, domain, frequency, names, Tensor::from_rows(&rows)?, split)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn n_steps(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.columns.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.columns[c]
    }

    pub fn bounds(&self) -> (usize, usize) {
        self.split.bounds(self.n_steps())
    }

    pub fn train(&self, c: usize) -> &[f64] {
        &self.columns[c][..self.bounds().0]
    }

    /// Per-channel copy standardized with train-split statistics.
    pub fn standardized(&self) -> Result<TimeSeriesDataset> {
        let cols = (0..self.n_channels())
            .map(|c| {
                let train = self.train(c);
                let (mean, std) = mean_std(train);
                let std = if std > 1e-12 { std } else { 1.0 };
                self.channel(c).iter().map(|x| (x - mean) / std).collect()
            })
            .collect();
        let mut out = Self::from_columns(&self.id, &self.domain, &self.frequency, cols, self.split)?;
        out.channel_names = self.channel_names.clone();
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.channel_names)?;
        for i in 0..self.n_steps() {
            w.write_record(self.values.row(i).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len().max(1) as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    ForwardFill,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantPolicy {
    #[default]
    Reject,
    Drop,
    Keep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSchema {
    WideCsv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadOptions {
    pub missing: MissingPolicy,
    pub constant: ConstantPolicy,
    /// Minimum number of rows, typically look-back plus horizon.
    pub min_rows: usize,
    pub split: SplitRatio,
    pub domain: String,
    pub frequency: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            missing: MissingPolicy::Reject,
            constant: ConstantPolicy::Reject,
            min_rows: 1,
            split: SplitRatio::default(),
            domain: "unknown".into(),
            frequency: "unknown".into(),
        }
    }
}

const TIMESTAMP_HEADERS: [&str; 4] = ["date", "time", "timestamp", "datetime"];

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("nan") || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("null")
}

/// Load a wide CSV: a header of channel names, one row per time step, and
/// an optional leading timestamp column that is ignored. Rows and columns
/// in errors are 1-based and count the header as row 1.
pub fn load_dataset(path: &Path, schema: DatasetSchema, opts: &LoadOptions) -> Result<TimeSeriesDataset> {
    let DatasetSchema::WideCsv = schema;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() {
        return Err(Error::Load {
            row: 1,
            column: 1,
            message: "empty header".into(),
        });
    }
    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec?);
    }
    let skip_first = TIMESTAMP_HEADERS.contains(&header[0].to_ascii_lowercase().as_str())
        || records
            .first()
            .and_then(|r| r.get(0))
            .is_some_and(|c| !is_missing(c) && c.trim().parse::<f64>().is_err());
    let first_col = usize::from(skip_first);
    let names: Vec<String> = header[first_col..].to_vec();
    if names.is_empty() {
        return Err(Error::Load {
            row: 1,
            column: header.len(),
            message: "no value columns".into(),
        });
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(records.len()); names.len()];
    for (r, rec) in records.iter().enumerate() {
        let row = r + 2;
        if rec.len() != header.len() {
            return Err(Error::Load {
                row,
                column: rec.len().min(header.len()) + 1,
                message: format!("ragged row: {} cells, header has {}", rec.len(), header.len()),
            });
        }
        for (j, col) in columns.iter_mut().enumerate() {
            let cell = &rec[j + first_col];
            let value = if is_missing(cell) {
                match (opts.missing, col.last()) {
                    (MissingPolicy::ForwardFill, Some(prev)) => *prev,
                    (MissingPolicy::ForwardFill, None) => {
                        return Err(Error::Load {
                            row,
                            column: j + first_col + 1,
                            message: "missing value with nothing to forward-fill from".into(),
                        })
                    }
                    (MissingPolicy::Reject, _) => {
                        return Err(Error::Load {
                            row,
                            column: j + first_col + 1,
                            message: "missing value".into(),
                        })
                    }
                }
            } else {
                cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Load {
                    row,
                    column: j + first_col + 1,
                    message: format!("non-numeric cell `{cell}`"),
                })?
            };
            col.push(value);
        }
    }
    let n = records.len();
    if n < opts.min_rows.max(1) {
        return Err(Error::Load {
            row: n + 1,
            column: 1,
            message: format!("{n} rows, need at least {}", opts.min_rows.max(1)),
        });
    }

    let mut kept_names = Vec::new();
    let mut kept = Vec::new();
    for (j, (name, col)) in names.into_iter().zip(columns).enumerate() {
        let constant = col.iter().all(|v| *v == col[0]);
        match (constant, opts.constant) {
            (true, ConstantPolicy::Reject) => {
                return Err(Error::Load {
                    row: 2,
                    column: j + first_col + 1,
                    message: format!("constant channel `{name}`"),
                })
            }
            (true, ConstantPolicy::Drop) => continue,
            _ => {
                kept_names.push(name);
                kept.push(col);
            }
        }
    }
    if kept.is_empty() {
        return Err(invalid!("every channel of {} was dropped as constant", path.display()));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| kept.iter().map(|c| c[i]).collect()).collect();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    TimeSeriesDataset::new(
        id,
        opts.domain.clone(),
        opts.frequency.clone(),
        kept_names,
        Tensor::from_rows(&rows)?,
        opts.split,
    )
}
