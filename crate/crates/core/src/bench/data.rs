use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::numkit::{mean, std_dev, streams, Matrix, Rng};

/// Inputs and targets in original units.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(VipError::dim("dataset", format!("{} input rows, {} targets", x.rows(), y.len())));
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { x: self.x.select_rows(idx), y: idx.iter().map(|&i| self.y[i]).collect() }
    }
}

/// Column means and standard deviations fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardization {
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Standardization {
    /// Rejects constant columns and constant targets.
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.len() < 2 {
            return Err(VipError::Data(format!("need at least 2 rows to standardize, got {}", data.len())));
        }
        let mut feature_means = Vec::with_capacity(data.dim());
        let mut feature_stds = Vec::with_capacity(data.dim());
        for j in 0..data.dim() {
            let col = data.x.col_vec(j);
            let sd = std_dev(&col);
            if !(sd > 0.0) {
                return Err(VipError::Data(format!("feature column {} is constant", j + 1)));
            }
            feature_means.push(mean(&col));
            feature_stds.push(sd);
        }
        let target_std = std_dev(&data.y);
        if !(target_std > 0.0) {
            return Err(VipError::Data("target column is constant".into()));
        }
        Ok(Standardization { feature_means, feature_stds, target_mean: mean(&data.y), target_std })
    }

    /// Leaves data unchanged.
    pub fn identity(dim: usize) -> Self {
        Standardization { feature_means: vec![0.0; dim], feature_stds: vec![1.0; dim], target_mean: 0.0, target_std: 1.0 }
    }

    pub fn inputs(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.feature_means.len() {
            return Err(VipError::dim("standardize", format!("{} columns, expected {}", x.cols(), self.feature_means.len())));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - self.feature_means[j]) / self.feature_stds[j]))
    }

    pub fn targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.target_mean) / self.target_std).collect()
    }

    pub fn restore_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.target_std + self.target_mean).collect()
    }

    pub fn dataset(&self, data: &Dataset) -> Result<Dataset> {
        Dataset::new(self.inputs(&data.x)?, self.targets(&data.y))
    }
}

/// Reads a comma-separated file whose last column is the target.
pub fn load_csv(path: &Path, has_header: bool) -> Result<Dataset> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    parse_csv(&text, has_header)
}

/// True when no cell of the first line parses as a number.
pub fn sniff_header(text: &str) -> bool {
    match text.lines().find(|l| !l.trim().is_empty()) {
        Some(line) => line.split(',').all(|c| c.trim().parse::<f64>().is_err()),
        None => false,
    }
}

/// Parses CSV text; row and column numbers in errors are 1-based and count
/// the header line.
pub fn parse_csv(text: &str, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let line = k + 1;
        let record = record.map_err(|e| VipError::Parse { row: line, col: 0, msg: e.to_string() })?;
        if k == 0 && has_header {
            continue;
        }
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(VipError::Parse {
                    row: line,
                    col: record.len().min(w) + 1,
                    msg: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| VipError::Parse {
                row: line,
                col: j + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(VipError::Parse { row: line, col: j + 1, msg: format!("non-finite value {cell:?}") });
            }
            row.push(v);
        }
        rows.push(row);
    }
    let w = match width {
        Some(w) if !rows.is_empty() => w,
        _ => return Err(VipError::Parse { row: 0, col: 0, msg: "no data rows".into() }),
    };
    if w < 2 {
        return Err(VipError::Parse { row: 1, col: 1, msg: "need at least one input column and a target".into() });
    }
    let n = rows.len();
    let x = Matrix::from_fn(n, w - 1, |i, j| rows[i][j]);
    let y = rows.iter().map(|r| r[w - 1]).collect();
    Dataset::new(x, y)
}

/// Writes rows as CSV with a header line.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(header).map_err(csv_io)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v}"))).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> VipError {
    VipError::Io(std::io::Error::other(e.to_string()))
}

/// Random train/test partition of `n` row indices; both parts are sorted.
pub fn split(n: usize, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(VipError::Parameter(format!("train_frac must lie in (0, 1), got {train_frac}")));
    }
    if n < 2 {
        return Err(VipError::Parameter(format!("cannot split {n} rows")));
    }
    let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
    let perm = Rng::new(seed, streams::SPLIT).permutation(n);
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Removes `n_segments` non-overlapping runs of `segment_len` consecutive
/// rows as the test set.
pub fn interp_split(n: usize, n_segments: usize, segment_len: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let removed = n_segments * segment_len;
    if n_segments == 0 || segment_len == 0 {
        return Err(VipError::Parameter("need at least one segment of positive length".into()));
    }
    if removed >= n {
        return Err(VipError::Parameter(format!(
            "{n_segments} segments of length {segment_len} do not fit in {n} rows"
        )));
    }
    let free = n - removed;
    let mut rng = Rng::new(seed, streams::SPLIT);
    let mut offsets: Vec<usize> = (0..n_segments).map(|_| rng.below(free + 1)).collect();
    offsets.sort_unstable();
    let mut in_test = vec![false; n];
    for (k, off) in offsets.iter().enumerate() {
        let start = off + k * segment_len;
        in_test[start..start + segment_len].iter_mut().for_each(|t| *t = true);
    }
    let train = (0..n).filter(|&i| !in_test[i]).collect();
    let test = (0..n).filter(|&i| in_test[i]).collect();
    Ok((train, test))
}

/// How the noise level of the toy data is read.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum NoiseLevel {
    Variance(f64),
    Std(f64),
}

impl NoiseLevel {
    pub fn std(&self) -> f64 {
        match *self {
            NoiseLevel::Variance(v) => v.sqrt(),
            NoiseLevel::Std(s) => s,
        }
    }
}

impl Default for NoiseLevel {
    fn default() -> Self {
        NoiseLevel::Variance(0.1)
    }
}

pub fn toy_function(x: f64) -> f64 {
    (5.0 * x).cos() / (x.abs() + 1.0)
}

/// `n` inputs from `N(0, 1)` with targets `cos(5x)/(|x|+1) + ε`.
pub fn synth_toy(n: usize, seed: u64, noise: NoiseLevel) -> Result<Dataset> {
    if n == 0 {
        return Err(VipError::Parameter("n must be at least 1".into()));
    }
    let sd = noise.std();
    if !(sd >= 0.0 && sd.is_finite()) {
        return Err(VipError::Parameter(format!("noise level must be non-negative, got {sd}")));
    }
    let mut rng = Rng::new(seed, streams::SYNTH);
    let xs = rng.standard_normal(n);
    let y = xs.iter().map(|&x| toy_function(x) + sd * rng.next_normal()).collect();
    Dataset::new(Matrix::column(&xs), y)
}

/// `k` evenly spaced points on `[lo, hi]` with noiseless targets.
pub fn toy_grid(k: usize, lo: f64, hi: f64) -> Dataset {
    let xs: Vec<f64> = if k == 1 { vec![lo] } else { (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect() };
    let y = xs.iter().map(|&x| toy_function(x)).collect();
    Dataset { x: Matrix::column(&xs), y }
}
