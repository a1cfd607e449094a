//! Scoring of tile detections, threshold sweeps, timing and the hardware
//! time/energy projection.

mod bench;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, LabelMask};
use crate::pipeline::{EventMap, PipelineError};

pub use bench::{benchmark, benchmark_dataset, peak_rss_bytes, project_hardware, BenchReport, HardwareEstimate, HardwareProjection};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction grid is {rows}x{cols} but labels are {label_rows}x{label_cols}")]
    Dims { rows: usize, cols: usize, label_rows: usize, label_cols: usize },
    #[error("{what} has length {got}, expected {expected}")]
    Length { what: &'static str, expected: usize, got: usize },
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid is not sorted ascending at index {0}")]
    UnsortedGrid(usize),
    #[error("distance {0} is not a finite value")]
    NonFinite(f64),
    #[error("benchmark needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("invalid hardware projection: {0}")]
    InvalidProjection(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn from_predictions(predicted: &[bool], labels: &[bool]) -> Result<Self, MetricsError> {
        if predicted.len() != labels.len() {
            return Err(MetricsError::Length { what: "predictions", expected: labels.len(), got: predicted.len() });
        }
        let mut c = Self::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Scores an event map against the label mask of the same granule.
pub fn confusion(map: &EventMap, labels: &LabelMask) -> Result<ConfusionMatrix, MetricsError> {
    if (map.rows, map.cols) != (labels.rows, labels.cols) || map.tiles.len() != map.rows * map.cols {
        return Err(MetricsError::Dims { rows: map.rows, cols: map.cols, label_rows: labels.rows, label_cols: labels.cols });
    }
    let predicted: Vec<bool> = map.tiles.iter().map(|t| t.predicted).collect();
    let truth: Vec<bool> = map.tiles.iter().map(|t| labels.is_event(t.row, t.col)).collect();
    ConfusionMatrix::from_predictions(&predicted, &truth)
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionMatrix) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0.0) {
        return 0.0;
    }
    // two square roots keep the product of large counts in range
    let denom = (factors[0] * factors[1]).sqrt() * (factors[2] * factors[3]).sqrt();
    (tp * tn - fp * fn_) / denom
}

/// `tp / (tp + fp)`, NaN when nothing was predicted positive.
pub fn precision(c: &ConfusionMatrix) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

/// `tp / (tp + fn)`, NaN when there are no positive labels.
pub fn recall(c: &ConfusionMatrix) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 { f64::NAN } else { num as f64 / den as f64 }
}

/// Summary scores. Undefined ratios are NaN (written as `null`) and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mcc: f64,
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

impl Scores {
    pub fn of(c: &ConfusionMatrix) -> Self {
        let (precision, recall) = (precision(c), recall(c));
        Self { mcc: mcc(c), precision, recall, precision_defined: !precision.is_nan(), recall_defined: !recall.is_nan() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub thresholds: Vec<f64>,
    pub mcc: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub confusion: Vec<ConfusionMatrix>,
    pub argmax_mcc_threshold: f64,
    pub max_mcc: f64,
}

impl SweepResult {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// CSV with one row per threshold.
    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "threshold,tp,fp,tn,fn,precision,recall,mcc")?;
        for i in 0..self.len() {
            let c = &self.confusion[i];
            writeln!(
                out,
                "{:e},{},{},{},{},{:e},{:e},{:e}",
                self.thresholds[i], c.tp, c.fp, c.tn, c.fn_, self.precision[i], self.recall[i], self.mcc[i]
            )?;
        }
        Ok(())
    }
}

/// Evaluates every threshold of an ascending `grid` with `distance > t`
/// classification. Ties for the best MCC go to the smallest threshold.
pub fn sweep(distances: &[f64], labels: &[bool], grid: &[f64]) -> Result<SweepResult, MetricsError> {
    if distances.len() != labels.len() {
        return Err(MetricsError::Length { what: "distances", expected: labels.len(), got: distances.len() });
    }
    if grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[0] <= w[1])) {
        return Err(MetricsError::UnsortedGrid(i + 1));
    }
    if let Some(&d) = distances.iter().find(|d| !d.is_finite()) {
        return Err(MetricsError::NonFinite(d));
    }
    let mut scored: Vec<(f64, bool)> = distances.iter().copied().zip(labels.iter().copied()).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // positives[i] = positive labels among the i smallest distances
    let mut positives = Vec::with_capacity(scored.len() + 1);
    positives.push(0u64);
    for &(_, l) in &scored {
        positives.push(positives.last().unwrap() + u64::from(l));
    }
    let (n, p) = (scored.len() as u64, *positives.last().unwrap());
    let mut out = SweepResult {
        thresholds: grid.to_vec(),
        mcc: Vec::with_capacity(grid.len()),
        precision: Vec::with_capacity(grid.len()),
        recall: Vec::with_capacity(grid.len()),
        confusion: Vec::with_capacity(grid.len()),
        argmax_mcc_threshold: grid[0],
        max_mcc: f64::NEG_INFINITY,
    };
    for &t in grid {
        let below = scored.partition_point(|&(d, _)| d <= t);
        let (neg_pred, pos_in_neg) = (below as u64, positives[below]);
        let c = ConfusionMatrix {
            tp: p - pos_in_neg,
            fp: (n - neg_pred) - (p - pos_in_neg),
            fn_: pos_in_neg,
            tn: neg_pred - pos_in_neg,
        };
        let m = mcc(&c);
        if m > out.max_mcc {
            out.max_mcc = m;
            out.argmax_mcc_threshold = t;
        }
        out.mcc.push(m);
        out.precision.push(precision(&c));
        out.recall.push(recall(&c));
        out.confusion.push(c);
    }
    Ok(out)
}

/// Linearly interpolated percentile of unsorted data, `q` in `[0, 100]`.
pub fn percentile(data: &[f64], q: f64) -> Option<f64> {
    if data.is_empty() {
        return None;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// `points` evenly spaced thresholds from 0 to the 99.9th percentile of the
/// observed distances.
pub fn default_grid(distances: &[f64], points: usize) -> Vec<f64> {
    let top = percentile(distances, 99.9).unwrap_or(0.0).max(0.0);
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points).map(|i| top * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Pools per-granule distances and labels into flat vectors.
pub fn collect_scores(pairs: &[(EventMap, LabelMask)]) -> Result<(Vec<f64>, Vec<bool>), MetricsError> {
    let mut distances = Vec::new();
    let mut labels = Vec::new();
    for (map, mask) in pairs {
        confusion(map, mask)?;
        for t in &map.tiles {
            distances.push(t.distance);
            labels.push(mask.is_event(t.row, t.col));
        }
    }
    Ok((distances, labels))
}

/// Everything `eval`, `sweep` and `bench` report, as one JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Scores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hardware: Option<Vec<(String, HardwareProjection, HardwareEstimate)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<(), MetricsError> {
        let file = fs::File::create(path).map_err(|source| MetricsError::Io { path: path.into(), source })?;
        crate::json::to_writer_exact(file, self).map_err(|source| MetricsError::Json { path: path.into(), source })
    }
}
