//! Shortcut analysis: how accuracy varies with the similarity between the
//! gold answer and the entities a question shows.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::Difficulty;
use crate::client::{dot, EmbedError, EmbeddingProvider};

pub const DEFAULT_WINDOW_START: f64 = 0.0;
pub const DEFAULT_WINDOW_STEP: f64 = 0.01;
pub const DEFAULT_WINDOW_WIDTH: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyzeError {
    #[error("no visible entities to compare against")]
    NoVisibleEntities,
    #[error("window step and width must be positive")]
    BadWindow,
    #[error("histogram bin width must be positive")]
    BadBinWidth,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub question_id: String,
    pub mean_similarity: f64,
    pub correct: bool,
    pub depth: usize,
    pub difficulty: Difficulty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x_start: f64,
    pub count: usize,
    /// Absent for empty windows.
    pub accuracy: Option<f64>,
}

/// Mean dot product between the gold label's embedding and each visible
/// label's embedding.
pub fn instance_similarity(
    embedder: &dyn EmbeddingProvider,
    gold_label: &str,
    visible_labels: &[String],
) -> Result<f64, AnalyzeError> {
    if visible_labels.is_empty() {
        return Err(AnalyzeError::NoVisibleEntities);
    }
    let gold = embedder.embed(gold_label)?;
    let mut total = 0.0;
    for v in visible_labels {
        total += dot(&gold, &embedder.embed(v)?);
    }
    Ok(total / visible_labels.len() as f64)
}

/// Window start `k`: `start + k * step`, computed directly so positions do
/// not drift.
pub fn window_start(start: f64, step: f64, k: usize) -> f64 {
    start + k as f64 * step
}

/// Sliding-window accuracy. Windows `[x, x + width]` (closed both ends)
/// start at `start` and advance by `step` while `x` does not exceed the
/// largest similarity. No records, no points.
pub fn accuracy_curve(
    records: &[SimilarityRecord],
    start: f64,
    step: f64,
    width: f64,
) -> Result<Vec<CurvePoint>, AnalyzeError> {
    if !(step > 0.0 && width > 0.0) {
        return Err(AnalyzeError::BadWindow);
    }
    let Some(max) = records.iter().map(|r| r.mean_similarity).reduce(f64::max) else {
        return Ok(Vec::new());
    };
    let mut sorted: Vec<(f64, bool)> = records.iter().map(|r| (r.mean_similarity, r.correct)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = Vec::new();
    let mut k = 0;
    loop {
        let x = window_start(start, step, k);
        if x > max {
            break;
        }
        let hi = x + width;
        let lo_idx = sorted.partition_point(|&(s, _)| s < x);
        let hi_idx = sorted.partition_point(|&(s, _)| s <= hi);
        let window = &sorted[lo_idx..hi_idx.max(lo_idx)];
        let correct = window.iter().filter(|(_, c)| *c).count();
        points.push(CurvePoint {
            x_start: x,
            count: window.len(),
            accuracy: (!window.is_empty()).then(|| correct as f64 / window.len() as f64),
        });
        k += 1;
    }
    Ok(points)
}

/// Counts per half-open bin `[lo + i*w, lo + (i+1)*w)`. The range always
/// covers `[0, 1)` and grows to include every record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub first_bin: i64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn bin_start(&self, i: usize) -> f64 {
        (self.first_bin + i as i64) as f64 * self.bin_width
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn bin_of(x: f64, w: f64) -> i64 {
    libm::floor(x / w) as i64
}

pub fn similarity_histogram(records: &[SimilarityRecord], bin_width: f64) -> Result<Histogram, AnalyzeError> {
    if bin_width.is_nan() || bin_width <= 0.0 {
        return Err(AnalyzeError::BadBinWidth);
    }
    let mut lo = 0i64;
    let mut hi = libm::ceil(1.0 / bin_width) as i64 - 1;
    for r in records {
        let b = bin_of(r.mean_similarity, bin_width);
        lo = lo.min(b);
        hi = hi.max(b);
    }
    let mut counts = alloc::vec![0usize; (hi - lo + 1) as usize];
    for r in records {
        counts[(bin_of(r.mean_similarity, bin_width) - lo) as usize] += 1;
    }
    Ok(Histogram { bin_width, first_bin: lo, counts })
}
