//! The four similarity measures used for neighbor retrieval.
//!
//! Multivariate DTW is the dependent variant: one warping path shared by all
//! channels, with the Euclidean norm of the row difference as local cost.
//! The accumulated cost is returned as-is (no square root, no path-length
//! normalization).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelStats, Series};
use crate::error::DistanceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Euclidean.
    Ed,
    /// Standardized Euclidean (per-channel training std).
    Sed,
    /// Manhattan.
    Man,
    /// Dependent dynamic time warping.
    Dtw,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::Ed, MetricKind::Sed, MetricKind::Man, MetricKind::Dtw];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Ed => "ed",
            MetricKind::Sed => "sed",
            MetricKind::Man => "man",
            MetricKind::Dtw => "dtw",
        }
    }

    pub fn is_lockstep(self) -> bool {
        self != MetricKind::Dtw
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = DistanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ed" => Ok(MetricKind::Ed),
            "sed" => Ok(MetricKind::Sed),
            "man" => Ok(MetricKind::Man),
            "dtw" => Ok(MetricKind::Dtw),
            _ => Err(DistanceError::UnknownMetric(s.to_string())),
        }
    }
}

/// A configured distance function.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMetric {
    kind: MetricKind,
    dtw_window: Option<usize>,
    stats: Option<ChannelStats>,
}

impl DistanceMetric {
    pub fn euclidean() -> Self {
        Self { kind: MetricKind::Ed, dtw_window: None, stats: None }
    }

    pub fn manhattan() -> Self {
        Self { kind: MetricKind::Man, dtw_window: None, stats: None }
    }

    pub fn standardized(stats: ChannelStats) -> Self {
        Self { kind: MetricKind::Sed, dtw_window: None, stats: Some(stats) }
    }

    /// DTW with an optional Sakoe-Chiba radius (`None` = unconstrained).
    pub fn dtw(window: Option<usize>) -> Self {
        Self { kind: MetricKind::Dtw, dtw_window: window, stats: None }
    }

    /// Generic constructor; SED without statistics is rejected.
    pub fn new(kind: MetricKind, dtw_window: Option<usize>, stats: Option<ChannelStats>) -> Result<Self, DistanceError> {
        if kind == MetricKind::Sed && stats.is_none() {
            return Err(DistanceError::MissingStats);
        }
        Ok(Self { kind, dtw_window: if kind == MetricKind::Dtw { dtw_window } else { None }, stats })
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn dtw_window(&self) -> Option<usize> {
        self.dtw_window
    }

    pub fn stats(&self) -> Option<&ChannelStats> {
        self.stats.as_ref()
    }
}

/// Distance between two series under `metric`.
pub fn distance(a: &Series, b: &Series, metric: &DistanceMetric) -> Result<f64, DistanceError> {
    if a.is_empty() || b.is_empty() {
        return Err(DistanceError::EmptySeries);
    }
    if a.channels() != b.channels() {
        return Err(DistanceError::ChannelMismatch(a.channels(), b.channels()));
    }
    if metric.kind.is_lockstep() && a.len() != b.len() {
        return Err(DistanceError::LengthMismatch(a.len(), b.len()));
    }
    Ok(match metric.kind {
        MetricKind::Ed => a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        MetricKind::Man => a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).sum(),
        MetricKind::Sed => {
            let stats = metric.stats.as_ref().ok_or(DistanceError::MissingStats)?;
            if stats.channels() != a.channels() {
                return Err(DistanceError::ChannelMismatch(stats.channels(), a.channels()));
            }
            let m = a.channels();
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .enumerate()
                .map(|(idx, (x, y))| ((x - y) / stats.divisor(idx % m)).powi(2))
                .sum::<f64>()
                .sqrt()
        }
        MetricKind::Dtw => dtw(a, b, metric.dtw_window),
    })
}

fn row_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Dependent multivariate DTW with two rolling rows.
///
/// Cells with `|i - j| > window` are unreachable. A window narrower than
/// `|t - t'|` leaves the terminal cell unreachable and yields infinity.
fn dtw(a: &Series, b: &Series, window: Option<usize>) -> f64 {
    let (n, m) = (a.len(), b.len());
    let w = window.unwrap_or(usize::MAX);
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr.fill(f64::INFINITY);
        let lo = if i > w { i - w } else { 1 };
        let hi = m.min(i.saturating_add(w));
        let row_a = a.row(i - 1);
        for j in lo..=hi {
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            curr[j] = row_norm(row_a, b.row(j - 1)) + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m]
}

/// Summed per-step Euclidean norm along the diagonal alignment; an upper
/// bound on DTW for equal-length inputs.
pub fn lockstep_path_cost(a: &Series, b: &Series) -> f64 {
    a.rows().zip(b.rows()).map(|(x, y)| row_norm(x, y)).sum()
}
