//! Distances between measured and simulated signals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Signal of a crane trace that is compared during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    X,
    Theta,
    L,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::X, Signal::Theta, Signal::L];

    pub fn as_str(&self) -> &'static str {
        match self {
            Signal::X => "x",
            Signal::Theta => "theta",
            Signal::L => "l",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    MaxDev,
    Dtw,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rmse, Metric::MaxDev, Metric::Dtw];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::MaxDev => "max_dev",
            Metric::Dtw => "dtw",
        }
    }
}

/// Outcome of one (signal, metric) comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult<T> {
    pub signal: Signal,
    pub metric: Metric,
    pub value: T,
    pub threshold: T,
    pub pass: bool,
}

impl<T: Real> MetricResult<T> {
    pub fn new(signal: Signal, metric: Metric, value: T, threshold: T) -> Self {
        Self {
            signal,
            metric,
            value,
            threshold,
            pass: value <= threshold,
        }
    }
}

fn check_pair<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("sequences must be non-empty"));
    }
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "sequence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Root-mean-square difference of two equal-length sequences.
pub fn rmse<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    check_pair(a, b)?;
    let sum = a
        .iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    Ok((sum / T::from_usize(a.len()).unwrap()).sqrt())
}

/// Largest pointwise absolute difference.
pub fn max_dev<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    check_pair(a, b)?;
    Ok(a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs())))
}

/// Accumulated cost and length of the best alignment ending at a cell.
#[derive(Clone, Copy)]
struct Cell<T> {
    cost: T,
    len: usize,
}

impl<T: Real> Cell<T> {
    const fn unreachable(inf: T) -> Self {
        Self { cost: inf, len: 0 }
    }

    /// Lower cost wins; equal costs prefer the longer path.
    fn better(self, other: Self) -> Self {
        if other.cost < self.cost || (other.cost == self.cost && other.len > self.len) {
            other
        } else {
            self
        }
    }
}

/// Dynamic time warping distance with a Sakoe-Chiba band.
///
/// Cell `(i, j)` is admissible when `|i - j| <= band`. The optimal alignment
/// minimizes the accumulated absolute difference; among equal-cost
/// alignments the longest is taken. The result is that alignment's cost
/// divided by its number of matched pairs.
pub fn dtw<T: Real>(a: &[T], b: &[T], band: usize) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("sequences must be non-empty"));
    }
    if band < a.len().abs_diff(b.len()) {
        return Err(Error::domain(format!(
            "band {band} narrower than length difference {}",
            a.len().abs_diff(b.len())
        )));
    }

    let (n, m) = (a.len(), b.len());
    let inf = T::infinity();
    let mut prev = vec![Cell::unreachable(inf); m];
    let mut curr = vec![Cell::unreachable(inf); m];

    for i in 0..n {
        let lo = i.saturating_sub(band);
        let hi = (i + band).min(m - 1);
        curr.fill(Cell::unreachable(inf));
        for j in lo..=hi {
            let local = (a[i] - b[j]).abs();
            let best = if i == 0 && j == 0 {
                Cell { cost: T::zero(), len: 0 }
            } else {
                let mut best = Cell::unreachable(inf);
                if i > 0 {
                    best = best.better(prev[j]);
                }
                if j > 0 {
                    best = best.better(curr[j - 1]);
                }
                if i > 0 && j > 0 {
                    best = best.better(prev[j - 1]);
                }
                best
            };
            if best.cost.is_finite() {
                curr[j] = Cell {
                    cost: best.cost + local,
                    len: best.len + 1,
                };
            }
        }
        std::mem::swap(&mut prev, &mut curr);
    }

    let end = prev[m - 1];
    Ok(end.cost / T::from_usize(end.len).unwrap())
}
