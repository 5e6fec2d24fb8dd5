use crate::error::{Error, Result};

/// Quantile by nearest rank: position `(n - 1) q + 1` (1-based), rounded
/// to the nearest integer, ties going to the lower index.
pub fn quantile<T: Copy>(sorted: &[T], q: f64) -> Result<T> {
    if sorted.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = sorted.len();
    let position = (n - 1) as f64 * q.clamp(0.0, 1.0) + 1.0;
    // absorb representation error in q so exact halves still round down
    let index = (position - 0.5 - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[index - 1])
}

/// The nine marks of a quantile plot.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct QuantileSummary {
    pub min: u64,
    pub p5: u64,
    pub p10: u64,
    pub q1: u64,
    pub median: u64,
    pub q3: u64,
    pub p90: u64,
    pub p95: u64,
    pub max: u64,
    pub n: usize,
}

impl QuantileSummary {
    pub const FRACTIONS: [f64; 9] = [0.0, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 1.0];

    /// Summarizes `values` in any order; `None` when empty.
    pub fn from_values(mut values: Vec<u64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_unstable();
        let q = |f| quantile(&values, f).expect("non-empty");
        Some(QuantileSummary {
            min: q(0.0),
            p5: q(0.05),
            p10: q(0.10),
            q1: q(0.25),
            median: q(0.50),
            q3: q(0.75),
            p90: q(0.90),
            p95: q(0.95),
            max: q(1.0),
            n: values.len(),
        })
    }

    pub fn marks(&self) -> [u64; 9] {
        [
            self.min,
            self.p5,
            self.p10,
            self.q1,
            self.median,
            self.q3,
            self.p90,
            self.p95,
            self.max,
        ]
    }
}
