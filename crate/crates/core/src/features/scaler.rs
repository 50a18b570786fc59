use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

const DEGENERATE_STD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleMode {
    /// `(v - mean) / std`
    ZScore,
    /// Training std below 1e-12: `v - mean`.
    CenterOnly,
    /// Occupancy fractions pass through untouched.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleDim {
    pub mean: f64,
    pub std: f64,
    pub mode: ScaleMode,
}

/// Per-dimension standardization fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub dims: Vec<ScaleDim>,
}

impl Scaler {
    /// Fits population mean/std per dimension; dimensions flagged in
    /// `occupancy` are left as they are.
    pub fn fit(train: &[Vec<f64>], occupancy: &[bool]) -> Self {
        assert!(!train.is_empty(), "scaler needs a non-empty training set");
        let d = train[0].len();
        let n = train.len() as f64;
        let dims = (0..d)
            .map(|j| {
                let mean = train.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = train.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
                let std = libm::sqrt(var);
                let mode = if occupancy.get(j).copied().unwrap_or(false) {
                    ScaleMode::Identity
                } else if std < DEGENERATE_STD {
                    ScaleMode::CenterOnly
                } else {
                    ScaleMode::ZScore
                };
                ScaleDim { mean, std, mode }
            })
            .collect();
        Self { dims }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.dims)
            .map(|(x, d)| match d.mode {
                ScaleMode::ZScore => (x - d.mean) / d.std,
                ScaleMode::CenterOnly => x - d.mean,
                ScaleMode::Identity => *x,
            })
            .collect()
    }
}

/// Fits a scaler on `train` and applies it to `apply`.
pub fn standardize(train: &[Vec<f64>], apply: &[Vec<f64>], occupancy: &[bool]) -> (Vec<Vec<f64>>, Scaler) {
    let scaler = Scaler::fit(train, occupancy);
    (apply.iter().map(|v| scaler.apply(v)).collect(), scaler)
}
