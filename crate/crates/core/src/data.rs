//! Datasets, cutpoint grids and the least-squares pilot fit used for prior
//! calibration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictors and a centered response.
///
/// `x` is stored row-major. The response is centered on construction and the
/// subtracted mean is kept in `y_mean` so fits can be reported on the original
/// scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<f64>,
    n: usize,
    p: usize,
    y: Vec<f64>,
    y_mean: f64,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidData("need at least one observation".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidData(format!(
                "{} predictor rows but {} responses",
                n,
                y.len()
            )));
        }
        let p = rows[0].len();
        if p == 0 {
            return Err(Error::InvalidData("need at least one predictor".into()));
        }
        let mut x = Vec::with_capacity(n * p);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidData(format!(
                    "row {} has {} predictors, expected {}",
                    i,
                    row.len(),
                    p
                )));
            }
            x.extend(row);
        }
        Self::from_flat(x, p, y)
    }

    /// Builds a dataset from a row-major predictor buffer of length `n * p`.
    pub fn from_flat(x: Vec<f64>, p: usize, mut y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 || p == 0 || x.len() != n * p {
            return Err(Error::InvalidData(format!(
                "predictor buffer of length {} does not match n={} p={}",
                x.len(),
                n,
                p
            )));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite predictor at row {} column {}",
                k / p,
                k % p
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite response at row {}", i)));
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        for v in y.iter_mut() {
            *v -= y_mean;
        }
        Ok(Self { x, n, p, y, y_mean })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.p)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Centered response.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    /// Response on its original scale.
    pub fn y_original(&self) -> Vec<f64> {
        self.y.iter().map(|v| v + self.y_mean).collect()
    }

    pub fn y_range(&self) -> (f64, f64) {
        min_max(self.y.iter().copied())
    }
}

pub(crate) fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Candidate split values per predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutpointGrid {
    cuts: Vec<Vec<f64>>,
}

impl CutpointGrid {
    /// Uniform interior grid of `num_cut` points per predictor. Indicator
    /// columns get the single cut 0.5; constant columns get none.
    pub fn build(data: &Dataset, num_cut: usize) -> Result<Self> {
        if num_cut == 0 {
            return Err(Error::InvalidArgument("num_cut must be at least 1".into()));
        }
        let cuts = (0..data.p())
            .map(|j| {
                let (lo, hi) = min_max(data.column(j));
                if lo == hi {
                    Vec::new()
                } else if data.column(j).all(|v| v == 0.0 || v == 1.0) {
                    vec![0.5]
                } else {
                    let step = (hi - lo) / (num_cut + 1) as f64;
                    let mut c: Vec<f64> = (1..=num_cut).map(|k| lo + step * k as f64).collect();
                    // guard against rounding collapsing neighbours on tiny ranges
                    c.dedup();
                    c.retain(|&v| v > lo && v < hi);
                    c
                }
            })
            .collect();
        Ok(Self { cuts })
    }

    pub fn from_cuts(cuts: Vec<Vec<f64>>) -> Result<Self> {
        for (j, c) in cuts.iter().enumerate() {
            if c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "cutpoints for predictor {} are not strictly increasing",
                    j
                )));
            }
        }
        Ok(Self { cuts })
    }

    pub fn num_predictors(&self) -> usize {
        self.cuts.len()
    }

    pub fn cuts(&self, j: usize) -> &[f64] {
        &self.cuts[j]
    }

    pub fn value(&self, j: usize, index: usize) -> f64 {
        self.cuts[j][index]
    }
}

/// Ordinary least squares of the response on an intercept plus all predictors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeastSquaresFit {
    /// Intercept first, then one coefficient per predictor.
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Residual standard error, `sqrt(SSE / (n - rank))`.
    pub residual_sd: f64,
    pub r_squared: f64,
}

impl LeastSquaresFit {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let (n, p) = (data.n(), data.p());
        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { data.row(i)[j - 1] });
        let y_orig = data.y_original();
        let target = DVector::from_column_slice(&y_orig);
        let svd = design.clone().svd(true, true);
        let coef = svd
            .solve(&target, 1e-12)
            .map_err(|e| Error::Calibration(format!("least squares failed: {}", e)))?;
        let max_sv = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > max_sv * 1e-12)
            .count();
        let fitted = &design * &coef;
        let residuals: Vec<f64> = (0..n).map(|i| y_orig[i] - fitted[i]).collect();
        let sse: f64 = residuals.iter().map(|r| r * r).sum();
        let sst: f64 = data.y().iter().map(|v| v * v).sum();
        let dof = if n > rank { n - rank } else { n.max(2) - 1 };
        Ok(Self {
            coefficients: coef.iter().copied().collect(),
            residual_sd: (sse / dof as f64).sqrt(),
            r_squared: if sst > 0.0 { 1.0 - sse / sst } else { 0.0 },
            residuals,
        })
    }
}

/// Per-observation error parameters `(mu_i, sigma_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerObsErrorParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl PerObsErrorParams {
    /// All observations share `(mu, sigma)`.
    pub fn homoscedastic(n: usize, mu: f64, sigma: f64) -> Self {
        Self {
            mu: vec![mu; n],
            sigma: vec![sigma; n],
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma.len() {
            return Err(Error::Invariant("mu and sigma lengths differ".into()));
        }
        if self.mu.iter().any(|v| !v.is_finite()) || self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Invariant("error parameters must be finite with sigma > 0".into()));
        }
        Ok(())
    }
}

/// Sample standard deviation with the `n - 1` divisor.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
