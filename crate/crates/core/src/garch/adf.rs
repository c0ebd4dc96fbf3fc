use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Asymptotic critical values for the constant-only specification at the
/// 1%, 5% and 10% levels.
pub const ADF_CRITICAL_VALUES: [(f64, f64); 3] = [(0.01, -3.43), (0.05, -2.86), (0.10, -2.57)];

const MIN_LEN: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct AdfResult {
    /// t-ratio of the lagged-level coefficient.
    pub statistic: f64,
    pub lags: usize,
    pub nobs: usize,
    pub reject_1pct: bool,
    pub reject_5pct: bool,
    pub reject_10pct: bool,
}

impl AdfResult {
    /// Rejection of a unit root at `level` (one of 0.01, 0.05, 0.10).
    pub fn rejects_at(&self, level: f64) -> Option<bool> {
        ADF_CRITICAL_VALUES.iter().find(|(l, _)| (*l - level).abs() < 1e-12).map(|(_, cv)| self.statistic < *cv)
    }
}

/// `floor(12 (n / 100)^(1/4))`
pub fn schwert_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Augmented Dickey-Fuller test with a constant and the Schwert lag count.
pub fn adf_test(x: &[f64]) -> Result<AdfResult> {
    adf_test_with_lags(x, schwert_lags(x.len()))
}

/// Regresses `Δx_t` on `1, x_{t-1}, Δx_{t-1}, …, Δx_{t-lags}` by least
/// squares.
pub fn adf_test_with_lags(x: &[f64], lags: usize) -> Result<AdfResult> {
    if x.len() < MIN_LEN {
        return Err(Error::TooShort { needed: MIN_LEN, actual: x.len() });
    }
    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // dx[t-1] = x[t] - x[t-1]; equations for t = lags+1 ..= n-1.
    let first = lags + 1;
    let nobs = x.len().saturating_sub(first);
    let ncols = 2 + lags;
    if nobs <= ncols {
        return Err(Error::TooShort { needed: first + ncols + 1, actual: x.len() });
    }
    let mut design = DMatrix::<f64>::zeros(nobs, ncols);
    let mut y = DVector::<f64>::zeros(nobs);
    for (row, t) in (first..x.len()).enumerate() {
        y[row] = dx[t - 1];
        design[(row, 0)] = 1.0;
        design[(row, 1)] = x[t - 1];
        for i in 1..=lags {
            design[(row, 1 + i)] = dx[t - 1 - i];
        }
    }
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * &y;
    let chol = xtx.cholesky().ok_or_else(|| Error::Singular("ADF regression design is rank deficient".into()))?;
    let beta = chol.solve(&xty);
    let resid = &y - &design * &beta;
    let dof = (nobs - ncols) as f64;
    let s2 = resid.norm_squared() / dof;
    let inv = chol.inverse();
    let se = (s2 * inv[(1, 1)]).sqrt();
    if !(se.is_finite() && se > 0.0) {
        return Err(Error::Singular("zero residual variance in ADF regression".into()));
    }
    let statistic = beta[1] / se;
    Ok(AdfResult {
        statistic,
        lags,
        nobs,
        reject_1pct: statistic < ADF_CRITICAL_VALUES[0].1,
        reject_5pct: statistic < ADF_CRITICAL_VALUES[1].1,
        reject_10pct: statistic < ADF_CRITICAL_VALUES[2].1,
    })
}
