use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// L2 penalty of the surrogate fit.
pub const RIDGE_LAMBDA: f64 = 1e-3;

/// Linear surrogate over a subset of interpretable columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub intercept: f64,
    /// `(column, coefficient)`, ordered by decreasing `|coefficient|`.
    pub coefficients: Vec<(usize, f64)>,
    /// Weighted R² on the fitting set.
    pub r2: f64,
}

impl Surrogate {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().map(|&(j, c)| c * row[j]).sum::<f64>()
    }
}

/// Exact for constant `y`, so a flat black box gives exactly zero slopes.
fn weighted_mean(y: &[f64], w: &[f64], sw: f64) -> f64 {
    if y.iter().all(|v| *v == y[0]) {
        return y[0];
    }
    w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw
}

/// Weighted ridge on `columns` of `x`; the intercept is not penalized.
fn ridge(x: &[Vec<f64>], y: &[f64], w: &[f64], columns: &[usize]) -> Result<(f64, Vec<f64>)> {
    let sw: f64 = w.iter().sum();
    let k = columns.len();
    let y_bar = weighted_mean(y, w, sw);
    let x_bar: Vec<f64> = columns.iter().map(|&j| w.iter().zip(x).map(|(w, r)| w * r[j]).sum::<f64>() / sw).collect();
    if k == 0 {
        return Ok((y_bar, vec![]));
    }
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    let mut xc = vec![0.0; k];
    for ((row, &wi), &yi) in x.iter().zip(w).zip(y) {
        for (c, &j) in columns.iter().enumerate() {
            xc[c] = row[j] - x_bar[c];
        }
        let yc = yi - y_bar;
        for r in 0..k {
            let wr = wi * xc[r];
            b[r] += wr * yc;
            for c in r..k {
                a[(r, c)] += wr * xc[c];
            }
        }
    }
    for r in 0..k {
        a[(r, r)] += RIDGE_LAMBDA;
        for c in 0..r {
            a[(r, c)] = a[(c, r)];
        }
    }
    let beta = a.cholesky().ok_or_else(|| Error::Singular("surrogate normal equations".into()))?.solve(&b);
    let coef: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_bar - coef.iter().zip(&x_bar).map(|(c, m)| c * m).sum::<f64>();
    Ok((intercept, coef))
}

/// Weighted ridge surrogate on the `k` columns with the largest
/// `|coefficient|` in a preliminary fit over all `candidates`.
///
/// Ties in magnitude go to the lower column index.
pub fn fit_surrogate(x: &[Vec<f64>], y: &[f64], weights: &[f64], candidates: &[usize], k: usize) -> Result<Surrogate> {
    if x.is_empty() {
        return Err(Error::Empty("surrogate rows"));
    }
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: y.len() });
    }
    if weights.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: weights.len() });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidParameter("surrogate weights must be non-negative with a positive sum".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("black-box output".into()));
    }
    let (_, full) = ridge(x, y, weights, candidates)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| full[b].abs().total_cmp(&full[a].abs()).then(candidates[a].cmp(&candidates[b])));
    let chosen: Vec<usize> = order.iter().take(k).map(|&i| candidates[i]).collect();

    let (intercept, coef) = ridge(x, y, weights, &chosen)?;
    let mut coefficients: Vec<(usize, f64)> = chosen.into_iter().zip(coef).collect();
    coefficients.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));

    let sw: f64 = weights.iter().sum();
    let y_bar = weighted_mean(y, weights, sw);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut fit = Surrogate { intercept, coefficients, r2: 0.0 };
    for ((row, &w), &yi) in x.iter().zip(weights).zip(y) {
        ss_res += w * (yi - fit.predict(row)).powi(2);
        ss_tot += w * (yi - y_bar).powi(2);
    }
    fit.r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(fit)
}
