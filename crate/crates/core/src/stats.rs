//! Small statistics kit: OLS line fits, Monte Carlo means, medians.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ys` on `xs`. Returns `None` for fewer than two
/// points or a degenerate abscissa.
pub fn ols(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// OLS fit of `log(values)` against `log(depths)`. Non-positive values make
/// the fit undefined.
pub fn loglog_fit(depths: &[usize], values: &[f64]) -> Option<LineFit> {
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let xs: Vec<f64> = depths.iter().map(|l| libm::log(*l as f64)).collect();
    let ys: Vec<f64> = values.iter().map(|v| libm::log(*v)).collect();
    ols(&xs, &ys)
}

/// Sample mean and its standard error (zero for a single sample).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    // shifted by the first sample so that constant data gives exactly zero spread
    let x0 = xs[0];
    let shift = xs.iter().map(|x| x - x0).sum::<f64>() / nf;
    let mean = x0 + shift;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs
        .iter()
        .map(|x| (x - x0 - shift) * (x - x0 - shift))
        .sum::<f64>()
        / (nf - 1.0);
    (mean, libm::sqrt(var / nf))
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let (m, se) = mean_stderr(xs);
    (m, se * libm::sqrt(xs.len() as f64))
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
