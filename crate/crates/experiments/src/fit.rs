//! Least-squares slopes in log-log coordinates.

use serde::Serialize;

use crate::error::{ExpError, ExpResult};

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `log e = a + p log s`. The standard error is the usual OLS one and
/// vanishes for exact power laws.
pub fn fit_rate(pairs: &[(f64, f64)]) -> ExpResult<RateFit> {
    if pairs.len() < 3 {
        return Err(ExpError::Config(format!(
            "rate fits need at least three points, got {}",
            pairs.len()
        )));
    }
    if let Some(p) = pairs.iter().find(|(s, e)| !(*s > 0.0) || !(*e > 0.0)) {
        return Err(ExpError::Numerics(format!(
            "rate fits need positive scales and errors, got {p:?}"
        )));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ExpError::Numerics("rate fits need distinct scales".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        stderr,
        intercept,
        points: pairs.len(),
    })
}
