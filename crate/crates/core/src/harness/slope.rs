//! Least-squares slope fits in log-log space.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlopeError {
    #[error("need at least 3 points for a log-log fit, got {0}")]
    TooFewPoints(usize),
    #[error("log-log fit needs positive finite values, got ({0}, {1})")]
    NonPositive(f64, f64),
    #[error("all abscissae are equal; slope undefined")]
    Degenerate,
}

/// `log err ≈ intercept + slope · log η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_loglog(pairs: &[(f64, f64)]) -> Result<SlopeFit, SlopeError> {
    if pairs.len() < 3 {
        return Err(SlopeError::TooFewPoints(pairs.len()));
    }
    let mut pts = Vec::with_capacity(pairs.len());
    for &(x, y) in pairs {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(SlopeError::NonPositive(x, y));
        }
        pts.push((x.ln(), y.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(SlopeError::Degenerate);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(SlopeFit { slope, intercept, r_squared })
}
