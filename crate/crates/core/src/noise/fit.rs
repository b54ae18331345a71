//! Stretched-exponential decay fits, `C(t) = exp[-(t/T₂)^p]`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchedFit {
    pub t2: f64,
    pub exponent: f64,
}

/// Fits `exp[-(t/T₂)^p]` by linear regression of `ln(-ln C)` on `ln t`.
///
/// Only points with `0.05 < C < 0.95` enter the regression; returns `None`
/// when fewer than two such points exist.
pub fn fit_stretched_exponential(times: &[f64], coherence: &[f64]) -> Option<StretchedFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(coherence)
        .filter(|(t, c)| **t > 0.0 && **c > 0.05 && **c < 0.95)
        .map(|(t, c)| (t.ln(), (-c.ln()).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    if !(exponent > 0.0) {
        return None;
    }
    let intercept = my - exponent * mx;
    Some(StretchedFit {
        t2: (-intercept / exponent).exp(),
        exponent,
    })
}
