use serde::{Deserialize, Serialize};

use super::SpectroscopyError;

/// Fewer points cannot separate a peak from its wings.
const MIN_POINTS: usize = 7;
/// Fraction of the grid on each side averaged into the far-wing baseline.
const WING_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthReport {
    pub fwhm_r: f64,
    /// `1 / N`.
    pub fourier_width: f64,
    /// `fourier_width / fwhm_r`.
    pub sub_fourier_factor: f64,
    /// `N * fwhm_r / 2`.
    pub delta_lambda: f64,
    pub peak_r: f64,
    pub peak_value: f64,
    pub baseline: f64,
    pub half_level: f64,
    /// Interpolated half-level crossings left and right of the peak.
    pub crossings: (f64, f64),
}

/// Full width at half maximum of a peak above its far-wing baseline.
///
/// The baseline is the mean of the outer tenth of the points on each side;
/// the half level sits midway between it and the global maximum, and both
/// crossings are linearly interpolated. `r` must be sorted ascending.
pub fn measure_width(r: &[f64], p0: &[f64], periods: usize) -> Result<WidthReport, SpectroscopyError> {
    let n = r.len();
    if n != p0.len() || n < MIN_POINTS {
        return Err(SpectroscopyError::WidenGrid { reason: format!("{n} points, at least {MIN_POINTS} needed") });
    }
    if r.windows(2).any(|w| !(w[1] > w[0])) || p0.iter().any(|v| !v.is_finite()) {
        return Err(SpectroscopyError::BadGrid);
    }
    let wing = ((n as f64 * WING_FRACTION).ceil() as usize).max(1);
    let baseline = (p0[..wing].iter().sum::<f64>() + p0[n - wing..].iter().sum::<f64>()) / (2 * wing) as f64;
    let peak = (0..n).max_by(|&a, &b| p0[a].total_cmp(&p0[b])).expect("non-empty");
    let peak_value = p0[peak];
    if !(peak_value > baseline) {
        return Err(SpectroscopyError::WidenGrid { reason: "no peak above the far-wing baseline".into() });
    }
    let half = 0.5 * (peak_value + baseline);
    let interp = |i: usize, j: usize| r[i] + (half - p0[i]) * (r[j] - r[i]) / (p0[j] - p0[i]);
    let left = (wing..=peak).rev().find(|&i| i < peak && p0[i] < half).map(|i| interp(i, i + 1));
    let right = (peak..n - wing).find(|&i| i > peak && p0[i] < half).map(|i| interp(i - 1, i));
    let (Some(lo), Some(hi)) = (left, right) else {
        return Err(SpectroscopyError::WidenGrid {
            reason: "half-maximum crossing not found inside the grid".into(),
        });
    };
    let fwhm_r = hi - lo;
    let fourier_width = 1.0 / periods as f64;
    Ok(WidthReport {
        fwhm_r,
        fourier_width,
        sub_fourier_factor: fourier_width / fwhm_r,
        delta_lambda: 0.5 * periods as f64 * fwhm_r,
        peak_r: r[peak],
        peak_value,
        baseline,
        half_level: half,
        crossings: (lo, hi),
    })
}
