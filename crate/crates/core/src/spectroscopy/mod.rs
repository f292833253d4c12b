//! Resonance scans over the period ratio and their analysis: widths,
//! lineshape fits, residual diffusion and cusp tests.

mod cusp;
mod diffusion;
mod lineshape;
mod scan;
mod width;

pub use cusp::{cusp_test, CuspModel, CuspReport};
pub use diffusion::{diffusion_constant, DiffusionReport, DEFAULT_BREAK_HINT};
pub use lineshape::{fit_lineshape, lineshape_p0, lineshape_p2, LineshapeData, LineshapeFit, LineshapeParams};
pub use scan::{lambda0_ensemble, resonance_scan, ResonanceScan, ScanOptions};
pub use width::{measure_width, WidthReport};

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum SpectroscopyError {
    #[error("width measurement needs a wider or denser grid: {reason}")]
    WidenGrid { reason: String },
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("series of length {len} is shorter than {needed} (3x break hint)")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("grid must be non-empty and finite")]
    BadGrid,
    #[error("lineshape fit did not converge: {reason} (residual {})", best.residual)]
    NonConvergence { reason: String, best: Box<LineshapeFit> },
}

/// Mean and sample standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Ordinary least-squares line, `(slope, intercept, r2)`.
pub(crate) fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    crate::floquet::weighted_line(x, y, &vec![1.0; x.len()]).map(|f| (f.slope, f.intercept, f.r2))
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = 0.5 * (i + j) as f64;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    ols(&rx, &ry).map(|(_, _, r2)| {
        let s: f64 = {
            let mx = rx.iter().sum::<f64>() / rx.len() as f64;
            let my = ry.iter().sum::<f64>() / ry.len() as f64;
            rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum()
        };
        r2.sqrt().copysign(s)
    })
    .unwrap_or(f64::NAN)
}
