use serde::{Deserialize, Serialize};

use super::{ols, SpectroscopyError};

/// Break time used when the two-segment fit finds no knee, in periods.
pub const DEFAULT_BREAK_HINT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionReport {
    /// Slope of `<p^2>` per period beyond the break, clipped at zero.
    pub d_quantum: f64,
    /// Slope before clipping.
    pub raw_slope: f64,
    pub clipped: bool,
    pub n_break: f64,
    /// The break came from the hint rather than the two-segment fit.
    pub break_from_hint: bool,
    /// Inclusive period range of the slope fit.
    pub fit_window: (usize, usize),
    pub r2: f64,
}

/// Residual diffusion constant of a `<p^2>` series recorded after periods `1..=len`.
///
/// The break is where the line through the initial growth meets the line
/// through the rest, with the knee chosen by least squares in
/// `[2, len / 3]`; the diffusion constant is the slope over `n > 2 n_break`.
pub fn diffusion_constant(p2: &[f64], break_hint: Option<usize>) -> Result<DiffusionReport, SpectroscopyError> {
    let hint = break_hint.unwrap_or(DEFAULT_BREAK_HINT).max(1);
    let len = p2.len();
    if len < 3 * hint || len < 6 {
        return Err(SpectroscopyError::SeriesTooShort { len, needed: (3 * hint).max(6) });
    }
    let n: Vec<f64> = (1..=len).map(|i| i as f64).collect();
    let sse = |x: &[f64], y: &[f64], (s, c): (f64, f64)| -> f64 { x.iter().zip(y).map(|(a, b)| (b - s * a - c).powi(2)).sum() };

    let mut best: Option<(f64, (f64, f64), (f64, f64))> = None;
    for b in 2..=(len / 3) {
        let (Some(l1), Some(l2)) = (ols(&n[..b], &p2[..b]), ols(&n[b..], &p2[b..])) else { continue };
        let (l1, l2) = ((l1.0, l1.1), (l2.0, l2.1));
        let total = sse(&n[..b], &p2[..b], l1) + sse(&n[b..], &p2[b..], l2);
        if best.as_ref().is_none_or(|(t, _, _)| total < *t) {
            best = Some((total, l1, l2));
        }
    }
    let knee = best.and_then(|(_, (s1, c1), (s2, c2))| {
        let x = (c2 - c1) / (s1 - s2);
        (s1 > s2 && x.is_finite() && x >= 1.0 && x <= len as f64 / 3.0).then_some(x)
    });
    let (n_break, break_from_hint) = match knee {
        Some(x) => (x, false),
        None => (hint as f64, true),
    };
    let start = ((2.0 * n_break).floor() as usize + 1).min(len - 2);
    let (slope, _, r2) = ols(&n[start - 1..], &p2[start - 1..]).expect("at least two points");
    Ok(DiffusionReport {
        d_quantum: slope.max(0.0),
        raw_slope: slope,
        clipped: slope < 0.0,
        n_break,
        break_from_hint,
        fit_window: (start, len),
        r2,
    })
}
