//! Exponential localization length of Floquet states in momentum space.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FloquetSpectrum, MomentumBasis};

/// Populations below this are left out of the fit.
pub const PROFILE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    /// `l` in `|phi(m)|^2 ~ exp(-2 |m - m0| / l)`, lattice units.
    pub length: f64,
    /// Lattice momentum of the largest component.
    pub center: f64,
    pub slope: f64,
    pub r2: f64,
    /// Basis states that entered the fit.
    pub points: usize,
    /// Decay not exponential: poor fit or non-decreasing profile.
    pub non_exponential: bool,
    /// Fewer than three populated sites; the length is the floor value.
    pub degenerate: bool,
}

/// Least-squares fit of `ln |phi|^2` against distance from the peak.
pub fn localization_length(state: &[Complex64], basis: &MomentumBasis) -> LocalizationEstimate {
    let pop: Vec<f64> = state.iter().map(|c| c.norm_sqr()).collect();
    let peak = pop.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let center = basis.momenta[peak];
    let total: f64 = pop.iter().sum();
    let (x, y): (Vec<f64>, Vec<f64>) = pop
        .iter()
        .zip(&basis.momenta)
        .filter(|(p, _)| **p > PROFILE_FLOOR * total)
        .map(|(p, m)| (basis.distance(*m, center), (p / total).ln()))
        .unzip();
    if x.len() < 3 {
        return LocalizationEstimate {
            length: 2.0 / (1.0 / PROFILE_FLOOR).ln(),
            center,
            slope: f64::NAN,
            r2: f64::NAN,
            points: x.len(),
            non_exponential: true,
            degenerate: true,
        };
    }
    match super::crossings::weighted_line(&x, &y, &vec![1.0; x.len()]) {
        Some(fit) => LocalizationEstimate {
            length: -2.0 / fit.slope,
            center,
            slope: fit.slope,
            r2: fit.r2,
            points: x.len(),
            non_exponential: fit.r2 < 0.5 || fit.slope >= 0.0,
            degenerate: false,
        },
        None => LocalizationEstimate {
            length: f64::INFINITY,
            center,
            slope: 0.0,
            r2: 0.0,
            points: x.len(),
            non_exponential: true,
            degenerate: false,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleLocalization {
    /// Mean length over the accepted states.
    pub mean_length: f64,
    pub std_length: f64,
    /// Accepted states (weight above the cut, exponential decay).
    pub count: usize,
    /// States above the weight cut rejected for a non-exponential profile.
    pub rejected: usize,
    pub estimates: Vec<(usize, LocalizationEstimate)>,
}

/// Localization length averaged over the Floquet states whose weight on the
/// reference state exceeds `weight_min`.
pub fn ensemble_localization(spectrum: &FloquetSpectrum, basis: &MomentumBasis, weight_min: f64) -> EnsembleLocalization {
    let estimates: Vec<(usize, LocalizationEstimate)> = (0..spectrum.dim())
        .filter(|&k| spectrum.weights[k] > weight_min)
        .map(|k| {
            let col: Vec<Complex64> = spectrum.eigenstates.column(k).iter().copied().collect();
            (k, localization_length(&col, basis))
        })
        .collect();
    let good: Vec<f64> = estimates.iter().filter(|(_, e)| !e.non_exponential).map(|(_, e)| e.length).collect();
    let n = good.len() as f64;
    let mean = good.iter().sum::<f64>() / n;
    let var = good.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    EnsembleLocalization {
        mean_length: mean,
        std_length: var.sqrt(),
        count: good.len(),
        rejected: estimates.len() - good.len(),
        estimates,
    }
}
