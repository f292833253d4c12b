//! Adiabatic-following prediction of `<p^2>` along a lambda sweep.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{diagonalize, lambda_sweep, wrap_phase, FloquetError, SweepOptions, UnitaryFamily};

/// Finite-difference step for eigenphase slopes.
const SLOPE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticPrediction {
    pub lambda0: f64,
    pub lambda_final: f64,
    /// `sum_k w_k(lambda0) <phi_k(lambda_f)|p^2|phi_k(lambda_f)>`.
    pub p2: f64,
    /// Weight carried by tracks that broke before `lambda_f`.
    pub broken_weight: f64,
    /// Ids of broken tracks evaluated at their last point.
    pub broken_tracks: Vec<usize>,
    /// No broken track carries a visible weight.
    pub valid: bool,
}

/// Each Floquet state keeps the weight it had at `lambda0` and contributes
/// its `<p^2>` at `lambda_final`, following the tracks of a `points`-point sweep.
pub fn adiabatic_prediction<F: UnitaryFamily>(
    family: &F,
    lambda0: f64,
    lambda_final: f64,
    points: usize,
    psi0: &[Complex64],
    options: &SweepOptions,
) -> Result<AdiabaticPrediction, FloquetError> {
    if lambda_final == lambda0 {
        let spectrum = diagonalize(&family.operator(lambda0), lambda0, psi0)?;
        let basis = family.basis();
        let p2 = (0..spectrum.dim())
            .map(|k| spectrum.weights[k] * basis.p2_of(spectrum.eigenstates.column(k).iter()))
            .sum();
        return Ok(AdiabaticPrediction {
            lambda0,
            lambda_final,
            p2,
            broken_weight: 0.0,
            broken_tracks: Vec::new(),
            valid: true,
        });
    }
    let n = points.max(2);
    let grid: Vec<f64> = (0..n).map(|i| lambda0 + (lambda_final - lambda0) * i as f64 / (n - 1) as f64).collect();
    let set = lambda_sweep(family, &grid, psi0, options)?;
    let (mut p2, mut broken_weight, mut broken_tracks) = (0.0, 0.0, Vec::new());
    for t in set.tracks.iter().filter(|t| t.start == 0) {
        p2 += t.frozen_weight * t.last().p2;
        if t.broken {
            broken_weight += t.frozen_weight;
            broken_tracks.push(t.id);
        }
    }
    let valid = set
        .tracks
        .iter()
        .filter(|t| t.start == 0 && t.broken)
        .all(|t| t.frozen_weight <= options.thin_weight);
    Ok(AdiabaticPrediction { lambda0, lambda_final, p2, broken_weight, broken_tracks, valid })
}

/// Median `|d(eps_a - eps_b)/d lambda|` over phase-neighbouring pairs whose
/// members both carry weight `>= weight_min`, pooled over `lambdas`.
pub fn typical_relative_slope<F: UnitaryFamily>(
    family: &F,
    lambdas: &[f64],
    psi0: &[Complex64],
    weight_min: f64,
) -> Result<Option<f64>, FloquetError> {
    let per: Vec<Result<Vec<f64>, FloquetError>> = lambdas
        .par_iter()
        .map(|&l| {
            let a = diagonalize(&family.operator(l), l, psi0)?;
            let b = diagonalize(&family.operator(l + SLOPE_STEP), l + SLOPE_STEP, psi0)?;
            let heavy: Vec<(f64, f64)> = (0..a.dim())
                .filter(|&k| a.weights[k] >= weight_min)
                .map(|k| {
                    let v = a.eigenstates.column(k);
                    let j = (0..b.dim())
                        .max_by(|&x, &y| v.dotc(&b.eigenstates.column(x)).norm().total_cmp(&v.dotc(&b.eigenstates.column(y)).norm()))
                        .expect("non-empty spectrum");
                    (a.eigenphases[k], wrap_phase(b.eigenphases[j] - a.eigenphases[k]) / SLOPE_STEP)
                })
                .collect();
            // eigenphases are ascending, so consecutive heavy states are phase neighbours
            let mut rel: Vec<f64> = heavy.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
            if heavy.len() > 2 {
                rel.push((heavy[0].1 - heavy[heavy.len() - 1].1).abs());
            }
            Ok(rel)
        })
        .collect();
    let mut all = Vec::new();
    for r in per {
        all.extend(r?);
    }
    if all.is_empty() {
        return Ok(None);
    }
    all.sort_by(f64::total_cmp);
    let n = all.len();
    Ok(Some(if n % 2 == 1 { all[n / 2] } else { 0.5 * (all[n / 2 - 1] + all[n / 2]) }))
}

/// Smallest lambda scale the dynamics resolves when it moves through lambda at
/// `rate` per period: the mixing width `C / s` of the crossing whose diabatic
/// passage probability `exp(-pi C^2 / (2 s rate))` is one half. Narrower
/// crossings are passed diabatically.
pub fn dynamical_resolution(rate: f64, relative_slope: f64) -> f64 {
    (2.0 * std::f64::consts::LN_2 * rate.abs() / (std::f64::consts::PI * relative_slope)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub prediction: AdiabaticPrediction,
    pub relative_slope: f64,
    pub resolution: f64,
    pub points: usize,
}

/// [`adiabatic_prediction`] for `periods` periods of a drive that advances
/// lambda by `rate` per period. The tracks are followed on a grid no finer
/// than [`dynamical_resolution`], so crossings the dynamics cannot resolve are
/// continued diabatically instead of adiabatically.
pub fn adiabatic_prediction_at_rate<F: UnitaryFamily>(
    family: &F,
    lambda0: f64,
    rate: f64,
    periods: usize,
    psi0: &[Complex64],
    options: &SweepOptions,
) -> Result<RatePrediction, FloquetError> {
    let lambda_final = lambda0 + rate * periods as f64;
    let samples: Vec<f64> = (0..5).map(|i| lambda0 + (lambda_final - lambda0) * i as f64 / 4.0).collect();
    let slope = typical_relative_slope(family, &samples, psi0, options.thick_weight)?.filter(|s| *s > 0.0);
    let span = (lambda_final - lambda0).abs();
    let resolution = slope.map_or(span, |s| dynamical_resolution(rate, s));
    let points = ((span / resolution).round() as usize).max(1) + 1;
    let step = span / (points - 1) as f64;
    let opts = SweepOptions { step_floor: step, ..options.clone() };
    Ok(RatePrediction {
        prediction: adiabatic_prediction(family, lambda0, lambda_final, points, psi0, &opts)?,
        relative_slope: slope.unwrap_or(0.0),
        resolution,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::testmodels::TwoLevelCrossing;
    use crate::floquet::{floquet_spectrum, p2_floquet_incoherent, DoubleKickFamily, MomentumBasis};
    use crate::model::{init_state, InitialState, SystemParams};

    #[test]
    fn no_sweep_gives_incoherent_sum() {
        let p = SystemParams::new(5.0, 2.89, 0.3, 24).unwrap();
        let psi0 = init_state(&p, InitialState::DeltaAtZero).unwrap();
        let family = DoubleKickFamily::new(&p);
        let pred = adiabatic_prediction(&family, 0.5, 0.5, 10, psi0.amplitudes(), &SweepOptions::default()).unwrap();
        let spectrum = floquet_spectrum(&p, 0.5, &psi0).unwrap();
        let inc = p2_floquet_incoherent(&spectrum, &MomentumBasis::of(&p));
        assert!((pred.p2 - inc).abs() < 1e-10 * inc.max(1.0));
        assert!(pred.valid);
    }

    #[test]
    fn free_rotor_prediction_is_initial_value() {
        let p = SystemParams::new(0.0, 2.89, 0.2, 12).unwrap();
        let psi0 = init_state(&p, InitialState::Gaussian { width: 2.0 }).unwrap();
        let family = DoubleKickFamily::new(&p);
        let pred = adiabatic_prediction(&family, 0.1, 0.9, 9, psi0.amplitudes(), &SweepOptions::default()).unwrap();
        let direct = crate::model::p2_expectation(&psi0, &p);
        assert!((pred.p2 - direct).abs() < 1e-10 * direct);
        assert!(pred.valid && pred.broken_tracks.is_empty());
    }

    #[test]
    fn resolved_crossing_transfers_population() {
        // following a resolved crossing swaps the momentum character
        let mut model = TwoLevelCrossing::new(1.0, 0.05, 0.5);
        model.basis = MomentumBasis::open(vec![1.0, 3.0], 1.0);
        let psi0 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let before = adiabatic_prediction(&model, 0.2, 0.2, 2, &psi0, &SweepOptions::default()).unwrap();
        let after = adiabatic_prediction(&model, 0.2, 0.8, 121, &psi0, &SweepOptions::default()).unwrap();
        let basis = &model.basis;
        let (p2a, p2b) = (basis.momenta[0].powi(2), basis.momenta[1].powi(2));
        assert!((before.p2 - p2a).abs() < 0.05 * (p2a - p2b).abs());
        assert!((after.p2 - p2b).abs() < 0.05 * (p2a - p2b).abs());
        assert!(after.valid);
    }
}
