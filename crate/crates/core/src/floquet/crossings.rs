//! Avoided-crossing detection on level tracks, local gap refinement, and
//! gap-size statistics.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{phase_distance, wrap_phase, FloquetError, LevelTrackSet, UnitaryFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvoidedCrossing {
    pub lambda_star: f64,
    /// Minimal eigenphase separation `C`.
    pub gap: f64,
    /// Track indices of the two levels.
    pub level_pair: (usize, usize),
    /// Momentum-centroid distance `L` of the two states on either side of the crossing.
    pub momentum_distance: f64,
    /// Mean eigenphase of the pair at the crossing.
    pub phase_star: f64,
    /// `d(mean phase) / d lambda` of the pair near the crossing.
    pub phase_slope: f64,
    /// Grid interval enclosing the crossing.
    pub bracket: (f64, f64),
    /// The gap was re-measured by local diagonalization.
    pub refined: bool,
    /// Larger instantaneous weight of the two states next to the crossing.
    pub weight: f64,
}

const DIP_TOLERANCE: f64 = 1e-12;

fn circular_mean(a: f64, b: f64) -> f64 {
    (a + 0.5 * wrap_phase(b - a)).rem_euclid(std::f64::consts::TAU)
}

/// Vertex of the parabola through three points, as `(x, y, curvature)`.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64, f64)> {
    let (x0, x1, x2) = (x[0], x[1], x[2]);
    let d01 = (y[1] - y[0]) / (x1 - x0);
    let d12 = (y[2] - y[1]) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a > 0.0) || !a.is_finite() {
        return None;
    }
    let b = d01 - a * (x0 + x1);
    let xv = -b / (2.0 * a);
    let yv = y[1] + (xv - x1) * (d01 + a * (xv - x0));
    Some((xv, yv, a))
}

/// Local minima of the eigenphase distance between tracks that are adjacent
/// in phase.
///
/// At an interior grid point where two tracks are neighbours on the unit
/// circle and their circular distance is smaller than at both adjacent grid
/// points, the squared distance of the three points is fitted by the
/// two-level hyperbola `d^2 = s^2 (lambda - lambda*)^2 + C^2`, which places
/// the crossing and its gap to grid resolution. The momentum distance is
/// the larger centroid separation at the two bracketing points, where the
/// states are least mixed.
pub fn detect_avoided_crossings(tracks: &LevelTrackSet) -> Vec<AvoidedCrossing> {
    let grid = &tracks.lambda_grid;
    let mut out = Vec::new();
    for g in 1..grid.len().saturating_sub(1) {
        let mut alive: Vec<(usize, f64)> = tracks.alive_at(g).into_iter().map(|(i, p)| (i, p.eigenphase)).collect();
        if alive.len() < 2 {
            continue;
        }
        alive.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut pairs = BTreeSet::new();
        for w in alive.windows(2) {
            pairs.insert((w[0].0.min(w[1].0), w[0].0.max(w[1].0)));
        }
        let (first, last) = (alive[0].0, alive[alive.len() - 1].0);
        pairs.insert((first.min(last), first.max(last)));

        for (a, b) in pairs {
            let (ta, tb) = (&tracks.tracks[a], &tracks.tracks[b]);
            let pts = [g - 1, g, g + 1].map(|i| (ta.point_at(i), tb.point_at(i)));
            let Some([(pa0, pb0), (pa1, pb1), (pa2, pb2)]) = pts
                .iter()
                .map(|&(x, y)| x.zip(y))
                .collect::<Option<Vec<_>>>()
                .map(|v| [v[0], v[1], v[2]])
            else {
                continue;
            };
            let d = [
                phase_distance(pa0.eigenphase, pb0.eigenphase),
                phase_distance(pa1.eigenphase, pb1.eigenphase),
                phase_distance(pa2.eigenphase, pb2.eigenphase),
            ];
            // a dip must stand out of round-off; flat pairs are not crossings
            if !(d[1] < d[0] - DIP_TOLERANCE && d[1] <= d[2]) {
                continue;
            }
            let x = [grid[g - 1], grid[g], grid[g + 1]];
            let (lambda_star, gap) = match parabola_vertex(x, d.map(|v| v * v)) {
                Some((xv, yv, _)) => {
                    let (lo, hi) = (x[0].min(x[2]), x[0].max(x[2]));
                    (xv.clamp(lo, hi), yv.clamp(0.0, d[1] * d[1]).sqrt())
                }
                None => (x[1], d[1]),
            };
            let means = [
                circular_mean(pa0.eigenphase, pb0.eigenphase),
                circular_mean(pa1.eigenphase, pb1.eigenphase),
                circular_mean(pa2.eigenphase, pb2.eigenphase),
            ];
            let phase_slope = wrap_phase(means[2] - means[0]) / (x[2] - x[0]);
            let basis_distance = |p: f64, q: f64| match tracks.ring {
                Some(n) => {
                    let n = n as f64;
                    let d = (p - q).abs().rem_euclid(n);
                    d.min(n - d)
                }
                None => (p - q).abs(),
            };
            let momentum_distance = basis_distance(pa0.p_centroid, pb0.p_centroid)
                .max(basis_distance(pa2.p_centroid, pb2.p_centroid));
            out.push(AvoidedCrossing {
                lambda_star,
                gap,
                level_pair: (ta.id, tb.id),
                momentum_distance,
                phase_star: means[1] + phase_slope * (lambda_star - x[1]),
                phase_slope,
                bracket: (x[0].min(x[2]), x[0].max(x[2])),
                refined: false,
                weight: pa1.weight.max(pb1.weight),
            });
        }
    }
    out.sort_by(|a, b| a.lambda_star.total_cmp(&b.lambda_star).then(a.level_pair.cmp(&b.level_pair)));
    out
}

/// Deterministic, generic start vectors for the subspace iteration.
fn start_block(n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, 2, |i, j| {
        let t = (i as f64 + 1.0) * (0.618_033_988_749_895 + 0.414_213_562_373_095 * j as f64);
        Complex64::from_polar(1.0 + 0.5 * (3.1 * t).sin(), std::f64::consts::TAU * t.fract())
    })
}

fn orthonormalize(q: &mut DMatrix<Complex64>) {
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj: Complex64 = q.column(i).iter().zip(q.column(j).iter()).map(|(a, b)| a.conj() * b).sum();
            let ci = q.column(i).into_owned();
            let mut cj = q.column_mut(j);
            cj -= ci * proj;
        }
        let norm = q.column(j).norm();
        q.column_mut(j).unscale_mut(norm);
    }
}

/// Eigenphases of the two eigenvalues of `u` closest to `exp(-i phase)`.
fn pair_near(u: &DMatrix<Complex64>, phase: f64) -> (f64, f64) {
    let n = u.nrows();
    if n == 2 {
        return eigenphases_2x2(u);
    }
    let z = Complex64::from_polar(1.0, -phase);
    let mut shifted = u.clone();
    for i in 0..n {
        shifted[(i, i)] -= z;
    }
    let lu = shifted.lu();
    let mut q = start_block(n);
    orthonormalize(&mut q);
    let mut result = None;
    for _ in 0..80 {
        let Some(y) = lu.solve(&q) else { break };
        q = y;
        orthonormalize(&mut q);
        let h = q.adjoint() * u * &q;
        let res = (u * &q - &q * &h).norm();
        if res < 1e-11 {
            result = Some(eigenphases_2x2(&h));
            break;
        }
    }
    result.unwrap_or_else(|| nearest_pair_dense(u, phase))
}

fn eigenphases_2x2(h: &DMatrix<Complex64>) -> (f64, f64) {
    let tr = h[(0, 0)] + h[(1, 1)];
    let half = (h[(0, 0)] - h[(1, 1)]) * 0.5;
    let disc = (half * half + h[(0, 1)] * h[(1, 0)]).sqrt();
    let (m1, m2) = (tr * 0.5 + disc, tr * 0.5 - disc);
    let tau = std::f64::consts::TAU;
    ((-m1.arg()).rem_euclid(tau), (-m2.arg()).rem_euclid(tau))
}

fn nearest_pair_dense(u: &DMatrix<Complex64>, phase: f64) -> (f64, f64) {
    let schur = nalgebra::linalg::Schur::new(u.clone());
    let t = schur.unpack().1;
    let mut e: Vec<f64> = (0..t.nrows()).map(|k| (-t[(k, k)].arg()).rem_euclid(std::f64::consts::TAU)).collect();
    e.sort_by(|a, b| phase_distance(*a, phase).total_cmp(&phase_distance(*b, phase)));
    (e[0], e[1])
}

fn refine_one<F: UnitaryFamily>(family: &F, ac: &AvoidedCrossing) -> AvoidedCrossing {
    let eval = |lambda: f64, guess: f64| {
        let (a, b) = pair_near(&family.operator(lambda), guess);
        (phase_distance(a, b), circular_mean(a, b))
    };
    let (lo, hi) = ac.bracket;
    let mut center = ac.lambda_star.clamp(lo, hi);
    let mut h = 0.25 * (hi - lo);
    let mut anchor = (center, ac.phase_star);
    let predict = |anchor: (f64, f64), l: f64| anchor.1 + ac.phase_slope * (l - anchor.0);
    let (mut best_l, mut best_d) = (center, eval(center, predict(anchor, center)).0);
    for _ in 0..40 {
        let xs = [center - h, center, center + h];
        let samples = xs.map(|l| eval(l, predict(anchor, l)));
        anchor = (xs[1], samples[1].1);
        for (l, (d, _)) in xs.iter().zip(&samples) {
            if *d < best_d {
                best_d = *d;
                best_l = *l;
            }
        }
        let vertex = parabola_vertex(xs, samples.map(|s| s.0 * s.0));
        let slope = match vertex {
            Some((xv, _, a)) if (xv - center).abs() <= 2.0 * h => {
                center = xv;
                a.sqrt()
            }
            _ => {
                center = best_l;
                0.0
            }
        };
        h *= 0.25;
        if h < 1e-13 || (slope > 0.0 && h * slope < 0.02 * best_d) {
            break;
        }
    }
    let (d, mean) = eval(center, predict(anchor, center));
    if d < best_d {
        best_d = d;
        best_l = center;
    }
    AvoidedCrossing {
        lambda_star: best_l,
        gap: best_d,
        phase_star: if best_l == center { mean } else { ac.phase_star },
        refined: true,
        ..*ac
    }
}

/// Re-measures every crossing whose grid-level gap is below `max_gap` by
/// iterated local parabola fits of the squared gap, each evaluation taking
/// the two eigenvalues of `U(lambda)` nearest the pair's mean phase.
pub fn refine_avoided_crossings<F: UnitaryFamily>(family: &F, crossings: &[AvoidedCrossing], max_gap: f64) -> Vec<AvoidedCrossing> {
    crossings
        .par_iter()
        .map(|ac| if ac.gap < max_gap { refine_one(family, ac) } else { *ac })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStatisticsOptions {
    pub bins_per_decade: usize,
    /// Gap window of the power-law fit; defaults to the smallest gap up to the median.
    pub fit_range: Option<(f64, f64)>,
    pub min_crossings: usize,
}

impl Default for GapStatisticsOptions {
    fn default() -> Self {
        Self { bins_per_decade: 5, fit_range: None, min_crossings: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `count / (total * (hi - lo))`.
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub r2: f64,
    pub n: usize,
}

/// Weighted least-squares line `y = slope x + intercept`.
pub fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<LinearFit> {
    let sw: f64 = w.iter().sum();
    if x.len() < 2 || sw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let syy: f64 = y.iter().zip(w).map(|(c, b)| b * (c - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LinearFit { slope, intercept: my - slope * mx, slope_err: (1.0 / sxx).sqrt(), r2, n: x.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStatistics {
    pub count: usize,
    pub histogram: Vec<GapBin>,
    /// Power-law exponent of the gap density over `fit_range`.
    pub exponent: f64,
    pub exponent_err: f64,
    pub fit_range: (f64, f64),
    /// `ln C` against momentum distance `L`.
    pub gap_vs_distance: Option<LinearFit>,
    /// `-1 / slope` of `ln C` against `L`, when the slope is negative.
    pub implied_localization: Option<f64>,
}

/// Log-binned gap histogram, power-law density exponent, and the trend of
/// `ln C` with momentum distance.
pub fn gap_statistics(crossings: &[AvoidedCrossing], options: &GapStatisticsOptions) -> Result<GapStatistics, FloquetError> {
    let gaps: Vec<f64> = crossings.iter().map(|c| c.gap).filter(|g| *g > 0.0 && g.is_finite()).collect();
    if gaps.len() < options.min_crossings {
        return Err(FloquetError::InsufficientStatistics { count: gaps.len(), required: options.min_crossings });
    }
    let bpd = options.bins_per_decade.max(1) as f64;
    let lmin = gaps.iter().copied().fold(f64::INFINITY, f64::min).log10();
    let lmax = gaps.iter().copied().fold(0.0, f64::max).log10();
    let k0 = (lmin * bpd).floor() as i64;
    let k1 = (lmax * bpd).floor() as i64 + 1;
    let total = gaps.len() as f64;
    let mut histogram: Vec<GapBin> = (k0..k1)
        .map(|k| GapBin { lo: 10f64.powf(k as f64 / bpd), hi: 10f64.powf((k + 1) as f64 / bpd), count: 0, density: 0.0 })
        .collect();
    for g in &gaps {
        let k = ((g.log10() * bpd).floor() as i64 - k0).clamp(0, histogram.len() as i64 - 1) as usize;
        histogram[k].count += 1;
    }
    for b in &mut histogram {
        b.density = b.count as f64 / (total * (b.hi - b.lo));
    }

    let fit_range = options.fit_range.unwrap_or_else(|| {
        let mut sorted = gaps.clone();
        sorted.sort_by(f64::total_cmp);
        (histogram[0].lo, sorted[sorted.len() / 2])
    });
    let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for b in histogram.iter().filter(|b| b.count > 0) {
        let c = (b.lo * b.hi).sqrt();
        if c >= fit_range.0 && c <= fit_range.1 {
            x.push(c.ln());
            y.push(b.density.ln());
            w.push(b.count as f64);
        }
    }
    let fit = weighted_line(&x, &y, &w)
        .filter(|f| f.n >= 3)
        .ok_or(FloquetError::InsufficientStatistics { count: x.len(), required: 3 })?;

    let (lx, ly): (Vec<f64>, Vec<f64>) = crossings
        .iter()
        .filter(|c| c.gap > 0.0)
        .map(|c| (c.momentum_distance, c.gap.ln()))
        .unzip();
    let gap_vs_distance = weighted_line(&lx, &ly, &vec![1.0; lx.len()]);
    let implied_localization = gap_vs_distance.filter(|f| f.slope < 0.0).map(|f| -1.0 / f.slope);
    Ok(GapStatistics {
        count: gaps.len(),
        histogram,
        exponent: fit.slope,
        exponent_err: fit.slope_err,
        fit_range,
        gap_vs_distance,
        implied_localization,
    })
}
