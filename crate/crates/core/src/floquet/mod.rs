//! One-period evolution operator `U(lambda)` of the periodic double-kicked
//! rotor, its eigen-decomposition, and Floquet-basis predictions for `<p^2>`.

mod adiabatic;
mod crossings;
mod localization;
mod tracking;

pub use adiabatic::{
    adiabatic_prediction, adiabatic_prediction_at_rate, dynamical_resolution, typical_relative_slope, AdiabaticPrediction,
    RatePrediction,
};
pub use crossings::{
    detect_avoided_crossings, gap_statistics, refine_avoided_crossings, AvoidedCrossing, GapBin,
    GapStatistics, GapStatisticsOptions, LinearFit, weighted_line,
};
pub use localization::{ensemble_localization, localization_length, EnsembleLocalization, LocalizationEstimate};
pub use tracking::{lambda_sweep, LevelTrack, LevelTrackSet, SweepOptions, TrackFlag, TrackPoint, WeightClass};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::{QuantumState, SystemParams};
use crate::propagator::Propagator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FloquetError {
    #[error("operator is not unitary: max |U^dag U - I| = {residual:.3e} exceeds {limit:.0e}")]
    NonUnitary { residual: f64, limit: f64 },
    #[error("Schur decomposition did not converge for a {dim}x{dim} operator")]
    NoConvergence { dim: usize },
    #[error("reference state has {got} components, operator has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("lambda grid must be strictly monotonic with at least {min} points")]
    BadGrid { min: usize },
    #[error("insufficient statistics: {count} avoided crossings, need at least {required}")]
    InsufficientStatistics { count: usize, required: usize },
}

/// Largest tolerated unitarity residual on input to [`diagonalize`].
pub const UNITARITY_LIMIT: f64 = 1e-8;

/// Momentum content of a basis: `m + beta` per basis vector, and whether the
/// lattice closes into a ring (the discrete Fourier pair makes it periodic).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumBasis {
    pub momenta: Vec<f64>,
    pub hbar_eff: f64,
    pub ring: Option<usize>,
}

impl MomentumBasis {
    pub fn of(params: &SystemParams) -> Self {
        Self {
            momenta: params.lattice_momenta(),
            hbar_eff: params.hbar_eff,
            ring: Some(params.dim()),
        }
    }

    /// An open lattice with explicit momenta, used for constructed models.
    pub fn open(momenta: Vec<f64>, hbar_eff: f64) -> Self {
        Self { momenta, hbar_eff, ring: None }
    }

    pub fn dim(&self) -> usize {
        self.momenta.len()
    }

    pub fn p2_diagonal(&self) -> Vec<f64> {
        let h2 = self.hbar_eff * self.hbar_eff;
        self.momenta.iter().map(|q| h2 * q * q).collect()
    }

    /// `<phi| p^2 |phi>` for a column vector.
    pub fn p2_of<'a>(&self, state: impl IntoIterator<Item = &'a Complex64>) -> f64 {
        let h2 = self.hbar_eff * self.hbar_eff;
        state
            .into_iter()
            .zip(&self.momenta)
            .map(|(a, q)| a.norm_sqr() * h2 * q * q)
            .sum()
    }

    /// Momentum centroid in lattice units (circular mean on a ring).
    pub fn centroid<'a>(&self, state: impl IntoIterator<Item = &'a Complex64>) -> f64 {
        match self.ring {
            Some(n) => {
                let mut z = Complex64::new(0.0, 0.0);
                for (i, a) in state.into_iter().enumerate() {
                    z += Complex64::from_polar(a.norm_sqr(), std::f64::consts::TAU * i as f64 / n as f64);
                }
                let slot = (z.arg() / std::f64::consts::TAU * n as f64).rem_euclid(n as f64);
                // slot 0 carries momenta[0]; neighbouring slots differ by one
                self.momenta[0] + slot
            }
            None => {
                let mut w = 0.0;
                let mut s = 0.0;
                for (a, q) in state.into_iter().zip(&self.momenta) {
                    w += a.norm_sqr();
                    s += a.norm_sqr() * q;
                }
                s / w
            }
        }
    }

    /// Distance between two lattice momenta (minimum image on a ring).
    pub fn distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self.ring {
            Some(n) => {
                let n = n as f64;
                let d = d.rem_euclid(n);
                d.min(n - d)
            }
            None => d,
        }
    }
}

/// A parameter-dependent unitary whose eigenvectors live in a momentum basis.
pub trait UnitaryFamily: Sync {
    fn basis(&self) -> &MomentumBasis;
    fn operator(&self, lambda: f64) -> DMatrix<Complex64>;
    fn dim(&self) -> usize {
        self.basis().dim()
    }
}

/// `U(lambda)` of the periodic double-kicked rotor (second kick at phase `lambda`).
pub struct DoubleKickFamily {
    propagator: Propagator,
    basis: MomentumBasis,
}

impl DoubleKickFamily {
    pub fn new(params: &SystemParams) -> Self {
        Self {
            propagator: Propagator::new(params),
            basis: MomentumBasis::of(params),
        }
    }

    pub fn params(&self) -> &SystemParams {
        self.propagator.params()
    }
}

impl UnitaryFamily for DoubleKickFamily {
    fn basis(&self) -> &MomentumBasis {
        &self.basis
    }

    fn operator(&self, lambda: f64) -> DMatrix<Complex64> {
        let params = self.propagator.params();
        let n = params.dim();
        let mut u = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut psi = QuantumState::basis(params, params.site(j));
            self.propagator.period(&mut psi, lambda);
            u.set_column(j, &DVector::from_column_slice(psi.amplitudes()));
        }
        u
    }
}

/// Matrix of one period of the double-kicked rotor; column `j` is the
/// propagated basis state `m_j`.
pub fn build_u(lambda: f64, params: &SystemParams) -> DMatrix<Complex64> {
    DoubleKickFamily::new(params).operator(lambda)
}

/// `max |U^dag U - I|`.
pub fn unitarity_residual(u: &DMatrix<Complex64>) -> f64 {
    let g = u.adjoint() * u;
    let mut r: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            r = r.max((g[(i, j)] - target).norm());
        }
    }
    r
}

/// Eigenphases, eigenstates and reference-state weights of one `U(lambda)`.
#[derive(Debug, Clone)]
pub struct FloquetSpectrum {
    pub lambda: f64,
    /// `epsilon_k` in `[0, 2 pi)`, ascending, with `U phi_k = exp(-i epsilon_k) phi_k`.
    pub eigenphases: Vec<f64>,
    /// Column `k` is `phi_k` in the momentum basis.
    pub eigenstates: DMatrix<Complex64>,
    /// `|<psi0|phi_k>|^2`.
    pub weights: Vec<f64>,
}

impl FloquetSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenphases.len()
    }

    /// `max |U - V diag(exp(-i eps)) V^dag|`.
    pub fn reconstruction_residual(&self, u: &DMatrix<Complex64>) -> f64 {
        let d = DVector::from_iterator(
            self.dim(),
            self.eigenphases.iter().map(|e| Complex64::from_polar(1.0, -e)),
        );
        let rec = &self.eigenstates * DMatrix::from_diagonal(&d) * self.eigenstates.adjoint();
        (rec - u).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |V^dag V - I|`.
    pub fn orthonormality_residual(&self) -> f64 {
        unitarity_residual(&self.eigenstates)
    }

    pub fn set_reference(&mut self, reference: &[Complex64]) {
        self.weights = weights_of(&self.eigenstates, reference);
    }

    /// Expansion coefficients `c_k = <phi_k|psi>`.
    pub fn coefficients(&self, psi: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|k| self.eigenstates.column(k).iter().zip(psi).map(|(a, b)| a.conj() * b).sum())
            .collect()
    }
}

fn weights_of(v: &DMatrix<Complex64>, reference: &[Complex64]) -> Vec<f64> {
    (0..v.ncols())
        .map(|k| {
            let c: Complex64 = v.column(k).iter().zip(reference).map(|(a, b)| a.conj() * b).sum();
            c.norm_sqr()
        })
        .collect()
}

/// Rotates each column so that its largest-modulus component is real positive.
pub(crate) fn fix_gauge(v: &mut DMatrix<Complex64>) {
    for k in 0..v.ncols() {
        let mut col = v.column_mut(k);
        let (mut best, mut idx) = (0.0, 0);
        for (i, z) in col.iter().enumerate() {
            if z.norm_sqr() > best {
                best = z.norm_sqr();
                idx = i;
            }
        }
        let z = col[idx];
        if z.norm() > 0.0 {
            let phase = z.conj() / z.norm();
            col *= phase;
        }
    }
}

/// Eigen-decomposition of a unitary operator through its complex Schur form.
///
/// For a normal matrix the Schur factor is diagonal, so the unitary Schur
/// vectors are the eigenvectors even inside (near-)degenerate clusters.
pub fn diagonalize(u: &DMatrix<Complex64>, lambda: f64, reference: &[Complex64]) -> Result<FloquetSpectrum, FloquetError> {
    let n = u.nrows();
    if reference.len() != n {
        return Err(FloquetError::DimensionMismatch { expected: n, got: reference.len() });
    }
    let residual = unitarity_residual(u);
    if residual > UNITARITY_LIMIT {
        return Err(FloquetError::NonUnitary { residual, limit: UNITARITY_LIMIT });
    }
    let schur = nalgebra::linalg::Schur::try_new(u.clone(), 1e-15, 10_000 * n.max(10))
        .ok_or(FloquetError::NoConvergence { dim: n })?;
    let (q, t) = schur.unpack();
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|k| ((-t[(k, k)].arg()).rem_euclid(std::f64::consts::TAU), k))
        .map(|(e, k)| (if e >= std::f64::consts::TAU { 0.0 } else { e }, k))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut v = DMatrix::zeros(n, n);
    for (col, &(_, k)) in order.iter().enumerate() {
        v.set_column(col, &q.column(k));
    }
    fix_gauge(&mut v);
    let weights = weights_of(&v, reference);
    Ok(FloquetSpectrum {
        lambda,
        eigenphases: order.into_iter().map(|(e, _)| e).collect(),
        eigenstates: v,
        weights,
    })
}

/// Diagonalizes `U(lambda)` of the double-kicked rotor with weights on `psi0`.
pub fn floquet_spectrum(params: &SystemParams, lambda: f64, psi0: &QuantumState) -> Result<FloquetSpectrum, FloquetError> {
    diagonalize(&build_u(lambda, params), lambda, psi0.amplitudes())
}

/// Precomputed pieces of the coherent Floquet sum for one initial state.
#[derive(Debug, Clone)]
pub struct CoherentSeries {
    eigenphases: Vec<f64>,
    coefficients: Vec<Complex64>,
    /// `<phi_k'| p^2 |phi_k>`, row `k'`, column `k`.
    p2_matrix: DMatrix<Complex64>,
}

impl CoherentSeries {
    pub fn new(spectrum: &FloquetSpectrum, psi0: &[Complex64], p2_diagonal: &[f64]) -> Self {
        let v = &spectrum.eigenstates;
        let mut pv = v.clone();
        for (i, p2) in p2_diagonal.iter().enumerate() {
            pv.row_mut(i).scale_mut(*p2);
        }
        Self {
            eigenphases: spectrum.eigenphases.clone(),
            coefficients: spectrum.coefficients(psi0),
            p2_matrix: v.adjoint() * pv,
        }
    }

    /// `Σ_{k,k'} c_k c*_k' exp(-i n (eps_k - eps_k')) <phi_k'|p^2|phi_k>`.
    pub fn p2_at(&self, n: u64) -> f64 {
        let b = DVector::from_iterator(
            self.coefficients.len(),
            self.coefficients
                .iter()
                .zip(&self.eigenphases)
                .map(|(c, e)| c * Complex64::from_polar(1.0, -(n as f64) * e)),
        );
        let pb = &self.p2_matrix * &b;
        b.iter().zip(pb.iter()).map(|(x, y)| x.conj() * y).sum::<Complex64>().re
    }

    /// Diagonal part `Σ_k |c_k|^2 <phi_k|p^2|phi_k>`.
    pub fn incoherent(&self) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c.norm_sqr() * self.p2_matrix[(k, k)].re)
            .sum()
    }
}

/// `<p^2(nT)>` as the coherent double sum over Floquet states.
pub fn p2_floquet_coherent(spectrum: &FloquetSpectrum, psi0: &QuantumState, n: u64, params: &SystemParams) -> f64 {
    CoherentSeries::new(spectrum, psi0.amplitudes(), &params.p2_diagonal()).p2_at(n)
}

/// Incoherent (diagonal) Floquet sum using the spectrum's stored weights.
pub fn p2_floquet_incoherent(spectrum: &FloquetSpectrum, basis: &MomentumBasis) -> f64 {
    (0..spectrum.dim())
        .map(|k| spectrum.weights[k] * basis.p2_of(spectrum.eigenstates.column(k).iter()))
        .sum()
}

/// Circular distance between two phases.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

/// Maps a phase difference into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let y = (x + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if y <= -std::f64::consts::PI {
        y + tau
    } else {
        y
    }
}

#[cfg(test)]
pub(crate) mod testmodels {
    use super::*;

    /// `exp(-i H(lambda))` with `H = s (lambda - lambda_c) sigma_z + (gap / 2) sigma_x`:
    /// one avoided crossing of eigenphase gap `gap` at `lambda_c`.
    pub struct TwoLevelCrossing {
        pub slope: f64,
        pub gap: f64,
        pub center: f64,
        pub offset: f64,
        pub basis: MomentumBasis,
    }

    impl TwoLevelCrossing {
        pub fn new(slope: f64, gap: f64, center: f64) -> Self {
            Self { slope, gap, center, offset: 1.0, basis: MomentumBasis::open(vec![-3.0, 3.0], 1.0) }
        }
    }

    impl UnitaryFamily for TwoLevelCrossing {
        fn basis(&self) -> &MomentumBasis {
            &self.basis
        }

        fn operator(&self, lambda: f64) -> DMatrix<Complex64> {
            let a = self.slope * (lambda - self.center);
            let b = self.gap / 2.0;
            let e = (a * a + b * b).sqrt();
            // exp(-i (offset + H)) for H = a sz + b sx, H^2 = e^2
            let (c, s) = (e.cos(), if e > 0.0 { e.sin() / e } else { 1.0 });
            let ph = Complex64::from_polar(1.0, -self.offset);
            let i = Complex64::new(0.0, 1.0);
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    ph * (c - i * s * a),
                    ph * (-i * s * b),
                    ph * (-i * s * b),
                    ph * (c + i * s * a),
                ],
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_state, p2_expectation, InitialState};

    fn det_modulus(u: &DMatrix<Complex64>) -> f64 {
        u.clone().lu().determinant().norm()
    }

    #[test]
    fn free_operator_is_diagonal() {
        let p = SystemParams::new(0.0, 2.3, 0.17, 16).unwrap();
        let u = build_u(0.3, &p);
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                let q = p.site(i) as f64 + 0.17;
                let want = if i == j { Complex64::from_polar(1.0, -2.3 * q * q / 2.0) } else { Complex64::new(0.0, 0.0) };
                assert!((u[(i, j)] - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn operator_columns_are_propagated_basis_states() {
        let p = SystemParams::new(2.0, 1.0, 0.0, 16).unwrap();
        let u = build_u(0.3, &p);
        let prop = Propagator::new(&p);
        for j in [0usize, 7, 16, 32] {
            let mut psi = QuantumState::basis(&p, p.site(j));
            prop.period(&mut psi, 0.3);
            for i in 0..p.dim() {
                assert_eq!(u[(i, j)], psi.amplitudes()[i]);
            }
        }
        assert!(unitarity_residual(&u) < 1e-10);
    }

    #[test]
    fn determinant_has_unit_modulus() {
        for (k, lambda) in [(0.0, 0.1), (3.0, 0.5), (10.0, 0.77)] {
            let p = SystemParams::new(k, 2.89, 0.0, 24).unwrap();
            let u = build_u(lambda, &p);
            assert!((det_modulus(&u) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn diagonal_input_yields_basis_eigenvectors() {
        let p = SystemParams::new(0.0, 2.3, 0.17, 8).unwrap();
        let psi0 = init_state(&p, InitialState::DeltaAtZero).unwrap();
        let s = floquet_spectrum(&p, 0.4, &psi0).unwrap();
        let mut expected: Vec<f64> = p
            .lattice_momenta()
            .iter()
            .map(|q| (2.3 * q * q / 2.0).rem_euclid(std::f64::consts::TAU))
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in s.eigenphases.iter().zip(&expected) {
            assert!(phase_distance(*a, *b) < 1e-12);
        }
        for k in 0..s.dim() {
            let col = s.eigenstates.column(k);
            let big = col.iter().filter(|z| z.norm() > 1e-12).count();
            assert_eq!(big, 1);
        }
        let w: f64 = s.weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_phases_are_recovered() {
        let theta: f64 = 0.4;
        let r = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(theta.cos(), 0.0),
                Complex64::new(-theta.sin(), 0.0),
                Complex64::new(theta.sin(), 0.0),
                Complex64::new(theta.cos(), 0.0),
            ],
        );
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::from_polar(1.0, -0.3),
            Complex64::from_polar(1.0, -1.7),
        ]));
        let u = &r * d * r.adjoint();
        let s = diagonalize(&u, 0.0, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        assert!((s.eigenphases[0] - 0.3).abs() < 1e-12);
        assert!((s.eigenphases[1] - 1.7).abs() < 1e-12);
        assert!((s.weights[0] - theta.cos().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_unitary_input() {
        let u = DMatrix::from_element(3, 3, Complex64::new(0.5, 0.0));
        let err = diagonalize(&u, 0.0, &[Complex64::new(1.0, 0.0); 3]).unwrap_err();
        assert!(matches!(err, FloquetError::NonUnitary { .. }));
    }

    #[test]
    fn chaotic_spectrum_reconstructs_operator() {
        let p = SystemParams::new(10.0, 2.89, 0.0, 32).unwrap();
        let psi0 = init_state(&p, InitialState::DeltaAtZero).unwrap();
        let u = build_u(0.5, &p);
        let s = diagonalize(&u, 0.5, psi0.amplitudes()).unwrap();
        assert!(s.reconstruction_residual(&u) < 1e-7);
        assert!(s.orthonormality_residual() < 1e-8);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!(s.eigenphases.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.eigenphases.iter().all(|e| (0.0..std::f64::consts::TAU).contains(e)));
        // gauge: largest component real and positive
        for k in 0..s.dim() {
            let col = s.eigenstates.column(k);
            let big = col.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(big.im.abs() < 1e-14 && big.re > 0.0);
        }
    }

    #[test]
    fn coherent_sum_at_zero_is_initial_p2() {
        let p = SystemParams::new(5.0, 2.0, 0.0, 32).unwrap();
        let psi0 = init_state(&p, InitialState::Gaussian { width: 1.5 }).unwrap();
        let s = floquet_spectrum(&p, 0.5, &psi0).unwrap();
        let got = p2_floquet_coherent(&s, &psi0, 0, &p);
        assert!((got - p2_expectation(&psi0, &p)).abs() < 1e-10);
    }

    #[test]
    fn coherent_sum_matches_direct_propagation() {
        let p = SystemParams::new(5.0, 2.0, 0.0, 32).unwrap();
        let psi0 = init_state(&p, InitialState::DeltaAtZero).unwrap();
        let s = floquet_spectrum(&p, 0.5, &psi0).unwrap();
        let series = CoherentSeries::new(&s, psi0.amplitudes(), &p.p2_diagonal());
        let prop = Propagator::new(&p);
        let mut psi = psi0.clone();
        for n in 1..=50u64 {
            prop.period(&mut psi, 0.5);
            let direct = p2_expectation(&psi, &p);
            let floquet = series.p2_at(n);
            assert!(((floquet - direct) / direct).abs() < 1e-8, "n = {n}: {floquet} vs {direct}");
        }
    }

    #[test]
    fn free_rotor_from_zero_momentum_stays_at_zero() {
        let p = SystemParams::new(0.0, 2.89, 0.0, 16).unwrap();
        let psi0 = init_state(&p, InitialState::DeltaAtZero).unwrap();
        let s = floquet_spectrum(&p, 0.5, &psi0).unwrap();
        for n in [0, 1, 10, 100] {
            assert!(p2_floquet_coherent(&s, &psi0, n, &p).abs() < 1e-12);
        }
        assert!(p2_floquet_incoherent(&s, &MomentumBasis::of(&p)).abs() < 1e-12);
    }

    #[test]
    fn incoherent_sum_of_single_floquet_state() {
        let p = SystemParams::new(6.0, 2.0, 0.1, 24).unwrap();
        let psi0 = init_state(&p, InitialState::DeltaAtZero).unwrap();
        let mut s = floquet_spectrum(&p, 0.3, &psi0).unwrap();
        let j = 11;
        let phi: Vec<Complex64> = s.eigenstates.column(j).iter().copied().collect();
        s.set_reference(&phi);
        let basis = MomentumBasis::of(&p);
        let want = basis.p2_of(phi.iter());
        assert!((p2_floquet_incoherent(&s, &basis) - want).abs() < 1e-9 * want);
    }

    #[test]
    fn incoherent_sum_is_long_time_average() {
        let p = SystemParams::new(10.0, 2.89, 0.0, 32).unwrap();
        let psi0 = init_state(&p, InitialState::DeltaAtZero).unwrap();
        let s = floquet_spectrum(&p, 0.5, &psi0).unwrap();
        let series = CoherentSeries::new(&s, psi0.amplitudes(), &p.p2_diagonal());
        let avg = (100..=1100).map(|n| series.p2_at(n)).sum::<f64>() / 1001.0;
        let inc = p2_floquet_incoherent(&s, &MomentumBasis::of(&p));
        assert!((avg - inc).abs() / inc < 0.05, "avg {avg} vs incoherent {inc}");
        assert!((series.incoherent() - inc).abs() < 1e-9 * inc);
    }

    #[test]
    fn ring_centroid_wraps() {
        let basis = MomentumBasis { momenta: (-8..=8).map(|m| m as f64).collect(), hbar_eff: 1.0, ring: Some(17) };
        let mut v = vec![Complex64::new(0.0, 0.0); 17];
        v[0] = Complex64::new(0.5f64.sqrt(), 0.0); // m = -8
        v[16] = Complex64::new(0.5f64.sqrt(), 0.0); // m = 8
        let c = basis.centroid(v.iter());
        assert!((c.abs() - 8.5).abs() < 1e-9, "centroid {c}");
        assert!((basis.distance(-8.0, 8.0) - 1.0).abs() < 1e-12);
        let mut w = vec![Complex64::new(0.0, 0.0); 17];
        w[10] = Complex64::new(1.0, 0.0);
        assert!((basis.centroid(w.iter()) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn phase_wrapping() {
        use std::f64::consts::{PI, TAU};
        assert!((wrap_phase(TAU - 0.1) + 0.1).abs() < 1e-12);
        assert!((phase_distance(0.05, TAU - 0.05) - 0.1).abs() < 1e-12);
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn spectrum_is_a_complete_orthonormal_decomposition(
            k in 0.0f64..12.0,
            beta in 0.0f64..1.0,
            lambda in 0.0f64..1.0,
        ) {
            let p = SystemParams::new(k, 2.89, beta, 10).unwrap();
            let psi0 = init_state(&p, InitialState::DeltaAtZero).unwrap();
            let u = build_u(lambda, &p);
            let spec = floquet_spectrum(&p, lambda, &psi0).unwrap();
            proptest::prop_assert!(spec.reconstruction_residual(&u) < 1e-10);
            proptest::prop_assert!(spec.orthonormality_residual() < 1e-10);
            proptest::prop_assert!((spec.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            proptest::prop_assert!(spec.eigenphases.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
