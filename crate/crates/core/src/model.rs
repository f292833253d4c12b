//! Dimensionless model of the doubly-kicked rotor: parameters, drive
//! schedule, momentum-lattice states and the basic observables.
//!
//! Time is measured in units of the base kick period `T`. Over a time
//! fraction `tau` the free evolution multiplies the amplitude on lattice site
//! `m` by `exp(-i kbar (m + beta)^2 tau / 2)`, and an ideal kick of strength
//! `K` multiplies the angle-representation wavefunction by
//! `exp(-i (K / kbar) cos theta)`. Physical momentum is `p = kbar (m + beta)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
        value: f64,
    },
    #[error("gaussian width must be positive (got {0})")]
    InvalidWidth(f64),
}

fn check(ok: bool, name: &'static str, reason: &'static str, value: f64) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, reason, value })
    }
}

/// Reduced Planck constant, J s.
const HBAR_SI: f64 = 1.054_571_817e-34;
/// Cesium-133 atomic mass, kg.
const CESIUM_MASS_KG: f64 = 132.905_451_961 * 1.660_539_066_60e-27;
/// Cesium D2 line vacuum wavelength, m.
const CESIUM_D2_WAVELENGTH_M: f64 = 852.347_275_82e-9;
/// Base kick period of the reference cesium experiment, microseconds.
pub const REFERENCE_PERIOD_US: f64 = 27.8;

/// Recoil angular frequency `hbar k_L^2 / 2m` of cesium on the D2 line.
pub fn cesium_recoil_angular_frequency() -> f64 {
    let k = 2.0 * std::f64::consts::PI / CESIUM_D2_WAVELENGTH_M;
    HBAR_SI * k * k / (2.0 * CESIUM_MASS_KG)
}

/// Effective Planck constant `8 omega_recoil T` of a standing-wave kicked
/// cesium rotor with period `period_us` microseconds.
pub fn cesium_hbar_eff(period_us: f64) -> f64 {
    8.0 * cesium_recoil_angular_frequency() * period_us * 1e-6
}

/// Physical and numerical parameters of the rotor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Dimensionless kick strength `K`.
    pub kick_strength: f64,
    /// Effective Planck constant `kbar`.
    pub hbar_eff: f64,
    /// Quasimomentum `beta` in `[0, 1)`.
    pub quasimomentum: f64,
    /// Lattice half-width `M`: sites `m` run over `[-M, M]`.
    pub half_width: usize,
    /// Kick duration as a fraction of `T`; zero means delta kicks.
    pub pulse_width: f64,
    /// Trotter slices per finite-duration kick.
    pub substeps: usize,
}

impl SystemParams {
    pub fn new(kick_strength: f64, hbar_eff: f64, quasimomentum: f64, half_width: usize) -> Result<Self, ModelError> {
        let params = Self {
            kick_strength,
            hbar_eff,
            quasimomentum,
            half_width,
            pulse_width: 0.0,
            substeps: 8,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_pulse(mut self, pulse_width: f64, substeps: usize) -> Result<Self, ModelError> {
        self.pulse_width = pulse_width;
        self.substeps = substeps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_kick_strength(&self, kick_strength: f64) -> Result<Self, ModelError> {
        let mut p = self.clone();
        p.kick_strength = kick_strength;
        p.validate()?;
        Ok(p)
    }

    pub fn with_quasimomentum(&self, beta: f64) -> Result<Self, ModelError> {
        let mut p = self.clone();
        p.quasimomentum = beta;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.kick_strength >= 0.0, "kick_strength", "must be >= 0", self.kick_strength)?;
        check(self.hbar_eff > 0.0, "hbar_eff", "must be > 0", self.hbar_eff)?;
        check(
            (0.0..1.0).contains(&self.quasimomentum),
            "quasimomentum",
            "must lie in [0, 1)",
            self.quasimomentum,
        )?;
        check(self.half_width >= 8, "half_width", "must be >= 8", self.half_width as f64)?;
        check(
            (0.0..0.5).contains(&self.pulse_width),
            "pulse_width",
            "must lie in [0, 0.5)",
            self.pulse_width,
        )?;
        check(self.substeps >= 1, "substeps", "must be >= 1", self.substeps as f64)?;
        Ok(())
    }

    /// Number of lattice sites, `2M + 1`.
    pub fn dim(&self) -> usize {
        2 * self.half_width + 1
    }

    /// Lattice index `m` of storage slot `i`.
    pub fn site(&self, i: usize) -> i64 {
        i as i64 - self.half_width as i64
    }

    /// Momentum in lattice units, `m + beta`, for every slot.
    pub fn lattice_momenta(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.site(i) as f64 + self.quasimomentum).collect()
    }

    /// Diagonal of `p^2` in the momentum basis, `kbar^2 (m + beta)^2`.
    pub fn p2_diagonal(&self) -> Vec<f64> {
        let h2 = self.hbar_eff * self.hbar_eff;
        self.lattice_momenta().into_iter().map(|q| h2 * q * q).collect()
    }
}

/// Two-sequence kick schedule: first train at `nT`, second at `(n r + lambda0) T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSchedule {
    pub ratio: f64,
    pub lambda0: f64,
    pub periods: usize,
}

impl DriveSchedule {
    pub fn new(ratio: f64, lambda0: f64, periods: usize) -> Result<Self, ModelError> {
        let s = Self { ratio, lambda0, periods };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.ratio > 0.0, "ratio", "must be > 0", self.ratio)?;
        check((0.0..1.0).contains(&self.lambda0), "lambda0", "must lie in [0, 1)", self.lambda0)?;
        check(self.periods >= 1, "periods", "must be >= 1", self.periods as f64)?;
        Ok(())
    }

    pub fn with_ratio(&self, ratio: f64) -> Self {
        Self { ratio, ..self.clone() }
    }

    pub fn with_lambda0(&self, lambda0: f64) -> Self {
        Self { lambda0, ..self.clone() }
    }
}

/// Initial-state family.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    DeltaAtZero,
    /// `|a(m)|^2 ∝ exp(-m^2 / 2 width^2)`.
    Gaussian { width: f64 },
}

/// Amplitudes on the truncated lattice `m ∈ [-M, M]`, slot `i` holding `m = i - M`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
    quasimomentum: f64,
}

/// Edge population above which the lattice truncation is considered broken.
pub const EDGE_POPULATION_LIMIT: f64 = 1e-8;

impl QuantumState {
    /// Wraps raw amplitudes; `amplitudes.len()` must be odd.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>, quasimomentum: f64) -> Self {
        assert!(amplitudes.len() % 2 == 1, "lattice must have 2M + 1 sites");
        Self { amplitudes, quasimomentum }
    }

    /// Unit amplitude on site `m`.
    pub fn basis(params: &SystemParams, m: i64) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); params.dim()];
        let i = (m + params.half_width as i64) as usize;
        amplitudes[i] = Complex64::new(1.0, 0.0);
        Self { amplitudes, quasimomentum: params.quasimomentum }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn quasimomentum(&self) -> f64 {
        self.quasimomentum
    }

    pub fn half_width(&self) -> usize {
        self.amplitudes.len() / 2
    }

    pub fn amplitude(&self, m: i64) -> Complex64 {
        self.amplitudes[(m + self.half_width() as i64) as usize]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        for a in &mut self.amplitudes {
            *a /= n;
        }
    }

    /// `|a(-M)|^2 + |a(M)|^2`.
    pub fn edge_population(&self) -> f64 {
        self.amplitudes[0].norm_sqr() + self.amplitudes[self.amplitudes.len() - 1].norm_sqr()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &QuantumState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

pub fn init_state(params: &SystemParams, kind: InitialState) -> Result<QuantumState, ModelError> {
    match kind {
        InitialState::DeltaAtZero => Ok(QuantumState::basis(params, 0)),
        InitialState::Gaussian { width } => {
            if !(width > 0.0 && width.is_finite()) {
                return Err(ModelError::InvalidWidth(width));
            }
            let amplitudes = (0..params.dim())
                .map(|i| {
                    let m = params.site(i) as f64;
                    Complex64::new((-m * m / (4.0 * width * width)).exp(), 0.0)
                })
                .collect();
            let mut state = QuantumState::from_amplitudes(amplitudes, params.quasimomentum);
            state.normalize();
            Ok(state)
        }
    }
}

/// `Σ_m |a(m)|^2 kbar^2 (m + beta)^2`.
pub fn p2_expectation(state: &QuantumState, params: &SystemParams) -> f64 {
    let m0 = state.half_width() as f64;
    state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let q = params.hbar_eff * (i as f64 - m0 + state.quasimomentum);
            a.norm_sqr() * q * q
        })
        .sum()
}

/// Population of the sites `|m| <= window` (clamped to the lattice).
pub fn p0_population(state: &QuantumState, window: usize) -> f64 {
    let half = state.half_width();
    let w = window.min(half);
    state.amplitudes[half - w..=half + w].iter().map(|a| a.norm_sqr()).sum()
}

/// Observables recorded after a double-kick period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub kick_index: usize,
    /// `<p^2>` with `p = kbar (m + beta)`.
    pub p2: f64,
    pub p0: f64,
}
