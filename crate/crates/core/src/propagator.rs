//! Split-operator propagation of lattice states under single and
//! two-frequency kick trains.
//!
//! The angle grid has as many points as the momentum lattice (`2M + 1`), and
//! the change of basis is the exact discrete Fourier pair, so every factor is
//! an exactly unitary diagonal operator in one of the two representations.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    p0_population, p2_expectation, DriveSchedule, ObservableRecord, QuantumState, SystemParams,
    EDGE_POPULATION_LIMIT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error(
        "lattice truncation violated after period {period}: edge population {edge_population:.3e} \
         exceeds {limit:.0e} (half_width = {half_width}); increase half_width"
    )]
    TruncationViolated {
        period: usize,
        edge_population: f64,
        limit: f64,
        half_width: usize,
    },
    #[error("state lattice has {state} sites but parameters describe {params}")]
    DimensionMismatch { state: usize, params: usize },
}

/// Kicks closer than this (in units of `T`) are merged into one kick.
pub const COINCIDENCE_TOLERANCE: f64 = 1e-9;

/// One impulsive kick of the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KickEvent {
    pub time: f64,
    pub strength: f64,
}

/// Two kicks that fell within [`COINCIDENCE_TOLERANCE`] and were merged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coincidence {
    pub time: f64,
    pub period: usize,
}

/// Sorted kick times of both trains in `[0, N)`, with coincident kicks merged.
pub fn kick_schedule(schedule: &DriveSchedule, strength: f64) -> (Vec<KickEvent>, Vec<Coincidence>) {
    let end = schedule.periods as f64;
    let mut times: Vec<f64> = (0..schedule.periods).map(|n| n as f64).collect();
    let mut n = 0usize;
    loop {
        let t = n as f64 * schedule.ratio + schedule.lambda0;
        if t >= end {
            break;
        }
        times.push(t);
        n += 1;
    }
    times.sort_by(f64::total_cmp);

    let mut events: Vec<KickEvent> = Vec::with_capacity(times.len());
    let mut coincidences = Vec::new();
    for t in times {
        match events.last_mut() {
            Some(last) if t - last.time < COINCIDENCE_TOLERANCE => {
                last.strength += strength;
                coincidences.push(Coincidence { time: last.time, period: last.time.floor() as usize });
            }
            _ => events.push(KickEvent { time: t, strength }),
        }
    }
    (events, coincidences)
}

/// Time series and flagged events of a two-frequency evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub records: Vec<ObservableRecord>,
    pub coincidences: Vec<Coincidence>,
}

/// Precomputed FFT plans and phase tables for one parameter set.
pub struct Propagator {
    params: SystemParams,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    cos_theta: Vec<f64>,
    /// Kick phases for one strength-`K` event, or one Trotter slice of it.
    event_phases: Vec<Complex64>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator").field("params", &self.params).finish_non_exhaustive()
    }
}

impl Propagator {
    pub fn new(params: &SystemParams) -> Self {
        let n = params.dim();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let cos_theta = (0..n)
            .map(|j| (std::f64::consts::TAU * j as f64 / n as f64).cos())
            .collect();
        let mut p = Self {
            params: params.clone(),
            forward,
            inverse,
            cos_theta,
            event_phases: Vec::new(),
        };
        let slice_strength = if params.pulse_width > 0.0 {
            params.kick_strength / params.substeps as f64
        } else {
            params.kick_strength
        };
        p.event_phases = p.kick_phases(slice_strength);
        p
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    fn kick_phases(&self, strength: f64) -> Vec<Complex64> {
        let k = strength / self.params.hbar_eff;
        self.cos_theta.iter().map(|c| Complex64::from_polar(1.0, -k * c)).collect()
    }

    fn check_dim(&self, state: &QuantumState) {
        assert_eq!(
            state.amplitudes().len(),
            self.params.dim(),
            "state lattice does not match propagator parameters"
        );
    }

    /// Multiplies the angle-representation wavefunction by `phases`.
    fn apply_angle_diagonal(&self, amps: &mut [Complex64], phases: &[Complex64], power: usize) {
        let n = amps.len();
        // slot i holds m = i - M, whose DFT index is m mod n
        let shift = self.params.half_width + 1;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, a) in amps.iter().enumerate() {
            buf[(i + shift) % n] = *a;
        }
        self.inverse.process(&mut buf);
        for (b, ph) in buf.iter_mut().zip(phases) {
            for _ in 0..power {
                *b *= ph;
            }
        }
        self.forward.process(&mut buf);
        let scale = 1.0 / n as f64;
        for (i, a) in amps.iter_mut().enumerate() {
            *a = buf[(i + shift) % n] * scale;
        }
    }

    /// Ideal kick `exp(-i (strength / kbar) cos theta)`.
    pub fn kick(&self, state: &mut QuantumState, strength: f64) {
        self.check_dim(state);
        if strength == 0.0 {
            return;
        }
        let phases = self.kick_phases(strength);
        self.apply_angle_diagonal(state.amplitudes_mut(), &phases, 1);
    }

    /// Free evolution over a time fraction `tau` (any sign).
    pub fn free(&self, state: &mut QuantumState, tau: f64) {
        self.check_dim(state);
        if tau == 0.0 {
            return;
        }
        let c = -0.5 * self.params.hbar_eff * tau;
        let m0 = self.params.half_width as f64;
        let beta = self.params.quasimomentum;
        for (i, a) in state.amplitudes_mut().iter_mut().enumerate() {
            let q = i as f64 - m0 + beta;
            *a *= Complex64::from_polar(1.0, c * q * q);
        }
    }

    /// One kick of the drive with `multiplicity` coincident strength-`K` kicks.
    ///
    /// A finite pulse is centred on the nominal kick time: it is modelled as
    /// `substeps` symmetric free/kick/free slices spanning `pulse_width`,
    /// sandwiched between backward free half-pulses so that the surrounding
    /// free intervals stay measured between nominal kick times.
    pub fn kick_event(&self, state: &mut QuantumState, multiplicity: usize) {
        self.check_dim(state);
        if self.params.kick_strength == 0.0 || multiplicity == 0 {
            return;
        }
        let pw = self.params.pulse_width;
        if pw == 0.0 {
            self.apply_angle_diagonal(state.amplitudes_mut(), &self.event_phases, multiplicity);
            return;
        }
        let slice = pw / self.params.substeps as f64;
        self.free(state, -0.5 * pw + 0.5 * slice);
        for s in 0..self.params.substeps {
            if s > 0 {
                self.free(state, slice);
            }
            self.apply_angle_diagonal(state.amplitudes_mut(), &self.event_phases, multiplicity);
        }
        self.free(state, 0.5 * slice - 0.5 * pw);
    }

    fn kick_event_inverse(&self, state: &mut QuantumState) {
        if self.params.kick_strength == 0.0 {
            return;
        }
        let conj: Vec<Complex64> = self.event_phases.iter().map(|z| z.conj()).collect();
        let pw = self.params.pulse_width;
        if pw == 0.0 {
            self.apply_angle_diagonal(state.amplitudes_mut(), &conj, 1);
            return;
        }
        let slice = pw / self.params.substeps as f64;
        self.free(state, 0.5 * pw - 0.5 * slice);
        for s in 0..self.params.substeps {
            if s > 0 {
                self.free(state, -slice);
            }
            self.apply_angle_diagonal(state.amplitudes_mut(), &conj, 1);
        }
        self.free(state, 0.5 * pw - 0.5 * slice);
    }

    /// One period of the periodic double-kicked rotor: kick, free(lambda),
    /// kick, free(1 - lambda).
    pub fn period(&self, state: &mut QuantumState, lambda: f64) {
        self.kick_event(state, 1);
        self.free(state, lambda);
        self.kick_event(state, 1);
        self.free(state, 1.0 - lambda);
    }

    /// Adjoint of [`Propagator::period`].
    pub fn period_inverse(&self, state: &mut QuantumState, lambda: f64) {
        self.check_dim(state);
        self.free(state, -(1.0 - lambda));
        self.kick_event_inverse(state);
        self.free(state, -lambda);
        self.kick_event_inverse(state);
    }

    fn record(&self, state: &QuantumState, kick_index: usize, p0_window: usize) -> Result<ObservableRecord, PropagationError> {
        let edge = state.edge_population();
        if edge > EDGE_POPULATION_LIMIT {
            return Err(PropagationError::TruncationViolated {
                period: kick_index,
                edge_population: edge,
                limit: EDGE_POPULATION_LIMIT,
                half_width: self.params.half_width,
            });
        }
        Ok(ObservableRecord {
            kick_index,
            p2: p2_expectation(state, &self.params),
            p0: p0_population(state, p0_window),
        })
    }

    /// Evolves under the two-frequency drive from `t = 0` to `t = N T`,
    /// recording observables at every `t = n T`.
    ///
    /// Free intervals are differences of the sorted global kick times, so the
    /// relative order of the two trains is exact for any `r`.
    pub fn evolve(
        &self,
        state: &mut QuantumState,
        schedule: &DriveSchedule,
        p0_window: usize,
    ) -> Result<Evolution, PropagationError> {
        self.check_state(state)?;
        let (events, coincidences) = kick_schedule(schedule, self.params.kick_strength);
        let mut records = Vec::with_capacity(schedule.periods);
        let mut t = 0.0;
        let mut next = 0;
        for period in 1..=schedule.periods {
            let end = period as f64;
            while next < events.len() && events[next].time < end {
                let ev = events[next];
                self.free(state, ev.time - t);
                let multiplicity = if self.params.kick_strength > 0.0 {
                    (ev.strength / self.params.kick_strength).round() as usize
                } else {
                    1
                };
                self.kick_event(state, multiplicity);
                t = ev.time;
                next += 1;
            }
            self.free(state, end - t);
            t = end;
            records.push(self.record(state, period, p0_window)?);
        }
        Ok(Evolution { records, coincidences })
    }

    /// Evolves with the product `Π_n U(frac(lambda0 + n (r - 1)))`.
    pub fn evolve_product(
        &self,
        state: &mut QuantumState,
        schedule: &DriveSchedule,
        p0_window: usize,
    ) -> Result<Vec<ObservableRecord>, PropagationError> {
        self.check_state(state)?;
        let mut records = Vec::with_capacity(schedule.periods);
        for n in 0..schedule.periods {
            let lambda = (schedule.lambda0 + n as f64 * (schedule.ratio - 1.0)).rem_euclid(1.0);
            self.period(state, lambda);
            records.push(self.record(state, n + 1, p0_window)?);
        }
        Ok(records)
    }

    fn check_state(&self, state: &QuantumState) -> Result<(), PropagationError> {
        if state.amplitudes().len() != self.params.dim() {
            return Err(PropagationError::DimensionMismatch {
                state: state.amplitudes().len(),
                params: self.params.dim(),
            });
        }
        Ok(())
    }
}

pub fn kick_apply(state: &QuantumState, strength: f64, params: &SystemParams) -> QuantumState {
    let mut out = state.clone();
    Propagator::new(params).kick(&mut out, strength);
    out
}

pub fn free_apply(state: &QuantumState, tau: f64, params: &SystemParams) -> QuantumState {
    let mut out = state.clone();
    Propagator::new(params).free(&mut out, tau);
    out
}

pub fn period_apply(state: &QuantumState, lambda: f64, params: &SystemParams) -> QuantumState {
    let mut out = state.clone();
    Propagator::new(params).period(&mut out, lambda);
    out
}

pub fn evolve_quasiperiodic(
    state: &QuantumState,
    schedule: &DriveSchedule,
    params: &SystemParams,
    p0_window: usize,
) -> Result<Evolution, PropagationError> {
    let mut psi = state.clone();
    Propagator::new(params).evolve(&mut psi, schedule, p0_window)
}
