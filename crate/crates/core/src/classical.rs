//! Classical doubly-kicked standard map.
//!
//! Momenta are in the same scaled units as the quantum `p = kbar (m + beta)`,
//! so a kick is `p -> p + K sin(theta)` and a free interval of `tau` periods
//! drifts `theta -> theta + p tau`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::DriveSchedule;
use crate::propagator::kick_schedule;
use crate::spectroscopy::ols;

/// Trajectories per RNG stream and per reduction chunk.
pub const CHUNK: usize = 1024;
pub const MIN_ENSEMBLE: usize = 1000;
pub const DEFAULT_ENSEMBLE: usize = 100_000;
/// Below this kick strength the map is not globally chaotic.
pub const CHAOS_THRESHOLD: f64 = 5.0;
/// Kicks excluded from the start of the diffusion fit.
pub const TRANSIENT_KICKS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error("ensemble size {0} is below the minimum of {MIN_ENSEMBLE}")]
    EnsembleTooSmall(usize),
    #[error("{name} = {value} must be >= 0")]
    Negative { name: &'static str, value: f64 },
    #[error("{kicks} kicks leave too few points after the {TRANSIENT_KICKS}-kick transient")]
    TooFewKicks { kicks: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalEnsemble {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub seed: u64,
}

impl ClassicalEnsemble {
    /// Uniform angles at zero momentum. Trajectory chunk `c` draws from stream
    /// `c` of the seeded generator, so the sample does not depend on threading.
    pub fn uniform(size: usize, seed: u64) -> Result<Self, ClassicalError> {
        if size < MIN_ENSEMBLE {
            return Err(ClassicalError::EnsembleTooSmall(size));
        }
        let theta: Vec<f64> = (0..size.div_ceil(CHUNK))
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let n = CHUNK.min(size - c * CHUNK);
                (0..n).map(move |_| rng.random::<f64>() * TAU).collect::<Vec<_>>()
            })
            .collect();
        Ok(Self { p: vec![0.0; size], theta, seed })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn mean_p(&self) -> f64 {
        chunk_sums(&self.p, |p| p).iter().sum::<f64>() / self.len() as f64
    }

    pub fn mean_p2(&self) -> f64 {
        chunk_sums(&self.p, |p| p * p).iter().sum::<f64>() / self.len() as f64
    }

    fn kick(&mut self, strength: f64) {
        self.p.par_iter_mut().zip(self.theta.par_iter()).for_each(|(p, t)| *p += strength * t.sin());
    }

    fn drift(&mut self, tau: f64) {
        self.theta.par_iter_mut().zip(self.p.par_iter()).for_each(|(t, p)| *t = (*t + p * tau).rem_euclid(TAU));
    }
}

/// Per-chunk sums in chunk order, so every reduction is bit-reproducible.
fn chunk_sums(v: &[f64], f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    v.par_chunks(CHUNK).map(|c| c.iter().map(|&x| f(x)).sum()).collect()
}

/// One kick of strength `k` followed by a free drift of `tau` periods.
pub fn classical_step(ensemble: &mut ClassicalEnsemble, k: f64, tau: f64) -> Result<(), ClassicalError> {
    if !(k >= 0.0) {
        return Err(ClassicalError::Negative { name: "K", value: k });
    }
    if !(tau >= 0.0) {
        return Err(ClassicalError::Negative { name: "tau", value: tau });
    }
    ensemble.kick(k);
    ensemble.drift(tau);
    Ok(())
}

/// Ensemble moments right after one kick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KickRecord {
    /// 1-based.
    pub kick_index: usize,
    pub time: f64,
    pub p2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalRun {
    pub kicks: Vec<KickRecord>,
    /// `<p^2>` at the end of each period.
    pub period_p2: Vec<f64>,
    /// Fraction of trajectories with `|p| <= p0_band` at the end of each
    /// period; empty without a band.
    pub period_p0: Vec<f64>,
    /// Per kick, per chunk `sum p^2`; rows follow `kicks`.
    #[serde(skip)]
    chunk_p2: Vec<Vec<f64>>,
    pub chunk_sizes: Vec<usize>,
    pub final_mean_p: f64,
    pub final_mean_p_err: f64,
}

/// Runs the ensemble through the same merged kick sequence the quantum
/// propagation uses.
pub fn classical_evolve(
    k: f64,
    schedule: &DriveSchedule,
    mut ensemble: ClassicalEnsemble,
    p0_band: Option<f64>,
) -> Result<ClassicalRun, ClassicalError> {
    if !(k >= 0.0) {
        return Err(ClassicalError::Negative { name: "K", value: k });
    }
    let (events, _) = kick_schedule(schedule, k);
    let mut kicks = Vec::with_capacity(events.len());
    let mut chunk_p2 = Vec::with_capacity(events.len());
    let mut period_p2 = Vec::with_capacity(schedule.periods);
    let mut period_p0 = Vec::new();
    let mut t = 0.0;
    let mut next = 0;
    for period in 1..=schedule.periods {
        let end = period as f64;
        while next < events.len() && events[next].time < end {
            let e = events[next];
            ensemble.drift(e.time - t);
            ensemble.kick(e.strength);
            t = e.time;
            let sums = chunk_sums(&ensemble.p, |p| p * p);
            kicks.push(KickRecord { kick_index: next + 1, time: e.time, p2: sums.iter().sum::<f64>() / ensemble.len() as f64 });
            chunk_p2.push(sums);
            next += 1;
        }
        ensemble.drift(end - t);
        t = end;
        period_p2.push(ensemble.mean_p2());
        if let Some(band) = p0_band {
            let inside: f64 = chunk_sums(&ensemble.p, |p| if p.abs() <= band { 1.0 } else { 0.0 }).iter().sum();
            period_p0.push(inside / ensemble.len() as f64);
        }
    }
    let chunk_sizes: Vec<usize> = ensemble.p.chunks(CHUNK).map(<[f64]>::len).collect();
    let mean_p = ensemble.mean_p();
    let sd = (ensemble.mean_p2() - mean_p * mean_p).max(0.0).sqrt();
    Ok(ClassicalRun {
        kicks,
        period_p2,
        period_p0,
        chunk_p2,
        chunk_sizes,
        final_mean_p: mean_p,
        final_mean_p_err: sd / (ensemble.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDiffusion {
    /// Slope of `<p^2>` against kick index.
    pub d_per_kick: f64,
    pub d_per_kick_err: f64,
    /// Slope against time in base periods.
    pub d_per_period: f64,
    pub d_per_period_err: f64,
    /// `K^2 / 2`.
    pub quasilinear: f64,
    pub sub_chaotic: bool,
    pub ensemble_size: usize,
    pub seed: u64,
    pub run: ClassicalRun,
}

/// Classical diffusion constant from a uniform-angle, zero-momentum ensemble.
///
/// Both slopes skip the first [`TRANSIENT_KICKS`] kicks; the quoted errors
/// are the spread of the slopes of the independent trajectory chunks.
pub fn classical_diffusion(
    k: f64,
    schedule: &DriveSchedule,
    ensemble_size: usize,
    seed: u64,
    p0_band: Option<f64>,
) -> Result<ClassicalDiffusion, ClassicalError> {
    let run = classical_evolve(k, schedule, ClassicalEnsemble::uniform(ensemble_size, seed)?, p0_band)?;
    let start = TRANSIENT_KICKS;
    if run.kicks.len() < start + 3 {
        return Err(ClassicalError::TooFewKicks { kicks: run.kicks.len() });
    }
    let fit = |x: &[f64], y: &dyn Fn(usize) -> f64| -> f64 {
        let yv: Vec<f64> = (start..start + x.len()).map(y).collect();
        ols(x, &yv).map_or(0.0, |l| l.0)
    };
    let idx: Vec<f64> = run.kicks[start..].iter().map(|k| k.kick_index as f64).collect();
    let times: Vec<f64> = run.kicks[start..].iter().map(|k| k.time).collect();
    let total = ensemble_size as f64;
    let d_per_kick = fit(&idx, &|i| run.kicks[i].p2);
    let d_per_period = fit(&times, &|i| run.kicks[i].p2);

    let chunks = run.chunk_sizes.len();
    let (mut sk, mut sp) = (Vec::with_capacity(chunks), Vec::with_capacity(chunks));
    for c in 0..chunks {
        let n = run.chunk_sizes[c] as f64;
        sk.push((fit(&idx, &|i| run.chunk_p2[i][c] / n), n));
        sp.push((fit(&times, &|i| run.chunk_p2[i][c] / n), n));
    }
    let err = |s: &[(f64, f64)], mean: f64| -> f64 {
        if s.len() < 2 {
            return f64::NAN;
        }
        let ss = s.iter().map(|(d, n)| n * (d - mean).powi(2)).sum::<f64>() / total;
        (ss / (s.len() - 1) as f64).sqrt()
    };
    Ok(ClassicalDiffusion {
        d_per_kick,
        d_per_kick_err: err(&sk, d_per_kick),
        d_per_period,
        d_per_period_err: err(&sp, d_per_period),
        quasilinear: 0.5 * k * k,
        sub_chaotic: k <= CHAOS_THRESHOLD,
        ensemble_size,
        seed,
        run,
    })
}
