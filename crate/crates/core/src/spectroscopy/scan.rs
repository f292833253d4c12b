use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_std, SpectroscopyError};
use crate::model::{init_state, DriveSchedule, InitialState, SystemParams};
use crate::propagator::Propagator;

/// `n` evenly spaced phases `(j + 1/2) / n`, which never place a kick of the
/// second train on top of one of the first at `t = 0`.
pub fn lambda0_ensemble(n: usize) -> Vec<f64> {
    (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Initial phases averaged at each r; empty uses the schedule's own.
    pub lambda0s: Vec<f64>,
    /// Quasimomenta averaged at each r; empty uses the parameters' own.
    pub quasimomenta: Vec<f64>,
    pub p0_window: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { lambda0s: lambda0_ensemble(4), quasimomenta: Vec::new(), p0_window: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceScan {
    pub r_grid: Vec<f64>,
    /// Ensemble means after `periods` double kicks.
    pub p0_values: Vec<f64>,
    pub p2_values: Vec<f64>,
    /// Ensemble standard deviations.
    pub p0_sigma: Vec<f64>,
    pub p2_sigma: Vec<f64>,
    /// Ensemble members that completed.
    pub n_valid: Vec<usize>,
    /// Failure messages of the other members.
    pub errors: Vec<Vec<String>>,
    pub periods: usize,
    pub lambda0s: Vec<f64>,
    pub quasimomenta: Vec<f64>,
    pub p0_window: usize,
    pub params: SystemParams,
}

impl ResonanceScan {
    pub fn len(&self) -> usize {
        self.r_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_grid.is_empty()
    }

    /// `(r, p0, p2)` of the points with at least one valid member.
    pub fn valid_points(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..self.len() {
            if self.n_valid[i] > 0 {
                out.0.push(self.r_grid[i]);
                out.1.push(self.p0_values[i]);
                out.2.push(self.p2_values[i]);
            }
        }
        out
    }
}

/// Final `(p0, p2)` of every ensemble member for every ratio, evaluated in
/// parallel and collected in grid order.
pub fn resonance_scan(
    r_grid: &[f64],
    template: &DriveSchedule,
    params: &SystemParams,
    initial: InitialState,
    options: &ScanOptions,
) -> Result<ResonanceScan, SpectroscopyError> {
    if r_grid.is_empty() || r_grid.iter().any(|r| !r.is_finite()) || template.periods == 0 {
        return Err(SpectroscopyError::BadGrid);
    }
    let lambda0s = if options.lambda0s.is_empty() { vec![template.lambda0] } else { options.lambda0s.clone() };
    let betas = if options.quasimomenta.is_empty() { vec![params.quasimomentum] } else { options.quasimomenta.clone() };
    let members: Vec<(f64, f64)> = betas.iter().flat_map(|&b| lambda0s.iter().map(move |&l| (b, l))).collect();

    let propagators: Vec<Result<(Propagator, SystemParams), String>> = betas
        .iter()
        .map(|&b| {
            params
                .with_quasimomentum(b)
                .map(|p| (Propagator::new(&p), p))
                .map_err(|e| e.to_string())
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..r_grid.len()).flat_map(|i| (0..members.len()).map(move |j| (i, j))).collect();
    let outcomes: Vec<Result<(f64, f64), String>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let (beta, lambda0) = members[j];
            let (prop, p) = propagators[j / lambda0s.len()].as_ref().map_err(Clone::clone)?;
            let schedule = DriveSchedule::new(r_grid[i], lambda0, template.periods).map_err(|e| e.to_string())?;
            let mut psi = init_state(p, initial).map_err(|e| e.to_string())?;
            let ev = prop
                .evolve(&mut psi, &schedule, options.p0_window)
                .map_err(|e| format!("lambda0={lambda0} beta={beta}: {e}"))?;
            let last = ev.records.last().expect("periods >= 1");
            Ok((last.p0, last.p2))
        })
        .collect();

    let n = members.len();
    let mut scan = ResonanceScan {
        r_grid: r_grid.to_vec(),
        p0_values: Vec::with_capacity(r_grid.len()),
        p2_values: Vec::with_capacity(r_grid.len()),
        p0_sigma: Vec::with_capacity(r_grid.len()),
        p2_sigma: Vec::with_capacity(r_grid.len()),
        n_valid: Vec::with_capacity(r_grid.len()),
        errors: Vec::with_capacity(r_grid.len()),
        periods: template.periods,
        lambda0s,
        quasimomenta: betas,
        p0_window: options.p0_window,
        params: params.clone(),
    };
    for chunk in outcomes.chunks(n) {
        let (mut p0, mut p2, mut errs) = (Vec::new(), Vec::new(), Vec::new());
        for o in chunk {
            match o {
                Ok((a, b)) => {
                    p0.push(*a);
                    p2.push(*b);
                }
                Err(e) => errs.push(e.clone()),
            }
        }
        let (m0, s0) = mean_std(&p0);
        let (m2, s2) = mean_std(&p2);
        scan.p0_values.push(m0);
        scan.p2_values.push(m2);
        scan.p0_sigma.push(s0);
        scan.p2_sigma.push(s2);
        scan.n_valid.push(p0.len());
        scan.errors.push(errs);
    }
    Ok(scan)
}
