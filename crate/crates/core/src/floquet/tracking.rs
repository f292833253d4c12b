//! Continuation of Floquet eigenphases and eigenstates along a lambda grid by
//! maximal eigenvector overlap.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{diagonalize, fix_gauge, phase_distance, FloquetError, FloquetSpectrum, MomentumBasis, UnitaryFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Weight above which a level counts as visible (thin line).
    pub thin_weight: f64,
    /// Weight above which a level counts as important (thick line).
    pub thick_weight: f64,
    /// Minimal step overlap `|<phi(lambda_i)|phi(lambda_i+1)>|` of a continued track.
    pub min_overlap: f64,
    /// Two candidates closer than this in overlap make a matching ambiguous.
    pub ambiguity_margin: f64,
    /// Smallest step the automatic refinement may produce.
    pub step_floor: f64,
    /// Only tracks whose initial or current weight reaches this trigger
    /// refinement; lighter tracks are matched at whatever step is in use.
    pub refine_weight: f64,
    /// Eigenphases closer than this are treated as one degenerate block.
    pub degeneracy_tol: f64,
    /// Retain every eigenvector along every track.
    pub keep_states: bool,
    /// Grid points diagonalized concurrently before sequential assembly.
    pub batch: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            thin_weight: 1e-4,
            thick_weight: 1e-2,
            min_overlap: 0.5,
            ambiguity_margin: 0.05,
            step_floor: 1e-4,
            refine_weight: 0.0,
            degeneracy_tol: 1e-12,
            keep_states: false,
            batch: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightClass {
    Below,
    Thin,
    Thick,
}

impl WeightClass {
    pub fn classify(weight: f64, options: &SweepOptions) -> Self {
        if weight > options.thick_weight {
            WeightClass::Thick
        } else if weight > options.thin_weight {
            WeightClass::Thin
        } else {
            WeightClass::Below
        }
    }

    pub fn code(self) -> u8 {
        match self {
            WeightClass::Below => 0,
            WeightClass::Thin => 1,
            WeightClass::Thick => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub grid_index: usize,
    pub lambda: f64,
    pub eigenphase: f64,
    /// Instantaneous weight `|<psi0|phi(lambda)>|^2`.
    pub weight: f64,
    /// `<phi|p^2|phi>`.
    pub p2: f64,
    /// Momentum centroid in lattice units.
    pub p_centroid: f64,
    /// Overlap with the previous point of the track (1 at the first point).
    pub overlap: f64,
}

#[derive(Debug, Clone)]
pub struct LevelTrack {
    pub id: usize,
    /// Grid index of the first point.
    pub start: usize,
    pub points: Vec<TrackPoint>,
    /// Weight at the first point, held fixed along the track.
    pub frozen_weight: f64,
    /// Eigenvectors per point, when requested.
    pub states: Vec<DVector<Complex64>>,
    /// The track was started because an earlier track could not be continued.
    pub born_from_split: bool,
    /// The track ended before the last grid point.
    pub broken: bool,
}

impl LevelTrack {
    pub fn point_at(&self, grid_index: usize) -> Option<&TrackPoint> {
        grid_index.checked_sub(self.start).and_then(|i| self.points.get(i))
    }

    /// One past the last grid index covered.
    pub fn end(&self) -> usize {
        self.start + self.points.len()
    }

    pub fn last(&self) -> &TrackPoint {
        self.points.last().expect("tracks are never empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrackFlag {
    /// No continuation with overlap above the threshold; the track was ended.
    Split { track: usize, lambda_from: f64, lambda_to: f64, overlap: f64 },
    /// Two continuations within the ambiguity margin; the larger was taken.
    Ambiguous { track: usize, lambda_from: f64, lambda_to: f64, best: f64, second: f64 },
}

#[derive(Debug, Clone)]
pub struct LevelTrackSet {
    /// Grid actually used, including refinement points.
    pub lambda_grid: Vec<f64>,
    pub tracks: Vec<LevelTrack>,
    pub flags: Vec<TrackFlag>,
    pub options: SweepOptions,
    /// Number of midpoints inserted by the refinement.
    pub refinements: usize,
    pub dim: usize,
    /// Ring size of the momentum basis, if periodic.
    pub ring: Option<usize>,
}

impl LevelTrackSet {
    /// `(track index, point)` for every track alive at a grid index.
    pub fn alive_at(&self, grid_index: usize) -> Vec<(usize, &TrackPoint)> {
        self.tracks
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.point_at(grid_index).map(|p| (i, p)))
            .collect()
    }

    /// Tracks present at the first grid point that reach the last one.
    pub fn unbroken_from_start(&self) -> impl Iterator<Item = &LevelTrack> {
        let last = self.lambda_grid.len();
        self.tracks.iter().filter(move |t| t.start == 0 && t.end() == last)
    }
}

fn check_grid(grid: &[f64]) -> Result<(), FloquetError> {
    if grid.len() < 2 || grid.iter().any(|x| !x.is_finite()) {
        return Err(FloquetError::BadGrid { min: 2 });
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if up || down {
        Ok(())
    } else {
        Err(FloquetError::BadGrid { min: 2 })
    }
}

struct Matching {
    /// Per previous column: matched new column and its overlap.
    assigned: Vec<Option<(usize, f64)>>,
    /// Per previous column: best overlap with any other new column.
    runner_up: Vec<f64>,
    /// Per previous column: best overlap overall, for split diagnostics.
    best: Vec<f64>,
}

impl Matching {
    fn is_clean(&self, options: &SweepOptions, relevant: &[bool]) -> bool {
        self.assigned.iter().zip(&self.runner_up).zip(relevant).all(|((a, &second), &r)| {
            !r || match a {
                Some((_, o)) => *o >= options.min_overlap && *o - second >= options.ambiguity_margin,
                None => false,
            }
        })
    }
}

/// Greedy assignment by descending overlap; each new column is claimed once.
fn match_spectra(prev: &FloquetSpectrum, next: &FloquetSpectrum) -> Matching {
    let n = prev.dim();
    let overlap = prev.eigenstates.adjoint() * &next.eigenstates;
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(4 * n);
    let mut best = vec![0.0f64; n];
    for j in 0..n {
        for k in 0..n {
            let o = overlap[(j, k)].norm();
            best[j] = best[j].max(o);
            if o > 0.1 {
                candidates.push((o, j, k));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned = vec![None; n];
    let mut taken = vec![false; n];
    for (o, j, k) in candidates {
        if assigned[j].is_none() && !taken[k] {
            assigned[j] = Some((k, o));
            taken[k] = true;
        }
    }
    let runner_up = (0..n)
        .map(|j| match assigned[j] {
            Some((k, _)) => (0..n).filter(|&c| c != k).map(|c| overlap[(j, c)].norm()).fold(0.0, f64::max),
            None => 0.0,
        })
        .collect();
    Matching { assigned, runner_up, best }
}

/// Rotates eigenvectors inside degenerate clusters of `next` so that they
/// overlap maximally with the eigenvectors of `prev`.
fn align_degenerate_blocks(next: &mut FloquetSpectrum, prev: &FloquetSpectrum, tol: f64, reference: &[Complex64]) {
    let n = next.dim();
    if n < 2 {
        return;
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut current = vec![0usize];
    for k in 1..n {
        if phase_distance(next.eigenphases[k], next.eigenphases[k - 1]) < tol {
            current.push(k);
        } else {
            clusters.push(std::mem::take(&mut current));
            current.push(k);
        }
    }
    clusters.push(current);
    if clusters.len() > 1 && phase_distance(next.eigenphases[0], next.eigenphases[n - 1]) < tol {
        let last = clusters.pop().unwrap();
        clusters[0].extend(last);
    }
    for cluster in clusters.into_iter().filter(|c| c.len() > 1) {
        let d = cluster.len();
        let block = DMatrix::from_columns(&cluster.iter().map(|&k| next.eigenstates.column(k).into_owned()).collect::<Vec<_>>());
        let g = prev.eigenstates.adjoint() * &block;
        let mut rows: Vec<(f64, usize)> = (0..g.nrows()).map(|j| (g.row(j).norm_squared(), j)).collect();
        rows.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let target = DMatrix::from_rows(&rows[..d].iter().map(|&(_, j)| g.row(j).into_owned()).collect::<Vec<_>>());
        let svd = target.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let rotation = vt.adjoint() * u.adjoint();
        let mut rotated = block * rotation;
        fix_gauge(&mut rotated);
        for (i, &k) in cluster.iter().enumerate() {
            next.eigenstates.set_column(k, &rotated.column(i));
            let c: Complex64 = rotated.column(i).iter().zip(reference).map(|(a, b)| a.conj() * b).sum();
            next.weights[k] = c.norm_sqr();
        }
    }
}

struct Assembler<'a, F: UnitaryFamily> {
    family: &'a F,
    reference: &'a [Complex64],
    options: &'a SweepOptions,
    basis: &'a MomentumBasis,
    set: LevelTrackSet,
    prev: Option<FloquetSpectrum>,
    /// Track index owning each column of `prev`.
    owners: Vec<usize>,
}

impl<'a, F: UnitaryFamily> Assembler<'a, F> {
    fn point(&self, spectrum: &FloquetSpectrum, k: usize, grid_index: usize, overlap: f64) -> TrackPoint {
        let col = spectrum.eigenstates.column(k);
        TrackPoint {
            grid_index,
            lambda: spectrum.lambda,
            eigenphase: spectrum.eigenphases[k],
            weight: spectrum.weights[k],
            p2: self.basis.p2_of(col.iter()),
            p_centroid: self.basis.centroid(col.iter()),
            overlap,
        }
    }

    fn new_track(&mut self, spectrum: &FloquetSpectrum, k: usize, grid_index: usize, from_split: bool) -> usize {
        let point = self.point(spectrum, k, grid_index, 1.0);
        let id = self.set.tracks.len();
        let states = if self.options.keep_states { vec![spectrum.eigenstates.column(k).into_owned()] } else { Vec::new() };
        self.set.tracks.push(LevelTrack {
            id,
            start: grid_index,
            points: vec![point],
            frozen_weight: spectrum.weights[k],
            states,
            born_from_split: from_split,
            broken: false,
        });
        id
    }

    fn push(&mut self, target: FloquetSpectrum) -> Result<(), FloquetError> {
        if self.prev.is_none() {
            self.set.lambda_grid.push(target.lambda);
            self.owners = (0..target.dim()).map(|k| self.new_track(&target, k, 0, false)).collect();
            self.prev = Some(target);
            return Ok(());
        }
        let mut pending = vec![target];
        while let Some(mut next) = pending.pop() {
            let prev = self.prev.as_ref().unwrap();
            align_degenerate_blocks(&mut next, prev, self.options.degeneracy_tol, self.reference);
            let matching = match_spectra(prev, &next);
            let relevant: Vec<bool> = self
                .owners
                .iter()
                .enumerate()
                .map(|(j, &t)| {
                    let w = self.set.tracks[t].frozen_weight.max(prev.weights[j]);
                    w >= self.options.refine_weight
                })
                .collect();
            let half_step = 0.5 * (next.lambda - prev.lambda).abs();
            if !matching.is_clean(self.options, &relevant) && half_step >= self.options.step_floor {
                let mid = 0.5 * (prev.lambda + next.lambda);
                let mid_spectrum = diagonalize(&self.family.operator(mid), mid, self.reference)?;
                self.set.refinements += 1;
                pending.push(next);
                pending.push(mid_spectrum);
                continue;
            }
            self.commit(next, matching);
        }
        Ok(())
    }

    fn commit(&mut self, next: FloquetSpectrum, matching: Matching) {
        let prev_lambda = self.prev.as_ref().unwrap().lambda;
        let grid_index = self.set.lambda_grid.len();
        self.set.lambda_grid.push(next.lambda);
        let n = next.dim();
        let mut owners = vec![usize::MAX; n];
        for (j, assignment) in matching.assigned.iter().enumerate() {
            let track = self.owners[j];
            match *assignment {
                Some((k, o)) if o >= self.options.min_overlap => {
                    let second = matching.runner_up[j];
                    if o - second < self.options.ambiguity_margin {
                        self.set.flags.push(TrackFlag::Ambiguous {
                            track,
                            lambda_from: prev_lambda,
                            lambda_to: next.lambda,
                            best: o,
                            second,
                        });
                    }
                    let point = self.point(&next, k, grid_index, o);
                    let t = &mut self.set.tracks[track];
                    t.points.push(point);
                    if self.options.keep_states {
                        t.states.push(next.eigenstates.column(k).into_owned());
                    }
                    owners[k] = track;
                }
                _ => {
                    self.set.tracks[track].broken = true;
                    self.set.flags.push(TrackFlag::Split {
                        track,
                        lambda_from: prev_lambda,
                        lambda_to: next.lambda,
                        overlap: matching.best[j],
                    });
                }
            }
        }
        for k in 0..n {
            if owners[k] == usize::MAX {
                owners[k] = self.new_track(&next, k, grid_index, true);
            }
        }
        self.owners = owners;
        self.prev = Some(next);
    }
}

/// Diagonalizes the family along `grid` and links eigenstates into tracks.
///
/// Grid points are diagonalized concurrently in batches; tracks are assembled
/// sequentially in grid order. A step whose matching has an overlap below
/// `min_overlap` or an ambiguous pair is bisected down to `step_floor`; past
/// the floor, unmatched tracks are ended and flagged and their successors
/// start new tracks.
pub fn lambda_sweep<F: UnitaryFamily>(
    family: &F,
    grid: &[f64],
    reference: &[Complex64],
    options: &SweepOptions,
) -> Result<LevelTrackSet, FloquetError> {
    check_grid(grid)?;
    let mut asm = Assembler {
        family,
        reference,
        options,
        basis: family.basis(),
        set: LevelTrackSet {
            lambda_grid: Vec::with_capacity(grid.len()),
            tracks: Vec::new(),
            flags: Vec::new(),
            options: options.clone(),
            refinements: 0,
            dim: family.dim(),
            ring: family.basis().ring,
        },
        prev: None,
        owners: Vec::new(),
    };
    for batch in grid.chunks(options.batch.max(1)) {
        let spectra = batch
            .par_iter()
            .map(|&l| diagonalize(&family.operator(l), l, reference))
            .collect::<Result<Vec<_>, _>>()?;
        for s in spectra {
            asm.push(s)?;
        }
    }
    Ok(asm.set)
}
