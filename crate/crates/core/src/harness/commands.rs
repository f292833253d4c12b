use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{composite_grid, RunConfig};
use super::output::{fmt_f64, sidecar_path, write_json, Table};
use super::{CommandOutcome, HarnessError, Metadata, Outcome};
use crate::classical::{classical_diffusion, ClassicalDiffusion};
use crate::floquet::{
    detect_avoided_crossings, diagonalize, ensemble_localization, gap_statistics, lambda_sweep,
    refine_avoided_crossings, DoubleKickFamily, EnsembleLocalization, GapStatistics, GapStatisticsOptions,
    MomentumBasis, TrackFlag, UnitaryFamily, WeightClass,
};
use crate::model::{init_state, SystemParams};
use crate::propagator::{Coincidence, Propagator};
use crate::spectroscopy::{
    cusp_test, fit_lineshape, lambda0_ensemble, measure_width, resonance_scan, CuspReport, LineshapeData,
    LineshapeFit, ScanOptions, SpectroscopyError, WidthReport,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

struct Writer<'a> {
    config: &'a RunConfig,
    command: &'a str,
    dir: PathBuf,
    source: Option<String>,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(config: &'a RunConfig, command: &'a str) -> Result<Self, HarnessError> {
        Self::in_dir(config, command, config.run.output.clone())
    }

    fn in_dir(config: &'a RunConfig, command: &'a str, dir: PathBuf) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        Ok(Self { config, command, dir, source: None, files: Vec::new() })
    }

    fn sidecar(&mut self, path: PathBuf) -> Result<(), HarnessError> {
        let meta = Metadata {
            command: self.command.to_string(),
            version: VERSION.to_string(),
            file: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            hbar_eff: self.config.system.resolved_hbar_eff(),
            config: self.config.clone(),
            source: self.source.clone(),
        };
        write_json(&sidecar_path(&path), &meta)?;
        self.files.push(path);
        Ok(())
    }

    fn table(&mut self, name: &str, table: &Table) -> Result<PathBuf, HarnessError> {
        let path = self.dir.join(name);
        table.write(&path)?;
        self.sidecar(path.clone())?;
        Ok(path)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, HarnessError> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        self.sidecar(path.clone())?;
        Ok(path)
    }

    fn finish(self, exit_code: i32, messages: Vec<String>) -> CommandOutcome {
        CommandOutcome { files: self.files, exit_code, messages }
    }
}

fn params(config: &RunConfig) -> Result<SystemParams, HarnessError> {
    config.system_params().map_err(HarnessError::run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveReport {
    pub periods: usize,
    pub final_p2: f64,
    pub final_p0: f64,
    /// Kick pairs that fell within the coincidence tolerance and were merged.
    pub coincidences: Vec<Coincidence>,
}

/// `evolve.csv`: `kick_index, p2_scaled, p2_lattice, p0` after every period.
pub fn cmd_evolve(config: &RunConfig) -> Result<CommandOutcome, HarnessError> {
    let params = params(config)?;
    let schedule = config.schedule().map_err(HarnessError::run)?;
    let mut psi = init_state(&params, config.initial).map_err(HarnessError::run)?;
    let ev = Propagator::new(&params)
        .evolve(&mut psi, &schedule, config.scan.p0_window)
        .map_err(HarnessError::run)?;
    let h2 = params.hbar_eff * params.hbar_eff;
    let mut t = Table::new(&["kick_index", "p2_scaled", "p2_lattice", "p0"]);
    for r in &ev.records {
        t.push(vec![r.kick_index.to_string(), fmt_f64(r.p2), fmt_f64(r.p2 / h2), fmt_f64(r.p0)]);
    }
    let mut w = Writer::new(config, "evolve")?;
    w.table("evolve.csv", &t)?;
    let last = ev.records.last().expect("periods >= 1");
    let report = EvolveReport {
        periods: schedule.periods,
        final_p2: last.p2,
        final_p0: last.p0,
        coincidences: ev.coincidences.clone(),
    };
    w.json("evolve.json", &report)?;
    let messages = ev
        .coincidences
        .iter()
        .map(|c| format!("note: two kicks merged at t = {} (period {})", c.time, c.period))
        .collect();
    Ok(w.finish(0, messages))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Best parameters found, also when the fit did not converge.
    pub fit: Option<LineshapeFit>,
    pub converged: bool,
    pub error: Option<String>,
}

impl FitReport {
    fn of(r: Result<LineshapeFit, SpectroscopyError>) -> Self {
        match r {
            Ok(f) => Self { converged: f.converged, fit: Some(f), error: None },
            Err(SpectroscopyError::NonConvergence { reason, best }) => {
                Self { fit: Some(*best), converged: false, error: Some(reason) }
            }
            Err(e) => Self { fit: None, converged: false, error: Some(e.to_string()) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub points: usize,
    pub valid_points: usize,
    pub periods: usize,
    pub width: Outcome<WidthReport>,
    pub cusp: Outcome<CuspReport>,
    pub fit: FitReport,
}

/// Scan data as stored in `scan.csv`, restricted to points with a valid member.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanData {
    pub r: Vec<f64>,
    pub p0: Vec<f64>,
    pub p2: Vec<f64>,
    pub periods: usize,
}

fn analyze_scan(data: &ScanData, cusp_half_width: Option<f64>, points: usize) -> ScanReport {
    let width = measure_width(&data.r, &data.p0, data.periods);
    let cusp = match (&width, cusp_half_width) {
        (_, Some(h)) => cusp_test(&data.r, &data.p0, h).into(),
        (Ok(w), None) => cusp_test(&data.r, &data.p0, w.fwhm_r).into(),
        (Err(_), None) => Outcome::err("no width to size the cusp window; set scan.cusp_half_width"),
    };
    let fit = FitReport::of(fit_lineshape(&LineshapeData { r: &data.r, p0: &data.p0, p2: &data.p2, periods: data.periods }));
    ScanReport { points, valid_points: data.r.len(), periods: data.periods, width: width.into(), cusp, fit }
}

const SCAN_COLUMNS: [&str; 9] =
    ["r", "periods", "p0", "p0_sigma", "p2_scaled", "p2_scaled_sigma", "p2_lattice", "n_valid", "errors"];

/// `scan.csv` with one row per ratio in ascending order, and `scan_report.json`
/// with the width, cusp and lineshape analyses. Analysis failures are
/// reported in the JSON; the command still succeeds once the data is written.
pub fn cmd_scan_r(config: &RunConfig) -> Result<CommandOutcome, HarnessError> {
    let params = params(config)?;
    let schedule = config.schedule().map_err(HarnessError::run)?;
    let grid = composite_grid(&config.scan.segments);
    let options = ScanOptions {
        lambda0s: lambda0_ensemble(config.scan.lambda0_ensemble),
        quasimomenta: config.scan.quasimomenta.clone(),
        p0_window: config.scan.p0_window,
    };
    let scan = resonance_scan(&grid, &schedule, &params, config.initial, &options).map_err(HarnessError::run)?;
    let h2 = params.hbar_eff * params.hbar_eff;
    let mut t = Table::new(&SCAN_COLUMNS);
    for i in 0..scan.len() {
        t.push(vec![
            fmt_f64(scan.r_grid[i]),
            scan.periods.to_string(),
            fmt_f64(scan.p0_values[i]),
            fmt_f64(scan.p0_sigma[i]),
            fmt_f64(scan.p2_values[i]),
            fmt_f64(scan.p2_sigma[i]),
            fmt_f64(scan.p2_values[i] / h2),
            scan.n_valid[i].to_string(),
            scan.errors[i].join("; "),
        ]);
    }
    let (r, p0, p2) = scan.valid_points();
    let data = ScanData { r, p0, p2, periods: scan.periods };
    let report = analyze_scan(&data, config.scan.cusp_half_width, scan.len());

    let mut w = Writer::new(config, "scan-r")?;
    w.table("scan.csv", &t)?;
    w.json("scan_report.json", &report)?;
    let mut messages = Vec::new();
    let failed: usize = scan.errors.iter().map(Vec::len).sum();
    if failed > 0 {
        messages.push(format!("warning: {failed} ensemble runs failed; see the errors column"));
    }
    for (name, e) in [("width", &report.width.error), ("cusp", &report.cusp.error), ("fit", &report.fit.error)] {
        if let Some(e) = e {
            messages.push(format!("warning: {name}: {e}"));
        }
    }
    Ok(w.finish(0, messages))
}

/// Reads a `scan.csv` written by [`cmd_scan_r`].
pub fn read_scan_csv(path: &Path) -> Result<ScanData, HarnessError> {
    let t = Table::read(path)?;
    for c in SCAN_COLUMNS {
        t.column(c, path)?;
    }
    let r = t.f64_column("r", path)?;
    let p0 = t.f64_column("p0", path)?;
    let p2 = t.f64_column("p2_scaled", path)?;
    let n_valid = t.f64_column("n_valid", path)?;
    let periods = t.f64_column("periods", path)?;
    let Some(&n) = periods.first() else {
        return Err(HarnessError::Schema { path: path.to_path_buf(), message: "no data rows".into() });
    };
    if periods.iter().any(|p| *p != n) || !(n >= 1.0) || n.fract() != 0.0 {
        return Err(HarnessError::Schema {
            path: path.to_path_buf(),
            message: "column `periods` must hold one positive integer".into(),
        });
    }
    let keep: Vec<usize> = (0..r.len()).filter(|&i| n_valid[i] > 0.0).collect();
    Ok(ScanData {
        r: keep.iter().map(|&i| r[i]).collect(),
        p0: keep.iter().map(|&i| p0[i]).collect(),
        p2: keep.iter().map(|&i| p2[i]).collect(),
        periods: n as usize,
    })
}

/// Fits the lineshape ansatz to a stored scan; writes `<stem>.fit.json` next
/// to it unless `out` is given. A fit that does not converge still writes
/// its best parameters and asks for exit status 2.
pub fn cmd_fit(config: &RunConfig, scan_csv: &Path, out: Option<&Path>) -> Result<CommandOutcome, HarnessError> {
    let data = read_scan_csv(scan_csv)?;
    let report = FitReport::of(fit_lineshape(&LineshapeData { r: &data.r, p0: &data.p0, p2: &data.p2, periods: data.periods }));
    // keep the provenance of the scan when its sidecar is readable
    let source_config = std::fs::read_to_string(sidecar_path(scan_csv))
        .ok()
        .and_then(|s| serde_json::from_str::<Metadata>(&s).ok())
        .map(|m| m.config);
    let config = source_config.as_ref().unwrap_or(config);
    let target = match out {
        Some(p) => p.to_path_buf(),
        None => scan_csv.with_extension("fit.json"),
    };
    let dir = target.parent().filter(|p| !p.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let mut w = Writer::in_dir(config, "fit", dir)?;
    w.source = Some(scan_csv.display().to_string());
    w.json(&target.file_name().expect("fit output names a file").to_string_lossy(), &report)?;
    let code = if report.converged { 0 } else { 2 };
    let messages = report.error.iter().map(|e| format!("error: fit: {e}")).collect();
    Ok(w.finish(code, messages))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelsReport {
    pub grid_points: usize,
    pub refinements: usize,
    pub tracks: usize,
    pub broken_tracks: usize,
    pub flags: usize,
    pub crossings: usize,
    pub refined_crossings: usize,
    pub gap_statistics: Outcome<GapStatistics>,
    /// Over the states with at least the thick weight at the first grid point.
    pub localization: EnsembleLocalization,
}

/// `tracks.csv` (long format, one row per track point), `track_flags.csv`,
/// `crossings.csv` and `levels_report.json`.
pub fn cmd_level_dynamics(config: &RunConfig) -> Result<CommandOutcome, HarnessError> {
    let mut params = params(config)?;
    params.half_width = config.levels.half_width;
    let psi0 = init_state(&params, config.initial).map_err(HarnessError::run)?;
    let family = DoubleKickFamily::new(&params);
    let options = config.levels.sweep_options();
    let set = lambda_sweep(&family, &config.levels.lambda.points(), psi0.amplitudes(), &options).map_err(HarnessError::run)?;
    let found: Vec<_> =
        detect_avoided_crossings(&set).into_iter().filter(|c| c.weight >= config.levels.crossing_weight).collect();
    let crossings = refine_avoided_crossings(&family, &found, config.levels.refine_gap);
    let kbar = params.hbar_eff;

    let mut tracks = Table::new(&[
        "lambda",
        "track_id",
        "eigenphase",
        "weight",
        "p_centroid_lattice",
        "p_centroid_scaled",
        "weight_class",
        "broken",
    ]);
    for t in &set.tracks {
        for p in &t.points {
            let class = match WeightClass::classify(p.weight, &options) {
                WeightClass::Thick => "thick",
                WeightClass::Thin => "thin",
                WeightClass::Below => "below",
            };
            tracks.push(vec![
                fmt_f64(p.lambda),
                t.id.to_string(),
                fmt_f64(p.eigenphase),
                fmt_f64(p.weight),
                fmt_f64(p.p_centroid),
                fmt_f64(kbar * p.p_centroid),
                class.to_string(),
                u8::from(t.broken).to_string(),
            ]);
        }
    }
    let mut flags = Table::new(&["kind", "track_id", "lambda_from", "lambda_to", "overlap", "second_overlap"]);
    for f in &set.flags {
        flags.push(match *f {
            TrackFlag::Split { track, lambda_from, lambda_to, overlap } => vec![
                "split".into(),
                track.to_string(),
                fmt_f64(lambda_from),
                fmt_f64(lambda_to),
                fmt_f64(overlap),
                String::new(),
            ],
            TrackFlag::Ambiguous { track, lambda_from, lambda_to, best, second } => vec![
                "ambiguous".into(),
                track.to_string(),
                fmt_f64(lambda_from),
                fmt_f64(lambda_to),
                fmt_f64(best),
                fmt_f64(second),
            ],
        });
    }
    let mut acs = Table::new(&["lambda_star", "gap", "track_a", "track_b", "L_lattice", "L_scaled", "phase_star", "refined", "weight"]);
    for c in &crossings {
        acs.push(vec![
            fmt_f64(c.lambda_star),
            fmt_f64(c.gap),
            c.level_pair.0.to_string(),
            c.level_pair.1.to_string(),
            fmt_f64(c.momentum_distance),
            fmt_f64(kbar * c.momentum_distance),
            fmt_f64(c.phase_star),
            u8::from(c.refined).to_string(),
            fmt_f64(c.weight),
        ]);
    }
    let first = set.lambda_grid[0];
    let spectrum = diagonalize(&family.operator(first), first, psi0.amplitudes()).map_err(HarnessError::run)?;
    let localization = ensemble_localization(&spectrum, &MomentumBasis::of(&params), options.thick_weight);
    let report = LevelsReport {
        grid_points: set.lambda_grid.len(),
        refinements: set.refinements,
        tracks: set.tracks.len(),
        broken_tracks: set.tracks.iter().filter(|t| t.broken).count(),
        flags: set.flags.len(),
        crossings: crossings.len(),
        refined_crossings: crossings.iter().filter(|c| c.refined).count(),
        gap_statistics: gap_statistics(&crossings, &GapStatisticsOptions::default()).into(),
        localization,
    };
    let mut w = Writer::new(config, "level-dynamics")?;
    w.table("tracks.csv", &tracks)?;
    w.table("track_flags.csv", &flags)?;
    w.table("crossings.csv", &acs)?;
    w.json("levels_report.json", &report)?;
    let mut messages = Vec::new();
    if !set.flags.is_empty() {
        messages.push(format!("note: {} track flags written to track_flags.csv", set.flags.len()));
    }
    if let Some(e) = &report.gap_statistics.error {
        messages.push(format!("warning: gap statistics: {e}"));
    }
    Ok(w.finish(0, messages))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalReport {
    pub kick_strength: f64,
    pub d_per_kick: f64,
    pub d_per_kick_err: f64,
    pub d_per_period: f64,
    pub d_per_period_err: f64,
    /// `K^2 / 2`.
    pub quasilinear_per_kick: f64,
    pub sub_chaotic: bool,
    pub ensemble_size: usize,
    pub seed: u64,
    pub p0_band: f64,
    pub final_mean_p: f64,
    pub final_mean_p_err: f64,
}

impl ClassicalReport {
    fn of(k: f64, band: f64, d: &ClassicalDiffusion) -> Self {
        Self {
            kick_strength: k,
            d_per_kick: d.d_per_kick,
            d_per_kick_err: d.d_per_kick_err,
            d_per_period: d.d_per_period,
            d_per_period_err: d.d_per_period_err,
            quasilinear_per_kick: d.quasilinear,
            sub_chaotic: d.sub_chaotic,
            ensemble_size: d.ensemble_size,
            seed: d.seed,
            p0_band: band,
            final_mean_p: d.run.final_mean_p,
            final_mean_p_err: d.run.final_mean_p_err,
        }
    }
}

/// `classical.csv` in the quantum time-series schema, `classical_kicks.csv`
/// with every kick, and `classical_report.json`.
pub fn cmd_classical(config: &RunConfig) -> Result<CommandOutcome, HarnessError> {
    let kbar = config.system.resolved_hbar_eff();
    let k = config.system.kick_strength;
    let schedule = config.schedule().map_err(HarnessError::run)?;
    let band = config.classical.p0_band.unwrap_or(kbar * (config.scan.p0_window as f64 + 0.5));
    let d = classical_diffusion(k, &schedule, config.classical.ensemble_size, config.run.seed, Some(band))
        .map_err(HarnessError::run)?;
    let h2 = kbar * kbar;
    let mut series = Table::new(&["kick_index", "p2_scaled", "p2_lattice", "p0"]);
    for (n, (p2, p0)) in d.run.period_p2.iter().zip(&d.run.period_p0).enumerate() {
        series.push(vec![(n + 1).to_string(), fmt_f64(*p2), fmt_f64(p2 / h2), fmt_f64(*p0)]);
    }
    let mut kicks = Table::new(&["kick_index", "time", "p2_scaled"]);
    for r in &d.run.kicks {
        kicks.push(vec![r.kick_index.to_string(), fmt_f64(r.time), fmt_f64(r.p2)]);
    }
    let report = ClassicalReport::of(k, band, &d);
    let mut w = Writer::new(config, "classical")?;
    w.table("classical.csv", &series)?;
    w.table("classical_kicks.csv", &kicks)?;
    w.json("classical_report.json", &report)?;
    let mut messages = vec![format!(
        "D_cl = {:.4} +- {:.4} per kick, {:.4} +- {:.4} per period (K^2/2 = {})",
        d.d_per_kick, d.d_per_kick_err, d.d_per_period, d.d_per_period_err, d.quasilinear
    )];
    if d.sub_chaotic {
        messages.push(format!("warning: K = {k} is not in the chaotic regime; the growth need not be diffusive"));
    }
    Ok(w.finish(0, messages))
}
