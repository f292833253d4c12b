//! Acceptance suite: one pass/fail line per criterion.
//!
//! `cargo test --release -p subfourier --test acceptance` runs everything;
//! trailing numbers (`-- 5 7`) select criteria. CSVs and reports of the runs
//! land in `target/acceptance/`. A criterion that misses its threshold prints
//! FAIL; the process exits non-zero when a check could not be evaluated, and
//! also on a FAIL when `SUBFOURIER_ACCEPTANCE_STRICT` is set.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use subfourier::classical::{classical_diffusion, classical_evolve, ClassicalEnsemble};
use subfourier::floquet::*;
use subfourier::harness::config::{DriveSection, GridSpec, RunConfig};
use subfourier::harness::{cmd_classical, cmd_evolve, cmd_scan_r, ScanReport};
use subfourier::model::*;
use subfourier::propagator::Propagator;
use subfourier::spectroscopy::*;

type Verdict = Result<(bool, String), String>;

const K: f64 = 10.0;
const BETAS: [f64; 4] = [0.0, 0.125, 0.25, 0.375];

fn kbar() -> f64 {
    cesium_hbar_eff(REFERENCE_PERIOD_US)
}

fn out_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance").join(name)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn params(k: f64, beta: f64, m: usize) -> Result<SystemParams, String> {
    SystemParams::new(k, kbar(), beta, m).map_err(|e| e.to_string())
}

fn unitarity() -> Verdict {
    let p = params(K, 0.0, 256)?;
    let prop = Propagator::new(&p);
    let mut psi = init_state(&p, InitialState::DeltaAtZero).map_err(|e| e.to_string())?;
    let mut drift: f64 = 0.0;
    for n in 0..200 {
        prop.period(&mut psi, (0.5 + 0.37 * n as f64).fract());
        drift = drift.max((psi.norm_sqr() - 1.0).abs());
    }
    let mut residual: f64 = 0.0;
    for lambda in [0.0, 0.25, 0.5, 0.9] {
        residual = residual.max(unitarity_residual(&build_u(lambda, &p)));
    }
    Ok((drift < 1e-11 && residual < 1e-10, format!("max |norm-1| = {drift:.2e}, U residual = {residual:.2e}")))
}

fn floquet_oracle() -> Verdict {
    let p = params(5.0, 0.0, 32)?;
    let prop = Propagator::new(&p);
    let psi0 = init_state(&p, InitialState::DeltaAtZero).map_err(|e| e.to_string())?;
    let lambda = 0.3;
    let spectrum = floquet_spectrum(&p, lambda, &psi0).map_err(|e| e.to_string())?;
    let basis = MomentumBasis::of(&p);
    let mut psi = psi0.clone();
    let mut worst: f64 = 0.0;
    for n in 1..=50u64 {
        prop.period(&mut psi, lambda);
        if [1, 17, 50].contains(&n) {
            let direct = basis.p2_of(psi.amplitudes());
            worst = worst.max(rel(p2_floquet_coherent(&spectrum, &psi0, n, &p), direct));
        }
    }
    Ok((worst < 1e-8, format!("max relative error over n = 1, 17, 50: {worst:.2e}")))
}

fn localization_dynamics() -> Verdict {
    let mut config = RunConfig::default();
    config.drive = DriveSection { ratio: 1.0, lambda0: 0.5, periods: 200 };
    config.run.output = out_dir("localization");
    cmd_evolve(&config).map_err(|e| e.to_string())?;
    cmd_classical(&config).map_err(|e| e.to_string())?;

    let p = params(K, 0.0, 256)?;
    let prop = Propagator::new(&p);
    let psi = init_state(&p, InitialState::DeltaAtZero).map_err(|e| e.to_string())?;
    let ev = prop.evolve(&mut psi.clone(), &config.schedule().map_err(|e| e.to_string())?, 0).map_err(|e| e.to_string())?;
    let q = ev.records[199].p2 / ev.records[49].p2;
    let run = classical_evolve(
        K,
        &config.schedule().map_err(|e| e.to_string())?,
        ClassicalEnsemble::uniform(100_000, 1).map_err(|e| e.to_string())?,
        None,
    )
    .map_err(|e| e.to_string())?;
    let c = run.period_p2[199] / run.period_p2[49];
    Ok((q < 1.3 && c > 3.0, format!("quantum p2(200)/p2(50) = {q:.3}, classical = {c:.2}")))
}

fn localization_length_check() -> Verdict {
    let (mut sum, mut count, mut rejected) = (0.0, 0usize, 0usize);
    for beta in [0.0, 0.25] {
        let p = params(K, beta, 128)?;
        let psi0 = init_state(&p, InitialState::DeltaAtZero).map_err(|e| e.to_string())?;
        let basis = MomentumBasis::of(&p);
        for lambda in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let spectrum = floquet_spectrum(&p, lambda, &psi0).map_err(|e| e.to_string())?;
            let ens = ensemble_localization(&spectrum, &basis, 1e-2);
            sum += ens.mean_length * ens.count as f64;
            count += ens.count;
            rejected += ens.rejected;
        }
    }
    if count == 0 {
        return Err("no exponentially localized high-weight states".into());
    }
    let ell = sum / count as f64;
    Ok(((2.0..=15.0).contains(&ell), format!("mean ell = {ell:.2} sites over {count} states ({rejected} rejected)")))
}

/// The N = 100 and N = 20 resonance scans behind criteria 5, 6 and 11.
struct Scans {
    n100: ScanReport,
    n20: ScanReport,
}

fn scan(periods: usize, coarse: f64, core: f64) -> Result<ScanReport, String> {
    let mut config = RunConfig::default();
    config.drive.periods = periods;
    config.scan.segments = vec![
        GridSpec { min: 1.0 - coarse, max: 1.0 + coarse, count: 41 },
        GridSpec { min: 1.0 - core, max: 1.0 + core, count: 101 },
    ];
    config.scan.lambda0_ensemble = 16;
    config.scan.quasimomenta = BETAS.to_vec();
    config.scan.p0_window = 2;
    config.run.output = out_dir(&format!("scan_n{periods}"));
    cmd_scan_r(&config).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(config.run.output.join("scan_report.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn scans() -> Result<Scans, String> {
    Ok(Scans { n100: scan(100, 0.02, 0.001)?, n20: scan(20, 0.1, 0.005)? })
}

fn sub_fourier(s: &Scans) -> Verdict {
    let w100 = s.n100.width.value.ok_or_else(|| format!("N=100 width: {:?}", s.n100.width.error))?;
    let w20 = s.n20.width.value.ok_or_else(|| format!("N=20 width: {:?}", s.n20.width.error))?;
    let ratio = w100.fwhm_r / w20.fwhm_r;
    let pass = w100.fwhm_r < 0.01 && w100.sub_fourier_factor >= 3.0 && (0.12..=0.28).contains(&ratio);
    Ok((
        pass,
        format!(
            "FWHM(100) = {:.3e}, factor = {:.1}, FWHM(20) = {:.3e}, ratio = {ratio:.3}",
            w100.fwhm_r, w100.sub_fourier_factor, w20.fwhm_r
        ),
    ))
}

fn cusp(s: &Scans) -> Verdict {
    let c = s.n100.cusp.value.ok_or_else(|| format!("cusp: {:?}", s.n100.cusp.error))?;
    Ok((
        c.preferred == CuspModel::Triangular,
        format!("{:?} preferred, SSE parabolic/triangular = {:.2} over {} points", c.preferred, c.ratio, c.n_points),
    ))
}

fn lineshape(s: &Scans) -> Verdict {
    let truth = LineshapeParams { p2_dl: 25.0, d_cl: 100.0, lambda_scale: 5e-4, amplitude: 2.0 };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let r: Vec<f64> = (0..201).map(|i| 0.98 + 0.0002 * i as f64).collect();
    let p0: Vec<f64> = r.iter().map(|&x| lineshape_p0(&truth, x, 100) * (1.0 + 0.01 * normal.sample(&mut rng))).collect();
    let p2: Vec<f64> = r.iter().map(|&x| lineshape_p2(&truth, x, 100) * (1.0 + 0.01 * normal.sample(&mut rng))).collect();
    let f = fit_lineshape(&LineshapeData { r: &r, p0: &p0, p2: &p2, periods: 100 }).map_err(|e| e.to_string())?;
    let worst = [
        rel(f.p2_dl, truth.p2_dl),
        rel(f.d_cl, truth.d_cl),
        rel(f.lambda_scale, truth.lambda_scale),
        rel(f.amplitude, truth.amplitude),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let sim = s.n100.fit.fit.as_ref().ok_or_else(|| format!("N=100 fit: {:?}", s.n100.fit.error))?;
    Ok((
        worst < 0.05 && s.n100.fit.converged && sim.residual < 0.1,
        format!(
            "synthetic worst parameter error = {:.2}%, N=100 residual = {:.1}% of peak (converged: {})",
            100.0 * worst,
            100.0 * sim.residual,
            s.n100.fit.converged
        ),
    ))
}

fn diffusion_law() -> Verdict {
    let periods = 300;
    let p = params(K, 0.0, 512)?;
    let prop = Propagator::new(&p);
    let psi = init_state(&p, InitialState::DeltaAtZero).map_err(|e| e.to_string())?;
    let lambda0s = lambda0_ensemble(16);
    let mut rows = Vec::new();
    for k in -6i32..=6 {
        let r = 1.0 + 5e-4 * k as f64;
        let mut mean = vec![0.0; periods];
        for &l0 in &lambda0s {
            let s = DriveSchedule::new(r, l0, periods).map_err(|e| e.to_string())?;
            let ev = prop.evolve(&mut psi.clone(), &s, 0).map_err(|e| e.to_string())?;
            for (m, rec) in mean.iter_mut().zip(&ev.records) {
                *m += rec.p2 / lambda0s.len() as f64;
            }
        }
        let d = diffusion_constant(&mean, None).map_err(|e| e.to_string())?;
        rows.push((r, d.d_quantum));
    }
    let dir = out_dir("diffusion");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut t = subfourier::harness::output::Table::new(&["r", "d_quantum"]);
    for (r, d) in &rows {
        t.push(vec![subfourier::harness::output::fmt_f64(*r), subfourier::harness::output::fmt_f64(*d)]);
    }
    t.write(&dir.join("diffusion.csv")).map_err(|e| e.to_string())?;

    let x: Vec<f64> = rows.iter().map(|(r, _)| (r - 1.0).abs()).collect();
    let y: Vec<f64> = rows.iter().map(|(_, d)| *d).collect();
    let fit = weighted_line(&x, &y, &vec![1.0; x.len()]).ok_or("degenerate diffusion fit")?;
    let d0 = y[6];
    let edge = 0.5 * (y[0] + y[12]);
    Ok((
        fit.r2 > 0.9 && d0 < 0.05 * edge,
        format!("R^2 = {:.3} over {} points, D(1)/D(1 +- 0.003) = {:.4}", fit.r2, x.len(), d0 / edge),
    ))
}

fn adiabatic() -> Verdict {
    let periods = 100;
    let delta = 5e-4;
    let pf = params(K, 0.0, 128)?;
    let family = DoubleKickFamily::new(&pf);
    let psi_f = init_state(&pf, InitialState::DeltaAtZero).map_err(|e| e.to_string())?;
    let pd = params(K, 0.0, 256)?;
    let prop = Propagator::new(&pd);
    let psi_d = init_state(&pd, InitialState::DeltaAtZero).map_err(|e| e.to_string())?;
    let (mut predicted, mut direct, mut n) = (0.0, 0.0, 0.0);
    for &l0 in &lambda0_ensemble(8) {
        for d in [delta, -delta] {
            let rp = adiabatic_prediction_at_rate(&family, l0, d, periods, psi_f.amplitudes(), &SweepOptions::default())
                .map_err(|e| e.to_string())?;
            let s = DriveSchedule::new(1.0 + d, l0, periods).map_err(|e| e.to_string())?;
            let ev = prop.evolve(&mut psi_d.clone(), &s, 0).map_err(|e| e.to_string())?;
            predicted += rp.prediction.p2;
            direct += ev.records[periods - 1].p2;
            n += 1.0;
        }
    }
    let ratio = predicted / direct;
    Ok((
        (ratio - 1.0).abs() <= 0.25,
        format!("ensemble p2: predicted {:.1}, direct {:.1}, ratio {ratio:.3}", predicted / n, direct / n),
    ))
}

fn gap_statistics_check() -> Verdict {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let synthetic: Vec<AvoidedCrossing> = (0..20_000)
        .map(|_| AvoidedCrossing {
            lambda_star: rng.random_range(0.0..1.0),
            gap: 10f64.powf(rng.random_range(-6.0..-2.0)),
            level_pair: (0, 1),
            momentum_distance: 1.0,
            phase_star: 0.0,
            phase_slope: 1.0,
            bracket: (0.0, 0.0),
            refined: true,
            weight: 1.0,
        })
        .collect();
    let syn = gap_statistics(&synthetic, &GapStatisticsOptions::default()).map_err(|e| e.to_string())?;

    let mut all = Vec::new();
    for beta in [0.2, 0.4] {
        let p = params(K, beta, 48)?;
        let family = DoubleKickFamily::new(&p);
        let psi = init_state(&p, InitialState::DeltaAtZero).map_err(|e| e.to_string())?;
        let grid: Vec<f64> = (0..201).map(|i| i as f64 / 200.0).collect();
        let opts = SweepOptions { step_floor: 1e-3, ..SweepOptions::default() };
        let set = lambda_sweep(&family, &grid, psi.amplitudes(), &opts).map_err(|e| e.to_string())?;
        let heavy: Vec<AvoidedCrossing> =
            detect_avoided_crossings(&set).into_iter().filter(|a| a.weight >= opts.thick_weight).collect();
        all.extend(refine_avoided_crossings(&family, &heavy, 0.1));
    }
    let phys = gap_statistics(&all, &GapStatisticsOptions::default()).map_err(|e| e.to_string())?;
    Ok((
        (syn.exponent + 1.0).abs() <= 0.05 && (-1.4..=-0.6).contains(&phys.exponent),
        format!(
            "synthetic exponent = {:.3}, physical exponent = {:.3} +- {:.3} from {} crossings",
            syn.exponent, phys.exponent, phys.exponent_err, phys.count
        ),
    ))
}

fn classical_baseline() -> Verdict {
    let s = DriveSchedule::new(1.0, 0.5, 100).map_err(|e| e.to_string())?;
    let d = classical_diffusion(K, &s, 100_000, 1, None).map_err(|e| e.to_string())?;
    Ok((
        rel(d.d_per_kick, d.quasilinear) < 0.3,
        format!("D = {:.2} +- {:.2} per kick, K^2/2 = {:.1}", d.d_per_kick, d.d_per_kick_err, d.quasilinear),
    ))
}

fn main() {
    let selected: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |i: u32| selected.is_empty() || selected.contains(&i);
    let strict = std::env::var_os("SUBFOURIER_ACCEPTANCE_STRICT").is_some();

    let needs_scans = [5, 6, 11].iter().any(|&i| wanted(i));
    let start = Instant::now();
    let scans = if needs_scans { Some(scans()) } else { None };
    let scan_time = start.elapsed();
    let with_scans = |f: fn(&Scans) -> Verdict| -> Verdict {
        match scans.as_ref().expect("scans requested") {
            Ok(s) => f(s),
            Err(e) => Err(format!("scan failed: {e}")),
        }
    };

    let (mut failed, mut broken) = (0, 0);
    let mut report = |id: u32, title: &str, f: &dyn Fn() -> Verdict| {
        if !wanted(id) {
            return;
        }
        let t = Instant::now();
        let verdict = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok((true, detail)) => println!("[{id:2}] PASS  {title}: {detail} ({secs:.1} s)"),
            Ok((false, detail)) => {
                failed += 1;
                println!("[{id:2}] FAIL  {title}: {detail} ({secs:.1} s)");
            }
            Err(e) => {
                broken += 1;
                println!("[{id:2}] ERROR {title}: {e} ({secs:.1} s)");
            }
        }
    };

    report(1, "unitarity", &unitarity);
    report(2, "Floquet oracle", &floquet_oracle);
    report(3, "dynamical localization", &localization_dynamics);
    report(4, "localization length", &localization_length_check);
    if needs_scans {
        println!("     (resonance scans for 5, 6, 11: {:.1} s)", scan_time.as_secs_f64());
    }
    report(5, "sub-Fourier width", &|| with_scans(sub_fourier));
    report(6, "cusp", &|| with_scans(cusp));
    report(7, "residual diffusion law", &diffusion_law);
    report(8, "adiabatic prediction", &adiabatic);
    report(9, "avoided-crossing statistics", &gap_statistics_check);
    report(10, "classical baseline", &classical_baseline);
    report(11, "lineshape fit", &|| with_scans(lineshape));

    println!("acceptance: {failed} failed, {broken} could not be evaluated ({:.0} s)", start.elapsed().as_secs_f64());
    if broken > 0 || (strict && failed > 0) {
        std::process::exit(1);
    }
}
