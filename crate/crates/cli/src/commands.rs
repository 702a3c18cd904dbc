use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use sparsemag_core::field::{sample_field, strategy_points, FieldMap, ReferenceSet, Strategy};
use sparsemag_core::kriging::{fit, Calibration, FitOptions};
use sparsemag_core::magnetometry::{
    contrast, field_grid, ideal_branch_end, population_trace, response_curve, EnsembleSize, NoiseEnsemble,
    SensitivityReport, WorkingBranch,
};
use sparsemag_core::metrics::{nearest_neighbor_map, MetricsReport};
use sparsemag_core::noise::{detuning_grid, stream_rng};
use sparsemag_core::pulse::{
    ensemble_objective, fidelity_profile, optimize_pm, GateSpec, GateTarget, OptimizeOptions, OptimizeOutcome,
    PmParams, Waveform,
};
use sparsemag_core::sensing::{calibrate_physical, sense, PhysicalWindow, Sensor};
use sparsemag_core::spin::{build_xy8, PulseKind, PulseSequence};

use crate::config::{ExperimentConfig, PulseChoice};
use crate::output::{num, OutputDir, PgmFormat};
use crate::CliError;

// Independent random streams derived from the master seed.
const PURPOSE_ENSEMBLE: u64 = 0;
const PURPOSE_LAYOUT: u64 = 1;
const PURPOSE_READOUT: u64 = 2;
const PURPOSE_FIT: u64 = 3;
const PURPOSE_OPTIMIZE: u64 = 4;
const PURPOSE_REPETITION: u64 = 100;

fn sub_seed(seed: u64, purpose: u64) -> u64 {
    stream_rng(seed, 1 << 32 | purpose).gen()
}

fn log(msg: &str) {
    eprintln!("{msg}");
}

fn resolve_pm(cfg: &ExperimentConfig) -> Result<(PmParams, Option<OptimizeOutcome>), CliError> {
    if let Some(p) = cfg.pm_file_params()? {
        return Ok((p, None));
    }
    log("optimizing PM parameters");
    let outcome = run_optimizer(cfg, &PmParams::default())?;
    Ok((outcome.params.clone(), Some(outcome)))
}

fn run_optimizer(cfg: &ExperimentConfig, initial: &PmParams) -> Result<OptimizeOutcome, CliError> {
    let grid = detuning_grid(cfg.optimize.grid_points, cfg.noise.to_core().fwhm)?;
    let opts = OptimizeOptions {
        budget: cfg.optimize.budget,
        restarts: cfg.optimize.restarts,
        dt: cfg.sequence.dt_ns,
        seed: sub_seed(cfg.seed(), PURPOSE_OPTIMIZE),
        ..OptimizeOptions::default()
    };
    Ok(optimize_pm(initial, &grid, opts)?)
}

fn sequence(cfg: &ExperimentConfig, choice: PulseChoice, pm: &PmParams) -> Result<PulseSequence, CliError> {
    let s = &cfg.sequence;
    let seq = match choice {
        PulseChoice::Rect => {
            build_xy8(s.repetitions, s.rect_duration_ns, s.spacing_ns - s.rect_duration_ns, PulseKind::Rectangular)?
        }
        PulseChoice::Pm => build_xy8(
            s.repetitions,
            pm.duration,
            s.spacing_ns - pm.duration,
            PulseKind::PhaseModulated(pm.clone()),
        )?,
    };
    Ok(seq)
}

fn ensemble(cfg: &ExperimentConfig, seq: &PulseSequence, seed: u64) -> Result<NoiseEnsemble, CliError> {
    let size = EnsembleSize::new(cfg.noise.detunings, cfg.noise.trajectories);
    Ok(NoiseEnsemble::draw(&cfg.noise.to_core(), size, seq.total_time(), sub_seed(seed, PURPOSE_ENSEMBLE))?)
}

fn pulse_name(choice: PulseChoice) -> &'static str {
    match choice {
        PulseChoice::Rect => "rect",
        PulseChoice::Pm => "pm",
    }
}

pub fn optimize_pulse(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let initial = cfg.pm_file_params()?.unwrap_or_default();
    let grid = detuning_grid(cfg.optimize.grid_points, cfg.noise.to_core().fwhm)?;
    let dt = cfg.sequence.dt_ns;
    let outcome = run_optimizer(cfg, &initial)?;
    if outcome.no_improvement {
        log("warning: optimizer did not improve on the initial parameters; returning them unchanged");
    }
    let rect = GateSpec::new(GateTarget::X, Waveform::Rectangular { duration: cfg.sequence.rect_duration_ns });
    let pm_initial = GateSpec::new(GateTarget::X, Waveform::PhaseModulated(initial.clone()));
    let pm_final = GateSpec::new(GateTarget::X, Waveform::PhaseModulated(outcome.params.clone()));
    let rect_objective = ensemble_objective(&rect, &grid, dt)?;
    let profiles = [
        fidelity_profile(&rect, &grid, dt)?,
        fidelity_profile(&pm_initial, &grid, dt)?,
        fidelity_profile(&pm_final, &grid, dt)?,
    ];

    #[derive(Serialize)]
    struct Report {
        rect_objective: f64,
        pm_initial_objective: f64,
        pm_objective: f64,
        improvement_over_rect: f64,
        evaluations: usize,
        budget: usize,
        no_improvement: bool,
    }
    let report = Report {
        rect_objective,
        pm_initial_objective: outcome.initial_objective,
        pm_objective: outcome.objective,
        improvement_over_rect: outcome.objective - rect_objective,
        evaluations: outcome.evaluations,
        budget: cfg.optimize.budget,
        no_improvement: outcome.no_improvement,
    };
    let rows: Vec<Vec<String>> = grid
        .iter()
        .enumerate()
        .map(|(k, &(d, w))| {
            vec![
                num(d),
                num(d / (2.0 * std::f64::consts::PI) * 1e3),
                num(w),
                num(profiles[0][k]),
                num(profiles[1][k]),
                num(profiles[2][k]),
            ]
        })
        .collect();

    let mut out = OutputDir::create(&cfg.out)?;
    out.write_bytes("pm_params.json", format!("{}\n", outcome.params.to_json()).as_bytes())?;
    out.write_csv(
        "fidelity_profile.csv",
        &["detuning_rad_per_ns", "detuning_mhz", "weight", "rect", "pm_initial", "pm_optimized"],
        &rows,
    )?;
    out.write_json("objective.json", &report)?;
    out.finish("optimize-pulse", cfg)?;
    log(&format!(
        "objective: rect {:.4}, pm initial {:.4}, pm optimized {:.4}",
        rect_objective, outcome.initial_objective, outcome.objective
    ));
    Ok(())
}

pub fn characterize(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (pm, optimized) = resolve_pm(cfg)?;
    let mut out = OutputDir::create(&cfg.out)?;
    if optimized.is_some() {
        out.write_bytes("pm_params.json", format!("{}\n", pm.to_json()).as_bytes())?;
    }

    #[derive(Serialize)]
    struct Entry {
        pulse: &'static str,
        evolution_time_ns: f64,
        contrast: f64,
        trace_contrast: f64,
        trace_field_nt: f64,
        sensitivity: SensitivityReport,
    }
    let mut entries = Vec::new();
    for choice in [PulseChoice::Rect, PulseChoice::Pm] {
        let name = pulse_name(choice);
        log(&format!("characterizing {name}"));
        let seq = sequence(cfg, choice, &pm)?;
        let ens = ensemble(cfg, &seq, cfg.seed())?;
        let t = seq.total_time();
        let end = ideal_branch_end(t);
        let grid = field_grid(cfg.characterize.span * end, cfg.characterize.points);
        let curve = response_curve(name, &seq, &ens, &grid, cfg.sequence.dt_ns)?;
        let report = SensitivityReport::from_curve(&curve, cfg.noise.readout_noise)?;
        let trace_field = cfg.characterize.trace_field * end;
        let trace = population_trace(trace_field, &seq, &ens, cfg.sequence.dt_ns)?;
        let rows: Vec<Vec<String>> = curve.b_nt.iter().zip(&curve.p0).map(|(b, p)| vec![num(*b), num(*p)]).collect();
        out.write_csv(&format!("response_{name}.csv"), &["B_nT", "P0"], &rows)?;
        let rows: Vec<Vec<String>> = trace.iter().map(|(t, p)| vec![num(*t), num(*p)]).collect();
        out.write_csv(&format!("trace_{name}.csv"), &["time_ns", "P0"], &rows)?;
        entries.push(Entry {
            pulse: name,
            evolution_time_ns: t,
            contrast: curve.contrast(),
            trace_contrast: contrast(trace.iter().map(|x| x.1)),
            trace_field_nt: trace_field,
            sensitivity: report,
        });
    }

    #[derive(Serialize)]
    struct Summary<'a> {
        repetitions: usize,
        rect: &'a Entry,
        pm: &'a Entry,
        sensitivity_ratio: f64,
    }
    let summary = Summary {
        repetitions: cfg.sequence.repetitions,
        rect: &entries[0],
        pm: &entries[1],
        sensitivity_ratio: entries[0].sensitivity.eta_nt_per_sqrt_hz / entries[1].sensitivity.eta_nt_per_sqrt_hz,
    };
    out.write_json("sensitivity.json", &summary)?;
    out.finish("characterize", cfg)?;
    log(&format!(
        "eta: rect {:.4}, pm {:.4} nT/sqrt(Hz), ratio {:.3}",
        entries[0].sensitivity.eta_nt_per_sqrt_hz, entries[1].sensitivity.eta_nt_per_sqrt_hz, summary.sensitivity_ratio
    ));
    Ok(())
}

fn truth_map(cfg: &ExperimentConfig, window: &PhysicalWindow) -> Result<FieldMap, CliError> {
    Ok(cfg.preset()?.build(cfg.field.side, cfg.field.side)?.with_window(window.b_min_nt, window.b_max_nt))
}

fn layout(cfg: &ExperimentConfig, strategy: Strategy, n: usize, seed: u64) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rng = stream_rng(sub_seed(seed, PURPOSE_LAYOUT), 0);
    Ok(strategy_points(strategy, n, cfg.sampling.perturbation, cfg.sampling.distribution, &mut rng)?)
}

fn flag(clamped: bool) -> String {
    if clamped { "clamped".into() } else { String::new() }
}

pub fn sense_cmd(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let (pm, _) = resolve_pm(cfg)?;
    let seq = sequence(cfg, cfg.sequence.pulse, &pm)?;
    let t = seq.total_time();
    let window = PhysicalWindow::central(t, cfg.field.window_fraction)?;
    let truth = truth_map(cfg, &window)?;
    let coords = layout(cfg, cfg.strategy()?, cfg.sampling.n, cfg.seed())?;
    let ens = ensemble(cfg, &seq, cfg.seed())?;
    let sensor = Sensor {
        sequence: &seq,
        ensemble: &ens,
        branch: WorkingBranch::ideal(t),
        window,
        readout_noise: cfg.noise.readout_noise,
        dt: cfg.sequence.dt_ns,
    };
    let mut rng = stream_rng(sub_seed(cfg.seed(), PURPOSE_READOUT), 0);
    let data = sense(&truth, &coords, cfg.reconstruction.references, &sensor, &mut rng)?;

    let rows: Vec<Vec<String>> = data
        .coords
        .iter()
        .zip(&data.readings)
        .zip(&data.truth)
        .map(|((c, r), tv)| {
            vec![num(c.0), num(c.1), num(r.value), num(r.population), num(r.b_nt), num(*tv), flag(r.clamped)]
        })
        .collect();
    let refs = &data.references;
    let ref_rows: Vec<Vec<String>> = (0..refs.len())
        .map(|k| {
            let r = &data.reference_readings[k];
            vec![
                num(refs.coords[k].0),
                num(refs.coords[k].1),
                num(refs.nominal[k]),
                num(refs.measured[k]),
                num(r.population),
                flag(r.clamped),
            ]
        })
        .collect();
    let clamped = data.readings.iter().chain(&data.reference_readings).filter(|r| r.clamped).count();
    if clamped > 0 {
        log(&format!("warning: {clamped} readings fell outside the working branch and were clamped"));
    }

    #[derive(Serialize)]
    struct Info {
        pulse: &'static str,
        evolution_time_ns: f64,
        window: PhysicalWindow,
        samples: usize,
        references: usize,
        clamped: usize,
    }
    let mut out = OutputDir::create(&cfg.out)?;
    out.write_csv("samples.csv", &["x", "y", "value", "population", "b_nT", "truth", "warning"], &rows)?;
    out.write_csv("references.csv", &["x", "y", "nominal", "measured", "population", "warning"], &ref_rows)?;
    out.write_map("truth", &truth, PgmFormat::from_config(&cfg.image_format))?;
    out.write_json(
        "sensing.json",
        &Info {
            pulse: pulse_name(cfg.sequence.pulse),
            evolution_time_ns: t,
            window,
            samples: rows.len(),
            references: ref_rows.len(),
            clamped,
        },
    )?;
    out.finish("sense", cfg)?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Io(format!("cannot read {} (run `sense` first): {e}", path.display())))?;
    r.records().collect::<Result<_, _>>().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn field(rec: &csv::StringRecord, k: usize, path: &Path) -> Result<f64, CliError> {
    rec.get(k)
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| CliError::Io(format!("{}: bad value in column {k}", path.display())))
}

/// Sequence evolution time implied by the config, without running the optimizer.
fn evolution_time(cfg: &ExperimentConfig) -> f64 {
    cfg.sequence.repetitions as f64 * 8.0 * cfg.sequence.spacing_ns
}

pub fn reconstruct(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let samples_path = cfg.out.join("samples.csv");
    let refs_path = cfg.out.join("references.csv");
    let samples = read_csv(&samples_path)?;
    let ref_rows = read_csv(&refs_path)?;
    let mut coords = Vec::with_capacity(samples.len());
    let mut values = Vec::with_capacity(samples.len());
    for rec in &samples {
        coords.push((field(rec, 0, &samples_path)?, field(rec, 1, &samples_path)?));
        values.push(field(rec, 2, &samples_path)?);
    }
    let mut refs = ReferenceSet { coords: Vec::new(), nominal: Vec::new(), measured: Vec::new() };
    for rec in &ref_rows {
        refs.coords.push((field(rec, 0, &refs_path)?, field(rec, 1, &refs_path)?));
        refs.nominal.push(field(rec, 2, &refs_path)?);
        refs.measured.push(field(rec, 3, &refs_path)?);
    }
    if coords.len() < 2 {
        return Err(CliError::Numerical("reconstruction needs at least two samples".into()));
    }

    let window = PhysicalWindow::central(evolution_time(cfg), cfg.field.window_fraction)?;
    let calibration = cfg.calibration()?;
    let adjusted = calibrate_physical(calibration, &values, &refs, &window)?;
    let opts = FitOptions {
        starts: cfg.reconstruction.starts,
        evaluations_per_start: cfg.reconstruction.evaluations_per_start,
        seed: sub_seed(cfg.seed(), PURPOSE_FIT),
    };
    let model = fit(&coords, &adjusted, opts)?;
    if model.degenerate {
        log("warning: sample values are constant; the reconstruction is flat");
    }
    let side = cfg.field.side;
    let prediction = model.predict_grid(side, side)?.with_window(window.b_min_nt, window.b_max_nt);
    let baseline = nearest_neighbor_map(&coords, &values, side, side)?.with_window(window.b_min_nt, window.b_max_nt);
    let truth = truth_map(cfg, &window)?;
    let mabe = MetricsReport::compute(&truth, &prediction)?;
    let base = MetricsReport::compute(&truth, &baseline)?;

    #[derive(Serialize)]
    struct Report {
        calibration: Calibration,
        samples: usize,
        references: usize,
        degenerate: bool,
        mabe: MetricsReport,
        baseline: MetricsReport,
    }
    let format = PgmFormat::from_config(&cfg.image_format);
    let mut out = OutputDir::create(&cfg.out)?;
    out.write_map("reconstruction", &prediction, format)?;
    out.write_map("baseline", &baseline, format)?;
    out.write_bytes("model.json", format!("{}\n", model.to_json()).as_bytes())?;
    out.write_json(
        "metrics.json",
        &Report {
            calibration,
            samples: coords.len(),
            references: refs.len(),
            degenerate: model.degenerate,
            mabe,
            baseline: base,
        },
    )?;
    out.finish("reconstruct", cfg)?;
    log(&format!(
        "MABE: MAE {:.3e}, SSIM {:.5}, R2 {:.4}; nearest-neighbour: MAE {:.3e}, R2 {:.4}",
        mabe.mae, mabe.ssim, mabe.r2, base.mae, base.r2
    ));
    Ok(())
}

struct RepResult {
    setting: String,
    repetition: usize,
    seed: u64,
    metrics: Result<MetricsReport, String>,
}

fn sweep_once(cfg: &ExperimentConfig, strategy: Strategy, n: usize, seed: u64) -> Result<MetricsReport, CliError> {
    let (pm, _) = if cfg.sweep.noiseless { (PmParams::default(), None) } else { resolve_pm(cfg)? };
    let t = if cfg.sweep.noiseless { evolution_time(cfg) } else { sequence(cfg, cfg.sequence.pulse, &pm)?.total_time() };
    let window = PhysicalWindow::central(t, cfg.field.window_fraction)?;
    let truth = truth_map(cfg, &window)?;
    let coords = layout(cfg, strategy, n, seed)?;
    let values = if cfg.sweep.noiseless {
        sample_field(&truth, &coords)?
    } else {
        let seq = sequence(cfg, cfg.sequence.pulse, &pm)?;
        let ens = ensemble(cfg, &seq, seed)?;
        let sensor = Sensor {
            sequence: &seq,
            ensemble: &ens,
            branch: WorkingBranch::ideal(t),
            window,
            readout_noise: cfg.noise.readout_noise,
            dt: cfg.sequence.dt_ns,
        };
        let mut rng = stream_rng(sub_seed(seed, PURPOSE_READOUT), 0);
        let data = sense(&truth, &coords, cfg.reconstruction.references, &sensor, &mut rng)?;
        calibrate_physical(cfg.calibration()?, &data.values(), &data.references, &window)?
    };
    let opts = FitOptions {
        starts: cfg.reconstruction.starts,
        evaluations_per_start: cfg.reconstruction.evaluations_per_start,
        seed: sub_seed(seed, PURPOSE_FIT),
    };
    let model = fit(&coords, &values, opts)?;
    let side = cfg.field.side;
    Ok(MetricsReport::compute(&truth, &model.predict_grid(side, side)?)?)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if !mean.is_finite() || xs.len() < 2 {
        return (mean, if xs.len() < 2 { 0.0 } else { f64::NAN });
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let settings: Vec<(String, Strategy, usize)> = if cfg.sweep.variable == "n" {
        let s = cfg.strategy()?;
        cfg.sweep.n_values.iter().map(|&n| (n.to_string(), s, n)).collect()
    } else {
        cfg.sweep
            .strategies
            .iter()
            .map(|name| Strategy::parse(name).map(|s| (name.clone(), s, cfg.sampling.n)))
            .collect::<Result<_, _>>()?
    };
    let reps = cfg.sweep.repetitions;
    let rep_seeds: Vec<u64> = (0..reps).map(|r| sub_seed(cfg.seed(), PURPOSE_REPETITION + r as u64)).collect();
    let jobs: Vec<(usize, usize)> = (0..settings.len()).flat_map(|s| (0..reps).map(move |r| (s, r))).collect();
    log(&format!("sweeping {} over {} settings x {reps} repetitions", cfg.sweep.variable, settings.len()));
    let results: Vec<RepResult> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let (name, strategy, n) = &settings[s];
            RepResult {
                setting: name.clone(),
                repetition: r,
                seed: rep_seeds[r],
                metrics: sweep_once(cfg, *strategy, *n, rep_seeds[r]).map_err(|e| e.to_string()),
            }
        })
        .collect();

    let header = [
        "setting", "repetition", "seed", "mae", "rmse", "psnr_db", "r2", "ssim", "mae_std", "rmse_std", "psnr_db_std",
        "r2_std", "ssim_std", "error",
    ];
    #[derive(Serialize)]
    struct SettingSummary {
        setting: String,
        succeeded: usize,
        failed: usize,
        mean: [f64; 5],
        std: [f64; 5],
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (name, _, _) in &settings {
        let group: Vec<&RepResult> = results.iter().filter(|r| &r.setting == name).collect();
        let mut cols: [Vec<f64>; 5] = Default::default();
        for r in &group {
            let mut row = vec![r.setting.clone(), r.repetition.to_string(), r.seed.to_string()];
            match &r.metrics {
                Ok(m) => {
                    let vals = [m.mae, m.rmse, m.psnr, m.r2, m.ssim];
                    for (c, v) in cols.iter_mut().zip(vals) {
                        c.push(v);
                    }
                    row.extend(vals.iter().map(|v| num(*v)));
                    row.extend(std::iter::repeat_n(String::new(), 6));
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 10));
                    row.push(e.clone());
                }
            }
            rows.push(row);
        }
        let stats: Vec<(f64, f64)> = cols.iter().map(|c| if c.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(c) }).collect();
        let mut agg = vec![name.clone(), "mean".into(), String::new()];
        agg.extend(stats.iter().map(|s| num(s.0)));
        agg.extend(stats.iter().map(|s| num(s.1)));
        let failed = group.iter().filter(|r| r.metrics.is_err()).count();
        agg.push(if failed > 0 { format!("{failed} repetitions failed") } else { String::new() });
        rows.push(agg);
        summaries.push(SettingSummary {
            setting: name.clone(),
            succeeded: group.len() - failed,
            failed,
            mean: std::array::from_fn(|k| stats[k].0),
            std: std::array::from_fn(|k| stats[k].1),
        });
    }

    #[derive(Serialize)]
    struct Summary {
        variable: String,
        repetitions: usize,
        noiseless: bool,
        metrics_order: [&'static str; 5],
        best_by_mae: Option<String>,
        settings: Vec<SettingSummary>,
    }
    let best_by_mae = summaries
        .iter()
        .filter(|s| s.mean[0].is_finite())
        .min_by(|a, b| a.mean[0].total_cmp(&b.mean[0]))
        .map(|s| s.setting.clone());
    let summary = Summary {
        variable: cfg.sweep.variable.clone(),
        repetitions: reps,
        noiseless: cfg.sweep.noiseless,
        metrics_order: ["mae", "rmse", "psnr_db", "r2", "ssim"],
        best_by_mae,
        settings: summaries,
    };
    let mut out = OutputDir::create(&cfg.out)?;
    out.write_csv("sweep.csv", &header, &rows)?;
    out.write_json("sweep_summary.json", &summary)?;
    out.finish("sweep", cfg)?;
    if let Some(best) = &summary.best_by_mae {
        log(&format!("lowest mean MAE: {best}"));
    }
    Ok(())
}
