//! `synthesize`, `simulate`, `verify` and `reconstruct`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pcons_core::graph::{self, DirectedGraph};
use pcons_core::matrix::{self, Matrix};
use pcons_core::sim::{self, Metrics, Scenario, Trajectory};
use pcons_core::synthesis::{self, compute_sigma, evaluate_gains, GainSet, LmiProblem};
use pcons_core::Error as CoreError;
use serde::Serialize;

use crate::error::{CliError, ExitCode, Result};
use crate::gains::GainsFile;
use crate::output;
use crate::report::Report;
use crate::scenario::{self, matrix_to_rows, ExplicitGains, GainSource, Loaded, Rows};

/// Residual bound for the estimation-error identity.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Integration steps in the verification probe run.
pub const PROBE_STEPS: usize = 500;
pub const SECTOR_GRID: (f64, f64, f64) = (-100.0, 100.0, 0.01);

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: ExitCode,
    pub message: String,
}

fn prepare(path: &Path, opts: &RunOptions) -> Result<Loaded> {
    let loaded = scenario::load(path)?;
    let loaded = match opts.seed {
        Some(seed) => loaded.with_seed(seed),
        None => loaded,
    };
    fs::create_dir_all(&opts.out_dir).map_err(|e| CliError::io(&opts.out_dir, e))?;
    Ok(loaded)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn gain_report(report: &mut Report, gs: &GainSet) {
    report.field("VARIANT", format!("{:?}", gs.variant));
    report.field("SEED", gs.seed);
    report.certificates(&gs.certificates);
    report.field("ALPHA", format!("{:.9e}", gs.alpha));
    report.field("ROUNDS", gs.rounds);
    report.field("ITERATIONS", gs.iterations);
    report.field("K", format!("{:?}", matrix_to_rows(&gs.k)));
    report.field("PI", format!("{:?}", matrix_to_rows(&gs.pi)));
    report.field("E", format!("{:?}", matrix_to_rows(&gs.e)));
}

/// Runs synthesis and writes the gain file and report; infeasibility still
/// writes the report (and the best candidate, if any) before failing.
pub fn synthesize_into(loaded: &Loaded, out_dir: &Path) -> Result<GainSet> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let started = Instant::now();
    let result = synthesis::run_algorithm(&loaded.plant, &loaded.network, &loaded.config, loaded.variant);
    let mut report = Report::new("synthesize", &loaded.name);
    let out = &loaded.file.output;
    let outcome = match result {
        Ok(gs) => {
            gain_report(&mut report, &gs);
            GainsFile::from(&gs).write(&out_dir.join(&out.gains))?;
            Ok(gs)
        }
        Err(CoreError::Infeasible { step, reason, best }) => {
            report.field("FAILURE", format!("{step}: {reason}"));
            report.fail();
            if let Some(best) = &best {
                gain_report(&mut report, best);
                GainsFile::from(best.as_ref()).write(&out_dir.join(format!("best_{}", out.gains)))?;
            }
            Err(CoreError::Infeasible { step, reason, best }.into())
        }
        Err(e) => {
            report.field("FAILURE", &e);
            report.fail();
            Err(e.into())
        }
    };
    report.field("RUNTIME_S", format!("{:.3}", started.elapsed().as_secs_f64()));
    write_text(&out_dir.join(&out.report), &report.render())?;
    outcome
}

pub fn synthesize(path: &Path, opts: &RunOptions) -> Result<Outcome> {
    let loaded = prepare(path, opts)?;
    let gs = synthesize_into(&loaded, &opts.out_dir)?;
    Ok(Outcome {
        code: ExitCode::Success,
        message: format!(
            "{}: alpha = {:.6e}, K = {:?}",
            loaded.name,
            gs.alpha,
            matrix_to_rows(&gs.k)
        ),
    })
}

/// `E`, `K` from the scenario, synthesizing (and writing the gain file) when asked.
pub fn resolve_gains(loaded: &Loaded, out_dir: &Path) -> Result<(Matrix, Matrix)> {
    match &loaded.gains {
        GainSource::Synthesize => {
            let gs = synthesize_into(loaded, out_dir)?;
            Ok((gs.e, gs.k))
        }
        GainSource::Explicit(g) => Ok((g.e.clone(), g.k.clone())),
    }
}

pub struct SimulationRun {
    pub scenario: Scenario,
    pub trajectory: Trajectory,
    pub metrics: Metrics,
    pub runtime_s: f64,
}

pub fn run_simulation(loaded: &Loaded, e: &Matrix, k: &Matrix) -> Result<SimulationRun> {
    let scenario = loaded.scenario(e, k)?;
    let started = Instant::now();
    let trajectory = sim::simulate(&scenario)?;
    let runtime_s = started.elapsed().as_secs_f64();
    let metrics = sim::metrics(&trajectory);
    Ok(SimulationRun { scenario, trajectory, metrics, runtime_s })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn simulate(path: &Path, opts: &RunOptions) -> Result<Outcome> {
    let loaded = prepare(path, opts)?;
    let (e, k) = resolve_gains(&loaded, &opts.out_dir)?;
    let out = &loaded.file.output;
    let run = match run_simulation(&loaded, &e, &k) {
        Ok(run) => run,
        Err(err) => {
            write_text(&opts.out_dir.join(&out.summary), &format!("scenario: {}\nfailure: {err}\n", loaded.name))?;
            return Err(err);
        }
    };
    let traj_path = opts.out_dir.join(&out.trajectory);
    output::write_trajectory(&mut create(&traj_path)?, &run.trajectory, &run.metrics)
        .map_err(|e| CliError::io(&traj_path, e))?;
    let metrics_path = opts.out_dir.join(&out.metrics);
    output::write_metrics(&mut create(&metrics_path)?, &run.trajectory, &run.metrics)
        .map_err(|e| CliError::io(&metrics_path, e))?;
    let summary = output::summary(&loaded.name, &run.trajectory, &run.metrics, run.runtime_s);
    write_text(&opts.out_dir.join(&out.summary), &summary)?;
    let last = |s: &[f64]| s.last().copied().unwrap_or(0.0);
    Ok(Outcome {
        code: ExitCode::Success,
        message: format!(
            "{}: consensus error {:.3e}, estimation error {:.3e}, {} positivity violations",
            loaded.name,
            last(&run.metrics.consensus),
            last(&run.metrics.estimation),
            run.metrics.violation_count
        ),
    })
}

/// `Σ` for checking given gains: the one stored with them, else the one
/// from the first configured initial observer gain, else from `E` itself.
fn sigma_for(loaded: &Loaded, gains: &ExplicitGains) -> Result<Matrix> {
    if let Some(s) = &gains.sigma {
        return Ok(s.clone());
    }
    let plant = &loaded.plant;
    let e0 = loaded.config.search.initial_observer_gains.first().unwrap_or(&gains.e);
    let p = matrix::solve_observer_riccati(&plant.a, e0, &plant.c, plant.kappa(), loaded.config.delta)?;
    Ok(compute_sigma(plant, e0, &p)?)
}

/// Every check on fixed gains, without synthesis.
pub fn verify_report(loaded: &Loaded, gains: &ExplicitGains) -> Result<Report> {
    let pi = gains
        .pi
        .as_ref()
        .ok_or_else(|| CliError::Input("verification needs Pi".into()))?;
    let mut report = Report::new("verify", &loaded.name);
    report.field("VARIANT", format!("{:?}", loaded.variant));
    report.field("PRECISION", gains.precision);

    let sigma = sigma_for(loaded, gains)?;
    let problem = LmiProblem::new(&loaded.plant, &loaded.network, &loaded.config, loaded.variant, sigma)?;
    let eval = evaluate_gains(&problem, &gains.e, pi, gains.precision)?;
    report.certificates(&eval.certificates);
    report.field("ALPHA", format!("{:.9e}", eval.alpha));

    let k_from_pi = synthesis::feedback_gain(pi, loaded.config.eta, &loaded.plant.b);
    let k_dev = (&gains.k - &k_from_pi).amax();
    report.condition("feedback_gain_consistent", k_dev <= 1e-4, k_dev, false);

    let (lo, hi, step) = SECTOR_GRID;
    let sec = sim::sector_bounds_check(&loaded.sector, lo, hi, step)?;
    report.condition("sector_bounds", sec.passed, sec.worst_slack, true);
    report.condition("sector_decomposition", sec.decomposition_passed, sec.decomposition_worst, true);

    let mut probe = loaded.scenario(&gains.e, &gains.k)?;
    probe.horizon = (probe.step * PROBE_STEPS as f64).min(probe.horizon);
    probe.record_every = 1;
    match sim::simulate(&probe) {
        Ok(traj) => {
            let r = sim::error_dynamics_residual(&traj, &probe);
            report.condition("error_dynamics_residual", r.max_residual <= RESIDUAL_TOL, r.max_residual, true);
        }
        Err(e) => {
            report.field("PROBE_FAILURE", &e);
            report.condition("error_dynamics_residual", false, f64::INFINITY, true);
        }
    }
    Ok(report)
}

pub fn verify(path: &Path, gains_path: Option<&Path>, opts: &RunOptions) -> Result<Outcome> {
    let loaded = prepare(path, opts)?;
    let gains = match (gains_path, &loaded.gains) {
        (Some(p), _) => ExplicitGains::from_file(&GainsFile::read(p)?, &loaded.plant, loaded.config.eta)?,
        (None, GainSource::Explicit(g)) => g.clone(),
        (None, GainSource::Synthesize) => {
            return Err(CliError::Input("verify needs --gains or explicit gains in the scenario".into()))
        }
    };
    let report = verify_report(&loaded, &gains)?;
    write_text(&opts.out_dir.join(&loaded.file.output.report), &report.render())?;
    let (code, verdict) = if report.passed() {
        (ExitCode::Success, "all conditions pass")
    } else {
        (ExitCode::VerificationFailed, "some conditions fail")
    };
    Ok(Outcome { code, message: format!("{}: {verdict}", loaded.name) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphRecord {
    pub adjacency: Rows,
    /// `[re, im]` pairs.
    pub spectrum: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearestRecord {
    pub adjacency: Rows,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionFile {
    pub n: usize,
    pub target: Vec<[f64; 2]>,
    pub candidates_examined: usize,
    pub matches: Vec<GraphRecord>,
    pub nearest: Option<NearestRecord>,
}

fn spectrum_record(g: &DirectedGraph) -> Result<Vec<[f64; 2]>> {
    Ok(graph::laplacian_spectrum(g)?.iter().map(|z| [z.re, z.im]).collect())
}

pub fn reconstruct(n: usize, spectrum: &str, out: &Path, tol: f64) -> Result<Outcome> {
    let target = scenario::parse_spectrum(spectrum)?;
    let found = graph::reconstruct_by_spectrum(n, &target, tol)?;
    let file = ReconstructionFile {
        n,
        target: target.iter().map(|z| [z.re, z.im]).collect(),
        candidates_examined: found.candidates_examined,
        matches: found
            .matches
            .iter()
            .map(|g| Ok(GraphRecord { adjacency: matrix_to_rows(g.adjacency()), spectrum: spectrum_record(g)? }))
            .collect::<Result<_>>()?,
        nearest: found
            .nearest
            .as_ref()
            .map(|(g, d)| NearestRecord { adjacency: matrix_to_rows(g.adjacency()), distance: *d }),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(&file).expect("reconstruction serializes");
    text.push('\n');
    write_text(out, &text)?;
    let message = match (&file.matches.len(), &file.nearest) {
        (0, Some(near)) => format!("no graph matches; nearest spectrum distance {:.3e}", near.distance),
        (0, None) => "no graph matches; no strongly connected candidate".to_string(),
        (k, _) => format!("{k} matching graphs"),
    };
    if file.matches.is_empty() {
        log::warn!("{message}");
    }
    Ok(Outcome { code: ExitCode::Success, message })
}
