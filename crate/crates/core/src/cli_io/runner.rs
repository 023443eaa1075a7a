use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::output::{emit_csv, series_header, write_json};
use super::scenario::{Experiment, GridSpec, Scenario};
use crate::bifurcation::{
    check_assumption_ar, check_assumption_co, find_alpha_star, linearization_fiedler,
    linearized_jacobian, normalized_flow, reduced_bifurcation_summary, reference_equilibrium,
    Stability,
};
use crate::detection::{
    detect_and_localize, empirical_covariance_trace, gamma_matrices_at, lambda3_lower_bound,
    perturbation_segment, residual_series, theoretical_covariance_trace, DetectionConfig,
};
use crate::error::{Error, Result};
use crate::graph::{projection_matrix, spectral_decomp};
use crate::models::ModelSpec;
use crate::simulation::{
    recovery_time, run_noise_experiment, run_perturbation_experiment, wrap_angle, NoiseSpec,
    PerturbationSpec, Trajectory,
};

/// Summary-table value for a run that never settles or a rate that cannot
/// be estimated.
pub const NOT_RECOVERED: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Analyze,
    Detect,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Analyze => "analyze",
            Command::Detect => "detect",
            Command::Sweep => "sweep",
        }
    }
}

/// Command-line overrides of scenario fields.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: &'static str,
    pub scenario: String,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Applies the overrides, validates, and executes `command`.
pub fn run(scenario: &Scenario, command: Command, opts: &RunOptions) -> Result<RunSummary> {
    let mut scn = scenario.clone();
    if let Some(dt) = opts.dt {
        scn.integrator.dt = dt;
    }
    if let (Some(seed), Experiment::Noise(n)) = (opts.seed, &mut scn.experiment) {
        n.seed = seed;
    }
    scn.validate()?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| scn.output_dir.clone())
        .unwrap_or_else(|| {
            let name = if scn.name.is_empty() { "scenario" } else { &scn.name };
            PathBuf::from("out").join(name)
        });
    let mut files = Vec::new();
    let scenario_path = out_dir.join("scenario.json");
    write_json(&scenario_path, &scn)?;
    files.push(scenario_path);
    match command {
        Command::Simulate => per_alpha(&scn, &out_dir, &mut files, simulate_cell)?,
        Command::Detect => per_alpha(&scn, &out_dir, &mut files, detect_cell)?,
        Command::Analyze => analyze(&scn, &out_dir, &mut files)?,
        Command::Sweep => sweep(&scn, &out_dir, &mut files)?,
    }
    Ok(RunSummary {
        command: command.name(),
        scenario: scn.name.clone(),
        out_dir,
        files,
    })
}

type Cell = fn(&Scenario, f64, &Path, &mut Vec<PathBuf>) -> Result<Value>;

/// Runs `cell` once per alpha: directly in `out_dir` for a single value,
/// in `cell_<i>` subdirectories otherwise.
fn per_alpha(scn: &Scenario, out_dir: &Path, files: &mut Vec<PathBuf>, cell: Cell) -> Result<()> {
    let alphas = scn.alpha_values();
    if let [alpha] = alphas[..] {
        let report = cell(scn, alpha, out_dir, files)?;
        let path = out_dir.join("report.json");
        write_json(&path, &report)?;
        files.push(path);
        return Ok(());
    }
    let mut cells = Vec::with_capacity(alphas.len());
    for (i, &alpha) in alphas.iter().enumerate() {
        let dir = cell_dir(out_dir, i);
        let report = cell(scn, alpha, &dir, files)?;
        let path = dir.join("report.json");
        write_json(&path, &report)?;
        files.push(path);
        cells.push(report);
    }
    let path = out_dir.join("report.json");
    write_json(&path, &json!({ "cells": cells }))?;
    files.push(path);
    Ok(())
}

fn cell_dir(out_dir: &Path, i: usize) -> PathBuf {
    out_dir.join(format!("cell_{i}"))
}

fn horizon(scn: &Scenario) -> f64 {
    scn.integrator.horizon.expect("validated")
}

fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let header = series_header("x", traj.dim());
    emit_csv(
        path,
        &header,
        traj.rows()
            .map(|(t, x)| std::iter::once(t).chain(x.iter().copied()).collect::<Vec<f64>>()),
    )
}

fn sup_deviation(x: &[f64], reference: &[f64], wrap: bool) -> f64 {
    x.iter()
        .zip(reference)
        .map(|(a, b)| if wrap { wrap_angle(a - b).abs() } else { (a - b).abs() })
        .fold(0.0, f64::max)
}

/// Where a perturbed run settles. Network dynamics conserve the state mean,
/// so the input shifts the consensus component by `mean(u) (t_off - t_on)`.
fn settled_reference(spec: &ModelSpec, eq: &[f64], pert: &PerturbationSpec) -> Vec<f64> {
    if spec.graph().is_none() {
        return eq.to_vec();
    }
    let n = eq.len() as f64;
    let shift = pert.signal.iter().sum::<f64>() / n * (pert.window.1 - pert.window.0);
    eq.iter().map(|v| v + shift).collect()
}

/// Decay rate fitted to `ln ||x - reference||_inf` over the samples after
/// `start` whose deviation lies between `1e-9` and a tenth of the deviation
/// at `start`.
fn fitted_decay_rate(traj: &Trajectory, reference: &[f64], start: f64, wrap: bool) -> Option<f64> {
    let first = traj.index_at(start)?;
    let d0 = sup_deviation(traj.state(first), reference, wrap);
    let (mut ts, mut ys) = (Vec::new(), Vec::new());
    for i in first..traj.len() {
        let d = sup_deviation(traj.state(i), reference, wrap);
        if d <= 0.1 * d0 && d >= 1e-9 {
            ts.push(traj.times[i]);
            ys.push(d.ln());
        }
    }
    if ts.len() < 10 {
        return None;
    }
    let k = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let num: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let den: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    let rate = -num / den;
    (rate.is_finite() && rate > 0.0).then_some(rate)
}

/// Slowest nonzero decay rate of the linearization: `lambda_2(-J)` for
/// networks, `-J` itself for the scalar models.
fn linear_rate(spec: &ModelSpec, alpha: f64) -> Result<f64> {
    if spec.graph().is_some() {
        return Ok(linearization_fiedler(alpha, spec)?.lambda2);
    }
    let eq = reference_equilibrium(alpha, spec)?;
    Ok(-linearized_jacobian(alpha, spec, &eq)?[(0, 0)])
}

struct PerturbationRun {
    traj: Trajectory,
    recovery_time: Option<f64>,
    recovery_rate: Option<f64>,
}

fn perturbation_run(scn: &Scenario, alpha: f64, pert: &PerturbationSpec) -> Result<PerturbationRun> {
    let spec = &scn.model;
    let traj = run_perturbation_experiment(spec, alpha, pert, scn.integrator.dt, horizon(scn))?;
    let wrap = spec.is_oscillator();
    let (recovery_time, recovery_rate) = match reference_equilibrium(alpha, spec) {
        Ok(eq) => {
            let reference = settled_reference(spec, &eq, pert);
            let t_off = pert.window.1;
            (
                recovery_time(&traj, &reference, t_off, scn.analysis.recovery_band, wrap),
                fitted_decay_rate(&traj, &reference, t_off, wrap),
            )
        }
        Err(_) => (None, None),
    };
    Ok(PerturbationRun {
        traj,
        recovery_time,
        recovery_rate,
    })
}

fn simulate_cell(scn: &Scenario, alpha: f64, dir: &Path, files: &mut Vec<PathBuf>) -> Result<Value> {
    let path = dir.join("trajectory.csv");
    let report = match &scn.experiment {
        Experiment::Perturbation(p) => {
            let run = perturbation_run(scn, alpha, p)?;
            write_trajectory(&run.traj, &path)?;
            json!({
                "alpha": alpha,
                "variant": scn.model.variant_name(),
                "samples": run.traj.len(),
                "final_state": run.traj.last_state(),
                "recovery_time": run.recovery_time,
                "recovery_rate": run.recovery_rate,
                "linear_rate": linear_rate(&scn.model, alpha).ok(),
            })
        }
        Experiment::Noise(n) => {
            let traj = run_noise_experiment(&scn.model, alpha, n, scn.integrator.dt)?;
            write_trajectory(&traj, &path)?;
            json!({
                "alpha": alpha,
                "variant": scn.model.variant_name(),
                "samples": traj.len(),
                "seed": n.seed,
                "final_state": traj.last_state(),
            })
        }
    };
    files.push(path);
    Ok(report)
}

fn detection_config(scn: &Scenario) -> Result<DetectionConfig> {
    let mut cfg = scn.detection.clone().ok_or_else(|| {
        Error::Validation("perturbation detection needs a `detection` section".into())
    })?;
    if cfg.lambda3_lb.is_none() {
        let grid = match &scn.analysis.alpha_grid {
            Some(g) => g.values(),
            None => scn.alpha_values(),
        };
        cfg.lambda3_lb = Some(lambda3_lower_bound(&scn.model, &grid)?);
    }
    Ok(cfg)
}

fn detect_cell(scn: &Scenario, alpha: f64, dir: &Path, files: &mut Vec<PathBuf>) -> Result<Value> {
    let spec = &scn.model;
    match &scn.experiment {
        Experiment::Perturbation(p) => {
            let graph = spec.graph().ok_or_else(|| {
                Error::Validation("perturbation detection needs a network model".into())
            })?;
            let cfg = detection_config(scn)?;
            let eq = reference_equilibrium(alpha, spec)?;
            let traj = run_perturbation_experiment(spec, alpha, p, scn.integrator.dt, horizon(scn))?;
            let segment = perturbation_segment(&traj, &eq, p.window.1, spec.is_oscillator())?;
            let eps0 = segment.state(0).to_vec();
            let mut report = detect_and_localize(&segment, &eps0, &cfg, graph)?;
            let residuals = residual_series(&segment, &eps0);
            let path = dir.join("residuals.csv");
            write_trajectory_with(&residuals, "r", &path)?;
            files.push(path);
            report.residual_series_ref = Some("residuals.csv".into());
            Ok(json!({
                "alpha": alpha,
                "lambda3_lb": cfg.lambda3_lb,
                "detection": report,
            }))
        }
        Experiment::Noise(n) => noise_cell(scn, alpha, n, dir, files),
    }
}

fn write_trajectory_with(traj: &Trajectory, prefix: &str, path: &Path) -> Result<()> {
    emit_csv(
        path,
        &series_header(prefix, traj.dim()),
        traj.rows()
            .map(|(t, x)| std::iter::once(t).chain(x.iter().copied()).collect::<Vec<f64>>()),
    )
}

fn noise_cell(scn: &Scenario, alpha: f64, noise: &NoiseSpec, dir: &Path, files: &mut Vec<PathBuf>) -> Result<Value> {
    let spec = &scn.model;
    let eq = reference_equilibrium(alpha, spec)?;
    let traj = run_noise_experiment(spec, alpha, noise, scn.integrator.dt)?;
    let n = spec.dim();
    let q = if n > 1 { projection_matrix(n)? } else { DMatrix::identity(1, 1) };
    let mut report = empirical_covariance_trace(&traj, &eq, &q, &scn.alarms)?;
    let gamma = gamma_matrices_at(alpha, spec, &eq, noise.delta_t)?;
    report.theoretical_trace = Some(theoretical_covariance_trace(&gamma.gamma_bar, noise.sigma)?);
    let header: Vec<String> = ["t".to_owned(), "trace".to_owned()]
        .into_iter()
        .chain((1..=n).map(|i| format!("var{i}")))
        .collect();
    let path = dir.join("variance.csv");
    emit_csv(
        &path,
        &header,
        report.empirical_trace_series.iter().map(|r| {
            [r.t, r.trace]
                .into_iter()
                .chain(r.node_variance.iter().copied())
                .collect::<Vec<f64>>()
        }),
    )?;
    files.push(path);
    Ok(json!({
        "alpha": alpha,
        "seed": noise.seed,
        "covariance": report,
    }))
}

fn describe<T: Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => json!({ "ok": v }),
        Err(e) => json!({ "error": e.kind(), "message": e.to_string() }),
    }
}

fn analyze(scn: &Scenario, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let spec = &scn.model;
    let cutset = scn.cutset()?;
    let grid = scn.analysis.alpha_grid.map(|g| g.values());
    let mut global = serde_json::Map::new();
    global.insert("variant".into(), json!(spec.variant_name()));
    // alpha_grid may stop short of the crossing; the bracket spans it.
    let assumption_grid = match (scn.analysis.bracket, &grid) {
        (Some((lo, hi)), g) => Some(
            GridSpec {
                from: lo,
                to: hi,
                steps: g.as_ref().map_or(0, |g| g.len()).max(301),
            }
            .values(),
        ),
        (None, g) => g.clone(),
    };
    if let (Some(cut), Some(grid)) = (&cutset, &assumption_grid) {
        let report = if spec.is_oscillator() {
            check_assumption_co(spec, grid, cut)
        } else {
            check_assumption_ar(spec, grid, cut)
        };
        global.insert("assumption".into(), json!(report));
    }
    if let Some(bracket) = scn.analysis.bracket {
        let found = find_alpha_star(spec, bracket, cutset.as_ref());
        global.insert("alpha_star".into(), describe(found));
    }
    if let (Some(_), Some(grid)) = (spec.graph(), &grid) {
        global.insert("lambda3_lb".into(), describe(lambda3_lower_bound(spec, grid)));
    }
    let cells: Vec<Value> = scn
        .alpha_values()
        .into_iter()
        .map(|alpha| {
            let mut cell = json!({ "alpha": alpha });
            let obj = cell.as_object_mut().expect("object");
            let equilibrium = reference_equilibrium(alpha, spec).and_then(|eq| {
                let j = linearized_jacobian(alpha, spec, &eq)?;
                let spectrum = spectral_decomp(&(-j))?;
                Ok(json!({
                    "state": eq,
                    "field_residual": spec.at(alpha)?.residual(&eq),
                    "spectrum": spectrum.eigenvalues,
                }))
            });
            obj.insert("equilibrium".into(), describe(equilibrium));
            obj.insert("linear_rate".into(), describe(linear_rate(spec, alpha)));
            if spec.is_oscillator() {
                obj.insert("flow".into(), describe(normalized_flow(alpha, spec)));
            }
            if spec.graph().is_none() {
                obj.insert("reduced".into(), describe(reduced_bifurcation_summary(spec, alpha)));
            }
            cell
        })
        .collect();
    global.insert("cells".into(), Value::Array(cells));
    let path = out_dir.join("report.json");
    write_json(&path, &Value::Object(global))?;
    files.push(path);

    if spec.graph().is_none() {
        let alphas = grid.unwrap_or_else(|| scn.alpha_values());
        let mut rows = Vec::new();
        for alpha in alphas {
            let summary = reduced_bifurcation_summary(spec, alpha)?;
            for e in &summary.equilibria {
                let code = match e.stability {
                    Stability::Stable => 1.0,
                    Stability::SemiStable => 0.0,
                    Stability::Unstable => -1.0,
                };
                rows.push(vec![alpha, summary.ratio, e.value, code]);
            }
        }
        if !rows.is_empty() {
            let path = out_dir.join("bifurcation_diagram.csv");
            let header = ["alpha", "ratio", "value", "stability"].map(String::from);
            emit_csv(&path, &header, rows)?;
            files.push(path);
        }
    }
    Ok(())
}

fn sweep(scn: &Scenario, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let alphas = scn.alpha_values();
    let results: Vec<Result<(Vec<f64>, Vec<PathBuf>)>> = alphas
        .par_iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let dir = cell_dir(out_dir, i);
            let mut cell_files = Vec::new();
            let row = sweep_cell(scn, alpha, &dir, &mut cell_files)?;
            Ok((row, cell_files))
        })
        .collect();
    let mut rows = Vec::with_capacity(alphas.len());
    for r in results {
        let (row, cell_files) = r?;
        rows.push(row);
        files.extend(cell_files);
    }
    let last = match scn.experiment {
        Experiment::Perturbation(_) => "recovery_time",
        Experiment::Noise(_) => "variance_trace",
    };
    let header = ["alpha", "lambda2", "recovery_rate", last].map(String::from);
    let path = out_dir.join("summary.csv");
    emit_csv(&path, &header, rows)?;
    files.push(path);
    Ok(())
}

fn sweep_cell(scn: &Scenario, alpha: f64, dir: &Path, files: &mut Vec<PathBuf>) -> Result<Vec<f64>> {
    let lambda2 = linear_rate(&scn.model, alpha).unwrap_or(NOT_RECOVERED);
    let row = match &scn.experiment {
        Experiment::Perturbation(p) => {
            let run = perturbation_run(scn, alpha, p)?;
            let path = dir.join("trajectory.csv");
            write_trajectory(&run.traj, &path)?;
            files.push(path);
            vec![
                alpha,
                lambda2,
                run.recovery_rate.unwrap_or(NOT_RECOVERED),
                run.recovery_time.unwrap_or(NOT_RECOVERED),
            ]
        }
        Experiment::Noise(n) => {
            let report = noise_cell(scn, alpha, n, dir, files)?;
            let cov = &report["covariance"];
            let trace = cov["empirical_trace"].as_f64().unwrap_or(f64::NAN);
            let gammas: Vec<f64> = cov["gamma_hat"]
                .as_array()
                .map(|a| a.iter().filter_map(Value::as_f64).collect())
                .unwrap_or_default();
            let rate = if gammas.is_empty() {
                NOT_RECOVERED
            } else {
                let g = gammas.iter().sum::<f64>() / gammas.len() as f64;
                if g > 0.0 && g < 1.0 { -g.ln() / n.delta_t } else { NOT_RECOVERED }
            };
            let path = dir.join("report.json");
            write_json(&path, &report)?;
            files.push(path);
            vec![alpha, lambda2, rate, trace]
        }
    };
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli_io::output::read_csv;
    use crate::cli_io::scenario::preset;

    fn opts(dir: &Path) -> RunOptions {
        RunOptions {
            out: Some(dir.to_path_buf()),
            ..Default::default()
        }
    }

    #[test]
    fn analyze_reduced_writes_diagram() {
        let dir = tempfile::tempdir().unwrap();
        let scn = preset("example1_reduced_co").unwrap();
        run(&scn, Command::Analyze, &opts(dir.path())).unwrap();
        let (header, rows) = read_csv(&dir.path().join("bifurcation_diagram.csv")).unwrap();
        assert_eq!(header, ["alpha", "ratio", "value", "stability"]);
        // Two branches below ratio 1, one at it, none beyond.
        let at = |a: f64| rows.iter().filter(|r| (r[0] - a).abs() < 1e-12).count();
        assert_eq!(at(0.5), 2);
        assert_eq!(at(1.0), 1);
        assert_eq!(at(1.1), 0);
    }

    #[test]
    fn detect_localizes_the_tree_cut() {
        let dir = tempfile::tempdir().unwrap();
        let scn = preset("example3_tree").unwrap();
        run(&scn, Command::Detect, &opts(dir.path())).unwrap();
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        let d = &report["detection"];
        assert_eq!(d["bifurcating"], json!(true));
        assert_eq!(d["boundary_edges"], json!([[2, 3]]));
        assert!(dir.path().join("residuals.csv").exists());
    }

    #[test]
    fn seed_and_dt_overrides_apply() {
        let dir = tempfile::tempdir().unwrap();
        let mut scn = preset("p3_ar_noise").unwrap();
        scn.alpha = super::super::scenario::AlphaSpec::Single(0.5);
        if let Experiment::Noise(n) = &mut scn.experiment {
            n.horizon = 2000.0;
        }
        let o = RunOptions {
            out: Some(dir.path().to_path_buf()),
            seed: Some(99),
            dt: Some(0.05),
        };
        run(&scn, Command::Simulate, &o).unwrap();
        let saved: Scenario = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("scenario.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(saved.integrator.dt, 0.05);
        assert!(matches!(saved.experiment, Experiment::Noise(NoiseSpec { seed: 99, .. })));
        let bad = RunOptions {
            dt: Some(0.3),
            ..o
        };
        assert!(matches!(run(&scn, Command::Simulate, &bad), Err(Error::Validation(_))));
    }
}
