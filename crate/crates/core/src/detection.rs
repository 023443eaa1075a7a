//! Detection of an approaching bifurcation from trajectory data: residual
//! thresholding with cut localization for deterministic perturbations, and
//! variance/autocorrelation indicators for noise-driven runs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bifurcation::reference_equilibrium;
use crate::error::{Error, Result};
use crate::graph::{
    cut_from_signs, laplacian, lower_bound_graph, spectral_decomp, weighted_laplacian, Graph,
};
use crate::models::{effective_edge_weights, ModelSpec};
use crate::simulation::{wrap_angle, Trajectory};

/// Eigenvalue magnitude treated as "on the unit circle".
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Detection time scale, in `(0, 1)`.
    pub zeta: f64,
    /// Residual threshold.
    pub delta: f64,
    /// Sign classification tolerance; defaults to `1e-2 * ||r(t*)||_inf`.
    #[serde(default)]
    pub sign_tol: Option<f64>,
    /// `lambda_3` of the lower-bound graph. Computed from the model when
    /// absent and the model is known.
    #[serde(default)]
    pub lambda3_lb: Option<f64>,
    /// When set, compare the mean `||r||_2` over `[t*, t* + read_window]`
    /// with `delta` instead of the single sample at `t*`.
    #[serde(default)]
    pub read_window: Option<f64>,
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::Validation(format!("zeta must lie in (0, 1), got {}", self.zeta)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Validation(format!("delta must be positive, got {}", self.delta)));
        }
        if let Some(l) = self.lambda3_lb {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Validation(format!("lambda3_lb must be positive, got {l}")));
            }
        }
        if let Some(t) = self.sign_tol {
            if !(t >= 0.0) {
                return Err(Error::Validation("sign_tol must be >= 0".into()));
            }
        }
        if let Some(w) = self.read_window {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Validation("read_window must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// `t* = ln(zeta^-2) / lambda_3`.
    pub fn read_time(&self) -> Result<f64> {
        let l3 = self.lambda3_lb.ok_or_else(|| {
            Error::InvalidArgument("lambda3_lb is not set".into())
        })?;
        Ok(read_time(self.zeta, l3))
    }
}

pub fn read_time(zeta: f64, lambda3: f64) -> f64 {
    (zeta.powi(-2)).ln() / lambda3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub bifurcating: bool,
    pub t_star: f64,
    /// Time of the sample the decision was read from.
    pub read_time: f64,
    pub residual_norm_at_read: f64,
    pub residual_at_read: Vec<f64>,
    /// Nodes of `S` (1-based), present iff `bifurcating`.
    pub s_nodes: Option<Vec<usize>>,
    /// Edges of the cut (1-based `(head, tail)`), present iff `bifurcating`.
    pub boundary_edges: Option<Vec<(usize, usize)>>,
    pub is_two_cutset: Option<bool>,
    /// Nodes with near-zero residual (1-based).
    pub undetermined_nodes: Vec<usize>,
    pub residual_series_ref: Option<String>,
}

/// The post-perturbation segment `eps(t) = x(t_off + t) - x_bar`.
///
/// With `wrap`, each component is reduced to `(-pi, pi]`.
pub fn perturbation_segment(
    traj: &Trajectory,
    equilibrium: &[f64],
    t_off: f64,
    wrap: bool,
) -> Result<Trajectory> {
    if equilibrium.len() != traj.dim() {
        return Err(Error::InvalidArgument("equilibrium has the wrong dimension".into()));
    }
    let start = traj.index_at(t_off).ok_or(Error::InsufficientHorizon {
        t_star: t_off,
        t_end: traj.times.last().copied().unwrap_or(0.0),
    })?;
    let t0 = traj.times[start];
    let rows = (start..traj.len()).map(|i| {
        let eps: Vec<f64> = traj
            .state(i)
            .iter()
            .zip(equilibrium)
            .map(|(x, e)| if wrap { wrap_angle(x - e) } else { x - e })
            .collect();
        (traj.times[i] - t0, eps)
    });
    Ok(traj.remap(rows))
}

/// `r(t) = eps(t) - mean(eps(0)) 1` for every sample of the segment.
pub fn residual_series(segment: &Trajectory, eps0: &[f64]) -> Trajectory {
    let mean = eps0.iter().sum::<f64>() / eps0.len() as f64;
    segment.remap(
        segment
            .rows()
            .map(|(t, x)| (t, x.iter().map(|v| v - mean).collect())),
    )
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Reads the residual at `t*`, thresholds it against `delta` and, when it
/// exceeds the threshold, splits the nodes by residual sign.
pub fn detect_and_localize(
    segment: &Trajectory,
    eps0: &[f64],
    cfg: &DetectionConfig,
    graph: &Graph,
) -> Result<DetectionReport> {
    cfg.validate()?;
    if eps0.len() != graph.node_count() || segment.dim() != graph.node_count() {
        return Err(Error::InvalidArgument(
            "segment, eps0 and graph disagree on the node count".into(),
        ));
    }
    let t_star = cfg.read_time()?;
    let t_end = segment.times.last().copied().unwrap_or(0.0);
    let idx = segment
        .index_at(t_star)
        .ok_or(Error::InsufficientHorizon { t_star, t_end })?;
    let residuals = residual_series(segment, eps0);
    let r = residuals.state(idx).to_vec();
    let norm = match cfg.read_window {
        Some(w) if w > 0.0 => {
            let end = t_star + w;
            if t_end < end {
                return Err(Error::InsufficientHorizon { t_star: end, t_end });
            }
            let norms: Vec<f64> = residuals
                .rows()
                .filter(|(t, _)| *t >= residuals.times[idx] && *t <= end)
                .map(|(_, x)| norm2(x))
                .collect();
            norms.iter().sum::<f64>() / norms.len() as f64
        }
        _ => norm2(&r),
    };
    let bifurcating = norm >= cfg.delta;
    let mut report = DetectionReport {
        bifurcating,
        t_star,
        read_time: residuals.times[idx],
        residual_norm_at_read: norm,
        residual_at_read: r.clone(),
        s_nodes: None,
        boundary_edges: None,
        is_two_cutset: None,
        undetermined_nodes: Vec::new(),
        residual_series_ref: None,
    };
    if bifurcating {
        let sup = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let tol = cfg.sign_tol.unwrap_or(1e-2 * sup);
        let cut = cut_from_signs(graph, &r, tol)?;
        report.s_nodes = Some(cut.nodes.iter().map(|i| i + 1).collect());
        report.boundary_edges = Some(cut.boundary_labels(graph));
        report.is_two_cutset = Some(cut.is_two_cutset);
        report.undetermined_nodes = cut.undetermined.iter().map(|i| i + 1).collect();
    }
    Ok(report)
}

/// Effective edge weights of the linearization at `alpha`, about the
/// reference equilibrium.
fn linear_weights(spec: &ModelSpec, alpha: f64) -> Result<Vec<f64>> {
    let eq = reference_equilibrium(alpha, spec)?;
    effective_edge_weights(alpha, spec, &eq)
}

/// `lambda_3` of the lower-bound graph whose edge weights are the minimum
/// effective weights over `alpha_grid`.
pub fn lambda3_lower_bound(spec: &ModelSpec, alpha_grid: &[f64]) -> Result<f64> {
    let graph = spec.graph().ok_or(Error::WrongVariant {
        expected: "a network model",
        found: spec.variant_name(),
    })?;
    if graph.node_count() < 3 {
        return Err(Error::InvalidArgument("lambda_3 needs at least three nodes".into()));
    }
    let lower = lower_bound_graph(graph, |a| linear_weights(spec, a), alpha_grid)?;
    Ok(spectral_decomp(&laplacian(&lower))?.eigenvalues[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingStat {
    /// Index of the last sample in the window.
    pub index: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Sliding-window mean and unbiased variance.
pub fn moving_statistics(series: &[f64], window: usize) -> Result<Vec<MovingStat>> {
    if window < 2 {
        return Err(Error::InvalidArgument("window must be at least 2".into()));
    }
    if window > series.len() {
        return Err(Error::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    // Shifted sums keep the cancellation in check for offset series.
    let shift = series[0];
    let w = window as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for &x in &series[..window] {
        let y = x - shift;
        s1 += y;
        s2 += y * y;
    }
    let stat = |index: usize, s1: f64, s2: f64| MovingStat {
        index,
        mean: shift + s1 / w,
        variance: ((s2 - s1 * s1 / w) / (w - 1.0)).max(0.0),
    };
    let mut out = Vec::with_capacity(series.len() - window + 1);
    out.push(stat(window - 1, s1, s2));
    for i in window..series.len() {
        let (add, drop) = (series[i] - shift, series[i - window] - shift);
        s1 += add - drop;
        s2 += add * add - drop * drop;
        out.push(stat(i, s1, s2));
    }
    Ok(out)
}

/// Least-squares lag-1 autocorrelation of the mean-removed series, clamped
/// to `[-1, 1]`.
pub fn ar1_autocorrelation(series: &[f64]) -> Result<f64> {
    if series.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 samples, got {}",
            series.len()
        )));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let e: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let var = e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64;
    if var < 1e-30 {
        return Err(Error::DegenerateSeries);
    }
    // Ordinary least squares with intercept: lag and lead get their own means.
    let k = e.len() - 1;
    let lag_mean = e[..k].iter().sum::<f64>() / k as f64;
    let lead_mean = e[1..].iter().sum::<f64>() / k as f64;
    let num: f64 = e
        .windows(2)
        .map(|p| (p[0] - lag_mean) * (p[1] - lead_mean))
        .sum();
    let den: f64 = e[..k].iter().map(|x| (x - lag_mean) * (x - lag_mean)).sum();
    if den < 1e-300 {
        return Err(Error::DegenerateSeries);
    }
    Ok((num / den).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaMatrices {
    /// `exp(J delta_t)`.
    pub gamma: DMatrix<f64>,
    /// `Q gamma Q^T`; equal to `gamma` for the scalar models.
    pub gamma_bar: DMatrix<f64>,
}

/// One-period transition matrices of the linearized dynamics about the
/// reference equilibrium.
pub fn gamma_matrices(alpha: f64, spec: &ModelSpec, delta_t: f64) -> Result<GammaMatrices> {
    let eq = reference_equilibrium(alpha, spec)?;
    gamma_matrices_at(alpha, spec, &eq, delta_t)
}

/// As [`gamma_matrices`], about a given equilibrium.
pub fn gamma_matrices_at(
    alpha: f64,
    spec: &ModelSpec,
    equilibrium: &[f64],
    delta_t: f64,
) -> Result<GammaMatrices> {
    if !(delta_t >= 0.0 && delta_t.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta_t must be >= 0, got {delta_t}")));
    }
    let weights = effective_edge_weights(alpha, spec, equilibrium)?;
    match spec.graph() {
        Some(g) => {
            let spectrum = spectral_decomp(&weighted_laplacian(g, &weights))?;
            let gamma = spectrum.apply_function(|l| (-l * delta_t).exp());
            let q = crate::graph::projection_matrix(g.node_count())?;
            let gamma_bar = &q * &gamma * q.transpose();
            Ok(GammaMatrices {
                gamma,
                gamma_bar: symmetrize(gamma_bar),
            })
        }
        None => {
            let gamma = DMatrix::from_element(1, 1, (-weights[0] * delta_t).exp());
            Ok(GammaMatrices {
                gamma_bar: gamma.clone(),
                gamma,
            })
        }
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Stationary trace of the projected covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceValue {
    Finite(f64),
    Divergent,
}

impl TraceValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            TraceValue::Finite(v) => Some(v),
            TraceValue::Divergent => None,
        }
    }
}

/// `sum_i sigma^2 / (1 - lambda_i^2)` over the eigenvalues of `gamma_bar`;
/// divergent if any `|lambda_i| >= 1 - 1e-12`.
pub fn theoretical_covariance_trace(gamma_bar: &DMatrix<f64>, sigma: f64) -> Result<TraceValue> {
    let eigenvalues = spectral_decomp(gamma_bar)?.eigenvalues;
    if eigenvalues.iter().any(|l| l.abs() >= 1.0 - UNIT_TOL) {
        return Ok(TraceValue::Divergent);
    }
    Ok(TraceValue::Finite(
        eigenvalues.iter().map(|l| sigma * sigma / (1.0 - l * l)).sum(),
    ))
}

/// Per-node variance alarm settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlarmConfig {
    /// Samples in the baseline window at the start of the run.
    pub baseline_window: usize,
    /// Samples per monitoring block.
    pub monitor_window: usize,
    /// Alarm when a block variance exceeds `factor` times the baseline.
    pub factor: f64,
}

impl Default for AlarmConfig {
    fn default() -> Self {
        AlarmConfig {
            baseline_window: 100,
            monitor_window: 1000,
            factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub t: f64,
    /// Running mean of `||Q (x - x_bar)||^2` up to `t`.
    pub trace: f64,
    /// Per-node variance over the block ending at `t`.
    pub node_variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub empirical_trace_series: Vec<CovarianceRow>,
    /// Running trace over the whole run.
    pub empirical_trace: f64,
    pub theoretical_trace: Option<TraceValue>,
    /// Lag-1 autocorrelation per node; absent for a constant series.
    pub gamma_hat: Vec<Option<f64>>,
    pub per_node_variance: Vec<f64>,
    pub baseline_variance: Vec<f64>,
    pub alarms: Vec<bool>,
}

/// Empirical covariance indicators of a noise run sampled at the injection
/// instants (the initial sample is skipped).
///
/// The trace uses `Q (x_t - x_bar)`. Each node monitors only its own
/// deviation from the network mean, `x_i - mean(x)`, which removes the
/// undamped drift along the consensus direction.
pub fn empirical_covariance_trace(
    traj: &Trajectory,
    equilibrium: &[f64],
    q: &DMatrix<f64>,
    alarm: &AlarmConfig,
) -> Result<CovarianceReport> {
    let n = traj.dim();
    if equilibrium.len() != n || q.ncols() != n {
        return Err(Error::InvalidArgument("equilibrium/Q do not match the trajectory".into()));
    }
    if alarm.baseline_window < 2 || alarm.monitor_window < 2 || !(alarm.factor > 0.0) {
        return Err(Error::Validation(
            "alarm windows must be >= 2 samples and the factor positive".into(),
        ));
    }
    let samples = traj.len().saturating_sub(1);
    let needed = alarm.baseline_window.max(alarm.monitor_window);
    if samples < needed {
        return Err(Error::WindowTooLarge {
            window: needed,
            len: samples,
        });
    }
    let reduced = n > 1 && q.nrows() + 1 == n;
    let mut node_series = vec![Vec::with_capacity(samples); n];
    let mut running = Vec::with_capacity(samples);
    let mut acc = 0.0;
    for i in 1..traj.len() {
        let e: Vec<f64> = traj
            .state(i)
            .iter()
            .zip(equilibrium)
            .map(|(x, xb)| x - xb)
            .collect();
        let sq = if reduced {
            (q * crate::graph::column(&e)).norm_squared()
        } else {
            e.iter().map(|v| v * v).sum()
        };
        acc += sq;
        running.push(acc / i as f64);
        let mean = if reduced { e.iter().sum::<f64>() / n as f64 } else { 0.0 };
        for (s, v) in node_series.iter_mut().zip(&e) {
            s.push(v - mean);
        }
    }

    let variance = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
    };
    let baseline: Vec<f64> = node_series
        .iter()
        .map(|s| variance(&s[..alarm.baseline_window]))
        .collect();
    let blocks = samples / alarm.monitor_window;
    let mut rows = Vec::with_capacity(blocks);
    let mut alarms = vec![false; n];
    for b in 0..blocks {
        let range = b * alarm.monitor_window..(b + 1) * alarm.monitor_window;
        let node_variance: Vec<f64> = node_series.iter().map(|s| variance(&s[range.clone()])).collect();
        for i in 0..n {
            if node_variance[i] > alarm.factor * baseline[i] {
                alarms[i] = true;
            }
        }
        let last = range.end - 1;
        rows.push(CovarianceRow {
            t: traj.times[last + 1],
            trace: running[last],
            node_variance,
        });
    }
    Ok(CovarianceReport {
        empirical_trace_series: rows,
        empirical_trace: *running.last().expect("non-empty"),
        theoretical_trace: None,
        gamma_hat: node_series.iter().map(|s| ar1_autocorrelation(s).ok()).collect(),
        per_node_variance: node_series.iter().map(|s| variance(s)).collect(),
        baseline_variance: baseline,
        alarms,
    })
}
