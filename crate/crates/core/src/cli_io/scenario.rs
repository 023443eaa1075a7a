use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::{AlarmConfig, DetectionConfig};
use crate::error::{Error, Result};
use crate::graph::CutSet;
use crate::models::ModelSpec;
use crate::simulation::{NoiseSpec, PerturbationSpec, DEFAULT_DT};

/// Inclusive, evenly spaced grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.from],
            s => (0..s)
                .map(|i| self.from + (self.to - self.from) * i as f64 / (s - 1) as f64)
                .collect(),
        }
    }
}

/// One parameter value, an explicit list, or a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Single(f64),
    List(Vec<f64>),
    Grid(GridSpec),
}

impl AlphaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            AlphaSpec::Single(a) => vec![*a],
            AlphaSpec::List(v) => v.clone(),
            AlphaSpec::Grid(g) => g.values(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Perturbation(PerturbationSpec),
    Noise(NoiseSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Required for perturbation experiments; noise runs use their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: DEFAULT_DT,
            horizon: None,
        }
    }
}

fn default_band() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// 1-based labels of the node set `S`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_nodes: Option<Vec<usize>>,
    /// A bridge `(u, v)`; `S` is the side containing `u`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_edge: Option<(usize, usize)>,
    /// Grid for assumption checks, lower-bound graphs and diagrams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<GridSpec>,
    /// Bracket for locating the critical parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
    /// Sup-norm band used to measure recovery times.
    #[serde(default = "default_band")]
    pub recovery_band: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            cut_nodes: None,
            cut_edge: None,
            alpha_grid: None,
            bracket: None,
            recovery_band: default_band(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub model: ModelSpec,
    pub alpha: AlphaSpec,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionConfig>,
    #[serde(default)]
    pub alarms: AlarmConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

const PRESETS: &[(&str, &str)] = &[
    ("example1_reduced_co", include_str!("../../presets/example1_reduced_co.json")),
    ("example1_at_bifurcation", include_str!("../../presets/example1_at_bifurcation.json")),
    ("example2_reduced_co_noise", include_str!("../../presets/example2_reduced_co_noise.json")),
    ("example3_tree", include_str!("../../presets/example3_tree.json")),
    ("example3_tree_far", include_str!("../../presets/example3_tree_far.json")),
    ("ar_tree_edge23", include_str!("../../presets/ar_tree_edge23.json")),
    ("ar_tree_edge34", include_str!("../../presets/ar_tree_edge34.json")),
    ("p3_ar_noise", include_str!("../../presets/p3_ar_noise.json")),
    ("p3_ar_quiet", include_str!("../../presets/p3_ar_quiet.json")),
    ("reduced_ar_pitchfork", include_str!("../../presets/reduced_ar_pitchfork.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Parses and validates a bundled preset.
pub fn preset(name: &str) -> Result<Scenario> {
    let name = name.trim_end_matches(".json");
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Validation(format!("unknown preset `{name}`")))?;
    parse_scenario(text, &format!("preset:{name}"))
}

/// Loads a scenario file, or a bundled preset given as `preset:<name>`.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    if let Some(name) = path.to_str().and_then(|s| s.strip_prefix("preset:")) {
        return preset(name);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text, &path.display().to_string())
}

/// Parses scenario JSON. Syntax errors are parse errors; well-formed JSON
/// that does not describe a valid scenario is a validation error.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| {
        let location = format!("{origin}:{}:{}", e.line(), e.column());
        match e.classify() {
            serde_json::error::Category::Data => Error::Validation(format!("{location}: {e}")),
            _ => Error::Parse {
                location,
                message: e.to_string(),
            },
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn alpha_values(&self) -> Vec<f64> {
        self.alpha.values()
    }

    /// The configured cut, if any.
    pub fn cutset(&self) -> Result<Option<CutSet>> {
        let Some(graph) = self.model.graph() else {
            return Ok(None);
        };
        if let Some((u, v)) = self.analysis.cut_edge {
            let k = graph
                .find_edge(u.wrapping_sub(1), v.wrapping_sub(1))
                .ok_or_else(|| Error::Validation(format!("cut_edge ({u},{v}) is not an edge")))?;
            let cut = CutSet::from_bridge(graph, k).map_err(|e| Error::Validation(e.to_string()))?;
            // Keep `u` on the S side regardless of the stored orientation.
            if !cut.contains(u - 1) {
                let others: Vec<usize> = (0..graph.node_count()).filter(|i| !cut.contains(*i)).collect();
                return Ok(Some(CutSet::from_nodes(graph, &others)?));
            }
            return Ok(Some(cut));
        }
        if let Some(labels) = &self.analysis.cut_nodes {
            return CutSet::from_labels(graph, labels)
                .map(Some)
                .map_err(|e| Error::Validation(e.to_string()));
        }
        Ok(None)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.dim();
        let bad = |m: String| Err(Error::Validation(m));
        let alphas = self.alpha_values();
        if alphas.is_empty() || alphas.iter().any(|a| !a.is_finite()) {
            return bad("alpha must be one or more finite values".into());
        }
        if let AlphaSpec::Grid(g) = &self.alpha {
            if !(g.from.is_finite() && g.to.is_finite()) || g.steps == 0 {
                return bad("alpha grid needs finite bounds and steps >= 1".into());
            }
        }
        for &a in &alphas {
            self.model.at(a).map_err(|e| Error::Validation(e.to_string()))?;
        }
        let dt = self.integrator.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return bad(format!("integrator.dt must be positive, got {dt}"));
        }
        match &self.experiment {
            Experiment::Perturbation(p) => {
                if p.signal.len() != n {
                    return bad(format!("perturbation signal has {} entries, model has {n}", p.signal.len()));
                }
                if p.signal.iter().any(|v| !v.is_finite()) {
                    return bad("perturbation signal must be finite".into());
                }
                let Some(h) = self.integrator.horizon else {
                    return bad("perturbation experiments need integrator.horizon".into());
                };
                let (on, off) = p.window;
                if !(h > 0.0 && 0.0 <= on && on < off && off <= h) {
                    return bad(format!(
                        "perturbation window [{on}, {off}] must satisfy 0 <= t_on < t_off <= horizon ({h})"
                    ));
                }
            }
            Experiment::Noise(s) => {
                if !(s.sigma >= 0.0 && s.sigma.is_finite()) {
                    return bad(format!("noise sigma must be >= 0, got {}", s.sigma));
                }
                if !(s.delta_t > 0.0 && s.horizon >= s.delta_t) {
                    return bad("noise needs delta_t > 0 and horizon >= delta_t".into());
                }
                let ratio = s.delta_t / dt;
                if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
                    return bad(format!("noise delta_t {} is not a whole number of steps of {dt}", s.delta_t));
                }
            }
        }
        if let Some(d) = &self.detection {
            d.validate()?;
        }
        if self.alarms.baseline_window < 2 || self.alarms.monitor_window < 2 || !(self.alarms.factor > 0.0) {
            return bad("alarm windows must be >= 2 samples and the factor positive".into());
        }
        if self.model.graph().is_none()
            && (self.analysis.cut_edge.is_some() || self.analysis.cut_nodes.is_some())
        {
            return bad("cuts only apply to network models".into());
        }
        if let Some(labels) = &self.analysis.cut_nodes {
            if let Some(&l) = labels.iter().find(|&&l| l == 0 || l > n) {
                return bad(format!("cut node {l} does not exist"));
            }
        }
        self.cutset()?;
        if let Some(g) = &self.analysis.alpha_grid {
            if g.steps == 0 || !(g.from.is_finite() && g.to.is_finite()) {
                return bad("analysis.alpha_grid needs finite bounds and steps >= 1".into());
            }
        }
        if let Some((lo, hi)) = self.analysis.bracket {
            if !(lo < hi) {
                return bad(format!("bracket [{lo}, {hi}] is empty"));
            }
        }
        if !(self.analysis.recovery_band > 0.0) {
            return bad("recovery_band must be positive".into());
        }
        Ok(())
    }
}
