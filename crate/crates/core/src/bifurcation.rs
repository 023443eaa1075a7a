//! Equilibria, stability, and bifurcation-point location for the network
//! models, plus the scalar bifurcation diagrams of the two-agent reductions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    fiedler_pair, laplacian, pseudoinverse, spectral_decomp, weighted_laplacian, CutSet,
    FiedlerPair, Graph, SpectralDecomposition,
};
use crate::models::{
    effective_edge_weights, AttractionRepulsion, CoupledOscillators, ModelSpec,
};

/// Bisection stops once the bracket is this narrow.
pub const BISECTION_TOL: f64 = 1e-10;
/// Allowed `| |flow_e(alpha*)| - 1 |` (or `|w_a - w_r|`) at the located crossing.
pub const CROSSING_TOL: f64 = 1e-8;
/// Default fraction of `alpha*` used for "near bifurcation" experiments.
pub const NEAR_FRACTION: f64 = 0.99;

/// One failed clause of a bifurcation assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `"cutset"`, `"1"`, `"2"` or `"3"`.
    pub clause: String,
    pub alpha: Option<f64>,
    /// 1-based `(head, tail)` of the offending edge.
    pub edge: Option<(usize, usize)>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub holds: bool,
    pub cutset: Option<CutSet>,
    pub alpha_star: Option<f64>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub stable: Vec<f64>,
    pub unstable: Option<Vec<f64>>,
    pub field_residual: f64,
    /// Spectrum of `-df/dx` at `stable`.
    pub jacobian_spectrum: SpectralDecomposition,
}

/// The linear map `omega -> B^T L^dagger omega` of an oscillator network.
#[derive(Debug, Clone)]
pub struct FlowMap {
    map: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl FlowMap {
    pub fn new(graph: &Graph) -> Result<Self> {
        let pinv = pseudoinverse(&laplacian(graph))?;
        let b = crate::graph::build_incidence(graph).into_inner();
        Ok(FlowMap {
            map: b.transpose() * &pinv,
            pinv,
        })
    }

    pub fn apply(&self, omega: &[f64]) -> Vec<f64> {
        (&self.map * crate::graph::column(omega)).iter().copied().collect()
    }

    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }
}

fn oscillators(spec: &ModelSpec) -> Result<&CoupledOscillators> {
    match spec {
        ModelSpec::CoupledOscillators(m) => Ok(m),
        other => Err(Error::WrongVariant {
            expected: "coupled_oscillators",
            found: other.variant_name(),
        }),
    }
}

fn swarm(spec: &ModelSpec) -> Result<&AttractionRepulsion> {
    match spec {
        ModelSpec::AttractionRepulsion(m) => Ok(m),
        other => Err(Error::WrongVariant {
            expected: "attraction_repulsion",
            found: other.variant_name(),
        }),
    }
}

/// Normalized edge flows `B^T L^dagger omega(alpha)`, with `L = B A B^T`.
pub fn normalized_flow(alpha: f64, spec: &ModelSpec) -> Result<Vec<f64>> {
    let m = oscillators(spec)?;
    Ok(FlowMap::new(&m.graph)?.apply(&m.omega.eval(alpha)))
}

/// Natural frequencies `B A f` whose normalized flow on a tree is `f`.
pub fn frequencies_for_flows(graph: &Graph, flows: &[f64]) -> Vec<f64> {
    let scaled: Vec<f64> = flows
        .iter()
        .zip(graph.edges())
        .map(|(f, e)| f * e.weight)
        .collect();
    let mut omega = vec![0.0; graph.node_count()];
    graph.scatter_edges(&scaled, &mut omega);
    omega
}

/// Per-edge margins whose sign change marks the bifurcation: `|flow_e| - 1`
/// for oscillators, `w_r - w_a(alpha)` for swarms. Reduced models have a
/// single margin.
struct Margins<'a> {
    spec: &'a ModelSpec,
    flow: Option<FlowMap>,
}

impl<'a> Margins<'a> {
    fn new(spec: &'a ModelSpec) -> Result<Self> {
        let flow = match spec {
            ModelSpec::CoupledOscillators(m) => Some(FlowMap::new(&m.graph)?),
            _ => None,
        };
        Ok(Margins { spec, flow })
    }

    /// Signed quantities per edge; the crossing is where a margin reaches 0.
    fn raw(&self, alpha: f64) -> Vec<f64> {
        match self.spec {
            ModelSpec::CoupledOscillators(m) => {
                let flow = self.flow.as_ref().expect("flow map for oscillators");
                flow.apply(&m.omega.eval(alpha))
            }
            ModelSpec::AttractionRepulsion(m) => m.attraction.eval(alpha),
            ModelSpec::ReducedCoupledOscillators(m) => vec![m.omega_bar.eval(alpha)[0] / m.coupling],
            ModelSpec::ReducedAttractionRepulsion(m) => m.attraction.eval(alpha),
        }
    }

    fn margin(&self, alpha: f64) -> Vec<f64> {
        let raw = self.raw(alpha);
        match self.spec {
            ModelSpec::CoupledOscillators(_) | ModelSpec::ReducedCoupledOscillators(_) => {
                raw.iter().map(|f| f.abs() - 1.0).collect()
            }
            ModelSpec::AttractionRepulsion(m) => {
                raw.iter().zip(&m.repulsion).map(|(wa, wr)| wr - wa).collect()
            }
            ModelSpec::ReducedAttractionRepulsion(m) => vec![m.repulsion - raw[0]],
        }
    }

    /// Largest margin over the edges of `edges` (all edges when `None`).
    fn crossing(&self, alpha: f64, edges: Option<&[usize]>) -> f64 {
        let m = self.margin(alpha);
        match edges {
            Some(ix) => ix.iter().map(|&k| m[k]).fold(f64::NEG_INFINITY, f64::max),
            None => m.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("bad bracket [{lo}, {hi}]")));
    }
    let (glo, ghi) = (g(lo), g(hi));
    let rising = glo < 0.0 && ghi >= 0.0;
    let falling = glo >= 0.0 && ghi < 0.0;
    if !(rising || falling) {
        return Err(Error::NoBracket { lo, hi });
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if (g(mid) >= 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // One secant step inside the final bracket; exact for affine margins.
    let (glo, ghi) = (g(lo), g(hi));
    if ghi != glo && glo.is_finite() && ghi.is_finite() {
        return Ok((lo - glo * (hi - lo) / (ghi - glo)).clamp(lo, hi));
    }
    Ok(0.5 * (lo + hi))
}

/// Locates `alpha*` by bisection on the largest cut-edge margin.
///
/// `cutset` is required for the network models and ignored for the
/// reduced ones.
pub fn find_alpha_star(
    spec: &ModelSpec,
    bracket: (f64, f64),
    cutset: Option<&CutSet>,
) -> Result<f64> {
    let margins = Margins::new(spec)?;
    let edges = match (spec.graph(), cutset) {
        (Some(_), Some(c)) => Some(c.boundary_edges.as_slice()),
        (Some(_), None) => {
            return Err(Error::InvalidArgument(
                "network models need a cutset to locate alpha*".into(),
            ))
        }
        (None, _) => None,
    };
    bisect(|a| margins.crossing(a, edges), bracket.0, bracket.1)
}

/// Checks the three bifurcation-assumption clauses for an oscillator network
/// on `alpha_grid`.
pub fn check_assumption_co(spec: &ModelSpec, alpha_grid: &[f64], cutset: &CutSet) -> AssumptionReport {
    match oscillators(spec) {
        Ok(_) => check_assumption(spec, alpha_grid, cutset),
        Err(_) => failed_report(cutset),
    }
}

/// Checks the three bifurcation-assumption clauses for a swarm on
/// `alpha_grid`.
pub fn check_assumption_ar(spec: &ModelSpec, alpha_grid: &[f64], cutset: &CutSet) -> AssumptionReport {
    match swarm(spec) {
        Ok(_) => check_assumption(spec, alpha_grid, cutset),
        Err(_) => failed_report(cutset),
    }
}

fn failed_report(cutset: &CutSet) -> AssumptionReport {
    AssumptionReport {
        holds: false,
        cutset: Some(cutset.clone()),
        alpha_star: None,
        violations: vec![Violation {
            clause: "cutset".into(),
            alpha: None,
            edge: None,
            value: None,
        }],
    }
}

fn check_assumption(spec: &ModelSpec, alpha_grid: &[f64], cutset: &CutSet) -> AssumptionReport {
    let graph = spec.graph().expect("network model");
    let label = |k: usize| {
        let e = graph.edges()[k];
        Some((e.head + 1, e.tail + 1))
    };
    let mut report = AssumptionReport {
        holds: false,
        cutset: Some(cutset.clone()),
        alpha_star: None,
        violations: Vec::new(),
    };
    let sorted = alpha_grid.windows(2).all(|w| w[0] < w[1]);
    if !cutset.is_two_cutset || cutset.indicator.len() != graph.node_count() || !sorted || alpha_grid.is_empty() {
        report.violations.push(Violation {
            clause: "cutset".into(),
            alpha: None,
            edge: None,
            value: None,
        });
        return report;
    }
    let margins = match Margins::new(spec) {
        Ok(m) => m,
        Err(_) => {
            report.violations.push(Violation {
                clause: "cutset".into(),
                alpha: None,
                edge: None,
                value: None,
            });
            return report;
        }
    };
    let cut = cutset.boundary_edges.as_slice();
    let on_cut = |k: usize| cut.contains(&k);

    // alpha*: first grid interval where the cut margin becomes >= 0.
    let g: Vec<f64> = alpha_grid.iter().map(|&a| margins.crossing(a, Some(cut))).collect();
    let alpha_star = if g[0] >= 0.0 {
        None
    } else {
        g.iter()
            .position(|&v| v >= 0.0)
            .and_then(|i| bisect(|a| margins.crossing(a, Some(cut)), alpha_grid[i - 1], alpha_grid[i]).ok())
    };
    let Some(alpha_star) = alpha_star else {
        report.violations.push(Violation {
            clause: "2".into(),
            alpha: None,
            edge: None,
            value: Some(g.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        });
        return report;
    };
    report.alpha_star = Some(alpha_star);

    // Clause 1: every edge strictly inside its stable range before alpha*.
    for &a in alpha_grid.iter().filter(|&&a| a < alpha_star) {
        let m = margins.margin(a);
        if let Some(k) = (0..m.len()).find(|&k| m[k] >= 0.0) {
            report.violations.push(Violation {
                clause: "1".into(),
                alpha: Some(a),
                edge: label(k),
                value: Some(margins.raw(a)[k]),
            });
            break;
        }
    }

    // Clause 2: every cut edge is critical at alpha*.
    let m = margins.margin(alpha_star);
    if let Some(&k) = cut.iter().find(|&&k| m[k].abs() > CROSSING_TOL) {
        report.violations.push(Violation {
            clause: "2".into(),
            alpha: Some(alpha_star),
            edge: label(k),
            value: Some(margins.raw(alpha_star)[k]),
        });
    }

    // Clause 3: past alpha* only the cut edges are beyond critical. Grid
    // points that sit on the crossing itself count as critical.
    'grid: for &a in alpha_grid.iter().filter(|&&a| a > alpha_star) {
        let m = margins.margin(a);
        for k in 0..m.len() {
            let bad = if on_cut(k) { m[k] < -CROSSING_TOL } else { m[k] >= 0.0 };
            if bad {
                report.violations.push(Violation {
                    clause: "3".into(),
                    alpha: Some(a),
                    edge: label(k),
                    value: Some(margins.raw(a)[k]),
                });
                break 'grid;
            }
        }
    }

    report.holds = report.violations.is_empty();
    report
}

/// Closed-form equilibria of an oscillator tree.
///
/// `stable` is `L^dagger B A arcsin(flow)`; `unstable` replaces the entry of
/// `critical_edge` (0-based) by `pi - arcsin(flow_e)`.
pub fn kuramoto_equilibria(alpha: f64, spec: &ModelSpec, critical_edge: usize) -> Result<EquilibriumResult> {
    let m = oscillators(spec)?;
    let graph = &m.graph;
    if !graph.is_tree() {
        return Err(Error::CyclicGraph {
            n: graph.node_count(),
            m: graph.edge_count(),
        });
    }
    if critical_edge >= graph.edge_count() {
        return Err(Error::InvalidArgument(format!(
            "critical edge index {critical_edge} out of range"
        )));
    }
    let flow_map = FlowMap::new(graph)?;
    let flow = flow_map.apply(&m.omega.eval(alpha));
    let max_flow = flow.iter().fold(0.0f64, |acc, f| acc.max(f.abs()));
    if max_flow >= 1.0 {
        return Err(Error::NoEquilibrium { max_flow });
    }
    let lift = |angles: &[f64]| -> Vec<f64> {
        let per_node = frequencies_for_flows(graph, angles);
        (flow_map.pinv() * crate::graph::column(&per_node)).iter().copied().collect()
    };
    let principal: Vec<f64> = flow.iter().map(|f| f.asin()).collect();
    let mut flipped = principal.clone();
    flipped[critical_edge] = std::f64::consts::PI - principal[critical_edge];

    let stable = lift(&principal);
    let unstable = lift(&flipped);
    let field = spec.at(alpha)?;
    let field_residual = field.residual(&stable);
    let weights = effective_edge_weights(alpha, spec, &stable)?;
    Ok(EquilibriumResult {
        stable,
        unstable: Some(unstable),
        field_residual,
        jacobian_spectrum: spectral_decomp(&weighted_laplacian(graph, &weights))?,
    })
}

/// The consensus equilibrium of a swarm reached from `x0` (its mean, on
/// every node).
pub fn ar_consensus_equilibrium(alpha: f64, spec: &ModelSpec, x0: &[f64]) -> Result<EquilibriumResult> {
    let m = swarm(spec)?;
    let n = m.graph.node_count();
    if x0.len() != n {
        return Err(Error::InvalidArgument(format!(
            "initial state has {} entries for {n} nodes",
            x0.len()
        )));
    }
    let mean = x0.iter().sum::<f64>() / n as f64;
    let stable = vec![mean; n];
    let field_residual = spec.at(alpha)?.residual(&stable);
    let weights = effective_edge_weights(alpha, spec, &stable)?;
    Ok(EquilibriumResult {
        stable,
        unstable: None,
        field_residual,
        jacobian_spectrum: spectral_decomp(&weighted_laplacian(&m.graph, &weights))?,
    })
}

/// The equilibrium the linear analysis is taken about: the principal-branch
/// oscillator equilibrium on trees, consensus at the origin for swarms, and
/// the stable branch (or origin) for the reduced models.
pub fn reference_equilibrium(alpha: f64, spec: &ModelSpec) -> Result<Vec<f64>> {
    match spec {
        ModelSpec::CoupledOscillators(_) => Ok(kuramoto_equilibria(alpha, spec, 0)?.stable),
        ModelSpec::AttractionRepulsion(m) => Ok(vec![0.0; m.graph.node_count()]),
        ModelSpec::ReducedCoupledOscillators(m) => {
            let ratio = m.omega_bar.eval(alpha)[0] / m.coupling;
            if ratio.abs() > 1.0 {
                return Err(Error::NoEquilibrium { max_flow: ratio.abs() });
            }
            Ok(vec![ratio.asin()])
        }
        ModelSpec::ReducedAttractionRepulsion(_) => Ok(vec![0.0]),
    }
}

/// `-B diag(effective weights) B^T`, or the scalar slope for reduced models.
pub fn linearized_jacobian(alpha: f64, spec: &ModelSpec, equilibrium: &[f64]) -> Result<DMatrix<f64>> {
    let weights = effective_edge_weights(alpha, spec, equilibrium)?;
    Ok(match spec.graph() {
        Some(g) => -weighted_laplacian(g, &weights),
        None => DMatrix::from_element(1, 1, -weights[0]),
    })
}

/// Fiedler pair of `-J` at the reference equilibrium.
pub fn linearization_fiedler(alpha: f64, spec: &ModelSpec) -> Result<FiedlerPair> {
    let eq = reference_equilibrium(alpha, spec)?;
    let j = linearized_jacobian(alpha, spec, &eq)?;
    fiedler_pair(&(-j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    SemiStable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BifurcationKind {
    SaddleNode,
    Pitchfork,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedEquilibrium {
    pub value: f64,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSummary {
    pub alpha: f64,
    /// `omega_bar / k` or `w_r / w_a`.
    pub ratio: f64,
    pub equilibria: Vec<ReducedEquilibrium>,
    pub kind: BifurcationKind,
    /// Linear decay rate about the stable equilibrium (origin for swarms).
    pub linear_rate: Option<f64>,
    /// Radius of the invariant interval containing the swarm attractors.
    pub invariant_radius: Option<f64>,
}

/// Equilibria, their stability, and the linear rate of a reduced model at
/// `alpha`.
pub fn reduced_bifurcation_summary(spec: &ModelSpec, alpha: f64) -> Result<ReducedSummary> {
    match spec {
        ModelSpec::ReducedCoupledOscillators(m) => {
            let k = m.coupling;
            let ratio = m.omega_bar.eval(alpha)[0] / k;
            let (equilibria, kind, linear_rate) = if (ratio.abs() - 1.0).abs() <= 1e-12 {
                let phi = std::f64::consts::FRAC_PI_2.copysign(ratio);
                (
                    vec![ReducedEquilibrium {
                        value: phi,
                        stability: Stability::SemiStable,
                    }],
                    BifurcationKind::SaddleNode,
                    Some(0.0),
                )
            } else if ratio.abs() < 1.0 {
                let s = ratio.asin();
                (
                    vec![
                        ReducedEquilibrium {
                            value: s,
                            stability: Stability::Stable,
                        },
                        ReducedEquilibrium {
                            value: std::f64::consts::PI - s,
                            stability: Stability::Unstable,
                        },
                    ],
                    BifurcationKind::SaddleNode,
                    Some(-k * s.cos()),
                )
            } else {
                (Vec::new(), BifurcationKind::None, None)
            };
            Ok(ReducedSummary {
                alpha,
                ratio,
                equilibria,
                kind,
                linear_rate,
                invariant_radius: None,
            })
        }
        ModelSpec::ReducedAttractionRepulsion(m) => {
            let wa = m.attraction.eval(alpha)[0];
            if wa <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "attraction is {wa} at alpha = {alpha}; must stay positive"
                )));
            }
            let (wr, c) = (m.repulsion, m.range);
            let ratio = wr / wa;
            let radius = ratio * (c / 2.0).sqrt() * (-0.5f64).exp();
            let (equilibria, kind) = if ratio <= 1.0 {
                (
                    vec![ReducedEquilibrium {
                        value: 0.0,
                        stability: if ratio < 1.0 {
                            Stability::Stable
                        } else {
                            Stability::SemiStable
                        },
                    }],
                    if ratio < 1.0 {
                        BifurcationKind::None
                    } else {
                        BifurcationKind::Pitchfork
                    },
                )
            } else {
                let r = (-c * (wa / wr).ln()).sqrt();
                (
                    vec![
                        ReducedEquilibrium {
                            value: -r,
                            stability: Stability::Stable,
                        },
                        ReducedEquilibrium {
                            value: 0.0,
                            stability: Stability::Unstable,
                        },
                        ReducedEquilibrium {
                            value: r,
                            stability: Stability::Stable,
                        },
                    ],
                    BifurcationKind::Pitchfork,
                )
            };
            Ok(ReducedSummary {
                alpha,
                ratio,
                equilibria,
                kind,
                linear_rate: Some(2.0 * (wr - wa)),
                invariant_radius: Some(radius),
            })
        }
        other => Err(Error::WrongVariant {
            expected: "reduced_coupled_oscillators or reduced_attraction_repulsion",
            found: other.variant_name(),
        }),
    }
}
