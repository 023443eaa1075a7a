//! Parameterized vector fields: coupled oscillators (Kuramoto) and
//! attraction-repulsion swarms, on networks and in their scalar two-agent
//! reductions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Exponent below which `exp` is flushed to zero.
const EXP_FLOOR: f64 = -700.0;
/// Field residual accepted as "at equilibrium".
pub const EQUILIBRIUM_TOL: f64 = 1e-6;

/// Polynomial schedule in the bifurcation parameter, evaluated per component
/// as `base + alpha * direction + alpha^2 * higher_order[0] + ...`.
///
/// The affine case (`higher_order` empty) is the default and the common one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr")]
pub struct ParamSchedule {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub higher_order: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct ScheduleRepr {
    base: Vec<f64>,
    #[serde(default)]
    direction: Option<Vec<f64>>,
    #[serde(default)]
    higher_order: Vec<Vec<f64>>,
}

impl TryFrom<ScheduleRepr> for ParamSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        let direction = r.direction.unwrap_or_else(|| vec![0.0; r.base.len()]);
        ParamSchedule::polynomial(r.base, direction, r.higher_order)
    }
}

impl ParamSchedule {
    pub fn affine(base: Vec<f64>, direction: Vec<f64>) -> Result<Self> {
        Self::polynomial(base, direction, Vec::new())
    }

    pub fn constant(base: Vec<f64>) -> Self {
        let direction = vec![0.0; base.len()];
        ParamSchedule {
            base,
            direction,
            higher_order: Vec::new(),
        }
    }

    pub fn polynomial(
        base: Vec<f64>,
        direction: Vec<f64>,
        higher_order: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = base.len();
        if direction.len() != k || higher_order.iter().any(|h| h.len() != k) {
            return Err(Error::InvalidModel(
                "schedule coefficient vectors must have equal length".into(),
            ));
        }
        let all_finite = base
            .iter()
            .chain(&direction)
            .chain(higher_order.iter().flatten())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidModel("schedule has non-finite coefficients".into()));
        }
        Ok(ParamSchedule {
            base,
            direction,
            higher_order,
        })
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn eval(&self, alpha: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b + alpha * d)
            .collect();
        let mut power = alpha * alpha;
        for coeffs in &self.higher_order {
            for (o, c) in out.iter_mut().zip(coeffs) {
                *o += power * c;
            }
            power *= alpha;
        }
        out
    }

    /// Coefficient vectors in ascending powers of alpha.
    fn coefficients(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.base)
            .chain(std::iter::once(&self.direction))
            .chain(self.higher_order.iter())
    }
}

/// Kuramoto oscillators `theta' = omega(alpha) - B A sin(B^T theta)`.
///
/// The coupling `A` is the graph's edge weights. Natural frequencies are
/// expressed in the co-rotating frame, so every coefficient vector of
/// `omega` must sum to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoRepr")]
pub struct CoupledOscillators {
    pub graph: Graph,
    pub omega: ParamSchedule,
}

#[derive(Deserialize)]
struct CoRepr {
    graph: Graph,
    omega: ParamSchedule,
}

impl TryFrom<CoRepr> for CoupledOscillators {
    type Error = Error;
    fn try_from(r: CoRepr) -> Result<Self> {
        CoupledOscillators::new(r.graph, r.omega)
    }
}

impl CoupledOscillators {
    pub fn new(graph: Graph, omega: ParamSchedule) -> Result<Self> {
        let n = graph.node_count();
        if omega.len() != n {
            return Err(Error::InvalidModel(format!(
                "omega has {} components for {n} nodes",
                omega.len()
            )));
        }
        for coeffs in omega.coefficients() {
            let sum: f64 = coeffs.iter().sum();
            let scale: f64 = 1.0 + coeffs.iter().map(|v| v.abs()).sum::<f64>();
            if sum.abs() > 1e-9 * scale {
                return Err(Error::InvalidModel(format!(
                    "natural frequencies must sum to zero (co-rotating frame); got {sum}"
                )));
            }
        }
        Ok(CoupledOscillators { graph, omega })
    }

    pub fn coupling(&self) -> Vec<f64> {
        self.graph.weights()
    }
}

/// Swarm with linear attraction and Gaussian repulsion on each edge:
/// `x' = -B diag(w_a(alpha) - w_r exp(-(B^T x)^2 / c)) B^T x`.
///
/// Edge weights of `graph` are not used; only its topology matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArRepr")]
pub struct AttractionRepulsion {
    pub graph: Graph,
    pub attraction: ParamSchedule,
    pub repulsion: Vec<f64>,
    /// Repulsion range `c`.
    pub range: f64,
}

#[derive(Deserialize)]
struct ArRepr {
    graph: Graph,
    attraction: ParamSchedule,
    repulsion: Vec<f64>,
    range: f64,
}

impl TryFrom<ArRepr> for AttractionRepulsion {
    type Error = Error;
    fn try_from(r: ArRepr) -> Result<Self> {
        AttractionRepulsion::new(r.graph, r.attraction, r.repulsion, r.range)
    }
}

impl AttractionRepulsion {
    pub fn new(
        graph: Graph,
        attraction: ParamSchedule,
        repulsion: Vec<f64>,
        range: f64,
    ) -> Result<Self> {
        let m = graph.edge_count();
        if attraction.len() != m || repulsion.len() != m {
            return Err(Error::InvalidModel(format!(
                "attraction/repulsion need one entry per edge ({m})"
            )));
        }
        if repulsion.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidModel("repulsion weights must be positive".into()));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::InvalidModel("repulsion range c must be positive".into()));
        }
        Ok(AttractionRepulsion {
            graph,
            attraction,
            repulsion,
            range,
        })
    }
}

/// Two-oscillator phase difference `phi' = omega_bar(alpha) - k sin(phi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReducedCoRepr")]
pub struct ReducedCoupledOscillators {
    /// Coupling gain `k`.
    pub coupling: f64,
    /// Natural-frequency difference, a one-component schedule.
    pub omega_bar: ParamSchedule,
}

#[derive(Deserialize)]
struct ReducedCoRepr {
    coupling: f64,
    omega_bar: ParamSchedule,
}

impl TryFrom<ReducedCoRepr> for ReducedCoupledOscillators {
    type Error = Error;
    fn try_from(r: ReducedCoRepr) -> Result<Self> {
        if !(r.coupling > 0.0 && r.coupling.is_finite()) {
            return Err(Error::InvalidModel("coupling k must be positive".into()));
        }
        if r.omega_bar.len() != 1 {
            return Err(Error::InvalidModel("omega_bar must have one component".into()));
        }
        Ok(ReducedCoupledOscillators {
            coupling: r.coupling,
            omega_bar: r.omega_bar,
        })
    }
}

/// Two-agent separation `phi' = -2 phi (w_a(alpha) - w_r exp(-phi^2 / c))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReducedArRepr")]
pub struct ReducedAttractionRepulsion {
    pub attraction: ParamSchedule,
    pub repulsion: f64,
    pub range: f64,
}

#[derive(Deserialize)]
struct ReducedArRepr {
    attraction: ParamSchedule,
    repulsion: f64,
    range: f64,
}

impl TryFrom<ReducedArRepr> for ReducedAttractionRepulsion {
    type Error = Error;
    fn try_from(r: ReducedArRepr) -> Result<Self> {
        if r.attraction.len() != 1 {
            return Err(Error::InvalidModel("attraction must have one component".into()));
        }
        if !(r.repulsion > 0.0 && r.range > 0.0) {
            return Err(Error::InvalidModel("w_r and c must be positive".into()));
        }
        Ok(ReducedAttractionRepulsion {
            attraction: r.attraction,
            repulsion: r.repulsion,
            range: r.range,
        })
    }
}

/// A parameterized vector field `f(x, alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ModelSpec {
    CoupledOscillators(CoupledOscillators),
    AttractionRepulsion(AttractionRepulsion),
    ReducedCoupledOscillators(ReducedCoupledOscillators),
    ReducedAttractionRepulsion(ReducedAttractionRepulsion),
}

impl ModelSpec {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ModelSpec::CoupledOscillators(_) => "coupled_oscillators",
            ModelSpec::AttractionRepulsion(_) => "attraction_repulsion",
            ModelSpec::ReducedCoupledOscillators(_) => "reduced_coupled_oscillators",
            ModelSpec::ReducedAttractionRepulsion(_) => "reduced_attraction_repulsion",
        }
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::CoupledOscillators(m) => m.graph.node_count(),
            ModelSpec::AttractionRepulsion(m) => m.graph.node_count(),
            _ => 1,
        }
    }

    pub fn graph(&self) -> Option<&Graph> {
        match self {
            ModelSpec::CoupledOscillators(m) => Some(&m.graph),
            ModelSpec::AttractionRepulsion(m) => Some(&m.graph),
            _ => None,
        }
    }

    pub fn is_oscillator(&self) -> bool {
        matches!(
            self,
            ModelSpec::CoupledOscillators(_) | ModelSpec::ReducedCoupledOscillators(_)
        )
    }

    /// Freezes the schedules at `alpha`, checking parameter validity there.
    pub fn at(&self, alpha: f64) -> Result<VectorField<'_>> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha = {alpha}")));
        }
        let params = match self {
            ModelSpec::CoupledOscillators(m) => m.omega.eval(alpha),
            ModelSpec::ReducedCoupledOscillators(m) => m.omega_bar.eval(alpha),
            ModelSpec::AttractionRepulsion(m) => m.attraction.eval(alpha),
            ModelSpec::ReducedAttractionRepulsion(m) => m.attraction.eval(alpha),
        };
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!("schedule is non-finite at alpha = {alpha}")));
        }
        if matches!(
            self,
            ModelSpec::AttractionRepulsion(_) | ModelSpec::ReducedAttractionRepulsion(_)
        ) {
            if let Some(k) = params.iter().position(|&w| w <= 0.0) {
                return Err(Error::InvalidModel(format!(
                    "attraction on edge {} is {} at alpha = {alpha}; must stay positive",
                    k + 1,
                    params[k]
                )));
            }
        }
        Ok(VectorField {
            spec: self,
            alpha,
            params,
        })
    }
}

/// A model with its schedule evaluated at a fixed `alpha`.
#[derive(Debug, Clone)]
pub struct VectorField<'a> {
    spec: &'a ModelSpec,
    alpha: f64,
    /// `omega(alpha)` for oscillators, `w_a(alpha)` for swarms.
    params: Vec<f64>,
}

impl VectorField<'_> {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `omega(alpha)` (oscillators) or `w_a(alpha)` (swarms).
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Writes `f(x, alpha)` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self.spec {
            ModelSpec::CoupledOscillators(m) => {
                out.copy_from_slice(&self.params);
                for e in m.graph.edges() {
                    let flow = e.weight * (x[e.head] - x[e.tail]).sin();
                    out[e.head] -= flow;
                    out[e.tail] += flow;
                }
            }
            ModelSpec::AttractionRepulsion(m) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for (k, e) in m.graph.edges().iter().enumerate() {
                    let d = x[e.head] - x[e.tail];
                    let w = self.params[k] - m.repulsion[k] * repulsion_kernel(d * d, m.range);
                    out[e.head] -= w * d;
                    out[e.tail] += w * d;
                }
            }
            ModelSpec::ReducedCoupledOscillators(m) => {
                out[0] = reduced_kuramoto_field(x[0], self.params[0], m.coupling);
            }
            ModelSpec::ReducedAttractionRepulsion(m) => {
                out[0] = reduced_ar_field(x[0], self.params[0], m.repulsion, m.range);
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// `||f(x)||_inf`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.eval(x).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// `exp(-d2 / c)` with arguments below `-700` flushed to zero.
pub fn repulsion_kernel(d2: f64, c: f64) -> f64 {
    let arg = -d2 / c;
    if arg < EXP_FLOOR {
        0.0
    } else {
        arg.exp()
    }
}

fn expect_variant<'a, T>(
    spec: &'a ModelSpec,
    pick: impl Fn(&'a ModelSpec) -> Option<&'a T>,
    expected: &'static str,
) -> Result<&'a T> {
    pick(spec).ok_or(Error::WrongVariant {
        expected,
        found: spec.variant_name(),
    })
}

/// `omega(alpha) - B A sin(B^T theta)` for a coupled-oscillator model.
pub fn kuramoto_field(theta: &[f64], alpha: f64, spec: &ModelSpec) -> Result<Vec<f64>> {
    let m = expect_variant(
        spec,
        |s| match s {
            ModelSpec::CoupledOscillators(m) => Some(m),
            _ => None,
        },
        "coupled_oscillators",
    )?;
    check_len(theta, m.graph.node_count())?;
    let omega = m.omega.eval(alpha);
    let coupling = m.coupling();
    let sines: Vec<f64> = m
        .graph
        .edge_differences(theta)
        .iter()
        .zip(&coupling)
        .map(|(d, a)| a * d.sin())
        .collect();
    let mut out = vec![0.0; theta.len()];
    m.graph.scatter_edges(&sines, &mut out);
    Ok(omega.iter().zip(&out).map(|(w, s)| w - s).collect())
}

/// `-B Abar(x, alpha) B^T x` for an attraction-repulsion model.
pub fn attraction_repulsion_field(x: &[f64], alpha: f64, spec: &ModelSpec) -> Result<Vec<f64>> {
    let m = expect_variant(
        spec,
        |s| match s {
            ModelSpec::AttractionRepulsion(m) => Some(m),
            _ => None,
        },
        "attraction_repulsion",
    )?;
    check_len(x, m.graph.node_count())?;
    let wa = m.attraction.eval(alpha);
    let per_edge: Vec<f64> = m
        .graph
        .edge_differences(x)
        .iter()
        .enumerate()
        .map(|(k, &d)| (wa[k] - m.repulsion[k] * repulsion_kernel(d * d, m.range)) * d)
        .collect();
    let mut out = vec![0.0; x.len()];
    m.graph.scatter_edges(&per_edge, &mut out);
    out.iter_mut().for_each(|v| *v = -*v);
    Ok(out)
}

pub fn reduced_kuramoto_field(phi: f64, omega_bar: f64, k: f64) -> f64 {
    omega_bar - k * phi.sin()
}

pub fn reduced_ar_field(phi: f64, w_a: f64, w_r: f64, c: f64) -> f64 {
    -2.0 * phi * (w_a - w_r * repulsion_kernel(phi * phi, c))
}

fn check_len(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::InvalidArgument(format!(
            "state has {} entries, model has {n}",
            x.len()
        )));
    }
    Ok(())
}

/// Edge weights of the perturbation-dynamics Laplacian at an equilibrium.
///
/// Oscillators: `a_e cos((B^T theta)_e)`. Swarms: `w_a^e(alpha) - w_r^e`
/// (linearization about consensus). The reduced models return their single
/// effective gain: `k cos(phi)` and `2 (w_a - w_r)` respectively.
pub fn effective_edge_weights(alpha: f64, spec: &ModelSpec, equilibrium: &[f64]) -> Result<Vec<f64>> {
    check_len(equilibrium, spec.dim())?;
    let field = spec.at(alpha)?;
    let residual = field.residual(equilibrium);
    if !(residual <= EQUILIBRIUM_TOL) {
        return Err(Error::NotAnEquilibrium { residual });
    }
    Ok(match spec {
        ModelSpec::CoupledOscillators(m) => m
            .graph
            .edge_differences(equilibrium)
            .iter()
            .zip(m.graph.edges())
            .map(|(d, e)| e.weight * d.cos())
            .collect(),
        ModelSpec::AttractionRepulsion(m) => {
            let spread = m
                .graph
                .edge_differences(equilibrium)
                .iter()
                .fold(0.0f64, |acc, d| acc.max(d.abs()));
            if spread > EQUILIBRIUM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "swarm linearization needs a consensus state (max edge spread {spread:.3e})"
                )));
            }
            field
                .params()
                .iter()
                .zip(&m.repulsion)
                .map(|(wa, wr)| wa - wr)
                .collect()
        }
        ModelSpec::ReducedCoupledOscillators(m) => vec![m.coupling * equilibrium[0].cos()],
        ModelSpec::ReducedAttractionRepulsion(m) => {
            if equilibrium[0].abs() > EQUILIBRIUM_TOL {
                return Err(Error::InvalidArgument(
                    "reduced swarm linearization is taken at the origin".into(),
                ));
            }
            vec![2.0 * (field.params()[0] - m.repulsion)]
        }
    })
}
