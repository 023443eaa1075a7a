//! Fixed-step RK4 integration, deterministic perturbation experiments, and
//! noise-injection experiments.
//!
//! Noise is drawn from ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`)
//! through the `rand_distr` standard normal sampler; both are
//! platform-independent, so a seed fixes the trajectory bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bifurcation::reference_equilibrium;
use crate::error::{Error, Result};
use crate::graph::SpectralDecomposition;
use crate::models::ModelSpec;

pub const DEFAULT_DT: f64 = 1e-3;
/// Relaxation time used when no closed-form equilibrium is available.
pub const BURN_IN: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    /// Integrator step.
    pub dt: f64,
    /// Spacing of the recorded samples.
    pub sample_interval: f64,
    pub variant: String,
    pub seed: Option<u64>,
}

/// Uniformly sampled states, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    states: Vec<f64>,
    dim: usize,
    pub alpha: f64,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    fn with_capacity(dim: usize, rows: usize, alpha: f64, meta: TrajectoryMeta) -> Self {
        Trajectory {
            times: Vec::with_capacity(rows),
            states: Vec::with_capacity(rows * dim),
            dim,
            alpha,
            meta,
        }
    }

    fn push(&mut self, t: f64, x: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(x);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times.iter().copied().zip(self.states.chunks_exact(self.dim))
    }

    /// Time series of component `j`.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.states.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// A trajectory with the same metadata and new rows.
    pub fn remap(&self, rows: impl Iterator<Item = (f64, Vec<f64>)>) -> Trajectory {
        let mut out = Trajectory::with_capacity(self.dim, self.len(), self.alpha, self.meta.clone());
        for (t, x) in rows {
            out.push(t, &x);
        }
        out
    }

    /// Index of the first sample with `times[i] >= t` (within half a step).
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let slack = 0.5 * self.meta.sample_interval.min(self.meta.dt) * 1e-6;
        self.times.iter().position(|&s| s >= t - slack)
    }
}

/// A constant input `signal` applied on `[t_on, t_off]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub signal: Vec<f64>,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Per-component standard deviation.
    pub sigma: f64,
    /// Injection period; a whole number of integrator steps.
    pub delta_t: f64,
    pub seed: u64,
    pub horizon: f64,
}

fn step_count(span: f64, dt: f64, what: &str) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} must be positive, got {span}")));
    }
    let steps = (span / dt).round();
    if (steps * dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "{what} {span} is not a whole number of steps of {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Reusable RK4 work buffers.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, f: &mut impl FnMut(f64, &[f64], &mut [f64]), t: f64, x: &mut [f64], dt: f64) {
        let h = 0.5 * dt;
        f(t, x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k1[i];
        }
        f(t + h, &self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k2[i];
        }
        f(t + h, &self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f(t + dt, &self.tmp, &mut self.k4);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn check_finite(x: &[f64], t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { t })
    }
}

/// Integrates the autonomous field `field(x, out)` from `x0` over
/// `[0, horizon]` with classical RK4, recording every step.
pub fn integrate(
    mut field: impl FnMut(&[f64], &mut [f64]),
    x0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_forced(move |_, x, out| field(x, out), x0, horizon, dt, 1)
}

/// Non-autonomous RK4 for `field(t, x, out)`, recording every
/// `record_every`-th step (and the initial state).
pub fn integrate_forced(
    mut field: impl FnMut(f64, &[f64], &mut [f64]),
    x0: &[f64],
    horizon: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory> {
    let steps = step_count(horizon, dt, "horizon")?;
    let record_every = record_every.max(1);
    check_finite(x0, 0.0)?;
    let meta = TrajectoryMeta {
        dt,
        sample_interval: dt * record_every as f64,
        variant: String::new(),
        seed: None,
    };
    let mut traj = Trajectory::with_capacity(x0.len(), steps / record_every + 1, f64::NAN, meta);
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    traj.push(0.0, &x);
    for s in 0..steps {
        let t = s as f64 * dt;
        rk.step(&mut field, t, &mut x, dt);
        let t1 = (s + 1) as f64 * dt;
        check_finite(&x, t1)?;
        if (s + 1) % record_every == 0 {
            traj.push(t1, &x);
        }
    }
    Ok(traj)
}

/// Relaxes `x0` under the unforced model for `duration`.
pub fn relax(spec: &ModelSpec, alpha: f64, x0: &[f64], duration: f64, dt: f64) -> Result<Vec<f64>> {
    let field = spec.at(alpha)?;
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    let steps = step_count(duration, dt, "relaxation time")?;
    let mut f = |_: f64, y: &[f64], out: &mut [f64]| field.eval_into(y, out);
    for s in 0..steps {
        rk.step(&mut f, s as f64 * dt, &mut x, dt);
        check_finite(&x, (s + 1) as f64 * dt - duration)?;
    }
    Ok(x)
}

/// State the experiments start from: the closed-form equilibrium where one
/// exists, otherwise the end of a `BURN_IN` relaxation from the origin.
pub fn starting_state(spec: &ModelSpec, alpha: f64, dt: f64) -> Result<Vec<f64>> {
    match reference_equilibrium(alpha, spec) {
        Ok(x) => Ok(x),
        Err(Error::CyclicGraph { .. }) => relax(spec, alpha, &vec![0.0; spec.dim()], BURN_IN, dt),
        Err(e) => Err(e),
    }
}

/// Integrates `x' = f(x, alpha) + u(t)` from the stable equilibrium, with
/// `u = pert.signal` on the window and zero elsewhere.
///
/// The window edges should fall on the step grid; each step is forced or
/// not according to its midpoint.
pub fn run_perturbation_experiment(
    spec: &ModelSpec,
    alpha: f64,
    pert: &PerturbationSpec,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    let x0 = starting_state(spec, alpha, dt)?;
    run_perturbation_from(spec, alpha, pert, dt, horizon, &x0)
}

/// As [`run_perturbation_experiment`], from an explicit initial state.
pub fn run_perturbation_from(
    spec: &ModelSpec,
    alpha: f64,
    pert: &PerturbationSpec,
    dt: f64,
    horizon: f64,
    x0: &[f64],
) -> Result<Trajectory> {
    let n = spec.dim();
    if pert.signal.len() != n || x0.len() != n {
        return Err(Error::InvalidArgument(format!(
            "perturbation signal and initial state need {n} entries"
        )));
    }
    let (t_on, t_off) = pert.window;
    if !(0.0 <= t_on && t_on < t_off && t_off <= horizon) {
        return Err(Error::InvalidArgument(format!(
            "perturbation window [{t_on}, {t_off}] must satisfy 0 <= t_on < t_off <= horizon"
        )));
    }
    let field = spec.at(alpha)?;
    let signal = pert.signal.clone();
    let half = 0.5 * dt;
    let mut calls = 0usize;
    let mut forced = false;
    let mut traj = integrate_forced(
        move |t, x, out| {
            // RK4 makes four calls per step; the first fixes the forcing.
            if calls % 4 == 0 {
                let mid = t + half;
                forced = mid >= t_on && mid <= t_off;
            }
            calls += 1;
            field.eval_into(x, out);
            if forced {
                for (o, u) in out.iter_mut().zip(&signal) {
                    *o += u;
                }
            }
        },
        x0,
        horizon,
        dt,
        1,
    )?;
    traj.alpha = alpha;
    traj.meta.variant = spec.variant_name().into();
    Ok(traj)
}

/// Integrates the unforced model and adds `sigma * N(0, I)` to the state
/// every `delta_t`. Records the initial state and the post-injection state
/// at each injection instant.
pub fn run_noise_experiment(spec: &ModelSpec, alpha: f64, noise: &NoiseSpec, dt: f64) -> Result<Trajectory> {
    let x0 = starting_state(spec, alpha, dt)?;
    run_noise_from(spec, alpha, noise, dt, &x0)
}

/// As [`run_noise_experiment`], from an explicit initial state.
pub fn run_noise_from(
    spec: &ModelSpec,
    alpha: f64,
    noise: &NoiseSpec,
    dt: f64,
    x0: &[f64],
) -> Result<Trajectory> {
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {}", noise.sigma)));
    }
    if x0.len() != spec.dim() {
        return Err(Error::InvalidArgument("initial state has the wrong dimension".into()));
    }
    let per_injection = step_count(noise.delta_t, dt, "noise period")?;
    let total = step_count(noise.horizon, dt, "horizon")?;
    let injections = total / per_injection;
    if injections == 0 {
        return Err(Error::InvalidArgument("horizon is shorter than one noise period".into()));
    }
    let field = spec.at(alpha)?;
    let mut f = |_: f64, y: &[f64], out: &mut [f64]| field.eval_into(y, out);
    let mut rng = ChaCha20Rng::seed_from_u64(noise.seed);
    let meta = TrajectoryMeta {
        dt,
        sample_interval: noise.delta_t,
        variant: spec.variant_name().into(),
        seed: Some(noise.seed),
    };
    let mut traj = Trajectory::with_capacity(x0.len(), injections + 1, alpha, meta);
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    traj.push(0.0, &x);
    let mut step = 0usize;
    for j in 1..=injections {
        for _ in 0..per_injection {
            rk.step(&mut f, step as f64 * dt, &mut x, dt);
            step += 1;
        }
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise.sigma * z;
        }
        let t = j as f64 * noise.delta_t;
        check_finite(&x, t)?;
        traj.push(t, &x);
    }
    Ok(traj)
}

/// `sum_i exp(-lambda_i t) v_i v_i^T eps0` for the spectrum of `-J`.
pub fn closed_form_perturbation(eps0: &[f64], spectrum: &SpectralDecomposition, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; eps0.len()];
    for (i, &lambda) in spectrum.eigenvalues.iter().enumerate() {
        let v = spectrum.eigenvectors.column(i);
        let coeff = (-lambda * t).exp() * v.iter().zip(eps0).map(|(a, b)| a * b).sum::<f64>();
        for (o, vi) in out.iter_mut().zip(v.iter()) {
            *o += coeff * vi;
        }
    }
    out
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(d: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = d.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// Time after `start` until the state last leaves the `tol` ball around
/// `reference` (sup norm). `None` if it is still outside at the final
/// sample. With `wrap`, differences are taken on the circle.
pub fn recovery_time(
    traj: &Trajectory,
    reference: &[f64],
    start: f64,
    tol: f64,
    wrap: bool,
) -> Option<f64> {
    let deviation = |x: &[f64]| {
        x.iter()
            .zip(reference)
            .map(|(a, b)| {
                let d = a - b;
                if wrap {
                    wrap_angle(d).abs()
                } else {
                    d.abs()
                }
            })
            .fold(0.0f64, f64::max)
    };
    let first = traj.index_at(start)?;
    let mut last_out = None;
    for i in first..traj.len() {
        if deviation(traj.state(i)) > tol {
            last_out = Some(i);
        }
    }
    match last_out {
        None => Some(0.0),
        Some(i) if i + 1 == traj.len() => None,
        Some(i) => Some(traj.times[i + 1] - start),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifurcation::kuramoto_equilibria;
    use crate::graph::{laplacian, spectral_decomp, Graph};
    use crate::models::{AttractionRepulsion, ParamSchedule, ReducedCoupledOscillators};
    use approx::assert_abs_diff_eq;

    fn reduced_co(k: f64, omega_bar: f64) -> ModelSpec {
        ModelSpec::ReducedCoupledOscillators(
            serde_json::from_value::<ReducedCoupledOscillators>(serde_json::json!({
                "coupling": k, "omega_bar": {"base": [omega_bar]}
            }))
            .unwrap(),
        )
    }

    #[test]
    fn exponential_decay() {
        let traj = integrate(|x, out| out[0] = -x[0], &[1.0], 1.0, 1e-3).unwrap();
        assert_abs_diff_eq!(traj.last_state()[0], (-1.0f64).exp(), epsilon = 1e-8);
        assert_eq!(traj.len(), 1001);
        assert_abs_diff_eq!(traj.times[1000], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |dt: f64| {
            let traj = integrate(|x, out| out[0] = -x[0], &[1.0], 1.0, dt).unwrap();
            (traj.last_state()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((14.0..18.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn reduced_co_settles_at_arcsin() {
        let spec = reduced_co(2.0, 1.0);
        let field = spec.at(0.0).unwrap();
        let traj = integrate(|x, out| field.eval_into(x, out), &[0.0], 30.0, 1e-3).unwrap();
        // Independent root of omega_bar - k sin(phi) = 0 by bisection.
        let (mut lo, mut hi) = (0.0f64, 1.5f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - 2.0 * mid.sin() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(traj.last_state()[0], lo, epsilon = 1e-6);
        assert_abs_diff_eq!(lo, std::f64::consts::PI / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn consensus_is_preserved() {
        let g = Graph::from_triples(3, &[(1, 2, 1.0), (2, 3, 1.0)]).unwrap();
        let spec = ModelSpec::AttractionRepulsion(
            AttractionRepulsion::new(g, ParamSchedule::constant(vec![2.0, 2.0]), vec![1.0, 1.0], 1.0).unwrap(),
        );
        let field = spec.at(0.0).unwrap();
        let traj = integrate(|x, out| field.eval_into(x, out), &[0.4; 3], 5.0, 1e-2).unwrap();
        assert!(traj.rows().all(|(_, x)| x.iter().all(|&v| v == 0.4)));
    }

    #[test]
    fn zero_signal_stays_at_equilibrium() {
        let spec = reduced_co(2.0, 1.0);
        let pert = PerturbationSpec {
            signal: vec![0.0],
            window: (1.0, 2.0),
        };
        let traj = run_perturbation_experiment(&spec, 0.0, &pert, 1e-2, 5.0).unwrap();
        let eq = std::f64::consts::PI / 6.0;
        assert!(traj.rows().all(|(_, x)| (x[0] - eq).abs() < 1e-12));
    }

    #[test]
    fn forcing_window_is_exact_on_grid() {
        // x' = u on [1, 2]: x(3) = 1 exactly.
        let g = Graph::from_triples(2, &[(1, 2, 1.0)]).unwrap();
        let spec = ModelSpec::AttractionRepulsion(
            AttractionRepulsion::new(g, ParamSchedule::constant(vec![1e-12]), vec![1e-12], 1.0).unwrap(),
        );
        let pert = PerturbationSpec {
            signal: vec![1.0, 1.0],
            window: (1.0, 2.0),
        };
        let traj = run_perturbation_from(&spec, 0.0, &pert, 0.1, 3.0, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(traj.last_state()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noise_is_deterministic_and_zero_sigma_is_quiet() {
        let spec = reduced_co(2.0, 1.0);
        let noise = NoiseSpec {
            sigma: 0.5,
            delta_t: 1.0,
            seed: 42,
            horizon: 50.0,
        };
        let a = run_noise_experiment(&spec, 0.0, &noise, 1e-2).unwrap();
        let b = run_noise_experiment(&spec, 0.0, &noise, 1e-2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 51);
        let c = run_noise_experiment(&spec, 0.0, &NoiseSpec { seed: 43, ..noise.clone() }, 1e-2).unwrap();
        assert_ne!(a, c);
        let quiet = run_noise_experiment(&spec, 0.0, &NoiseSpec { sigma: 0.0, ..noise }, 1e-2).unwrap();
        let eq = std::f64::consts::PI / 6.0;
        assert!(quiet.rows().all(|(_, x)| (x[0] - eq).abs() < 1e-12));
    }

    #[test]
    fn closed_form_matches_linear_integration() {
        let g = Graph::from_triples(
            5,
            &[(1, 2, 1.0), (2, 3, 0.5), (3, 4, 2.0), (4, 5, 1.0), (5, 1, 0.7)],
        )
        .unwrap();
        let l = laplacian(&g);
        let spectrum = spectral_decomp(&l).unwrap();
        let eps0 = [0.3, -0.1, 0.4, 0.0, -0.2];
        assert!(closed_form_perturbation(&eps0, &spectrum, 0.0)
            .iter()
            .zip(&eps0)
            .all(|(a, b)| (a - b).abs() < 1e-12));
        let traj = integrate(
            |x, out| {
                let y = &l * crate::graph::column(x);
                for (o, v) in out.iter_mut().zip(y.iter()) {
                    *o = -v;
                }
            },
            &eps0,
            10.0,
            1e-3,
        )
        .unwrap();
        for i in (0..traj.len()).step_by(500) {
            let cf = closed_form_perturbation(&eps0, &spectrum, traj.times[i]);
            for (a, b) in cf.iter().zip(traj.state(i)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        let late = closed_form_perturbation(&eps0, &spectrum, 60.0);
        let mean = eps0.iter().sum::<f64>() / 5.0;
        assert!(late.iter().all(|v| (v - mean).abs() < 1e-8));
    }

    #[test]
    fn small_perturbation_follows_linearization() {
        let g = Graph::from_triples(4, &[(1, 2, 1.0), (2, 3, 1.0), (2, 4, 2.0)]).unwrap();
        let flows = [0.3, -0.2, 0.4];
        let omega = crate::bifurcation::frequencies_for_flows(&g, &flows);
        let spec = ModelSpec::CoupledOscillators(
            crate::models::CoupledOscillators::new(g, ParamSchedule::constant(omega)).unwrap(),
        );
        let eq = kuramoto_equilibria(0.0, &spec, 0).unwrap();
        let eps0 = [1e-3, -5e-4, 2e-4, 3e-4];
        let x0: Vec<f64> = eq.stable.iter().zip(&eps0).map(|(a, b)| a + b).collect();
        let field = spec.at(0.0).unwrap();
        let traj = integrate(|x, out| field.eval_into(x, out), &x0, 4.0, 1e-3).unwrap();
        let mean = eps0.iter().sum::<f64>() / 4.0;
        for i in (0..traj.len()).step_by(250) {
            let cf = closed_form_perturbation(&eps0, &eq.jacobian_spectrum, traj.times[i]);
            let sim: Vec<f64> = traj.state(i).iter().zip(&eq.stable).map(|(a, b)| a - b).collect();
            // Compare the transient parts, which are what decays.
            let num: f64 = cf.iter().zip(&sim).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let den: f64 = cf.iter().map(|a| (a - mean).abs()).fold(0.0, f64::max);
            assert!(num <= 0.01 * den.max(1e-9) + 1e-9, "t = {}", traj.times[i]);
        }
    }

    #[test]
    fn recovery_on_the_circle() {
        let spec = reduced_co(2.0, 1.0);
        let pert = PerturbationSpec {
            signal: vec![0.4],
            window: (6.0, 8.0),
        };
        let traj = run_perturbation_experiment(&spec, 0.0, &pert, 1e-2, 40.0).unwrap();
        let eq = [std::f64::consts::PI / 6.0];
        let t = recovery_time(&traj, &eq, 8.0, 1e-2, true).unwrap();
        assert!(t > 0.5 && t < 10.0, "{t}");
        assert_abs_diff_eq!(wrap_angle(std::f64::consts::TAU + 0.1), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-3.5), std::f64::consts::TAU - 3.5, epsilon = 1e-12);
    }

    #[test]
    fn non_grid_horizon_is_rejected() {
        assert!(integrate(|_, out| out[0] = 0.0, &[0.0], 1.00005, 1e-3).is_err());
        assert!(matches!(
            integrate(|x, out| out[0] = x[0] * x[0], &[1.0], 2.0, 1e-3),
            Err(Error::NonFiniteState { .. })
        ));
    }
}
