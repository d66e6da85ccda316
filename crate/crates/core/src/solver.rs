//! Catching-up time stepping for ẋ ∈ f(x) − N_C(x) and the checks its solutions must pass.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Point, ProxSet, H_FD, TOL_MEM, TOL_ORTH};
use crate::linalg;

type FieldFn = dyn Fn(&Point) -> Point + Send + Sync;

/// Lipschitz perturbation f with its declared constant κ.
#[derive(Clone)]
pub struct VectorField {
    eval: Arc<FieldFn>,
    pub kappa: f64,
    pub label: String,
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorField").field("label", &self.label).field("kappa", &self.kappa).finish()
    }
}

impl VectorField {
    pub fn new(label: impl Into<String>, kappa: f64, f: impl Fn(&Point) -> Point + Send + Sync + 'static) -> Self {
        VectorField { eval: Arc::new(f), kappa, label: label.into() }
    }

    #[inline]
    pub fn eval(&self, x: &Point) -> Point {
        (self.eval)(x)
    }

    pub fn zero(n: usize) -> Self {
        VectorField::new("zero", 0.0, move |_| Point::zeros(n))
    }

    pub fn constant(c: Point) -> Self {
        VectorField::new("constant", 0.0, move |_| c.clone())
    }

    /// f(x, y) = ω(−y, x).
    pub fn rotation(omega: f64) -> Self {
        VectorField::new("rotation", omega.abs(), move |x| Point::from_column_slice(&[-omega * x[1], omega * x[0]]))
    }

    pub fn linear(a: DMatrix<f64>) -> Self {
        VectorField::affine(a.clone(), Point::zeros(a.nrows()))
    }

    pub fn affine(a: DMatrix<f64>, b: Point) -> Self {
        let kappa = linalg::spectral_norm(&a);
        VectorField::new("affine", kappa, move |x| &a * x + &b)
    }

    /// f(x) = −x + c·x/‖x‖, Lipschitz with constant 1 + c outside the unit ball.
    pub fn radial(c: f64) -> Self {
        VectorField::new("radial", 1.0 + c.abs(), move |x| {
            let n = x.norm();
            if n > 0.0 {
                -x + x * (c / n)
            } else {
                -x
            }
        })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Largest observed ‖f(x) − f(y)‖ / ‖x − y‖ over consecutive sample pairs; errors when it exceeds κ + tol.
    pub fn validate_kappa(&self, samples: &[Point], tol: f64) -> Result<f64> {
        let mut worst = 0.0_f64;
        for pair in samples.windows(2) {
            let dx = (&pair[0] - &pair[1]).norm();
            if dx == 0.0 {
                continue;
            }
            let ratio = (self.eval(&pair[0]) - self.eval(&pair[1])).norm() / dx;
            worst = worst.max(ratio);
        }
        if worst > self.kappa + tol {
            return Err(Error::HypothesisViolation(format!(
                "declared Lipschitz constant {} of {} is exceeded: observed {}",
                self.kappa, self.label, worst
            )));
        }
        Ok(worst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    CatchingUp,
    SemiImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub orth: f64,
    pub mem: f64,
    /// Absolute part of the bound tolerance; the relative part is the same number times the bound.
    pub bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { orth: TOL_ORTH, mem: TOL_MEM, bound: 1e-6 }
    }
}

impl Tolerances {
    #[inline]
    pub fn bound_for(&self, magnitude: f64) -> f64 {
        self.bound * (1.0 + magnitude.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub h: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub tol: Tolerances,
}

impl IntegratorConfig {
    pub fn new(h: f64, t_final: f64) -> Self {
        IntegratorConfig { h, t_final, scheme: Scheme::CatchingUp, tol: Tolerances::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidArgument("step h must be positive".into()));
        }
        if !(self.t_final >= self.h) {
            return Err(Error::InvalidArgument("horizon T must be at least h".into()));
        }
        if self.t_final / self.h > 1e12 {
            return Err(Error::InvalidArgument("T/h is too large".into()));
        }
        Ok(())
    }

    /// ⌈T/h⌉, ignoring rounding noise in the quotient.
    pub fn steps(&self) -> usize {
        let q = self.t_final / self.h;
        let r = q.round();
        if (q - r).abs() <= 1e-9 * q.max(1.0) {
            r as usize
        } else {
            q.ceil() as usize
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_horizon(mut self, t_final: f64) -> Self {
        self.t_final = t_final;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct StepDiagnostics {
    /// |⟨v_k, f(x_k) − v_k⟩|.
    pub orth_residual: f64,
    /// min{‖f(x_k)‖, ‖f(x₀)‖e^{κt_k}} + tol − ‖v_k‖.
    pub speed_slack: f64,
    /// t_{k+1}‖f(x₀)‖e^{κt_{k+1}} + tol − ‖x_{k+1} − x₀‖.
    pub drift_slack: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    pub velocities: Vec<Point>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &Point {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |x| x.len())
    }

    /// CSV with one row per state; the last row has empty velocity and diagnostic cells.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("t");
        for i in 0..n {
            let _ = write!(out, ",x_{i}");
        }
        for i in 0..n {
            let _ = write!(out, ",v_{i}");
        }
        out.push_str(",orth_residual,speed_slack,drift_slack\n");
        for k in 0..self.len() {
            let _ = write!(out, "{}", fmt17(self.times[k]));
            for v in self.states[k].iter() {
                let _ = write!(out, ",{}", fmt17(*v));
            }
            if k < self.velocities.len() {
                for v in self.velocities[k].iter() {
                    let _ = write!(out, ",{}", fmt17(*v));
                }
                let d = &self.diagnostics[k];
                let _ = write!(out, ",{},{},{}", fmt17(d.orth_residual), fmt17(d.speed_slack), fmt17(d.drift_slack));
            } else {
                out.push_str(&",".repeat(n + 3));
            }
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn contained(set: &ProxSet, x: &Point, tol_mem: f64) -> Result<()> {
    let d = set.distance(x)?;
    if d > tol_mem {
        return Err(Error::NotInSet { distance: d });
    }
    Ok(())
}

/// One catching-up step Π_C(x + h f(x)).
pub fn catching_up_step(set: &ProxSet, f: &VectorField, x: &Point, h: f64) -> Result<Point> {
    contained(set, x, TOL_MEM)?;
    step_unchecked(set, f, x, h, set.prox_constant()?)
}

fn step_unchecked(set: &ProxSet, f: &VectorField, x: &Point, h: f64, r: f64) -> Result<Point> {
    let fx = f.eval(x);
    let step = h * fx.norm();
    if r.is_finite() && step >= r / 2.0 {
        return Err(Error::StepTooLarge { step, half_r: r / 2.0 });
    }
    set.project(&(x + fx * h))
}

fn advance(set: &ProxSet, f: &VectorField, x: &Point, h: f64, r: f64, scheme: Scheme) -> Result<Point> {
    match scheme {
        Scheme::CatchingUp => step_unchecked(set, f, x, h, r),
        Scheme::SemiImplicit => {
            let predictor = step_unchecked(set, f, x, h, r)?;
            let fp = f.eval(&predictor);
            let step = h * fp.norm();
            if r.is_finite() && step >= r / 2.0 {
                return Err(Error::StepTooLarge { step, half_r: r / 2.0 });
            }
            set.project(&(x + fp * h))
        }
    }
}

/// Integrates until T or the first failing step; returns the partial path and the failure.
pub fn integrate_partial(
    set: &ProxSet,
    f: &VectorField,
    x0: &Point,
    cfg: &IntegratorConfig,
) -> (Trajectory, Option<Error>) {
    let mut traj = Trajectory::default();
    if let Err(e) = cfg.validate().and_then(|_| contained(set, x0, cfg.tol.mem)) {
        return (traj, Some(e));
    }
    let r = match set.prox_constant() {
        Ok(r) => r,
        Err(e) => return (traj, Some(e)),
    };
    let steps = cfg.steps();
    let h = cfg.h;
    let f0 = f.eval(x0).norm();
    let kappa = f.kappa;
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);
    traj.times.push(0.0);
    traj.states.push(x0.clone());
    let mut x = x0.clone();
    for k in 0..steps {
        let t = k as f64 * h;
        let next = match advance(set, f, &x, h, r, cfg.scheme) {
            Ok(p) => p,
            Err(e) => return (traj, Some(Error::StepFailed { step: k, source: Box::new(e) })),
        };
        let fx = f.eval(&x);
        let v = (&next - &x) / h;
        let t_next = (k + 1) as f64 * h;
        let speed_bound = fx.norm().min(f0 * (kappa * t).exp());
        let drift_bound = t_next * f0 * (kappa * t_next).exp();
        let diag = StepDiagnostics {
            orth_residual: v.dot(&(&fx - &v)).abs(),
            speed_slack: speed_bound + cfg.tol.bound_for(speed_bound) - v.norm(),
            drift_slack: drift_bound + cfg.tol.bound_for(drift_bound) - (&next - x0).norm(),
        };
        traj.velocities.push(v);
        traj.diagnostics.push(diag);
        traj.times.push(t_next);
        traj.states.push(next.clone());
        x = next;
    }
    (traj, None)
}

/// Rebuilds velocities and diagnostics for a state sequence produced by another scheme.
pub fn trajectory_from_states(states: Vec<Point>, h: f64, f: &VectorField, tol: &Tolerances) -> Trajectory {
    let mut traj = Trajectory::default();
    let Some(x0) = states.first().cloned() else { return traj };
    let f0 = f.eval(&x0).norm();
    for k in 0..states.len().saturating_sub(1) {
        let t = k as f64 * h;
        let t_next = (k + 1) as f64 * h;
        let fx = f.eval(&states[k]);
        let v = (&states[k + 1] - &states[k]) / h;
        let speed_bound = fx.norm().min(f0 * (f.kappa * t).exp());
        let drift_bound = t_next * f0 * (f.kappa * t_next).exp();
        traj.diagnostics.push(StepDiagnostics {
            orth_residual: v.dot(&(&fx - &v)).abs(),
            speed_slack: speed_bound + tol.bound_for(speed_bound) - v.norm(),
            drift_slack: drift_bound + tol.bound_for(drift_bound) - (&states[k + 1] - &x0).norm(),
        });
        traj.velocities.push(v);
    }
    traj.times = (0..states.len()).map(|k| k as f64 * h).collect();
    traj.states = states;
    traj
}

pub fn integrate(set: &ProxSet, f: &VectorField, x0: &Point, cfg: &IntegratorConfig) -> Result<Trajectory> {
    match integrate_partial(set, f, x0, cfg) {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}

/// Π_{T_C(x)}(f(x)), the right derivative of the solution through x.
pub fn right_derivative(set: &ProxSet, f: &VectorField, x: &Point) -> Result<Point> {
    Ok(set.cone_project(x, &f.eval(x), H_FD)?.tangent_part)
}

#[derive(Clone, Debug, Default)]
pub struct OrthogonalityReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Steps whose residual exceeds tol_orth·(1 + ‖f(x_k)‖²).
    pub flagged: Vec<usize>,
}

pub fn check_velocity_orthogonality(traj: &Trajectory, f: &VectorField, tol_orth: f64) -> OrthogonalityReport {
    let mut rep = OrthogonalityReport::default();
    for (k, v) in traj.velocities.iter().enumerate() {
        let fx = f.eval(&traj.states[k]);
        let rho = v.dot(&(&fx - v)).abs();
        if rho > tol_orth * (1.0 + fx.norm_squared()) {
            rep.flagged.push(k);
        }
        rep.max_residual = rep.max_residual.max(rho);
        rep.residuals.push(rho);
    }
    rep
}

#[derive(Clone, Debug)]
pub struct GrowthReport {
    pub min_speed_slack: f64,
    pub min_drift_slack: f64,
    pub speed_violations: Vec<usize>,
    pub drift_violations: Vec<usize>,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.speed_violations.is_empty() && self.drift_violations.is_empty()
    }
}

/// ‖v_k‖ ≤ min{‖f(x_k)‖, ‖f(x₀)‖e^{κt_k}} and ‖x_k − x₀‖ ≤ t_k‖f(x₀)‖e^{κt_k}, both up to tol.
pub fn check_growth_bounds(traj: &Trajectory, f: &VectorField, tol: &Tolerances) -> GrowthReport {
    let mut rep = GrowthReport {
        min_speed_slack: f64::INFINITY,
        min_drift_slack: f64::INFINITY,
        speed_violations: Vec::new(),
        drift_violations: Vec::new(),
    };
    let Some(x0) = traj.states.first() else { return rep };
    let f0 = f.eval(x0).norm();
    for (k, v) in traj.velocities.iter().enumerate() {
        let t = traj.times[k];
        let bound = f.eval(&traj.states[k]).norm().min(f0 * (f.kappa * t).exp());
        let slack = bound + tol.bound_for(bound) - v.norm();
        if slack < 0.0 {
            rep.speed_violations.push(k);
        }
        rep.min_speed_slack = rep.min_speed_slack.min(slack);
    }
    for (k, x) in traj.states.iter().enumerate() {
        let t = traj.times[k];
        let bound = t * f0 * (f.kappa * t).exp();
        let slack = bound + tol.bound_for(bound) - (x - x0).norm();
        if slack < 0.0 {
            rep.drift_violations.push(k);
        }
        rep.min_drift_slack = rep.min_drift_slack.min(slack);
    }
    rep
}

/// Exponent κt + (‖f(x₀)‖ + ‖f(y₀)‖)(e^{κt} − 1)/(κr), with its limits for κ = 0 and r = ∞.
pub fn contraction_exponent(kappa: f64, r: f64, fx0: f64, fy0: f64, t: f64) -> f64 {
    let growth = if kappa > 0.0 { (kappa * t).exp_m1() / kappa } else { t };
    let curvature = if r.is_infinite() { 0.0 } else { (fx0 + fy0) * growth / r };
    kappa * t + curvature
}

#[derive(Clone, Debug)]
pub struct ContractionReport {
    pub initial_gap: f64,
    /// Largest ‖x_k − y_k‖ / bound_k over t_k > 0.
    pub max_ratio: f64,
    pub min_slack: f64,
    pub violations: Vec<usize>,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_contraction(
    set: &ProxSet,
    f: &VectorField,
    x0: &Point,
    y0: &Point,
    cfg: &IntegratorConfig,
) -> Result<ContractionReport> {
    let a = integrate(set, f, x0, cfg)?;
    let b = integrate(set, f, y0, cfg)?;
    let r = set.prox_constant()?;
    let fx0 = f.eval(x0).norm();
    let fy0 = f.eval(y0).norm();
    let gap0 = (x0 - y0).norm();
    let mut rep = ContractionReport { initial_gap: gap0, max_ratio: 0.0, min_slack: f64::INFINITY, violations: vec![] };
    for k in 0..a.len() {
        let t = a.times[k];
        let bound = gap0 * contraction_exponent(f.kappa, r, fx0, fy0, t).exp();
        let gap = (&a.states[k] - &b.states[k]).norm();
        let slack = bound + cfg.tol.bound_for(bound) - gap;
        if slack < 0.0 {
            rep.violations.push(k);
        }
        if k > 0 && bound > 0.0 {
            rep.max_ratio = rep.max_ratio.max(gap / bound);
        }
        rep.min_slack = rep.min_slack.min(slack);
    }
    Ok(rep)
}

#[derive(Clone, Debug)]
pub struct SemigroupReport {
    pub discrepancy: f64,
    pub tolerance: f64,
}

impl SemigroupReport {
    pub fn passed(&self) -> bool {
        self.discrepancy <= self.tolerance
    }
}

fn lattice_steps(s: f64, h: f64) -> Result<usize> {
    let q = s / h;
    let k = q.round();
    if (q - k).abs() > 1e-6 || k < 0.0 {
        return Err(Error::InvalidArgument(format!("{s} is not a multiple of h = {h}")));
    }
    Ok(k as usize)
}

/// Compares x(t; x(s; x₀)) with x(t + s; x₀). When ⌈s/h⌉ + ⌈t/h⌉ = ⌈(s+t)/h⌉ both sides run the same
/// step sequence and the tolerance is round-off; otherwise it is twice the one-step drift bound.
pub fn check_semigroup(
    set: &ProxSet,
    f: &VectorField,
    x0: &Point,
    s: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<SemigroupReport> {
    if s < 0.0 || t < 0.0 {
        return Err(Error::InvalidArgument("restart times must be nonnegative".into()));
    }
    let run = |x: &Point, horizon: f64| -> Result<(Point, usize)> {
        if horizon == 0.0 {
            return Ok((x.clone(), 0));
        }
        let c = cfg.with_horizon(horizon.max(cfg.h));
        Ok((integrate(set, f, x, &c)?.last().clone(), c.steps()))
    };
    let (direct, k_direct) = run(x0, s + t)?;
    let (mid, ks) = run(x0, s)?;
    let (restarted, kt) = run(&mid, t)?;
    let tolerance = if ks + kt == k_direct {
        1e-12 * (1.0 + x0.norm())
    } else {
        2.0 * cfg.h * f.eval(x0).norm() * (f.kappa * (s + t)).exp()
    };
    Ok(SemigroupReport { discrepancy: (direct - restarted).norm(), tolerance })
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub h_list: Vec<f64>,
    /// Sup-norm differences between the runs at h_i and h_{i+1}, on the coarser grid.
    pub pairwise: Vec<f64>,
    /// log(pairwise_i / pairwise_{i+1}) / log(h_i / h_{i+1}).
    pub pairwise_orders: Vec<f64>,
    /// Sup-norm errors against the reference solution, when one is given.
    pub errors: Vec<f64>,
    pub error_orders: Vec<f64>,
}

impl ConvergenceReport {
    /// Orders against the reference when available, otherwise the pairwise ones.
    pub fn orders(&self) -> &[f64] {
        if self.error_orders.is_empty() {
            &self.pairwise_orders
        } else {
            &self.error_orders
        }
    }
}

pub fn sup_error(traj: &Trajectory, exact: &dyn Fn(f64) -> Point) -> f64 {
    traj.times.iter().zip(traj.states.iter()).map(|(t, x)| (x - exact(*t)).norm()).fold(0.0, f64::max)
}

fn orders(values: &[f64], h_list: &[f64]) -> Vec<f64> {
    values
        .windows(2)
        .zip(h_list.windows(2))
        .map(|(e, h)| if e[0] > 0.0 && e[1] > 0.0 { (e[0] / e[1]).ln() / (h[0] / h[1]).ln() } else { f64::NAN })
        .collect()
}

/// Runs the scheme for every h and estimates the order of convergence.
pub fn convergence_study(
    set: &ProxSet,
    f: &VectorField,
    x0: &Point,
    t_final: f64,
    h_list: &[f64],
    exact: Option<&dyn Fn(f64) -> Point>,
) -> Result<ConvergenceReport> {
    convergence_study_with(h_list, exact, |h| integrate(set, f, x0, &IntegratorConfig::new(h, t_final)))
}

/// Convergence study over an arbitrary scheme `run(h)`.
pub fn convergence_study_with(
    h_list: &[f64],
    exact: Option<&dyn Fn(f64) -> Point>,
    run: impl Fn(f64) -> Result<Trajectory>,
) -> Result<ConvergenceReport> {
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("h list must be decreasing".into()));
    }
    let runs: Vec<Trajectory> = h_list.iter().map(|&h| run(h)).collect::<Result<_>>()?;
    let mut pairwise = Vec::new();
    for (i, w) in runs.windows(2).enumerate() {
        let ratio = lattice_steps(h_list[i], h_list[i + 1])?;
        let gap = w[0]
            .states
            .iter()
            .enumerate()
            .filter_map(|(k, x)| w[1].states.get(k * ratio).map(|y| (x - y).norm()))
            .fold(0.0, f64::max);
        pairwise.push(gap);
    }
    let errors: Vec<f64> = match exact {
        Some(e) => runs.iter().map(|tr| sup_error(tr, e)).collect(),
        None => Vec::new(),
    };
    let pairwise_orders = orders(&pairwise, &h_list[..h_list.len().saturating_sub(1)]);
    let error_orders = if errors.is_empty() { Vec::new() } else { orders(&errors, h_list) };
    Ok(ConvergenceReport { h_list: h_list.to_vec(), pairwise, pairwise_orders, errors, error_orders })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn pt(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    fn unit_ball() -> ProxSet {
        ProxSet::ball(pt(&[0.0, 0.0]), 1.0).unwrap()
    }

    /// Piecewise-linear solution of the orthant ramp from (0.5, 2).
    fn ramp_exact(t: f64) -> Point {
        pt(&[(0.5 - t).max(0.0), (2.0 - t).max(0.0)])
    }

    #[test]
    fn single_steps() {
        let x = catching_up_step(&unit_ball(), &VectorField::rotation(1.0), &pt(&[1.0, 0.0]), 0.01).unwrap();
        let expected = pt(&[1.0, 0.01]) / pt(&[1.0, 0.01]).norm();
        assert!((x - expected).norm() < 1e-15);
        let x0 = pt(&[0.3, -0.2]);
        assert_eq!(catching_up_step(&unit_ball(), &VectorField::zero(2), &x0, 0.5).unwrap(), x0);
        let clamp = catching_up_step(&ProxSet::Orthant(1), &VectorField::constant(pt(&[-1.0])), &pt(&[0.0]), 0.1);
        assert_eq!(clamp.unwrap(), pt(&[0.0]));
    }

    #[test]
    fn step_restriction_on_nonconvex_sets() {
        let comp = ProxSet::ball_complement(pt(&[0.0, 0.0]), 1.0).unwrap();
        let push = VectorField::constant(pt(&[-10.0, 0.0]));
        let err = catching_up_step(&comp, &push, &pt(&[1.0, 0.0]), 0.06).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn rotation_returns_to_start() {
        let cfg = IntegratorConfig::new(1e-3, TAU);
        let tr = integrate(&unit_ball(), &VectorField::rotation(1.0), &pt(&[1.0, 0.0]), &cfg).unwrap();
        assert_eq!(tr.len(), cfg.steps() + 1);
        assert_eq!(tr.velocities.len(), tr.len() - 1);
        assert!((tr.last() - pt(&[1.0, 0.0])).norm() < 5e-3);
    }

    #[test]
    fn zero_field_is_constant() {
        let x0 = pt(&[0.2, 0.4]);
        let tr = integrate(&unit_ball(), &VectorField::zero(2), &x0, &IntegratorConfig::new(0.1, 1.0)).unwrap();
        assert!(tr.states.iter().all(|x| *x == x0));
    }

    #[test]
    fn orthant_ramp_reaches_corner() {
        let f = VectorField::constant(pt(&[-1.0, -1.0]));
        let tr = integrate(&ProxSet::Orthant(2), &f, &pt(&[0.5, 2.0]), &IntegratorConfig::new(1e-3, 3.0)).unwrap();
        assert!(tr.last().norm() < 2e-3);
        assert!(sup_error(&tr, &ramp_exact) < 2e-3);
        // Hand-computed speeds: √2 before t = 0.5, 1 until t = 2, then 0.
        let speed = |t: f64| tr.velocities[(t / 1e-3) as usize].norm();
        assert!((speed(0.25) - 2f64.sqrt()).abs() < 1e-9);
        assert!((speed(1.0) - 1.0).abs() < 1e-9);
        assert!(speed(2.5) < 1e-12);
        let g = check_growth_bounds(&tr, &f, &Tolerances::default());
        assert!(g.passed());
    }

    #[test]
    fn right_derivatives() {
        let d = right_derivative(&unit_ball(), &VectorField::rotation(1.0), &pt(&[1.0, 0.0])).unwrap();
        assert!((d - pt(&[0.0, 1.0])).norm() < 1e-15);
        let f = VectorField::constant(pt(&[-1.0, 1.0]));
        let d = right_derivative(&ProxSet::Orthant(2), &f, &pt(&[0.0, 1.0])).unwrap();
        // Brute force over the tangent cone {w₁ ≥ 0} at 1e-3 resolution.
        let mut best = (pt(&[0.0, 0.0]), f64::INFINITY);
        for i in 0..=2000 {
            for j in 0..=2000 {
                let w = pt(&[i as f64 * 1e-3, -1.0 + j as f64 * 1e-3]);
                let dist = (&w - f.eval(&w)).norm();
                if dist < best.1 {
                    best = (w, dist);
                }
            }
        }
        assert!((&d - &best.0).norm() < 1e-3);
        let interior = right_derivative(&unit_ball(), &VectorField::rotation(1.0), &pt(&[0.2, 0.1])).unwrap();
        assert_eq!(interior, pt(&[-0.1, 0.2]));
    }

    #[test]
    fn orthogonality_residuals() {
        let rot = VectorField::rotation(1.0);
        let tr = integrate(&unit_ball(), &rot, &pt(&[1.0, 0.0]), &IntegratorConfig::new(1e-3, TAU)).unwrap();
        assert!(check_velocity_orthogonality(&tr, &rot, TOL_ORTH).max_residual <= 1e-2);
        let big = ProxSet::ball(pt(&[0.0, 0.0]), 10.0).unwrap();
        let tr = integrate(&big, &rot, &pt(&[1.0, 0.0]), &IntegratorConfig::new(1e-3, TAU)).unwrap();
        assert!(check_velocity_orthogonality(&tr, &rot, TOL_ORTH).max_residual <= 1e-6);
        let zero = VectorField::zero(2);
        let tr = integrate(&unit_ball(), &zero, &pt(&[0.5, 0.0]), &IntegratorConfig::new(1e-2, 1.0)).unwrap();
        assert_eq!(check_velocity_orthogonality(&tr, &zero, TOL_ORTH).max_residual, 0.0);
    }

    #[test]
    fn growth_bounds_on_rotation() {
        let rot = VectorField::rotation(1.0);
        let tr = integrate(&unit_ball(), &rot, &pt(&[1.0, 0.0]), &IntegratorConfig::new(1e-3, TAU)).unwrap();
        let g = check_growth_bounds(&tr, &rot, &Tolerances::default());
        assert!(g.passed(), "{g:?}");
        assert!(g.min_speed_slack >= 0.0 && g.min_drift_slack >= 0.0);
    }

    #[test]
    fn contraction_examples() {
        let rot = VectorField::rotation(1.0);
        let cfg = IntegratorConfig::new(1e-3, 2.0);
        let rep = check_contraction(&unit_ball(), &rot, &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0]), &cfg).unwrap();
        assert!(rep.passed());
        let zero = VectorField::zero(2);
        let rep = check_contraction(&unit_ball(), &zero, &pt(&[0.5, 0.0]), &pt(&[0.0, 0.5]), &cfg).unwrap();
        assert!(rep.passed() && (rep.max_ratio - 1.0).abs() < 1e-15);

        let comp = ProxSet::ball_complement(pt(&[0.0, 0.0]), 1.0).unwrap();
        let radial = VectorField::radial(2.0);
        let fine = IntegratorConfig::new(1e-4, 1.0);
        let a = pt(&[1.0, 0.0]);
        let b = pt(&[(0.05f64).cos(), (0.05f64).sin()]);
        let rep = check_contraction(&comp, &radial, &a, &b, &fine).unwrap();
        assert!(rep.passed() && rep.max_ratio < 1.0, "{rep:?}");
    }

    #[test]
    fn contraction_exponent_limits() {
        let e = contraction_exponent(0.0, 2.0, 1.0, 1.0, 3.0);
        assert!((e - 3.0).abs() < 1e-15);
        assert_eq!(contraction_exponent(2.0, f64::INFINITY, 1.0, 1.0, 0.5), 1.0);
        let small = contraction_exponent(1e-9, 2.0, 1.0, 1.0, 3.0);
        assert!((small - 3.0).abs() < 1e-6);
    }

    #[test]
    fn semigroup_on_the_lattice() {
        let rot = VectorField::rotation(1.0);
        let cfg = IntegratorConfig::new(1e-3, 1.0);
        let rep = check_semigroup(&unit_ball(), &rot, &pt(&[1.0, 0.0]), FRAC_PI_2, FRAC_PI_2, &cfg).unwrap();
        assert!(rep.discrepancy <= 1e-6 && rep.passed());
        let ramp = VectorField::constant(pt(&[-1.0, -1.0]));
        let rep = check_semigroup(&ProxSet::Orthant(2), &ramp, &pt(&[0.5, 2.0]), 0.25, 1.0, &cfg).unwrap();
        assert!(rep.discrepancy <= 1e-12);
        let zero = VectorField::zero(2);
        let rep = check_semigroup(&unit_ball(), &zero, &pt(&[0.1, 0.1]), 0.5, 0.5, &cfg).unwrap();
        assert_eq!(rep.discrepancy, 0.0);
    }

    #[test]
    fn convergence_orders() {
        let hs = [1e-2, 5e-3, 2.5e-3];
        let exact = |t: f64| pt(&[t.cos(), t.sin()]);
        let rep =
            convergence_study(&unit_ball(), &VectorField::rotation(1.0), &pt(&[1.0, 0.0]), 2.0, &hs, Some(&exact))
                .unwrap();
        // Each projected Euler step on the circle is a rotation by atan(h), so the error is
        // 2 sin(k(h − atan h)/2) = O(h²) rather than first order.
        for (i, &h) in hs.iter().enumerate() {
            let k = (2.0 / h).round();
            let predicted = 2.0 * (k * (h - h.atan()) / 2.0).sin();
            assert!((rep.errors[i] - predicted).abs() < 1e-12 * (1.0 + k), "{rep:?}");
        }
        assert!(rep.orders().iter().all(|p| *p >= 0.8), "{rep:?}");
        let decay = VectorField::linear(-DMatrix::identity(2, 2));
        let x0 = pt(&[0.5, 0.5]);
        let exp = move |t: f64| pt(&[0.5, 0.5]) * (-t).exp();
        let rep = convergence_study(&unit_ball(), &decay, &x0, 2.0, &hs, Some(&exp)).unwrap();
        assert!(rep.orders().iter().all(|p| *p >= 0.95), "{rep:?}");
        let ramp = VectorField::constant(pt(&[-1.0, -1.0]));
        let hs = [1.6e-2, 8e-3, 4e-3];
        let rep = convergence_study(&ProxSet::Orthant(2), &ramp, &pt(&[0.5, 2.01]), 3.0, &hs, None).unwrap();
        assert!(rep.pairwise.iter().all(|g| *g < 5e-2), "{rep:?}");
    }

    #[test]
    fn kappa_validation() {
        let samples: Vec<Point> = (0..20).map(|i| pt(&[i as f64 * 0.1, 1.0 - i as f64 * 0.05])).collect();
        assert!(VectorField::rotation(1.0).validate_kappa(&samples, 1e-12).is_ok());
        assert!(VectorField::rotation(2.0).with_kappa(1.0).validate_kappa(&samples, 1e-12).is_err());
    }

    #[test]
    fn csv_layout() {
        let tr = integrate(&unit_ball(), &VectorField::rotation(1.0), &pt(&[1.0, 0.0]), &IntegratorConfig::new(0.5, 1.0))
            .unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x_0,x_1,v_0,v_1,orth_residual,speed_slack,drift_slack");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 8);
        assert_eq!(row[1], "1.0000000000000000e0");
        assert_eq!(csv.lines().count(), tr.len() + 1);
    }
}
