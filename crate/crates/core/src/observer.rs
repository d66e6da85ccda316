//! Set-valued Lur'e systems, their P^{1/2} change of coordinates, Luenberger-like observers on
//! prox-regular sets, and complementarity systems {Hx + c ≥ 0}.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Point, ProxSet, H_FD, TOL_BOUNDARY};
use crate::linalg;
use crate::sampling;
use crate::solver::{self, IntegratorConfig, Trajectory, VectorField};

/// Eigenvalue floor for positive definiteness.
pub const TOL_PD: f64 = 1e-10;
pub const TOL_PSD: f64 = 1e-10;
pub const TOL_COUPLING: f64 = 1e-10;
/// Relative slack on the observer error bound.
pub const TOL_OBS: f64 = 1e-3;
/// Safety factor on the estimated state and field bounds.
pub const SAFETY: f64 = 1.1;

/// ẋ = Ax + Bu, u ∈ −N_S(Dx).
#[derive(Clone, Debug)]
pub struct LureSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub s: ProxSet,
    pub x0: Point,
}

impl LureSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, d: DMatrix<f64>, s: ProxSet, x0: Point) -> Result<Self> {
        let n = a.nrows();
        let l = s.dim();
        for (got, expected) in [(a.ncols(), n), (b.nrows(), n), (b.ncols(), l), (d.nrows(), l), (d.ncols(), n), (x0.len(), n)] {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        let sys = LureSystem { a, b, d, s, x0 };
        if !sys.s.contains(&(&sys.d * &sys.x0), TOL_BOUNDARY) {
            return Err(Error::HypothesisViolation("D x0 is not in S".into()));
        }
        let residual = sys.range_residual(sampling::DEFAULT_SEED);
        if residual > 1e-9 {
            return Err(Error::HypothesisViolation(format!(
                "S is not contained in the range of D (least-squares residual {residual:.3e})"
            )));
        }
        Ok(sys)
    }

    /// Largest relative distance from sampled points of S to the column space of D.
    pub fn range_residual(&self, seed: u64) -> f64 {
        let y0 = &self.d * &self.x0;
        let half = 2.0 * (1.0 + y0.norm());
        let lo = y0.add_scalar(-half);
        let hi = y0.add_scalar(half);
        let mut rng = sampling::rng(seed);
        let svd = self.d.clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let top = svd.singular_values.max();
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > linalg::RANK_TOL * top).collect();
        let basis = u.select_columns(keep.iter());
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let Ok(y) = self.s.project(&sampling::uniform_box(&lo, &hi, &mut rng)) else { continue };
            let off = &y - &basis * (basis.transpose() * &y);
            worst = worst.max(off.norm() / (1.0 + y.norm()));
        }
        worst
    }
}

#[derive(Clone, Debug)]
pub struct PassivityReport {
    pub min_eig_p: f64,
    /// max |PB − Dᵀ|.
    pub coupling_residual: f64,
    /// Largest eigenvalue of AᵀP + PA + δP.
    pub dissipation: f64,
}

impl PassivityReport {
    pub fn pd_ok(&self) -> bool {
        self.min_eig_p >= TOL_PD
    }
    pub fn coupling_ok(&self) -> bool {
        self.coupling_residual <= TOL_COUPLING
    }
    pub fn dissipation_ok(&self) -> bool {
        self.dissipation <= TOL_PSD
    }
    pub fn passed(&self) -> bool {
        self.pd_ok() && self.coupling_ok() && self.dissipation_ok()
    }
}

pub fn verify_passivity(p: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, d: &DMatrix<f64>, delta: f64) -> PassivityReport {
    let min_eig_p = linalg::min_eigenvalue(p);
    let coupling_residual = linalg::max_abs(&(p * b - d.transpose()));
    let dissipation = linalg::max_eigenvalue(&(a.transpose() * p + p * a + p * delta));
    PassivityReport { min_eig_p, coupling_residual, dissipation }
}

/// z = Rx with R = P^{1/2}: ż ∈ RAR⁻¹z − N_{S′}(z), S′ = (DR⁻¹)⁻¹(S).
#[derive(Clone, Debug)]
pub struct TransformedSystem {
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub field: VectorField,
    pub set_prime: ProxSet,
    pub r_prime: f64,
}

impl TransformedSystem {
    pub fn backmap(&self, z: &Point) -> Point {
        &self.r_inv * z
    }

    pub fn forward(&self, x: &Point) -> Point {
        &self.r * x
    }
}

fn sqrt_and_inverse(p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let min_eig = linalg::min_eigenvalue(p);
    let r = linalg::sqrt_spd(p, TOL_PD).ok_or(Error::NotPD { min_eig })?;
    let r_inv = r.clone().try_inverse().ok_or(Error::NotPD { min_eig })?;
    Ok((r, r_inv))
}

pub fn transform(system: &LureSystem, p: &DMatrix<f64>) -> Result<TransformedSystem> {
    let (r, r_inv) = sqrt_and_inverse(p)?;
    let f = &r * &system.a * &r_inv;
    let set_prime = ProxSet::preimage(&system.d * &r_inv, system.s.clone())?;
    let r_prime = set_prime.prox_constant()?;
    Ok(TransformedSystem { r, r_inv, field: VectorField::linear(f).with_label("transformed"), set_prime, r_prime })
}

/// ρ = δ r δ⁺_{DR⁻¹} / (2‖R⁻¹‖‖DR⁻¹‖‖RAR⁻¹‖).
pub fn stability_radius(system: &LureSystem, p: &DMatrix<f64>, delta: f64) -> Result<f64> {
    let (r, r_inv) = sqrt_and_inverse(p)?;
    let dr = &system.d * &r_inv;
    let (dr_norm, least) = linalg::extreme_singular_values(&dr).ok_or(Error::SingularMap)?;
    let f_norm = linalg::spectral_norm(&(&r * &system.a * &r_inv));
    let rs = system.s.prox_constant()?;
    let denom = 2.0 * linalg::spectral_norm(&r_inv) * dr_norm * f_norm;
    if rs.is_infinite() || denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(delta * rs * least / denom)
}

#[derive(Clone, Debug)]
pub struct LureRun {
    /// Trajectory in the original coordinates.
    pub trajectory: Trajectory,
    pub transformed: Trajectory,
    pub rho: f64,
    /// ‖R⁻¹‖‖R‖, the constant in front of the decay bound.
    pub condition: f64,
    /// Largest ‖x_k‖ / (‖R⁻¹‖‖R‖‖x₀‖e^{−δt_k/4}).
    pub max_ratio: f64,
}

impl LureRun {
    pub fn decay_ok(&self, tol: f64) -> bool {
        self.max_ratio <= 1.0 + tol
    }
}

/// Integrates the transformed system from Rx₀ and maps the result back.
///
/// The transformed field satisfies ⟨RAR⁻¹z, z⟩ + (δ/2)‖z‖² ≤ 0, so the guaranteed rate on ‖z‖ is δ/4.
pub fn simulate_lure(system: &LureSystem, p: &DMatrix<f64>, delta: f64, cfg: &IntegratorConfig) -> Result<LureRun> {
    let rho = stability_radius(system, p, delta)?;
    let norm0 = system.x0.norm();
    if norm0 >= rho {
        return Err(Error::RadiusViolation { norm: norm0, radius: rho });
    }
    let ts = transform(system, p)?;
    let z0 = ts.forward(&system.x0);
    let zt = solver::integrate(&ts.set_prime, &ts.field, &z0, cfg)?;
    let mut xt = zt.clone();
    xt.states = zt.states.iter().map(|z| ts.backmap(z)).collect();
    xt.velocities = zt.velocities.iter().map(|v| ts.backmap(v)).collect();
    let condition = linalg::spectral_norm(&ts.r_inv) * linalg::spectral_norm(&ts.r);
    let mut max_ratio: f64 = 0.0;
    for (t, x) in xt.times.iter().zip(xt.states.iter()) {
        let bound = condition * norm0 * (-0.25 * delta * t).exp();
        if bound > 0.0 {
            max_ratio = max_ratio.max(x.norm() / bound);
        } else if x.norm() > 0.0 {
            max_ratio = f64::INFINITY;
        }
    }
    Ok(LureRun { trajectory: xt, transformed: zt, rho, condition, max_ratio })
}

#[derive(Clone, Debug)]
pub struct LureResidualReport {
    /// max_k ‖Bu_k − (ẋ_k − Ax_k)‖ with u_k the least-squares input.
    pub span_residual: f64,
    /// max_k ‖Π_{T_S(Dx_{k+1})}(−u_k)‖ relative to 1 + ‖u_k‖.
    pub cone_residual: f64,
    pub inputs: Vec<Point>,
}

impl LureResidualReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.span_residual <= tol && self.cone_residual <= tol
    }
}

/// Recovers the inputs of a back-mapped trajectory and checks ẋ − Ax ∈ B(−N_S(Dx)).
pub fn lure_residuals(system: &LureSystem, traj: &Trajectory) -> Result<LureResidualReport> {
    let b_pinv = system.b.clone().pseudo_inverse(linalg::RANK_TOL).map_err(|e| Error::InvalidArgument(e.into()))?;
    let mut span_residual: f64 = 0.0;
    let mut cone_residual: f64 = 0.0;
    let mut inputs = Vec::with_capacity(traj.velocities.len());
    for k in 0..traj.velocities.len() {
        let rhs = &traj.velocities[k] - &system.a * &traj.states[k];
        let u = &b_pinv * &rhs;
        span_residual = span_residual.max((&system.b * &u - &rhs).norm());
        let y = &system.d * &traj.states[k + 1];
        let split = system.s.cone_project(&y, &(-&u), H_FD)?;
        cone_residual = cone_residual.max(split.tangent_part.norm() / (1.0 + u.norm()));
        inputs.push(u);
    }
    Ok(LureResidualReport { span_residual, cone_residual, inputs })
}

/// A map with a known Lipschitz constant.
#[derive(Clone)]
pub struct LipschitzMap {
    eval: Arc<dyn Fn(&Point) -> Point + Send + Sync>,
    pub lipschitz: f64,
    pub input_dim: usize,
    pub output_dim: usize,
    pub matrix: Option<DMatrix<f64>>,
}

impl std::fmt::Debug for LipschitzMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LipschitzMap")
            .field("lipschitz", &self.lipschitz)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish()
    }
}

impl LipschitzMap {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        lipschitz: f64,
        f: impl Fn(&Point) -> Point + Send + Sync + 'static,
    ) -> Self {
        LipschitzMap { eval: Arc::new(f), lipschitz, input_dim, output_dim, matrix: None }
    }

    pub fn linear(m: DMatrix<f64>) -> Self {
        let lip = linalg::spectral_norm(&m);
        let (rows, cols) = m.shape();
        let mm = m.clone();
        LipschitzMap { eval: Arc::new(move |x| &mm * x), lipschitz: lip, input_dim: cols, output_dim: rows, matrix: Some(m) }
    }

    pub fn identity(n: usize) -> Self {
        LipschitzMap::linear(DMatrix::identity(n, n))
    }

    pub fn zero(input_dim: usize, output_dim: usize) -> Self {
        LipschitzMap::linear(DMatrix::zeros(output_dim, input_dim))
    }

    pub fn eval(&self, x: &Point) -> Point {
        (self.eval)(x)
    }
}

/// f̃(z, x) = (f(z) − L(G(z)) + L(G(x)), f(x)) on R^{2n}.
pub fn build_coupled_field(f: &VectorField, n: usize, l: &LipschitzMap, g: &LipschitzMap) -> Result<VectorField> {
    let fdim = f.eval(&Point::zeros(n)).len();
    for (got, expected) in [(fdim, n), (g.input_dim, n), (l.input_dim, g.output_dim), (l.output_dim, n)] {
        if got != expected {
            return Err(Error::DimensionMismatch { expected, got });
        }
    }
    let kappa = f.kappa + 2.0 * l.lipschitz * g.lipschitz;
    let (f, l, g) = (f.clone(), l.clone(), g.clone());
    Ok(VectorField::new("coupled", kappa, move |w: &Point| {
        let z = w.rows(0, n).into_owned();
        let x = w.rows(n, n).into_owned();
        let first = f.eval(&z) - l.eval(&g.eval(&z)) + l.eval(&g.eval(&x));
        let second = f.eval(&x);
        Point::from_iterator(2 * n, first.iter().chain(second.iter()).copied())
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverSetup {
    pub delta: f64,
    pub epsilon: f64,
    pub eta: f64,
    /// Bound on the plant state.
    pub m: f64,
    /// Bound on ‖f‖ over B(0, m).
    pub big_m: f64,
    pub r: f64,
    pub beta: f64,
}

impl ObserverSetup {
    pub fn new(delta: f64, epsilon: f64, eta: f64, m: f64, big_m: f64, r: f64) -> Self {
        let beta = if r.is_infinite() { delta } else { delta - (big_m + epsilon) / r };
        ObserverSetup { delta, epsilon, eta, m, big_m, r, beta }
    }

    /// m and M from a plant simulation and field samples on B(0, m), both scaled by the safety factor.
    #[allow(clippy::too_many_arguments)]
    pub fn estimate(
        set: &ProxSet,
        f: &VectorField,
        x0: &Point,
        cfg: &IntegratorConfig,
        delta: f64,
        epsilon: f64,
        eta: f64,
        seed: u64,
    ) -> Result<Self> {
        let plant = solver::integrate(set, f, x0, cfg)?;
        let m = SAFETY * plant.states.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let big_m = SAFETY * field_sup(f, x0.len(), m, seed);
        Ok(ObserverSetup::new(delta, epsilon, eta, m, big_m, set.prox_constant()?))
    }
}

/// Sampled sup of ‖f‖ over B(0, radius).
pub fn field_sup(f: &VectorField, n: usize, radius: f64, seed: u64) -> f64 {
    let mut rng = sampling::rng(seed);
    let origin = Point::zeros(n);
    let mut sup = f.eval(&origin).norm();
    for _ in 0..2000 {
        sup = sup.max(f.eval(&sampling::in_ball(&origin, radius, &mut rng)).norm());
        sup = sup.max(f.eval(&(sampling::unit_vector(n, &mut rng) * radius)).norm());
    }
    sup
}

#[derive(Clone, Debug)]
pub struct HypothesisCheck {
    pub name: &'static str,
    /// Nonnegative when the hypothesis holds.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct ObserverRun {
    pub trajectory: Trajectory,
    pub errors: Vec<f64>,
    pub bounds: Vec<f64>,
    pub setup: ObserverSetup,
    pub fitted_rate: Option<f64>,
    pub hypotheses: Vec<HypothesisCheck>,
    /// Largest e_k / (e₀e^{−βt_k/2}).
    pub max_ratio: f64,
}

impl ObserverRun {
    pub fn bound_ok(&self) -> bool {
        self.max_ratio <= 1.0 + TOL_OBS
    }

    pub fn rate_ok(&self) -> bool {
        self.fitted_rate.is_none_or(|rate| rate >= self.setup.beta / 2.0 - 0.05)
    }

    /// Columns t, e, bound, x..., xhat...
    pub fn to_csv(&self) -> String {
        let n = self.trajectory.dim() / 2;
        let mut out = String::from("t,e,bound");
        for i in 0..n {
            let _ = write!(out, ",x{}", i + 1);
        }
        for i in 0..n {
            let _ = write!(out, ",xhat{}", i + 1);
        }
        out.push('\n');
        for k in 0..self.trajectory.len() {
            let w = &self.trajectory.states[k];
            let _ = write!(
                out,
                "{},{},{}",
                solver::fmt17(self.trajectory.times[k]),
                solver::fmt17(self.errors[k]),
                solver::fmt17(self.bounds[k])
            );
            for v in w.rows(n, n).iter().chain(w.rows(0, n).iter()) {
                let _ = write!(out, ",{}", solver::fmt17(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Least-squares slope of log e_k, skipping the first 5% of steps and errors at or below 1e-10.
pub fn fit_rate(times: &[f64], errors: &[f64]) -> Option<f64> {
    let skip = (times.len() as f64 * 0.05).ceil() as usize;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(errors.iter())
        .skip(skip)
        .filter(|(_, e)| **e > 1e-10)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let me = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - me)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

const HYPOTHESIS_PAIRS: usize = 2000;

/// Validates the observer hypotheses on samples; the first failure becomes an error.
#[allow(clippy::too_many_arguments)]
pub fn check_observer_hypotheses(
    set: &ProxSet,
    f: &VectorField,
    l: &LipschitzMap,
    g: &LipschitzMap,
    x0: &Point,
    z0: &Point,
    setup: &ObserverSetup,
    seed: u64,
) -> Result<Vec<HypothesisCheck>> {
    let n = x0.len();
    let mut checks = Vec::new();
    let fail = |name: &str, margin: f64| Err(Error::HypothesisViolation(format!("{name} fails (margin {margin:.3e})")));
    let eps_room = if setup.r.is_infinite() { f64::INFINITY } else { setup.delta * setup.r - setup.big_m - setup.epsilon };
    checks.push(HypothesisCheck { name: "epsilon below delta r - M", margin: eps_room });
    if !(eps_room > 0.0) {
        return fail("epsilon below delta r - M", eps_room);
    }
    checks.push(HypothesisCheck { name: "beta positive", margin: setup.beta });
    if !(setup.beta > 0.0) {
        return fail("beta positive", setup.beta);
    }
    let eta_room = if f.kappa == 0.0 { f64::INFINITY } else { setup.epsilon / (6.0 * f.kappa) - setup.eta };
    checks.push(HypothesisCheck { name: "eta guard", margin: eta_room });
    if eta_room < -1e-12 * setup.eta {
        return fail("eta guard", eta_room);
    }
    let start_room = setup.eta - (z0 - x0).norm();
    checks.push(HypothesisCheck { name: "observer start within eta", margin: start_room });
    if start_room < 0.0 || !set.contains(z0, TOL_BOUNDARY) {
        return fail("observer start within eta", start_room);
    }

    let lg = |x: &Point| l.eval(&g.eval(x));
    let radius = setup.m + 3.0 * setup.eta;
    let origin = Point::zeros(n);
    let mut rng = sampling::rng(seed);
    // Gain increments over pairs at distance at most 3η, bounded through Lipschitz constants first.
    let slack = 1e-12 * setup.epsilon;
    let mut gain_room = setup.epsilon - 3.0 * setup.eta * l.lipschitz * g.lipschitz;
    if gain_room < -slack {
        gain_room = f64::INFINITY;
        for _ in 0..HYPOTHESIS_PAIRS {
            let x = sampling::in_ball(&origin, radius, &mut rng);
            let y = &x + sampling::unit_vector(n, &mut rng) * (3.0 * setup.eta);
            gain_room = gain_room.min(setup.epsilon - (lg(&x) - lg(&y)).norm());
        }
    }
    checks.push(HypothesisCheck { name: "gain increment bound", margin: gain_room });
    if gain_room < -slack {
        return fail("gain increment bound", gain_room);
    }
    let mut mono_room = f64::INFINITY;
    for _ in 0..HYPOTHESIS_PAIRS {
        let x = sampling::in_ball(&origin, radius, &mut rng);
        let y = sampling::in_ball(&origin, radius, &mut rng);
        let d = &x - &y;
        let lhs = d.dot(&((f.eval(&x) - lg(&x)) - (f.eval(&y) - lg(&y))));
        mono_room = mono_room.min(-(lhs + setup.delta * d.norm_squared()) / (1.0 + d.norm_squared()));
    }
    checks.push(HypothesisCheck { name: "strong monotonicity", margin: mono_room });
    if mono_room < -1e-12 {
        return fail("strong monotonicity", mono_room);
    }
    Ok(checks)
}

/// Integrates plant and observer as one inclusion on C × C and measures the estimation error.
#[allow(clippy::too_many_arguments)]
pub fn observer_run(
    set: &ProxSet,
    f: &VectorField,
    l: &LipschitzMap,
    g: &LipschitzMap,
    x0: &Point,
    z0: &Point,
    setup: &ObserverSetup,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<ObserverRun> {
    let n = x0.len();
    let mut hypotheses = check_observer_hypotheses(set, f, l, g, x0, z0, setup, seed)?;
    let coupled = build_coupled_field(f, n, l, g)?;
    let product = ProxSet::product(set.clone(), set.clone())?;
    let w0 = Point::from_iterator(2 * n, z0.iter().chain(x0.iter()).copied());
    let traj = solver::integrate(&product, &coupled, &w0, cfg)?;
    let plant_max = traj.states.iter().map(|w| w.rows(n, n).norm()).fold(0.0, f64::max);
    hypotheses.push(HypothesisCheck { name: "plant bound", margin: setup.m - plant_max });
    if plant_max > setup.m {
        return Err(Error::HypothesisViolation(format!("plant bound fails: {plant_max:.6} > m = {:.6}", setup.m)));
    }
    let errors: Vec<f64> = traj.states.iter().map(|w| (w.rows(0, n) - w.rows(n, n)).norm()).collect();
    let e0 = errors[0];
    let bounds: Vec<f64> = traj.times.iter().map(|t| e0 * (-0.5 * setup.beta * t).exp()).collect();
    let mut max_ratio: f64 = 0.0;
    for (e, b) in errors.iter().zip(bounds.iter()) {
        if *b > 0.0 {
            max_ratio = max_ratio.max(e / b);
        } else if *e > 0.0 {
            max_ratio = f64::INFINITY;
        }
    }
    let fitted_rate = fit_rate(&traj.times, &errors);
    Ok(ObserverRun { trajectory: traj, errors, bounds, setup: setup.clone(), fitted_rate, hypotheses, max_ratio })
}

#[derive(Clone, Debug)]
pub struct GainReport {
    /// Largest eigenvalue of ½(A + Aᵀ) − ρGᵀG + δI.
    pub max_eig: f64,
    pub eta: f64,
}

impl GainReport {
    pub fn passed(&self) -> bool {
        self.max_eig <= TOL_PSD
    }
}

/// L = ρGᵀ, with η = min{ε/(6‖A‖), ε/(3‖LG‖)}.
pub fn design_linear_gain(a: &DMatrix<f64>, g: &DMatrix<f64>, rho: f64, delta: f64, epsilon: f64) -> (DMatrix<f64>, GainReport) {
    let l = g.transpose() * rho;
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5 - g.transpose() * g * rho + DMatrix::identity(n, n) * delta;
    let max_eig = linalg::max_eigenvalue(&sym);
    let guard = |norm: f64, k: f64| if norm == 0.0 { f64::INFINITY } else { epsilon / (k * norm) };
    let eta = guard(linalg::spectral_norm(a), 6.0).min(guard(linalg::spectral_norm(&(&l * g)), 3.0));
    (l, GainReport { max_eig, eta })
}

/// ẋ = f(x) + Hᵀλ, 0 ≤ λ ⟂ g(x) = Hx + c ≥ 0.
#[derive(Clone, Debug)]
pub struct Ndcs {
    pub set: ProxSet,
    pub h: DMatrix<f64>,
    pub c: Point,
}

pub fn ndcs_build(h: DMatrix<f64>, c: Point) -> Result<Ndcs> {
    let rank = linalg::rank(&h);
    if rank < h.nrows() {
        return Err(Error::QualificationFailure { rank, rows: h.nrows() });
    }
    let set = ProxSet::polyhedral(h.clone(), c.clone())?;
    Ok(Ndcs { set, h, c })
}

#[derive(Clone, Debug)]
pub struct MultiplierReport {
    /// λ_k, paired with g(x_{k+1}).
    pub multipliers: Vec<Point>,
    /// Per step: max(−min λ, −min g, |⟨λ, g⟩|).
    pub residuals: Vec<f64>,
    /// Largest ‖Hᵀλ_k − (v_k − f(x_k))‖.
    pub fit_residual: f64,
    /// First time a constraint is active.
    pub activation_time: Option<f64>,
}

impl MultiplierReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

impl Ndcs {
    pub fn g(&self, x: &Point) -> Point {
        &self.h * x + &self.c
    }

    /// Solves Hᵀλ_k = v_k − f(x_k) by least squares along a catching-up trajectory.
    pub fn multipliers(&self, traj: &Trajectory, f: &VectorField) -> Result<MultiplierReport> {
        let gram = &self.h * self.h.transpose();
        let chol = gram.cholesky().ok_or(Error::QualificationFailure { rank: linalg::rank(&self.h), rows: self.h.nrows() })?;
        let mut multipliers = Vec::with_capacity(traj.velocities.len());
        let mut residuals = Vec::with_capacity(traj.velocities.len());
        let mut fit_residual: f64 = 0.0;
        for k in 0..traj.velocities.len() {
            let rhs = &traj.velocities[k] - f.eval(&traj.states[k]);
            let lambda = chol.solve(&(&self.h * &rhs));
            fit_residual = fit_residual.max((self.h.transpose() * &lambda - &rhs).norm());
            let g = self.g(&traj.states[k + 1]);
            let res = (-lambda.min()).max(-g.min()).max(lambda.dot(&g).abs()).max(0.0);
            residuals.push(res);
            multipliers.push(lambda);
        }
        let activation_time = traj
            .times
            .iter()
            .zip(traj.states.iter())
            .find(|(_, x)| self.g(x).min() <= TOL_BOUNDARY)
            .map(|(t, _)| *t);
        Ok(MultiplierReport { multipliers, residuals, fit_residual, activation_time })
    }
}
