//! Sampled certification of a-Lyapunov pairs and invariant sets, and trajectory decay checks.
//!
//! Margins are ⟨ξ, Π_{T_C(x)} f(x)⟩ + aV(x) + W(x) with ξ the gradient of the smooth part of V.
//! When V also carries an indicator, proximal normals of its domain only lower the margin on
//! tangent directions, so the smooth gradient gives the supremum.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Point, ProxSet, H_FD, TOL_BOUNDARY};
use crate::sampling;
use crate::solver::{self, IntegratorConfig, Trajectory, VectorField};

/// Margins at or below this value certify a point.
pub const TOL_CERT: f64 = -1e-6;
/// Margins at or above this value refute a point.
pub const TOL_REFUTE: f64 = 1e-6;
/// Allowed distance between Π_{T_S}(d) and d for invariance.
pub const TOL_TANGENT: f64 = 1e-6;
pub const TOL_DECAY: f64 = 1e-4;

pub type ScalarMap = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type GradientMap = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

/// Effective domain of V.
#[derive(Clone, Debug)]
pub enum Domain {
    /// V is finite everywhere.
    Everywhere,
    /// V = g + I_C with C the constraint set.
    Constraint,
    /// V = g + I_S; `bounds` is a box around S used to sample it.
    Set { set: ProxSet, lower: Point, upper: Point },
}

#[derive(Clone)]
pub struct LyapunovCandidate {
    pub label: String,
    /// Smooth part g of V.
    pub value: ScalarMap,
    pub gradient: GradientMap,
    pub w: ScalarMap,
    pub a: f64,
    pub domain: Domain,
}

impl std::fmt::Debug for LyapunovCandidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LyapunovCandidate")
            .field("label", &self.label)
            .field("a", &self.a)
            .field("domain", &self.domain)
            .finish()
    }
}

impl LyapunovCandidate {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Point) -> Point + Send + Sync + 'static,
    ) -> Self {
        LyapunovCandidate {
            label: label.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            w: Arc::new(|_| 0.0),
            a: 0.0,
            domain: Domain::Everywhere,
        }
    }

    /// V = ½‖x‖².
    pub fn half_norm_squared() -> Self {
        LyapunovCandidate::new("half-norm-squared", |x| 0.5 * x.norm_squared(), |x| x.clone())
    }

    /// V = ⟨c, x⟩.
    pub fn linear(c: Point) -> Self {
        let g = c.clone();
        LyapunovCandidate::new("linear", move |x| c.dot(x), move |_| g.clone())
    }

    pub fn constant(value: f64, n: usize) -> Self {
        LyapunovCandidate::new("constant", move |_| value, move |_| Point::zeros(n))
    }

    /// V = I_S.
    pub fn indicator(set: ProxSet, lower: Point, upper: Point) -> Self {
        let n = set.dim();
        LyapunovCandidate::new("indicator", |_| 0.0, move |_| Point::zeros(n)).with_domain(Domain::Set {
            set,
            lower,
            upper,
        })
    }

    pub fn with_rate(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    pub fn with_w(mut self, w: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        self.w = Arc::new(w);
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Whether x lies in dom V, given the constraint set.
    pub fn in_domain(&self, set: &ProxSet, x: &Point) -> bool {
        match &self.domain {
            Domain::Everywhere => true,
            Domain::Constraint => set.contains(x, TOL_BOUNDARY),
            Domain::Set { set: s, .. } => s.contains(x, TOL_BOUNDARY),
        }
    }

    /// V(x), +∞ outside the domain.
    pub fn eval(&self, set: &ProxSet, x: &Point) -> f64 {
        if self.in_domain(set, x) {
            (self.value)(x)
        } else {
            f64::INFINITY
        }
    }

    pub fn criterion(&self) -> Criterion {
        match self.domain {
            Domain::Everywhere => Criterion::Smooth,
            Domain::Constraint => Criterion::SmoothPlusConstraintIndicator,
            Domain::Set { .. } => Criterion::SmoothPlusIndicator,
        }
    }

    /// Rejects candidates whose domain leaves C or whose W is negative somewhere on the probes.
    pub fn check_domain(&self, set: &ProxSet, step: f64) -> Result<()> {
        if let Domain::Set { set: s, lower, upper } = &self.domain {
            for x in project_grid(s, lower, upper, step) {
                if !set.contains(&x, TOL_BOUNDARY) {
                    return Err(Error::DomainViolation(format!(
                        "dom V contains {} which is at distance {:.3e} from C",
                        fmt_point(&x),
                        set.distance(&x)?
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which form of the pointwise criterion produced a margin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    Smooth,
    SmoothPlusConstraintIndicator,
    SmoothPlusIndicator,
    Tangency,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Smooth => "smooth gradient",
            Criterion::SmoothPlusConstraintIndicator => "smooth plus constraint indicator",
            Criterion::SmoothPlusIndicator => "smooth plus indicator",
            Criterion::Tangency => "tangency",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Certified,
    Violated { witness: Point, margin: f64 },
    Inconclusive { worst: f64 },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Certified => "Certified",
            Verdict::Violated { .. } => "Violated",
            Verdict::Inconclusive { .. } => "Inconclusive",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CertificateReport {
    pub samples: Vec<(Point, f64)>,
    pub verdict: Verdict,
    pub criterion: Criterion,
    /// Worst value of ⟨ξ, d⟩/‖ξ‖ over sampled proximal normals ξ of S (invariance only).
    pub dual_worst: Option<f64>,
}

impl CertificateReport {
    pub fn worst_margin(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |s| s.0.len());
        let mut out = String::new();
        for i in 0..n {
            let _ = write!(out, "x{},", i + 1);
        }
        out.push_str("margin\n");
        for (x, m) in &self.samples {
            for v in x.iter() {
                let _ = write!(out, "{},", solver::fmt17(*v));
            }
            let _ = writeln!(out, "{}", solver::fmt17(*m));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "criterion: {}", self.criterion.name());
        let _ = writeln!(out, "samples: {}", self.samples.len());
        let _ = writeln!(out, "worst margin: {:.6e}", self.worst_margin());
        match &self.verdict {
            Verdict::Violated { witness, margin } => {
                let _ = writeln!(out, "verdict: Violated at {} with margin {:.6e}", fmt_point(witness), margin);
            }
            v => {
                let _ = writeln!(out, "verdict: {}", v.name());
            }
        }
        if let Some(d) = self.dual_worst {
            let _ = writeln!(out, "dual check worst: {d:.6e}");
        }
        out
    }
}

pub fn fmt_point(x: &Point) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// Grid of a box, plus the projections of grid points that fall outside the set.
#[derive(Clone, Debug)]
pub struct SamplerSpec {
    pub lower: Point,
    pub upper: Point,
    pub step: f64,
    /// Samples closer than this to `exclude_center` are skipped; margins vanish at equilibria.
    pub exclude_radius: f64,
    pub exclude_center: Option<Point>,
}

impl SamplerSpec {
    pub fn grid(lower: Point, upper: Point, step: f64) -> Self {
        SamplerSpec { lower, upper, step, exclude_radius: 0.0, exclude_center: None }
    }

    pub fn excluding(mut self, center: Point, radius: f64) -> Self {
        self.exclude_center = Some(center);
        self.exclude_radius = radius;
        self
    }

    fn excluded(&self, x: &Point) -> bool {
        match &self.exclude_center {
            Some(c) => (x - c).norm() < self.exclude_radius,
            None => false,
        }
    }

    /// Sample points of `set`: grid points inside it and projections of the others.
    pub fn points_of(&self, set: &ProxSet) -> Vec<Point> {
        project_grid(set, &self.lower, &self.upper, self.step).into_iter().filter(|x| !self.excluded(x)).collect()
    }
}

fn project_grid(set: &ProxSet, lower: &Point, upper: &Point, step: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for y in sampling::grid(lower, upper, step) {
        if let Ok(x) = set.project(&y) {
            out.push(x);
        }
    }
    out.sort_by(lex_cmp);
    out.dedup_by(|a, b| (&*a - &*b).norm() <= 1e-12);
    out
}

fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    a.iter().zip(b.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

/// The criterion margin without the domain guard; +∞ when the right derivative leaves dom V.
pub fn criterion_margin(set: &ProxSet, f: &VectorField, cand: &LyapunovCandidate, x: &Point) -> Result<f64> {
    let d = solver::right_derivative(set, f, x)?;
    if let Domain::Set { set: s, .. } = &cand.domain {
        let split = s.cone_project(x, &d, H_FD)?;
        if split.normal_part.norm() > TOL_TANGENT * (1.0 + d.norm()) {
            return Ok(f64::INFINITY);
        }
    }
    let w = (cand.w)(x);
    if w < 0.0 {
        return Err(Error::HypothesisViolation(format!("W = {w:.3e} < 0 at {}", fmt_point(x))));
    }
    Ok((cand.gradient)(x).dot(&d) + cand.a * (cand.value)(x) + w)
}

/// Margin at one point, after checking x ∈ C and dom V ⊆ C.
pub fn pointwise_certificate(set: &ProxSet, f: &VectorField, cand: &LyapunovCandidate, x: &Point) -> Result<f64> {
    if !set.contains(x, TOL_BOUNDARY) {
        return Err(Error::DomainViolation(format!("{} is not in C", fmt_point(x))));
    }
    cand.check_domain(set, domain_probe_step(set))?;
    if !cand.in_domain(set, x) {
        return Err(Error::InvalidArgument(format!("{} is not in dom V", fmt_point(x))));
    }
    criterion_margin(set, f, cand, x)
}

fn domain_probe_step(set: &ProxSet) -> f64 {
    match set.dim() {
        1 => 1e-3,
        2 => 1e-2,
        _ => 5e-2,
    }
}

fn verdict_of(samples: &[(Point, f64)]) -> Verdict {
    let mut worst: Option<&(Point, f64)> = None;
    for s in samples {
        worst = match worst {
            None => Some(s),
            Some(w) if s.1 > w.1 => Some(s),
            keep => keep,
        };
    }
    match worst {
        None => Verdict::Inconclusive { worst: f64::NAN },
        Some((_, m)) if *m <= TOL_CERT => Verdict::Certified,
        Some((x, m)) if *m >= TOL_REFUTE => Verdict::Violated { witness: x.clone(), margin: *m },
        Some((_, m)) => Verdict::Inconclusive { worst: *m },
    }
}

/// Evaluates the criterion on the sampled part of dom V ∩ C.
pub fn certify_on_samples(
    set: &ProxSet,
    f: &VectorField,
    cand: &LyapunovCandidate,
    sampler: &SamplerSpec,
) -> Result<CertificateReport> {
    cand.check_domain(set, sampler.step)?;
    let points = match &cand.domain {
        Domain::Set { set: s, .. } => sampler.points_of(s).into_iter().filter(|x| set.contains(x, TOL_BOUNDARY)).collect(),
        _ => sampler.points_of(set),
    };
    let mut samples = Vec::with_capacity(points.len());
    for x in points {
        let m = criterion_margin(set, f, cand, &x)?;
        samples.push((x, m));
    }
    let verdict = verdict_of(&samples);
    Ok(CertificateReport { samples, verdict, criterion: cand.criterion(), dual_worst: None })
}

#[derive(Clone, Debug)]
pub struct DecayReport {
    pub values: Vec<f64>,
    /// Largest D_k − D_{k−1}.
    pub max_increase: f64,
    /// Largest D_k − D_0.
    pub max_excess: f64,
    pub tol: f64,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.max_increase <= self.tol && self.max_excess <= self.tol
    }
}

/// D_k = e^{a t_k}V(x_k) + ∫_0^{t_k} W, with left rectangles or the trapezoid rule.
pub fn trajectory_decay_check(
    set: &ProxSet,
    traj: &Trajectory,
    cand: &LyapunovCandidate,
    tol_dec: f64,
    trapezoid: bool,
) -> DecayReport {
    let mut values = Vec::with_capacity(traj.len());
    let mut integral = 0.0;
    let mut prev_w = 0.0;
    for k in 0..traj.len() {
        let x = &traj.states[k];
        let w = (cand.w)(x);
        if k > 0 {
            let dt = traj.times[k] - traj.times[k - 1];
            integral += if trapezoid { 0.5 * dt * (prev_w + w) } else { dt * prev_w };
        }
        prev_w = w;
        values.push((cand.a * traj.times[k]).exp() * cand.eval(set, x) + integral);
    }
    let d0 = values.first().copied().unwrap_or(0.0);
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_excess = f64::NEG_INFINITY;
    for k in 1..values.len() {
        max_increase = max_increase.max(values[k] - values[k - 1]);
        max_excess = max_excess.max(values[k] - d0);
    }
    if values.len() <= 1 {
        max_increase = 0.0;
        max_excess = 0.0;
    }
    DecayReport { values, max_increase, max_excess, tol: tol_dec }
}

/// Integrates from each start and runs the decay check.
pub fn decay_on_starts(
    set: &ProxSet,
    f: &VectorField,
    cand: &LyapunovCandidate,
    starts: &[Point],
    cfg: &IntegratorConfig,
    tol_dec: f64,
) -> Result<Vec<DecayReport>> {
    starts
        .iter()
        .map(|x0| Ok(trajectory_decay_check(set, &solver::integrate(set, f, x0, cfg)?, cand, tol_dec, false)))
        .collect()
}

/// Tangency of the right derivative to S at sampled points of S, with a dual vote over proximal normals.
pub fn invariance_certificate(
    set: &ProxSet,
    subset: &ProxSet,
    f: &VectorField,
    sampler: &SamplerSpec,
    seed: u64,
) -> Result<CertificateReport> {
    let points = sampler.points_of(subset);
    for x in &points {
        if !set.contains(x, TOL_BOUNDARY) {
            return Err(Error::SubsetViolation { point: x.iter().copied().collect() });
        }
    }
    let mut rng = sampling::rng(seed);
    let mut samples = Vec::with_capacity(points.len());
    let mut dual_worst = f64::NEG_INFINITY;
    for x in points {
        let d = solver::right_derivative(set, f, &x)?;
        let split = subset.cone_project(&x, &d, H_FD)?;
        samples.push((x.clone(), split.normal_part.norm()));
        for _ in 0..4 {
            let xi = subset.cone_project(&x, &sampling::unit_vector(x.len(), &mut rng), H_FD)?.normal_part;
            let norm = xi.norm();
            if norm > 1e-9 {
                dual_worst = dual_worst.max(xi.dot(&d) / norm);
            }
        }
    }
    let worst = samples.iter().fold(None::<&(Point, f64)>, |acc, s| match acc {
        Some(w) if w.1 >= s.1 => Some(w),
        _ => Some(s),
    });
    let verdict = match worst {
        None => Verdict::Inconclusive { worst: f64::NAN },
        Some((_, m)) if *m <= TOL_TANGENT => Verdict::Certified,
        Some((x, m)) => Verdict::Violated { witness: x.clone(), margin: *m },
    };
    Ok(CertificateReport {
        samples,
        verdict,
        criterion: Criterion::Tangency,
        dual_worst: (dual_worst > f64::NEG_INFINITY).then_some(dual_worst),
    })
}

#[derive(Clone, Debug)]
pub struct RadiusOptions {
    pub cfg: IntegratorConfig,
    pub starts: usize,
    pub grid_step: f64,
    pub seed: u64,
    /// Relative slack on the decay bound.
    pub tol: f64,
}

impl RadiusOptions {
    pub fn new(cfg: IntegratorConfig) -> Self {
        RadiusOptions { cfg, starts: 10, grid_step: 0.01, seed: sampling::DEFAULT_SEED, tol: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct RadiusReport {
    /// Largest ⟨x, f(x)⟩ + δ‖x‖² over the samples.
    pub condition_worst: f64,
    pub radius: f64,
    pub starts: Vec<Point>,
    /// Largest ‖x_k‖ / (‖x₀‖e^{−δt_k/2}) over all runs.
    pub max_ratio: f64,
    pub tol: f64,
}

impl RadiusReport {
    pub fn passed(&self) -> bool {
        self.max_ratio <= 1.0 + self.tol
    }
}

/// Checks ⟨x, f(x)⟩ + δ‖x‖² ≤ 0 on C ∩ B(0, ε), then the decay ‖x(t)‖ ≤ ‖x₀‖e^{−δt/2} from starts
/// in B(0, min{rδ/L, ε}).
pub fn lyapunov_radius_check(
    set: &ProxSet,
    f: &VectorField,
    delta: f64,
    epsilon: f64,
    lipschitz: f64,
    opts: &RadiusOptions,
) -> Result<RadiusReport> {
    let n = set.dim();
    let origin = Point::zeros(n);
    if !set.contains(&origin, TOL_BOUNDARY) {
        return Err(Error::HypothesisViolation("0 is not in C".into()));
    }
    if f.eval(&origin).norm() > 1e-12 {
        return Err(Error::HypothesisViolation("f(0) is not 0".into()));
    }
    if !(delta > 0.0 && epsilon > 0.0 && lipschitz > 0.0) {
        return Err(Error::InvalidArgument("delta, epsilon and L must be positive".into()));
    }
    let lo = Point::from_element(n, -epsilon);
    let hi = Point::from_element(n, epsilon);
    let mut condition_worst = f64::NEG_INFINITY;
    let mut witness: Option<(Point, f64)> = None;
    for x in sampling::grid(&lo, &hi, opts.grid_step) {
        if x.norm() > epsilon || !set.contains(&x, TOL_BOUNDARY) {
            continue;
        }
        let value = x.dot(&f.eval(&x)) + delta * x.norm_squared();
        condition_worst = condition_worst.max(value);
        if value > 1e-10 * (1.0 + x.norm_squared()) && witness.as_ref().is_none_or(|w| value > w.1) {
            witness = Some((x, value));
        }
    }
    if let Some((x, margin)) = witness {
        return Err(Error::ConditionFailed { witness: x.iter().copied().collect(), margin });
    }
    let r = set.prox_constant()?;
    let radius = if r.is_infinite() { epsilon } else { (r * delta / lipschitz).min(epsilon) };
    let mut rng = sampling::rng(opts.seed);
    let mut starts = Vec::with_capacity(opts.starts);
    let mut attempts = 0;
    while starts.len() < opts.starts && attempts < 1000 * opts.starts.max(1) {
        attempts += 1;
        let x0 = sampling::in_ball(&origin, radius, &mut rng);
        if x0.norm() < radius && set.contains(&x0, opts.cfg.tol.mem) {
            starts.push(x0);
        }
    }
    let mut max_ratio: f64 = 0.0;
    for x0 in &starts {
        let traj = solver::integrate(set, f, x0, &opts.cfg)?;
        let n0 = x0.norm();
        for (t, x) in traj.times.iter().zip(traj.states.iter()) {
            let bound = n0 * (-0.5 * delta * t).exp();
            if bound > 0.0 {
                max_ratio = max_ratio.max(x.norm() / bound);
            }
        }
    }
    Ok(RadiusReport { condition_worst, radius, starts, max_ratio, tol: opts.tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pt(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    fn unit_ball() -> ProxSet {
        ProxSet::ball(pt(&[0.0, 0.0]), 1.0).unwrap()
    }

    fn ball_sampler(step: f64) -> SamplerSpec {
        SamplerSpec::grid(pt(&[-1.1, -1.1]), pt(&[1.1, 1.1]), step)
    }

    fn remark_segment() -> LyapunovCandidate {
        let s = ProxSet::cuboid(pt(&[1.0, 0.0]), pt(&[1.0, 1.0])).unwrap();
        LyapunovCandidate::indicator(s, pt(&[0.9, -0.1]), pt(&[1.1, 1.1]))
    }

    #[test]
    fn rotation_margin_vanishes() {
        let ball = unit_ball();
        let rot = VectorField::rotation(1.0);
        let cand = LyapunovCandidate::half_norm_squared();
        for x in ball_sampler(0.1).points_of(&ball) {
            assert!(pointwise_certificate(&ball, &rot, &cand, &x).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn contraction_margin_matches_hand_value() {
        let ball = unit_ball();
        let f = VectorField::linear(-nalgebra::DMatrix::identity(2, 2));
        let cand = LyapunovCandidate::half_norm_squared().with_rate(1.0);
        for x in ball_sampler(0.05).points_of(&ball) {
            let m = criterion_margin(&ball, &f, &cand, &x).unwrap();
            // −x points inward everywhere, so the tangent projection leaves it unchanged.
            assert!((m + 0.5 * x.norm_squared()).abs() < 1e-12);
        }
        let rep = certify_on_samples(&ball, &f, &cand, &ball_sampler(0.01).excluding(pt(&[0.0, 0.0]), 0.01)).unwrap();
        assert_eq!(rep.verdict, Verdict::Certified);
        let rep = certify_on_samples(&ball, &f, &cand, &ball_sampler(0.01)).unwrap();
        assert!(matches!(rep.verdict, Verdict::Inconclusive { .. }));
    }

    #[test]
    fn linear_candidate_is_refuted_with_a_valid_witness() {
        let ball = unit_ball();
        let rot = VectorField::rotation(1.0);
        let cand = LyapunovCandidate::linear(pt(&[1.0, 0.0]));
        assert!((pointwise_certificate(&ball, &rot, &cand, &pt(&[0.0, -1.0])).unwrap() - 1.0).abs() < 1e-12);
        let rep = certify_on_samples(&ball, &rot, &cand, &ball_sampler(0.05)).unwrap();
        let Verdict::Violated { witness, margin } = rep.verdict.clone() else { panic!("{:?}", rep.verdict) };
        assert!((margin - 1.0).abs() < 1e-9);
        assert!(witness[1] < -0.99);
        assert_eq!(pointwise_certificate(&ball, &rot, &cand, &witness).unwrap(), margin);
        assert!(rep.to_csv().starts_with("x1,x2,margin\n"));
    }

    #[test]
    fn positive_w_without_motion_is_refuted() {
        let ball = unit_ball();
        let cand = LyapunovCandidate::constant(1.0, 2).with_w(|_| 0.5);
        let rep = certify_on_samples(&ball, &VectorField::zero(2), &cand, &ball_sampler(0.1)).unwrap();
        assert!(rep.samples.iter().all(|s| s.1 == 0.5));
        assert!(matches!(rep.verdict, Verdict::Violated { .. }));
    }

    #[test]
    fn segment_indicator_passes_criterion_but_fails_domain_guard() {
        let ball = unit_ball();
        let rot = VectorField::rotation(1.0);
        let cand = remark_segment();
        let xbar = pt(&[1.0, 0.0]);
        assert!(criterion_margin(&ball, &rot, &cand, &xbar).unwrap() <= 0.0);
        assert!(matches!(pointwise_certificate(&ball, &rot, &cand, &xbar), Err(Error::DomainViolation(_))));
        assert!(matches!(
            certify_on_samples(&ball, &rot, &cand, &ball_sampler(0.01)),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn decay_values() {
        let ball = unit_ball();
        let rot = VectorField::rotation(1.0);
        let traj = solver::integrate(&ball, &rot, &pt(&[1.0, 0.0]), &IntegratorConfig::new(1e-3, 2.0 * PI)).unwrap();
        let rep = trajectory_decay_check(&ball, &traj, &LyapunovCandidate::half_norm_squared(), 1e-6, false);
        assert!(rep.values.iter().all(|v| (v - 0.5).abs() < 1e-6) && rep.passed());
        let rep = trajectory_decay_check(&ball, &traj, &LyapunovCandidate::constant(2.0, 2), 0.0, true);
        assert!(rep.values.iter().all(|v| *v == 2.0) && rep.passed());

        let f = VectorField::linear(-nalgebra::DMatrix::identity(2, 2));
        let cand = LyapunovCandidate::half_norm_squared().with_rate(0.5).with_w(|x| 0.25 * x.norm_squared());
        let starts: Vec<Point> = (0..10).map(|k| pt(&[0.9 * (k as f64).cos(), 0.9 * (k as f64).sin()])).collect();
        let reps = decay_on_starts(&ball, &f, &cand, &starts, &IntegratorConfig::new(1e-3, 3.0), TOL_DECAY).unwrap();
        assert!(reps.iter().all(DecayReport::passed));
    }

    #[test]
    fn invariance_examples() {
        let ball = unit_ball();
        let rot = VectorField::rotation(1.0);
        let circle = ProxSet::sphere(pt(&[0.0, 0.0]), 1.0).unwrap();
        let rep = invariance_certificate(&ball, &circle, &rot, &ball_sampler(0.05), 42).unwrap();
        assert_eq!(rep.verdict, Verdict::Certified);
        assert!(rep.samples.len() > 100);
        assert!(rep.dual_worst.unwrap() <= 1e-9);

        let origin = ProxSet::cuboid(pt(&[0.0, 0.0]), pt(&[0.0, 0.0])).unwrap();
        let rep = invariance_certificate(&ball, &origin, &rot, &ball_sampler(0.1), 42).unwrap();
        assert_eq!(rep.verdict, Verdict::Certified);

        // The disk of radius ½ is not invariant under a field pushing outward.
        let half = ProxSet::ball(pt(&[0.0, 0.0]), 0.5).unwrap();
        let out = VectorField::constant(pt(&[1.0, 0.0]));
        let rep = invariance_certificate(&ball, &half, &out, &ball_sampler(0.1), 42).unwrap();
        let Verdict::Violated { witness, margin } = rep.verdict else { panic!() };
        assert!(witness[0] > 0.0 && margin > 0.5);
        assert!(rep.dual_worst.unwrap() > 0.5);

        let segment = ProxSet::cuboid(pt(&[1.0, 0.0]), pt(&[1.0, 0.5])).unwrap();
        assert!(matches!(
            invariance_certificate(&ball, &segment, &rot, &ball_sampler(0.1), 42),
            Err(Error::SubsetViolation { .. })
        ));
    }

    #[test]
    fn radius_examples() {
        let ball = unit_ball();
        let f = VectorField::linear(-nalgebra::DMatrix::identity(2, 2));
        let opts = RadiusOptions::new(IntegratorConfig::new(1e-3, 3.0));
        let rep = lyapunov_radius_check(&ball, &f, 1.0, 1.0, 1.0, &opts).unwrap();
        assert_eq!(rep.radius, 1.0);
        assert!(rep.condition_worst.abs() < 1e-12);
        assert_eq!(rep.starts.len(), 10);
        assert!(rep.passed());

        let plane = ProxSet::whole_space(2);
        let rep = lyapunov_radius_check(&plane, &f, 1.0, 0.3, 1.0, &opts).unwrap();
        assert_eq!(rep.radius, 0.3);

        let rot = VectorField::rotation(1.0);
        match lyapunov_radius_check(&ball, &rot, 0.1, 1.0, 1.0, &opts) {
            Err(Error::ConditionFailed { witness, margin }) => {
                assert!(margin > 0.0 && witness.iter().any(|v| *v != 0.0));
                let w = pt(&witness);
                assert!((margin - 0.1 * w.norm_squared()).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }
}
