//! Shifted maximal monotone reformulation ẋ ∈ f(x) + (m/r)x − A_C(x) and its implicit Euler scheme.

use crate::error::{Error, Result};
use crate::geometry::{Point, ProxSet, H_FD, TOL_MEM};
use crate::sampling;
use crate::solver::{self, IntegratorConfig, Trajectory, VectorField};

const CAP_LIMIT: f64 = 1e9;
const RESIDUAL_FLOOR: f64 = 1e-6;

/// A_C on C: N_C(x) ∩ B(0, m) + (m/r)x.
#[derive(Clone, Debug)]
pub struct ShiftedOperator {
    pub set: ProxSet,
    pub m: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolventPoint {
    pub x: Point,
    /// ‖z − x − λ((m/r)x + n)‖ with the best admissible normal n.
    pub residual: f64,
}

impl ShiftedOperator {
    pub fn new(set: ProxSet, m: f64) -> Result<Self> {
        let r = set.prox_constant()?;
        ShiftedOperator::with_r(set, m, r)
    }

    /// Any r no larger than the set's own constant is admissible.
    pub fn with_r(set: ProxSet, m: f64, r: f64) -> Result<Self> {
        if !(m > 0.0) || !(r > 0.0) {
            return Err(Error::InvalidArgument("cap m and constant r must be positive".into()));
        }
        Ok(ShiftedOperator { set, m, r })
    }

    #[inline]
    pub fn shift(&self) -> f64 {
        if self.r.is_infinite() {
            0.0
        } else {
            self.m / self.r
        }
    }

    /// Π of `w` onto N_C(x) ∩ B(0, m).
    pub fn capped_normal(&self, x: &Point, w: &Point) -> Result<Point> {
        let n = self.set.cone_project(x, w, H_FD)?.normal_part;
        let norm = n.norm();
        Ok(if norm > self.m { n * (self.m / norm) } else { n })
    }

    /// Best element of A(x) − (m/r)x for `w`. For convex C the full cone N_C is used: it is already
    /// maximal monotone and lies between the two sides of the sandwich.
    fn operator_normal(&self, x: &Point, w: &Point) -> Result<Point> {
        if self.set.is_convex() {
            return Ok(self.set.cone_project(x, w, H_FD)?.normal_part);
        }
        let n = self.set.cone_project(x, w, H_FD)?.normal_part;
        let norm = n.norm();
        Ok(if norm > self.m { n * (self.m / norm) } else { n })
    }

    /// Residual of x as a solution of z ∈ x + λA(x).
    pub fn merit(&self, lambda: f64, z: &Point, x: &Point) -> Result<f64> {
        let base = z - x * (1.0 + lambda * self.shift());
        let n = self.operator_normal(x, &(&base / lambda))?;
        Ok((base - n * lambda).norm())
    }

    /// Solves z ∈ x + λA(x) over x ∈ C; errors when no point gets the residual below 1e-6.
    pub fn resolvent(&self, lambda: f64, z: &Point) -> Result<Point> {
        let best = self.resolvent_search(lambda, z)?;
        if best.residual > RESIDUAL_FLOOR * (1.0 + z.norm()) {
            return Err(Error::NoSolutionInGrid { residual: best.residual });
        }
        Ok(best.x)
    }

    /// Best point of C for the resolvent equation, with its residual.
    pub fn resolvent_search(&self, lambda: f64, z: &Point) -> Result<ResolventPoint> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        let scale = 1.0 + lambda * self.shift();
        if self.set.is_convex() {
            let x = self.set.project(&(z / scale))?;
            let residual = self.merit(lambda, z, &x)?;
            return Ok(ResolventPoint { x, residual });
        }
        let n = self.set.dim();
        if n > 3 {
            return Err(Error::InvalidArgument("grid resolvent is limited to dimension 3".into()));
        }
        // Any solution satisfies ‖z − scale·x‖ ≤ λm.
        let center = z / scale;
        let radius = (lambda * self.m / scale).max(1e-12 * (1.0 + center.norm()));
        let per_axis = match n {
            1 => 2001,
            2 => 61,
            _ => 21,
        };
        let step = 2.0 * radius / (per_axis - 1) as f64;
        let lo = center.add_scalar(-radius);
        let hi = center.add_scalar(radius + 0.5 * step);
        let mut seeds: Vec<(f64, Point)> = Vec::new();
        for y in std::iter::once(center.clone()).chain(sampling::grid(&lo, &hi, step)) {
            let Ok(x) = self.set.project(&y) else { continue };
            if (&x - &center).norm() > radius * (1.0 + 1e-9) + 1e-15 {
                continue;
            }
            let res = self.merit(lambda, z, &x)?;
            seeds.push((res, y));
        }
        if seeds.is_empty() {
            let x = self.set.project(&center)?;
            let residual = self.merit(lambda, z, &x)?;
            return Ok(ResolventPoint { x, residual });
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| lex_cmp(&a.1, &b.1)));
        let mut best: Option<ResolventPoint> = None;
        for (_, y) in seeds.into_iter().take(4) {
            let cand = self.refine(lambda, z, y, step)?;
            let better = match &best {
                None => true,
                Some(b) => {
                    cand.residual < b.residual
                        || (cand.residual == b.residual && lex_cmp(&cand.x, &b.x) == std::cmp::Ordering::Less)
                }
            };
            if better {
                best = Some(cand);
            }
        }
        Ok(best.expect("at least one seed"))
    }

    /// Compass search on y with x = Π_C(y), down to a relative step of 1e-14.
    fn refine(&self, lambda: f64, z: &Point, mut y: Point, step: f64) -> Result<ResolventPoint> {
        let n = y.len();
        let eval = |y: &Point| -> Result<(f64, Point)> {
            let x = self.set.project(y)?;
            Ok((self.merit(lambda, z, &x)?, x))
        };
        let (mut value, mut x) = eval(&y)?;
        let mut delta = step;
        let floor = 1e-14 * (1.0 + y.norm());
        let mut iterations = 0;
        while delta > floor && value > 1e-15 && iterations < 20_000 {
            iterations += 1;
            let mut improved = false;
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut trial = y.clone();
                    trial[i] += sign * delta;
                    if let Ok((v, xt)) = eval(&trial) {
                        if v < value {
                            value = v;
                            x = xt;
                            y = trial;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                delta *= 0.5;
            }
        }
        Ok(ResolventPoint { x, residual: value })
    }
}

fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapChoice {
    pub m: f64,
    /// Length of each continuation piece.
    pub t0: f64,
    pub pieces: usize,
}

/// ‖f(x₀)‖ + κ(‖f(x₀)‖T₀e^{(κ + m/r)T₀} + 1) ≤ m.
pub fn cap_inequality_holds(f0: f64, kappa: f64, r: f64, m: f64, t0: f64) -> bool {
    let shift = if r.is_infinite() { 0.0 } else { m / r };
    f0 + kappa * (f0 * t0 * ((kappa + shift) * t0).exp() + 1.0) <= m
}

/// Doubling search for the cap m. If no candidate works on the whole horizon, the horizon is split
/// into pieces of length T₀ on which the inequality holds with the speed bound valid on [0, T].
pub fn choose_cap_for(f0: f64, kappa: f64, r: f64, t_final: f64) -> Result<CapChoice> {
    let base = f0 + kappa;
    let mut m = if base > 0.0 { base } else { 1.0 };
    let speed_bound = f0 * (1.0 + kappa * t_final * (kappa * t_final).exp());
    while m <= CAP_LIMIT {
        if cap_inequality_holds(f0, kappa, r, m, t_final) {
            return Ok(CapChoice { m, t0: t_final, pieces: 1 });
        }
        if m > speed_bound + kappa && cap_inequality_holds(speed_bound, kappa, r, m, 0.0) {
            let (mut a, mut b) = (0.0, t_final);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if cap_inequality_holds(speed_bound, kappa, r, m, mid) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            if a > 0.0 {
                return Ok(CapChoice { m, t0: a, pieces: (t_final / a).ceil() as usize });
            }
        }
        m *= 2.0;
    }
    Err(Error::CapSearchOverflow)
}

pub fn choose_cap(set: &ProxSet, f: &VectorField, x0: &Point, t_final: f64) -> Result<CapChoice> {
    if !set.contains(x0, TOL_MEM) {
        return Err(Error::NotInSet { distance: set.distance(x0)? });
    }
    choose_cap_for(f.eval(x0).norm(), f.kappa, set.prox_constant()?, t_final)
}

#[derive(Clone, Debug)]
pub struct DimRun {
    pub trajectory: Trajectory,
    /// Steps whose iterate failed the membership test.
    pub infeasible_steps: Vec<usize>,
}

/// Implicit Euler on the shifted problem: x_{k+1} = J_h(x_k + h(f(x_k) + (m/r)x_k)).
pub fn dim_integrate(set: &ProxSet, f: &VectorField, x0: &Point, cfg: &IntegratorConfig, m: f64) -> Result<DimRun> {
    cfg.validate()?;
    if !set.contains(x0, cfg.tol.mem) {
        return Err(Error::NotInSet { distance: set.distance(x0)? });
    }
    let op = ShiftedOperator::new(set.clone(), m)?;
    let h = cfg.h;
    let shift = op.shift();
    let mut states = vec![x0.clone()];
    let mut infeasible = Vec::new();
    let mut x = x0.clone();
    for k in 0..cfg.steps() {
        let z = &x + (f.eval(&x) + &x * shift) * h;
        let next = op.resolvent(h, &z).map_err(|e| Error::StepFailed { step: k, source: Box::new(e) })?;
        if !set.contains(&next, cfg.tol.mem) {
            infeasible.push(k + 1);
        }
        states.push(next.clone());
        x = next;
    }
    Ok(DimRun { trajectory: solver::trajectory_from_states(states, h, f, &cfg.tol), infeasible_steps: infeasible })
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub cap: CapChoice,
    pub gaps: Vec<(f64, f64)>,
    pub sup_gap: f64,
    pub threshold: f64,
    pub infeasible_steps: Vec<usize>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.sup_gap <= self.threshold && self.infeasible_steps.is_empty()
    }

    pub fn gap_csv(&self) -> String {
        let mut out = String::from("t,gap\n");
        for (t, g) in &self.gaps {
            out.push_str(&format!("{},{}\n", solver::fmt17(*t), solver::fmt17(*g)));
        }
        out
    }

    pub fn verdict(&self) -> String {
        format!(
            "equivalence {}: sup gap {:.6e} vs {:.6e} (m = {}, {} infeasible steps)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.sup_gap,
            self.threshold,
            self.cap.m,
            self.infeasible_steps.len()
        )
    }
}

/// Gap constant C_eq in the verdict sup gap ≤ C_eq·h.
pub const EQUIVALENCE_CONSTANT: f64 = 10.0;

/// Runs catching-up and the resolvent scheme side by side and compares them step by step.
pub fn equivalence_check(set: &ProxSet, f: &VectorField, x0: &Point, cfg: &IntegratorConfig) -> Result<EquivalenceReport> {
    let cap = choose_cap(set, f, x0, cfg.t_final)?;
    let explicit = solver::integrate(set, f, x0, cfg)?;
    let implicit = dim_integrate(set, f, x0, cfg, cap.m)?;
    let gaps: Vec<(f64, f64)> = explicit
        .times
        .iter()
        .zip(explicit.states.iter().zip(implicit.trajectory.states.iter()))
        .map(|(t, (a, b))| (*t, (a - b).norm()))
        .collect();
    let sup_gap = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    Ok(EquivalenceReport {
        cap,
        gaps,
        sup_gap,
        threshold: EQUIVALENCE_CONSTANT * cfg.h,
        infeasible_steps: implicit.infeasible_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pt(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    fn line_complement() -> ProxSet {
        ProxSet::ball_complement(pt(&[0.0]), 1.0).unwrap()
    }

    #[test]
    fn cap_examples() {
        let zero = choose_cap_for(0.0, 3.0, 1.0, 1.0).unwrap();
        assert_eq!(zero.m, 3.0);
        assert_eq!(choose_cap_for(0.0, 0.7, 1.0, 1.0).unwrap().m, 0.7);
        assert_eq!(choose_cap_for(1.0, 0.0, 1.0, 1.0).unwrap(), CapChoice { m: 1.0, t0: 1.0, pieces: 1 });
        // Rotation with κ = r = 1 on [0, 1]: no m satisfies the inequality with T₀ = 1.
        let rot = choose_cap_for(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(!cap_inequality_holds(1.0, 1.0, 1.0, rot.m, 1.0));
        let speed = 1.0 + 1f64.exp();
        assert!(cap_inequality_holds(speed, 1.0, 1.0, rot.m, rot.t0));
        assert!(!cap_inequality_holds(speed, 1.0, 1.0, rot.m, rot.t0 * 1.01));
        assert!(rot.pieces as f64 * rot.t0 >= 1.0);
        // The previous candidate fails on the whole horizon and leaves no room above the speed bound.
        assert!(!cap_inequality_holds(1.0, 1.0, 1.0, rot.m / 2.0, 1.0) && rot.m / 2.0 <= speed + 1.0);
        assert_eq!(rot.m, 8.0);
        assert_eq!(choose_cap_for(1e6, 1e6, 1.0, 10.0), Err(Error::CapSearchOverflow));
    }

    #[test]
    fn convex_resolvent_is_projection() {
        let ball = ProxSet::ball(pt(&[0.0, 0.0]), 1.0).unwrap();
        let op = ShiftedOperator::new(ball.clone(), 5.0).unwrap();
        let z = pt(&[2.0, 1.0]);
        assert_eq!(op.resolvent(0.3, &z).unwrap(), ball.project(&z).unwrap());
    }

    #[test]
    fn whole_line_resolvent_is_linear() {
        let line = ProxSet::whole_space(1);
        let op = ShiftedOperator::with_r(line, 2.0, 4.0).unwrap();
        let x = op.resolvent(0.5, &pt(&[3.0])).unwrap();
        assert!((x[0] - 3.0 / (1.0 + 0.5 * 0.5)).abs() < 1e-15);
    }

    /// Exhaustive scan over both branches of (−∞,−1] ∪ [1,∞) at resolution 1e-6.
    fn scan_line_resolvent(op: &ShiftedOperator, lambda: f64, z: f64) -> (f64, f64) {
        let mut best = (f64::NAN, f64::INFINITY);
        let span = 2.0;
        let count = (span / 1e-6) as usize;
        for branch in [1.0, -1.0] {
            for i in 0..=count {
                let x = branch * (1.0 + i as f64 * 1e-6);
                let res = op.merit(lambda, &pt(&[z]), &pt(&[x])).unwrap();
                if res < best.1 {
                    best = (x, res);
                }
            }
        }
        best
    }

    #[test]
    fn line_complement_resolvent_matches_scan() {
        let op = ShiftedOperator::new(line_complement(), 1.0).unwrap();
        let found = op.resolvent_search(0.1, &pt(&[0.5])).unwrap();
        let (x, res) = scan_line_resolvent(&op, 0.1, 0.5);
        assert!((found.x[0] - x).abs() < 1e-6);
        assert!((found.residual - res).abs() < 1e-9);
        // z = 0.5 sits deep in the gap: the cap m = 1 cannot reach it.
        assert!(matches!(op.resolvent(0.1, &pt(&[0.5])), Err(Error::NoSolutionInGrid { .. })));

        for z in [1.05, 1.5, 2.3, -1.7] {
            let found = op.resolvent(0.1, &pt(&[z])).unwrap();
            let (x, res) = scan_line_resolvent(&op, 0.1, z);
            assert!(res < 1e-5);
            assert!((found[0] - x).abs() < 2e-6, "z = {z}: {found} vs {x}");
        }
    }

    #[test]
    fn sandwich_membership() {
        let shell = ProxSet::shell(pt(&[0.0, 0.0]), 1.0, 2.0).unwrap();
        let op = ShiftedOperator::new(shell, 1.0).unwrap();
        let lambda = 0.05;
        for k in 0..12 {
            let a = k as f64 * 0.5;
            let x = pt(&[a.cos(), a.sin()]);
            let n = -&x * 0.7;
            let z = &x + (&n + &x * op.shift()) * lambda;
            assert!(op.merit(lambda, &z, &x).unwrap() <= 1e-8);
            let found = op.resolvent(lambda, &z).unwrap();
            assert!((found - &x).norm() < 1e-7);
        }
    }

    #[test]
    fn dim_matches_catching_up_on_convex_sets() {
        let ball = ProxSet::ball(pt(&[0.0, 0.0]), 1.0).unwrap();
        let rot = VectorField::rotation(1.0);
        let cfg = IntegratorConfig::new(1e-3, PI);
        let rep = equivalence_check(&ball, &rot, &pt(&[1.0, 0.0]), &cfg).unwrap();
        assert!(rep.sup_gap <= 1e-2 && rep.passed());
        let zero = VectorField::zero(2);
        let rep = equivalence_check(&ball, &zero, &pt(&[0.3, 0.3]), &cfg).unwrap();
        assert_eq!(rep.sup_gap, 0.0);
        let ramp = VectorField::constant(pt(&[-1.0, -1.0]));
        let cfg = IntegratorConfig::new(1e-3, 3.0);
        let rep = equivalence_check(&ProxSet::Orthant(2), &ramp, &pt(&[0.5, 2.0]), &cfg).unwrap();
        assert!(rep.sup_gap <= 5e-3);
        assert!(rep.gap_csv().starts_with("t,gap\n"));
    }

    #[test]
    fn dim_fixed_point_for_zero_field() {
        let comp = line_complement();
        let cfg = IntegratorConfig::new(1e-2, 0.5);
        let run = dim_integrate(&comp, &VectorField::zero(1), &pt(&[1.0]), &cfg, 1.0).unwrap();
        assert!(run.trajectory.states.iter().all(|x| (x[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dim_on_line_complement_tracks_closed_form() {
        let comp = line_complement();
        let f = VectorField::constant(pt(&[-1.0]));
        let exact = |t: f64| pt(&[(2.0 - t).max(1.0)]);
        let cfg = IntegratorConfig::new(1e-3, 2.0);
        let rep = equivalence_check(&comp, &f, &pt(&[2.0]), &cfg).unwrap();
        assert!(rep.passed(), "{}", rep.verdict());
        let m = rep.cap.m;
        let dim = dim_integrate(&comp, &f, &pt(&[2.0]), &cfg, m).unwrap();
        assert!(solver::sup_error(&dim.trajectory, &exact) < 5e-3);
    }

    #[test]
    fn capped_map_is_monotone_on_shell_pairs() {
        let shell = ProxSet::shell(pt(&[0.0, 0.0]), 1.0, 2.0).unwrap();
        let op = ShiftedOperator::new(shell.clone(), 1.0).unwrap();
        let mut rng = sampling::rng(9);
        let mut worst = f64::INFINITY;
        for _ in 0..1000 {
            let boundary = |rng: &mut rand_chacha::ChaCha8Rng| {
                let u = sampling::unit_vector(2, rng);
                let x = if rand::Rng::gen_bool(rng, 0.5) { u } else { u * 2.0 };
                let xi = op.capped_normal(&x, &(sampling::unit_vector(2, rng) * 10.0)).unwrap();
                (x, xi)
            };
            let (x1, n1) = boundary(&mut rng);
            let (x2, n2) = boundary(&mut rng);
            let s = op.shift();
            let val = (&x1 - &x2).dot(&((n1 + &x1 * s) - (n2 + &x2 * s)));
            worst = worst.min(val);
        }
        assert!(worst >= -1e-12, "{worst}");
    }
}
