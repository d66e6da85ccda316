//! Uniformly prox-regular sets: projections, cone decompositions and prox constants.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling;

pub type Point = DVector<f64>;

/// Default membership tolerance.
pub const TOL_MEM: f64 = 1e-9;
/// Distance to the boundary below which a point is treated as a boundary point.
pub const TOL_BOUNDARY: f64 = 1e-7;
/// Default tolerance on |⟨normal, tangent⟩|.
pub const TOL_ORTH: f64 = 1e-6;
/// Default finite-difference step for tangent projections.
pub const H_FD: f64 = 1e-5;

/// Relative distance to a sphere center below which the radial projection is ambiguous.
const AMBIGUITY: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum ProxSet {
    Ball { center: Point, radius: f64 },
    Box { lower: Point, upper: Point },
    /// Nonnegative orthant of the given dimension.
    Orthant(usize),
    SphereShell { center: Point, r_in: f64, r_out: f64 },
    /// Closed exterior {‖x − center‖ ≥ radius}.
    BallComplement { center: Point, radius: f64 },
    /// {x : Dx ∈ inner}.
    LinearPreimage { d: DMatrix<f64>, inner: Box<ProxSet> },
    Product(Box<ProxSet>, Box<ProxSet>),
    /// {x : Hx + c ≥ 0} componentwise.
    LevelSetPolyhedral { h: DMatrix<f64>, c: Point },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeProjection {
    pub normal_part: Point,
    pub tangent_part: Point,
    pub residual: f64,
}

impl ConeProjection {
    fn from_tangent(v: &Point, tangent: Point) -> Self {
        let normal = v - &tangent;
        let residual = normal.dot(&tangent).abs();
        ConeProjection { normal_part: normal, tangent_part: tangent, residual }
    }

    fn interior(v: &Point) -> Self {
        ConeProjection { normal_part: Point::zeros(v.len()), tangent_part: v.clone(), residual: 0.0 }
    }
}

/// A nearest point, flagged when other nearest points exist.
#[derive(Clone, Debug)]
struct Nearest {
    point: Point,
    ambiguous: bool,
}

impl Nearest {
    fn unique(point: Point) -> Self {
        Nearest { point, ambiguous: false }
    }
}

pub fn check_finite(x: &Point) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_dim(expected: usize, x: &Point) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

impl ProxSet {
    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        let s = ProxSet::Ball { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn cuboid(lower: Point, upper: Point) -> Result<Self> {
        let s = ProxSet::Box { lower, upper };
        s.validate()?;
        Ok(s)
    }

    pub fn shell(center: Point, r_in: f64, r_out: f64) -> Result<Self> {
        let s = ProxSet::SphereShell { center, r_in, r_out };
        s.validate()?;
        Ok(s)
    }

    /// The sphere ‖x − center‖ = radius, a shell of zero thickness.
    pub fn sphere(center: Point, radius: f64) -> Result<Self> {
        ProxSet::shell(center, radius, radius)
    }

    pub fn ball_complement(center: Point, radius: f64) -> Result<Self> {
        let s = ProxSet::BallComplement { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn preimage(d: DMatrix<f64>, inner: ProxSet) -> Result<Self> {
        let s = ProxSet::LinearPreimage { d, inner: Box::new(inner) };
        s.validate()?;
        Ok(s)
    }

    pub fn product(left: ProxSet, right: ProxSet) -> Result<Self> {
        let s = ProxSet::Product(Box::new(left), Box::new(right));
        s.validate()?;
        Ok(s)
    }

    pub fn polyhedral(h: DMatrix<f64>, c: Point) -> Result<Self> {
        let s = ProxSet::LevelSetPolyhedral { h, c };
        s.validate()?;
        Ok(s)
    }

    /// Whole space R^n, written as an empty system of inequalities.
    pub fn whole_space(n: usize) -> Self {
        ProxSet::LevelSetPolyhedral { h: DMatrix::zeros(0, n), c: Point::zeros(0) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSet(msg.to_string()));
        match self {
            ProxSet::Ball { center, radius } | ProxSet::BallComplement { center, radius } => {
                check_finite(center)?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad("radius must be positive and finite");
                }
            }
            ProxSet::Box { lower, upper } => {
                check_finite(lower)?;
                check_finite(upper)?;
                if lower.len() != upper.len() {
                    return bad("box bounds differ in dimension");
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
                    return bad("box lower bound exceeds upper bound");
                }
            }
            ProxSet::Orthant(m) => {
                if *m == 0 {
                    return bad("orthant dimension must be positive");
                }
            }
            ProxSet::SphereShell { center, r_in, r_out } => {
                check_finite(center)?;
                if !(*r_in > 0.0 && r_in <= r_out && r_out.is_finite()) {
                    return bad("shell radii must satisfy 0 < r_in <= r_out");
                }
            }
            ProxSet::LinearPreimage { d, inner } => {
                inner.validate()?;
                if d.nrows() != inner.dim() {
                    return bad("preimage map rows must match the inner dimension");
                }
                if d.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite);
                }
            }
            ProxSet::Product(l, r) => {
                l.validate()?;
                r.validate()?;
            }
            ProxSet::LevelSetPolyhedral { h, c } => {
                if h.nrows() != c.len() {
                    return bad("H rows must match the length of c");
                }
                if h.iter().chain(c.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite);
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ProxSet::Ball { center, .. }
            | ProxSet::BallComplement { center, .. }
            | ProxSet::SphereShell { center, .. } => center.len(),
            ProxSet::Box { lower, .. } => lower.len(),
            ProxSet::Orthant(m) => *m,
            ProxSet::LinearPreimage { d, .. } => d.ncols(),
            ProxSet::Product(l, r) => l.dim() + r.dim(),
            ProxSet::LevelSetPolyhedral { h, .. } => h.ncols(),
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            ProxSet::Ball { .. } | ProxSet::Box { .. } | ProxSet::Orthant(_) => true,
            ProxSet::LevelSetPolyhedral { .. } => true,
            ProxSet::SphereShell { .. } | ProxSet::BallComplement { .. } => false,
            ProxSet::LinearPreimage { inner, .. } => inner.is_convex(),
            ProxSet::Product(l, r) => l.is_convex() && r.is_convex(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ProxSet::Ball { .. } => "ball",
            ProxSet::Box { .. } => "box",
            ProxSet::Orthant(_) => "orthant",
            ProxSet::SphereShell { .. } => "shell",
            ProxSet::BallComplement { .. } => "ball_complement",
            ProxSet::LinearPreimage { .. } => "preimage",
            ProxSet::Product(..) => "product",
            ProxSet::LevelSetPolyhedral { .. } => "polyhedral",
        }
    }

    /// Inequality description (H, c) with C = {Hx + c ≥ 0}, for polyhedral kinds.
    pub fn as_polyhedron(&self) -> Option<(DMatrix<f64>, Point)> {
        match self {
            ProxSet::Orthant(m) => Some((DMatrix::identity(*m, *m), Point::zeros(*m))),
            ProxSet::Box { lower, upper } => {
                let n = lower.len();
                let mut h = DMatrix::zeros(2 * n, n);
                let mut c = Point::zeros(2 * n);
                for i in 0..n {
                    h[(i, i)] = 1.0;
                    c[i] = -lower[i];
                    h[(n + i, i)] = -1.0;
                    c[n + i] = upper[i];
                }
                Some((h, c))
            }
            ProxSet::LevelSetPolyhedral { h, c } => Some((h.clone(), c.clone())),
            ProxSet::Product(l, r) => {
                let (hl, cl) = l.as_polyhedron()?;
                let (hr, cr) = r.as_polyhedron()?;
                let mut h = DMatrix::zeros(hl.nrows() + hr.nrows(), hl.ncols() + hr.ncols());
                h.view_mut((0, 0), hl.shape()).copy_from(&hl);
                h.view_mut((hl.nrows(), hl.ncols()), hr.shape()).copy_from(&hr);
                let c = Point::from_iterator(cl.len() + cr.len(), cl.iter().chain(cr.iter()).copied());
                Some((h, c))
            }
            ProxSet::LinearPreimage { d, inner } => {
                let (h, c) = inner.as_polyhedron()?;
                Some((h * d, c))
            }
            _ => None,
        }
    }

    /// Prox-regularity constant r, `f64::INFINITY` for convex sets.
    pub fn prox_constant(&self) -> Result<f64> {
        match self {
            ProxSet::Ball { .. } | ProxSet::Box { .. } | ProxSet::Orthant(_) => Ok(f64::INFINITY),
            ProxSet::LevelSetPolyhedral { .. } => Ok(f64::INFINITY),
            ProxSet::SphereShell { r_in, .. } => Ok(*r_in),
            ProxSet::BallComplement { radius, .. } => Ok(*radius),
            ProxSet::Product(l, r) => Ok(l.prox_constant()?.min(r.prox_constant()?)),
            ProxSet::LinearPreimage { d, inner } => {
                let (top, least) = linalg::extreme_singular_values(d).ok_or(Error::SingularMap)?;
                let r_inner = inner.prox_constant()?;
                Ok(r_inner * least / (top * top))
            }
        }
    }

    /// Nearest point of C to `x`. Errors with `TubeViolation` when it is not unique.
    pub fn project(&self, x: &Point) -> Result<Point> {
        let n = self.nearest(x)?;
        if n.ambiguous {
            return Err(Error::TubeViolation);
        }
        Ok(n.point)
    }

    /// Distance from `x` to C. Defined even where the nearest point is not unique.
    pub fn distance(&self, x: &Point) -> Result<f64> {
        let n = self.nearest(x)?;
        Ok((x - n.point).norm())
    }

    pub fn contains(&self, x: &Point, tol_mem: f64) -> bool {
        match self.distance(x) {
            Ok(d) => d <= tol_mem,
            Err(_) => false,
        }
    }

    fn nearest(&self, x: &Point) -> Result<Nearest> {
        check_dim(self.dim(), x)?;
        check_finite(x)?;
        match self {
            ProxSet::Ball { center, radius } => {
                let off = x - center;
                let d = off.norm();
                if d <= *radius {
                    Ok(Nearest::unique(x.clone()))
                } else {
                    Ok(Nearest::unique(center + off * (*radius / d)))
                }
            }
            ProxSet::Box { lower, upper } => Ok(Nearest::unique(Point::from_iterator(
                x.len(),
                x.iter().zip(lower.iter().zip(upper.iter())).map(|(v, (l, u))| v.clamp(*l, *u)),
            ))),
            ProxSet::Orthant(_) => Ok(Nearest::unique(x.map(|v| v.max(0.0)))),
            ProxSet::SphereShell { center, r_in, r_out } => {
                let off = x - center;
                let d = off.norm();
                if d > *r_out {
                    Ok(Nearest::unique(center + off * (*r_out / d)))
                } else if d >= *r_in {
                    Ok(Nearest::unique(x.clone()))
                } else {
                    Ok(radial_outward(center, &off, d, *r_in))
                }
            }
            ProxSet::BallComplement { center, radius } => {
                let off = x - center;
                let d = off.norm();
                if d >= *radius {
                    Ok(Nearest::unique(x.clone()))
                } else {
                    Ok(radial_outward(center, &off, d, *radius))
                }
            }
            ProxSet::Product(l, r) => {
                let nl = l.dim();
                let a = l.nearest(&x.rows(0, nl).into_owned())?;
                let b = r.nearest(&x.rows(nl, x.len() - nl).into_owned())?;
                Ok(Nearest { point: concat(&a.point, &b.point), ambiguous: a.ambiguous || b.ambiguous })
            }
            ProxSet::LevelSetPolyhedral { h, c } => Ok(Nearest::unique(polyhedral_project(h, c, x)?)),
            ProxSet::LinearPreimage { d, inner } => preimage_nearest(d, inner, x),
        }
    }

    /// Projections of `v` onto the normal and tangent cones of C at `x`.
    pub fn cone_project(&self, x: &Point, v: &Point, h_fd: f64) -> Result<ConeProjection> {
        check_dim(self.dim(), x)?;
        check_dim(self.dim(), v)?;
        check_finite(v)?;
        if !(h_fd > 0.0) {
            return Err(Error::InvalidArgument("h_fd must be positive".into()));
        }
        let dist = self.distance(x)?;
        if dist > TOL_MEM {
            return Err(Error::NotInSet { distance: dist });
        }
        self.cone_project_unchecked(x, v, h_fd)
    }

    fn cone_project_unchecked(&self, x: &Point, v: &Point, h_fd: f64) -> Result<ConeProjection> {
        match self {
            ProxSet::Ball { center, radius } => {
                let off = x - center;
                let d = off.norm();
                if d < radius - TOL_BOUNDARY {
                    return Ok(ConeProjection::interior(v));
                }
                Ok(half_line_split(v, &(off / d)))
            }
            ProxSet::BallComplement { center, radius } => {
                let off = x - center;
                let d = off.norm();
                if d > radius + TOL_BOUNDARY {
                    return Ok(ConeProjection::interior(v));
                }
                Ok(half_line_split(v, &(-off / d)))
            }
            ProxSet::SphereShell { center, r_in, r_out } => {
                let off = x - center;
                let d = off.norm();
                let u = off / d;
                let inner = d < r_in + TOL_BOUNDARY;
                let outer = d > r_out - TOL_BOUNDARY;
                if inner && outer {
                    let a = v.dot(&u);
                    Ok(split_from_normal(v, u * a))
                } else if inner {
                    Ok(half_line_split(v, &(-u)))
                } else if outer {
                    Ok(half_line_split(v, &u))
                } else {
                    Ok(ConeProjection::interior(v))
                }
            }
            ProxSet::Box { lower, upper } => {
                let mut normal = Point::zeros(v.len());
                for i in 0..v.len() {
                    let at_lower = x[i] - lower[i] < TOL_BOUNDARY;
                    let at_upper = upper[i] - x[i] < TOL_BOUNDARY;
                    normal[i] = match (at_lower, at_upper) {
                        (true, true) => v[i],
                        (true, false) => v[i].min(0.0),
                        (false, true) => v[i].max(0.0),
                        (false, false) => 0.0,
                    };
                }
                Ok(split_from_normal(v, normal))
            }
            ProxSet::Orthant(_) => {
                let normal = Point::from_iterator(
                    v.len(),
                    x.iter().zip(v.iter()).map(|(xi, vi)| if *xi < TOL_BOUNDARY { vi.min(0.0) } else { 0.0 }),
                );
                Ok(split_from_normal(v, normal))
            }
            ProxSet::Product(l, r) => {
                let nl = l.dim();
                let nr = x.len() - nl;
                let a = l.cone_project_unchecked(&x.rows(0, nl).into_owned(), &v.rows(0, nl).into_owned(), h_fd)?;
                let b = r.cone_project_unchecked(&x.rows(nl, nr).into_owned(), &v.rows(nl, nr).into_owned(), h_fd)?;
                Ok(ConeProjection::from_tangent(v, concat(&a.tangent_part, &b.tangent_part)))
            }
            ProxSet::LevelSetPolyhedral { h, c } => Ok(polyhedral_cone_project(h, c, x, v)),
            ProxSet::LinearPreimage { d, inner } => {
                let (d, inner) = flatten_preimage(d, inner);
                if let Some((h, c)) = inner.as_polyhedron() {
                    return Ok(polyhedral_cone_project(&(h * &d), &c, x, v));
                }
                if let Some(q) = Quadric::of(&d, &inner) {
                    if let Some(split) = q.cone_project(x, v) {
                        return Ok(split);
                    }
                }
                self.fd_cone_project(x, v, h_fd)
            }
        }
    }

    /// Tangent projection from the directional derivative of the projection, one Richardson halving.
    fn fd_cone_project(&self, x: &Point, v: &Point, h_fd: f64) -> Result<ConeProjection> {
        let scale = v.norm();
        if scale == 0.0 {
            return Ok(ConeProjection::interior(v));
        }
        let step = h_fd / scale.max(1.0);
        let quotient = |s: f64| -> Result<Point> { Ok((self.project(&(x + v * s))? - x) / s) };
        let coarse = quotient(step)?;
        let fine = quotient(step * 0.5)?;
        let refined = &fine * 2.0 - &coarse;
        let gap = (&refined - &fine).norm();
        let split = ConeProjection::from_tangent(v, refined);
        if gap > 1e-2 * (1.0 + scale) || split.residual > TOL_ORTH * (1.0 + scale * scale) {
            return Err(Error::NonconvergedFD { gap: gap.max(split.residual) });
        }
        Ok(split)
    }

    /// Uniform sample of C within the axis-aligned box `[lo, hi]` by rejection.
    pub fn sample_in_box<R: Rng>(&self, lo: &Point, hi: &Point, count: usize, rng: &mut R) -> Vec<Point> {
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count && attempts < count * 10_000 {
            attempts += 1;
            let p = sampling::uniform_box(lo, hi, rng);
            if self.contains(&p, TOL_MEM) {
                out.push(p);
            }
        }
        out
    }
}

fn concat(a: &Point, b: &Point) -> Point {
    Point::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn radial_outward(center: &Point, off: &Point, d: f64, radius: f64) -> Nearest {
    if d <= AMBIGUITY * radius {
        let mut e = Point::zeros(off.len());
        e[0] = radius;
        return Nearest { point: center + e, ambiguous: true };
    }
    Nearest::unique(center + off * (radius / d))
}

/// Moreau split of `v` for a normal cone that is the ray spanned by the unit vector `n`.
fn half_line_split(v: &Point, n: &Point) -> ConeProjection {
    let a = v.dot(n);
    if a <= 0.0 {
        return ConeProjection::from_tangent(v, v.clone());
    }
    split_from_normal(v, n * a)
}

fn split_from_normal(v: &Point, normal: Point) -> ConeProjection {
    let tangent = v - &normal;
    let residual = normal.dot(&tangent).abs();
    ConeProjection { normal_part: normal, tangent_part: tangent, residual }
}

fn polyhedral_cone_project(h: &DMatrix<f64>, c: &Point, x: &Point, v: &Point) -> ConeProjection {
    let g = h * x + c;
    let active: Vec<usize> = (0..h.nrows())
        .filter(|&i| {
            let row_norm = h.row(i).norm();
            row_norm > 0.0 && g[i] < TOL_BOUNDARY * row_norm
        })
        .collect();
    if active.is_empty() {
        return ConeProjection::interior(v);
    }
    let ha = h.select_rows(active.iter());
    let tangent = polyhedral_project(&ha, &Point::zeros(active.len()), v)
        .expect("tangent cone contains the origin, projection always exists");
    ConeProjection::from_tangent(v, tangent)
}

/// Euclidean projection onto {y : Hy + c ≥ 0} by enumeration of independent active sets.
pub fn polyhedral_project(h: &DMatrix<f64>, c: &Point, x: &Point) -> Result<Point> {
    let p = h.nrows();
    let n = h.ncols();
    let scale = 1.0 + x.norm() + c.amax();
    let feasible_tol = 1e-12 * scale;
    let slack = h * x + c;
    if slack.iter().all(|&s| s >= -feasible_tol) {
        return Ok(x.clone());
    }
    let violated: Vec<usize> = (0..p).filter(|&i| slack[i] < -feasible_tol).collect();
    let max_k = p.min(n);
    let mut best: Option<(f64, Point)> = None;
    for k in 1..=max_k {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            if combo.iter().any(|i| violated.contains(i)) {
                if let Some(y) = try_active_set(h, c, x, &combo, feasible_tol) {
                    let d = (&y - x).norm();
                    if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        best = Some((d, y));
                    }
                }
            }
            if !next_combination(&mut combo, p) {
                break;
            }
        }
        if best.is_some() {
            break;
        }
    }
    best.map(|(_, y)| y).ok_or_else(|| Error::InvalidSet("polyhedron is empty".into()))
}

fn try_active_set(h: &DMatrix<f64>, c: &Point, x: &Point, active: &[usize], tol: f64) -> Option<Point> {
    let ha = h.select_rows(active.iter());
    let ca = Point::from_iterator(active.len(), active.iter().map(|&i| c[i]));
    let gram = &ha * ha.transpose();
    let chol = gram.clone().cholesky()?;
    if linalg::min_eigenvalue(&gram) <= 1e-12 * linalg::max_eigenvalue(&gram) {
        return None;
    }
    let lambda = chol.solve(&(-(&ha * x + ca)));
    if lambda.iter().any(|&l| l < -tol) {
        return None;
    }
    let y = x + ha.transpose() * lambda;
    let slack = h * &y + c;
    if slack.iter().any(|&s| s < -tol) {
        return None;
    }
    Some(y)
}

fn next_combination(combo: &mut [usize], p: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < p - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn flatten_preimage(d: &DMatrix<f64>, inner: &ProxSet) -> (DMatrix<f64>, ProxSet) {
    match inner {
        ProxSet::LinearPreimage { d: d2, inner: deeper } => flatten_preimage(&(d2 * d), deeper),
        other => (d.clone(), other.clone()),
    }
}

fn preimage_nearest(d: &DMatrix<f64>, inner: &ProxSet, x: &Point) -> Result<Nearest> {
    let (d, inner) = flatten_preimage(d, inner);
    if let Some((h, c)) = inner.as_polyhedron() {
        return Ok(Nearest::unique(polyhedral_project(&(h * &d), &c, x)?));
    }
    if let Some(q) = Quadric::of(&d, &inner) {
        return q.nearest(x);
    }
    Ok(Nearest::unique(preimage_admm(&d, &inner, x)?))
}

/// Splitting iteration for {y : Dy ∈ S} when no closed form is known.
fn preimage_admm(d: &DMatrix<f64>, inner: &ProxSet, x: &Point) -> Result<Point> {
    let n = d.ncols();
    let rho = 1.0;
    let sys = DMatrix::identity(n, n) + d.transpose() * d * rho;
    let chol = sys.cholesky().ok_or(Error::SingularMap)?;
    let mut y = x.clone();
    let mut s = inner.project(&(d * &y))?;
    let mut u = Point::zeros(d.nrows());
    for _ in 0..50_000 {
        y = chol.solve(&(x + d.transpose() * (&s - &u) * rho));
        let dy = d * &y;
        let s_next = inner.project(&(&dy + &u))?;
        let primal = (&dy - &s_next).norm();
        let dual = (&s_next - &s).norm();
        u += &dy - &s_next;
        s = s_next;
        if primal < 1e-14 && dual < 1e-14 {
            break;
        }
    }
    Ok(y)
}

/// Preimage of a ball, ball complement or shell: level sets of g(x) = ‖Dx − c‖.
struct Quadric {
    d: DMatrix<f64>,
    center: Point,
    lo: Option<f64>,
    hi: Option<f64>,
    v_k: DMatrix<f64>,
    sigma: Vec<f64>,
    c0: Point,
    c_perp_sq: f64,
}

impl Quadric {
    fn of(d: &DMatrix<f64>, inner: &ProxSet) -> Option<Quadric> {
        let (center, lo, hi) = match inner {
            ProxSet::Ball { center, radius } => (center.clone(), None, Some(*radius)),
            ProxSet::BallComplement { center, radius } => (center.clone(), Some(*radius), None),
            ProxSet::SphereShell { center, r_in, r_out } => (center.clone(), Some(*r_in), Some(*r_out)),
            _ => return None,
        };
        let svd = d.clone().svd(true, true);
        let u = svd.u.as_ref()?;
        let vt = svd.v_t.as_ref()?;
        let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 {
            return None;
        }
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > linalg::RANK_TOL * top).collect();
        let sigma: Vec<f64> = keep.iter().map(|&i| svd.singular_values[i]).collect();
        let u_k = u.select_columns(keep.iter());
        let v_k = vt.select_rows(keep.iter()).transpose();
        let proj_c = u_k.transpose() * &center;
        let c0 = Point::from_iterator(sigma.len(), proj_c.iter().zip(sigma.iter()).map(|(p, s)| p / s));
        let c_perp_sq = (center.norm_squared() - proj_c.norm_squared()).max(0.0);
        Some(Quadric { d: d.clone(), center, lo, hi, v_k, sigma, c0, c_perp_sq })
    }

    fn g(&self, x: &Point) -> f64 {
        (&self.d * x - &self.center).norm()
    }

    fn nearest(&self, x: &Point) -> Result<Nearest> {
        let g = self.g(x);
        let target = match (self.lo, self.hi) {
            (Some(lo), _) if g < lo => lo,
            (_, Some(hi)) if g > hi => hi,
            _ => return Ok(Nearest::unique(x.clone())),
        };
        let rho_sq = target * target - self.c_perp_sq;
        if rho_sq <= 0.0 {
            return Err(Error::InvalidSet("preimage level set is empty".into()));
        }
        let x_r = self.v_k.transpose() * x;
        let p = &x_r - &self.c0;
        let lambda: Vec<f64> = self.sigma.iter().map(|s| s * s).collect();
        let (u, ambiguous) = nearest_on_ellipsoid(&lambda, &p, rho_sq);
        let y = x + &self.v_k * (u + &self.c0 - x_r);
        Ok(Nearest { point: y, ambiguous })
    }

    fn cone_project(&self, x: &Point, v: &Point) -> Option<ConeProjection> {
        let residual = &self.d * x - &self.center;
        let g = residual.norm();
        let grad = self.d.transpose() * &residual;
        let gn = grad.norm();
        let top = self.sigma.iter().copied().fold(0.0, f64::max);
        let band = TOL_BOUNDARY * top;
        let at_lo = self.lo.is_some_and(|lo| g < lo + band);
        let at_hi = self.hi.is_some_and(|hi| g > hi - band);
        if !at_lo && !at_hi {
            return Some(ConeProjection::interior(v));
        }
        if gn <= 1e-14 * (1.0 + g) {
            return None;
        }
        let n = if at_lo { -grad / gn } else { grad / gn };
        Some(half_line_split(v, &n))
    }
}

/// Nearest point to `p` on {u : Σ λ_i u_i² = rho_sq}; flags a non-unique answer.
fn nearest_on_ellipsoid(lambda: &[f64], p: &Point, rho_sq: f64) -> (Point, bool) {
    let k = lambda.len();
    let lmax = lambda.iter().copied().fold(0.0, f64::max);
    let top_group: Vec<usize> = (0..k).filter(|&i| lambda[i] >= lmax * (1.0 - 1e-12)).collect();
    let phi = |t: f64| -> f64 {
        (0..k).map(|i| lambda[i] * p[i] * p[i] / (1.0 + t * lambda[i]).powi(2)).sum::<f64>() - rho_sq
    };
    let scale = (p.norm_squared() + rho_sq / lmax).max(f64::MIN_POSITIVE);
    let top_mass: f64 = top_group.iter().map(|&i| p[i] * p[i]).sum();
    let left = -1.0 / lmax;
    let mut ambiguous = false;
    let mut free_top = 0.0;
    let t = if top_mass > 1e-24 * scale {
        bisect_decreasing(&phi, left, phi(0.0))
    } else {
        let rest: f64 = (0..k)
            .filter(|i| !top_group.contains(i))
            .map(|i| lambda[i] * p[i] * p[i] / (1.0 - lambda[i] / lmax).powi(2))
            .sum();
        if rest > rho_sq * (1.0 + 1e-12) {
            bisect_decreasing(&phi, left, phi(0.0))
        } else {
            let mass = (rho_sq - rest) / lmax;
            if mass > 1e-24 * scale {
                ambiguous = true;
                free_top = mass.sqrt();
            }
            left
        }
    };
    let mut u = Point::zeros(k);
    for i in 0..k {
        let denom = 1.0 + t * lambda[i];
        if top_group.contains(&i) && denom.abs() < 1e-300 {
            u[i] = 0.0;
        } else {
            u[i] = p[i] / denom;
        }
    }
    if free_top > 0.0 {
        u[top_group[0]] = free_top;
    }
    let level: f64 = (0..k).map(|i| lambda[i] * u[i] * u[i]).sum();
    if level > 0.0 {
        u *= (rho_sq / level).sqrt();
    }
    (u, ambiguous)
}

/// Root of a decreasing function on (left, ∞); `at_zero` is its value at 0.
fn bisect_decreasing(phi: &dyn Fn(f64) -> f64, left: f64, at_zero: f64) -> f64 {
    let (mut a, mut b) = if at_zero > 0.0 {
        let mut b = 1.0;
        while phi(b) > 0.0 && b < 1e300 {
            b *= 2.0;
        }
        (0.0, b)
    } else {
        (left, 0.0)
    };
    for _ in 0..2000 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if phi(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

#[derive(Clone, Debug, Default)]
pub struct HypomonotonicityReport {
    pub pairs_checked: usize,
    pub worst_slack: f64,
    pub worst_pair: Option<usize>,
    /// (pair index, slack) for every violating pair.
    pub violations: Vec<(usize, f64)>,
}

/// Checks ⟨x₁−x₂, ξ₁−ξ₂⟩ ≥ −(m/r)‖x₁−x₂‖² for normals ξᵢ of norm m built from random directions.
pub fn hypomonotonicity_check(
    set: &ProxSet,
    samples: &[(Point, Point)],
    m: f64,
    directions: usize,
    seed: u64,
) -> Result<HypomonotonicityReport> {
    let r = set.prox_constant()?;
    let shift = if r.is_infinite() { 0.0 } else { m / r };
    let n = set.dim();
    let mut rng = sampling::rng(seed);
    let mut report = HypomonotonicityReport { worst_slack: f64::INFINITY, ..Default::default() };
    let capped = |x: &Point, dir: &Point| -> Result<Point> {
        let normal = set.cone_project(x, dir, H_FD)?.normal_part;
        let norm = normal.norm();
        Ok(if norm > 0.0 { normal * (m / norm) } else { normal })
    };
    for (idx, (x1, x2)) in samples.iter().enumerate() {
        let mut worst = f64::INFINITY;
        for _ in 0..directions.max(1) {
            let xi1 = capped(x1, &sampling::unit_vector(n, &mut rng))?;
            let xi2 = capped(x2, &sampling::unit_vector(n, &mut rng))?;
            let dx = x1 - x2;
            let slack = dx.dot(&(xi1 - xi2)) + shift * dx.norm_squared();
            worst = worst.min(slack);
        }
        report.pairs_checked += 1;
        let tol = 1e-9 * (1.0 + m * (x1 - x2).norm_squared());
        if worst < -tol {
            report.violations.push((idx, worst));
        }
        if worst < report.worst_slack {
            report.worst_slack = worst;
            report.worst_pair = Some(idx);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[f64]) -> Point {
        Point::from_column_slice(v)
    }

    fn unit_ball() -> ProxSet {
        ProxSet::ball(pt(&[0.0, 0.0]), 1.0).unwrap()
    }

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&pt(v))
    }

    fn close(a: &Point, b: &Point, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    /// Nearest points of a curve given by a dense parameter scan.
    fn scan_nearest(curve: impl Fn(f64) -> Point, x: &Point, steps: usize) -> (Point, f64) {
        let mut best = (curve(0.0), f64::INFINITY);
        for i in 0..steps {
            let t = std::f64::consts::TAU * i as f64 / steps as f64;
            let q = curve(t);
            let d = (&q - x).norm();
            if d < best.1 {
                best = (q, d);
            }
        }
        best
    }

    #[test]
    fn ball_and_orthant_projections() {
        assert_eq!(unit_ball().project(&pt(&[2.0, 0.0])).unwrap(), pt(&[1.0, 0.0]));
        assert_eq!(ProxSet::Orthant(2).project(&pt(&[-1.0, 3.0])).unwrap(), pt(&[0.0, 3.0]));
    }

    #[test]
    fn ball_complement_projection_matches_circle_scan() {
        let set = ProxSet::ball_complement(pt(&[0.0, 0.0]), 1.0).unwrap();
        let x = pt(&[0.5, 0.0]);
        let y = set.project(&x).unwrap();
        let steps = (std::f64::consts::TAU / 1e-4) as usize;
        let (oracle, _) = scan_nearest(|t| pt(&[t.cos(), t.sin()]), &x, steps);
        assert!(close(&y, &pt(&[1.0, 0.0]), 1e-15));
        assert!(close(&y, &oracle, 1e-4));
    }

    #[test]
    fn center_of_complement_is_a_tube_violation() {
        let set = ProxSet::ball_complement(pt(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(set.project(&pt(&[0.0, 0.0])), Err(Error::TubeViolation));
        assert!((set.distance(&pt(&[0.0, 0.0])).unwrap() - 1.0).abs() < 1e-15);
        assert!(!set.contains(&pt(&[0.0, 0.0]), TOL_MEM));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert_eq!(
            unit_ball().project(&pt(&[1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        );
    }

    #[test]
    fn distances() {
        let b = ProxSet::cuboid(pt(&[0.0, 0.0]), pt(&[1.0, 1.0])).unwrap();
        assert_eq!(b.distance(&pt(&[2.0, 0.0])).unwrap(), 1.0);
        assert_eq!(unit_ball().distance(&pt(&[0.0, 0.0])).unwrap(), 0.0);
        let shell = ProxSet::shell(pt(&[0.0, 0.0]), 1.0, 2.0).unwrap();
        let x = pt(&[3.0, 0.0]);
        let d = shell.distance(&x).unwrap();
        // Grid over the shell in polar coordinates.
        let mut oracle = f64::INFINITY;
        for i in 0..=200 {
            let rad = 1.0 + i as f64 / 200.0;
            for j in 0..2000 {
                let t = std::f64::consts::TAU * j as f64 / 2000.0;
                oracle = oracle.min((pt(&[rad * t.cos(), rad * t.sin()]) - &x).norm());
            }
        }
        assert!((d - 1.0).abs() < 1e-15);
        assert!((d - oracle).abs() < 1e-6);
    }

    #[test]
    fn membership() {
        assert!(unit_ball().contains(&pt(&[1.0, 0.0]), 1e-9));
        assert!(!unit_ball().contains(&pt(&[1.0 + 1e-3, 0.0]), 1e-9));
        let pre = ProxSet::preimage(diag(&[2.0, 1.0]), ProxSet::Orthant(2)).unwrap();
        let x = pt(&[-1e-12, 5.0]);
        let dx = diag(&[2.0, 1.0]) * &x;
        // Sign oracle: the image violates the orthant by 2e-12 in the first coordinate only.
        assert!(dx[0] < 0.0 && dx[0] > -1e-11 && dx[1] > 0.0);
        assert!(pre.contains(&x, 1e-9));
    }

    #[test]
    fn cone_projection_examples() {
        let ball = unit_ball();
        let cp = ball.cone_project(&pt(&[1.0, 0.0]), &pt(&[1.0, 1.0]), H_FD).unwrap();
        assert!(close(&cp.normal_part, &pt(&[1.0, 0.0]), 1e-15));
        assert!(close(&cp.tangent_part, &pt(&[0.0, 1.0]), 1e-15));
        let cp = ball.cone_project(&pt(&[0.0, 0.0]), &pt(&[3.0, -2.0]), H_FD).unwrap();
        assert_eq!(cp.normal_part, pt(&[0.0, 0.0]));
        assert_eq!(cp.tangent_part, pt(&[3.0, -2.0]));
    }

    #[test]
    fn orthant_cone_projection_matches_brute_force() {
        let x = pt(&[0.0, 1.0]);
        let v = pt(&[-1.0, 3.0]);
        let cp = ProxSet::Orthant(2).cone_project(&x, &v, H_FD).unwrap();
        // Brute force: tangent cone {w₁ ≥ 0} sampled at 1e-3 around v.
        let mut best = (pt(&[0.0, 0.0]), f64::INFINITY);
        for i in 0..=4000 {
            for j in 0..=100 {
                let w = pt(&[i as f64 * 1e-3, 2.95 + j as f64 * 1e-3]);
                let d = (&v - &w).norm();
                if d < best.1 {
                    best = (w, d);
                }
            }
        }
        assert!(close(&cp.tangent_part, &best.0, 1e-3));
        assert!(close(&cp.normal_part, &pt(&[-1.0, 0.0]), 1e-15));
        assert!(close(&cp.tangent_part, &pt(&[0.0, 3.0]), 1e-15));
    }

    #[test]
    fn prox_constants() {
        let shell = ProxSet::shell(pt(&[0.0, 0.0]), 1.0, 2.0).unwrap();
        let id = ProxSet::preimage(DMatrix::identity(2, 2), shell.clone()).unwrap();
        assert!((id.prox_constant().unwrap() - 1.0).abs() < 1e-15);
        let stretched = ProxSet::preimage(diag(&[2.0, 1.0]), shell.clone()).unwrap();
        assert!((stretched.prox_constant().unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(unit_ball().prox_constant().unwrap(), f64::INFINITY);
        let zero = ProxSet::LinearPreimage { d: DMatrix::zeros(2, 2), inner: Box::new(shell) };
        assert_eq!(zero.prox_constant(), Err(Error::SingularMap));
        let prod = ProxSet::product(
            ProxSet::ball_complement(pt(&[0.0]), 3.0).unwrap(),
            ProxSet::shell(pt(&[0.0, 0.0]), 0.5, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(prod.prox_constant().unwrap(), 0.5);
    }

    #[test]
    fn stretched_shell_projection_matches_ellipse_scan() {
        let set = ProxSet::preimage(diag(&[2.0, 1.0]), ProxSet::shell(pt(&[0.0, 0.0]), 1.0, 2.0).unwrap()).unwrap();
        let inner_ellipse = |t: f64| pt(&[0.5 * t.cos(), t.sin()]);
        let outer_ellipse = |t: f64| pt(&[t.cos(), 2.0 * t.sin()]);
        for x in [pt(&[0.1, 0.3]), pt(&[0.3, -0.2]), pt(&[1.2, 1.0]), pt(&[-0.05, 0.01])] {
            let y = set.project(&x).unwrap();
            let (a, da) = scan_nearest(inner_ellipse, &x, 200_000);
            let (b, db) = scan_nearest(outer_ellipse, &x, 200_000);
            let (oracle, od) = if set.contains(&x, TOL_MEM) { (x.clone(), 0.0) } else if da < db { (a, da) } else { (b, db) };
            assert!(close(&y, &oracle, 1e-4), "{x:?}: {y:?} vs {oracle:?}");
            assert!(((&y - &x).norm() - od).abs() < 1e-8);
        }
        // Center of the ellipse: two nearest points (±0.5, 0).
        assert_eq!(set.project(&pt(&[0.0, 0.0])), Err(Error::TubeViolation));
    }

    #[test]
    fn polyhedral_projection_onto_triangle() {
        // {x ≥ 0, y ≥ 0, 1 − x − y ≥ 0}
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0]);
        let c = pt(&[0.0, 0.0, 1.0]);
        let set = ProxSet::polyhedral(h, c).unwrap();
        assert!(close(&set.project(&pt(&[1.0, 1.0])).unwrap(), &pt(&[0.5, 0.5]), 1e-15));
        assert!(close(&set.project(&pt(&[2.0, -1.0])).unwrap(), &pt(&[1.0, 0.0]), 1e-15));
        assert!(close(&set.project(&pt(&[-1.0, -1.0])).unwrap(), &pt(&[0.0, 0.0]), 1e-15));
        let cp = set.cone_project(&pt(&[1.0, 0.0]), &pt(&[1.0, -1.0]), H_FD).unwrap();
        assert!(close(&cp.tangent_part, &pt(&[0.0, 0.0]), 1e-15));
        let cp = set.cone_project(&pt(&[0.5, 0.5]), &pt(&[0.0, 1.0]), H_FD).unwrap();
        assert!(close(&cp.tangent_part, &pt(&[-0.5, 0.5]), 1e-15));
    }

    #[test]
    fn fd_fallback_agrees_with_closed_form() {
        let x = pt(&[0.5, 0.0]);
        let v = pt(&[1.0, 0.7]);
        let ball = ProxSet::ball(pt(&[0.0, 0.0]), 1.0).unwrap();
        let pre = ProxSet::preimage(diag(&[2.0, 1.0]), ball).unwrap();
        let closed = pre.cone_project(&x, &v, H_FD).unwrap();
        let fd = pre.fd_cone_project(&x, &v, H_FD).unwrap();
        assert!(close(&closed.tangent_part, &fd.tangent_part, 1e-6));
        assert!(close(&closed.normal_part, &pt(&[1.0, 0.0]), 1e-12));
    }

    #[test]
    fn admm_fallback_on_product_preimage() {
        let inner = ProxSet::product(ProxSet::ball(pt(&[0.0]), 1.0).unwrap(), ProxSet::Orthant(1)).unwrap();
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let set = ProxSet::preimage(d, inner).unwrap();
        // C = {|x + y| ≤ 1, y ≥ 0}; nearest point of (2, 1) is (0.5, 0.5)... checked by grid.
        let x = pt(&[2.0, 1.0]);
        let y = set.project(&x).unwrap();
        let mut best = (pt(&[0.0, 0.0]), f64::INFINITY);
        for i in 0..=1000 {
            for j in 0..=1000 {
                let q = pt(&[-2.0 + 4.0 * i as f64 / 1000.0, 2.0 * j as f64 / 1000.0]);
                if (q[0] + q[1]).abs() <= 1.0 && (&q - &x).norm() < best.1 {
                    best = (q.clone(), (&q - &x).norm());
                }
            }
        }
        assert!(close(&y, &best.0, 5e-3));
        assert!(set.contains(&y, 1e-9));
    }

    #[test]
    fn hypomonotonicity_examples() {
        let ball = unit_ball();
        let boundary: Vec<(Point, Point)> = (0..50)
            .map(|i| {
                let a = i as f64 * 0.37;
                let b = i as f64 * 1.91 + 0.2;
                (pt(&[a.cos(), a.sin()]), pt(&[b.cos(), b.sin()]))
            })
            .collect();
        let rep = hypomonotonicity_check(&ball, &boundary, 1.0, 8, 7).unwrap();
        assert!(rep.violations.is_empty());

        let comp = ProxSet::ball_complement(pt(&[0.0, 0.0]), 1.0).unwrap();
        // Exhaustive angle scan with inward normals of norm m: the worst slack is 0 at antipodes.
        let mut worst = f64::INFINITY;
        let mut k = 0.0;
        while k < std::f64::consts::TAU {
            let x1 = pt(&[1.0, 0.0]);
            let x2 = pt(&[k.cos(), k.sin()]);
            let dx = &x1 - &x2;
            let slack = dx.dot(&(-&x1 + &x2)) + dx.norm_squared();
            worst = worst.min(slack);
            k += 1e-3;
        }
        assert!(worst.abs() < 1e-12);
        let antipodal = vec![(pt(&[1.0, 0.0]), pt(&[-1.0, 0.0]))];
        let rep = hypomonotonicity_check(&comp, &antipodal, 1.0, 64, 3).unwrap();
        assert!(rep.violations.is_empty());
        assert!(rep.worst_slack.abs() < 1e-12);

        let shell = ProxSet::shell(pt(&[0.0, 0.0]), 1.0, 2.0).unwrap();
        let mut rng = sampling::rng(11);
        let pairs: Vec<(Point, Point)> = (0..100)
            .map(|_| {
                let on = |rng: &mut rand_chacha::ChaCha8Rng| {
                    let u = sampling::unit_vector(2, rng);
                    if rng.gen_bool(0.5) { u } else { u * 2.0 }
                };
                (on(&mut rng), on(&mut rng))
            })
            .collect();
        let rep = hypomonotonicity_check(&shell, &pairs, 1.0, 8, 5).unwrap();
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    }
}
