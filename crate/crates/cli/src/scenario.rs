//! Scenario files: line-oriented `key value...` entries with nested `name { ... }` blocks.
//!
//! Vectors are whitespace separated; matrices are row-major with `;` between rows. `#` starts a comment.

use std::path::Path;

use nalgebra::DMatrix;
use proxdyn::lyapunov::{Domain, LyapunovCandidate, SamplerSpec};
use proxdyn::observer::{self, TransformedSystem};
use proxdyn::observer::{LipschitzMap, LureSystem};
use proxdyn::solver::{IntegratorConfig, Scheme};
use proxdyn::{Point, ProxSet, VectorField};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn parse_err<T>(line: usize, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Parse { line, message: message.into() })
}

fn invalid<T>(field: &str, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Validation { field: field.into(), message: message.into() })
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub key: String,
    pub line: usize,
    pub value: Value,
}

#[derive(Clone, Debug)]
pub enum Value {
    Tokens(Vec<String>),
    Block(Block),
}

#[derive(Clone, Debug, Default)]
pub struct Block {
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// Builds the entry tree, rejecting unbalanced braces and duplicate keys.
pub fn parse_tree(text: &str) -> Result<Block, ScenarioError> {
    let mut stack: Vec<(String, Block)> = vec![(String::new(), Block { line: 0, entries: vec![] })];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content == "}" {
            if stack.len() == 1 {
                return parse_err(line, "unmatched '}'");
            }
            let (key, block) = stack.pop().expect("checked length");
            let parent = &mut stack.last_mut().expect("root stays").1;
            push_entry(parent, Entry { key, line: block.line, value: Value::Block(block) })?;
            continue;
        }
        let mut tokens: Vec<String> = content.split_whitespace().map(str::to_string).collect();
        let key = tokens.remove(0);
        if tokens.last().map(String::as_str) == Some("{") {
            if tokens.len() != 1 {
                return parse_err(line, format!("block '{key}' takes no inline values"));
            }
            stack.push((key, Block { line, entries: vec![] }));
            continue;
        }
        if tokens.iter().any(|t| t.contains('{') || t.contains('}')) {
            return parse_err(line, "braces must stand alone at the end of a line");
        }
        if tokens.is_empty() {
            return parse_err(line, format!("'{key}' has no value"));
        }
        push_entry(&mut stack.last_mut().expect("root stays").1, Entry { key, line, value: Value::Tokens(tokens) })?;
    }
    if stack.len() > 1 {
        let (key, block) = stack.pop().expect("checked length");
        return parse_err(block.line, format!("block '{key}' is not closed"));
    }
    Ok(stack.pop().expect("root").1)
}

fn push_entry(block: &mut Block, entry: Entry) -> Result<(), ScenarioError> {
    if let Some(prev) = block.entries.iter().find(|e| e.key == entry.key) {
        return parse_err(entry.line, format!("duplicate key '{}' (first on line {})", entry.key, prev.line));
    }
    block.entries.push(entry);
    Ok(())
}

impl Block {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn has(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn allow(&self, keys: &[&str]) -> Result<(), ScenarioError> {
        for e in &self.entries {
            if !keys.contains(&e.key.as_str()) {
                return parse_err(e.line, format!("unknown key '{}' (expected one of: {})", e.key, keys.join(", ")));
            }
        }
        Ok(())
    }

    fn entry(&self, key: &str) -> Result<&Entry, ScenarioError> {
        self.get(key).ok_or_else(|| ScenarioError::Parse { line: self.line, message: format!("missing '{key}'") })
    }

    fn tokens(&self, key: &str) -> Result<(&[String], usize), ScenarioError> {
        let e = self.entry(key)?;
        match &e.value {
            Value::Tokens(t) => Ok((t, e.line)),
            Value::Block(_) => parse_err(e.line, format!("'{key}' must be a value, not a block")),
        }
    }

    pub fn block(&self, key: &str) -> Result<&Block, ScenarioError> {
        let e = self.entry(key)?;
        match &e.value {
            Value::Block(b) => Ok(b),
            Value::Tokens(_) => parse_err(e.line, format!("'{key}' must be a block")),
        }
    }

    pub fn text(&self, key: &str) -> Result<String, ScenarioError> {
        let (t, line) = self.tokens(key)?;
        if t.len() != 1 {
            return parse_err(line, format!("'{key}' takes a single word"));
        }
        Ok(t[0].clone())
    }

    pub fn number(&self, key: &str) -> Result<f64, ScenarioError> {
        let v = self.vector(key)?;
        if v.len() != 1 {
            return parse_err(self.entry(key)?.line, format!("'{key}' takes a single number"));
        }
        Ok(v[0])
    }

    pub fn number_or(&self, key: &str, default: f64) -> Result<f64, ScenarioError> {
        if self.has(key) {
            self.number(key)
        } else {
            Ok(default)
        }
    }

    pub fn integer(&self, key: &str) -> Result<u64, ScenarioError> {
        let (t, line) = self.tokens(key)?;
        if t.len() != 1 {
            return parse_err(line, format!("'{key}' takes a single integer"));
        }
        t[0].parse::<u64>().or_else(|_| parse_err(line, format!("'{}' is not a nonnegative integer", t[0])))
    }

    pub fn vector(&self, key: &str) -> Result<Point, ScenarioError> {
        let (t, line) = self.tokens(key)?;
        let vals = t.iter().map(|s| parse_number(s, line)).collect::<Result<Vec<_>, _>>()?;
        Ok(Point::from_vec(vals))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, ScenarioError> {
        Ok(self.vector(key)?.iter().copied().collect())
    }

    pub fn matrix(&self, key: &str) -> Result<DMatrix<f64>, ScenarioError> {
        let (t, line) = self.tokens(key)?;
        parse_matrix(&t.join(" "), line)
    }
}

fn parse_number(s: &str, line: usize) -> Result<f64, ScenarioError> {
    let v = match s {
        "pi" => std::f64::consts::PI,
        "2pi" | "tau" => std::f64::consts::TAU,
        "inf" => f64::INFINITY,
        _ => s.parse::<f64>().or_else(|_| parse_err(line, format!("'{s}' is not a number")))?,
    };
    Ok(v)
}

pub fn parse_matrix(text: &str, line: usize) -> Result<DMatrix<f64>, ScenarioError> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|r| r.split_whitespace().map(|s| parse_number(s, line)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return parse_err(line, "matrix rows have different lengths");
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

/// Reference solutions for convergence studies.
#[derive(Clone, Debug, PartialEq)]
pub enum Exact {
    None,
    /// x₀ rotated by ωt; exact for rotations inside a ball centered at the origin.
    Rotation { omega: f64 },
    /// Π_C(x₀ + t f(x₀)); exact for constant fields on orthants, boxes and intervals.
    ProjectedRay,
    /// e^{at}x₀; exact while the linear flow stays in C.
    Exponential { rate: f64 },
}

impl Exact {
    pub fn evaluate(&self, set: &ProxSet, field: &VectorField, x0: &Point, t: f64) -> Option<Point> {
        match self {
            Exact::None => None,
            Exact::Rotation { omega } => {
                let (s, c) = (omega * t).sin_cos();
                Some(Point::from_vec(vec![c * x0[0] - s * x0[1], s * x0[0] + c * x0[1]]))
            }
            Exact::ProjectedRay => set.project(&(x0 + field.eval(x0) * t)).ok(),
            Exact::Exponential { rate } => Some(x0 * (rate * t).exp()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CertifySpec {
    pub candidate: LyapunovCandidate,
    pub sampler: SamplerSpec,
    pub starts: usize,
}

#[derive(Clone, Debug)]
pub struct InvarianceSpec {
    pub subset: ProxSet,
    pub sampler: SamplerSpec,
}

#[derive(Clone, Debug)]
pub struct ObserveSpec {
    pub delta: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub gain: DMatrix<f64>,
    pub output: DMatrix<f64>,
    pub observer_initial: Point,
}

#[derive(Clone, Debug)]
pub struct ConvergenceSpec {
    pub h_list: Vec<f64>,
    pub exact: Exact,
}

#[derive(Clone, Debug)]
pub struct LureSpec {
    pub system: LureSystem,
    pub p: DMatrix<f64>,
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct NdcsSpec {
    pub h: DMatrix<f64>,
    pub c: Point,
}

#[derive(Clone, Debug)]
pub struct RadiusSpec {
    pub delta: f64,
    pub epsilon: f64,
    pub lipschitz: f64,
    pub starts: usize,
    pub grid_step: f64,
}

#[derive(Clone, Debug)]
pub enum Task {
    Simulate,
    Certify(CertifySpec),
    Invariance(InvarianceSpec),
    Observe(ObserveSpec),
    Equivalence,
    Convergence(ConvergenceSpec),
    Lure(LureSpec),
    Ndcs(NdcsSpec),
    Radius(RadiusSpec),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Certify(_) => "certify",
            Task::Invariance(_) => "invariance",
            Task::Observe(_) => "observe",
            Task::Equivalence => "equivalence",
            Task::Convergence(_) => "convergence",
            Task::Lure(_) => "lure",
            Task::Ndcs(_) => "ndcs",
            Task::Radius(_) => "radius",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub set: ProxSet,
    pub field: VectorField,
    /// Builtin name and parameters of the field, for reports.
    pub field_description: String,
    pub initial: Point,
    pub integrator: IntegratorConfig,
    pub task: Task,
}

const TOP_KEYS: &[&str] =
    &["name", "seed", "set", "field", "initial", "integrator", "task", "certify", "invariance", "observe", "convergence", "lure", "ndcs", "radius"];

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let root = parse_tree(text)?;
    root.allow(TOP_KEYS)?;
    let name = root.text("name")?;
    let seed = if root.has("seed") { root.integer("seed")? } else { proxdyn::sampling::DEFAULT_SEED };
    let initial = root.vector("initial")?;
    let integrator = parse_integrator(root.block("integrator")?)?;
    let task_name = root.text("task")?;

    let (set, task) = match task_name.as_str() {
        "ndcs" => {
            let b = root.block("ndcs")?;
            b.allow(&["H", "c"])?;
            let spec = NdcsSpec { h: b.matrix("H")?, c: b.vector("c")? };
            let set = ProxSet::polyhedral(spec.h.clone(), spec.c.clone()).map_err(|e| validation("ndcs", e))?;
            (set, Task::Ndcs(spec))
        }
        _ => (parse_set(root.block("set")?)?, Task::Simulate),
    };
    let (field, field_description) = match (&task_name[..], root.get("field")) {
        ("lure", None) => {
            let a = root.block("lure")?.matrix("A")?;
            (VectorField::linear(a), "linear (A)".to_string())
        }
        _ => parse_field(root.block("field")?)?,
    };

    let dim = if task_name == "lure" { initial.len() } else { set.dim() };
    if initial.len() != dim {
        return invalid("initial", format!("has {} coordinates, the set lives in dimension {dim}", initial.len()));
    }
    let fx = field.eval(&initial);
    if fx.len() != initial.len() {
        return invalid("field", format!("returns {} coordinates for a {}-dimensional state", fx.len(), initial.len()));
    }
    if task_name != "lure" && !set.contains(&initial, integrator.tol.mem) {
        let d = set.distance(&initial).unwrap_or(f64::NAN);
        return invalid("initial", format!("initial point is not in the set (distance {d:.3e})"));
    }
    if integrator.h > integrator.t_final {
        return invalid("integrator", format!("h = {} exceeds T = {}", integrator.h, integrator.t_final));
    }

    let task = match task_name.as_str() {
        "simulate" => Task::Simulate,
        "equivalence" => {
            if set.dim() > 3 {
                return invalid("task", "equivalence runs the grid resolvent, limited to dimension 3");
            }
            Task::Equivalence
        }
        "certify" => Task::Certify(parse_certify(root.block("certify")?, &set)?),
        "invariance" => {
            let b = root.block("invariance")?;
            b.allow(&["subset", "sampler"])?;
            let subset = parse_set(b.block("subset")?)?;
            if subset.dim() != set.dim() {
                return invalid("invariance", "subset dimension differs from the set");
            }
            Task::Invariance(InvarianceSpec { subset, sampler: parse_sampler(b.block("sampler")?, set.dim())? })
        }
        "observe" => Task::Observe(parse_observe(root.block("observe")?, &set, &initial)?),
        "convergence" => {
            let b = root.block("convergence")?;
            b.allow(&["h_list", "exact", "rate", "omega"])?;
            let h_list = b.list("h_list")?;
            if h_list.len() < 2 || h_list.windows(2).any(|w| w[1] >= w[0]) || h_list.iter().any(|h| *h <= 0.0) {
                return invalid("convergence", "h_list needs at least two positive, decreasing steps");
            }
            let exact = match b.text("exact").as_deref().unwrap_or("none") {
                "none" => Exact::None,
                "rotation" => Exact::Rotation { omega: b.number_or("omega", 1.0)? },
                "projected_ray" => Exact::ProjectedRay,
                "exponential" => Exact::Exponential { rate: b.number("rate")? },
                other => return invalid("convergence", format!("unknown reference '{other}'")),
            };
            Task::Convergence(ConvergenceSpec { h_list, exact })
        }
        "lure" => Task::Lure(parse_lure(root.block("lure")?, &set, &initial)?),
        "ndcs" => task,
        "radius" => {
            let b = root.block("radius")?;
            b.allow(&["delta", "epsilon", "lipschitz", "starts", "grid_step"])?;
            Task::Radius(RadiusSpec {
                delta: b.number("delta")?,
                epsilon: b.number("epsilon")?,
                lipschitz: b.number_or("lipschitz", field.kappa)?,
                starts: if b.has("starts") { b.integer("starts")? as usize } else { 10 },
                grid_step: b.number_or("grid_step", 0.01)?,
            })
        }
        other => return invalid("task", format!("unknown task '{other}'")),
    };
    Ok(Scenario { name, seed, set, field, field_description, initial, integrator, task })
}

fn validation(field: &str, e: proxdyn::Error) -> ScenarioError {
    ScenarioError::Validation { field: field.into(), message: e.to_string() }
}

fn parse_integrator(b: &Block) -> Result<IntegratorConfig, ScenarioError> {
    b.allow(&["h", "T", "scheme"])?;
    let mut cfg = IntegratorConfig::new(b.number("h")?, b.number("T")?);
    if b.has("scheme") {
        cfg.scheme = match b.text("scheme")?.as_str() {
            "catching_up" => Scheme::CatchingUp,
            "semi_implicit" => Scheme::SemiImplicit,
            other => return invalid("integrator", format!("unknown scheme '{other}'")),
        };
    }
    if !(cfg.h > 0.0 && cfg.t_final > 0.0 && cfg.h.is_finite() && cfg.t_final.is_finite()) {
        return invalid("integrator", "h and T must be positive and finite");
    }
    Ok(cfg)
}

pub fn parse_set(b: &Block) -> Result<ProxSet, ScenarioError> {
    let kind = b.text("kind")?;
    let set = match kind.as_str() {
        "ball" => {
            b.allow(&["kind", "center", "radius"])?;
            ProxSet::ball(b.vector("center")?, b.number("radius")?)
        }
        "box" => {
            b.allow(&["kind", "lower", "upper"])?;
            ProxSet::cuboid(b.vector("lower")?, b.vector("upper")?)
        }
        "orthant" => {
            b.allow(&["kind", "dim"])?;
            let n = b.integer("dim")? as usize;
            if n == 0 {
                return invalid("set", "orthant dimension must be positive");
            }
            Ok(ProxSet::Orthant(n))
        }
        "shell" => {
            b.allow(&["kind", "center", "r_in", "r_out"])?;
            ProxSet::shell(b.vector("center")?, b.number("r_in")?, b.number("r_out")?)
        }
        "sphere" => {
            b.allow(&["kind", "center", "radius"])?;
            ProxSet::sphere(b.vector("center")?, b.number("radius")?)
        }
        "complement" => {
            b.allow(&["kind", "center", "radius"])?;
            ProxSet::ball_complement(b.vector("center")?, b.number("radius")?)
        }
        "preimage" => {
            b.allow(&["kind", "D", "inner"])?;
            ProxSet::preimage(b.matrix("D")?, parse_set(b.block("inner")?)?)
        }
        "product" => {
            b.allow(&["kind", "left", "right"])?;
            ProxSet::product(parse_set(b.block("left")?)?, parse_set(b.block("right")?)?)
        }
        "polyhedral" => {
            b.allow(&["kind", "H", "c"])?;
            ProxSet::polyhedral(b.matrix("H")?, b.vector("c")?)
        }
        "whole" => {
            b.allow(&["kind", "dim"])?;
            Ok(ProxSet::whole_space(b.integer("dim")? as usize))
        }
        other => return parse_err(b.line, format!("unknown set kind '{other}'")),
    };
    set.map_err(|e| validation("set", e))
}

fn parse_field(b: &Block) -> Result<(VectorField, String), ScenarioError> {
    let kind = b.text("kind")?;
    let mut keys = vec!["kind", "kappa"];
    let field = match kind.as_str() {
        "zero" => {
            keys.push("dim");
            VectorField::zero(b.integer("dim")? as usize)
        }
        "rotation" => {
            keys.push("omega");
            VectorField::rotation(b.number_or("omega", 1.0)?)
        }
        "constant" => {
            keys.push("c");
            VectorField::constant(b.vector("c")?)
        }
        "radial" => {
            keys.push("c");
            VectorField::radial(b.number("c")?)
        }
        "linear" => {
            keys.push("A");
            let a = b.matrix("A")?;
            if !a.is_square() {
                return invalid("field", "A must be square");
            }
            VectorField::linear(a)
        }
        "affine" => {
            keys.extend(["A", "b"]);
            let a = b.matrix("A")?;
            let v = b.vector("b")?;
            if !a.is_square() || a.nrows() != v.len() {
                return invalid("field", "A must be square with as many rows as b");
            }
            VectorField::affine(a, v)
        }
        other => return parse_err(b.line, format!("unknown field kind '{other}'")),
    };
    b.allow(&keys)?;
    let mut description = kind.clone();
    for e in &b.entries {
        if let (Value::Tokens(t), true) = (&e.value, e.key != "kind") {
            description.push_str(&format!(" {}=[{}]", e.key, t.join(" ")));
        }
    }
    let field = if b.has("kappa") { field.with_kappa(b.number("kappa")?) } else { field };
    Ok((field, description))
}

fn parse_sampler(b: &Block, dim: usize) -> Result<SamplerSpec, ScenarioError> {
    b.allow(&["lower", "upper", "step", "exclude_center", "exclude_radius"])?;
    let lower = b.vector("lower")?;
    let upper = b.vector("upper")?;
    if lower.len() != dim || upper.len() != dim {
        return invalid("sampler", format!("bounds must have {dim} coordinates"));
    }
    let step = b.number("step")?;
    if !(step > 0.0) {
        return invalid("sampler", "step must be positive");
    }
    let mut spec = SamplerSpec::grid(lower, upper, step);
    if b.has("exclude_radius") {
        let center = if b.has("exclude_center") { b.vector("exclude_center")? } else { Point::zeros(dim) };
        spec = spec.excluding(center, b.number("exclude_radius")?);
    }
    Ok(spec)
}

fn parse_certify(b: &Block, set: &ProxSet) -> Result<CertifySpec, ScenarioError> {
    b.allow(&["candidate", "sampler", "starts"])?;
    let n = set.dim();
    let c = b.block("candidate")?;
    c.allow(&["kind", "c", "value", "rate", "w_quadratic", "w_constant", "domain", "subset", "lower", "upper"])?;
    let mut cand = match c.text("kind")?.as_str() {
        "half_norm_squared" => LyapunovCandidate::half_norm_squared(),
        "linear" => {
            let v = c.vector("c")?;
            if v.len() != n {
                return invalid("candidate", "linear coefficients must match the dimension");
            }
            LyapunovCandidate::linear(v)
        }
        "constant" => LyapunovCandidate::constant(c.number("value")?, n),
        "indicator" => {
            let subset = parse_set(c.block("subset")?)?;
            LyapunovCandidate::indicator(subset, c.vector("lower")?, c.vector("upper")?)
        }
        other => return invalid("candidate", format!("unknown candidate '{other}'")),
    };
    cand = cand.with_rate(c.number_or("rate", 0.0)?);
    let wq = c.number_or("w_quadratic", 0.0)?;
    let wc = c.number_or("w_constant", 0.0)?;
    if wq < 0.0 || wc < 0.0 {
        return invalid("candidate", "W must be nonnegative");
    }
    if wq != 0.0 || wc != 0.0 {
        cand = cand.with_w(move |x| wq * x.norm_squared() + wc);
    }
    if c.has("domain") {
        let domain = match c.text("domain")?.as_str() {
            "everywhere" => Domain::Everywhere,
            "constraint" => Domain::Constraint,
            other => return invalid("candidate", format!("unknown domain '{other}'")),
        };
        cand = cand.with_domain(domain);
    }
    let starts = if b.has("starts") { b.integer("starts")? as usize } else { 10 };
    Ok(CertifySpec { candidate: cand, sampler: parse_sampler(b.block("sampler")?, n)?, starts })
}

fn parse_observe(b: &Block, set: &ProxSet, x0: &Point) -> Result<ObserveSpec, ScenarioError> {
    b.allow(&["delta", "epsilon", "eta", "gain", "output", "observer_initial"])?;
    let n = set.dim();
    let output = if b.has("output") { b.matrix("output")? } else { DMatrix::identity(n, n) };
    let gain = b.matrix("gain")?;
    if output.ncols() != n || gain.nrows() != n || gain.ncols() != output.nrows() {
        return invalid("observe", "gain must be n x p and output p x n");
    }
    let z0 = b.vector("observer_initial")?;
    if z0.len() != x0.len() {
        return invalid("observe", "observer_initial dimension differs from initial");
    }
    if !set.contains(&z0, 1e-9) {
        return invalid("observe", "observer_initial is not in the set");
    }
    Ok(ObserveSpec {
        delta: b.number("delta")?,
        epsilon: b.number("epsilon")?,
        eta: b.number("eta")?,
        gain,
        output,
        observer_initial: z0,
    })
}

fn parse_lure(b: &Block, set: &ProxSet, x0: &Point) -> Result<LureSpec, ScenarioError> {
    b.allow(&["A", "B", "D", "P", "delta"])?;
    let n = x0.len();
    let a = b.matrix("A")?;
    let d = b.matrix("D")?;
    let p = b.matrix("P")?;
    let bm = if b.has("B") {
        b.matrix("B")?
    } else {
        // PB = Dᵀ determines B.
        p.clone().try_inverse().ok_or_else(|| ScenarioError::Validation { field: "lure".into(), message: "P is singular".into() })?
            * d.transpose()
    };
    if p.shape() != (n, n) {
        return invalid("lure", format!("P must be {n} x {n}"));
    }
    let system = LureSystem::new(a, bm, d, set.clone(), x0.clone()).map_err(|e| validation("lure", e))?;
    Ok(LureSpec { system, p, delta: b.number("delta")? })
}

impl Scenario {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The inclusion actually integrated by the task: set, field and start.
    pub fn dynamics(&self) -> proxdyn::Result<(ProxSet, VectorField, Point)> {
        match &self.task {
            Task::Lure(spec) => {
                let ts: TransformedSystem = observer::transform(&spec.system, &spec.p)?;
                let z0 = ts.forward(&spec.system.x0);
                Ok((ts.set_prime, ts.field, z0))
            }
            Task::Observe(spec) => {
                let n = self.initial.len();
                let l = LipschitzMap::linear(spec.gain.clone());
                let g = LipschitzMap::linear(spec.output.clone());
                let field = observer::build_coupled_field(&self.field, n, &l, &g)?;
                let product = ProxSet::product(self.set.clone(), self.set.clone())?;
                let w0 = Point::from_iterator(2 * n, spec.observer_initial.iter().chain(self.initial.iter()).copied());
                Ok((product, field, w0))
            }
            _ => Ok((self.set.clone(), self.field.clone(), self.initial.clone())),
        }
    }
}
