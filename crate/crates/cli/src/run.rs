//! Task execution, CSV artifacts and the summary report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use proxdyn::lyapunov::{self, Domain, RadiusOptions, Verdict};
use proxdyn::monotone;
use proxdyn::observer::{self, LipschitzMap, ObserverSetup};
use proxdyn::solver::{self, fmt17, IntegratorConfig, Trajectory};
use proxdyn::{Error, Point, ProxSet, VectorField};

use crate::scenario::{ConvergenceSpec, Scenario, Task};

/// Residual threshold per unit step for ⟨v, f − v⟩; gives 1e-2 at h = 1e-3.
pub const ORTH_PER_STEP: f64 = 10.0;
/// Relative slack on the Lur'e and radius decay bounds and the observer bound.
pub const DECAY_SLACK: f64 = 1e-3;
/// Smallest accepted convergence order.
pub const MIN_ORDER: f64 = 0.8;
/// Complementarity residual threshold for multipliers.
pub const TOL_COMPLEMENTARITY: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Positive when the check passes.
    pub margin: f64,
    /// A failure means a mathematical hypothesis does not hold, rather than a numerical shortfall.
    pub hypothesis: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        let margin = limit - value;
        Check { name: name.into(), passed: margin >= 0.0, margin, hypothesis: false }
    }

    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        let margin = value - limit;
        Check { name: name.into(), passed: margin >= 0.0, margin, hypothesis: false }
    }

    fn hypothesis(mut self) -> Self {
        self.hypothesis = true;
        self
    }

    pub fn line(&self) -> String {
        format!("CHECK {}: {} margin={:.6e}", self.name, if self.passed { "PASS" } else { "FAIL" }, self.margin)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// File name and contents, written in order.
    pub artifacts: Vec<(String, String)>,
    pub error: Option<Error>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if let Some(e) = &self.error {
            return if e.is_hypothesis() { 2 } else { 1 };
        }
        if self.checks.iter().any(|c| !c.passed && c.hypothesis) {
            2
        } else if self.checks.iter().any(|c| !c.passed) {
            1
        } else {
            0
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn artifact(&self, name: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.0 == name).map(|a| a.1.as_str())
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn file(&mut self, name: &str, contents: String) {
        self.artifacts.push((name.to_string(), contents));
    }

    pub fn report(&self, scenario: &Scenario) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario: {}", scenario.name);
        let _ = writeln!(out, "task: {}", scenario.task.name());
        let _ = writeln!(out, "seed: {}", scenario.seed);
        let _ = writeln!(out, "set: {} (dimension {})", scenario.set.kind_name(), scenario.set.dim());
        let _ = writeln!(out, "field: {}", scenario.field_description);
        let _ = writeln!(out, "initial: {}", lyapunov::fmt_point(&scenario.initial));
        let _ = writeln!(out, "integrator: h = {}, T = {}", scenario.integrator.h, scenario.integrator.t_final);
        for c in &self.checks {
            let _ = writeln!(out, "{}", c.line());
        }
        if let Some(e) = &self.error {
            let kind = if e.is_hypothesis() { "hypothesis" } else { "error" };
            let _ = writeln!(out, "CHECK {kind}: FAIL margin=nan");
            let _ = writeln!(out, "error: {e}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(out, "exit: {}", self.exit_code());
        out
    }
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct WriteError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

/// Executes the task and writes every artifact plus `report.txt` into `out`.
pub fn run(scenario: &Scenario, out: &Path) -> Result<Outcome, WriteError> {
    let outcome = execute(scenario);
    std::fs::create_dir_all(out).map_err(|source| WriteError { path: out.to_path_buf(), source })?;
    for (name, contents) in outcome.artifacts.iter().chain(std::iter::once(&("report.txt".to_string(), outcome.report(scenario)))) {
        let path = out.join(name);
        std::fs::write(&path, contents).map_err(|source| WriteError { path, source })?;
    }
    Ok(outcome)
}

/// Executes the task in memory.
pub fn execute(scenario: &Scenario) -> Outcome {
    let mut out = Outcome::default();
    if let Err(e) = dispatch(scenario, &mut out) {
        out.error = Some(e);
    }
    out
}

fn dispatch(sc: &Scenario, out: &mut Outcome) -> proxdyn::Result<()> {
    let cfg = &sc.integrator;
    match &sc.task {
        Task::Simulate => {
            let traj = solver::integrate(&sc.set, &sc.field, &sc.initial, cfg)?;
            out.checks.extend(trajectory_checks(&sc.set, &sc.field, &traj, cfg));
            onset_note(&traj, &sc.field, out);
            out.note(format!("final point {} at t = {}", lyapunov::fmt_point(traj.last()), fmt17(*traj.times.last().unwrap_or(&0.0))));
            out.file("trajectory.csv", traj.to_csv());
        }
        Task::Certify(spec) => {
            let traj = solver::integrate(&sc.set, &sc.field, &sc.initial, cfg)?;
            out.file("trajectory.csv", traj.to_csv());
            if let Domain::Set { set: s, .. } = &spec.candidate.domain {
                let within = traj.times.iter().zip(traj.states.iter()).filter(|(t, _)| **t <= 1.0 + 1e-12);
                let exit = within.map(|(_, x)| s.distance(x).unwrap_or(f64::NAN)).fold(0.0, f64::max);
                out.note(format!("trajectory distance to dom V within t <= 1: {exit:.6}"));
            }
            let rep = lyapunov::certify_on_samples(&sc.set, &sc.field, &spec.candidate, &spec.sampler)?;
            out.file("certificate.csv", rep.to_csv());
            out.note(format!("criterion {} over {} samples", rep.criterion.name(), rep.samples.len()));
            match &rep.verdict {
                Verdict::Certified => {
                    out.checks.push(Check::at_most("certificate", rep.worst_margin(), 0.0));
                    let starts = decay_starts(sc, spec.starts);
                    let reps = lyapunov::decay_on_starts(&sc.set, &sc.field, &spec.candidate, &starts, cfg, lyapunov::TOL_DECAY)?;
                    let worst = reps.iter().map(|r| r.max_increase.max(r.max_excess)).fold(f64::NEG_INFINITY, f64::max);
                    out.checks.push(Check::at_most(format!("decay on {} starts", starts.len()), worst, lyapunov::TOL_DECAY));
                }
                Verdict::Violated { witness, margin } => {
                    out.checks.push(Check::at_most("certificate", *margin, 0.0).hypothesis());
                    out.note(format!("witness {} with margin {margin:.6e}", lyapunov::fmt_point(witness)));
                }
                Verdict::Inconclusive { worst } => {
                    out.checks.push(Check::at_most("certificate", *worst, lyapunov::TOL_CERT));
                    out.note("inconclusive: margins are within tolerance of zero; exclude the equilibrium from the sampler");
                }
            }
        }
        Task::Invariance(spec) => {
            let rep = lyapunov::invariance_certificate(&sc.set, &spec.subset, &sc.field, &spec.sampler, sc.seed)?;
            out.file("certificate.csv", rep.to_csv());
            let worst = rep.worst_margin();
            out.checks.push(Check::at_most("tangency", worst, lyapunov::TOL_TANGENT).hypothesis());
            if let Some(d) = rep.dual_worst {
                out.checks.push(Check::at_most("dual normals", d, lyapunov::TOL_TANGENT).hypothesis());
            }
            if let Verdict::Violated { witness, margin } = &rep.verdict {
                out.note(format!("witness {} with normal part {margin:.6e}", lyapunov::fmt_point(witness)));
            }
            let traj = solver::integrate(&sc.set, &sc.field, &sc.initial, cfg)?;
            if spec.subset.contains(&sc.initial, 1e-9) {
                let drift = traj.states.iter().map(|x| spec.subset.distance(x).unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
                out.checks.push(Check::at_most("trajectory stays in subset", drift, 1e-6));
            }
            out.file("trajectory.csv", traj.to_csv());
        }
        Task::Observe(spec) => {
            let setup = ObserverSetup::estimate(&sc.set, &sc.field, &sc.initial, cfg, spec.delta, spec.epsilon, spec.eta, sc.seed)?;
            out.note(format!(
                "m = {:.6}, M = {:.6}, r = {}, beta = {:.6}",
                setup.m, setup.big_m, setup.r, setup.beta
            ));
            let l = LipschitzMap::linear(spec.gain.clone());
            let g = LipschitzMap::linear(spec.output.clone());
            let run = observer::observer_run(&sc.set, &sc.field, &l, &g, &sc.initial, &spec.observer_initial, &setup, cfg, sc.seed)?;
            for h in &run.hypotheses {
                out.checks.push(Check { name: h.name.to_string(), passed: true, margin: h.margin, hypothesis: true });
            }
            out.checks.push(Check::at_most("error bound", run.max_ratio, 1.0 + observer::TOL_OBS));
            match run.fitted_rate {
                Some(rate) => {
                    out.checks.push(Check::at_least("fitted rate", rate, setup.beta / 2.0 - 0.05));
                    out.note(format!("fitted rate {rate:.6} against beta/2 = {:.6}", setup.beta / 2.0));
                }
                None => out.note("error vanishes; no rate to fit"),
            }
            out.file("observer.csv", run.to_csv());
        }
        Task::Equivalence => {
            let rep = monotone::equivalence_check(&sc.set, &sc.field, &sc.initial, cfg)?;
            out.checks.push(Check::at_most("equivalence gap", rep.sup_gap, rep.threshold));
            out.checks.push(Check::at_most("resolvent feasibility", rep.infeasible_steps.len() as f64, 0.0));
            out.note(format!("cap m = {}, {} piece(s) of length {}", rep.cap.m, rep.cap.pieces, rep.cap.t0));
            out.file("gap.csv", rep.gap_csv());
        }
        Task::Convergence(spec) => convergence(sc, spec, out)?,
        Task::Lure(spec) => {
            let pass = observer::verify_passivity(&spec.p, &spec.system.a, &spec.system.b, &spec.system.d, spec.delta);
            out.checks.push(Check::at_least("P positive definite", pass.min_eig_p, observer::TOL_PD).hypothesis());
            out.checks.push(Check::at_most("PB = D^T", pass.coupling_residual, observer::TOL_COUPLING).hypothesis());
            out.checks.push(Check::at_most("dissipation", pass.dissipation, observer::TOL_PSD).hypothesis());
            if !pass.passed() {
                return Ok(());
            }
            let run = observer::simulate_lure(&spec.system, &spec.p, spec.delta, cfg)?;
            let ts = observer::transform(&spec.system, &spec.p)?;
            out.checks.extend(trajectory_checks(&ts.set_prime, &ts.field, &run.transformed, cfg));
            onset_note(&run.transformed, &ts.field, out);
            out.checks.push(Check::at_most("decay bound", run.max_ratio, 1.0 + DECAY_SLACK));
            let res = observer::lure_residuals(&spec.system, &run.trajectory)?;
            out.checks.push(Check::at_most("input span", res.span_residual, ORTH_PER_STEP * cfg.h));
            out.checks.push(Check::at_most("input in normal cone", res.cone_residual, ORTH_PER_STEP * cfg.h));
            out.note(format!("stability radius {}, transformed constant r' = {}", run.rho, ts.r_prime));
            out.file("trajectory.csv", run.trajectory.to_csv());
        }
        Task::Ndcs(spec) => {
            let sys = observer::ndcs_build(spec.h.clone(), spec.c.clone())?;
            let traj = solver::integrate(&sys.set, &sc.field, &sc.initial, cfg)?;
            out.checks.extend(trajectory_checks(&sys.set, &sc.field, &traj, cfg));
            onset_note(&traj, &sc.field, out);
            let rep = sys.multipliers(&traj, &sc.field)?;
            out.checks.push(Check::at_most("complementarity", rep.max_residual(), TOL_COMPLEMENTARITY));
            out.checks.push(Check::at_most("multiplier fit", rep.fit_residual, TOL_COMPLEMENTARITY));
            match rep.activation_time {
                Some(t) => out.note(format!("constraint activates at t = {t}")),
                None => out.note("constraint never activates"),
            }
            out.file("trajectory.csv", traj.to_csv());
            out.file("multipliers.csv", multiplier_csv(&traj, &rep.multipliers, &rep.residuals));
        }
        Task::Radius(spec) => {
            let opts = RadiusOptions {
                cfg: *cfg,
                starts: spec.starts,
                grid_step: spec.grid_step,
                seed: sc.seed,
                tol: DECAY_SLACK,
            };
            let rep = lyapunov::lyapunov_radius_check(&sc.set, &sc.field, spec.delta, spec.epsilon, spec.lipschitz, &opts)?;
            out.checks.push(Check::at_most("radius condition", rep.condition_worst, 0.0).hypothesis());
            out.checks.push(Check::at_most("decay bound", rep.max_ratio, 1.0 + rep.tol));
            out.note(format!("radius {} over {} starts", rep.radius, rep.starts.len()));
            let traj = solver::integrate(&sc.set, &sc.field, &sc.initial, cfg)?;
            out.file("trajectory.csv", traj.to_csv());
        }
    }
    Ok(())
}

/// Feasibility, orthogonality and the speed and drift bounds along a catching-up trajectory.
pub fn trajectory_checks(set: &ProxSet, f: &VectorField, traj: &Trajectory, cfg: &IntegratorConfig) -> Vec<Check> {
    let worst_dist = traj.states.iter().map(|x| set.distance(x).unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    let orth = solver::check_velocity_orthogonality(traj, f, cfg.tol.orth);
    let onsets = contact_onsets(traj, f);
    let steady = orth.residuals.iter().enumerate().filter(|(k, _)| !onsets.contains(k)).map(|(_, r)| *r).fold(0.0, f64::max);
    let growth = solver::check_growth_bounds(traj, f, &cfg.tol);
    vec![
        Check::at_most("feasibility", worst_dist, cfg.tol.mem),
        Check::at_most("orthogonality", steady, ORTH_PER_STEP * cfg.h),
        Check::at_least("speed bound", growth.min_speed_slack, 0.0),
        Check::at_least("drift bound", growth.min_drift_slack, 0.0),
    ]
}

/// Steps where the discrete normal element f(x_k) − v_k jumps by more than ORTH_PER_STEP·h·(1 + ‖f(x_k)‖),
/// i.e. the step reaches the boundary from the interior or a new face. There ⟨v_k, f − v_k⟩ is O(1)
/// rather than O(h); along smooth sliding the element changes by O(h) per step.
pub fn contact_onsets(traj: &Trajectory, f: &VectorField) -> Vec<usize> {
    let h = match traj.times.as_slice() {
        [t0, t1, ..] => t1 - t0,
        _ => return Vec::new(),
    };
    let mut prev = Point::zeros(traj.dim());
    let mut onsets = Vec::new();
    for (k, v) in traj.velocities.iter().enumerate() {
        let fx = f.eval(&traj.states[k]);
        let w = &fx - v;
        if (&w - &prev).norm() > ORTH_PER_STEP * h * (1.0 + fx.norm()) {
            onsets.push(k);
        }
        prev = w;
    }
    onsets
}

/// Seeded starts in the sampler box, inside C and dom V.
fn decay_starts(sc: &Scenario, count: usize) -> Vec<Point> {
    let Task::Certify(spec) = &sc.task else { return Vec::new() };
    if let Domain::Set { set: s, .. } = &spec.candidate.domain {
        return spec.sampler.points_of(s).into_iter().filter(|x| sc.set.contains(x, 1e-9)).take(count).collect();
    }
    let mut rng = proxdyn::sampling::rng(sc.seed);
    sc.set
        .sample_in_box(&spec.sampler.lower, &spec.sampler.upper, count, &mut rng)
        .into_iter()
        .filter(|x| spec.candidate.in_domain(&sc.set, x))
        .collect()
}

fn onset_note(traj: &Trajectory, f: &VectorField, out: &mut Outcome) {
    let onsets = contact_onsets(traj, f);
    if onsets.is_empty() {
        return;
    }
    let orth = solver::check_velocity_orthogonality(traj, f, 0.0);
    let worst = onsets.iter().map(|k| orth.residuals[*k]).fold(0.0, f64::max);
    let times: Vec<String> = onsets.iter().take(5).map(|k| format!("{}", traj.times[*k])).collect();
    out.note(format!(
        "{} contact onset step(s) excluded from orthogonality, at t = {}; largest residual there {worst:.6e}",
        onsets.len(),
        times.join(", ")
    ));
}

fn convergence(sc: &Scenario, spec: &ConvergenceSpec, out: &mut Outcome) -> proxdyn::Result<()> {
    let (set, field, x0) = sc.dynamics()?;
    let t_final = sc.integrator.t_final;
    let exact_fn = |t: f64| spec.exact.evaluate(&set, &field, &x0, t).unwrap_or_else(|| Point::zeros(x0.len()));
    let exact: Option<&dyn Fn(f64) -> Point> = match spec.exact {
        crate::scenario::Exact::None => None,
        _ => Some(&exact_fn),
    };
    let rep = solver::convergence_study(&set, &field, &x0, t_final, &spec.h_list, exact)?;
    let mut csv = String::from("h,error,error_order,pairwise,pairwise_order\n");
    for (i, h) in rep.h_list.iter().enumerate() {
        let cell = |v: Option<&f64>| v.map_or(String::new(), |v| fmt17(*v));
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt17(*h),
            cell(rep.errors.get(i)),
            cell(if i == 0 { None } else { rep.error_orders.get(i - 1) }),
            cell(rep.pairwise.get(i)),
            cell(rep.pairwise_orders.get(i)),
        );
    }
    out.file("convergence.csv", csv);
    let values = if rep.errors.is_empty() { &rep.pairwise } else { &rep.errors };
    if values.iter().all(|v| *v <= 1e-12) {
        out.checks.push(Check::at_most("discretization error", values.iter().copied().fold(0.0, f64::max), 1e-12));
        out.note("every run matches to round-off; order is not defined");
    } else {
        let order = rep.orders().iter().copied().fold(f64::INFINITY, f64::min);
        out.checks.push(Check::at_least("convergence order", if order.is_nan() { f64::NEG_INFINITY } else { order }, MIN_ORDER));
        out.note(format!("orders {:?}", rep.orders()));
    }
    if let Some(e) = rep.errors.last() {
        let h = *rep.h_list.last().expect("nonempty");
        out.note(format!("finest error {e:.6e} at h = {h}"));
    }
    Ok(())
}

fn multiplier_csv(traj: &Trajectory, multipliers: &[Point], residuals: &[f64]) -> String {
    let m = multipliers.first().map_or(0, |l| l.len());
    let mut out = String::from("t");
    for i in 0..m {
        let _ = write!(out, ",lambda{}", i + 1);
    }
    out.push_str(",residual\n");
    for (k, l) in multipliers.iter().enumerate() {
        out.push_str(&fmt17(traj.times[k + 1]));
        for v in l.iter() {
            let _ = write!(out, ",{}", fmt17(*v));
        }
        let _ = writeln!(out, ",{}", fmt17(residuals.get(k).copied().unwrap_or(f64::NAN)));
    }
    out
}
