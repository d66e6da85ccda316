#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use proxdyn_cli::run::{self, Outcome};
use proxdyn_cli::scenario::{self, ConvergenceSpec, Exact, Scenario, Task};

#[derive(Parser)]
#[command(name = "proxdyn", version, about = "Simulate and verify differential inclusions on prox-regular sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        scenario: PathBuf,
        /// Output directory; defaults to out/<scenario name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every .scn file in a directory concurrently.
    Batch {
        dir: PathBuf,
        /// Parent of the per-scenario output directories.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Convergence study of a scenario's dynamics over a list of steps.
    Convergence {
        scenario: PathBuf,
        #[arg(long = "h-list", num_args = 2.., required = true)]
        h_list: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    scenario::load(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(1)
    })
}

fn finish(sc: &Scenario, out: &Path) -> ExitCode {
    match run::run(sc, out) {
        Ok(outcome) => {
            print_summary(sc, &outcome, out);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn print_summary(sc: &Scenario, outcome: &Outcome, out: &Path) {
    print!("{}", outcome.report(sc));
    println!("artifacts: {}", out.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out, seed } => {
            let mut sc = match load(&scenario) {
                Ok(sc) => sc,
                Err(code) => return code,
            };
            if let Some(seed) = seed {
                sc = sc.with_seed(seed);
            }
            let out = out.unwrap_or_else(|| Path::new("out").join(&sc.name));
            finish(&sc, &out)
        }
        Command::Convergence { scenario, h_list, out } => {
            let mut sc = match load(&scenario) {
                Ok(sc) => sc,
                Err(code) => return code,
            };
            if h_list.windows(2).any(|w| w[1] >= w[0]) || h_list.iter().any(|h| !(*h > 0.0)) {
                eprintln!("--h-list needs positive, decreasing steps");
                return ExitCode::from(1);
            }
            let exact = match &sc.task {
                Task::Convergence(spec) => spec.exact.clone(),
                _ => Exact::None,
            };
            sc.task = Task::Convergence(ConvergenceSpec { h_list, exact });
            let out = out.unwrap_or_else(|| Path::new("out").join(format!("{}-convergence", sc.name)));
            finish(&sc, &out)
        }
        Command::Batch { dir, out } => batch(&dir, &out),
    }
}

fn batch(dir: &Path, out: &Path) -> ExitCode {
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "scn")).collect(),
        Err(e) => {
            eprintln!("{}: {e}", dir.display());
            return ExitCode::from(1);
        }
    };
    paths.sort();
    let results: Vec<(PathBuf, i32)> = std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| {
                s.spawn(move || {
                    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    let code = match scenario::load(p) {
                        Ok(sc) => match run::run(&sc, &out.join(&stem)) {
                            Ok(o) => o.exit_code(),
                            Err(e) => {
                                eprintln!("{e}");
                                1
                            }
                        },
                        Err(e) => {
                            eprintln!("{}: {e}", p.display());
                            1
                        }
                    };
                    (p.clone(), code)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| (PathBuf::new(), 1))).collect()
    });
    let mut worst = 0;
    for (p, code) in &results {
        println!("{} exit {code}", p.display());
        worst = worst.max(*code);
    }
    ExitCode::from(worst as u8)
}
