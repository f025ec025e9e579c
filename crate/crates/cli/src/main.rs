use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use edass_core::{compute_metrics, run_scenario, Scenario, Trace};

/// Sensor-network explosive detection simulator.
#[derive(Parser)]
#[command(name = "edass", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios. Several scenarios run in parallel; then
    /// --trace and --metrics name directories.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Where to write the event trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Where to write the metrics summary (stdout if absent).
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Override the run length in seconds.
        #[arg(long, allow_hyphen_values = true)]
        t_end: Option<f64>,
        /// Override the random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Recompute metrics from a saved trace.
    Metrics { trace: PathBuf, scenario: PathBuf },
}

enum Failure {
    Scenario(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Scenario(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Scenario(e) | Failure::Runtime(e) => e,
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Scenario)?;
    Scenario::parse(&text)
        .with_context(|| format!("{}", path.display()))
        .map_err(Failure::Scenario)
}

fn output_path(base: &Path, scenario: &Path, many: bool, ext: &str) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let stem = scenario
        .file_stem()
        .map_or_else(|| "scenario".into(), |s| s.to_string_lossy());
    base.join(format!("{stem}.{ext}"))
}

fn run_one(
    path: &Path,
    scenario: &Scenario,
    trace_out: Option<PathBuf>,
    metrics_out: Option<PathBuf>,
) -> Result<Option<String>> {
    let out = run_scenario(scenario).with_context(|| format!("simulating {}", path.display()))?;
    let metrics = compute_metrics(&out.trace, scenario)?;
    if let Some(p) = trace_out {
        fs::write(&p, out.trace.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    match metrics_out {
        Some(p) => {
            fs::write(&p, metrics.to_string())
                .with_context(|| format!("writing {}", p.display()))?;
            Ok(None)
        }
        None => Ok(Some(metrics.to_string())),
    }
}

fn run(
    paths: &[PathBuf],
    trace: Option<PathBuf>,
    metrics: Option<PathBuf>,
    t_end: Option<f64>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let mut scenarios = Vec::with_capacity(paths.len());
    for p in paths {
        let mut s = load_scenario(p)?;
        if let Some(t) = t_end {
            if !(t.is_finite() && t > 0.0) {
                return Err(Failure::Scenario(anyhow!("--t-end must be finite and > 0")));
            }
            s.t_end = t;
        }
        if let Some(seed) = seed {
            s.seed = seed;
        }
        scenarios.push(s);
    }
    let many = paths.len() > 1;
    for dir in [&trace, &metrics].into_iter().flatten().filter(|_| many) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Runtime)?;
    }

    let results: Vec<Result<Option<String>>> = thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .zip(&scenarios)
            .map(|(path, s)| {
                let trace_out = trace.as_ref().map(|b| output_path(b, path, many, "trace"));
                let metrics_out = metrics
                    .as_ref()
                    .map(|b| output_path(b, path, many, "metrics"));
                scope.spawn(move || run_one(path, s, trace_out, metrics_out))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(anyhow!("simulation thread panicked")))
            })
            .collect()
    });

    let mut failed = 0;
    for (path, result) in paths.iter().zip(results) {
        match result {
            Ok(Some(summary)) => {
                if many {
                    println!("== {}", path.display());
                }
                print!("{summary}");
            }
            Ok(None) => {}
            Err(e) => {
                eprintln!("error: {e:#}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!(
            "{failed} of {} runs failed",
            paths.len()
        )));
    }
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let s = load_scenario(path)?;
    println!(
        "ok: {} ({} nodes, {} targets, {} signatures, t_end {} s)",
        s.name,
        s.field.nodes.len(),
        s.targets.len(),
        s.signatures.len(),
        s.t_end
    );
    Ok(())
}

fn metrics(trace_path: &Path, scenario_path: &Path) -> Result<(), Failure> {
    let scenario = load_scenario(scenario_path)?;
    let text = fs::read_to_string(trace_path)
        .with_context(|| format!("reading {}", trace_path.display()))
        .map_err(Failure::Runtime)?;
    let trace = Trace::parse(&text)
        .with_context(|| format!("{}", trace_path.display()))
        .map_err(Failure::Runtime)?;
    let summary = compute_metrics(&trace, &scenario)
        .with_context(|| format!("{}", trace_path.display()))
        .map_err(Failure::Runtime)?;
    print!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors count as input errors; exit code 2 is reserved for
    // failures during a run.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            scenarios,
            trace,
            metrics: m,
            t_end,
            seed,
        } => run(&scenarios, trace, m, t_end, seed),
        Command::Validate { scenario } => validate(&scenario),
        Command::Metrics { trace, scenario } => metrics(&trace, &scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match f {
                Failure::Scenario(_) => eprintln!("scenario error: {:#}", f.error()),
                Failure::Runtime(_) => eprintln!("error: {:#}", f.error()),
            }
            ExitCode::from(f.code())
        }
    }
}
