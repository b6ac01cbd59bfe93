use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use dptco::manifest::{exit_status, load_experiment, run_scenario_file, verify_trajectory, RunManifest, RunOverrides};
use dptco::monitors::MonitorReport;
use dptco::scenario::Scenario;
use dptco::sim_engine::import_csv;

#[derive(Parser)]
#[command(
    name = "dptco",
    version,
    about = "Distributed prescribed-time convex optimization simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV, plots and a manifest.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "guard-frac")]
        guard_frac: Option<f64>,
    },
    /// Print the centralized optimum of a scenario's costs.
    Optimum { scenario: PathBuf },
    /// Recompute all monitors from an exported trajectory.
    Verify {
        csv: PathBuf,
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "guard-frac")]
        guard_frac: Option<f64>,
    },
    /// Run every scenario in a directory, in parallel (DPTCO_THREADS caps it).
    Sweep {
        dir: PathBuf,
        /// Output root; each scenario writes into `<out>/<file stem>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            guard_frac,
        } => cmd_run(&scenario, &out, RunOverrides { seed, guard_frac }),
        Command::Optimum { scenario } => cmd_optimum(&scenario),
        Command::Verify {
            csv,
            scenario,
            seed,
            guard_frac,
        } => cmd_verify(&csv, &scenario, RunOverrides { seed, guard_frac }),
        Command::Sweep { dir, out } => cmd_sweep(&dir, out),
    };
    ExitCode::from(code)
}

fn print_monitors(monitors: &[MonitorReport]) {
    for m in monitors {
        let when = m
            .first_violation_t
            .map(|t| format!(" first violation at t = {t:.6}"))
            .unwrap_or_default();
        println!(
            "{:<24} {}  max ratio {:.4e}{when}",
            m.name,
            if m.pass { "PASS" } else { "FAIL" },
            m.max_ratio
        );
    }
}

fn report_error(path: &Path, err: &dptco::Error) {
    eprintln!("error: {}: {err}", path.display());
}

fn cmd_run(scenario: &Path, out: &Path, overrides: RunOverrides) -> u8 {
    let result = run_scenario_file(scenario, out, &overrides);
    match &result {
        Ok(manifest) => {
            print_summary(manifest);
            println!("outputs written to {}", out.display());
        }
        Err(e) => report_error(scenario, e),
    }
    exit_status(&result)
}

fn print_summary(manifest: &RunManifest) {
    for c in &manifest.criteria {
        println!(
            "criterion {:<18} {}",
            c.name,
            if c.report.pass {
                "PASS"
            } else {
                "FAIL (override acknowledged)"
            }
        );
    }
    print_monitors(&manifest.monitors);
    println!(
        "{} accepted steps, {:.2} s",
        manifest.integration.accepted, manifest.duration_s
    );
}

fn cmd_optimum(path: &Path) -> u8 {
    let result = Scenario::load(path).and_then(|s| {
        let costs = s.build_costs()?;
        s.optimum(&costs)
    });
    match result {
        Ok(cert) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&cert).expect("certificate serializes")
            );
            0
        }
        Err(e) => {
            report_error(path, &e);
            1
        }
    }
}

fn cmd_verify(csv: &Path, scenario: &Path, overrides: RunOverrides) -> u8 {
    let result = load_experiment(scenario, &overrides).and_then(|(exp, _)| {
        let traj = import_csv(csv, exp.system.layout())?;
        verify_trajectory(&exp, &traj)
    });
    match result {
        Ok(monitors) => {
            print_monitors(&monitors);
            println!(
                "{}",
                serde_json::to_string_pretty(&monitors).expect("reports serialize")
            );
            if monitors.iter().all(|m| m.pass) {
                0
            } else {
                2
            }
        }
        Err(e) => {
            report_error(csv, &e);
            1
        }
    }
}

fn cmd_sweep(dir: &Path, out: Option<PathBuf>) -> u8 {
    let mut files: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect(),
        Err(e) => {
            eprintln!("error: {}: {e}", dir.display());
            return 1;
        }
    };
    files.sort();
    if files.is_empty() {
        eprintln!("error: no scenario files in {}", dir.display());
        return 1;
    }
    let root = out.unwrap_or_else(|| dir.join("runs"));
    let threads = std::env::var("DPTCO_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(files.len());
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![None; files.len()]);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(path) = files.get(k) else { break };
                let stem = path
                    .file_stem()
                    .map_or_else(|| format!("run{k}"), |s| s.to_string_lossy().into_owned());
                let result = run_scenario_file(path, &root.join(stem), &RunOverrides::default());
                if let Err(e) = &result {
                    report_error(path, e);
                }
                results.lock().expect("results lock")[k] = Some(exit_status(&result));
            });
        }
    });
    let results = results.into_inner().expect("results lock");
    let mut worst = 0;
    for (path, code) in files.iter().zip(results) {
        let code = code.unwrap_or(1);
        let label = match code {
            0 => "PASS",
            2 => "MONITOR FAIL",
            _ => "ERROR",
        };
        println!("{:<40} {label}", path.display());
        worst = worst.max(code);
    }
    worst
}
