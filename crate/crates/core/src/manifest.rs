//! End-to-end runs: simulate an experiment, evaluate its monitors and write
//! the CSV, plots and manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::costs::OptimumCertificate;
use crate::error::{Error, Result};
use crate::generator::ErrorState;
use crate::linalg::norm;
use crate::monitors::{kappa_series, MonitorReport};
use crate::scenario::{Experiment, NamedCriterion, ResolvedConstants};
use crate::sim_engine::{
    evaluate_monitors, export_csv, simulate, AgentController, Channel, IntegrationStats, Trajectory,
};
use crate::svg::{render, Panel, Series};

pub const CSV_FILE: &str = "trajectory.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GENERATOR_PLOT: &str = "generator.svg";
pub const TRACKING_PLOT: &str = "tracking.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub constants: ResolvedConstants,
    pub criteria: Vec<NamedCriterion>,
    pub criteria_override_acknowledged: bool,
    pub overrides: Vec<String>,
    pub optimum: OptimumCertificate,
    pub monitors: Vec<MonitorReport>,
    pub integration: IntegrationStats,
    pub files: Vec<String>,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn all_pass(&self) -> bool {
        self.monitors.iter().all(|m| m.pass)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub stats: IntegrationStats,
    pub monitors: Vec<MonitorReport>,
    pub duration_s: f64,
}

/// Simulates the experiment and evaluates its monitors.
pub fn run_experiment(exp: &Experiment) -> Result<RunOutput> {
    let start = Instant::now();
    let (trajectory, stats) = simulate(&exp.system, &exp.y0, &exp.settings)?;
    let monitors = verify_trajectory(exp, &trajectory)?;
    Ok(RunOutput {
        trajectory,
        stats,
        monitors,
        duration_s: start.elapsed().as_secs_f64(),
    })
}

/// Recomputes every monitor of the experiment from a logged trajectory.
pub fn verify_trajectory(exp: &Experiment, traj: &Trajectory) -> Result<Vec<MonitorReport>> {
    evaluate_monitors(&exp.system, traj, &exp.context, &exp.monitor_kinds)
}

/// Runs the experiment and writes the CSV, two plots and the manifest into
/// `out_dir`.
pub fn write_run(exp: &Experiment, scenario_bytes: &[u8], out_dir: &Path) -> Result<(RunManifest, RunOutput)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let output = run_experiment(exp)?;
    let path = |name: &str| -> PathBuf { out_dir.join(name) };
    export_csv(&output.trajectory, &path(CSV_FILE))?;
    let (gen_plot, track_plot) = plots(exp, &output.trajectory)?;
    std::fs::write(path(GENERATOR_PLOT), gen_plot).map_err(|e| Error::io(path(GENERATOR_PLOT), e))?;
    std::fs::write(path(TRACKING_PLOT), track_plot).map_err(|e| Error::io(path(TRACKING_PLOT), e))?;
    let manifest = RunManifest {
        scenario: exp.scenario.name.clone(),
        scenario_sha256: sha256_hex(scenario_bytes),
        seed: exp.scenario.seed,
        constants: exp.constants.clone(),
        criteria: exp.criteria.clone(),
        criteria_override_acknowledged: exp.scenario.acknowledge_criteria_override,
        overrides: exp.overrides.clone(),
        optimum: exp.context.optimum.clone(),
        monitors: output.monitors.clone(),
        integration: output.stats,
        files: [CSV_FILE, GENERATOR_PLOT, TRACKING_PLOT, MANIFEST_FILE]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        duration_s: output.duration_s,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(path(MANIFEST_FILE), json + "\n").map_err(|e| Error::io(path(MANIFEST_FILE), e))?;
    Ok((manifest, output))
}

fn plots(exp: &Experiment, traj: &Trajectory) -> Result<(String, String)> {
    let sys = &exp.system;
    let ctx = &exp.context;
    let lay = sys.layout();
    let er: Vec<f64> = (0..traj.len())
        .map(|k| {
            ErrorState::new(
                &traj.stacked(k, Channel::Varpi),
                &traj.stacked(k, Channel::P),
                &sys.costs,
                &ctx.optimum,
            )
            .norm()
        })
        .collect();
    let kappa = kappa_series(&sys.alpha, -ctx.generator.c_star, &traj.mus)?;
    let gain = (ctx.generator.c3 / ctx.generator.c2).sqrt() * er[0];
    let envelope: Vec<f64> = kappa.iter().map(|k| gain * k).collect();
    let generator = render(&[Panel::new("Generator error ‖e_r‖ and envelope", "t", true)
        .with(Series::new("‖e_r‖", traj.times.clone(), er))
        .with(Series::new("envelope", traj.times.clone(), envelope).dashed())]);

    let mut tracking = Panel::new(
        if sys.has_agents() {
            "Tracking error ‖y_i − (z* + ω_i)‖"
        } else {
            "Estimate error ‖ϖ_i − z*‖"
        },
        "t",
        true,
    );
    for i in 0..lay.n_agents {
        let ys = (0..traj.len())
            .map(|k| {
                let (v, offset) = if sys.has_agents() {
                    (
                        &traj.agent(k, i, Channel::X)[..lay.m],
                        sys.formation.as_ref().map(|f| f[i].as_slice()),
                    )
                } else {
                    (traj.agent(k, i, Channel::Varpi), None)
                };
                (0..lay.m)
                    .map(|c| {
                        let target = ctx.optimum.z_star[c] + offset.map_or(0.0, |o| o[c]);
                        (v[c] - target).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        tracking = tracking.with(Series::new(format!("agent {i}"), traj.times.clone(), ys));
    }
    let mut panels = vec![tracking];
    if let AgentController::StrictFeedback(cfg) = &sys.controller {
        let n = cfg.stage_dim;
        let mut states = Panel::new("|θ̂_i|, ‖x_2^i‖, ‖x_3^i‖ (max over agents)", "t", true);
        let mut series = vec![Vec::with_capacity(traj.len()); cfg.order];
        for k in 0..traj.len() {
            let mut th: f64 = 0.0;
            let mut xs = vec![0.0f64; cfg.order - 1];
            for i in 0..lay.n_agents {
                th = th.max(traj.agent(k, i, Channel::Ctrl)[0].abs());
                let x = traj.agent(k, i, Channel::X);
                for q in 1..cfg.order {
                    xs[q - 1] = xs[q - 1].max(norm(&x[q * n..(q + 1) * n]));
                }
            }
            series[0].push(th);
            for q in 1..cfg.order {
                series[q].push(xs[q - 1]);
            }
        }
        for (q, ys) in series.into_iter().enumerate() {
            let label = if q == 0 {
                "|θ̂|".to_string()
            } else {
                format!("‖x_{}‖", q + 1)
            };
            states = states.with(Series::new(label, traj.times.clone(), ys));
        }
        panels.push(states);
    }
    Ok((generator, render(&panels)))
}

/// Command-line adjustments applied to a scenario before it is built.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub guard_frac: Option<f64>,
}

/// Reads, adjusts and builds a scenario file. Returns the experiment and the
/// raw file bytes used for the manifest hash.
pub fn load_experiment(path: &Path, overrides: &RunOverrides) -> Result<(Experiment, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut scenario = crate::scenario::Scenario::from_json(&text)?;
    if let Some(seed) = overrides.seed {
        scenario.seed = seed;
    }
    if let Some(g) = overrides.guard_frac {
        scenario.clock.guard_frac = g;
    }
    Ok((scenario.build()?, bytes))
}

/// Loads, runs and writes one scenario.
pub fn run_scenario_file(path: &Path, out_dir: &Path, overrides: &RunOverrides) -> Result<RunManifest> {
    let (exp, bytes) = load_experiment(path, overrides)?;
    Ok(write_run(&exp, &bytes, out_dir)?.0)
}

/// Process exit status for a run: 0 when every monitor passes, 2 when one
/// fails, 1 on any error.
pub fn exit_status(result: &Result<RunManifest>) -> u8 {
    match result {
        Ok(m) if m.all_pass() => 0,
        Ok(_) => 2,
        Err(_) => 1,
    }
}
