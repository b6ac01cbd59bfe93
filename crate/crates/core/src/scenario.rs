//! Scenario files: JSON description of a run, resolved into a coupled system,
//! initial state, solver settings and the monitors to evaluate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain_ctrl::{ChainControllerConfig, ChainDesign, PsiBound};
use crate::costs::{optimum_oracle, CostConstants, CostSet, CostSpec, OptimumCertificate, WorkingBox};
use crate::error::{Error, Result};
use crate::generator::{generator_constants, init_p, GeneratorConstants, PInit};
use crate::graph::Network;
use crate::linalg::Mat;
use crate::sim_engine::{
    AgentController, CoupledSystem, Disturbance, DisturbanceSpec, MonitorContext, MonitorKind, Plant, SolverSettings,
    TwoLinkArm,
};
use crate::strictfb_ctrl::{initial_controller_state, BarMargins, FilterInit, StageNonlinearity, StrictFeedbackConfig};
use crate::timegain::{
    check_growth_criterion, clock_grid, CriterionReport, GainFunction, GainSpec, GrowthCriterion, PrescribedClock,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub clock: PrescribedClock,
    pub network: NetworkSpec,
    pub costs: CostsSpec,
    pub gains: GainsSpec,
    #[serde(default)]
    pub agents: Option<AgentsSpec>,
    #[serde(default)]
    pub generator_init: GeneratorInit,
    /// Constant formation offsets added to each agent's reference.
    #[serde(default)]
    pub formation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub monitors: MonitorsSpec,
    /// Runs even when a design criterion fails or a derived gain is replaced.
    #[serde(default)]
    pub acknowledge_criteria_override: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub n_agents: usize,
    /// `[i, j, weight]` triples.
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSpec {
    pub agents: Vec<CostSpec>,
    #[serde(default, rename = "box")]
    pub working_box: Option<WorkingBox>,
    #[serde(default = "default_optimum_tol")]
    pub optimum_tol: f64,
}

fn default_optimum_tol() -> f64 {
    1e-10
}

/// `"auto"` or an explicit gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainChoice {
    Named(String),
    Gain(GainSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    /// Generator gain; `"auto"` selects `k·μ` with `k = max(2/c*, alpha_k)`.
    pub alpha: GainChoice,
    #[serde(default)]
    pub alpha_k: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub criterion_grid_points: usize,
}

fn default_grid_points() -> usize {
    1000
}

/// Per-agent values: one vector shared by all agents or one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAgent {
    Shared(Vec<f64>),
    Each(Vec<Vec<f64>>),
}

impl PerAgent {
    fn resolve(&self, n: usize, dim: usize, what: &str) -> Result<Vec<Vec<f64>>> {
        let rows = match self {
            PerAgent::Shared(v) => vec![v.clone(); n],
            PerAgent::Each(rows) => rows.clone(),
        };
        if rows.len() != n {
            return Err(Error::Config(format!(
                "{what}: expected {n} agent rows, got {}",
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Config(format!(
                "{what}: expected vectors of length {dim}, got {}",
                bad.len()
            )));
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GeneratorInit {
    #[serde(default)]
    pub varpi: Option<PerAgent>,
    #[serde(default)]
    pub p: PInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "controller", rename_all = "snake_case")]
pub enum AgentsSpec {
    Chain(ChainAgents),
    StrictFeedback(StrictAgents),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ChainPlantSpec {
    Chain {
        order: usize,
    },
    EulerLagrange {
        theta: [f64; 6],
        #[serde(default = "default_gravity")]
        gravity: f64,
        /// Nominal parameters used for inverse dynamics are `nominal_scale·θ`.
        #[serde(default = "one")]
        nominal_scale: f64,
    },
}

fn default_gravity() -> f64 {
    9.8
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainAgents {
    pub plant: ChainPlantSpec,
    pub v: f64,
    /// `"auto"` or explicit Hurwitz coefficients.
    #[serde(default, rename = "K")]
    pub k: Option<KChoice>,
    #[serde(default, rename = "Q")]
    pub q: Option<Vec<Vec<f64>>>,
    pub alpha_x: GainSpec,
    /// `"auto_dc2"` or an explicit gain (flagged as an override).
    pub alpha_s: GainChoice,
    #[serde(default)]
    pub psi: PsiBound,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    pub x0: PerAgent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KChoice {
    Named(String),
    Coefficients(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrictGains {
    Raw {
        c: Vec<f64>,
        upsilon: Vec<f64>,
        sigma: f64,
    },
    Recipe {
        sigma_prime: f64,
        rho: Vec<f64>,
        #[serde(default)]
        c_bar: Option<Vec<f64>>,
        #[serde(default)]
        upsilon_bar: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrictAgents {
    pub order: usize,
    #[serde(default = "one")]
    pub l: f64,
    pub gains: StrictGains,
    pub alpha_xi: GainSpec,
    /// `φ_2..φ_m`.
    pub phi: Vec<StageNonlinearity>,
    pub theta_true: Vec<f64>,
    #[serde(default)]
    pub theta_hat0: f64,
    #[serde(default)]
    pub filter_init: FilterInit,
    /// Invariant-set radius; default `2·max‖ẽ_s(t0)‖ + 1`.
    #[serde(default)]
    pub h: Option<f64>,
    pub x0: PerAgent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorsSpec {
    /// `None` selects the defaults for the controller type.
    #[serde(default)]
    pub enabled: Option<Vec<MonitorKind>>,
    #[serde(default = "default_endpoint_tol")]
    pub endpoint_tol: f64,
}

impl Default for MonitorsSpec {
    fn default() -> Self {
        MonitorsSpec {
            enabled: None,
            endpoint_tol: default_endpoint_tol(),
        }
    }
}

fn default_endpoint_tol() -> f64 {
    1e-2
}

/// Constants resolved while building an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConstants {
    pub lambda2: f64,
    pub lambda_n: f64,
    pub cost: CostConstants,
    pub generator: GeneratorConstants,
    pub alpha: GainSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dc2_bypassed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict_gains: Option<StrictGainsResolved>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictGainsResolved {
    pub c: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub sigma: f64,
    pub sigma_prime: f64,
    pub scale_exponents: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCriterion {
    pub name: String,
    pub report: CriterionReport,
}

/// Controller, plants, initial plant states and initial controller states.
type AgentSetup = (AgentController, Vec<Plant>, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// A scenario resolved into everything a run needs.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub system: CoupledSystem,
    pub y0: Vec<f64>,
    pub settings: SolverSettings,
    pub monitor_kinds: Vec<MonitorKind>,
    pub context: MonitorContext,
    pub constants: ResolvedConstants,
    pub criteria: Vec<NamedCriterion>,
    /// Human-readable notes on overrides that were acknowledged.
    pub overrides: Vec<String>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn build_network(&self) -> Result<Network> {
        let net = Network::from_edges(self.network.n_agents, &self.network.edges)?;
        net.require_connected()?;
        Ok(net)
    }

    pub fn build_costs(&self) -> Result<CostSet> {
        let funcs = self
            .costs
            .agents
            .iter()
            .map(CostSpec::build)
            .collect::<Result<Vec<_>>>()?;
        match &self.costs.working_box {
            Some(b) => CostSet::with_box(funcs, b.clone()),
            None => CostSet::new(funcs),
        }
    }

    /// Minimizer of the summed costs, started from the mean initial estimate.
    pub fn optimum(&self, costs: &CostSet) -> Result<OptimumCertificate> {
        let z0 = match &self.generator_init.varpi {
            Some(v) => {
                let rows = v.resolve(costs.len(), costs.dim(), "generator_init.varpi")?;
                let mut z = vec![0.0; costs.dim()];
                for r in &rows {
                    z.iter_mut().zip(r).for_each(|(a, b)| *a += b / rows.len() as f64);
                }
                z
            }
            None => vec![0.0; costs.dim()],
        };
        optimum_oracle(costs, self.costs.optimum_tol, &z0)
    }

    pub fn build(self) -> Result<Experiment> {
        Experiment::build(self)
    }
}

fn check(name: &str, report: CriterionReport, criteria: &mut Vec<NamedCriterion>, failures: &mut Vec<String>) {
    if !report.pass {
        let coupling = match (report.coupling_margin, report.coupling_worst_s) {
            (Some(m), Some(s)) if m < 0.0 => format!("; coupling bound fails at s = {s:.6e} (margin {m:.3e})"),
            _ => String::new(),
        };
        let growth = if report.worst_margin < 0.0 {
            format!(
                "growth bound fails at s = {:.6e} (margin {:.3e})",
                report.worst_s, report.worst_margin
            )
        } else {
            "growth bound holds".to_string()
        };
        failures.push(format!("{name} criterion: {growth}{coupling}"));
    }
    criteria.push(NamedCriterion {
        name: name.to_string(),
        report,
    });
}

impl Experiment {
    pub fn build(scenario: Scenario) -> Result<Self> {
        scenario.clock.validate()?;
        let clock = scenario.clock;
        let net = scenario.build_network()?;
        let costs = scenario.build_costs()?;
        let n = net.n_agents();
        let m = costs.dim();
        if costs.len() != n {
            return Err(Error::Config(format!(
                "costs.agents has {} entries for {n} agents",
                costs.len()
            )));
        }
        let cert = scenario.optimum(&costs)?;
        let cost_consts = costs.constants();
        let (lambda2, lambda_n) = if n >= 2 {
            (net.lambda2(), net.lambda_n())
        } else {
            (1.0, 1.0)
        };
        let gen = generator_constants(cost_consts.rho_c, cost_consts.varrho_c, lambda2, lambda_n)?;
        let grid = clock_grid(&clock, scenario.gains.criterion_grid_points);

        let alpha = match &scenario.gains.alpha {
            GainChoice::Named(s) if s == "auto" => {
                let k = (2.0 / gen.c_star).max(scenario.gains.alpha_k.unwrap_or(0.0));
                GainFunction::linear(k)
            }
            GainChoice::Named(s) => {
                return Err(Error::Config(format!(
                    "gains.alpha: unknown choice \"{s}\" (use \"auto\" or a gain)"
                )))
            }
            GainChoice::Gain(spec) => GainFunction::from_spec(spec)?,
        };

        let mut criteria = Vec::new();
        let mut failures = Vec::new();
        let mut overrides = Vec::new();
        check(
            "generator",
            check_growth_criterion(&alpha, &GrowthCriterion::generator(gen.c_star)?, &grid),
            &mut criteria,
            &mut failures,
        );

        let mut settings = scenario.solver.clone();
        settings.guard_frac = clock.guard_frac;

        let varpi0 = match &scenario.generator_init.varpi {
            Some(v) => v.resolve(n, m, "generator_init.varpi")?,
            None => vec![vec![0.0; m]; n],
        };
        let p0 = init_p(n, m, scenario.generator_init.p, scenario.seed);

        let mut constants = ResolvedConstants {
            lambda2,
            lambda_n,
            cost: cost_consts,
            generator: gen,
            alpha: alpha.to_spec().unwrap_or(GainSpec {
                family: "custom".into(),
                params: vec![],
            }),
            v1: None,
            v2: None,
            dc2_bypassed: None,
            strict_gains: None,
        };
        let mut theta_true = Vec::new();
        let mut h = None;

        let (controller, plants, x0, ctrl0): AgentSetup = match &scenario.agents {
            None => (AgentController::None, Vec::new(), Vec::new(), Vec::new()),
            Some(AgentsSpec::Chain(spec)) => {
                let order = match &spec.plant {
                    ChainPlantSpec::Chain { order } => *order,
                    ChainPlantSpec::EulerLagrange { .. } => {
                        if m != 2 {
                            return Err(Error::Config("euler_lagrange agents need 2-dimensional costs".into()));
                        }
                        2
                    }
                };
                let k = match &spec.k {
                    None => None,
                    Some(KChoice::Named(s)) if s == "auto" => None,
                    Some(KChoice::Named(s)) => return Err(Error::Config(format!("agents.K: unknown choice \"{s}\""))),
                    Some(KChoice::Coefficients(c)) => Some(c.clone()),
                };
                let q = spec.q.as_ref().map(|rows| Mat::try_from_rows(rows)).transpose()?;
                let alpha_s = match &spec.alpha_s {
                    GainChoice::Named(s) if s == "auto_dc2" => None,
                    GainChoice::Named(s) => {
                        return Err(Error::Config(format!("agents.alpha_s: unknown choice \"{s}\"")))
                    }
                    GainChoice::Gain(g) => Some(GainFunction::from_spec(g)?),
                };
                let cfg = ChainControllerConfig::design(
                    ChainDesign {
                        order,
                        stage_dim: m,
                        v: spec.v,
                        k,
                        q,
                        alpha_x: GainFunction::from_spec(&spec.alpha_x)?,
                        alpha_s,
                        psi: spec.psi,
                    },
                    clock.mu0(),
                    clock.mu_guard(),
                )?;
                check(
                    "chain_dc1",
                    cfg.dc1_report(gen.c_star, &alpha, &grid)?,
                    &mut criteria,
                    &mut failures,
                );
                if cfg.dc2_bypassed {
                    failures.push("chain_dc2: alpha_s is supplied instead of derived from alpha_x".into());
                }
                constants.v1 = Some(cfg.v1);
                constants.v2 = Some(cfg.v2);
                constants.dc2_bypassed = Some(cfg.dc2_bypassed);
                let mut plants = Vec::with_capacity(n);
                for i in 0..n {
                    let dist = Disturbance::realize(&spec.disturbance, m, disturbance_seed(scenario.seed, i))?;
                    plants.push(match &spec.plant {
                        ChainPlantSpec::Chain { order } => Plant::Chain {
                            order: *order,
                            stage_dim: m,
                            disturbance: dist,
                        },
                        ChainPlantSpec::EulerLagrange {
                            theta,
                            gravity,
                            nominal_scale,
                        } => {
                            let truth = TwoLinkArm {
                                theta: *theta,
                                gravity: *gravity,
                            };
                            Plant::EulerLagrange {
                                nominal: truth.scaled(*nominal_scale),
                                truth,
                                disturbance: dist,
                            }
                        }
                    });
                }
                let x0 = spec.x0.resolve(n, order * m, "agents.x0")?;
                (AgentController::Chain(cfg), plants, x0, vec![Vec::new(); n])
            }
            Some(AgentsSpec::StrictFeedback(spec)) => {
                let order = spec.order;
                let cfg = match &spec.gains {
                    StrictGains::Raw { c, upsilon, sigma } => StrictFeedbackConfig::raw(
                        order,
                        m,
                        spec.l,
                        c.clone(),
                        upsilon.clone(),
                        *sigma,
                        GainFunction::from_spec(&spec.alpha_xi)?,
                        spec.phi.clone(),
                        clock.mu_guard(),
                    )?,
                    StrictGains::Recipe {
                        sigma_prime,
                        rho,
                        c_bar,
                        upsilon_bar,
                    } => StrictFeedbackConfig::from_recipe(
                        order,
                        m,
                        spec.l,
                        *sigma_prime,
                        rho.clone(),
                        &BarMargins {
                            c_bar: c_bar.clone(),
                            upsilon_bar: upsilon_bar.clone(),
                        },
                        GainFunction::from_spec(&spec.alpha_xi)?,
                        spec.phi.clone(),
                        clock.mu_guard(),
                    )?,
                };
                if cfg.rho.is_none() {
                    overrides
                        .push("strict-feedback gains supplied directly instead of through the selection recipe".into());
                }
                check(
                    "strict_dc_xi",
                    cfg.dc_xi_report(gen.c_star, &alpha, &grid)?,
                    &mut criteria,
                    &mut failures,
                );
                constants.strict_gains = Some(StrictGainsResolved {
                    c: cfg.c.clone(),
                    upsilon: cfg.upsilon.clone(),
                    sigma: cfg.sigma,
                    sigma_prime: cfg.sigma_prime,
                    scale_exponents: cfg.exponents(),
                });
                if spec.theta_true.len() != n {
                    return Err(Error::Config(format!(
                        "agents.theta_true: expected {n} values, got {}",
                        spec.theta_true.len()
                    )));
                }
                theta_true = spec.theta_true.clone();
                h = spec.h;
                let x0 = spec.x0.resolve(n, order * m, "agents.x0")?;
                let mut ctrl0 = Vec::with_capacity(n);
                for i in 0..n {
                    let reference = match &scenario.formation {
                        Some(f) => crate::sim_engine::formation_offset_wrap(&varpi0[i], &f[i])?,
                        None => varpi0[i].clone(),
                    };
                    ctrl0.push(
                        initial_controller_state(
                            &x0[i],
                            &reference,
                            spec.theta_hat0,
                            spec.filter_init,
                            clock.mu0(),
                            &cfg,
                        )?
                        .to_vec(),
                    );
                }
                let plants = theta_true
                    .iter()
                    .map(|&theta| Plant::StrictFeedback {
                        order,
                        stage_dim: m,
                        theta,
                        phi: spec.phi.clone(),
                    })
                    .collect();
                (AgentController::StrictFeedback(cfg), plants, x0, ctrl0)
            }
        };

        if !failures.is_empty() {
            if !scenario.acknowledge_criteria_override {
                return Err(Error::CriterionFailed(format!(
                    "{}; set \"acknowledge_criteria_override\": true to run anyway",
                    failures.join("; ")
                )));
            }
            overrides.extend(failures);
        }

        let system = CoupledSystem::new(clock, net, costs, alpha, plants, controller, scenario.formation.clone())?;
        let lay = system.layout();
        let mut y0 = vec![0.0; lay.total()];
        for i in 0..n {
            y0[lay.varpi(i)].copy_from_slice(&varpi0[i]);
            y0[lay.p(i)].copy_from_slice(&p0[i * m..(i + 1) * m]);
            if system.has_agents() {
                y0[lay.x(i)].copy_from_slice(&x0[i]);
                y0[lay.ctrl(i)].copy_from_slice(&ctrl0[i]);
            }
        }
        let monitor_kinds = scenario
            .monitors
            .enabled
            .clone()
            .unwrap_or_else(|| MonitorKind::defaults(&system.controller));
        let mut seen = monitor_kinds.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != monitor_kinds.len() {
            return Err(Error::Config("monitors.enabled lists a monitor twice".into()));
        }
        let context = MonitorContext {
            optimum: cert,
            generator: gen,
            theta_true,
            h,
            endpoint_tol: scenario.monitors.endpoint_tol,
        };
        Ok(Experiment {
            scenario,
            system,
            y0,
            settings,
            monitor_kinds,
            context,
            constants,
            criteria,
            overrides,
        })
    }
}

/// Seed of agent `i`'s disturbance stream.
pub fn disturbance_seed(seed: u64, agent: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(agent as u64 + 1)
}
