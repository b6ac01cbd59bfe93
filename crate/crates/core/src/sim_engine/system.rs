//! The cascade of generator, agent plants and local controllers as one ODE.
//!
//! State layout: `[ϖ¹..ϖᴺ; p¹..pᴺ; x¹..xᴺ; ctrl¹..ctrlᴺ]`, each block
//! agent-major. Chain controllers carry no state; strict-feedback controllers
//! carry `[θ̂; ξ_{2f}; …; ξ_{mf}]`.

use crate::chain_ctrl::{chain_control, ChainControllerConfig};
use crate::costs::CostSet;
use crate::error::{Error, Result};
use crate::generator::generator_rhs_at;
use crate::graph::Network;
use crate::strictfb_ctrl::{
    adaptation_rhs, adaptation_tau, filter_rhs, virtual_controls, ControllerState, StrictFeedbackConfig,
};
use crate::timegain::{GainFunction, PrescribedClock};

use super::plant::Plant;
use super::solver::OdeSystem;

/// Local tracking controller shared by every agent of a scenario.
#[derive(Debug, Clone)]
pub enum AgentController {
    /// Generator only; no plants are simulated.
    None,
    Chain(ChainControllerConfig),
    StrictFeedback(StrictFeedbackConfig),
}

/// Block sizes of the stacked state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_agents: usize,
    /// Decision-variable dimension.
    pub m: usize,
    pub state_dim: usize,
    pub ctrl_dim: usize,
    pub input_dim: usize,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.n_agents * (2 * self.m + self.state_dim + self.ctrl_dim)
    }

    pub fn varpi(&self, i: usize) -> std::ops::Range<usize> {
        i * self.m..(i + 1) * self.m
    }

    pub fn p(&self, i: usize) -> std::ops::Range<usize> {
        let base = self.n_agents * self.m;
        base + i * self.m..base + (i + 1) * self.m
    }

    pub fn x(&self, i: usize) -> std::ops::Range<usize> {
        let base = 2 * self.n_agents * self.m;
        base + i * self.state_dim..base + (i + 1) * self.state_dim
    }

    pub fn ctrl(&self, i: usize) -> std::ops::Range<usize> {
        let base = self.n_agents * (2 * self.m + self.state_dim);
        base + i * self.ctrl_dim..base + (i + 1) * self.ctrl_dim
    }

    pub fn all_varpi(&self) -> std::ops::Range<usize> {
        0..self.n_agents * self.m
    }

    pub fn all_p(&self) -> std::ops::Range<usize> {
        self.n_agents * self.m..2 * self.n_agents * self.m
    }
}

/// `ϖ^{i,'} = ϖⁱ + ωⁱ`.
pub fn formation_offset_wrap(varpi_i: &[f64], omega_i: &[f64]) -> Result<Vec<f64>> {
    if varpi_i.len() != omega_i.len() {
        return Err(Error::DimensionMismatch {
            expected: varpi_i.len(),
            got: omega_i.len(),
        });
    }
    Ok(varpi_i.iter().zip(omega_i).map(|(a, b)| a + b).collect())
}

#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub clock: PrescribedClock,
    pub network: Network,
    pub costs: CostSet,
    pub alpha: GainFunction,
    pub plants: Vec<Plant>,
    pub controller: AgentController,
    /// Constant formation offsets `ωⁱ`.
    pub formation: Option<Vec<Vec<f64>>>,
    layout: Layout,
}

impl CoupledSystem {
    pub fn new(
        clock: PrescribedClock,
        network: Network,
        costs: CostSet,
        alpha: GainFunction,
        plants: Vec<Plant>,
        controller: AgentController,
        formation: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = network.n_agents();
        let m = costs.dim();
        if costs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: costs.len(),
            });
        }
        let (state_dim, ctrl_dim, input_dim) = match &controller {
            AgentController::None => {
                if !plants.is_empty() {
                    return Err(Error::Config("plants given without a controller".into()));
                }
                (0, 0, 0)
            }
            AgentController::Chain(cfg) => (cfg.state_dim(), 0, cfg.stage_dim),
            AgentController::StrictFeedback(cfg) => (cfg.state_dim(), cfg.ctrl_dim(), cfg.stage_dim),
        };
        if !matches!(controller, AgentController::None) {
            if plants.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: plants.len(),
                });
            }
            for plant in &plants {
                if plant.state_dim() != state_dim || plant.stage_dim() != m {
                    return Err(Error::Config(format!(
                        "plant with state dimension {} and output dimension {} does not match controller ({state_dim}) and costs ({m})",
                        plant.state_dim(),
                        plant.stage_dim()
                    )));
                }
            }
        }
        if let Some(f) = &formation {
            if f.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: f.len(),
                });
            }
            if let Some(bad) = f.iter().find(|w| w.len() != m) {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: bad.len(),
                });
            }
        }
        Ok(CoupledSystem {
            clock,
            network,
            costs,
            alpha,
            plants,
            controller,
            formation,
            layout: Layout {
                n_agents: n,
                m,
                state_dim,
                ctrl_dim,
                input_dim,
            },
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn has_agents(&self) -> bool {
        !matches!(self.controller, AgentController::None)
    }

    /// Reference handed to agent `i`'s tracking loop.
    pub fn reference(&self, i: usize, y: &[f64]) -> Result<Vec<f64>> {
        let varpi = &y[self.layout.varpi(i)];
        match &self.formation {
            Some(f) => formation_offset_wrap(varpi, &f[i]),
            None => Ok(varpi.to_vec()),
        }
    }

    /// Control input of every agent at `(t, y)`.
    pub fn inputs(&self, t: f64, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mu = self.clock.mu_at(t)?;
        (0..self.layout.n_agents)
            .map(|i| self.agent_input(i, mu, y).map(|(u, _)| u))
            .collect()
    }

    fn agent_input(&self, i: usize, mu: f64, y: &[f64]) -> Result<(Vec<f64>, Option<ControllerUpdate>)> {
        let lay = &self.layout;
        let x = &y[lay.x(i)];
        let reference = self.reference(i, y)?;
        match &self.controller {
            AgentController::None => Ok((Vec::new(), None)),
            AgentController::Chain(cfg) => Ok((chain_control(x, &reference, mu, cfg)?, None)),
            AgentController::StrictFeedback(cfg) => {
                let ctrl = ControllerState::from_slice(&y[lay.ctrl(i)]);
                let mut vc = virtual_controls(x, &reference, &ctrl, mu, cfg)?;
                let d_filter = filter_rhs(&ctrl.xi_f, &vc.xi, mu, cfg)?;
                let tau = adaptation_tau(x, &vc.x_tilde, mu, cfg);
                let d_theta = adaptation_rhs(ctrl.theta_hat, tau, mu, cfg)?;
                let u = vc.xi.pop().expect("order >= 2");
                Ok((u, Some(ControllerUpdate { d_theta, d_filter })))
            }
        }
    }
}

struct ControllerUpdate {
    d_theta: f64,
    d_filter: Vec<f64>,
}

impl OdeSystem for CoupledSystem {
    fn dim(&self) -> usize {
        self.layout.total()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let lay = self.layout;
        let mu = self.clock.mu_at(t)?;
        let a = self.alpha.eval(mu);
        {
            let (dvarpi, rest) = dy.split_at_mut(lay.n_agents * lay.m);
            generator_rhs_at(
                &y[lay.all_varpi()],
                &y[lay.all_p()],
                &self.network,
                &self.costs,
                a,
                dvarpi,
                &mut rest[..lay.n_agents * lay.m],
            );
        }
        if !self.has_agents() {
            return Ok(());
        }
        for i in 0..lay.n_agents {
            let (u, update) = self.agent_input(i, mu, y)?;
            self.plants[i].rhs(t, &y[lay.x(i)], &u, &mut dy[lay.x(i)])?;
            if let Some(upd) = update {
                let span = lay.ctrl(i);
                dy[span.start] = upd.d_theta;
                dy[span.start + 1..span.end].copy_from_slice(&upd.d_filter);
            }
        }
        Ok(())
    }
}
