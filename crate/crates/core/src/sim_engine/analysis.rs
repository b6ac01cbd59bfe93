//! Monitors evaluated from a logged trajectory. The same code runs after a
//! simulation and when re-checking an exported CSV.

use serde::{Deserialize, Serialize};

use crate::chain_ctrl::{chain_decay_monitor, ChainErrorView};
use crate::costs::OptimumCertificate;
use crate::error::{Error, Result};
use crate::generator::{envelope_monitor, ErrorState, GeneratorConstants, ENVELOPE_SLACK};
use crate::linalg::norm;
use crate::monitors::{require_nonempty, MonitorReport};
use crate::strictfb_ctrl::{
    adaptation_tau, invariant_set_monitor, scaled_decay_monitor, stacked_error, theta_hat_bound_monitor,
    virtual_controls, ControllerState, ScaledErrors, INVARIANT_SET_SLACK,
};

use super::system::{AgentController, CoupledSystem};
use super::trajectory::{Channel, Trajectory};

pub const CONSERVATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    Conservation,
    GeneratorEnvelope,
    ConsensusEndpoint,
    TrackingEndpoint,
    FiniteInputs,
    ChainDecay,
    InvariantSet,
    StrictFeedbackDecay,
    ThetaHatBound,
    TransientDecay,
}

impl MonitorKind {
    pub fn defaults(controller: &AgentController) -> Vec<MonitorKind> {
        use MonitorKind::*;
        match controller {
            AgentController::None => vec![Conservation, GeneratorEnvelope, ConsensusEndpoint],
            AgentController::Chain(_) => vec![
                Conservation,
                GeneratorEnvelope,
                TrackingEndpoint,
                FiniteInputs,
                ChainDecay,
            ],
            AgentController::StrictFeedback(_) => vec![
                Conservation,
                GeneratorEnvelope,
                TrackingEndpoint,
                FiniteInputs,
                InvariantSet,
                StrictFeedbackDecay,
                ThetaHatBound,
                TransientDecay,
            ],
        }
    }
}

/// Verification-only data the monitors compare against.
#[derive(Debug, Clone)]
pub struct MonitorContext {
    pub optimum: OptimumCertificate,
    pub generator: GeneratorConstants,
    /// True plant parameter of each strict-feedback agent.
    pub theta_true: Vec<f64>,
    /// Invariant-set radius; `None` selects `2·max_i‖ẽ_s^i(t0)‖ + 1`.
    pub h: Option<f64>,
    /// Endpoint tolerance for tracking, consensus and transient checks.
    pub endpoint_tol: f64,
}

/// Per-agent strict-feedback signals recomputed from the log.
struct StrictSignals {
    e_tilde: Vec<Vec<f64>>,
    e_s: Vec<Vec<f64>>,
    theta_hat: Vec<Vec<f64>>,
    tau: Vec<Vec<f64>>,
}

pub fn evaluate_monitors(
    sys: &CoupledSystem,
    traj: &Trajectory,
    ctx: &MonitorContext,
    kinds: &[MonitorKind],
) -> Result<Vec<MonitorReport>> {
    require_nonempty(traj.len())?;
    let lay = sys.layout();
    if traj.layout != lay {
        return Err(Error::Schema("trajectory layout does not match the scenario".into()));
    }
    let strict = match &sys.controller {
        AgentController::StrictFeedback(_) => Some(strict_signals(sys, traj, ctx)?),
        _ => None,
    };
    let mut out = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let report = match kind {
            MonitorKind::Conservation => conservation(traj),
            MonitorKind::GeneratorEnvelope => {
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
                envelope_monitor(&traj.times, &traj.mus, &er, &sys.alpha, &ctx.generator, ENVELOPE_SLACK)?
            }
            MonitorKind::ConsensusEndpoint => {
                let k = traj.len() - 1;
                let worst = (0..lay.n_agents)
                    .map(|i| dist(traj.agent(k, i, Channel::Varpi), &ctx.optimum.z_star))
                    .fold(0.0, f64::max);
                endpoint("consensus_endpoint", traj, worst, ctx.endpoint_tol)
            }
            MonitorKind::TrackingEndpoint => {
                require_agents(sys, *kind)?;
                let k = traj.len() - 1;
                let worst = (0..lay.n_agents)
                    .map(|i| {
                        let mut target = ctx.optimum.z_star.clone();
                        if let Some(f) = &sys.formation {
                            target.iter_mut().zip(&f[i]).for_each(|(a, b)| *a += b);
                        }
                        dist(&traj.agent(k, i, Channel::X)[..lay.m], &target)
                    })
                    .fold(0.0, f64::max);
                endpoint("tracking_endpoint", traj, worst, ctx.endpoint_tol)
            }
            MonitorKind::FiniteInputs => {
                require_agents(sys, *kind)?;
                let mut r = MonitorReport::new("finite_inputs");
                let mut sup: f64 = 0.0;
                for k in 0..traj.len() {
                    for i in 0..lay.n_agents {
                        let u = traj.agent(k, i, Channel::U);
                        let finite = u.iter().all(|v| v.is_finite());
                        r.observe(traj.times[k], if finite { 0.0 } else { f64::INFINITY }, 1.0);
                        if finite {
                            sup = sup.max(norm(u));
                        }
                    }
                }
                r.with_detail("sup_input_norm", sup)
            }
            MonitorKind::ChainDecay => {
                let AgentController::Chain(cfg) = &sys.controller else {
                    return Err(Error::Config("chain_decay needs a chain controller".into()));
                };
                let mut agg = MonitorReport::new("chain_decay");
                let mut fit: f64 = 0.0;
                let mut sup: f64 = 0.0;
                for i in 0..lay.n_agents {
                    let mut es = Vec::with_capacity(traj.len());
                    let mut et = Vec::with_capacity(traj.len());
                    for k in 0..traj.len() {
                        let reference = reference_at(sys, traj, k, i)?;
                        let view = ChainErrorView::compute(traj.agent(k, i, Channel::X), &reference, traj.mus[k], cfg)?;
                        es.push(norm(&view.e_s));
                        et.push(norm(&view.e_tilde_s));
                    }
                    let r = chain_decay_monitor(&traj.times, &traj.mus, &es, &et, cfg)?;
                    merge(&mut agg, &r);
                    fit = fit.max(r.details["fitted_constant"]);
                    sup = sup.max(r.details["sup_e_tilde_s"]);
                }
                agg.with_detail("fitted_constant", fit)
                    .with_detail("sup_e_tilde_s", sup)
            }
            MonitorKind::InvariantSet => {
                let s = strict_for(&strict, *kind)?;
                let h = ctx
                    .h
                    .unwrap_or_else(|| 2.0 * s.e_tilde.iter().map(|v| v[0]).fold(0.0, f64::max) + 1.0);
                let mut agg = MonitorReport::new("invariant_set").with_detail("h", h);
                let mut premise = 1.0;
                for e in &s.e_tilde {
                    let r = invariant_set_monitor(&traj.times, e, h, INVARIANT_SET_SLACK)?;
                    premise = f64::min(premise, r.details["premise_holds"]);
                    merge(&mut agg, &r);
                }
                agg.with_detail("premise_holds", premise)
            }
            MonitorKind::StrictFeedbackDecay => {
                let s = strict_for(&strict, *kind)?;
                let AgentController::StrictFeedback(cfg) = &sys.controller else {
                    unreachable!()
                };
                let mut agg = MonitorReport::new("strict_feedback_decay");
                let mut fit: f64 = 0.0;
                for i in 0..lay.n_agents {
                    let r = scaled_decay_monitor(&traj.times, &traj.mus, &s.e_s[i], &s.e_tilde[i], &cfg.alpha_xi)?;
                    fit = fit.max(r.details["fitted_constant"]);
                    merge(&mut agg, &r);
                }
                agg.with_detail("fitted_constant", fit)
            }
            MonitorKind::ThetaHatBound => {
                let s = strict_for(&strict, *kind)?;
                let AgentController::StrictFeedback(cfg) = &sys.controller else {
                    unreachable!()
                };
                let mut agg = MonitorReport::new("theta_hat_bound");
                for i in 0..lay.n_agents {
                    let r = theta_hat_bound_monitor(&traj.times, &traj.mus, &s.theta_hat[i], &s.tau[i], cfg)?;
                    merge(&mut agg, &r);
                }
                agg
            }
            MonitorKind::TransientDecay => {
                let s = strict_for(&strict, *kind)?;
                let k = traj.len() - 1;
                let n = lay.m;
                let mut worst: f64 = 0.0;
                for i in 0..lay.n_agents {
                    worst = worst.max(s.theta_hat[i][k].abs());
                    let x = traj.agent(k, i, Channel::X);
                    for q in 1..lay.state_dim / n {
                        worst = worst.max(norm(&x[q * n..(q + 1) * n]));
                    }
                }
                endpoint("transient_decay", traj, worst, ctx.endpoint_tol)
            }
        };
        out.push(report);
    }
    Ok(out)
}

fn strict_signals(sys: &CoupledSystem, traj: &Trajectory, ctx: &MonitorContext) -> Result<StrictSignals> {
    let AgentController::StrictFeedback(cfg) = &sys.controller else {
        unreachable!()
    };
    let lay = sys.layout();
    if ctx.theta_true.len() != lay.n_agents {
        return Err(Error::DimensionMismatch {
            expected: lay.n_agents,
            got: ctx.theta_true.len(),
        });
    }
    let mut s = StrictSignals {
        e_tilde: vec![Vec::new(); lay.n_agents],
        e_s: vec![Vec::new(); lay.n_agents],
        theta_hat: vec![Vec::new(); lay.n_agents],
        tau: vec![Vec::new(); lay.n_agents],
    };
    for i in 0..lay.n_agents {
        for k in 0..traj.len() {
            let x = traj.agent(k, i, Channel::X);
            let ctrl = ControllerState::from_slice(traj.agent(k, i, Channel::Ctrl));
            let reference = reference_at(sys, traj, k, i)?;
            let vc = virtual_controls(x, &reference, &ctrl, traj.mus[k], cfg)?;
            let scaled = ScaledErrors::from_virtual(&vc, ctx.theta_true[i], ctrl.theta_hat, traj.mus[k], cfg);
            s.e_tilde[i].push(scaled.norm());
            s.e_s[i].push(norm(&stacked_error(x, &reference, &ctrl, cfg.stage_dim)));
            s.theta_hat[i].push(ctrl.theta_hat);
            s.tau[i].push(adaptation_tau(x, &vc.x_tilde, traj.mus[k], cfg));
        }
    }
    Ok(s)
}

fn reference_at(sys: &CoupledSystem, traj: &Trajectory, k: usize, i: usize) -> Result<Vec<f64>> {
    let varpi = traj.agent(k, i, Channel::Varpi);
    match &sys.formation {
        Some(f) => super::system::formation_offset_wrap(varpi, &f[i]),
        None => Ok(varpi.to_vec()),
    }
}

fn strict_for(s: &Option<StrictSignals>, kind: MonitorKind) -> Result<&StrictSignals> {
    s.as_ref()
        .ok_or_else(|| Error::Config(format!("{kind:?} needs a strict-feedback controller")))
}

fn require_agents(sys: &CoupledSystem, kind: MonitorKind) -> Result<()> {
    if sys.has_agents() {
        Ok(())
    } else {
        Err(Error::Config(format!("{kind:?} needs agent plants")))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn endpoint(name: &str, traj: &Trajectory, worst: f64, tol: f64) -> MonitorReport {
    let mut r = MonitorReport::new(name);
    r.observe(*traj.times.last().expect("non-empty"), worst / tol, 1.0);
    r.with_detail("final_error", worst).with_detail("tolerance", tol)
}

fn conservation(traj: &Trajectory) -> MonitorReport {
    let sum_at = |k: usize| {
        let p = traj.stacked(k, Channel::P);
        let m = traj.layout.m;
        (0..m)
            .map(|c| p.iter().skip(c).step_by(m).sum::<f64>())
            .collect::<Vec<_>>()
    };
    let base = sum_at(0);
    let mut r = MonitorReport::new("conservation");
    let mut drift: f64 = 0.0;
    for k in 0..traj.len() {
        let d = dist(&sum_at(k), &base);
        drift = drift.max(d);
        r.observe(traj.times[k], d / CONSERVATION_TOL, 1.0);
    }
    r.with_detail("max_drift", drift)
}

fn merge(agg: &mut MonitorReport, r: &MonitorReport) {
    agg.pass &= r.pass;
    agg.max_ratio = agg.max_ratio.max(r.max_ratio);
    if let Some(t) = r.first_violation_t {
        agg.first_violation_t = Some(agg.first_violation_t.map_or(t, |s| s.min(t)));
    }
}
