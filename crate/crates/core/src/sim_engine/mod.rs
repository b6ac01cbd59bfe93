//! Closed-loop simulation: integrator, plants, the coupled cascade, logged
//! trajectories and the monitors evaluated on them.

pub mod analysis;
pub mod plant;
pub mod solver;
pub mod system;
pub mod trajectory;

pub use analysis::{evaluate_monitors, MonitorContext, MonitorKind};
pub use plant::{Disturbance, DisturbanceSpec, Plant, TwoLinkArm};
pub use solver::{integrate, IntegrationStats, Method, OdeSystem, SolverSettings};
pub use system::{formation_offset_wrap, AgentController, CoupledSystem, Layout};
pub use trajectory::{export_csv, import_csv, Channel, Trajectory};

use crate::error::Result;

/// Integrates the cascade and logs state plus control inputs.
pub fn simulate(sys: &CoupledSystem, y0: &[f64], settings: &SolverSettings) -> Result<(Trajectory, IntegrationStats)> {
    let mut traj = Trajectory::new(sys.layout());
    let stats = integrate(sys, &sys.clock, y0, settings, |t, y| {
        let inputs = if sys.has_agents() {
            sys.inputs(t, y)?
        } else {
            Vec::new()
        };
        traj.push(t, sys.clock.mu_at(t)?, y, &inputs);
        Ok(())
    })?;
    Ok((traj, stats))
}
