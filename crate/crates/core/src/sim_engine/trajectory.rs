//! Logged samples of a coupled run and their CSV form.
//!
//! Columns: `t`, `mu`, then for each agent `i` in order the blocks
//! `agent{i}.varpi{k}`, `agent{i}.p{k}`, `agent{i}.x{k}`, `agent{i}.ctrl{k}`
//! and `agent{i}.u{k}`. Empty blocks contribute no columns.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::system::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Varpi,
    P,
    X,
    Ctrl,
    U,
}

impl Channel {
    const ALL: [Channel; 5] = [Channel::Varpi, Channel::P, Channel::X, Channel::Ctrl, Channel::U];

    fn label(self) -> &'static str {
        match self {
            Channel::Varpi => "varpi",
            Channel::P => "p",
            Channel::X => "x",
            Channel::Ctrl => "ctrl",
            Channel::U => "u",
        }
    }

    fn width(self, lay: &Layout) -> usize {
        match self {
            Channel::Varpi | Channel::P => lay.m,
            Channel::X => lay.state_dim,
            Channel::Ctrl => lay.ctrl_dim,
            Channel::U => lay.input_dim,
        }
    }
}

/// Column names after `t` and `mu`.
pub fn column_names(lay: &Layout) -> Vec<String> {
    let mut cols = Vec::new();
    for i in 0..lay.n_agents {
        for ch in Channel::ALL {
            for k in 0..ch.width(lay) {
                cols.push(format!("agent{i}.{}{k}", ch.label()));
            }
        }
    }
    cols
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub layout: Layout,
    pub times: Vec<f64>,
    pub mus: Vec<f64>,
    /// One row per sample, laid out as [`column_names`].
    pub rows: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(layout: Layout) -> Self {
        Trajectory {
            layout,
            times: Vec::new(),
            mus: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn agent_width(&self) -> usize {
        Channel::ALL.iter().map(|c| c.width(&self.layout)).sum()
    }

    fn offset(&self, i: usize, ch: Channel) -> usize {
        let mut off = i * self.agent_width();
        for c in Channel::ALL {
            if c == ch {
                break;
            }
            off += c.width(&self.layout);
        }
        off
    }

    /// Appends a sample from the stacked state and the per-agent inputs.
    pub fn push(&mut self, t: f64, mu: f64, y: &[f64], inputs: &[Vec<f64>]) {
        let lay = self.layout;
        let mut row = Vec::with_capacity(lay.n_agents * self.agent_width());
        for i in 0..lay.n_agents {
            row.extend_from_slice(&y[lay.varpi(i)]);
            row.extend_from_slice(&y[lay.p(i)]);
            row.extend_from_slice(&y[lay.x(i)]);
            row.extend_from_slice(&y[lay.ctrl(i)]);
            if let Some(u) = inputs.get(i) {
                row.extend_from_slice(u);
            }
        }
        self.times.push(t);
        self.mus.push(mu);
        self.rows.push(row);
    }

    pub fn agent(&self, k: usize, i: usize, ch: Channel) -> &[f64] {
        let off = self.offset(i, ch);
        &self.rows[k][off..off + ch.width(&self.layout)]
    }

    /// Stacked `ϖ` (or `p`) of all agents at sample `k`.
    pub fn stacked(&self, k: usize, ch: Channel) -> Vec<f64> {
        (0..self.layout.n_agents)
            .flat_map(|i| self.agent(k, i, ch).iter().copied())
            .collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string(), "mu".to_string()];
        h.extend(column_names(&self.layout));
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{:.16e},{:.16e}", self.times[k], self.mus[k]);
            for v in &self.rows[k] {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses CSV text whose header must match `layout` exactly.
    pub fn from_csv(text: &str, layout: Layout) -> Result<Self> {
        let mut traj = Trajectory::new(layout);
        if !text.ends_with('\n') {
            return Err(Error::Schema("file does not end with a complete line".into()));
        }
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or("");
        let expected = traj.header();
        let found: Vec<&str> = header.split(',').collect();
        if found.len() != expected.len() || found.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(Error::Schema(format!(
                "header has {} columns, expected {} ({} .. {})",
                found.len(),
                expected.len(),
                expected[0],
                expected[expected.len() - 1]
            )));
        }
        let width = expected.len();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(Error::Schema(format!(
                    "line {} has {} fields, expected {width}",
                    n + 2,
                    fields.len()
                )));
            }
            let values = fields
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Schema(format!("line {}: {e}", n + 2)))?;
            traj.times.push(values[0]);
            traj.mus.push(values[1]);
            traj.rows.push(values[2..].to_vec());
        }
        if traj.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if traj.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Schema("times are not strictly increasing".into()));
        }
        Ok(traj)
    }
}

pub fn export_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    std::fs::write(path, traj.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn import_csv(path: &Path, layout: Layout) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Trajectory::from_csv(&text, layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Layout {
        Layout {
            n_agents: 2,
            m: 1,
            state_dim: 2,
            ctrl_dim: 0,
            input_dim: 1,
        }
    }

    fn sample() -> Trajectory {
        let lay = layout();
        let mut traj = Trajectory::new(lay);
        let y: Vec<f64> = (0..lay.total()).map(|k| 0.1 * k as f64 + 1.0 / 3.0).collect();
        traj.push(0.0, 1.0, &y, &[vec![0.25], vec![-1e-300]]);
        traj.push(0.5, 2.0, &y, &[vec![std::f64::consts::PI], vec![7.0]]);
        traj
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let traj = sample();
        let text = traj.to_csv();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 2 + layout().total() + 2);
        assert!(header.starts_with("t,mu,agent0.varpi0,agent0.p0,agent0.x0,agent0.x1,agent0.u0,agent1.varpi0"));
        let back = Trajectory::from_csv(&text, layout()).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn truncated_csv_is_a_schema_error() {
        let text = sample().to_csv();
        let cut = &text[..text.len() - 10];
        assert!(matches!(Trajectory::from_csv(cut, layout()), Err(Error::Schema(_))));
        let wrong = Layout { m: 2, ..layout() };
        assert!(matches!(Trajectory::from_csv(&text, wrong), Err(Error::Schema(_))));
    }

    #[test]
    fn agent_views() {
        let traj = sample();
        assert_eq!(traj.agent(1, 0, Channel::U), &[std::f64::consts::PI]);
        assert_eq!(traj.agent(0, 1, Channel::U), &[-1e-300]);
        assert_eq!(traj.stacked(0, Channel::Varpi).len(), 2);
    }
}
