//! Agent plant models and the bounded disturbance signals acting on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, Mat};
use crate::strictfb_ctrl::StageNonlinearity;

/// Scenario description of a disturbance signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    #[default]
    None,
    Constant {
        value: Vec<f64>,
    },
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Sum of seeded sinusoids with frequencies below `max_frequency`,
    /// normalized so that every component stays within `bound`.
    BandLimited {
        bound: f64,
        max_frequency: f64,
        #[serde(default = "default_components")]
        components: usize,
    },
}

fn default_components() -> usize {
    8
}

/// Realized per-agent disturbance `d(t) ∈ ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance {
    None,
    Constant(Vec<f64>),
    /// Per component: `(amplitude, angular frequency, phase)` triples summed.
    Harmonics(Vec<Vec<(f64, f64, f64)>>),
}

impl Disturbance {
    pub fn realize(spec: &DisturbanceSpec, n: usize, seed: u64) -> Result<Self> {
        match spec {
            DisturbanceSpec::None => Ok(Disturbance::None),
            DisturbanceSpec::Constant { value } => {
                if value.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: value.len(),
                    });
                }
                Ok(Disturbance::Constant(value.clone()))
            }
            DisturbanceSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                let w = 2.0 * std::f64::consts::PI * frequency;
                Ok(Disturbance::Harmonics(vec![vec![(*amplitude, w, *phase)]; n]))
            }
            DisturbanceSpec::BandLimited {
                bound,
                max_frequency,
                components,
            } => {
                if !(*bound >= 0.0) || !(*max_frequency > 0.0) || *components == 0 {
                    return Err(Error::Config(
                        "band-limited disturbance needs bound >= 0, max_frequency > 0 and components >= 1".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let tau = 2.0 * std::f64::consts::PI;
                let channels = (0..n)
                    .map(|_| {
                        let raw: Vec<(f64, f64, f64)> = (0..*components)
                            .map(|_| {
                                (
                                    rng.gen_range(0.5..1.0),
                                    tau * rng.gen_range(0.0..*max_frequency),
                                    rng.gen_range(0.0..tau),
                                )
                            })
                            .collect();
                        let total: f64 = raw.iter().map(|c| c.0).sum();
                        raw.into_iter().map(|(a, w, p)| (bound * a / total, w, p)).collect()
                    })
                    .collect();
                Ok(Disturbance::Harmonics(channels))
            }
        }
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        match self {
            Disturbance::None => out.fill(0.0),
            Disturbance::Constant(v) => out.copy_from_slice(v),
            Disturbance::Harmonics(ch) => {
                for (o, c) in out.iter_mut().zip(ch) {
                    *o = c.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum();
                }
            }
        }
    }

    /// Componentwise amplitude bound.
    pub fn bound(&self) -> f64 {
        match self {
            Disturbance::None => 0.0,
            Disturbance::Constant(v) => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Disturbance::Harmonics(ch) => ch
                .iter()
                .map(|c| c.iter().map(|x| x.0.abs()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }
}

/// Two-link planar arm: `M(q)q̈ + C(q, q̇)q̇ + G(q) = τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLinkArm {
    /// Lumped inertial and gravity parameters `θ₁..θ₆`.
    pub theta: [f64; 6],
    pub gravity: f64,
}

impl TwoLinkArm {
    pub fn scaled(&self, factor: f64) -> Self {
        let mut theta = self.theta;
        theta.iter_mut().for_each(|t| *t *= factor);
        TwoLinkArm {
            theta,
            gravity: self.gravity,
        }
    }

    pub fn mass(&self, q: &[f64]) -> Mat {
        let t = &self.theta;
        let c = q[1].cos();
        Mat::from_rows(&[
            vec![t[0] + t[1] + 2.0 * t[2] * c, t[1] + t[2] * c],
            vec![t[1] + t[2] * c, t[3]],
        ])
    }

    pub fn coriolis(&self, q: &[f64], dq: &[f64]) -> Mat {
        let t = &self.theta;
        let s = q[1].sin();
        Mat::from_rows(&[
            vec![-t[2] * s * dq[0], -2.0 * t[2] * s * dq[0]],
            vec![0.0, t[2] * s * dq[1]],
        ])
    }

    pub fn gravity_vector(&self, q: &[f64]) -> Vec<f64> {
        let t = &self.theta;
        let g = self.gravity;
        let c12 = (q[0] + q[1]).cos();
        vec![t[4] * g * q[0].cos() + t[5] * g * c12, t[5] * g * c12]
    }
}

/// Per-agent open-loop model. States are stacked stage by stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    /// `ẋ_q = x_{q+1}`, `ẋ_m = u + d(t)`.
    Chain {
        order: usize,
        stage_dim: usize,
        disturbance: Disturbance,
    },
    /// Arm driven through inverse dynamics built from `nominal`:
    /// `τ = M̂u + Ĉq̇ + Ĝ`, then `q̈ = M⁻¹(τ + d − Cq̇ − G)` with the true model.
    EulerLagrange {
        truth: TwoLinkArm,
        nominal: TwoLinkArm,
        disturbance: Disturbance,
    },
    /// `ẋ_q = x_{q+1} + θφ_q(x_q)` for `q ≥ 2`, `ẋ₁ = x₂`, `ẋ_m = u + θφ_m(x_m)`.
    StrictFeedback {
        order: usize,
        stage_dim: usize,
        theta: f64,
        phi: Vec<StageNonlinearity>,
    },
}

impl Plant {
    pub fn order(&self) -> usize {
        match self {
            Plant::Chain { order, .. } | Plant::StrictFeedback { order, .. } => *order,
            Plant::EulerLagrange { .. } => 2,
        }
    }

    pub fn stage_dim(&self) -> usize {
        match self {
            Plant::Chain { stage_dim, .. } | Plant::StrictFeedback { stage_dim, .. } => *stage_dim,
            Plant::EulerLagrange { .. } => 2,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.order() * self.stage_dim()
    }

    /// Writes `ẋ` for input `u` at time `t`.
    pub fn rhs(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let n = self.stage_dim();
        let m = self.order();
        dx[..(m - 1) * n].copy_from_slice(&x[n..]);
        match self {
            Plant::Chain { disturbance, .. } => {
                let last = &mut dx[(m - 1) * n..];
                disturbance.eval(t, last);
                for (d, ui) in last.iter_mut().zip(u) {
                    *d += ui;
                }
            }
            Plant::EulerLagrange {
                truth,
                nominal,
                disturbance,
            } => {
                let (q, dq) = (&x[..2], &x[2..4]);
                let applied = {
                    let mh = nominal.mass(q).matvec(u);
                    let ch = nominal.coriolis(q, dq).matvec(dq);
                    let gh = nominal.gravity_vector(q);
                    let mut d = [0.0; 2];
                    disturbance.eval(t, &mut d);
                    (0..2).map(|k| mh[k] + ch[k] + gh[k] + d[k]).collect::<Vec<_>>()
                };
                let c = truth.coriolis(q, dq).matvec(dq);
                let g = truth.gravity_vector(q);
                let rhs: Vec<f64> = (0..2).map(|k| applied[k] - c[k] - g[k]).collect();
                let acc = solve(&truth.mass(q), &rhs)?;
                dx[2..4].copy_from_slice(&acc);
            }
            Plant::StrictFeedback { theta, phi, .. } => {
                for q in 1..m {
                    let f = phi[q - 1].eval(&x[q * n..(q + 1) * n]);
                    for k in 0..n {
                        let idx = q * n + k;
                        if q + 1 < m {
                            dx[idx] += theta * f[k];
                        } else {
                            dx[idx] = u[k] + theta * f[k];
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
