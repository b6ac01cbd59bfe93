//! Distributed optimum-seeking generator: each agent keeps an estimate `ϖⁱ`
//! of the minimizer and a gradient-tracking state `pⁱ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{CostFunction, CostSet, OptimumCertificate};
use crate::error::{Error, Result};
use crate::graph::{Network, ReducedBasis};
use crate::linalg::{Lu, Mat};
use crate::monitors::{kappa_series, require_nonempty, safe_ratio, MonitorReport};
use crate::timegain::{GainFunction, PrescribedClock};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c_star: f64,
}

pub fn generator_constants(rho_c: f64, varrho_c: f64, lambda2: f64, lambda_n: f64) -> Result<GeneratorConstants> {
    for (name, v) in [
        ("rho_c", rho_c),
        ("varrho_c", varrho_c),
        ("lambda2", lambda2),
        ("lambda_n", lambda_n),
    ] {
        if !(v > 0.0) {
            return Err(Error::NonPositiveInput(name));
        }
    }
    let c1 = (1.0 / lambda2).max((1.0 + 2.0 * varrho_c * varrho_c) / (2.0 * rho_c));
    let c2 = 0.5 * c1 * (1.0f64).min(1.0 / lambda_n);
    let c3 = c1 * (1.0f64).max(1.0 / lambda2) + 1.0;
    Ok(GeneratorConstants {
        c1,
        c2,
        c3,
        c_star: 1.0 / (4.0 * c3),
    })
}

/// Stacked `ϖ` and `p`, agent-major: entries `i·m .. (i+1)·m` belong to
/// agent `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    pub varpi: Vec<f64>,
    pub p: Vec<f64>,
}

impl GeneratorState {
    pub fn agent_varpi(&self, i: usize, m: usize) -> &[f64] {
        &self.varpi[i * m..(i + 1) * m]
    }
}

/// One agent's generator derivative. It reads only its own state, the
/// states of its neighbours and its local cost.
pub fn agent_rhs<'a>(
    own_varpi: &[f64],
    own_p: &[f64],
    neighbors: impl IntoIterator<Item = (f64, &'a [f64])>,
    cost: &CostFunction,
    alpha: f64,
    dvarpi: &mut [f64],
    dp: &mut [f64],
) {
    let m = own_varpi.len();
    let mut consensus = vec![0.0; m];
    for (a, other) in neighbors {
        for k in 0..m {
            consensus[k] += a * (own_varpi[k] - other[k]);
        }
    }
    dvarpi.fill(0.0);
    cost.add_gradient(own_varpi, dvarpi);
    for k in 0..m {
        dvarpi[k] = -alpha * (consensus[k] + dvarpi[k] + own_p[k]);
        dp[k] = alpha * consensus[k];
    }
}

/// Derivative of the whole generator for a given gain value `α(μ)`.
pub fn generator_rhs_at(
    varpi: &[f64],
    p: &[f64],
    net: &Network,
    costs: &CostSet,
    alpha: f64,
    dvarpi: &mut [f64],
    dp: &mut [f64],
) {
    let m = costs.dim();
    for i in 0..net.n_agents() {
        let span = i * m..(i + 1) * m;
        let nbrs = net.neighbors(i).iter().map(|&(j, a)| (a, &varpi[j * m..(j + 1) * m]));
        agent_rhs(
            &varpi[span.clone()],
            &p[span.clone()],
            nbrs,
            costs.agent(i),
            alpha,
            &mut dvarpi[span.clone()],
            &mut dp[span],
        );
    }
}

pub fn generator_rhs(
    state: &GeneratorState,
    t: f64,
    net: &Network,
    costs: &CostSet,
    alpha: &GainFunction,
    clock: &PrescribedClock,
) -> Result<GeneratorState> {
    let expected = net.n_agents() * costs.dim();
    for len in [state.varpi.len(), state.p.len()] {
        if len != expected {
            return Err(Error::DimensionMismatch { expected, got: len });
        }
    }
    if costs.len() != net.n_agents() {
        return Err(Error::DimensionMismatch {
            expected: net.n_agents(),
            got: costs.len(),
        });
    }
    let a = alpha.eval(clock.mu_at(t)?);
    let mut d = GeneratorState {
        varpi: vec![0.0; expected],
        p: vec![0.0; expected],
    };
    generator_rhs_at(&state.varpi, &state.p, net, costs, a, &mut d.varpi, &mut d.p);
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PInit {
    #[default]
    Zeros,
    RandomZeroSum,
}

/// Initial gradient-tracking state with `Σ pⁱ = 0`.
pub fn init_p(n: usize, m: usize, mode: PInit, seed: u64) -> Vec<f64> {
    let mut p = vec![0.0; n * m];
    if mode == PInit::Zeros || n <= 1 {
        return p;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in p.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    for k in 0..m {
        let mean = (0..n).map(|i| p[i * m + k]).sum::<f64>() / n as f64;
        for i in 0..n {
            p[i * m + k] -= mean;
        }
        // Push any rounding residue into the last agent so the sum is exact.
        let residue: f64 = (0..n).map(|i| p[i * m + k]).sum();
        p[(n - 1) * m + k] -= residue;
    }
    p
}

/// Generator error relative to the (verification-only) optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub e_varpi: Vec<f64>,
    pub e_p: Vec<f64>,
}

impl ErrorState {
    pub fn new(varpi: &[f64], p: &[f64], costs: &CostSet, cert: &OptimumCertificate) -> Self {
        let m = costs.dim();
        let n = varpi.len() / m;
        let mut e_varpi = varpi.to_vec();
        let mut e_p = p.to_vec();
        for i in 0..n {
            let g = costs.agent(i).gradient(&cert.z_star);
            for k in 0..m {
                e_varpi[i * m + k] -= cert.z_star[k];
                e_p[i * m + k] += g[k];
            }
        }
        ErrorState { e_varpi, e_p }
    }

    /// `‖e_r‖` with `e_r = (e_ϖ, e_p)`.
    pub fn norm(&self) -> f64 {
        self.e_varpi.iter().chain(&self.e_p).map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Quadratic form of the generator Lyapunov function, precomputed for a
/// network and decision dimension.
#[derive(Debug, Clone)]
pub struct LyapunovForm {
    basis: ReducedBasis,
    reduced_inv: Mat,
    m: usize,
    c1: f64,
}

impl LyapunovForm {
    pub fn new(net: &Network, m: usize, consts: &GeneratorConstants) -> Result<Self> {
        net.require_connected()?;
        let basis = ReducedBasis::new(net.n_agents())?;
        let lr = net.reduced_laplacian(&basis);
        let reduced_inv = Lu::new(&lr)?.inverse();
        Ok(LyapunovForm {
            basis,
            reduced_inv,
            m,
            c1: consts.c1,
        })
    }

    /// `[r̄ᵀ; R̄ᵀ] e` split into the consensus block (length m) and the
    /// disagreement block (length (N−1)·m).
    fn project(&self, e: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.basis.n();
        let m = self.m;
        let mut head = vec![0.0; m];
        let mut tail = vec![0.0; (n - 1) * m];
        for i in 0..n {
            for k in 0..m {
                let v = e[i * m + k];
                head[k] += self.basis.ones[i] * v;
                for j in 0..(n - 1) {
                    tail[j * m + k] += self.basis.r[(i, j)] * v;
                }
            }
        }
        (head, tail)
    }

    pub fn value(&self, err: &ErrorState) -> f64 {
        let n = self.basis.n();
        let m = self.m;
        let (phi_h, phi_t) = self.project(&err.e_varpi);
        let (psi_h, psi_t) = self.project(&err.e_p);
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let mut weighted = sq(&psi_h);
        for a in 0..(n - 1) {
            for b in 0..(n - 1) {
                let w = self.reduced_inv[(a, b)];
                for k in 0..m {
                    weighted += psi_t[a * m + k] * w * psi_t[b * m + k];
                }
            }
        }
        let sum_sq: f64 = phi_h
            .iter()
            .zip(&psi_h)
            .chain(phi_t.iter().zip(&psi_t))
            .map(|(a, b)| (a + b) * (a + b))
            .sum();
        0.5 * self.c1 * (sq(&phi_h) + sq(&phi_t) + weighted) + 0.5 * sum_sq
    }
}

pub fn lyapunov_vr(err: &ErrorState, net: &Network, consts: &GeneratorConstants) -> Result<f64> {
    let m = err.e_varpi.len() / net.n_agents().max(1);
    Ok(LyapunovForm::new(net, m, consts)?.value(err))
}

pub const ENVELOPE_SLACK: f64 = 0.05;

/// Checks `‖e_r(t)‖ ≤ (1+slack)·√(c₃/c₂)·‖e_r(t0)‖·κ(−c*α(μ(t)))` at every
/// sample. `mus` are the gain values at the sample times.
pub fn envelope_monitor(
    times: &[f64],
    mus: &[f64],
    er_norms: &[f64],
    alpha: &GainFunction,
    consts: &GeneratorConstants,
    slack: f64,
) -> Result<MonitorReport> {
    require_nonempty(times.len())?;
    let kappa = kappa_series(alpha, -consts.c_star, mus)?;
    let gain = (consts.c3 / consts.c2).sqrt() * er_norms[0];
    let mut report = MonitorReport::new("generator_envelope");
    for k in 0..times.len() {
        let ratio = safe_ratio(er_norms[k], gain * kappa[k]);
        report.observe(times[k], ratio, 1.0 + slack);
    }
    Ok(report)
}
