//! Adaptive backstepping for strict-feedback agents with one unknown scalar
//! parameter, using prescribed-time dynamic filters in place of analytic
//! derivatives of the virtual controls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monitors::{require_nonempty, MonitorReport};
use crate::timegain::{check_growth_criterion, CriterionReport, GainFunction, GrowthCriterion};

/// Known stage nonlinearity `φ_q` with `φ_q(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StageNonlinearity {
    /// `φ(x) = x`
    #[default]
    Linear,
    /// `φ(x) = sin(x)` componentwise
    Sin,
}

impl StageNonlinearity {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            StageNonlinearity::Linear => x.to_vec(),
            StageNonlinearity::Sin => x.iter().map(|v| v.sin()).collect(),
        }
    }

    /// Diagonal of `ψ(x)` in `φ(x) = ψ(x)·x`.
    pub fn psi_diag(&self, x: &[f64]) -> Vec<f64> {
        match self {
            StageNonlinearity::Linear => vec![1.0; x.len()],
            StageNonlinearity::Sin => x.iter().map(|v| if *v == 0.0 { 1.0 } else { v.sin() / v }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrictFeedbackConfig {
    pub order: usize,
    pub stage_dim: usize,
    /// Power offset `l > 0`.
    pub l: f64,
    /// `c_1..c_m`.
    pub c: Vec<f64>,
    /// `υ_2..υ_m`, stored at indices `0..m−1`.
    pub upsilon: Vec<f64>,
    pub sigma: f64,
    pub sigma_prime: f64,
    /// `ρ_2..ρ_m` when the parameters came from the selection recipe.
    pub rho: Option<Vec<f64>>,
    pub alpha_xi: GainFunction,
    /// `φ_2..φ_m`.
    pub phi: Vec<StageNonlinearity>,
    pub mu_guard: f64,
}

/// Lower margins `c̄_q` (q = 1..m) and `ῡ_q` (q = 2..m); `None` entries use
/// the minimum `σ/2`.
#[derive(Debug, Clone, Default)]
pub struct BarMargins {
    pub c_bar: Option<Vec<f64>>,
    pub upsilon_bar: Option<Vec<f64>>,
}

/// Scale exponents `L_q = m + l + 1 − q`, `q = 1..m`.
pub fn scale_exponents(m: usize, l: f64) -> Vec<f64> {
    (1..=m).map(|q| (m + 1 - q) as f64 + l).collect()
}

/// Parameter recipe: `σ = (3+σ′)/2`, `c₁ = c̄₁+L₁+3/2`,
/// `c_q = c̄_q+L_q+2`, `υ_q = ῡ_q+L_q+ρ_q+1/2`.
pub fn select_parameters(
    m: usize,
    n: usize,
    l: f64,
    sigma_prime: f64,
    rho: &[f64],
    margins: &BarMargins,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if m < 2 {
        return Err(Error::DegenerateSize { needed: 2, got: m });
    }
    if n == 0 {
        return Err(Error::DegenerateSize { needed: 1, got: 0 });
    }
    if !(l > 0.0) {
        return Err(Error::NonPositiveInput("l"));
    }
    if !(sigma_prime > 0.0) {
        return Err(Error::MarginTooSmall(format!(
            "sigma_prime = {sigma_prime} must be positive"
        )));
    }
    if rho.len() != m - 1 {
        return Err(Error::DimensionMismatch {
            expected: m - 1,
            got: rho.len(),
        });
    }
    if let Some(bad) = rho.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::MarginTooSmall(format!("rho_q = {bad} must be positive")));
    }
    let sigma = 0.5 * (3.0 + sigma_prime);
    let floor = 0.5 * sigma;
    let c_bar = margins.c_bar.clone().unwrap_or_else(|| vec![floor; m]);
    let u_bar = margins.upsilon_bar.clone().unwrap_or_else(|| vec![floor; m - 1]);
    if c_bar.len() != m || u_bar.len() != m - 1 {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: c_bar.len(),
        });
    }
    if let Some(bad) = c_bar.iter().chain(&u_bar).find(|v| **v < floor) {
        return Err(Error::MarginTooSmall(format!(
            "margin {bad} is below sigma/2 = {floor}"
        )));
    }
    let lq = scale_exponents(m, l);
    let c: Vec<f64> = (0..m)
        .map(|q| c_bar[q] + lq[q] + if q == 0 { 1.5 } else { 2.0 })
        .collect();
    let upsilon: Vec<f64> = (1..m).map(|q| u_bar[q - 1] + lq[q] + rho[q - 1] + 0.5).collect();
    Ok((c, upsilon, sigma))
}

impl StrictFeedbackConfig {
    /// Parameters from the selection recipe.
    #[allow(clippy::too_many_arguments)]
    pub fn from_recipe(
        m: usize,
        n: usize,
        l: f64,
        sigma_prime: f64,
        rho: Vec<f64>,
        margins: &BarMargins,
        alpha_xi: GainFunction,
        phi: Vec<StageNonlinearity>,
        mu_guard: f64,
    ) -> Result<Self> {
        let (c, upsilon, sigma) = select_parameters(m, n, l, sigma_prime, &rho, margins)?;
        let cfg = StrictFeedbackConfig {
            order: m,
            stage_dim: n,
            l,
            c,
            upsilon,
            sigma,
            sigma_prime,
            rho: Some(rho),
            alpha_xi,
            phi,
            mu_guard,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Literal gains, bypassing the recipe. `σ′` is back-solved from `σ`.
    #[allow(clippy::too_many_arguments)]
    pub fn raw(
        m: usize,
        n: usize,
        l: f64,
        c: Vec<f64>,
        upsilon: Vec<f64>,
        sigma: f64,
        alpha_xi: GainFunction,
        phi: Vec<StageNonlinearity>,
        mu_guard: f64,
    ) -> Result<Self> {
        let cfg = StrictFeedbackConfig {
            order: m,
            stage_dim: n,
            l,
            c,
            upsilon,
            sigma,
            sigma_prime: 2.0 * sigma - 3.0,
            rho: None,
            alpha_xi,
            phi,
            mu_guard,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let m = self.order;
        if m < 2 {
            return Err(Error::DegenerateSize { needed: 2, got: m });
        }
        if self.stage_dim == 0 {
            return Err(Error::DegenerateSize { needed: 1, got: 0 });
        }
        if self.c.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.c.len(),
            });
        }
        for len in [self.upsilon.len(), self.phi.len()] {
            if len != m - 1 {
                return Err(Error::DimensionMismatch {
                    expected: m - 1,
                    got: len,
                });
            }
        }
        if !(self.l > 0.0) {
            return Err(Error::NonPositiveInput("l"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::NonPositiveInput("sigma"));
        }
        if self.c.iter().chain(&self.upsilon).any(|v| !(*v > 0.0)) {
            return Err(Error::NonPositiveInput("c/upsilon"));
        }
        Ok(())
    }

    pub fn exponents(&self) -> Vec<f64> {
        scale_exponents(self.order, self.l)
    }

    pub fn state_dim(&self) -> usize {
        self.order * self.stage_dim
    }

    /// `θ̂` plus the filter states.
    pub fn ctrl_dim(&self) -> usize {
        1 + (self.order - 1) * self.stage_dim
    }

    /// Design criterion for `α_ξ` against the generator gain.
    pub fn dc_xi_report(&self, c_star: f64, alpha: &GainFunction, grid: &[f64]) -> Result<CriterionReport> {
        let l2 = self.exponents()[1];
        let crit = GrowthCriterion::strict_dc_xi(c_star, l2, alpha.clone())?;
        Ok(check_growth_criterion(&self.alpha_xi, &crit, grid))
    }

    fn guard(&self, mu: f64) -> Result<()> {
        if mu > self.mu_guard * (1.0 + 1e-12) {
            return Err(Error::GuardExceeded {
                mu,
                guard: self.mu_guard,
            });
        }
        Ok(())
    }
}

/// `θ̂` and the stacked filter states `ξ_{2f}..ξ_{mf}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub theta_hat: f64,
    pub xi_f: Vec<f64>,
}

impl ControllerState {
    pub fn from_slice(s: &[f64]) -> Self {
        ControllerState {
            theta_hat: s[0],
            xi_f: s[1..].to_vec(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.xi_f.len());
        v.push(self.theta_hat);
        v.extend_from_slice(&self.xi_f);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterInit {
    /// `ξ_f(t0) = 0`.
    #[default]
    Zeros,
    /// `ξ_{qf}(t0) = ξ_{q−1}(t0)`, so every filter starts at rest.
    Rest,
}

/// Initial controller state for a plant state and reference.
pub fn initial_controller_state(
    x: &[f64],
    reference: &[f64],
    theta_hat0: f64,
    mode: FilterInit,
    mu0: f64,
    cfg: &StrictFeedbackConfig,
) -> Result<ControllerState> {
    let n = cfg.stage_dim;
    let mut ctrl = ControllerState {
        theta_hat: theta_hat0,
        xi_f: vec![0.0; (cfg.order - 1) * n],
    };
    if mode == FilterInit::Rest {
        // ξ_q depends on ξ_{qf} only, so fill the filters stage by stage.
        for q in 1..cfg.order {
            let vc = virtual_controls(x, reference, &ctrl, mu0, cfg)?;
            ctrl.xi_f[(q - 1) * n..q * n].copy_from_slice(&vc.xi[q - 1]);
        }
    }
    Ok(ctrl)
}

/// Virtual controls and the tracking/filter errors, per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualControls {
    /// `ξ_1..ξ_m`
    pub xi: Vec<Vec<f64>>,
    /// `x̃_1..x̃_m`
    pub x_tilde: Vec<Vec<f64>>,
    /// `ξ̃_2..ξ̃_m`
    pub xi_tilde: Vec<Vec<f64>>,
}

pub fn virtual_controls(
    x: &[f64],
    reference: &[f64],
    ctrl: &ControllerState,
    mu: f64,
    cfg: &StrictFeedbackConfig,
) -> Result<VirtualControls> {
    cfg.guard(mu)?;
    let (m, n) = (cfg.order, cfg.stage_dim);
    if x.len() != m * n {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            got: x.len(),
        });
    }
    if reference.len() != n || ctrl.xi_f.len() != (m - 1) * n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: reference.len(),
        });
    }
    let a = cfg.alpha_xi.eval(mu);
    let stage = |q: usize| &x[q * n..(q + 1) * n];
    let x1_tilde: Vec<f64> = stage(0).iter().zip(reference).map(|(x, r)| x - r).collect();
    let xi1: Vec<f64> = x1_tilde.iter().map(|v| -cfg.c[0] * a * v).collect();
    let mut xi = vec![xi1];
    let mut x_tilde = vec![x1_tilde];
    let mut xi_tilde = Vec::with_capacity(m - 1);
    for q in 1..m {
        let xf = &ctrl.xi_f[(q - 1) * n..q * n];
        let xq = stage(q);
        let phi = cfg.phi[q - 1].eval(xq);
        let xt: Vec<f64> = xq.iter().zip(xf).map(|(a, b)| a - b).collect();
        let et: Vec<f64> = xf.iter().zip(&xi[q - 1]).map(|(a, b)| a - b).collect();
        let next: Vec<f64> = (0..n)
            .map(|k| -cfg.c[q] * a * xt[k] - ctrl.theta_hat * phi[k] - cfg.upsilon[q - 1] * a * et[k])
            .collect();
        xi.push(next);
        x_tilde.push(xt);
        xi_tilde.push(et);
    }
    Ok(VirtualControls { xi, x_tilde, xi_tilde })
}

/// `ξ̇_{qf} = υ_q α_ξ(μ)(ξ_{q−1} − ξ_{qf})`.
pub fn filter_rhs(xi_f: &[f64], xi: &[Vec<f64>], mu: f64, cfg: &StrictFeedbackConfig) -> Result<Vec<f64>> {
    cfg.guard(mu)?;
    let n = cfg.stage_dim;
    let a = cfg.alpha_xi.eval(mu);
    let mut d = vec![0.0; xi_f.len()];
    for q in 1..cfg.order {
        let gain = cfg.upsilon[q - 1] * a;
        for (k, target) in xi[q - 1].iter().enumerate().take(n) {
            let idx = (q - 1) * n + k;
            d[idx] = gain * (target - xi_f[idx]);
        }
    }
    Ok(d)
}

/// `τ = Σ_{q≥2} α_ξ(μ)^{2L_q} x̃_qᵀφ_q(x_q)`.
pub fn adaptation_tau(x: &[f64], x_tilde: &[Vec<f64>], mu: f64, cfg: &StrictFeedbackConfig) -> f64 {
    let n = cfg.stage_dim;
    let a = cfg.alpha_xi.eval(mu);
    let lq = cfg.exponents();
    let mut tau = 0.0;
    for q in 1..cfg.order {
        let phi = cfg.phi[q - 1].eval(&x[q * n..(q + 1) * n]);
        let inner: f64 = x_tilde[q].iter().zip(&phi).map(|(a, b)| a * b).sum();
        tau += a.powf(2.0 * lq[q]) * inner;
    }
    tau
}

/// `θ̂̇ = τ − σα_ξ(μ)θ̂`.
pub fn adaptation_rhs(theta_hat: f64, tau: f64, mu: f64, cfg: &StrictFeedbackConfig) -> Result<f64> {
    cfg.guard(mu)?;
    Ok(tau - cfg.sigma * cfg.alpha_xi.eval(mu) * theta_hat)
}

/// `u = ξ_m`.
pub fn sf_control(
    x: &[f64],
    reference: &[f64],
    ctrl: &ControllerState,
    mu: f64,
    cfg: &StrictFeedbackConfig,
) -> Result<Vec<f64>> {
    let mut vc = virtual_controls(x, reference, ctrl, mu, cfg)?;
    Ok(vc.xi.pop().expect("order >= 2"))
}

/// Scaled coordinates `ω_q = α_ξ^{L_q}x̃_q`, `η_q = α_ξ^{L_q}ξ̃_q`,
/// `θ̃ = θ − θ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledErrors {
    pub omega: Vec<f64>,
    pub eta: Vec<f64>,
    pub theta_tilde: f64,
}

impl ScaledErrors {
    pub fn from_virtual(vc: &VirtualControls, theta: f64, theta_hat: f64, mu: f64, cfg: &StrictFeedbackConfig) -> Self {
        let a = cfg.alpha_xi.eval(mu);
        let lq = cfg.exponents();
        let omega = vc
            .x_tilde
            .iter()
            .enumerate()
            .flat_map(|(q, v)| {
                let s = a.powf(lq[q]);
                v.iter().map(move |x| s * x)
            })
            .collect();
        let eta = vc
            .xi_tilde
            .iter()
            .enumerate()
            .flat_map(|(q, v)| {
                let s = a.powf(lq[q + 1]);
                v.iter().map(move |x| s * x)
            })
            .collect();
        ScaledErrors {
            omega,
            eta,
            theta_tilde: theta - theta_hat,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.omega.iter().chain(&self.eta).map(|v| v * v).sum::<f64>() + self.theta_tilde * self.theta_tilde).sqrt()
    }
}

/// Stacked error `e_s = [x₁−ϖ; x₂; …; x_m; θ̂; ξ_f]`.
pub fn stacked_error(x: &[f64], reference: &[f64], ctrl: &ControllerState, n: usize) -> Vec<f64> {
    let mut e = x.to_vec();
    for k in 0..n {
        e[k] -= reference[k];
    }
    e.push(ctrl.theta_hat);
    e.extend_from_slice(&ctrl.xi_f);
    e
}

/// Scaled errors from the stacked selector form
/// `ω = (Φ₁⊗I)Λ₁e_s`, `η = (Φ₂⊗I)(Λ₂e_s − Λ₃ξ)`, `θ̃ = θ − Λ₄e_s`, with the
/// filter block of `Λ₁` entering as `−I` so that `x̃_q = x_q − ξ_{qf}`.
pub fn scaled_errors_stacked(
    e_s: &[f64],
    xi: &[Vec<f64>],
    theta: f64,
    mu: f64,
    cfg: &StrictFeedbackConfig,
) -> ScaledErrors {
    let (m, n) = (cfg.order, cfg.stage_dim);
    let a = cfg.alpha_xi.eval(mu);
    let lq = cfg.exponents();
    let dim_e = m * n + 1 + (m - 1) * n;
    let filt0 = m * n + 1;
    // Λ₁ as an explicit (mn × dim_e) selector.
    let mut lambda1 = vec![vec![0.0; dim_e]; m * n];
    for r in 0..m * n {
        lambda1[r][r] = 1.0;
        if r >= n {
            lambda1[r][filt0 + r - n] = -1.0;
        }
    }
    let omega = (0..m * n)
        .map(|r| {
            let s = a.powf(lq[r / n]);
            s * lambda1[r].iter().zip(e_s).map(|(l, e)| l * e).sum::<f64>()
        })
        .collect();
    let xi_flat: Vec<f64> = xi.iter().take(m - 1).flatten().copied().collect();
    let eta = (0..(m - 1) * n)
        .map(|r| {
            let s = a.powf(lq[r / n + 1]);
            s * (e_s[filt0 + r] - xi_flat[r])
        })
        .collect();
    ScaledErrors {
        omega,
        eta,
        theta_tilde: theta - e_s[m * n],
    }
}

pub const INVARIANT_SET_SLACK: f64 = 0.02;

/// Passes iff `‖ẽ_s(t0)‖ ≤ h` implies `‖ẽ_s(t)‖ ≤ h(1+slack)` at every
/// sample. A violated premise is reported in the details.
pub fn invariant_set_monitor(times: &[f64], e_tilde_norms: &[f64], h: f64, slack: f64) -> Result<MonitorReport> {
    require_nonempty(times.len())?;
    let mut report = MonitorReport::new("invariant_set");
    let premise = e_tilde_norms[0] <= h;
    if premise {
        for (t, e) in times.iter().zip(e_tilde_norms) {
            report.observe(*t, e / h, 1.0 + slack);
        }
    } else {
        report.max_ratio = e_tilde_norms.iter().cloned().fold(0.0, f64::max) / h;
    }
    Ok(report
        .with_detail("h", h)
        .with_detail("premise_holds", if premise { 1.0 } else { 0.0 }))
}

/// Fits the smallest `C` with `‖e_s(t)‖ ≤ C·α_ξ(μ(t))⁻¹`.
pub fn scaled_decay_monitor(
    times: &[f64],
    mus: &[f64],
    es_norms: &[f64],
    e_tilde_norms: &[f64],
    alpha_xi: &GainFunction,
) -> Result<MonitorReport> {
    require_nonempty(times.len())?;
    let mut fit: f64 = 0.0;
    for (e, mu) in es_norms.iter().zip(mus) {
        fit = fit.max(e * alpha_xi.eval(*mu));
    }
    let sup_tilde = e_tilde_norms.iter().cloned().fold(0.0, f64::max);
    let mut report = MonitorReport::new("strict_feedback_decay");
    report.pass = fit.is_finite() && sup_tilde.is_finite();
    report.max_ratio = if es_norms[0] > 0.0 {
        fit / (es_norms[0] * alpha_xi.eval(mus[0]))
    } else {
        0.0
    };
    Ok(report
        .with_detail("fitted_constant", fit)
        .with_detail("sup_e_tilde_s", sup_tilde))
}

/// Checks `|θ̂(t)| ≤ (α_ξ(μ0)|θ̂(t0)| + (2σ′)^{-1/2}·τ_max)·α_ξ(μ(t))⁻¹`.
pub fn theta_hat_bound_monitor(
    times: &[f64],
    mus: &[f64],
    theta_hat: &[f64],
    tau: &[f64],
    cfg: &StrictFeedbackConfig,
) -> Result<MonitorReport> {
    require_nonempty(times.len())?;
    let tau_max = tau.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let a0 = cfg.alpha_xi.eval(mus[0]);
    let numer = a0 * theta_hat[0].abs() + tau_max / (2.0 * cfg.sigma_prime).sqrt();
    let mut report = MonitorReport::new("theta_hat_bound");
    for k in 0..times.len() {
        let bound = numer / cfg.alpha_xi.eval(mus[k]);
        let ratio = if theta_hat[k] == 0.0 {
            0.0
        } else {
            theta_hat[k].abs() / bound
        };
        report.observe(times[k], ratio, 1.0);
    }
    Ok(report.with_detail("tau_max", tau_max))
}
