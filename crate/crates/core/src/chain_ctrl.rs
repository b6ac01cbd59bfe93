//! Robust tracking controller for chain-integrator agents with a matched,
//! bounded disturbance on the last stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{monic_poly_roots, sym_eigenvalues, Lu, Mat};
use crate::monitors::{kappa_series, require_nonempty, MonitorReport};
use crate::timegain::{alpha_s_from_dc2, check_growth_criterion, CriterionReport, GainFunction, GrowthCriterion};

/// Binomial gains placing every eigenvalue of the companion matrix at −1:
/// `K = [C(m−1,0), …, C(m−1,m−2)]`.
pub fn hurwitz_gain(m: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::DegenerateSize { needed: 2, got: m });
    }
    let d = m - 1;
    let mut k = Vec::with_capacity(d);
    let mut c = 1.0;
    for j in 0..d {
        k.push(c);
        c = c * (d - j) as f64 / (j + 1) as f64;
    }
    Ok(k)
}

/// `(m−1)×(m−1)` companion matrix: shift structure above, `−Kᵀ` in the
/// last row.
pub fn companion(k: &[f64]) -> Mat {
    let d = k.len();
    let mut a = Mat::zeros(d, d);
    for i in 0..d.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for (j, kj) in k.iter().enumerate() {
        a[(d - 1, j)] = -kj;
    }
    a
}

/// Characteristic polynomial coefficients `c_0..c_{n−1}` of a square matrix
/// (monic, ascending), by Faddeev–LeVerrier.
pub fn char_poly(a: &Mat) -> Vec<f64> {
    let n = a.rows();
    let mut coeffs = vec![0.0; n];
    let mut mk = Mat::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        // M_k = A·M_{k−1} + c_{n−k+1}·I
        let mut next = a.matmul(&mk);
        for i in 0..n {
            next[(i, i)] += c_prev;
        }
        mk = next;
        let am = a.matmul(&mk);
        let trace: f64 = (0..n).map(|i| am[(i, i)]).sum();
        c_prev = -trace / k as f64;
        coeffs[n - k] = c_prev;
    }
    coeffs
}

/// Largest real part among the eigenvalues.
pub fn spectral_abscissa(a: &Mat) -> f64 {
    monic_poly_roots(&char_poly(a))
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-10;

/// Solves `PΛ + ΛᵀP = −Q` through its Kronecker-vectorized form.
pub fn solve_lyapunov(lambda: &Mat, q: &Mat) -> Result<Mat> {
    if !lambda.is_square() || q.rows() != lambda.rows() || !q.is_square() {
        return Err(Error::DimensionMismatch {
            expected: lambda.rows(),
            got: q.rows(),
        });
    }
    let abscissa = spectral_abscissa(lambda);
    if !(abscissa < 0.0) {
        return Err(Error::NotHurwitz(abscissa));
    }
    let n = lambda.rows();
    let eye = Mat::identity(n);
    let lt = lambda.transpose();
    // Column-major vec: vec(PΛ) = (Λᵀ⊗I)vec(P), vec(ΛᵀP) = (I⊗Λᵀ)vec(P).
    let op = lt.kron(&eye).add(&eye.kron(&lt));
    let mut rhs = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            rhs[j * n + i] = -q[(i, j)];
        }
    }
    let sol = Lu::new(&op)?.solve(&rhs);
    let mut p = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = sol[j * n + i];
        }
    }
    let p = p.symmetrized();
    let residual = lyapunov_residual(&p, lambda, q);
    if residual > LYAPUNOV_RESIDUAL_TOL * (1.0 + q.frobenius()) {
        return Err(Error::NoConvergence {
            iterations: 1,
            residual,
        });
    }
    Ok(p)
}

/// `‖PΛ + ΛᵀP + Q‖_F`.
pub fn lyapunov_residual(p: &Mat, lambda: &Mat, q: &Mat) -> f64 {
    p.matmul(lambda).add(&lambda.transpose().matmul(p)).add(q).frobenius()
}

/// `v₁ = λ_min(Q)/λ_max(P)`, `v₂ = 2m·λ_max(P)/λ_min(P)`.
pub fn v_constants(p: &Mat, q: &Mat, m: usize) -> Result<(f64, f64)> {
    let ep = sym_eigenvalues(p)?;
    let eq = sym_eigenvalues(q)?;
    let (p_min, p_max) = (ep[0], ep[ep.len() - 1]);
    if !(p_min > 0.0) {
        return Err(Error::NonPositiveInput("P"));
    }
    if !(eq[0] > 0.0) {
        return Err(Error::NonPositiveInput("Q"));
    }
    Ok((eq[0] / p_max, 2.0 * m as f64 * p_max / p_min))
}

/// Known bound `ψ(x)` on the matched uncertainty, selected by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsiBound {
    Zero,
    #[default]
    One,
    /// `1 + tanh(‖x_m‖)`
    TanhLast,
}

impl PsiBound {
    pub fn eval(&self, x_last: &[f64]) -> f64 {
        match self {
            PsiBound::Zero => 0.0,
            PsiBound::One => 1.0,
            PsiBound::TanhLast => 1.0 + crate::linalg::norm(x_last).tanh(),
        }
    }
}

/// Inputs for [`ChainControllerConfig::design`].
#[derive(Debug, Clone)]
pub struct ChainDesign {
    pub order: usize,
    pub stage_dim: usize,
    /// Robust gain `v > 0`.
    pub v: f64,
    /// `None` selects binomial placement.
    pub k: Option<Vec<f64>>,
    /// `None` selects `Q = I`.
    pub q: Option<Mat>,
    pub alpha_x: GainFunction,
    /// `None` derives `α_s` from the second design criterion.
    pub alpha_s: Option<GainFunction>,
    pub psi: PsiBound,
}

#[derive(Debug, Clone)]
pub struct ChainControllerConfig {
    pub order: usize,
    pub stage_dim: usize,
    pub k: Vec<f64>,
    pub lambda: Mat,
    pub p: Mat,
    pub q: Mat,
    pub v1: f64,
    pub v2: f64,
    pub v: f64,
    pub alpha_x: GainFunction,
    pub alpha_s: GainFunction,
    /// `true` when `α_s` was supplied instead of derived.
    pub dc2_bypassed: bool,
    pub psi: PsiBound,
    pub mu_guard: f64,
}

impl ChainControllerConfig {
    pub fn design(d: ChainDesign, mu0: f64, mu_guard: f64) -> Result<Self> {
        let m = d.order;
        if m < 2 {
            return Err(Error::DegenerateSize { needed: 2, got: m });
        }
        if d.stage_dim == 0 {
            return Err(Error::DegenerateSize { needed: 1, got: 0 });
        }
        if !(d.v > 0.0) {
            return Err(Error::NonPositiveInput("v"));
        }
        let k = match d.k {
            Some(k) => {
                if k.len() != m - 1 {
                    return Err(Error::DimensionMismatch {
                        expected: m - 1,
                        got: k.len(),
                    });
                }
                k
            }
            None => hurwitz_gain(m)?,
        };
        let lambda = companion(&k);
        let q = d.q.unwrap_or_else(|| Mat::identity(m - 1));
        let p = solve_lyapunov(&lambda, &q)?;
        let (v1, v2) = v_constants(&p, &q, m)?;
        let (alpha_s, dc2_bypassed) = match d.alpha_s {
            Some(a) => (a, true),
            None => (alpha_s_from_dc2(&d.alpha_x, v1, m as u32, mu0)?, false),
        };
        Ok(ChainControllerConfig {
            order: m,
            stage_dim: d.stage_dim,
            k,
            lambda,
            p,
            q,
            v1,
            v2,
            v: d.v,
            alpha_x: d.alpha_x,
            alpha_s,
            dc2_bypassed,
            psi: d.psi,
            mu_guard,
        })
    }

    pub fn k1(&self) -> f64 {
        self.k[0]
    }

    /// First design criterion for `α_x` against the generator gain.
    pub fn dc1_report(&self, c_star: f64, alpha: &GainFunction, grid: &[f64]) -> Result<CriterionReport> {
        let crit = GrowthCriterion::chain_dc1(self.v1, self.v2, c_star, alpha.clone())?;
        Ok(check_growth_criterion(&self.alpha_x, &crit, grid))
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

    pub fn state_dim(&self) -> usize {
        self.order * self.stage_dim
    }
}

/// Error coordinates of one chain agent at a given `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainErrorView {
    pub e_s: Vec<f64>,
    pub r1: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub e_tilde_s: Vec<f64>,
}

impl ChainErrorView {
    /// Incremental construction: `r₁`, then `s̃`, then `ẽ_s = α_s(μ)s̃`.
    pub fn compute(x: &[f64], reference: &[f64], mu: f64, cfg: &ChainControllerConfig) -> Result<Self> {
        let (m, n) = (cfg.order, cfg.stage_dim);
        if x.len() != m * n {
            return Err(Error::DimensionMismatch {
                expected: m * n,
                got: x.len(),
            });
        }
        if reference.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: reference.len(),
            });
        }
        let ax = cfg.alpha_x.eval(mu);
        let mut e_s = x.to_vec();
        for k in 0..n {
            e_s[k] -= reference[k];
        }
        let mut r1 = vec![0.0; (m - 1) * n];
        for j in 0..(m - 1) {
            let scale = ax.powi(-(j as i32));
            for k in 0..n {
                r1[j * n + k] = scale * x[j * n + k];
            }
        }
        let k1 = cfg.k1();
        let last_scale = ax.powi(-((m - 1) as i32));
        let mut s_tilde = vec![0.0; n];
        for k in 0..n {
            let mut acc = 0.0;
            for j in 0..(m - 1) {
                acc += cfg.k[j] * r1[j * n + k];
            }
            acc += last_scale * x[(m - 1) * n + k];
            s_tilde[k] = acc / k1 - reference[k];
        }
        let a_s = cfg.alpha_s.eval(mu);
        let e_tilde_s = s_tilde.iter().map(|v| a_s * v).collect();
        Ok(ChainErrorView {
            e_s,
            r1,
            s_tilde,
            e_tilde_s,
        })
    }
}

/// Stacked form `k₁⁻¹α_s(μ)(K̃ᵀΦ(μ)⊗I_n)e_s` with `K̃ = [K; 1]`.
pub fn e_tilde_s_stacked(e_s: &[f64], mu: f64, cfg: &ChainControllerConfig) -> Vec<f64> {
    let (m, n) = (cfg.order, cfg.stage_dim);
    let ax = cfg.alpha_x.eval(mu);
    let a_s = cfg.alpha_s.eval(mu);
    let mut out = vec![0.0; n];
    for j in 0..m {
        let kt = if j < m - 1 { cfg.k[j] } else { 1.0 };
        let phi = ax.powi(-(j as i32));
        for k in 0..n {
            out[k] += kt * phi * e_s[j * n + k];
        }
    }
    out.iter().map(|v| a_s * v / cfg.k1()).collect()
}

/// Control input of one chain agent tracking `reference`.
pub fn chain_control(x: &[f64], reference: &[f64], mu: f64, cfg: &ChainControllerConfig) -> Result<Vec<f64>> {
    cfg.guard(mu)?;
    let view = ChainErrorView::compute(x, reference, mu, cfg)?;
    Ok(control_from_view(x, &view, mu, cfg))
}

/// The three additive pieces of the control law.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTerms {
    /// `−(v+ψ²+1)·sign(k₁)·ẽ_s`
    pub robust: Vec<f64>,
    /// `−π(x)`
    pub feedforward: Vec<f64>,
    /// `−B(μ)⁻¹δ_s(μ)·s̃`
    pub transform: Vec<f64>,
}

impl ControlTerms {
    pub fn total(&self) -> Vec<f64> {
        self.robust
            .iter()
            .zip(&self.feedforward)
            .zip(&self.transform)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

pub(crate) fn control_from_view(x: &[f64], view: &ChainErrorView, mu: f64, cfg: &ChainControllerConfig) -> Vec<f64> {
    control_terms(x, view, mu, cfg).total()
}

pub fn control_terms(x: &[f64], view: &ChainErrorView, mu: f64, cfg: &ChainControllerConfig) -> ControlTerms {
    let (m, n) = (cfg.order, cfg.stage_dim);
    let lm = (m - 1) as i32;
    let ax = cfg.alpha_x.eval(mu);
    let dx = cfg.alpha_x.delta(mu);
    let ds = cfg.alpha_s.delta(mu);
    let x_last = &x[(m - 1) * n..];
    let psi = cfg.psi.eval(x_last);
    let robust_gain = (cfg.v + psi * psi + 1.0) * cfg.k1().signum();
    let b_inv = cfg.k1() * ax.powi(lm);
    let ax_lm = ax.powi(lm);

    let mut terms = ControlTerms {
        robust: vec![0.0; n],
        feedforward: vec![0.0; n],
        transform: vec![0.0; n],
    };
    for k in 0..n {
        // Kᵀṙ₁, with ṙ₁ block j = α_x^{−L_j}(x_{j+1} − L_j δ_x x_j)
        let mut k_r1dot = 0.0;
        for j in 0..(m - 1) {
            let lj = j as f64;
            let block = ax.powi(-(j as i32)) * (x[(j + 1) * n + k] - lj * dx * x[j * n + k]);
            k_r1dot += cfg.k[j] * block;
        }
        let pi = ax_lm * k_r1dot - (m - 1) as f64 * dx * x_last[k];
        terms.robust[k] = -robust_gain * view.e_tilde_s[k];
        terms.feedforward[k] = -pi;
        terms.transform[k] = -b_inv * ds * view.s_tilde[k];
    }
    terms
}

/// Fits the smallest `C` with `‖e_s(t)‖ ≤ C·κ(−(v₁/4m)α_x(μ(t)))` and
/// records `sup ‖ẽ_s‖`. Passes when both are finite.
pub fn chain_decay_monitor(
    times: &[f64],
    mus: &[f64],
    es_norms: &[f64],
    e_tilde_norms: &[f64],
    cfg: &ChainControllerConfig,
) -> Result<MonitorReport> {
    require_nonempty(times.len())?;
    let rate = cfg.v1 / (4.0 * cfg.order as f64);
    let kappa = kappa_series(&cfg.alpha_x, -rate, mus)?;
    let mut fit: f64 = 0.0;
    for (e, k) in es_norms.iter().zip(&kappa) {
        fit = fit.max(if *e == 0.0 { 0.0 } else { e / k });
    }
    let sup_tilde = e_tilde_norms.iter().cloned().fold(0.0, f64::max);
    let mut report = MonitorReport::new("chain_decay");
    report.pass = fit.is_finite() && sup_tilde.is_finite();
    report.max_ratio = if es_norms[0] > 0.0 { fit / es_norms[0] } else { 0.0 };
    if !report.pass {
        report.first_violation_t = times
            .iter()
            .zip(es_norms.iter().zip(e_tilde_norms))
            .find(|(_, (a, b))| !a.is_finite() || !b.is_finite())
            .map(|(t, _)| *t);
    }
    Ok(report
        .with_detail("fitted_constant", fit)
        .with_detail("sup_e_tilde_s", sup_tilde))
}
