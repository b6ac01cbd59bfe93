//! Time-varying gain calculus.
//!
//! The prescribed-time gain `μ(t) = 1/(T + t0 − t)` grows without bound as
//! `t` approaches the deadline `t0 + T`. Everything that decays in prescribed
//! time is expressed through the factor
//! `κ(ι·α(μ)) = exp(ι ∫_{t0}^{t} α(μ(τ)) dτ)` for some class-K∞ gain `α`.
//!
//! Because `dμ/dt = μ²`, the time integral is evaluated in the gain
//! variable: `∫_{t0}^{t} α(μ(τ)) dτ = ∫_{μ(t0)}^{μ(t)} α(s)/s² ds`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prescribed horizon `[t0, t0 + T)` and the guard fraction at which
/// simulation stops short of the singularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrescribedClock {
    pub t0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_guard_frac")]
    pub guard_frac: f64,
}

fn default_guard_frac() -> f64 {
    0.999
}

impl PrescribedClock {
    pub fn new(t0: f64, horizon: f64, guard_frac: f64) -> Result<Self> {
        let clock = PrescribedClock {
            t0,
            horizon,
            guard_frac,
        };
        clock.validate()?;
        Ok(clock)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::NonPositiveInput("T"));
        }
        if !(self.guard_frac > 0.0 && self.guard_frac < 1.0) {
            return Err(Error::Config(format!(
                "guard_frac must lie in (0, 1), got {}",
                self.guard_frac
            )));
        }
        if !self.t0.is_finite() {
            return Err(Error::Config("t0 must be finite".into()));
        }
        Ok(())
    }

    /// The deadline `t0 + T` (excluded from the window).
    pub fn deadline(&self) -> f64 {
        self.t0 + self.horizon
    }

    pub fn guard_time(&self) -> f64 {
        self.t0 + self.guard_frac * self.horizon
    }

    /// `μ(t0) = 1/T`.
    pub fn mu0(&self) -> f64 {
        1.0 / self.horizon
    }

    /// `μ` at the guard time, `1/((1 − guard_frac)·T)`.
    pub fn mu_guard(&self) -> f64 {
        1.0 / ((1.0 - self.guard_frac) * self.horizon)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t < self.deadline()
    }

    pub fn mu_at(&self, t: f64) -> Result<f64> {
        if !self.contains(t) {
            return Err(Error::TimeOutOfWindow {
                t,
                t0: self.t0,
                end: self.deadline(),
            });
        }
        Ok(1.0 / (self.horizon + self.t0 - t))
    }

    /// Inverse of `mu_at`: the time at which the gain reaches `mu`.
    pub fn time_at_mu(&self, mu: f64) -> f64 {
        self.deadline() - 1.0 / mu
    }
}

/// Tag naming the closed-form family a gain belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainFamily {
    Linear,
    Power,
    Log,
    Exp,
    Exponential,
    Table,
    Dc2,
}

/// A scalar gain function `α(s)` with its derivative.
///
/// All families except `Exponential` are class K∞ (`α(0) = 0`, strictly
/// increasing, unbounded). `Exponential` (`k·e^{a s}`) starts at `k > 0`; it
/// exists to replay hand-picked transformation gains such as `α_s(μ) = e^μ`.
#[derive(Debug, Clone, PartialEq)]
pub enum GainFunction {
    /// `k·s`
    Linear { k: f64 },
    /// `k·s^a`
    Power { k: f64, a: f64 },
    /// `k·s·ln(s + 2)`
    Log { k: f64 },
    /// `k1·s·exp(k2·s)`
    Exp { k1: f64, k2: f64 },
    /// `k·exp(a·s)`
    Exponential { k: f64, a: f64 },
    /// Piecewise-linear interpolation through `(s_i, v_i)`, linear
    /// extrapolation past the last knot; `(0, 0)` is prepended if absent.
    Table { s: Vec<f64>, v: Vec<f64> },
    /// `α_x(s)^m · exp((v1/2) ∫_{mu0}^{s} τ⁻² α_x(τ) dτ)`.
    Dc2 {
        alpha_x: Box<GainFunction>,
        v1: f64,
        m: u32,
        mu0: f64,
    },
}

/// Serialized gain: `{"family": "...", "params": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSpec {
    pub family: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl GainFunction {
    pub fn linear(k: f64) -> Self {
        GainFunction::Linear { k }
    }

    pub fn power(k: f64, a: f64) -> Self {
        GainFunction::Power { k, a }
    }

    pub fn from_spec(spec: &GainSpec) -> Result<Self> {
        let p = &spec.params;
        let need = |n: usize| -> Result<()> {
            if p.len() != n {
                return Err(Error::InvalidGain(format!(
                    "family `{}` takes {} params, got {}",
                    spec.family,
                    n,
                    p.len()
                )));
            }
            Ok(())
        };
        let gain = match spec.family.as_str() {
            "linear" => {
                need(1)?;
                GainFunction::Linear { k: p[0] }
            }
            "power" => {
                need(2)?;
                GainFunction::Power { k: p[0], a: p[1] }
            }
            "log" => {
                need(1)?;
                GainFunction::Log { k: p[0] }
            }
            "exp" => {
                need(2)?;
                GainFunction::Exp { k1: p[0], k2: p[1] }
            }
            "exponential" => {
                need(2)?;
                GainFunction::Exponential { k: p[0], a: p[1] }
            }
            "table" => {
                if p.len() < 4 || !p.len().is_multiple_of(2) {
                    return Err(Error::InvalidGain(
                        "table params are s0, v0, s1, v1, ... with at least two knots".into(),
                    ));
                }
                let s = p.iter().step_by(2).copied().collect();
                let v = p.iter().skip(1).step_by(2).copied().collect();
                GainFunction::table(s, v)?
            }
            other => return Err(Error::InvalidGain(format!("unknown family `{other}`"))),
        };
        gain.validate()?;
        Ok(gain)
    }

    /// Inverse of [`from_spec`](Self::from_spec); `None` for derived gains.
    pub fn to_spec(&self) -> Option<GainSpec> {
        let (family, params) = match self {
            GainFunction::Linear { k } => ("linear", vec![*k]),
            GainFunction::Power { k, a } => ("power", vec![*k, *a]),
            GainFunction::Log { k } => ("log", vec![*k]),
            GainFunction::Exp { k1, k2 } => ("exp", vec![*k1, *k2]),
            GainFunction::Exponential { k, a } => ("exponential", vec![*k, *a]),
            GainFunction::Table { s, v } => ("table", s.iter().zip(v).flat_map(|(a, b)| [*a, *b]).collect()),
            GainFunction::Dc2 { .. } => return None,
        };
        Some(GainSpec {
            family: family.into(),
            params,
        })
    }

    pub fn table(mut s: Vec<f64>, mut v: Vec<f64>) -> Result<Self> {
        if s.len() != v.len() || s.len() < 2 {
            return Err(Error::InvalidGain("table needs matching knot lists".into()));
        }
        if s[0] != 0.0 {
            s.insert(0, 0.0);
            v.insert(0, 0.0);
        }
        if s.windows(2).any(|w| w[1] <= w[0]) || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGain(
                "table knots and values must be strictly increasing".into(),
            ));
        }
        Ok(GainFunction::Table { s, v })
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            GainFunction::Linear { k } | GainFunction::Log { k } => *k > 0.0,
            GainFunction::Power { k, a } => *k > 0.0 && *a > 0.0,
            GainFunction::Exp { k1, k2 } => *k1 > 0.0 && *k2 >= 0.0,
            GainFunction::Exponential { k, a } => *k > 0.0 && *a > 0.0,
            GainFunction::Table { .. } => true,
            GainFunction::Dc2 { v1, mu0, .. } => *v1 > 0.0 && *mu0 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidGain(format!("{self:?} is not strictly increasing")))
        }
    }

    pub fn family(&self) -> GainFamily {
        match self {
            GainFunction::Linear { .. } => GainFamily::Linear,
            GainFunction::Power { .. } => GainFamily::Power,
            GainFunction::Log { .. } => GainFamily::Log,
            GainFunction::Exp { .. } => GainFamily::Exp,
            GainFunction::Exponential { .. } => GainFamily::Exponential,
            GainFunction::Table { .. } => GainFamily::Table,
            GainFunction::Dc2 { .. } => GainFamily::Dc2,
        }
    }

    /// `true` when `α(0) = 0`.
    pub fn is_class_k_infinity(&self) -> bool {
        !matches!(self, GainFunction::Exponential { .. })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.try_eval(s).unwrap_or(f64::NAN)
    }

    pub fn try_eval(&self, s: f64) -> Result<f64> {
        Ok(match self {
            GainFunction::Linear { k } => k * s,
            GainFunction::Power { k, a } => k * s.powf(*a),
            GainFunction::Log { k } => k * s * (s + 2.0).ln(),
            GainFunction::Exp { k1, k2 } => k1 * s * (k2 * s).exp(),
            GainFunction::Exponential { k, a } => k * (a * s).exp(),
            GainFunction::Table { s: knots, v } => table_eval(knots, v, s),
            GainFunction::Dc2 { alpha_x, v1, m, mu0 } => {
                let integral = gain_integral(alpha_x, *mu0, s)?;
                alpha_x.eval(s).powi(*m as i32) * (0.5 * v1 * integral).exp()
            }
        })
    }

    /// `dα/ds`.
    pub fn deriv(&self, s: f64) -> f64 {
        match self {
            GainFunction::Linear { k } => *k,
            GainFunction::Power { k, a } => k * a * s.powf(a - 1.0),
            GainFunction::Log { k } => k * ((s + 2.0).ln() + s / (s + 2.0)),
            GainFunction::Exp { k1, k2 } => k1 * (k2 * s).exp() * (1.0 + k2 * s),
            GainFunction::Exponential { k, a } => k * a * (a * s).exp(),
            GainFunction::Table { .. } => {
                let h = 1e-6 * s.abs().max(1e-12);
                (self.eval(s + h) - self.eval(s - h)) / (2.0 * h)
            }
            GainFunction::Dc2 { alpha_x, v1, m, .. } => {
                let ax = alpha_x.eval(s);
                let log_deriv = f64::from(*m) * alpha_x.deriv(s) / ax + 0.5 * v1 * ax / (s * s);
                self.eval(s) * log_deriv
            }
        }
    }

    /// `δ(s) = α'(s)·s²/α(s)`, so that `d/dt α(μ) = δ(μ)·α(μ)`.
    pub fn delta(&self, s: f64) -> f64 {
        match self {
            GainFunction::Linear { .. } => s,
            GainFunction::Power { a, .. } => a * s,
            GainFunction::Exponential { a, .. } => a * s * s,
            GainFunction::Dc2 { alpha_x, v1, m, .. } => f64::from(*m) * alpha_x.delta(s) + 0.5 * v1 * alpha_x.eval(s),
            _ => self.deriv(s) * s * s / self.eval(s),
        }
    }
}

fn table_eval(knots: &[f64], vals: &[f64], s: f64) -> f64 {
    let n = knots.len();
    let idx = match knots.iter().position(|&k| k > s) {
        Some(0) => 1,
        Some(i) => i,
        None => n - 1,
    };
    let (s0, s1) = (knots[idx - 1], knots[idx]);
    let (v0, v1) = (vals[idx - 1], vals[idx]);
    v0 + (v1 - v0) * (s - s0) / (s1 - s0)
}

const QUAD_REL_TOL: f64 = 1e-9;
const QUAD_MAX_DEPTH: u32 = 20;

/// `∫_{lo}^{hi} α(s)/s² ds`, which equals `∫ α(μ(τ)) dτ` between the times at
/// which `μ` takes the values `lo` and `hi`.
pub fn gain_integral(alpha: &GainFunction, lo: f64, hi: f64) -> Result<f64> {
    if hi == lo {
        return Ok(0.0);
    }
    if !(lo > 0.0 && hi > 0.0) {
        return Err(Error::QuadratureFailure { lo, hi });
    }
    match alpha {
        GainFunction::Linear { k } => Ok(k * (hi / lo).ln()),
        GainFunction::Power { k, a } if (a - 1.0).abs() < 1e-15 => Ok(k * (hi / lo).ln()),
        GainFunction::Power { k, a } => {
            let e = a - 1.0;
            Ok(k * (hi.powf(e) - lo.powf(e)) / e)
        }
        _ => {
            // Substitute s = e^u: ∫ α(e^u) e^{-u} du, smooth over wide ranges.
            let f = |u: f64| {
                let s = u.exp();
                alpha.eval(s) / s
            };
            adaptive_simpson(&f, lo.ln(), hi.ln(), QUAD_REL_TOL).ok_or(Error::QuadratureFailure { lo, hi })
        }
    }
}

/// Adaptive Simpson quadrature with relative tolerance `rel_tol` and at most
/// 2^20 subintervals. Returns `None` if the tolerance is not met.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Option<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Coarse magnitude estimate anchors the relative tolerance.
    let scale = {
        let n = 64;
        let h = (b - a) / n as f64;
        (0..=n).map(|i| f(a + i as f64 * h).abs()).sum::<f64>() * h.abs()
    };
    let tol = rel_tol * scale.max(f64::MIN_POSITIVE);
    let v = simpson_rec(f, a, b, fa, fm, fb, whole, tol, QUAD_MAX_DEPTH)?;
    v.is_finite().then_some(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol {
        return Some(left + right + diff / 15.0);
    }
    if depth == 0 || !diff.is_finite() {
        return None;
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Some(l + r)
}

pub fn mu_at(clock: &PrescribedClock, t: f64) -> Result<f64> {
    clock.mu_at(t)
}

/// `κ(ι·α(μ)) = exp(ι ∫_{t0}^{t} α(μ(τ)) dτ)`.
pub fn kappa(clock: &PrescribedClock, alpha: &GainFunction, iota: f64, t: f64) -> Result<f64> {
    let mu = clock.mu_at(t)?;
    if iota == 0.0 {
        return Ok(1.0);
    }
    Ok((iota * gain_integral(alpha, clock.mu0(), mu)?).exp())
}

/// Which growth criterion a gain must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    /// `α'(s) ≤ ½c*·s⁻²·α(s)²` for the optimum-seeking generator.
    Generator,
    /// `α_x'(s) ≤ v1/(2 v2)·s⁻²·α_x(s)²` and `α_x ≤ (c*/v1)·α`.
    ChainDc1,
    /// `α_ξ'(s) ≤ s⁻²·α_ξ(s)²` and `α_ξ ≤ c*·α/(2 L2)`.
    StrictDcXi,
}

/// A secondary inequality `α_sub(s) ≤ coef·α_main(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBound {
    pub main: GainFunction,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthCriterion {
    pub kind: CriterionKind,
    /// Coefficient `C` in `α'(s) ≤ C·s⁻²·α(s)²`.
    pub rate_coef: f64,
    pub coupling: Option<CouplingBound>,
}

impl GrowthCriterion {
    pub fn generator(c_star: f64) -> Result<Self> {
        positive("c_star", c_star)?;
        Ok(GrowthCriterion {
            kind: CriterionKind::Generator,
            rate_coef: 0.5 * c_star,
            coupling: None,
        })
    }

    pub fn chain_dc1(v1: f64, v2: f64, c_star: f64, alpha: GainFunction) -> Result<Self> {
        positive("v1", v1)?;
        positive("v2", v2)?;
        positive("c_star", c_star)?;
        Ok(GrowthCriterion {
            kind: CriterionKind::ChainDc1,
            rate_coef: v1 / (2.0 * v2),
            coupling: Some(CouplingBound {
                main: alpha,
                coef: c_star / v1,
            }),
        })
    }

    pub fn strict_dc_xi(c_star: f64, l2: f64, alpha: GainFunction) -> Result<Self> {
        positive("c_star", c_star)?;
        positive("L2", l2)?;
        Ok(GrowthCriterion {
            kind: CriterionKind::StrictDcXi,
            rate_coef: 1.0,
            coupling: Some(CouplingBound {
                main: alpha,
                coef: c_star / (2.0 * l2),
            }),
        })
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveInput(name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub kind: CriterionKind,
    pub pass: bool,
    /// Minimum relative slack of the growth inequality over the grid
    /// (negative means violated).
    pub worst_margin: f64,
    pub worst_s: f64,
    /// Minimum relative slack of the coupling inequality, if any.
    pub coupling_margin: Option<f64>,
    pub coupling_worst_s: Option<f64>,
}

/// Relative slack below which a pointwise check counts as violated; absorbs
/// rounding at exact-boundary gains such as `k = 2/c*`.
const CRITERION_TOL: f64 = 1e-9;

/// `n` log-spaced points covering `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Pointwise check of a gain growth criterion on `grid`.
pub fn check_growth_criterion(alpha: &GainFunction, crit: &GrowthCriterion, grid: &[f64]) -> CriterionReport {
    let mut worst = (f64::INFINITY, f64::NAN);
    for &s in grid {
        let a = alpha.eval(s);
        let lhs = alpha.deriv(s);
        let rhs = crit.rate_coef * a * a / (s * s);
        let margin = (rhs - lhs) / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        let margin = if margin.is_nan() { -f64::INFINITY } else { margin };
        if margin < worst.0 {
            worst = (margin, s);
        }
    }
    let mut pass = worst.0 >= -CRITERION_TOL;

    let (coupling_margin, coupling_worst_s) = match &crit.coupling {
        Some(cb) => {
            let mut cw = (f64::INFINITY, f64::NAN);
            for &s in grid {
                let sub = alpha.eval(s);
                let bound = cb.coef * cb.main.eval(s);
                let m = (bound - sub) / sub.abs().max(bound.abs()).max(f64::MIN_POSITIVE);
                let m = if m.is_nan() { -f64::INFINITY } else { m };
                if m < cw.0 {
                    cw = (m, s);
                }
            }
            pass &= cw.0 >= -CRITERION_TOL;
            (Some(cw.0), Some(cw.1))
        }
        None => (None, None),
    };

    CriterionReport {
        kind: crit.kind,
        pass,
        worst_margin: worst.0,
        worst_s: worst.1,
        coupling_margin,
        coupling_worst_s,
    }
}

/// Default grid for criterion checks: 1000 log-spaced points on
/// `[1/T, μ(t_guard)]`.
pub fn clock_grid(clock: &PrescribedClock, points: usize) -> Vec<f64> {
    log_grid(clock.mu0(), clock.mu_guard(), points.max(2))
}

/// Transformation gain built from `α_x` by the second chain design
/// criterion, with the integral taken from `mu0` rather than zero so that it
/// stays finite for gains that are linear near the origin.
pub fn alpha_s_from_dc2(alpha_x: &GainFunction, v1: f64, m: u32, mu0: f64) -> Result<GainFunction> {
    positive("v1", v1)?;
    positive("mu0", mu0)?;
    if m == 0 {
        return Err(Error::Config("chain order must be at least 1".into()));
    }
    let gain = GainFunction::Dc2 {
        alpha_x: Box::new(alpha_x.clone()),
        v1,
        m,
        mu0,
    };
    // Probe the quadrature once so failures surface at construction.
    gain.try_eval(mu0 * 10.0)?;
    Ok(gain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_clock() -> PrescribedClock {
        PrescribedClock::new(0.0, 1.0, 0.999).unwrap()
    }

    #[test]
    fn mu_examples() {
        let c = unit_clock();
        assert_eq!(c.mu_at(0.0).unwrap(), 1.0);
        assert_eq!(c.mu_at(0.5).unwrap(), 2.0);
        assert!(matches!(c.mu_at(1.0), Err(Error::TimeOutOfWindow { .. })));
        assert!(matches!(c.mu_at(-0.1), Err(Error::TimeOutOfWindow { .. })));
    }

    #[test]
    fn mu_derivative_is_mu_squared() {
        let c = unit_clock();
        let h = 1e-6 * c.horizon;
        for &t in &[0.0, 0.3, 0.7, 0.95] {
            let mu = c.mu_at(t).unwrap();
            let fd = (c.mu_at(t + h).unwrap() - mu) / h;
            assert!((fd - mu * mu).abs() / (mu * mu) < 1e-4);
        }
    }

    #[test]
    fn clock_rejects_bad_fields() {
        assert!(PrescribedClock::new(0.0, 0.0, 0.5).is_err());
        assert!(PrescribedClock::new(0.0, 1.0, 1.0).is_err());
        assert!(PrescribedClock::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn kappa_examples() {
        let c = unit_clock();
        let a = GainFunction::linear(2.0);
        assert_eq!(kappa(&c, &a, 0.0, 0.7).unwrap(), 1.0);
        assert!((kappa(&c, &a, -1.0, 0.5).unwrap() - 0.25).abs() < 1e-14);
        assert_eq!(kappa(&c, &a, -3.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn kappa_quadrature_matches_closed_form() {
        // A table with the same values as 3s on [0, 1e4] goes through Simpson.
        let c = unit_clock();
        let table = GainFunction::table(vec![0.0, 1e4], vec![0.0, 3e4]).unwrap();
        let lin = GainFunction::linear(3.0);
        for &t in &[0.1, 0.5, 0.9, 0.99] {
            let q = kappa(&c, &table, -1.0, t).unwrap();
            let exact = kappa(&c, &lin, -1.0, t).unwrap();
            assert!((q - exact).abs() <= 1e-9 * exact.max(1e-300), "{t}: {q} vs {exact}");
        }
    }

    #[test]
    fn log_family_integral_against_fine_trapezoid() {
        let a = GainFunction::Log { k: 1.5 };
        let q = gain_integral(&a, 1.0, 50.0).unwrap();
        let n = 200_000;
        let (lo, hi) = (1.0_f64.ln(), 50.0_f64.ln());
        let h = (hi - lo) / n as f64;
        let f = |u: f64| a.eval(u.exp()) / u.exp();
        let mut trap = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            trap += f(lo + i as f64 * h);
        }
        trap *= h;
        assert!((q - trap).abs() / trap < 1e-8);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let gains = [
            GainFunction::linear(3.0),
            GainFunction::power(10.0, 1.5),
            GainFunction::Log { k: 2.0 },
            GainFunction::Exp { k1: 2.0, k2: 0.01 },
            GainFunction::Exponential { k: 1.0, a: 1.0 },
            alpha_s_from_dc2(&GainFunction::Log { k: 1.0 }, 2.0, 2, 1.0).unwrap(),
        ];
        for g in &gains {
            for s in log_grid(0.5, 200.0, 40) {
                let h = 1e-5 * s;
                let fd = (g.eval(s + h) - g.eval(s - h)) / (2.0 * h);
                let an = g.deriv(s);
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1e-12),
                    "{g:?} at {s}: {fd} vs {an}"
                );
                let delta = g.delta(s);
                assert!((delta - an * s * s / g.eval(s)).abs() <= 1e-9 * delta.abs().max(1.0));
            }
        }
    }

    #[test]
    fn generator_criterion_linear_boundary() {
        let c_star = 0.1;
        let crit = GrowthCriterion::generator(c_star).unwrap();
        let grid = log_grid(1.0, 1000.0, 1000);
        let at = check_growth_criterion(&GainFunction::linear(2.0 / c_star), &crit, &grid);
        assert!(at.pass);
        assert!(at.worst_margin.abs() < 1e-12);
        let below = check_growth_criterion(&GainFunction::linear(1.0 / c_star), &crit, &grid);
        assert!(!below.pass);
    }

    #[test]
    fn generator_criterion_log_family_passes() {
        let c_star = 0.1;
        let crit = GrowthCriterion::generator(c_star).unwrap();
        let grid = log_grid(1.0, 1000.0, 1000);
        // k·s·ln(s+2) needs k ≥ 2(ln(s+2) + s/(s+2))/(c*·ln²(s+2)), whose
        // supremum is 2/(c*·ln2) as s → 0.
        let k = 2.0 / (c_star * 2f64.ln());
        assert!(check_growth_criterion(&GainFunction::Log { k }, &crit, &grid).pass);
        let k_half = 1.0 / (c_star * 2f64.ln());
        let r = check_growth_criterion(&GainFunction::Log { k: k_half }, &crit, &grid);
        assert!(!r.pass);
        assert!((r.worst_s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_bound_is_checked() {
        let alpha = GainFunction::linear(10.0);
        let crit = GrowthCriterion::strict_dc_xi(0.1, 3.0, alpha).unwrap();
        let grid = log_grid(1.0, 100.0, 100);
        // α_ξ = 2s passes the rate inequality but 2s > (0.1/6)·10s.
        let r = check_growth_criterion(&GainFunction::linear(2.0), &crit, &grid);
        assert!(r.worst_margin >= 0.0);
        assert!(r.coupling_margin.unwrap() < 0.0);
        assert!(!r.pass);
    }

    #[test]
    fn dc2_examples() {
        let e = std::f64::consts::E;
        let g = alpha_s_from_dc2(&GainFunction::linear(1.0), 2.0, 2, 1.0).unwrap();
        assert!((g.eval(e) - e.powi(3)).abs() < 1e-12);
        assert!((g.eval(1.0) - 1.0).abs() < 1e-15);
        let g = alpha_s_from_dc2(&GainFunction::power(1.0, 1.5), 2.0, 2, 1.0).unwrap();
        assert!((g.eval(4.0) - 64.0 * e * e).abs() < 1e-9);
        assert!((g.eval(4.0) - 472.9).abs() < 0.1);
    }

    #[test]
    fn spec_round_trip() {
        let spec = GainSpec {
            family: "power".into(),
            params: vec![10.0, 1.5],
        };
        let g = GainFunction::from_spec(&spec).unwrap();
        assert_eq!(g.to_spec().unwrap(), spec);
        let bad = GainSpec {
            family: "linear".into(),
            params: vec![-1.0],
        };
        assert!(GainFunction::from_spec(&bad).is_err());
    }
}
