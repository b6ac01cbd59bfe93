//! Explicit Runge–Kutta integration on the guarded prescribed-time window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timegain::PrescribedClock;

/// A first-order system `ẏ = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical fixed-step fourth-order scheme.
    Rk4,
    /// Dormand–Prince 5(4) with step-size control.
    #[default]
    Rk45,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub method: Method,
    /// Fixed step for RK4, initial step for RK45.
    pub dt: f64,
    /// Upper bound on the adaptive step.
    pub dt_max: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Integration stops at `t0 + guard_frac·T`.
    pub guard_frac: f64,
    pub max_steps: usize,
    /// Log every `log_stride` accepted steps (the final time is always logged).
    pub log_stride: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            method: Method::Rk45,
            dt: 1e-4,
            dt_max: 1e-2,
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            guard_frac: 0.999,
            max_steps: 10_000_000,
            log_stride: 10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.dt_max > 0.0) {
            return Err(Error::Config("solver steps must be positive".into()));
        }
        for (name, tol) in [("abs_tol", self.abs_tol), ("rel_tol", self.rel_tol)] {
            if !(tol > 0.0 && tol < 1e-2) {
                return Err(Error::Config(format!("{name} must lie in (0, 1e-2), got {tol}")));
            }
        }
        if !(self.guard_frac > 0.0 && self.guard_frac < 1.0) {
            return Err(Error::Config(format!(
                "guard_frac must lie in (0, 1), got {}",
                self.guard_frac
            )));
        }
        if self.max_steps == 0 || self.log_stride == 0 {
            return Err(Error::Config("max_steps and log_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Adaptive step ceiling `min(dt_max, 0.05/(μ²T))`.
    pub fn step_ceiling(&self, clock: &PrescribedClock, t: f64) -> f64 {
        let mu = 1.0 / (clock.deadline() - t);
        self.dt_max.min(0.05 / (mu * mu * clock.horizon))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub t_final: f64,
}

// Dormand–Prince coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn first_non_finite(y: &[f64]) -> Option<usize> {
    y.iter().position(|v| !v.is_finite())
}

/// Integrates from `clock.t0` to `clock.t0 + settings.guard_frac·T`, calling
/// `log(t, y)` at the initial time, every `log_stride` accepted steps and the
/// final time. No stage is ever evaluated past the guard time.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    clock: &PrescribedClock,
    y0: &[f64],
    settings: &SolverSettings,
    mut log: impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<IntegrationStats> {
    settings.validate()?;
    clock.validate()?;
    let dim = sys.dim();
    if y0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: y0.len(),
        });
    }
    if let Some(c) = first_non_finite(y0) {
        return Err(Error::NonFiniteState {
            t: clock.t0,
            component: c,
        });
    }
    let t_end = clock.t0 + settings.guard_frac * clock.horizon;
    let mut t = clock.t0;
    let mut y = y0.to_vec();
    let mut stats = IntegrationStats::default();
    log(t, &y)?;
    match settings.method {
        Method::Rk4 => rk4_loop(sys, &mut t, &mut y, t_end, settings, &mut stats, &mut log)?,
        Method::Rk45 => dopri_loop(sys, clock, &mut t, &mut y, t_end, settings, &mut stats, &mut log)?,
    }
    stats.t_final = t;
    Ok(stats)
}

fn rk4_loop<S: OdeSystem + ?Sized>(
    sys: &S,
    t: &mut f64,
    y: &mut [f64],
    t_end: f64,
    settings: &SolverSettings,
    stats: &mut IntegrationStats,
    log: &mut impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<()> {
    let n = y.len();
    let mut k = vec![vec![0.0; n]; 4];
    let mut tmp = vec![0.0; n];
    let total = ((t_end - *t) / settings.dt).ceil().max(1.0) as usize;
    if total > settings.max_steps {
        return Err(Error::StepBudget(settings.max_steps));
    }
    let t_start = *t;
    for step in 1..=total {
        let t_next = if step == total {
            t_end
        } else {
            t_start + step as f64 * settings.dt
        };
        let h = t_next - *t;
        sys.rhs(*t, y, &mut k[0])?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[0][i];
        }
        sys.rhs(*t + 0.5 * h, &tmp, &mut k[1])?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[1][i];
        }
        sys.rhs(*t + 0.5 * h, &tmp, &mut k[2])?;
        for i in 0..n {
            tmp[i] = y[i] + h * k[2][i];
        }
        sys.rhs(t_next, &tmp, &mut k[3])?;
        for i in 0..n {
            y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        stats.rhs_evals += 4;
        stats.accepted += 1;
        *t = t_next;
        if let Some(c) = first_non_finite(y) {
            return Err(Error::NonFiniteState { t: *t, component: c });
        }
        if step % settings.log_stride == 0 || step == total {
            log(*t, y)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn dopri_loop<S: OdeSystem + ?Sized>(
    sys: &S,
    clock: &PrescribedClock,
    t: &mut f64,
    y: &mut Vec<f64>,
    t_end: f64,
    settings: &SolverSettings,
    stats: &mut IntegrationStats,
    log: &mut impl FnMut(f64, &[f64]) -> Result<()>,
) -> Result<()> {
    let n = y.len();
    let min_step = 1e-15 * clock.horizon;
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut h = settings.dt.min(settings.step_ceiling(clock, *t));
    sys.rhs(*t, y, &mut k[0])?;
    stats.rhs_evals += 1;
    let mut since_log = 0usize;
    while *t < t_end {
        if stats.accepted + stats.rejected >= settings.max_steps {
            return Err(Error::StepBudget(settings.max_steps));
        }
        h = h.min(settings.step_ceiling(clock, *t));
        let last = *t + h >= t_end || t_end - (*t + h) < min_step;
        if last {
            h = t_end - *t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += a * k[j][i];
                }
                stage[i] = y[i] + h * acc;
            }
            let ts = if s >= 5 && last { t_end } else { *t + C[s] * h };
            let (_, tail) = k.split_at_mut(s);
            sys.rhs(ts, &stage, &mut tail[0])?;
        }
        stats.rhs_evals += 6;
        // stage now holds the fifth-order solution (FSAL row).
        y_new.copy_from_slice(&stage);
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += (B5[s] - B4[s]) * k[s][i];
            }
            let scale = settings.abs_tol + settings.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = h * e / scale;
            err_sq += r * r;
        }
        let err = (err_sq / n.max(1) as f64).sqrt();
        if err.is_finite() && err <= 1.0 {
            *t = if last { t_end } else { *t + h };
            std::mem::swap(y, &mut y_new);
            k.swap(0, 6);
            stats.accepted += 1;
            since_log += 1;
            if let Some(c) = first_non_finite(y) {
                return Err(Error::NonFiniteState { t: *t, component: c });
            }
            if since_log == settings.log_stride || last {
                log(*t, y)?;
                since_log = 0;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            stats.rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= factor;
            if h < min_step {
                if let Some(c) = first_non_finite(&y_new) {
                    return Err(Error::NonFiniteState { t: *t, component: c });
                }
                return Err(Error::StepUnderflow { t: *t, h });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay<'a>(&'a PrescribedClock);

    impl OdeSystem for Decay<'_> {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -self.0.mu_at(t)? * y[0];
            Ok(())
        }
    }

    #[test]
    fn adaptive_matches_closed_form() {
        let clock = PrescribedClock::new(0.0, 1.0, 0.9).unwrap();
        let settings = SolverSettings {
            guard_frac: 0.9,
            ..SolverSettings::default()
        };
        let mut last = (0.0, 0.0);
        integrate(&Decay(&clock), &clock, &[1.0], &settings, |t, y| {
            last = (t, y[0]);
            Ok(())
        })
        .unwrap();
        assert_eq!(last.0, 0.9);
        assert!((last.1 - 0.1).abs() < 1e-8, "{}", last.1);
    }

    #[test]
    fn fixed_step_logs_stride_and_end() {
        let clock = PrescribedClock::new(0.0, 1.0, 0.5).unwrap();
        let settings = SolverSettings {
            method: Method::Rk4,
            dt: 0.1,
            guard_frac: 0.5,
            log_stride: 2,
            ..SolverSettings::default()
        };
        let mut times = Vec::new();
        integrate(&Decay(&clock), &clock, &[1.0], &settings, |t, _| {
            times.push(t);
            Ok(())
        })
        .unwrap();
        assert_eq!(times.len(), 4);
        assert_eq!(*times.last().unwrap(), 0.5);
    }

    #[test]
    fn non_finite_initial_state_is_reported() {
        let clock = PrescribedClock::new(0.0, 1.0, 0.5).unwrap();
        let err = integrate(
            &Decay(&clock),
            &clock,
            &[f64::NAN],
            &SolverSettings::default(),
            |_, _| Ok(()),
        );
        assert!(matches!(err, Err(Error::NonFiniteState { component: 0, .. })));
    }

    #[test]
    fn settings_validation() {
        let bad = SolverSettings {
            rel_tol: 0.5,
            ..SolverSettings::default()
        };
        assert!(bad.validate().is_err());
        assert!(SolverSettings::default().validate().is_ok());
    }
}
