//! Local convex costs, their curvature constants and a centralized optimum
//! oracle used only for verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, norm, sym_eigenvalues, Mat};

/// One agent's cost. `Sum` lets a scenario stack terms.
#[derive(Debug, Clone)]
pub enum CostFunction {
    /// `(z − center)ᵀ Q (z − center) + offset`
    Quadratic {
        q: Mat,
        center: Vec<f64>,
        offset: f64,
    },
    /// `exp((z − center)ᵀ P (z − center))`
    ExpQuadratic {
        p: Mat,
        center: Vec<f64>,
    },
    Sum(Vec<CostFunction>),
}

impl CostFunction {
    pub fn quadratic(q: Mat, center: Vec<f64>, offset: f64) -> Result<Self> {
        check_form(&q, &center)?;
        Ok(CostFunction::Quadratic { q, center, offset })
    }

    pub fn exp_quadratic(p: Mat, center: Vec<f64>) -> Result<Self> {
        check_form(&p, &center)?;
        Ok(CostFunction::ExpQuadratic { p, center })
    }

    /// `weight·‖z − center‖²`.
    pub fn isotropic(weight: f64, center: Vec<f64>) -> Self {
        let q = Mat::identity(center.len()).scale(weight);
        CostFunction::Quadratic { q, center, offset: 0.0 }
    }

    pub fn sum(terms: Vec<CostFunction>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::Config("empty cost sum".into()));
        };
        let m = first.dim();
        if let Some(bad) = terms.iter().find(|t| t.dim() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: bad.dim(),
            });
        }
        Ok(CostFunction::Sum(terms))
    }

    pub fn dim(&self) -> usize {
        match self {
            CostFunction::Quadratic { center, .. } | CostFunction::ExpQuadratic { center, .. } => center.len(),
            CostFunction::Sum(terms) => terms.first().map_or(0, CostFunction::dim),
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            CostFunction::Quadratic { q, center, offset } => q.quad_form(&diff(z, center)) + offset,
            CostFunction::ExpQuadratic { p, center } => p.quad_form(&diff(z, center)).exp(),
            CostFunction::Sum(terms) => terms.iter().map(|t| t.value(z)).sum(),
        }
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.add_gradient(z, &mut out);
        out
    }

    /// Adds `∇f(z)` into `out`.
    pub fn add_gradient(&self, z: &[f64], out: &mut [f64]) {
        match self {
            CostFunction::Quadratic { q, center, .. } => {
                sym_form_grad(q, z, center, 1.0, out);
            }
            CostFunction::ExpQuadratic { p, center } => {
                let e = p.quad_form(&diff(z, center)).exp();
                sym_form_grad(p, z, center, e, out);
            }
            CostFunction::Sum(terms) => {
                for t in terms {
                    t.add_gradient(z, out);
                }
            }
        }
    }

    /// Constant Hessian when every term is quadratic.
    pub fn quadratic_hessian(&self) -> Option<Mat> {
        match self {
            CostFunction::Quadratic { q, .. } => Some(q.symmetrized().scale(2.0)),
            CostFunction::ExpQuadratic { .. } => None,
            CostFunction::Sum(terms) => {
                let mut acc = Mat::zeros(self.dim(), self.dim());
                for t in terms {
                    acc = acc.add(&t.quadratic_hessian()?);
                }
                Some(acc)
            }
        }
    }

    /// Exact `(ρ_c, ϱ_c)` for purely quadratic costs.
    pub fn analytic_constants(&self) -> Option<(f64, f64)> {
        let h = self.quadratic_hessian()?;
        let ev = sym_eigenvalues(&h).ok()?;
        Some((ev[0], *ev.last()?))
    }
}

fn check_form(a: &Mat, center: &[f64]) -> Result<()> {
    if !a.is_square() || a.rows() != center.len() {
        return Err(Error::DimensionMismatch {
            expected: center.len(),
            got: a.rows(),
        });
    }
    Ok(())
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `out += scale·(A + Aᵀ)(z − c)`.
fn sym_form_grad(a: &Mat, z: &[f64], c: &[f64], scale: f64, out: &mut [f64]) {
    let m = z.len();
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..m {
            acc += (a[(i, j)] + a[(j, i)]) * (z[j] - c[j]);
        }
        out[i] += scale * acc;
    }
}

/// Axis-aligned box `lo ≤ z ≤ hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl WorkingBox {
    pub fn cube(m: usize, lo: f64, hi: f64) -> Self {
        WorkingBox {
            lo: vec![lo; m],
            hi: vec![hi; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.lo.len() != m || self.hi.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.lo.len().min(self.hi.len()),
            });
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Config("working box must have lo < hi".into()));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| rng.gen_range(*l..*h))
            .collect()
    }
}

/// The agents' costs over a shared decision dimension.
#[derive(Debug, Clone)]
pub struct CostSet {
    costs: Vec<CostFunction>,
    dim: usize,
    working_box: WorkingBox,
}

impl CostSet {
    /// Working box defaults to `[−5, 5]^m`.
    pub fn new(costs: Vec<CostFunction>) -> Result<Self> {
        let dim = costs.first().map_or(0, CostFunction::dim);
        Self::with_box(costs, WorkingBox::cube(dim, -5.0, 5.0))
    }

    pub fn with_box(costs: Vec<CostFunction>, working_box: WorkingBox) -> Result<Self> {
        let Some(first) = costs.first() else {
            return Err(Error::DegenerateSize { needed: 1, got: 0 });
        };
        let dim = first.dim();
        if let Some(bad) = costs.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        working_box.validate(dim)?;
        Ok(CostSet {
            costs,
            dim,
            working_box,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn agent(&self, i: usize) -> &CostFunction {
        &self.costs[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &CostFunction> {
        self.costs.iter()
    }

    pub fn working_box(&self) -> &WorkingBox {
        &self.working_box
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.costs.iter().map(|c| c.value(z)).sum()
    }

    /// `Σᵢ ∇fⁱ(z)`.
    pub fn grad_sum(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        let mut g = vec![0.0; self.dim];
        for c in &self.costs {
            c.add_gradient(z, &mut g);
        }
        Ok(g)
    }

    /// Aggregate `(ρ_c, ϱ_c)`: analytic where every cost is quadratic,
    /// otherwise sampled on the working box with a fixed seed.
    pub fn constants(&self) -> CostConstants {
        let mut rho = f64::INFINITY;
        let mut varrho: f64 = 0.0;
        let mut analytic = true;
        for c in &self.costs {
            let (r, v) = match c.analytic_constants() {
                Some(rv) => rv,
                None => {
                    analytic = false;
                    estimate_single(c, &self.working_box, DEFAULT_SAMPLES, DEFAULT_SEED)
                }
            };
            rho = rho.min(r);
            varrho = varrho.max(v);
        }
        CostConstants {
            rho_c: rho,
            varrho_c: varrho,
            analytic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConstants {
    pub rho_c: f64,
    pub varrho_c: f64,
    /// `false` when any agent's constants were estimated by sampling.
    pub analytic: bool,
}

const DEFAULT_SAMPLES: usize = 2000;
const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumCertificate {
    pub z_star: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

const NEWTON_MAX_ITER: usize = 10_000;

/// Damped Newton on `f = Σ fⁱ` with a finite-difference Hessian and
/// backtracking; stops once `‖∇f‖ ≤ tol`.
pub fn optimum_oracle(costs: &CostSet, tol: f64, z_init: &[f64]) -> Result<OptimumCertificate> {
    let mut z = z_init.to_vec();
    let mut g = costs.grad_sum(&z)?;
    let mut gn = norm(&g);
    for iter in 0..NEWTON_MAX_ITER {
        if gn <= tol {
            return Ok(OptimumCertificate {
                z_star: z,
                grad_norm: gn,
                iterations: iter,
            });
        }
        let hess = fd_hessian(costs, &z);
        let dir = newton_direction(&hess, &g);
        let f0 = costs.value(&z);
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let g_trial = costs.grad_sum(&trial)?;
            let gn_trial = norm(&g_trial);
            let armijo = costs.value(&trial) <= f0 + 1e-4 * step * slope;
            // Near the optimum f changes below rounding; fall back to the
            // gradient norm as merit.
            if armijo || gn_trial < gn {
                z = trial;
                g = g_trial;
                gn = gn_trial;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::NoConvergence {
                    iterations: iter,
                    residual: gn,
                });
            }
        }
    }
    if gn <= tol {
        return Ok(OptimumCertificate {
            z_star: z,
            grad_norm: gn,
            iterations: NEWTON_MAX_ITER,
        });
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        residual: gn,
    })
}

/// Central differences of the analytic gradient, step `1e-5·(1+‖z‖)`.
fn fd_hessian(costs: &CostSet, z: &[f64]) -> Mat {
    let m = z.len();
    let h = 1e-5 * (1.0 + norm(z));
    let mut hess = Mat::zeros(m, m);
    let mut zp = z.to_vec();
    for j in 0..m {
        zp[j] = z[j] + h;
        let gp = costs.grad_sum(&zp).expect("dimension checked");
        zp[j] = z[j] - h;
        let gm = costs.grad_sum(&zp).expect("dimension checked");
        zp[j] = z[j];
        for i in 0..m {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    hess.symmetrized()
}

/// Solves `H d = −g`; falls back to steepest descent if `H` is singular or
/// the result is not a descent direction.
fn newton_direction(hess: &Mat, g: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    match crate::linalg::solve(hess, &neg) {
        Ok(d) if d.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() < 0.0 => d,
        _ => neg,
    }
}

/// Sampled `(ρ̂, ϱ̂)` over the box: random pairs plus pairs along the
/// coordinate axes and the local Hessian eigenvectors. Sampled values are
/// inner bounds: `ρ̂ ≥ ρ_c` and `ϱ̂ ≤ ϱ_c` up to rounding.
pub fn estimate_constants(costs: &CostSet, working_box: &WorkingBox, samples: usize, seed: u64) -> Result<(f64, f64)> {
    working_box.validate(costs.dim())?;
    let mut rho = f64::INFINITY;
    let mut varrho: f64 = 0.0;
    for (i, c) in costs.iter().enumerate() {
        let (r, v) = estimate_single(c, working_box, samples, seed.wrapping_add(i as u64));
        rho = rho.min(r);
        varrho = varrho.max(v);
    }
    Ok((rho, varrho))
}

fn estimate_single(c: &CostFunction, bx: &WorkingBox, samples: usize, seed: u64) -> (f64, f64) {
    let m = c.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = f64::INFINITY;
    let mut varrho: f64 = 0.0;
    let mut record = |x: &[f64], y: &[f64]| {
        let dx = diff(x, y);
        let d2: f64 = dx.iter().map(|v| v * v).sum();
        if d2 == 0.0 {
            return;
        }
        let dg = diff(&c.gradient(x), &c.gradient(y));
        let inner: f64 = dg.iter().zip(&dx).map(|(a, b)| a * b).sum();
        rho = rho.min(inner / d2);
        varrho = varrho.max(norm(&dg) / d2.sqrt());
    };
    let width: Vec<f64> = bx.lo.iter().zip(&bx.hi).map(|(l, h)| h - l).collect();
    for _ in 0..samples {
        let x = bx.sample(&mut rng);
        let y = bx.sample(&mut rng);
        record(&x, &y);
    }
    // Directional pairs at a handful of anchor points.
    let anchors = (samples / 20).clamp(5, 200);
    for _ in 0..anchors {
        let x = bx.sample(&mut rng);
        for k in 0..m {
            let mut y = x.clone();
            y[k] += 1e-3 * width[k];
            record(&x, &y);
        }
        let single = CostSet {
            costs: vec![c.clone()],
            dim: m,
            working_box: bx.clone(),
        };
        let hess = fd_hessian(&single, &x);
        if let Ok(eig) = jacobi_eigen(&hess, 1e-12 * hess.max_abs().max(1.0)) {
            let step = 1e-3 * width.iter().cloned().fold(f64::INFINITY, f64::min);
            for k in 0..m {
                let dir = eig.vectors.col(k);
                let y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
                record(&x, &y);
            }
        }
    }
    (rho, varrho)
}

/// Scenario representation of one cost term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CostTermSpec {
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        center: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    ExpQuadratic {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        center: Vec<f64>,
    },
}

/// One agent's cost in a scenario: a single term or a list summed together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostSpec {
    Term(CostTermSpec),
    Sum(Vec<CostTermSpec>),
}

impl CostTermSpec {
    pub fn build(&self) -> Result<CostFunction> {
        match self {
            CostTermSpec::Quadratic { q, center, offset } => {
                CostFunction::quadratic(Mat::try_from_rows(q)?, center.clone(), *offset)
            }
            CostTermSpec::ExpQuadratic { p, center } => {
                CostFunction::exp_quadratic(Mat::try_from_rows(p)?, center.clone())
            }
        }
    }
}

impl CostSpec {
    pub fn build(&self) -> Result<CostFunction> {
        match self {
            CostSpec::Term(t) => t.build(),
            CostSpec::Sum(terms) => CostFunction::sum(terms.iter().map(CostTermSpec::build).collect::<Result<_>>()?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(q: &[Vec<f64>], c: &[f64]) -> CostFunction {
        CostFunction::quadratic(Mat::from_rows(q), c.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn grad_sum_trivial_cases() {
        let single = CostSet::new(vec![CostFunction::isotropic(1.0, vec![1.0, -2.0])]).unwrap();
        assert_eq!(single.grad_sum(&[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
        let pair = CostSet::new(vec![
            CostFunction::isotropic(1.0, vec![0.0]),
            CostFunction::isotropic(1.0, vec![2.0]),
        ])
        .unwrap();
        assert_eq!(pair.grad_sum(&[1.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            pair.grad_sum(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn quadratic_constants_are_eigenvalue_bounds() {
        let c = quad(&[vec![0.5, 0.0], vec![0.0, 0.3]], &[0.0, 0.0]);
        let (r, v) = c.analytic_constants().unwrap();
        assert!((r - 0.6).abs() < 1e-14 && (v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn oracle_weighted_mean() {
        let weights = [0.5, 1.5, 2.0];
        let centers = [vec![1.0, 0.0], vec![-1.0, 2.0], vec![3.0, 3.0]];
        let set = CostSet::new(
            weights
                .iter()
                .zip(&centers)
                .map(|(w, c)| CostFunction::isotropic(*w, c.clone()))
                .collect(),
        )
        .unwrap();
        let cert = optimum_oracle(&set, 1e-10, &[0.0, 0.0]).unwrap();
        let total: f64 = weights.iter().sum();
        for k in 0..2 {
            let mean: f64 = weights.iter().zip(&centers).map(|(w, c)| w * c[k]).sum::<f64>() / total;
            assert!((cert.z_star[k] - mean).abs() < 1e-9);
        }
        let again = optimum_oracle(&set, 1e-10, &cert.z_star).unwrap();
        assert_eq!(again.iterations, 0);
        assert_eq!(again.z_star, cert.z_star);
    }

    #[test]
    fn estimate_identity_quadratic() {
        let set = CostSet::new(vec![CostFunction::isotropic(1.0, vec![0.0, 0.0])]).unwrap();
        let (r, v) = estimate_constants(&set, &WorkingBox::cube(2, -1.0, 1.0), 500, 1).unwrap();
        assert!((r - 2.0).abs() < 1e-6 && (v - 2.0).abs() < 1e-6);
    }

    #[test]
    fn spec_round_trip() {
        let json = r#"[{"family":"quadratic","Q":[[1,0],[0,2]],"center":[1,1],"offset":1},
                       {"family":"exp_quadratic","P":[[0.1,0],[0,0.2]],"center":[0.5,0.5]}]"#;
        let spec: CostSpec = serde_json::from_str(json).unwrap();
        let f = spec.build().unwrap();
        let z = [0.3, -0.2];
        let expected = (0.7f64.powi(2) + 2.0 * 1.2f64.powi(2) + 1.0) + (0.1 * 0.04 + 0.2 * 0.49f64).exp();
        assert!((f.value(&z) - expected).abs() < 1e-12);
        let single: CostSpec = serde_json::from_str(r#"{"family":"quadratic","Q":[[1]],"center":[0]}"#).unwrap();
        assert_eq!(single.build().unwrap().dim(), 1);
    }
}
