use proptest::prelude::*;

use dptco::chain_ctrl::{
    chain_control, e_tilde_s_stacked, ChainControllerConfig, ChainDesign, ChainErrorView, PsiBound,
};
use dptco::costs::{optimum_oracle, CostFunction, CostSet};
use dptco::generator::{generator_constants, generator_rhs_at, init_p, ErrorState, LyapunovForm, PInit};
use dptco::graph::{Network, ReducedBasis};
use dptco::linalg::{dot, norm, sym_eigenvalues, Mat};
use dptco::monitors::kappa_series;
use dptco::sim_engine::{integrate, Layout, Method, OdeSystem, SolverSettings, Trajectory};
use dptco::strictfb_ctrl::{
    adaptation_tau, scaled_errors_stacked, stacked_error, virtual_controls, ControllerState, ScaledErrors,
    StageNonlinearity, StrictFeedbackConfig,
};
use dptco::timegain::{gain_integral, kappa, GainFunction, PrescribedClock};

fn ring_with_chords(n: usize, chords: &[(usize, usize, f64)]) -> Network {
    let mut edges: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
    edges.extend(chords.iter().filter(|(a, b, _)| a != b).copied());
    Network::from_edges(n, &edges).unwrap()
}

fn network_strategy() -> impl Strategy<Value = Network> {
    (3usize..8).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n, 0.1f64..3.0), 0..6).prop_map(move |c| ring_with_chords(n, &c))
    })
}

fn isotropic_costs(weights: &[f64], centers: &[[f64; 2]]) -> CostSet {
    CostSet::new(
        weights
            .iter()
            .zip(centers)
            .map(|(w, c)| CostFunction::isotropic(*w, c.to_vec()))
            .collect(),
    )
    .unwrap()
}

/// Generator-only dynamics `[ϖ; p]` with gain `α(μ(t))`.
struct Generator {
    net: Network,
    costs: CostSet,
    alpha: GainFunction,
    clock: PrescribedClock,
}

impl OdeSystem for Generator {
    fn dim(&self) -> usize {
        2 * self.net.n_agents() * self.costs.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> dptco::Result<()> {
        let half = y.len() / 2;
        let a = self.alpha.eval(self.clock.mu_at(t)?);
        let (dv, dp) = dy.split_at_mut(half);
        generator_rhs_at(&y[..half], &y[half..], &self.net, &self.costs, a, dv, dp);
        Ok(())
    }
}

fn example_generator(horizon: f64) -> (Generator, Vec<f64>) {
    let costs = isotropic_costs(
        &[1.0, 2.0, 0.5, 1.5],
        &[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.5], [0.5, -1.0]],
    );
    let sys = Generator {
        net: ring_with_chords(4, &[]),
        costs,
        alpha: GainFunction::linear(20.0),
        clock: PrescribedClock::new(0.0, horizon, 0.95).unwrap(),
    };
    let mut y0 = vec![0.3, -0.2, 1.0, 0.4, -0.5, 0.9, 0.0, 0.1];
    y0.extend(init_p(4, 2, PInit::RandomZeroSum, 3));
    (sys, y0)
}

fn run_logged(sys: &Generator, y0: &[f64], settings: &SolverSettings) -> Vec<(f64, Vec<f64>)> {
    let mut out = Vec::new();
    integrate(sys, &sys.clock, y0, settings, |t, y| {
        out.push((t, y.to_vec()));
        Ok(())
    })
    .unwrap();
    out
}

fn chain_config(m: usize, n: usize) -> ChainControllerConfig {
    ChainControllerConfig::design(
        ChainDesign {
            order: m,
            stage_dim: n,
            v: 2.0,
            k: None,
            q: None,
            alpha_x: GainFunction::linear(1.0),
            alpha_s: Some(GainFunction::linear(3.0)),
            psi: PsiBound::One,
        },
        1.0,
        1000.0,
    )
    .unwrap()
}

fn strict_config(m: usize, n: usize) -> StrictFeedbackConfig {
    StrictFeedbackConfig::raw(
        m,
        n,
        1.0,
        vec![2.0; m],
        vec![3.0; m - 1],
        4.0,
        GainFunction::power(1.0, 1.5),
        vec![StageNonlinearity::Sin; m - 1],
        1000.0,
    )
    .unwrap()
}

fn strict_inputs(m: usize, n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, ControllerState, f64)> {
    (
        prop::collection::vec(-2.0f64..2.0, m * n),
        prop::collection::vec(-2.0f64..2.0, n),
        -3.0f64..3.0,
        prop::collection::vec(-2.0f64..2.0, (m - 1) * n),
        1.0f64..50.0,
    )
        .prop_map(|(x, r, th, xf, mu)| {
            (
                x,
                r,
                ControllerState {
                    theta_hat: th,
                    xi_f: xf,
                },
                mu,
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mu_derivative_is_mu_squared(t0 in -5.0f64..5.0, horizon in 0.1f64..10.0, frac in 0.0f64..0.99) {
        let clock = PrescribedClock::new(t0, horizon, 0.999).unwrap();
        let t = t0 + frac * horizon;
        let h = 1e-6 * (clock.deadline() - t);
        let d = (clock.mu_at(t + h).unwrap() - clock.mu_at(t - h).unwrap()) / (2.0 * h);
        let mu = clock.mu_at(t).unwrap();
        prop_assert!((d / (mu * mu) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gain_integral_is_additive(k in 0.1f64..20.0, a in 1.0f64..10.0, b in 1.0f64..10.0, c in 1.0f64..10.0) {
        let (a, b, c) = (a, a * b, a * b * c);
        for alpha in [GainFunction::linear(k), GainFunction::power(k, 1.5), GainFunction::Log { k }] {
            let whole = gain_integral(&alpha, a, c).unwrap();
            let parts = gain_integral(&alpha, a, b).unwrap() + gain_integral(&alpha, b, c).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-8 * whole.abs().max(1.0));
        }
    }

    #[test]
    fn kappa_is_multiplicative(k in 0.1f64..5.0, f1 in 0.0f64..0.9, f2 in 0.0f64..0.9) {
        let clock = PrescribedClock::new(0.0, 1.0, 0.999).unwrap();
        let alpha = GainFunction::power(k, 1.5);
        let (t1, t2) = (f1.min(f2), f1.max(f2));
        let mus = [clock.mu0(), clock.mu_at(t1).unwrap(), clock.mu_at(t2).unwrap()];
        let series = kappa_series(&alpha, -0.3, &mus).unwrap();
        let split = (-0.3 * gain_integral(&alpha, mus[1], mus[2]).unwrap()).exp();
        prop_assert!((series[2] - series[1] * split).abs() <= 1e-9 * series[2].max(1e-300));
    }

    #[test]
    fn linear_kappa_is_power_of_mu_ratio(k in 0.1f64..5.0, frac in 0.0f64..0.99) {
        let clock = PrescribedClock::new(0.0, 2.0, 0.999).unwrap();
        let t = frac * 2.0;
        let got = kappa(&clock, &GainFunction::linear(k), -1.0, t).unwrap();
        let want = (clock.mu0() / clock.mu_at(t).unwrap()).powf(k);
        prop_assert!((got - want).abs() <= 1e-10 * want.max(1e-300));
    }

    #[test]
    fn laplacian_is_psd_and_reduced_form_is_bracketed(net in network_strategy()) {
        let eig = sym_eigenvalues(net.laplacian()).unwrap();
        prop_assert!(eig.iter().all(|&e| e >= -1e-10));
        prop_assert!(eig.iter().copied().fold(f64::INFINITY, f64::min).abs() < 1e-10);
        let basis = ReducedBasis::new(net.n_agents()).unwrap();
        let reduced = sym_eigenvalues(&net.reduced_laplacian(&basis)).unwrap();
        for e in reduced {
            prop_assert!(e >= net.lambda2() - 1e-9 && e <= net.lambda_n() + 1e-9);
        }
    }

    #[test]
    fn reduced_basis_is_orthonormal_complement(n in 2usize..12) {
        let basis = ReducedBasis::new(n).unwrap();
        let gram = basis.r.transpose().matmul(&basis.r);
        prop_assert!(gram.sub(&Mat::identity(n - 1)).max_abs() < 1e-13);
        for j in 0..n - 1 {
            prop_assert!(dot(&basis.r.col(j), &basis.ones).abs() < 1e-13);
        }
        prop_assert!((norm(&basis.ones) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences_and_is_monotone(
        p in prop::collection::vec(0.2f64..2.0, 2),
        q in prop::collection::vec(0.2f64..2.0, 2),
        a in prop::collection::vec(-1.5f64..1.5, 2),
        b in prop::collection::vec(-1.5f64..1.5, 2),
    ) {
        let f = CostFunction::sum(vec![
            CostFunction::exp_quadratic(Mat::from_diag(&p), vec![0.1, -0.2]).unwrap(),
            CostFunction::quadratic(Mat::from_diag(&q), vec![0.5, 0.3], 0.0).unwrap(),
        ]).unwrap();
        let g = f.gradient(&a);
        for k in 0..2 {
            let h = 1e-6;
            let (mut up, mut dn) = (a.clone(), a.clone());
            up[k] += h;
            dn[k] -= h;
            let fd = (f.value(&up) - f.value(&dn)) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0));
        }
        let gb = f.gradient(&b);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let gdiff: Vec<f64> = g.iter().zip(&gb).map(|(x, y)| x - y).collect();
        prop_assert!(dot(&gdiff, &diff) >= -1e-12);
    }

    #[test]
    fn oracle_is_idempotent(w in prop::collection::vec(0.2f64..3.0, 3), c in prop::collection::vec(-2.0f64..2.0, 6)) {
        let centers: Vec<[f64; 2]> = c.chunks(2).map(|p| [p[0], p[1]]).collect();
        let costs = isotropic_costs(&w, &centers);
        let first = optimum_oracle(&costs, 1e-12, &[0.0, 0.0]).unwrap();
        let again = optimum_oracle(&costs, 1e-12, &first.z_star).unwrap();
        prop_assert_eq!(again.iterations, 0);
        prop_assert_eq!(again.z_star, first.z_star);
    }

    #[test]
    fn init_p_sums_to_zero(n in 1usize..10, m in 1usize..4, seed in any::<u64>()) {
        let p = init_p(n, m, PInit::RandomZeroSum, seed);
        for k in 0..m {
            let s: f64 = (0..n).map(|i| p[i * m + k]).sum();
            prop_assert!(s.abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_tracking_sum_is_conserved(
        net in network_strategy(),
        seed in any::<u64>(),
        alpha in 0.1f64..100.0,
    ) {
        let n = net.n_agents();
        let centers: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 * 0.3 - 1.0, 0.5 - i as f64 * 0.1]).collect();
        let costs = isotropic_costs(&vec![1.0; n], &centers);
        let varpi: Vec<f64> = init_p(n, 2, PInit::RandomZeroSum, seed).iter().map(|v| v * 3.0 + 0.2).collect();
        let p = init_p(n, 2, PInit::RandomZeroSum, seed ^ 1);
        let (mut dv, mut dp) = (vec![0.0; 2 * n], vec![0.0; 2 * n]);
        generator_rhs_at(&varpi, &p, &net, &costs, alpha, &mut dv, &mut dp);
        for k in 0..2 {
            let s: f64 = (0..n).map(|i| dp[i * 2 + k]).sum();
            prop_assert!(s.abs() <= 1e-10 * alpha);
        }
    }

    #[test]
    fn optimum_is_generator_equilibrium(net in network_strategy(), w in 0.2f64..3.0) {
        let n = net.n_agents();
        let weights: Vec<f64> = (0..n).map(|i| w + i as f64 * 0.1).collect();
        let centers: Vec<[f64; 2]> = (0..n).map(|i| [(i as f64).sin(), (i as f64).cos()]).collect();
        let costs = isotropic_costs(&weights, &centers);
        let cert = optimum_oracle(&costs, 1e-12, &[0.0, 0.0]).unwrap();
        let varpi: Vec<f64> = (0..n).flat_map(|_| cert.z_star.clone()).collect();
        let p: Vec<f64> = (0..n).flat_map(|i| costs.agent(i).gradient(&cert.z_star).iter().map(|g| -g).collect::<Vec<_>>()).collect();
        let (mut dv, mut dp) = (vec![0.0; 2 * n], vec![0.0; 2 * n]);
        generator_rhs_at(&varpi, &p, &net, &costs, 5.0, &mut dv, &mut dp);
        prop_assert!(norm(&dv) < 1e-10 && norm(&dp) < 1e-10);
    }

    #[test]
    fn lyapunov_value_is_sandwiched(net in network_strategy(), seed in any::<u64>()) {
        let n = net.n_agents();
        let costs = isotropic_costs(&vec![1.0; n], &vec![[0.0, 0.0]; n]);
        let c = costs.constants();
        let consts = generator_constants(c.rho_c, c.varrho_c, net.lambda2(), net.lambda_n()).unwrap();
        let form = LyapunovForm::new(&net, 2, &consts).unwrap();
        let e = ErrorState {
            e_varpi: init_p(n, 2, PInit::RandomZeroSum, seed).iter().map(|v| v + 0.3).collect(),
            e_p: init_p(n, 2, PInit::RandomZeroSum, seed ^ 7),
        };
        let v = form.value(&e);
        let sq = e.norm().powi(2);
        prop_assert!(v >= consts.c2 * sq * (1.0 - 1e-9));
        prop_assert!(v <= consts.c3 * sq * (1.0 + 1e-9));
    }

    #[test]
    fn chain_stacked_transform_matches_incremental(
        x in prop::collection::vec(-3.0f64..3.0, 6),
        r in prop::collection::vec(-3.0f64..3.0, 2),
        mu in 1.0f64..100.0,
    ) {
        let cfg = chain_config(3, 2);
        let view = ChainErrorView::compute(&x, &r, mu, &cfg).unwrap();
        let stacked = e_tilde_s_stacked(&view.e_s, mu, &cfg);
        for (a, b) in view.e_tilde_s.iter().zip(&stacked) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn chain_control_is_continuous(
        x in prop::collection::vec(-3.0f64..3.0, 6),
        r in prop::collection::vec(-3.0f64..3.0, 2),
        mu in 1.0f64..100.0,
    ) {
        let cfg = chain_config(3, 2);
        let u = chain_control(&x, &r, mu, &cfg).unwrap();
        let mut xp = x.clone();
        xp[3] += 1e-9;
        let up = chain_control(&xp, &r, mu, &cfg).unwrap();
        let scale = norm(&u).max(1.0);
        prop_assert!(u.iter().zip(&up).all(|(a, b)| (a - b).abs() <= 1e-5 * scale));
    }

    #[test]
    fn strict_stacked_errors_match_per_stage((x, r, ctrl, mu) in strict_inputs(3, 2), theta in -3.0f64..3.0) {
        let cfg = strict_config(3, 2);
        let vc = virtual_controls(&x, &r, &ctrl, mu, &cfg).unwrap();
        let direct = ScaledErrors::from_virtual(&vc, theta, ctrl.theta_hat, mu, &cfg);
        let stacked = scaled_errors_stacked(&stacked_error(&x, &r, &ctrl, 2), &vc.xi, theta, mu, &cfg);
        for (a, b) in direct.omega.iter().chain(&direct.eta).zip(stacked.omega.iter().chain(&stacked.eta)) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
        prop_assert_eq!(direct.theta_tilde, stacked.theta_tilde);
    }

    #[test]
    fn first_filtered_virtual_control_has_unit_estimate_sensitivity((x, r, ctrl, mu) in strict_inputs(3, 2)) {
        let cfg = strict_config(3, 2);
        // ξ₂ is affine in θ̂, so a unit step gives the exact slope.
        let h = 1.0;
        let mut up = ctrl.clone();
        up.theta_hat += h;
        let a = virtual_controls(&x, &r, &ctrl, mu, &cfg).unwrap();
        let b = virtual_controls(&x, &r, &up, mu, &cfg).unwrap();
        let phi = StageNonlinearity::Sin.eval(&x[2..4]);
        for ((hi, lo), p) in b.xi[1].iter().zip(&a.xi[1]).zip(&phi) {
            let d = (hi - lo) / h;
            prop_assert!((d + p).abs() <= 1e-12 * lo.abs().max(1.0));
        }
    }

    #[test]
    fn adaptation_drive_is_scaled_error_inner_product((x, r, ctrl, mu) in strict_inputs(3, 2)) {
        let cfg = strict_config(3, 2);
        let vc = virtual_controls(&x, &r, &ctrl, mu, &cfg).unwrap();
        let tau = adaptation_tau(&x, &vc.x_tilde, mu, &cfg);
        let scaled = ScaledErrors::from_virtual(&vc, 0.0, ctrl.theta_hat, mu, &cfg);
        let a = cfg.alpha_xi.eval(mu);
        let lq = cfg.exponents();
        let mut want = 0.0;
        for q in 1..3 {
            let phi = StageNonlinearity::Sin.eval(&x[q * 2..(q + 1) * 2]);
            let omega = &scaled.omega[q * 2..(q + 1) * 2];
            want += a.powf(lq[q]) * dot(omega, &phi);
        }
        prop_assert!((tau - want).abs() <= 1e-9 * tau.abs().max(1.0));
    }

    #[test]
    fn csv_round_trip_is_bit_exact(values in prop::collection::vec(-1e6f64..1e6, 3 * 22), small in -1e-300f64..1e-300) {
        let layout = Layout { n_agents: 2, m: 2, state_dim: 4, ctrl_dim: 1, input_dim: 2 };
        let mut traj = Trajectory::new(layout);
        for (k, row) in values.chunks(22).enumerate() {
            let mut y = row[..18].to_vec();
            y[0] = small;
            let inputs = vec![row[18..20].to_vec(), row[20..22].to_vec()];
            traj.push(k as f64 * 0.1, 1.0 / (1.0 - k as f64 * 0.1), &y, &inputs);
        }
        let back = Trajectory::from_csv(&traj.to_csv(), layout).unwrap();
        prop_assert_eq!(back.times, traj.times);
        prop_assert_eq!(back.mus, traj.mus);
        prop_assert_eq!(back.rows, traj.rows);
    }
}

#[test]
fn lyapunov_decays_at_the_guaranteed_rate() {
    let (sys, y0) = example_generator(1.0);
    let cert = optimum_oracle(&sys.costs, 1e-13, &[0.0, 0.0]).unwrap();
    let c = sys.costs.constants();
    let consts = generator_constants(c.rho_c, c.varrho_c, sys.net.lambda2(), sys.net.lambda_n()).unwrap();
    let k = 2.0 / consts.c_star;
    let sys = Generator {
        alpha: GainFunction::linear(k),
        ..sys
    };
    let form = LyapunovForm::new(&sys.net, 2, &consts).unwrap();
    let settings = SolverSettings {
        guard_frac: 0.95,
        log_stride: 1,
        ..SolverSettings::default()
    };
    let log = run_logged(&sys, &y0, &settings);
    let v = |y: &[f64]| {
        let half = y.len() / 2;
        form.value(&ErrorState::new(&y[..half], &y[half..], &sys.costs, &cert))
    };
    for w in log.windows(2) {
        let (t0, y0) = (&w[0].0, &w[0].1);
        let (t1, y1) = (&w[1].0, &w[1].1);
        let (m0, m1) = (sys.clock.mu_at(*t0).unwrap(), sys.clock.mu_at(*t1).unwrap());
        let decay = (-2.0 * consts.c_star * gain_integral(&sys.alpha, m0, m1).unwrap()).exp();
        let (v0, v1) = (v(y0), v(y1));
        // Below this level the integrator tolerance dominates the decrease.
        if v0 < 1e-12 {
            break;
        }
        assert!(v1 <= v0 * decay * (1.0 + 1e-6), "t={t1}: {v1} > {}", v0 * decay);
    }
}

#[test]
fn generator_trajectory_rescales_with_horizon() {
    let settings = SolverSettings {
        guard_frac: 0.95,
        abs_tol: 1e-12,
        rel_tol: 1e-11,
        ..SolverSettings::default()
    };
    let (short, y0) = example_generator(1.0);
    let (long, _) = example_generator(2.0);
    let a = run_logged(&short, &y0, &settings);
    let b = run_logged(&long, &y0, &settings);
    let (ya, yb) = (&a.last().unwrap().1, &b.last().unwrap().1);
    assert_eq!(b.last().unwrap().0, 2.0 * a.last().unwrap().0);
    for (p, q) in ya.iter().zip(yb) {
        assert!((p - q).abs() < 1e-8, "{p} vs {q}");
    }
}

#[test]
fn integration_is_deterministic() {
    let (sys, y0) = example_generator(1.0);
    let settings = SolverSettings::default();
    let a = run_logged(&sys, &y0, &settings);
    let b = run_logged(&sys, &y0, &settings);
    assert_eq!(a, b);
}

#[test]
fn right_hand_side_is_never_evaluated_past_the_guard() {
    struct Probe<'a>(&'a Generator, std::cell::Cell<f64>);
    impl OdeSystem for Probe<'_> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> dptco::Result<()> {
            self.1.set(self.1.get().max(t));
            self.0.rhs(t, y, dy)
        }
    }
    let (sys, y0) = example_generator(1.0);
    for method in [Method::Rk45, Method::Rk4] {
        let probe = Probe(&sys, std::cell::Cell::new(f64::NEG_INFINITY));
        let settings = SolverSettings {
            method,
            dt: 3e-4,
            guard_frac: 0.95,
            ..SolverSettings::default()
        };
        integrate(&probe, &sys.clock, &y0, &settings, |_, _| Ok(())).unwrap();
        assert!(probe.1.get() <= sys.clock.guard_time());
        assert!(probe.1.get() < sys.clock.deadline());
    }
}
