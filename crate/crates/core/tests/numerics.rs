use proptest::prelude::*;

use randswitch_core::dynamics::{integrate, ModeDynamics};
use randswitch_core::ensemble::{aggregate, run_ensemble, run_replication, EnsembleConfig};
use randswitch_core::lyapunov::{
    check_derivative_condition, check_jump_condition, lie_derivative_fd, pathwise_bound_check, sample_mesh,
    PATHWISE_TOL,
};
use randswitch_core::musf::{mean_integral, MonteCarlo};
use randswitch_core::rng::{StreamId, StreamRng, StreamTag};
use randswitch_core::switching::{ctmc_stationary, embedded_stationary, semi_markov_stationary};
use randswitch_core::{parse_expr, DwellModel, Envelope, LyapunovSpec, SwitchedSystem, SwitchingLaw, SwitchingPath};

fn p_matrix() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.8, 0.2], vec![0.7, 0.0, 0.3], vec![0.6, 0.4, 0.0]]
}

fn q_matrix() -> Vec<Vec<f64>> {
    vec![vec![-2.0, 1.0, 1.0], vec![4.0, -4.0, 0.0], vec![2.0, 1.0, -3.0]]
}

fn lit(v: f64) -> String {
    format!("({v:?})")
}

fn rk4_error(field: &str, exact: f64, step: f64) -> f64 {
    let sys = SwitchedSystem::parse(1, &[vec![field]]).unwrap();
    let path = SwitchingPath::constant(0.0, 1.0, 0);
    let traj = integrate(&sys, &path, &[1.0], step, 1.0).unwrap();
    (traj.final_state()[0] - exact).abs()
}

#[test]
fn rk4_is_fourth_order() {
    let cases = [("-x1", (-1.0f64).exp()), ("-2*t*x1", (-1.0f64).exp()), ("cos(t)*x1", 1f64.sin().exp())];
    for (field, exact) in cases {
        let steps = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = steps.iter().map(|&h| rk4_error(field, exact, h)).collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((13.0..19.0).contains(&ratio), "{field}: ratio {ratio}, errors {errs:?}");
        }
    }
    assert!(rk4_error("-x1", (-1.0f64).exp(), 1e-3) < 1e-9);
}

#[test]
fn integration_is_bit_reproducible() {
    let law = SwitchingLaw::markov(q_matrix(), 0).unwrap();
    let sys = SwitchedSystem::parse(
        2,
        &[
            vec!["-2*x1+x2", "x1-2*x2"],
            vec!["-1.5*t^2*x1", "cos(t)*x1-1.5*t^2*x2"],
            vec!["0.5*t*(cos(t)-0.5)*x1-x1", "x1-0.5*x2+0.5*t*(cos(t)-0.5)*x2"],
        ],
    )
    .unwrap();
    let path = law.sample_path(0.0, 3.0, &mut StreamRng::new(11, StreamId::new(StreamTag::Adhoc, 4))).unwrap();
    let a = integrate(&sys, &path, &[1.0, -1.0], 1e-3, 3.0).unwrap();
    let b = integrate(&sys, &path, &[1.0, -1.0], 1e-3, 3.0).unwrap();
    assert_eq!(a.times.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.times.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.states.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.states.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    for &tk in path.times() {
        assert_eq!(a.times.iter().filter(|&&t| t == tk).count(), 1, "switch at {tk}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Quadratic forms `V = xᵀAx + c·t·x1²` against their hand-coded gradient.
    #[test]
    fn finite_difference_matches_analytic_derivative(
        a11 in 0.1f64..3.0, a12 in -1.0f64..1.0, a22 in 0.1f64..3.0, c in -1.0f64..1.0,
        b in prop::array::uniform4(-3.0f64..3.0),
        t in 0.0f64..20.0,
        x in prop::array::uniform2(-10.0f64..10.0),
    ) {
        let v = parse_expr(
            &format!("{}*x1^2 + 2*{}*x1*x2 + {}*x2^2 + {}*t*x1^2", lit(a11), lit(a12), lit(a22), lit(c)),
            2,
        ).unwrap();
        let field = ModeDynamics::parse(
            &[format!("{}*x1 + {}*x2", lit(b[0]), lit(b[1])), format!("{}*x1 + {}*x2", lit(b[2]), lit(b[3]))],
            2,
        ).unwrap();
        let f = [b[0] * x[0] + b[1] * x[1], b[2] * x[0] + b[3] * x[1]];
        let grad = [2.0 * a11 * x[0] + 2.0 * a12 * x[1] + 2.0 * c * t * x[0], 2.0 * a12 * x[0] + 2.0 * a22 * x[1]];
        let exact = c * x[0] * x[0] + grad[0] * f[0] + grad[1] * f[1];
        let fd = lie_derivative_fd(&v, &field, t, &x).unwrap();
        let scale = (c * x[0] * x[0]).abs() + (grad[0] * f[0]).abs() + (grad[1] * f[1]).abs();
        prop_assert!((fd - exact).abs() <= 1e-5 * scale.max(1e-12), "fd {fd}, exact {exact}");
    }
}

fn single_mode_spec(v: &str, rate: &str) -> LyapunovSpec {
    LyapunovSpec::parse(1, &[v], &[rate], vec![1.0], Envelope { c1: 1.0, p1: 2.0, c2: 1.0, p2: 2.0 }).unwrap()
}

#[test]
fn single_mode_bound_reduces_to_gronwall() {
    let sys = SwitchedSystem::parse(1, &[vec!["(-1 + 0.25*cos(t))*x1"]]).unwrap();
    let path = SwitchingPath::constant(0.0, 10.0, 0);
    let traj = integrate(&sys, &path, &[1.3], 1e-3, 10.0).unwrap();

    // V = x², so V(t) = V(0)·exp(-2t + 0.5 sin t) exactly.
    let tight = single_mode_spec("x1^2", "-2 + 0.5*cos(t)");
    let report = pathwise_bound_check(&traj, &tight, PATHWISE_TOL).unwrap();
    assert!(report.passed(), "{:?}", report.violations.first());
    assert_eq!(report.samples, traj.len());

    let too_tight = single_mode_spec("x1^2", "-2.01 + 0.5*cos(t)");
    let report = pathwise_bound_check(&traj, &too_tight, PATHWISE_TOL).unwrap();
    let oracle = traj
        .times
        .iter()
        .enumerate()
        .filter(|&(k, &t)| {
            let x = traj.state(k)[0];
            let rhs = (1.3f64 * 1.3).ln() - 2.01 * t + 0.5 * t.sin();
            (x * x).ln() - rhs > PATHWISE_TOL.ln_1p()
        })
        .count();
    assert!(oracle > 0);
    assert_eq!(report.violations.len(), oracle);
}

#[test]
fn pathwise_bound_on_zero_state_is_trivial() {
    let sys = SwitchedSystem::parse(1, &[vec!["-x1"]]).unwrap();
    let path = SwitchingPath::constant(0.0, 2.0, 0);
    let traj = integrate(&sys, &path, &[0.0], 1e-3, 2.0).unwrap();
    let report = pathwise_bound_check(&traj, &single_mode_spec("x1^2", "-2"), PATHWISE_TOL).unwrap();
    assert!(report.passed());
}

/// Largest generalised eigenvalue of `(AᵀP + PA, P)` for `P = diag(p1, p2)`.
fn rate_bound(a: [f64; 4], p: [f64; 2]) -> f64 {
    let s11 = 2.0 * a[0] * p[0];
    let s22 = 2.0 * a[3] * p[1];
    let s12 = a[1] * p[0] + a[2] * p[1];
    let (m11, m22, m12) = (s11 / p[0], s22 / p[1], s12 / (p[0] * p[1]).sqrt());
    0.5 * (m11 + m22) + (0.25 * (m11 - m22).powi(2) + m12 * m12).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Random linear systems with diagonal quadratic Lyapunov functions and
    /// exact rates: once the derivative and jump conditions hold on a dense
    /// sample, the pathwise estimate must hold along every simulated path.
    #[test]
    fn pathwise_bound_follows_from_the_sampled_conditions(
        modes in 2usize..4,
        mats in prop::collection::vec(prop::array::uniform4(-2.0f64..1.0), 3),
        diag in prop::collection::vec(prop::array::uniform2(0.5f64..2.0), 3),
        seed in any::<u64>(),
    ) {
        let mats = &mats[..modes];
        let diag = &diag[..modes];
        let fields: Vec<Vec<String>> = mats
            .iter()
            .map(|a| {
                vec![
                    format!("(1 + 0.5*sin(t))*({}*x1 + {}*x2)", lit(a[0]), lit(a[1])),
                    format!("(1 + 0.5*sin(t))*({}*x1 + {}*x2)", lit(a[2]), lit(a[3])),
                ]
            })
            .collect();
        let sys = SwitchedSystem::parse(2, &fields).unwrap();
        let vs: Vec<String> = diag.iter().map(|d| format!("{}*x1^2 + {}*x2^2", lit(d[0]), lit(d[1]))).collect();
        let rates: Vec<String> = mats
            .iter()
            .zip(diag)
            .map(|(a, d)| format!("(1 + 0.5*sin(t))*{} + 1e-3", lit(rate_bound(*a, *d))))
            .collect();
        let mu: Vec<f64> = (0..modes)
            .map(|i| {
                (0..modes)
                    .filter(|&j| j != i)
                    .map(|j| (diag[i][0] / diag[j][0]).max(diag[i][1] / diag[j][1]))
                    .fold(1.0, f64::max)
            })
            .collect();
        let lo = diag.iter().flat_map(|d| d.iter().copied()).fold(f64::INFINITY, f64::min);
        let hi = diag.iter().flat_map(|d| d.iter().copied()).fold(0.0, f64::max);
        let spec = LyapunovSpec::parse(2, &vs, &rates, mu, Envelope { c1: lo, p1: 2.0, c2: hi, p2: 2.0 }).unwrap();

        let samples = sample_mesh(0.0, 5.0, 9, 2, 5.0, 64);
        for i in 0..modes {
            prop_assert!(check_derivative_condition(&spec, sys.mode(i), i, &samples).unwrap().passed());
        }
        prop_assert!(check_jump_condition(&spec, &samples).unwrap().passed());

        let p: Vec<Vec<f64>> = (0..modes)
            .map(|i| (0..modes).map(|j| if i == j { 0.0 } else { 1.0 / (modes - 1) as f64 }).collect())
            .collect();
        let law = SwitchingLaw::semi_markov(p, vec![DwellModel::Exponential { rate: 2.0 }; modes], 0).unwrap();
        let path = law.sample_path(0.0, 5.0, &mut StreamRng::new(seed, StreamId::new(StreamTag::Adhoc, 0))).unwrap();
        let traj = integrate(&sys, &path, &[1.0, -0.5], 1e-3, 5.0).unwrap();
        let report = pathwise_bound_check(&traj, &spec, PATHWISE_TOL).unwrap();
        prop_assert!(report.passed(), "{:?}", report.violations.first());
    }
}

#[test]
fn standard_error_shrinks_by_root_two() {
    let lambda = parse_expr("-3*t^2 + cos(t)", 1).unwrap();
    let dwell = DwellModel::Uniform { low: 1.5, high: 4.5 };
    let grid = [0.0, 1.0, 5.0, 20.0];
    let small = mean_integral(&lambda, &dwell, &grid, &MonteCarlo { samples: 2048, seed: 5, stream: 1 }).unwrap();
    let large = mean_integral(&lambda, &dwell, &grid, &MonteCarlo { samples: 4096, seed: 5, stream: 2 }).unwrap();
    for (a, b) in small.std_error.iter().zip(&large.std_error) {
        let ratio = a / b;
        let root2 = std::f64::consts::SQRT_2;
        assert!((ratio - root2).abs() <= 0.2 * root2, "ratio {ratio}");
    }
}

#[test]
fn jensen_bound_for_every_dwell_of_mean_three() {
    let lambda = parse_expr("-3*t^2 + cos(t)", 1).unwrap();
    let mc = MonteCarlo { samples: 4096, seed: 9, stream: 0 };
    let dwells = [
        DwellModel::Deterministic { duration: 3.0 },
        DwellModel::Uniform { low: 1.5, high: 4.5 },
        DwellModel::Exponential { rate: 1.0 / 3.0 },
        DwellModel::Gamma { shape: 3.0, scale: 1.0 },
    ];
    for d in dwells {
        assert_eq!(d.mean(), 3.0);
        let est = mean_integral(&lambda, &d, &[0.0], &mc).unwrap();
        assert!(est.mean[0] + 3.0 * est.std_error[0] <= -25.0, "{d:?}: {}", est.mean[0]);
    }

    // Closed form for the uniform dwell: E[-S³ + sin S].
    let (a, b) = (1.5f64, 4.5f64);
    let exact = -(b.powi(4) - a.powi(4)) / (4.0 * (b - a)) + (a.cos() - b.cos()) / (b - a);
    let est = mean_integral(&lambda, &DwellModel::Uniform { low: a, high: b }, &[0.0], &mc).unwrap();
    assert!((est.mean[0] - exact).abs() < 4.0 * est.std_error[0], "{} vs {exact}", est.mean[0]);
}

#[test]
fn constant_rate_mean_is_linear_in_dwell() {
    let lambda = parse_expr("-2", 1).unwrap();
    let mc = MonteCarlo { samples: 4096, seed: 1, stream: 0 };
    for d in [DwellModel::Exponential { rate: 0.5 }, DwellModel::Gamma { shape: 2.0, scale: 0.7 }] {
        let est = mean_integral(&lambda, &d, &[0.0, 10.0, 100.0], &mc).unwrap();
        for (m, s) in est.mean.iter().zip(&est.std_error) {
            assert!((m + 2.0 * d.mean()).abs() < 3.0 * s, "{d:?}: {m} ± {s}");
        }
    }
}

#[test]
fn occupancy_converges_to_the_stationary_law() {
    let pi_bar = embedded_stationary(&p_matrix()).unwrap();
    let pi_sm = semi_markov_stationary(&pi_bar, &[1.0, 3.0, 2.0]).unwrap();
    let pi_ctmc = ctmc_stationary(&q_matrix()).unwrap();
    let dwell = [1.0, 3.0, 2.0].map(|m| DwellModel::Uniform { low: 0.5 * m, high: 1.5 * m }).to_vec();
    let laws = [
        (SwitchingLaw::semi_markov(p_matrix(), dwell, 0).unwrap(), pi_sm),
        (SwitchingLaw::markov(q_matrix(), 0).unwrap(), pi_ctmc),
    ];
    for (law, pi) in laws {
        let path = law.sample_path(0.0, 1e4, &mut StreamRng::new(2024, StreamId::new(StreamTag::Occupancy, 0))).unwrap();
        let occ = path.occupancy_series(&[1e4], 3).unwrap();
        for (a, b) in occ[0].iter().zip(&pi) {
            assert!((a - b).abs() < 0.02, "{:?} vs {pi:?}", occ[0]);
        }
    }
}

#[test]
fn markov_dwell_means_match_exit_rates() {
    let law = SwitchingLaw::markov(q_matrix(), 0).unwrap();
    let path = law.sample_path(0.0, 1e5, &mut StreamRng::new(77, StreamId::new(StreamTag::Adhoc, 1))).unwrap();
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    let mut start = 0.0;
    for (k, &tk) in path.times().iter().enumerate() {
        let mode = path.modes()[k];
        sums[mode] += tk - start;
        counts[mode] += 1;
        start = tk;
    }
    for (i, q) in [2.0, 4.0, 3.0].iter().enumerate() {
        assert!(counts[i] >= 10_000, "mode {i}: {} visits", counts[i]);
        let mean = sums[i] / counts[i] as f64;
        let se = (1.0 / q) / (counts[i] as f64).sqrt();
        assert!((mean - 1.0 / q).abs() < 3.0 * se, "mode {i}: {mean} vs {}", 1.0 / q);
    }
}

fn small_ensemble() -> EnsembleConfig {
    let dwell = [1.0, 3.0, 2.0].map(|m| DwellModel::Uniform { low: 0.5 * m, high: 1.5 * m }).to_vec();
    EnsembleConfig {
        system: SwitchedSystem::parse(
            2,
            &[
                vec!["-2*x1+x2", "x1-2*x2"],
                vec!["-1.5*t^2*x1", "cos(t)*x1-1.5*t^2*x2"],
                vec!["0.5*t*(cos(t)-0.5)*x1-x1", "x1-0.5*x2+0.5*t*(cos(t)-0.5)*x2"],
            ],
        )
        .unwrap(),
        law: SwitchingLaw::semi_markov(p_matrix(), dwell, 0).unwrap(),
        t0: 0.0,
        horizon: 3.0,
        step: 1e-2,
        x0: vec![1.0, -1.0],
        output_stride: 5,
        sup_from: 1.0,
    }
}

#[test]
fn ensemble_is_reproducible_and_order_free() {
    let cfg = small_ensemble();
    let a = run_ensemble(&cfg, 12, 99).unwrap();
    let b = run_ensemble(&cfg, 12, 99).unwrap();
    assert_eq!(a, b);

    let mut outcomes: Vec<_> = (0..12).map(|r| run_replication(&cfg, r, 99).unwrap()).collect();
    outcomes.reverse();
    outcomes.swap(2, 7);
    assert_eq!(aggregate(&cfg, outcomes), a);

    let c = run_ensemble(&cfg, 12, 100).unwrap();
    assert_ne!(a.replications, c.replications);
    assert_eq!(a.mean_square.len(), a.grid.len());
}

#[test]
fn identical_replications_average_to_themselves() {
    let cfg = EnsembleConfig {
        law: SwitchingLaw::renewal(vec![0.0, 1.0, 0.0], DwellModel::Deterministic { duration: 0.7 }, 1).unwrap(),
        ..small_ensemble()
    };
    let stats = run_ensemble(&cfg, 5, 1).unwrap();
    let single = run_ensemble(&cfg, 1, 1).unwrap();
    for (a, b) in stats.mean_square.iter().zip(&single.mean_square) {
        assert!((a - b).abs() <= 4.0 * f64::EPSILON * b, "{a} vs {b}");
    }
    assert!(stats.replications.windows(2).all(|w| w[0].terminal_norm == w[1].terminal_norm));
}
