use ghostflow_core::eos::IdealGas;
use ghostflow_pde::operators::{thermal_stress, LocalCoefficients};
use ghostflow_pde::{FluidState, Solver, SolverConfig, SolverMode, Spectral, TransportModel};
use proptest::prelude::*;
use std::f64::consts::PI;

fn modes(amp: &[f64], x: &[f64]) -> f64 {
    let phase = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, -1.0)];
    1.0 + amp.iter().zip(phase).map(|(a, (kx, ky))| a * (2.0 * PI * (kx * x[0] + ky * x[1]) + a).sin()).sum::<f64>()
}

fn model(c: &[f64]) -> TransportModel {
    TransportModel::constant(c[0], c[1], c[2], c[3], c[4], c[5], c[6])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn thermal_stress_is_symmetric(amp in prop::collection::vec(-0.1..0.1f64, 4), c in prop::collection::vec(0.0..1.0f64, 4)) {
        let sp = Spectral::new(&[12, 12], &[1.0, 1.0]);
        let t = sp.sample(|x| modes(&amp, x));
        let n = sp.len();
        let lc = LocalCoefficients { eta: vec![0.0; n], zeta: vec![0.0; n], kappa: vec![0.0; n], k1: vec![c[0]; n], k2: vec![c[1]; n], omega1: vec![c[2]; n], omega2: vec![c[3]; n] };
        let tau = thermal_stress(&sp, &t, &lc);
        for i in 0..n {
            prop_assert!((tau[1][i] - tau[2][i]).abs() < 1e-13);
        }
    }

    #[test]
    fn uniform_state_is_a_fixed_point(t0 in 0.5..2.0f64, pbar in 0.5..2.0f64, c in prop::collection::vec(0.0..0.2f64, 7)) {
        let cfg = SolverConfig::new(vec![8, 8], 1e-3, SolverMode::ParticleEos);
        let mut s = Solver::new(cfg, model(&c), Box::new(IdealGas::new(2))).unwrap();
        let mut st = s.initial_state(vec![t0; 64], vec![vec![0.0; 64]; 2], pbar).unwrap();
        let before = st.clone();
        for _ in 0..5 {
            s.step(&mut st).unwrap();
        }
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        prop_assert!(diff(&st.temperature, &before.temperature) <= 1e-14 * t0 * 5.0);
        prop_assert!(diff(&st.rho, &before.rho) <= 1e-14 * before.rho[0] * 5.0);
        prop_assert!(st.u.iter().all(|c| c.iter().all(|v| v.abs() <= 1e-14)));
        prop_assert!((st.pbar - pbar).abs() <= 1e-14 * pbar * 5.0);
    }

    #[test]
    fn gradients_are_absorbed_by_the_projection(amp in prop::collection::vec(-0.1..0.1f64, 4), g in prop::collection::vec(-1.0..1.0f64, 4)) {
        let cfg = SolverConfig::new(vec![16, 16], 1e-3, SolverMode::ParticleEos);
        let mut s = Solver::new(cfg, model(&[0.05, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0]), Box::new(IdealGas::new(2))).unwrap();
        let sp = s.spectral().clone();
        let t = sp.sample(|x| modes(&amp, x));
        let u: Vec<Vec<f64>> = vec![sp.sample(|x| (2.0 * PI * x[1]).sin()), sp.sample(|x| 0.5 * (2.0 * PI * x[0]).cos())];
        let phi = sp.sample(|x| modes(&g, x));
        let grad = sp.gradient(&phi);
        let plain = s.initial_state(t.clone(), u.clone(), 1.0).unwrap();
        // the variable-density projection removes ρ⁻¹∇φ
        let shifted: Vec<Vec<f64>> = u.iter().zip(&grad).map(|(a, b)| a.iter().zip(b).zip(&plain.rho).map(|((x, y), r)| x + y / r).collect()).collect();
        let moved = s.initial_state(t, shifted, 1.0).unwrap();
        for (a, b) in plain.u.iter().flatten().zip(moved.u.iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-10, "{}", (a - b).abs());
        }
    }
}

/// Boosting by V and translating back by V·t reproduces the rest-frame run;
/// V·t is a whole number of cells so the comparison is nodal.
#[test]
fn boost_commutes_with_translation() {
    let n = 16;
    let steps = 40;
    let dt = 5e-4;
    let v = 1.0 / (n as f64 * steps as f64 * dt);
    let profile = |x: &[f64]| 1.0 + 0.05 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
    let run = |boost: f64| -> (Spectral, FluidState) {
        let cfg = SolverConfig::new(vec![n, n], dt, SolverMode::ParticleEos);
        let mut s = Solver::new(cfg, model(&[0.05, 0.01, 0.05, 0.01, 0.01, 0.0, 0.0]), Box::new(IdealGas::new(2))).unwrap();
        let sp = s.spectral().clone();
        let mut st = s.initial_state(sp.sample(profile), vec![vec![boost; sp.len()], vec![0.0; sp.len()]], 1.0).unwrap();
        s.run(&mut st, steps, None).unwrap();
        (sp, st)
    };
    let (sp, rest) = run(0.0);
    let (_, moving) = run(v);
    let mut worst = 0.0f64;
    for i in 0..sp.len() {
        let mut idx = sp.index(i);
        idx[0] = (idx[0] + 1) % n;
        let j = idx[0] * n + idx[1];
        worst = worst.max((moving.temperature[j] - rest.temperature[i]).abs());
        worst = worst.max((moving.u[0][j] - v - rest.u[0][i]).abs());
        worst = worst.max((moving.u[1][j] - rest.u[1][i]).abs());
    }
    assert!(worst < 1e-6, "{worst}");
}
