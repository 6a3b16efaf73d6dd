//! Solver checks shared by the integration tests and the acceptance target.

use super::mms;
use ghostflow_core::eos::IdealGas;
use ghostflow_pde::{Coefficient, FluidState, Solver, SolverConfig, SolverMode, TransportModel};
use std::f64::consts::PI;

pub fn solver(n: usize, dt: f64, mode: SolverMode, model: TransportModel) -> Solver {
    Solver::new(SolverConfig::new(vec![n, n], dt, mode), model, Box::new(IdealGas::new(2))).unwrap()
}

pub fn bump(x: &[f64]) -> f64 {
    1.0 + 0.2 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + 0.1 * (2.0 * PI * x[1]).sin()
}

fn at_rest(s: &mut Solver, t: impl Fn(&[f64]) -> f64) -> FluidState {
    let sp = s.spectral().clone();
    s.initial_state(sp.sample(t), vec![vec![0.0; sp.len()]; 2], 1.0).unwrap()
}

/// Manufactured-solution errors on 8², 12², 16² and the observed orders.
pub fn mms_orders() -> (Vec<f64>, Vec<f64>) {
    let m = mms::standard();
    let grids = [8, 12, 16];
    let errors: Vec<f64> = grids.iter().map(|&n| mms::run(m, n, 2.5e-4, 100)).collect();
    let orders = (0..2).map(|k| (errors[k] / errors[k + 1]).ln() / (grids[k + 1] as f64 / grids[k] as f64).ln()).collect();
    (errors, orders)
}

/// Largest per-step change of a uniform state, relative to its values.
pub fn uniform_drift(steps: usize) -> f64 {
    let model = TransportModel::constant(0.05, 0.02, 0.05, 0.03, 0.02, 0.01, 0.015);
    let mut s = solver(12, 1e-3, SolverMode::ParticleEos, model);
    let mut st = at_rest(&mut s, |_| 1.3);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let before = st.clone();
        s.step(&mut st).unwrap();
        let rel = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs() / y.abs()));
        worst = worst.max(rel(&st.temperature, &before.temperature)).max(rel(&st.rho, &before.rho));
        worst = worst.max(st.u.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())));
        worst = worst.max((st.pbar - before.pbar).abs() / before.pbar);
    }
    worst
}

pub struct Balance {
    /// |M(1000) − M(0)| / M(0).
    pub mass: f64,
    /// Largest constraint residual over the run, in units of the Newton
    /// tolerance.
    pub constraint: f64,
    pub divergence: f64,
}

pub fn balance() -> Balance {
    let model = TransportModel::constant(0.05, 0.01, 0.05, 0.02, 0.01, 0.005, 0.005);
    let mut s = solver(16, 1e-3, SolverMode::ParticleEos, model);
    let mut st = at_rest(&mut s, bump);
    let m0 = s.mass_target();
    let tol = s.config().newton_tolerance;
    let diags = s.run(&mut st, 1000, None).unwrap();
    let m = s.spectral().integrate(&st.rho);
    Balance {
        mass: (m - m0).abs() / m0,
        constraint: diags.iter().map(|d| d.constraint_residual).fold(0.0, f64::max) / tol,
        divergence: diags.iter().map(|d| d.divergence_residual).fold(0.0, f64::max),
    }
}

/// Smallest per-step entropy change in a conduction-only run.
pub fn conduction_entropy_increments(steps: usize) -> f64 {
    let model = TransportModel::constant(0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0);
    let mut s = solver(16, 1e-3, SolverMode::ConductionOnly, model);
    let st0 = at_rest(&mut s, bump);
    let mut st = st0.clone();
    let mut prev = s.entropy(&st0);
    let mut worst = f64::INFINITY;
    for d in s.run(&mut st, steps, None).unwrap() {
        worst = worst.min(d.entropy - prev);
        prev = d.entropy;
    }
    worst
}

/// max_t |dS/dt − ∫κ|∇T|²/T²| / ∫κ|∇T|²/T², with dS/dt by central
/// differences along the run.
pub fn entropy_mismatch(n: usize, dt: f64, mode: SolverMode) -> f64 {
    let model = TransportModel::constant(0.05, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0);
    let mut s = solver(n, dt, mode, model);
    let mut st = at_rest(&mut s, bump);
    let mut entropy = vec![s.entropy(&st)];
    let mut rhs = vec![s.entropy_production(&st)];
    for d in s.run(&mut st, 40, None).unwrap() {
        entropy.push(d.entropy);
        rhs.push(d.entropy_production);
    }
    (1..entropy.len() - 1).map(|k| ((entropy[k + 1] - entropy[k - 1]) / (2.0 * dt) - rhs[k]).abs() / rhs[k]).fold(0.0, f64::max)
}

/// Largest max|div u| over 10³ steps of the incompressible reduction.
pub fn insf_divergence() -> f64 {
    let model = TransportModel::constant(0.02, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0);
    let mut s = solver(16, 2e-3, SolverMode::InsfReduction, model);
    let sp = s.spectral().clone();
    let u = vec![sp.sample(|x| (2.0 * PI * x[1]).sin()), sp.sample(|x| 0.5 * (4.0 * PI * x[0]).cos())];
    let mut st = s.initial_state(vec![1.0; sp.len()], u, 1.0).unwrap();
    s.run(&mut st, 1000, None).unwrap().iter().map(|d| d.max_divergence).fold(0.0, f64::max)
}

pub fn kinetic_model() -> TransportModel {
    TransportModel {
        eta: Coefficient::PowerLaw { prefactor: 0.05, exponent: 0.5 },
        kappa: Coefficient::PowerLaw { prefactor: 0.08, exponent: 0.5 },
        ..TransportModel::constant(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }
}

pub fn checkerboard(x: &[f64]) -> f64 {
    1.0 + 0.1 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
}

pub fn ghost_run(k_bar: [f64; 2], profile: impl Fn(&[f64]) -> f64, steps: usize) -> (Solver, FluidState) {
    let mode = SolverMode::IdealGasGhost { k_bar1: k_bar[0], k_bar2: k_bar[1] };
    let mut s = solver(16, 1e-3, mode, kinetic_model());
    let mut st = at_rest(&mut s, profile);
    s.run(&mut st, steps, None).unwrap();
    (s, st)
}

pub fn max_difference(a: &FluidState, b: &FluidState) -> f64 {
    a.u.iter().flatten().zip(b.u.iter().flatten()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub struct Ghost {
    /// max|u(K̄) − u(0)| with K̄₁ = K̄₂ = 1.
    pub with: f64,
    /// The same between two K̄ = 0 runs.
    pub without: f64,
    pub tolerance: f64,
}

pub fn ghost() -> Ghost {
    let (s, with) = ghost_run([1.0, 1.0], checkerboard, 200);
    let (_, zero) = ghost_run([0.0, 0.0], checkerboard, 200);
    let (_, again) = ghost_run([0.0, 0.0], checkerboard, 200);
    Ghost { with: max_difference(&with, &zero), without: max_difference(&zero, &again), tolerance: s.config().poisson_tolerance }
}
