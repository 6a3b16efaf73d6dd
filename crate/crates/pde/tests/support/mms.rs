//! Manufactured solution for the ideal gas at P̄ = 1, d = 2, unit torus,
//! constant coefficients. T and u are sums of one-dimensional profiles
//! h(s) = 1/(b − cos 2πs) whose spectrum decays geometrically, so coarse
//! grids show a clear error trend.

#![allow(dead_code)]

use ghostflow_core::eos::IdealGas;
use ghostflow_pde::{Forcing, Solver, SolverConfig, SolverMode, TransportModel};
use std::f64::consts::PI;

const B: f64 = 2.0;
const W: f64 = 2.0 * PI;

/// h and its first three derivatives.
pub fn h(s: f64) -> [f64; 4] {
    let (sn, c) = (W * s).sin_cos();
    let d = B - c;
    let w3 = W * W * W;
    [
        1.0 / d,
        -W * sn / (d * d),
        -W * W * c / (d * d) + 2.0 * W * W * sn * sn / (d * d * d),
        w3 * sn / (d * d) + 6.0 * w3 * sn * c / (d * d * d) - 6.0 * w3 * sn.powi(3) / d.powi(4),
    ]
}

fn alpha(t: f64) -> (f64, f64) {
    (0.1 * (1.0 + 0.5 * (2.0 * t).sin()), 0.1 * (2.0 * t).cos())
}

fn beta(t: f64) -> (f64, f64) {
    (0.1 * t.cos(), -0.1 * t.sin())
}

#[derive(Clone, Copy, Debug)]
pub struct Manufactured {
    pub eta: f64,
    pub zeta: f64,
    pub kappa: f64,
    pub k1: f64,
    pub k2: f64,
    pub omega1: f64,
    pub omega2: f64,
}

/// Values and derivatives of T at one point.
struct TJet {
    t: f64,
    dt: f64,
    g: [f64; 2],
    /// ∂²_xx T, ∂²_yy T (the mixed derivative vanishes)
    hd: [f64; 2],
    /// ∂_b ΔT
    glap: [f64; 2],
}

fn t_jet(x: &[f64], t: f64) -> TJet {
    let (a, ad) = alpha(t);
    let hx = h(x[0]);
    let hy = h(x[1] + 0.25);
    TJet {
        t: 1.0 + a * (hx[0] + hy[0]),
        dt: ad * (hx[0] + hy[0]),
        g: [a * hx[1], a * hy[1]],
        hd: [a * hx[2], a * hy[2]],
        glap: [a * hx[3], a * hy[3]],
    }
}

/// u, ∂ₜu, grad[b][a] = ∂_a u^b, Δu, ∂_b ∇·u.
struct UJet {
    u: [f64; 2],
    dt: [f64; 2],
    grad: [[f64; 2]; 2],
    lap: [f64; 2],
    gdiv: [f64; 2],
}

fn u_jet(x: &[f64], t: f64) -> UJet {
    let (b, bd) = beta(t);
    let (hx, hy, hx1) = (h(x[0]), h(x[1]), h(x[0] + 0.1));
    let u = [b * (hy[0] + 0.5 * hx[0]), b * (hx1[0] + 0.3 * hy[0])];
    UJet {
        u,
        dt: [u[0] * bd / b, u[1] * bd / b],
        grad: [[0.5 * b * hx[1], b * hy[1]], [b * hx1[1], 0.3 * b * hy[1]]],
        lap: [b * (hy[2] + 0.5 * hx[2]), b * (hx1[2] + 0.3 * hy[2])],
        gdiv: [0.5 * b * hx[2], 0.3 * b * hy[2]],
    }
}

pub fn exact_temperature(x: &[f64], t: f64) -> f64 {
    t_jet(x, t).t
}

pub fn exact_velocity(x: &[f64], t: f64) -> [f64; 2] {
    u_jet(x, t).u
}

impl Manufactured {
    pub fn model(&self) -> TransportModel {
        TransportModel::constant(self.eta, self.zeta, self.kappa, self.k1, self.k2, self.omega1, self.omega2)
    }
}

impl Forcing for Manufactured {
    fn temperature(&self, x: &[f64], t: f64) -> f64 {
        let tj = t_jet(x, t);
        let uj = u_jet(x, t);
        let div = uj.grad[0][0] + uj.grad[1][1];
        // DT/Dt = T∇·u for the ideal gas at constant P̄
        tj.dt + uj.u[0] * tj.g[0] + uj.u[1] * tj.g[1] - tj.t * div
    }

    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        let tj = t_jet(x, t);
        let uj = u_jet(x, t);
        // A = (d+2)P̄/2 = 2
        uj.grad[0][0] + uj.grad[1][1] - self.kappa * (tj.hd[0] + tj.hd[1]) / 2.0
    }

    fn momentum(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let tj = t_jet(x, t);
        let uj = u_jet(x, t);
        let rho = 1.0 / tj.t;
        let lap_t = tj.hd[0] + tj.hd[1];
        let d = 2.0;
        for b in 0..2 {
            let adv = uj.u[0] * uj.grad[b][0] + uj.u[1] * uj.grad[b][1];
            let div_tau1 = self.eta * uj.lap[b] + (self.eta * (1.0 - 2.0 / d) + self.zeta) * uj.gdiv[b];
            let cross = tj.g[b] * tj.hd[b];
            let div_tau2 = self.k1 * (lap_t * tj.g[b] + cross - 2.0 / d * cross)
                + 2.0 * self.omega1 * cross
                + (self.k2 * (1.0 - 1.0 / d) + self.omega2) * tj.glap[b];
            out[b] = rho * (uj.dt[b] + adv) - div_tau1 + div_tau2;
        }
    }

    fn mass(&self, t: f64) -> Option<f64> {
        let n = 128;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += 1.0 / exact_temperature(&[i as f64 / n as f64, j as f64 / n as f64], t);
            }
        }
        Some(s / (n * n) as f64)
    }
}

pub fn standard() -> Manufactured {
    Manufactured { eta: 0.05, zeta: 0.02, kappa: 0.05, k1: 0.03, k2: 0.02, omega1: 0.01, omega2: 0.015 }
}

/// RMS error of (T, u) at the final time on an n×n grid.
pub fn run(m: Manufactured, n: usize, dt: f64, steps: usize) -> f64 {
    let cfg = SolverConfig::new(vec![n, n], dt, SolverMode::ParticleEos);
    let mut solver = Solver::new(cfg, m.model(), Box::new(IdealGas::new(2))).unwrap().with_forcing(Box::new(m));
    let sp = solver.spectral().clone();
    let t0 = sp.sample(|x| exact_temperature(x, 0.0));
    let u0 = (0..2).map(|a| sp.sample(|x| exact_velocity(x, 0.0)[a])).collect();
    let mut state = solver.initial_state(t0, u0, 1.0).unwrap();
    solver.run(&mut state, steps, None).unwrap();
    let tf = state.time;
    let mut e2 = 0.0;
    for i in 0..sp.len() {
        let x = sp.coordinates(i);
        let u = exact_velocity(&x, tf);
        e2 += (state.temperature[i] - exact_temperature(&x, tf)).powi(2) + (state.u[0][i] - u[0]).powi(2) + (state.u[1][i] - u[1]).powi(2);
    }
    (e2 / sp.len() as f64).sqrt()
}
