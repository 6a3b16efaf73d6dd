//! Low-Mach projection stepper.
//!
//! Each step is Heun's method for the explicit part with Crank-Nicolson on
//! a constant-coefficient Laplacian split off the conduction and viscous
//! terms. After each stage ρ and P̄ are recomputed from the constraint and
//! the total mass, and u is projected onto the divergence target by
//! solving ∇·(ρ⁻¹∇φ) = ∇·u* − D with preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::model::{Forcing, SolverConfig, SolverMode, TransportModel};
use crate::operators::{
    divergence_from_energy, enforce_pressure_constraint, tensor_divergence, thermal_stress, viscous_stress, DivergenceTarget,
    LocalCoefficients, Thermo,
};
use crate::spectral::{max_abs, Field, Spectral};
use crate::state::FluidState;
use ghostflow_core::eos::{IdealGas, StateEquation};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Per-step monitor values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub time: f64,
    pub mass: f64,
    pub momentum: Vec<f64>,
    /// ∫ρ(e + |u|²/2).
    pub energy: f64,
    /// ∫ρs.
    pub entropy: f64,
    /// ∫c|∇T|²/T² with q = c∇T.
    pub entropy_production: f64,
    pub pbar: f64,
    /// max|P(ρ,T) − P̄|.
    pub constraint_residual: f64,
    /// max|∇·u − D|.
    pub divergence_residual: f64,
    pub max_divergence: f64,
    pub max_speed: f64,
    pub poisson_iterations: usize,
}

impl Diagnostics {
    pub fn csv_header(dim: usize) -> String {
        let mom: Vec<String> = (0..dim).map(|a| format!("momentum_{a}")).collect();
        format!(
            "t,mass,{},energy,entropy,entropy_production,pbar,constraint_residual,divergence_residual,max_divergence,max_speed,poisson_iterations",
            mom.join(",")
        )
    }

    pub fn csv_row(&self) -> String {
        let mom: Vec<String> = self.momentum.iter().map(|m| format!("{m:e}")).collect();
        format!(
            "{:e},{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.time,
            self.mass,
            mom.join(","),
            self.energy,
            self.entropy,
            self.entropy_production,
            self.pbar,
            self.constraint_residual,
            self.divergence_residual,
            self.max_divergence,
            self.max_speed,
            self.poisson_iterations
        )
    }
}

/// Everything that depends on T alone at one stage.
struct Stage {
    rho: Field,
    pbar: f64,
    thermo: Thermo,
    coef: LocalCoefficients,
    target: DivergenceTarget,
    /// Linearised coefficient of ΔT in ∂ₜT.
    diffusivity: Field,
}

pub struct Solver {
    config: SolverConfig,
    model: TransportModel,
    eos: Box<dyn StateEquation>,
    sp: Spectral,
    forcing: Option<Box<dyn Forcing>>,
    mass: f64,
    frozen_rho: Option<Field>,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver").field("config", &self.config).field("model", &self.model).field("mass", &self.mass).finish()
    }
}

impl Solver {
    /// The ghost mode always uses the ideal gas of the grid's dimension.
    pub fn new(config: SolverConfig, model: TransportModel, eos: Box<dyn StateEquation>) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let eos: Box<dyn StateEquation> = match config.mode {
            SolverMode::IdealGasGhost { .. } => Box::new(IdealGas::new(config.dim())),
            _ => eos,
        };
        if eos.dim() != config.dim() {
            return Err(Error::Config(format!("state equation is {}-dimensional, grid is {}", eos.dim(), config.dim())));
        }
        let sp = Spectral::new(&config.shape, &config.lengths);
        Ok(Self { config, model, eos, sp, forcing: None, mass: f64::NAN, frozen_rho: None })
    }

    pub fn with_forcing(mut self, f: Box<dyn Forcing>) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn eos(&self) -> &dyn StateEquation {
        self.eos.as_ref()
    }

    pub fn model(&self) -> &TransportModel {
        &self.model
    }

    pub fn mass_target(&self) -> f64 {
        self.mass
    }

    /// State on the constraint manifold with the given T, P̄ and velocity,
    /// u projected onto the divergence target. Fixes the total mass.
    pub fn initial_state(&mut self, temperature: Field, u: Vec<Field>, pbar: f64) -> Result<FluidState> {
        let n = self.sp.len();
        let d = self.sp.dim();
        if temperature.len() != n || u.len() != d || u.iter().any(|c| c.len() != n) {
            return Err(Error::Config("initial fields do not match the grid".into()));
        }
        let guess: Field = temperature.iter().map(|t| pbar / t).collect();
        let rho = enforce_pressure_constraint(self.eos.as_ref(), &temperature, pbar, &guess, self.config.newton_tolerance)?;
        self.mass = self.sp.integrate(&rho);
        let mut state = FluidState { rho, u, temperature, pressure: vec![0.0; n], pbar, time: 0.0 };
        if self.config.mode == SolverMode::ConductionOnly {
            self.frozen_rho = Some(state.rho.clone());
            state.u = vec![vec![0.0; n]; d];
            return Ok(state);
        }
        let stage = self.stage(&state.temperature, &state.rho, pbar, 0.0)?;
        let (u, _, _) = self.project(&state.u, &stage)?;
        state.u = u;
        state.rho = stage.rho;
        state.pbar = stage.pbar;
        Ok(state)
    }

    fn sample_forcing(&self, t: f64) -> (Option<Field>, Option<Field>, Option<Vec<Field>>) {
        let Some(f) = &self.forcing else { return (None, None, None) };
        let n = self.sp.len();
        let d = self.sp.dim();
        let mut st = Vec::with_capacity(n);
        let mut sd = Vec::with_capacity(n);
        let mut sm = vec![vec![0.0; n]; d];
        let mut buf = vec![0.0; d];
        for i in 0..n {
            let x = self.sp.coordinates(i);
            st.push(f.temperature(&x, t));
            sd.push(f.divergence(&x, t));
            buf.iter_mut().for_each(|b| *b = 0.0);
            f.momentum(&x, t, &mut buf);
            for a in 0..d {
                sm[a][i] = buf[a];
            }
        }
        (Some(st), Some(sd), Some(sm))
    }

    /// P̄ such that ∫ρ(T, P̄) equals the mass target, by Newton on P̄.
    fn mass_consistent_pressure(&self, t: &[f64], rho_guess: &[f64], pbar_guess: f64, time: f64) -> Result<(Field, f64)> {
        let target = self.forcing.as_ref().and_then(|f| f.mass(time)).unwrap_or(self.mass);
        let tol = self.config.newton_tolerance;
        let mut pbar = pbar_guess;
        let mut rho = rho_guess.to_vec();
        for _ in 0..50 {
            rho = enforce_pressure_constraint(self.eos.as_ref(), t, pbar, &rho, tol)?;
            let m = self.sp.integrate(&rho);
            let slope = self.sp.integrate(&rho.iter().zip(t).map(|(&r, &t)| 1.0 / self.eos.pressure(r, t).d_rho).collect::<Vec<_>>());
            let step = (target - m) / slope;
            pbar += step;
            if step.abs() <= 1e-15 * pbar.abs() {
                break;
            }
        }
        let rho = enforce_pressure_constraint(self.eos.as_ref(), t, pbar, &rho, tol)?;
        Ok((rho, pbar))
    }

    fn stage(&self, t: &[f64], rho_guess: &[f64], pbar_guess: f64, time: f64) -> Result<Stage> {
        let n = self.sp.len();
        let (rho, pbar) = match &self.frozen_rho {
            Some(r) => {
                let p: Field = r.iter().zip(t).map(|(&r, &t)| self.eos.pressure(r, t).value).collect();
                (r.clone(), self.sp.mean(&p))
            }
            None => self.mass_consistent_pressure(t, rho_guess, pbar_guess, time)?,
        };
        let thermo = Thermo::evaluate(self.eos.as_ref(), &rho, t)?;
        let coef = LocalCoefficients::evaluate(&self.model, &self.config.mode, &rho, t, pbar);
        let (_, sd, _) = self.sample_forcing(time);
        let target = divergence_from_energy(&self.sp, &rho, t, &thermo, &coef.kappa, self.config.flux_form, pbar, sd.as_deref());
        let flux = self.config.flux_form;
        let diffusivity = (0..n)
            .map(|i| {
                let c = flux.conductivity(coef.kappa[i], t[i]);
                if self.frozen_rho.is_some() {
                    c / (rho[i] * thermo.e_t[i])
                } else {
                    let r = rho[i];
                    let a = pbar - r * r * thermo.e_rho[i] + r * r * thermo.e_t[i] * thermo.p_rho[i] / thermo.p_t[i];
                    target.compression[i] * c / a
                }
            })
            .collect();
        Ok(Stage { rho, pbar, thermo, coef, target, diffusivity })
    }

    /// Explicit rates (∂ₜT, ∂ₜu) at a stage.
    fn rates(&self, t: &[f64], u: &[Field], s: &Stage, time: f64) -> (Field, Vec<Field>) {
        let n = self.sp.len();
        let d = self.sp.dim();
        let (st, _, sm) = self.sample_forcing(time);
        if self.frozen_rho.is_some() {
            let dt = (0..n).map(|i| s.target.conduction[i] / (s.rho[i] * s.thermo.e_t[i]) + st.as_ref().map_or(0.0, |f| f[i])).collect();
            return (dt, vec![vec![0.0; n]; d]);
        }
        let gt = self.sp.gradient(t);
        let dtemp: Field = (0..n)
            .map(|i| {
                let adv: f64 = (0..d).map(|a| u[a][i] * gt[a][i]).sum();
                -adv + s.target.pbar_factor[i] * s.target.pbar_rate + s.target.compression[i] * s.target.divergence[i] + st.as_ref().map_or(0.0, |f| f[i])
            })
            .collect();
        let mut tau = viscous_stress(&self.sp, u, &s.coef.eta, &s.coef.zeta);
        if s.coef.has_thermal_stress() {
            let t2 = thermal_stress(&self.sp, t, &s.coef);
            for (a, b) in tau.iter_mut().zip(&t2) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x -= y;
                }
            }
        }
        let force = tensor_divergence(&self.sp, &tau);
        let grads: Vec<Vec<Field>> = u.iter().map(|c| self.sp.gradient(c)).collect();
        let du = (0..d)
            .map(|b| {
                (0..n)
                    .map(|i| {
                        let adv: f64 = (0..d).map(|a| u[a][i] * grads[b][a][i]).sum();
                        -adv + (force[b][i] + sm.as_ref().map_or(0.0, |f| f[b][i])) / s.rho[i]
                    })
                    .collect()
            })
            .collect();
        (dtemp, du)
    }

    /// Projects u onto ∇·u = D; returns (u, φ, iterations).
    fn project(&self, u: &[Field], s: &Stage) -> Result<(Vec<Field>, Field, usize)> {
        let sp = &self.sp;
        let n = sp.len();
        let inv_rho: Field = s.rho.iter().map(|r| 1.0 / r).collect();
        let div = sp.divergence(u);
        let b: Field = sp.project_to_divergence_range(&(0..n).map(|i| s.target.divergence[i] - div[i]).collect::<Vec<_>>());
        // A φ = −∇·(ρ⁻¹∇φ), symmetric positive semidefinite
        let apply = |phi: &[f64]| -> Field {
            let g = sp.gradient(phi);
            let flux: Vec<Field> = g.iter().map(|c| c.iter().zip(&inv_rho).map(|(x, r)| x * r).collect()).collect();
            sp.divergence(&flux).iter().map(|x| -x).collect()
        };
        let rho_h = 1.0 / sp.mean(&inv_rho);
        let precondition = |r: &[f64]| -> Field { sp.solve_div_grad(r).iter().map(|x| -x * rho_h).collect() };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let bnorm = dot(&b, &b).sqrt();
        let mut phi = vec![0.0; n];
        let mut iterations = 0;
        // b = D − ∇·u*, so A φ = b gives ∇·(u* − ρ⁻¹∇φ) = D
        let mut r = b.clone();
        if bnorm > 0.0 {
            let mut z = precondition(&r);
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            loop {
                let rn = dot(&r, &r).sqrt();
                if rn <= self.config.poisson_tolerance * bnorm {
                    break;
                }
                if iterations >= self.config.poisson_max_iter {
                    return Err(Error::Poisson { residual: rn / bnorm, iterations });
                }
                let ap = apply(&p);
                let alpha = rz / dot(&p, &ap);
                for i in 0..n {
                    phi[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                z = precondition(&r);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
                iterations += 1;
            }
        }
        let g = sp.gradient(&phi);
        let out = u.iter().zip(&g).map(|(c, ga)| c.iter().zip(ga).zip(&inv_rho).map(|((c, g), r)| c - g * r).collect()).collect();
        Ok((out, phi, iterations))
    }

    /// Largest dt allowed by the diffusive bound.
    pub fn step_bound(&self, state: &FluidState) -> f64 {
        let dx2 = (0..self.sp.dim()).map(|a| self.sp.spacing(a).powi(2)).fold(f64::INFINITY, f64::min);
        let coef = LocalCoefficients::evaluate(&self.model, &self.config.mode, &state.rho, &state.temperature, state.pbar);
        let mut worst: f64 = 0.0;
        for i in 0..state.len() {
            let (r, t) = (state.rho[i], state.temperature[i]);
            let cv = self.eos.energy(r, t).d_t;
            worst = worst.max(coef.eta[i] / r).max(self.config.flux_form.conductivity(coef.kappa[i], t) / (r * cv));
        }
        if worst == 0.0 {
            f64::INFINITY
        } else {
            self.config.cfl * dx2 / worst
        }
    }

    /// One step; returns the diagnostics of the new state.
    pub fn step(&mut self, state: &mut FluidState) -> Result<Diagnostics> {
        if self.mass.is_nan() {
            return Err(Error::Config("call initial_state first".into()));
        }
        let dt = self.config.dt;
        let bound = self.step_bound(state);
        if dt > bound {
            return Err(Error::Config(format!("dt {dt} exceeds the diffusive bound {bound}")));
        }
        let sp = self.sp.clone();
        let d = sp.dim();
        let t0 = state.time;
        let s0 = self.stage(&state.temperature, &state.rho, state.pbar, t0)?;
        let ct = s0.diffusivity.iter().cloned().fold(0.0, f64::max);
        let nu = s0.coef.eta.iter().zip(&s0.rho).map(|(e, r)| e / r).fold(0.0, f64::max);
        let frozen = self.frozen_rho.is_some();

        let lap_t0 = sp.laplacian(&state.temperature);
        let lap_u0: Vec<Field> = state.u.iter().map(|c| sp.laplacian(c)).collect();
        let (ft0, fu0) = self.rates(&state.temperature, &state.u, &s0, t0);
        let et0: Field = ft0.iter().zip(&lap_t0).map(|(f, l)| f - ct * l).collect();
        let eu0: Vec<Field> = fu0.iter().zip(&lap_u0).map(|(f, l)| f.iter().zip(l).map(|(f, l)| f - nu * l).collect()).collect();

        let implicit = |y0: &[f64], lap0: &[f64], expl: &dyn Fn(usize) -> f64, c: f64| -> Field {
            let rhs: Field = (0..y0.len()).map(|i| y0[i] + dt * expl(i) + 0.5 * dt * c * lap0[i]).collect();
            sp.solve_helmholtz(&rhs, 0.5 * dt * c)
        };

        // predictor
        let t1 = implicit(&state.temperature, &lap_t0, &|i| et0[i], ct);
        let s1 = self.stage(&t1, &s0.rho, s0.pbar, t0 + dt)?;
        let (u1, _, it1) = if frozen {
            (state.u.clone(), Vec::new(), 0)
        } else {
            let pre: Vec<Field> = (0..d).map(|a| implicit(&state.u[a], &lap_u0[a], &|i| eu0[a][i], nu)).collect();
            self.project(&pre, &s1)?
        };

        // corrector
        let lap_t1 = sp.laplacian(&t1);
        let lap_u1: Vec<Field> = u1.iter().map(|c| sp.laplacian(c)).collect();
        let (ft1, fu1) = self.rates(&t1, &u1, &s1, t0 + dt);
        let et1: Field = ft1.iter().zip(&lap_t1).map(|(f, l)| f - ct * l).collect();
        let t2 = implicit(&state.temperature, &lap_t0, &|i| 0.5 * (et0[i] + et1[i]), ct);
        let s2 = self.stage(&t2, &s1.rho, s1.pbar, t0 + dt)?;
        let (u2, phi, it2) = if frozen {
            (state.u.clone(), vec![0.0; sp.len()], 0)
        } else {
            let eu1: Vec<Field> = fu1.iter().zip(&lap_u1).map(|(f, l)| f.iter().zip(l).map(|(f, l)| f - nu * l).collect()).collect();
            let pre: Vec<Field> = (0..d).map(|a| implicit(&state.u[a], &lap_u0[a], &|i| 0.5 * (eu0[a][i] + eu1[a][i]), nu)).collect();
            self.project(&pre, &s2)?
        };

        let time = t0 + dt;
        for (field, v) in [("temperature", &t2), ("density", &s2.rho)] {
            if let Some((node, &min)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
                return Err(Error::Positivity { time, field, min, node });
            }
        }
        state.temperature = t2;
        state.u = u2;
        state.pressure = phi.iter().map(|p| p / dt).collect();
        state.rho = s2.rho.clone();
        state.pbar = s2.pbar;
        state.time = time;
        Ok(self.diagnostics_with(state, &s2, it1 + it2))
    }

    fn diagnostics_with(&self, state: &FluidState, s: &Stage, iterations: usize) -> Diagnostics {
        let sp = &self.sp;
        let n = sp.len();
        let d = sp.dim();
        let div = sp.divergence(&state.u);
        let speed2: Field = (0..n).map(|i| (0..d).map(|a| state.u[a][i].powi(2)).sum()).collect();
        let energy: Field = (0..n).map(|i| state.rho[i] * (self.eos.energy(state.rho[i], state.temperature[i]).value + 0.5 * speed2[i])).collect();
        let constraint = if self.frozen_rho.is_some() {
            f64::NAN
        } else {
            (0..n).map(|i| (s.thermo.pressure[i] - state.pbar).abs()).fold(0.0, f64::max)
        };
        Diagnostics {
            time: state.time,
            mass: sp.integrate(&state.rho),
            momentum: (0..d).map(|a| sp.integrate(&state.rho.iter().zip(&state.u[a]).map(|(r, u)| r * u).collect::<Vec<_>>())).collect(),
            energy: sp.integrate(&energy),
            entropy: self.entropy(state),
            entropy_production: self.entropy_production(state),
            pbar: state.pbar,
            constraint_residual: constraint,
            divergence_residual: if self.frozen_rho.is_some() { 0.0 } else { max_abs(&div.iter().zip(&s.target.divergence).map(|(a, b)| a - b).collect::<Vec<_>>()) },
            max_divergence: max_abs(&div),
            max_speed: speed2.iter().fold(0.0, |m: f64, x| m.max(x.sqrt())),
            poisson_iterations: iterations,
        }
    }

    pub fn diagnostics(&self, state: &FluidState) -> Result<Diagnostics> {
        let s = match &self.frozen_rho {
            Some(_) => self.stage(&state.temperature, &state.rho, state.pbar, state.time)?,
            None => {
                let thermo = Thermo::evaluate(self.eos.as_ref(), &state.rho, &state.temperature)?;
                let coef = LocalCoefficients::evaluate(&self.model, &self.config.mode, &state.rho, &state.temperature, state.pbar);
                let (_, sd, _) = self.sample_forcing(state.time);
                let target = divergence_from_energy(&self.sp, &state.rho, &state.temperature, &thermo, &coef.kappa, self.config.flux_form, state.pbar, sd.as_deref());
                Stage { rho: state.rho.clone(), pbar: state.pbar, thermo, coef, target, diffusivity: Vec::new() }
            }
        };
        Ok(self.diagnostics_with(state, &s, 0))
    }

    /// ∫ρs dx.
    pub fn entropy(&self, state: &FluidState) -> f64 {
        let n = self.sp.len();
        self.sp.integrate(&(0..n).map(|i| state.rho[i] * self.eos.entropy(state.rho[i], state.temperature[i]).value).collect::<Vec<_>>())
    }

    /// ∫c|∇T|²/T² dx, the rate the entropy identity predicts.
    pub fn entropy_production(&self, state: &FluidState) -> f64 {
        let sp = &self.sp;
        let g = sp.gradient(&state.temperature);
        let coef = LocalCoefficients::evaluate(&self.model, &self.config.mode, &state.rho, &state.temperature, state.pbar);
        let v: Field = (0..sp.len())
            .map(|i| {
                let t = state.temperature[i];
                let g2: f64 = g.iter().map(|c| c[i] * c[i]).sum();
                self.config.flux_form.conductivity(coef.kappa[i], t) * g2 / (t * t)
            })
            .collect();
        sp.integrate(&v)
    }

    /// Runs `steps` steps, writing one CSV row per step when `out` is given.
    pub fn run(&mut self, state: &mut FluidState, steps: usize, mut out: Option<&mut dyn Write>) -> Result<Vec<Diagnostics>> {
        if let Some(w) = out.as_mut() {
            writeln!(w, "# mode={} flux_form={}", self.config.mode.name(), self.config.flux_form.name())?;
            writeln!(w, "{}", Diagnostics::csv_header(self.sp.dim()))?;
            writeln!(w, "{}", self.diagnostics(state)?.csv_row())?;
        }
        let mut all = Vec::with_capacity(steps);
        for _ in 0..steps {
            let diag = self.step(state)?;
            if let Some(w) = out.as_mut() {
                writeln!(w, "{}", diag.csv_row())?;
            }
            all.push(diag);
        }
        Ok(all)
    }
}
