use crate::error::{Error, Result};
use crate::model::{FluxForm, SolverMode, TransportModel};
use crate::spectral::{Field, Spectral};
use ghostflow_core::eos::StateEquation;

/// Coefficient values at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalCoefficients {
    pub eta: Field,
    pub zeta: Field,
    pub kappa: Field,
    pub k1: Field,
    pub k2: Field,
    pub omega1: Field,
    pub omega2: Field,
}

impl LocalCoefficients {
    pub fn evaluate(model: &TransportModel, mode: &SolverMode, rho: &[f64], t: &[f64], pbar: f64) -> Self {
        let f = |c: &crate::model::Coefficient| -> Field { rho.iter().zip(t).map(|(&r, &t)| c.eval(r, t)).collect() };
        let eta = f(&model.eta);
        let kappa = f(&model.kappa);
        match mode {
            SolverMode::IdealGasGhost { k_bar1, k_bar2 } => {
                let zero = vec![0.0; rho.len()];
                let k2 = eta.iter().map(|l| l * l * k_bar1 / pbar).collect();
                let k1 = eta.iter().zip(t).map(|(l, t)| l * l * k_bar2 / (pbar * t)).collect();
                Self { eta, zeta: zero.clone(), kappa, k1, k2, omega1: zero.clone(), omega2: zero }
            }
            SolverMode::InsfReduction | SolverMode::ConductionOnly => {
                let zero = vec![0.0; rho.len()];
                Self { eta, zeta: f(&model.zeta), kappa, k1: zero.clone(), k2: zero.clone(), omega1: zero.clone(), omega2: zero }
            }
            SolverMode::ParticleEos => Self {
                eta,
                zeta: f(&model.zeta),
                kappa,
                k1: f(&model.k1),
                k2: f(&model.k2),
                omega1: f(&model.omega1),
                omega2: f(&model.omega2),
            },
        }
    }

    pub fn has_thermal_stress(&self) -> bool {
        [&self.k1, &self.k2, &self.omega1, &self.omega2].iter().any(|c| c.iter().any(|&x| x != 0.0))
    }
}

/// Row-major d×d tensor field.
pub type Tensor = Vec<Field>;

/// τ⁽¹⁾_{αβ} = η(∂_αu^β + ∂_βu^α − (2/d)δ_{αβ}∇·u) + ζδ_{αβ}∇·u.
pub fn viscous_stress(sp: &Spectral, u: &[Field], eta: &[f64], zeta: &[f64]) -> Tensor {
    let grads: Vec<Vec<Field>> = u.iter().map(|c| sp.gradient(c)).collect();
    viscous_stress_from_gradient(&grads, eta, zeta)
}

/// τ⁽¹⁾ from `grads[β][α]` = ∂_αu^β.
pub fn viscous_stress_from_gradient(grads: &[Vec<Field>], eta: &[f64], zeta: &[f64]) -> Tensor {
    let d = grads.len();
    let n = eta.len();
    let div: Field = (0..n).map(|i| (0..d).map(|a| grads[a][a][i]).sum()).collect();
    let mut tau = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            tau.push(
                (0..n)
                    .map(|i| {
                        let mut v = eta[i] * (grads[b][a][i] + grads[a][b][i]);
                        if a == b {
                            v += (zeta[i] - 2.0 / d as f64 * eta[i]) * div[i];
                        }
                        v
                    })
                    .collect(),
            );
        }
    }
    tau
}

/// τ⁽²⁾_{αβ} = K₁(∂_αT∂_βT − δ|∇T|²/d) + ω₁δ|∇T|² + K₂(∂²_{αβ}T − δΔT/d) + ω₂δΔT.
pub fn thermal_stress(sp: &Spectral, t: &[f64], c: &LocalCoefficients) -> Tensor {
    let d = sp.dim();
    let g = sp.gradient(t);
    let hess: Vec<Field> = (0..d * d).map(|k| sp.second_derivative(t, k / d, k % d)).collect();
    thermal_stress_from_derivatives(&g, &hess, c)
}

/// τ⁽²⁾ from ∇T and the row-major Hessian of T.
pub fn thermal_stress_from_derivatives(g: &[Field], hess: &[Field], c: &LocalCoefficients) -> Tensor {
    let d = g.len();
    let n = c.k1.len();
    let dd = d as f64;
    let mut tau = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            tau.push(
                (0..n)
                    .map(|i| {
                        let grad2: f64 = (0..d).map(|k| g[k][i] * g[k][i]).sum();
                        let lap: f64 = (0..d).map(|k| hess[k * d + k][i]).sum();
                        let mut v = c.k1[i] * g[a][i] * g[b][i] + c.k2[i] * hess[a * d + b][i];
                        if a == b {
                            v += (c.omega1[i] - c.k1[i] / dd) * grad2 + (c.omega2[i] - c.k2[i] / dd) * lap;
                        }
                        v
                    })
                    .collect(),
            );
        }
    }
    tau
}

/// (∇·τ)^β = Σ_α ∂_α τ_{αβ}.
pub fn tensor_divergence(sp: &Spectral, tau: &Tensor) -> Vec<Field> {
    let d = sp.dim();
    (0..d).map(|b| sp.divergence(&(0..d).map(|a| tau[a * d + b].clone()).collect::<Vec<_>>())).collect()
}

/// ρ(x) with P(ρ(x), T(x)) = P̄, by Newton from `guess`.
pub fn enforce_pressure_constraint(eos: &dyn StateEquation, t: &[f64], pbar: f64, guess: &[f64], tol: f64) -> Result<Field> {
    t.iter()
        .zip(guess)
        .map(|(&t, &g)| {
            let g = if g > 0.0 { g } else { 1.0 };
            let err = |message: String| Error::Constraint { pressure: pbar, temperature: t, message };
            let (r, _) = eos.solve_density(pbar, t, g, tol, 100).map_err(|e| err(e.to_string()))?;
            match eos.bounds() {
                Some(([lo, hi], _)) if r < lo || r > hi => Err(err(format!("root {r} outside table range [{lo}, {hi}]"))),
                _ => Ok(r),
            }
        })
        .collect()
}

/// Thermodynamic derivatives at the nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Thermo {
    pub p_rho: Field,
    pub p_t: Field,
    pub e_rho: Field,
    pub e_t: Field,
    pub pressure: Field,
}

impl Thermo {
    pub fn evaluate(eos: &dyn StateEquation, rho: &[f64], t: &[f64]) -> Result<Self> {
        let n = rho.len();
        let mut th = Thermo { p_rho: Vec::with_capacity(n), p_t: Vec::with_capacity(n), e_rho: Vec::with_capacity(n), e_t: Vec::with_capacity(n), pressure: Vec::with_capacity(n) };
        for (&r, &t) in rho.iter().zip(t) {
            let p = eos.pressure(r, t);
            let e = eos.energy(r, t);
            if !(p.d_t > 0.0 && e.d_t > 0.0 && p.d_rho.is_finite() && e.d_rho.is_finite()) {
                return Err(Error::Derivatives { rho: r, temperature: t });
            }
            th.p_rho.push(p.d_rho);
            th.p_t.push(p.d_t);
            th.e_rho.push(e.d_rho);
            th.e_t.push(e.d_t);
            th.pressure.push(p.value);
        }
        Ok(th)
    }
}

/// ∇·(c∇T) with q = c∇T set by the flux form.
pub fn conduction(sp: &Spectral, t: &[f64], kappa: &[f64], flux: FluxForm) -> Field {
    let g = sp.gradient(t);
    let q: Vec<Field> = g.iter().map(|ga| ga.iter().zip(kappa).zip(t).map(|((g, &k), &t)| flux.conductivity(k, t) * g).collect()).collect();
    sp.divergence(&q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceTarget {
    pub divergence: Field,
    pub pbar_rate: f64,
    /// ∇·q.
    pub conduction: Field,
    /// ρP_ρ/P_T, the factor of ∇·u in DT/Dt.
    pub compression: Field,
    /// 1/P_T, the factor of dP̄/dt in DT/Dt.
    pub pbar_factor: Field,
}

/// Eliminates ∂ₜρ and ∂ₜe between continuity, energy and the constraint:
/// A∇·u = ∇·q − B·dP̄/dt, A = P − ρ²e_ρ + ρ²e_T P_ρ/P_T, B = ρe_T/P_T, with
/// dP̄/dt fixed by the zero torus mean of ∇·u. `extra` is added to ∇·u
/// before the mean is fixed.
pub fn divergence_from_energy(sp: &Spectral, rho: &[f64], t: &[f64], th: &Thermo, kappa: &[f64], flux: FluxForm, pbar: f64, extra: Option<&[f64]>) -> DivergenceTarget {
    let n = sp.len();
    let q = conduction(sp, t, kappa, flux);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let r = rho[i];
        // the mechanical P is P̄ on the constraint manifold
        a.push(pbar - r * r * th.e_rho[i] + r * r * th.e_t[i] * th.p_rho[i] / th.p_t[i]);
        b.push(r * th.e_t[i] / th.p_t[i]);
    }
    let mean_qa = sp.mean(&(0..n).map(|i| q[i] / a[i] + extra.map_or(0.0, |e| e[i])).collect::<Vec<_>>());
    let mean_ba = sp.mean(&(0..n).map(|i| b[i] / a[i]).collect::<Vec<_>>());
    let rate = mean_qa / mean_ba;
    let raw: Field = (0..n).map(|i| (q[i] - b[i] * rate) / a[i] + extra.map_or(0.0, |e| e[i])).collect();
    let divergence = sp.project_to_divergence_range(&raw);
    DivergenceTarget {
        divergence,
        pbar_rate: rate,
        conduction: q,
        compression: (0..n).map(|i| rho[i] * th.p_rho[i] / th.p_t[i]).collect(),
        pbar_factor: th.p_t.iter().map(|p| 1.0 / p).collect(),
    }
}
