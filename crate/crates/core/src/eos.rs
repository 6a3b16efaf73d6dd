//! State equation P(ρ,T), e(ρ,T), s(ρ,T) per unit mass, either analytic
//! (ideal gas) or tabulated on a rectangle and interpolated bicubically.

use crate::error::{Error, Result};
use crate::gibbs::{seeded_rng, GibbsChain, GibbsParameters, SamplerConfig, Ensemble};
use crate::md::{for_each_pair, PotentialSpec, TorusDomain};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

/// A value with its first partials in ρ and T.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Partials {
    pub value: f64,
    pub d_rho: f64,
    pub d_t: f64,
}

pub trait StateEquation: Send + Sync {
    fn dim(&self) -> usize;
    fn pressure(&self, rho: f64, t: f64) -> Partials;
    fn energy(&self, rho: f64, t: f64) -> Partials;
    fn entropy(&self, rho: f64, t: f64) -> Partials;

    /// Valid (ρ, T) rectangle, if bounded.
    fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        None
    }

    /// λ⁰ = (e + P/ρ)/T − s.
    fn log_activity(&self, rho: f64, t: f64) -> f64 {
        let e = self.energy(rho, t).value;
        let p = self.pressure(rho, t).value;
        (e + p / rho) / t - self.entropy(rho, t).value
    }

    /// Solves P(ρ, T) = p for ρ by safeguarded Newton iteration.
    /// Returns ρ and the iteration count.
    fn solve_density(&self, p: f64, t: f64, guess: f64, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
        let mut rho = guess;
        for it in 0..max_iter {
            let pp = self.pressure(rho, t);
            let r = pp.value - p;
            if r.abs() <= tol * p.abs().max(1.0) {
                return Ok((rho, it));
            }
            if !(pp.d_rho > 0.0) {
                return Err(Error::StateEquation(format!("∂P/∂ρ = {} at ρ={rho}, T={t}", pp.d_rho)));
            }
            let mut next = rho - r / pp.d_rho;
            if next <= 0.0 {
                next = 0.5 * rho;
            }
            rho = next;
        }
        Err(Error::StateEquation(format!("density solve did not converge at P={p}, T={t}")))
    }
}

/// Derivatives of λ⁰ and λ^{d+1} = −1/T along an isobar, as functions of T.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChemicalDerivatives {
    pub lambda0_prime: f64,
    pub lambda0_second: f64,
    pub lambdae_prime: f64,
    pub lambdae_second: f64,
}

/// (∂ρ/∂T)_P = −P_T / P_ρ.
pub fn isobaric_density_slope(eos: &dyn StateEquation, rho: f64, t: f64) -> f64 {
    let p = eos.pressure(rho, t);
    -p.d_t / p.d_rho
}

/// λ⁰′ = −h/T² with h = e + P/ρ, and λ⁰″ from the isobaric slope of h.
pub fn chemical_derivatives(eos: &dyn StateEquation, rho: f64, t: f64) -> ChemicalDerivatives {
    let p = eos.pressure(rho, t);
    let e = eos.energy(rho, t);
    let h = e.value + p.value / rho;
    let rho_t = -p.d_t / p.d_rho;
    let h_t = e.d_t + e.d_rho * rho_t - p.value / (rho * rho) * rho_t;
    ChemicalDerivatives {
        lambda0_prime: -h / (t * t),
        lambda0_second: -h_t / (t * t) + 2.0 * h / (t * t * t),
        lambdae_prime: 1.0 / (t * t),
        lambdae_second: -2.0 / (t * t * t),
    }
}

/// Unit-mass ideal gas. The entropy constant is chosen so that λ⁰ equals
/// ln ρ − (d/2) ln(2πT).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealGas {
    pub dim: usize,
}

impl IdealGas {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    fn half_d(&self) -> f64 {
        self.dim as f64 / 2.0
    }
}

impl StateEquation for IdealGas {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pressure(&self, rho: f64, t: f64) -> Partials {
        Partials { value: rho * t, d_rho: t, d_t: rho }
    }

    fn energy(&self, _rho: f64, t: f64) -> Partials {
        Partials { value: self.half_d() * t, d_rho: 0.0, d_t: self.half_d() }
    }

    fn entropy(&self, rho: f64, t: f64) -> Partials {
        let k = self.half_d();
        Partials {
            value: k * t.ln() - rho.ln() + k + 1.0 + k * (2.0 * PI).ln(),
            d_rho: -1.0 / rho,
            d_t: k / t,
        }
    }

    fn solve_density(&self, p: f64, t: f64, _guess: f64, _tol: f64, _max_iter: usize) -> Result<(f64, usize)> {
        Ok((p / t, 0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Measured,
    IdealGasAnalytic,
}

/// Node values plus Hermite derivative data of one tabulated quantity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct NodeData {
    f: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fxy: Vec<f64>,
}

/// Three-point derivative on a non-uniform grid; two-point if only two nodes.
fn grid_derivative(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    if n == 2 {
        let s = (f[1] - f[0]) / (x[1] - x[0]);
        return vec![s, s];
    }
    // derivative at x[k] of the parabola through (a, b, c)
    let parabola = |k: usize, a: usize, b: usize, c: usize| {
        let (xa, xb, xc) = (x[a], x[b], x[c]);
        let xk = x[k];
        f[a] * ((xk - xb) + (xk - xc)) / ((xa - xb) * (xa - xc))
            + f[b] * ((xk - xa) + (xk - xc)) / ((xb - xa) * (xb - xc))
            + f[c] * ((xk - xa) + (xk - xb)) / ((xc - xa) * (xc - xb))
    };
    (0..n)
        .map(|k| {
            if k == 0 {
                parabola(0, 0, 1, 2)
            } else if k == n - 1 {
                parabola(k, n - 3, n - 2, n - 1)
            } else {
                parabola(k, k - 1, k, k + 1)
            }
        })
        .collect()
}

fn hermite(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2],
        [6.0 * t2 - 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 2.0 * t],
    )
}

/// Locates the cell containing x, clamped to the table (linear extrapolation
/// of the end cell beyond it).
fn locate(x: &[f64], v: f64) -> (usize, f64, f64) {
    if x.len() == 1 {
        return (0, 0.0, 1.0);
    }
    let k = match x.iter().position(|&g| g > v) {
        Some(0) => 0,
        Some(p) => p - 1,
        None => x.len() - 2,
    }
    .min(x.len() - 2);
    let h = x[k + 1] - x[k];
    (k, (v - x[k]) / h, h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateEquationTable {
    pub dim: usize,
    pub provenance: Provenance,
    pub densities: Vec<f64>,
    pub temperatures: Vec<f64>,
    /// Node values, index i·n_T + j for (ρ_i, T_j).
    pub pressure: Vec<f64>,
    pub energy: Vec<f64>,
    pub entropy: Vec<f64>,
    pub stderr_pressure: Vec<f64>,
    pub stderr_energy: Vec<f64>,
    /// Nodes whose sampling did not converge.
    pub flagged: Vec<bool>,
    /// Difference of the two integration paths for s, and its propagated
    /// standard error.
    pub path_difference: Vec<f64>,
    pub path_error: Vec<f64>,
    p_nodes: NodeData,
    e_nodes: NodeData,
    s_nodes: NodeData,
}

impl StateEquationTable {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.temperatures.len() + j
    }

    pub fn is_complete(&self) -> bool {
        !self.flagged.iter().any(|&f| f)
    }

    /// Analytic ideal-gas nodes; evaluation bypasses interpolation.
    pub fn ideal_gas(dim: usize, densities: Vec<f64>, temperatures: Vec<f64>) -> Result<Self> {
        let gas = IdealGas::new(dim);
        let mut p = Vec::new();
        let mut e = Vec::new();
        let mut s = Vec::new();
        for &r in &densities {
            for &t in &temperatures {
                p.push(gas.pressure(r, t).value);
                e.push(gas.energy(r, t).value);
                s.push(gas.entropy(r, t).value);
            }
        }
        let n = p.len();
        let mut table = Self::from_measurements(dim, densities, temperatures, p, e, vec![0.0; n], vec![0.0; n], vec![false; n], None)?;
        table.provenance = Provenance::IdealGasAnalytic;
        table.entropy = s;
        table.path_difference = vec![0.0; n];
        table.path_error = vec![0.0; n];
        Ok(table)
    }

    /// Builds the interpolant from node values of P and e; s is obtained by
    /// thermodynamic integration from `reference_entropy` at (ρ₀, T₀), which
    /// defaults to the ideal-gas value there.
    #[allow(clippy::too_many_arguments)]
    pub fn from_measurements(
        dim: usize,
        densities: Vec<f64>,
        temperatures: Vec<f64>,
        pressure: Vec<f64>,
        energy: Vec<f64>,
        stderr_pressure: Vec<f64>,
        stderr_energy: Vec<f64>,
        flagged: Vec<bool>,
        reference_entropy: Option<f64>,
    ) -> Result<Self> {
        let (nr, nt) = (densities.len(), temperatures.len());
        if nr < 2 || nt < 2 {
            return Err(Error::InvalidParameter("table needs at least 2×2 nodes".into()));
        }
        let sorted = |x: &[f64]| x.windows(2).all(|w| w[1] > w[0]) && x[0] > 0.0;
        if !sorted(&densities) || !sorted(&temperatures) {
            return Err(Error::InvalidParameter("table axes must be positive and increasing".into()));
        }
        for v in [&pressure, &energy, &stderr_pressure, &stderr_energy] {
            if v.len() != nr * nt {
                return Err(Error::ShapeMismatch(format!("expected {} node values", nr * nt)));
            }
        }
        let s0 = reference_entropy.unwrap_or_else(|| IdealGas::new(dim).entropy(densities[0], temperatures[0]).value);
        let p_nodes = node_data(&densities, &temperatures, &pressure);
        let e_nodes = node_data(&densities, &temperatures, &energy);
        let (a, b) = integrate_entropy(&densities, &temperatures, &pressure, &e_nodes, &p_nodes, s0);
        let entropy: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let path_difference: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();

        // Monte Carlo propagation of node errors into the path difference.
        let replicas = 64;
        let mut rng = seeded_rng(0x5eed_0e05);
        let mut sum2 = vec![0.0; nr * nt];
        for _ in 0..replicas {
            let mut jitter = |v: &[f64], se: &[f64]| -> Vec<f64> {
                v.iter()
                    .zip(se)
                    .map(|(x, s)| { let z: f64 = StandardNormal.sample(&mut rng); x + s * z })
                    .collect()
            };
            let pp = jitter(&pressure, &stderr_pressure);
            let ee = jitter(&energy, &stderr_energy);
            let pn = node_data(&densities, &temperatures, &pp);
            let en = node_data(&densities, &temperatures, &ee);
            let (ra, rb) = integrate_entropy(&densities, &temperatures, &pp, &en, &pn, s0);
            for k in 0..nr * nt {
                let dd = (ra[k] - rb[k]) - path_difference[k];
                sum2[k] += dd * dd;
            }
        }
        let path_error = sum2.iter().map(|s| (s / (replicas - 1) as f64).sqrt()).collect();

        let s_nodes = entropy_nodes(&densities, &temperatures, &entropy, &pressure, &e_nodes);
        Ok(Self {
            dim,
            provenance: Provenance::Measured,
            densities,
            temperatures,
            pressure,
            energy,
            entropy,
            stderr_pressure,
            stderr_energy,
            flagged,
            path_difference,
            path_error,
            p_nodes,
            e_nodes,
            s_nodes,
        })
    }

    fn eval(&self, nodes: &NodeData, rho: f64, t: f64) -> Partials {
        let (i, u, hx) = locate(&self.densities, rho);
        let (j, v, hy) = locate(&self.temperatures, t);
        let (bx, dbx) = hermite(u);
        let (by, dby) = hermite(v);
        let mut out = Partials::default();
        for (a, ia) in [(0usize, i), (1, i + 1)] {
            for (b, jb) in [(0usize, j), (1, j + 1)] {
                let k = self.idx(ia, jb);
                // P-basis at slot 2a, Q-basis at slot 2a+1
                let (px, qx, dpx, dqx) = (bx[2 * a], bx[2 * a + 1] * hx, dbx[2 * a] / hx, dbx[2 * a + 1]);
                let (py, qy, dpy, dqy) = (by[2 * b], by[2 * b + 1] * hy, dby[2 * b] / hy, dby[2 * b + 1]);
                let c = [nodes.f[k], nodes.fx[k], nodes.fy[k], nodes.fxy[k]];
                out.value += px * py * c[0] + qx * py * c[1] + px * qy * c[2] + qx * qy * c[3];
                out.d_rho += dpx * py * c[0] + dqx * py * c[1] + dpx * qy * c[2] + dqx * qy * c[3];
                out.d_t += px * dpy * c[0] + qx * dpy * c[1] + px * dqy * c[2] + qx * dqy * c[3];
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "rho,T,P,e,s,stderr_P,stderr_e")?;
        for (i, r) in self.densities.iter().enumerate() {
            for (j, t) in self.temperatures.iter().enumerate() {
                let k = self.idx(i, j);
                writeln!(
                    w,
                    "{r:e},{t:e},{:e},{:e},{:e},{:e},{:e}",
                    self.pressure[k], self.energy[k], self.entropy[k], self.stderr_pressure[k], self.stderr_energy[k]
                )?;
            }
        }
        Ok(())
    }

    /// Reads a CSV written by [`Self::write_csv`]. The entropy column is
    /// kept as the reference value at the first node; the rest is
    /// re-integrated.
    pub fn read_csv<R: BufRead>(dim: usize, r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::StateEquation(format!("line {}: {e}", n + 1)))?;
            if vals.len() != 7 {
                return Err(Error::StateEquation(format!("line {}: expected 7 columns", n + 1)));
            }
            rows.push(vals);
        }
        let mut densities: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut temperatures: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        for v in [&mut densities, &mut temperatures] {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
        }
        if densities.len() * temperatures.len() != rows.len() {
            return Err(Error::StateEquation("rows do not form a rectangle".into()));
        }
        rows.sort_by(|a, b| (a[0], a[1]).partial_cmp(&(b[0], b[1])).unwrap());
        let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
        let n = rows.len();
        Self::from_measurements(dim, densities, temperatures, col(2), col(3), col(5), col(6), vec![false; n], Some(rows[0][4]))
    }
}

fn node_data(x: &[f64], y: &[f64], f: &[f64]) -> NodeData {
    let (nx, ny) = (x.len(), y.len());
    let mut fx = vec![0.0; nx * ny];
    let mut fy = vec![0.0; nx * ny];
    let mut fxy = vec![0.0; nx * ny];
    for j in 0..ny {
        let col: Vec<f64> = (0..nx).map(|i| f[i * ny + j]).collect();
        for (i, d) in grid_derivative(x, &col).into_iter().enumerate() {
            fx[i * ny + j] = d;
        }
    }
    for i in 0..nx {
        let row = &f[i * ny..(i + 1) * ny];
        for (j, d) in grid_derivative(y, row).into_iter().enumerate() {
            fy[i * ny + j] = d;
        }
        let row = &fx[i * ny..(i + 1) * ny];
        for (j, d) in grid_derivative(y, row).into_iter().enumerate() {
            fxy[i * ny + j] = d;
        }
    }
    NodeData { f: f.to_vec(), fx, fy, fxy }
}

/// Node derivatives of s from the relations s_T = e_T/T and
/// s_ρ = (e_ρ − P/ρ²)/T; the cross term averages both orders.
fn entropy_nodes(x: &[f64], y: &[f64], s: &[f64], p: &[f64], e: &NodeData) -> NodeData {
    let (nx, ny) = (x.len(), y.len());
    let mut fx = vec![0.0; nx * ny];
    let mut fy = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let k = i * ny + j;
            fy[k] = e.fy[k] / y[j];
            fx[k] = (e.fx[k] - p[k] / (x[i] * x[i])) / y[j];
        }
    }
    let a = node_data(x, y, &fx).fy;
    let b = node_data(x, y, &fy).fx;
    let fxy = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
    NodeData { f: s.to_vec(), fx, fy, fxy }
}

/// Hermite value and slope along one segment from end values and slopes.
fn segment(f0: f64, f1: f64, d0: f64, d1: f64, h: f64, t: f64) -> (f64, f64) {
    let (b, db) = hermite(t);
    (b[0] * f0 + b[1] * h * d0 + b[2] * f1 + b[3] * h * d1, (db[0] * f0 + db[2] * f1) / h + db[1] * d0 + db[3] * d1)
}

/// Entropy at all nodes along two paths from (ρ₀, T₀): path A goes up in T
/// at ρ₀ then across in ρ; path B goes across in ρ at T₀ then up in T. Each
/// segment integral uses Simpson's rule with Hermite midpoint values.
fn integrate_entropy(x: &[f64], y: &[f64], p: &[f64], e: &NodeData, pn: &NodeData, s0: f64) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (x.len(), y.len());
    let k = |i: usize, j: usize| i * ny + j;
    // ∫ e_T/T dT at fixed ρ_i over [T_j, T_{j+1}]
    let step_t = |i: usize, j: usize| {
        let h = y[j + 1] - y[j];
        let (a, b) = (k(i, j), k(i, j + 1));
        let (_, mid) = segment(e.f[a], e.f[b], e.fy[a], e.fy[b], h, 0.5);
        let tm = 0.5 * (y[j] + y[j + 1]);
        h / 6.0 * (e.fy[a] / y[j] + 4.0 * mid / tm + e.fy[b] / y[j + 1])
    };
    // ∫ (e_ρ − P/ρ²)/T dρ at fixed T_j over [ρ_i, ρ_{i+1}]
    let step_r = |i: usize, j: usize| {
        let h = x[i + 1] - x[i];
        let (a, b) = (k(i, j), k(i + 1, j));
        let (_, erm) = segment(e.f[a], e.f[b], e.fx[a], e.fx[b], h, 0.5);
        let (pm, _) = segment(p[a], p[b], pn.fx[a], pn.fx[b], h, 0.5);
        let rm = 0.5 * (x[i] + x[i + 1]);
        let g = |ed: f64, pv: f64, r: f64| (ed - pv / (r * r)) / y[j];
        h / 6.0 * (g(e.fx[a], p[a], x[i]) + 4.0 * g(erm, pm, rm) + g(e.fx[b], p[b], x[i + 1]))
    };
    let mut path_a = vec![0.0; nx * ny];
    let mut path_b = vec![0.0; nx * ny];
    let mut along_t = vec![s0; ny];
    for j in 1..ny {
        along_t[j] = along_t[j - 1] + step_t(0, j - 1);
    }
    for j in 0..ny {
        path_a[k(0, j)] = along_t[j];
        for i in 1..nx {
            path_a[k(i, j)] = path_a[k(i - 1, j)] + step_r(i - 1, j);
        }
    }
    let mut along_r = vec![s0; nx];
    for i in 1..nx {
        along_r[i] = along_r[i - 1] + step_r(i - 1, 0);
    }
    for i in 0..nx {
        path_b[k(i, 0)] = along_r[i];
        for j in 1..ny {
            path_b[k(i, j)] = path_b[k(i, j - 1)] + step_t(i, j - 1);
        }
    }
    (path_a, path_b)
}

impl StateEquation for StateEquationTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pressure(&self, rho: f64, t: f64) -> Partials {
        match self.provenance {
            Provenance::IdealGasAnalytic => IdealGas::new(self.dim).pressure(rho, t),
            Provenance::Measured => self.eval(&self.p_nodes, rho, t),
        }
    }

    fn energy(&self, rho: f64, t: f64) -> Partials {
        match self.provenance {
            Provenance::IdealGasAnalytic => IdealGas::new(self.dim).energy(rho, t),
            Provenance::Measured => self.eval(&self.e_nodes, rho, t),
        }
    }

    fn entropy(&self, rho: f64, t: f64) -> Partials {
        match self.provenance {
            Provenance::IdealGasAnalytic => IdealGas::new(self.dim).entropy(rho, t),
            Provenance::Measured => self.eval(&self.s_nodes, rho, t),
        }
    }

    fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        Some((
            [self.densities[0], *self.densities.last().unwrap()],
            [self.temperatures[0], *self.temperatures.last().unwrap()],
        ))
    }
}

/// Budget for measuring one table node by canonical Gibbs sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulationConfig {
    pub count: usize,
    pub sampler: SamplerConfig,
    /// Measurement sweeps per node.
    pub samples: usize,
    pub seed: u64,
}

impl Default for TabulationConfig {
    fn default() -> Self {
        Self { count: 64, sampler: SamplerConfig::default(), samples: 400, seed: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMeasurement {
    pub pressure: f64,
    pub energy: f64,
    pub stderr_pressure: f64,
    pub stderr_energy: f64,
    pub converged: bool,
}

/// Standard error of a correlated series, inflated by its integrated
/// autocorrelation time.
pub fn correlated_stderr(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (var * crate::gibbs::integrated_autocorrelation(x) / n).sqrt()
}

/// Canonical sampling at (ρ, T) with N = `config.count`. Kinetic parts are
/// exact: e = (d/2)T + ⟨U⟩/N and P = ρT + ⟨Σ_{i<j} Ψ-trace⟩/(dL^d).
pub fn measure_node(dim: usize, rho: f64, t: f64, pot: &PotentialSpec, config: &TabulationConfig, seed: u64) -> Result<NodeMeasurement> {
    if config.count == 0 || config.samples == 0 {
        return Err(Error::InvalidParameter("tabulation budgets must be positive".into()));
    }
    let side = (config.count as f64 / rho).powf(1.0 / dim as f64);
    let domain = TorusDomain::new(dim, side, pot.range.max(1e-9))?;
    if side <= 2.0 * pot.range {
        return Err(Error::InvalidDomain(format!("box side {side} too small for range {}", pot.range)));
    }
    let params = GibbsParameters::ideal_gas(dim, rho, t)?;
    let mut sampler = config.sampler.clone();
    sampler.ensemble = Ensemble::Canonical { count: config.count };
    let mut rng = seeded_rng(seed);
    let mut chain = GibbsChain::new(domain, *pot, params, sampler.clone(), &mut rng)?;
    let burned = chain.burn_in(&mut rng);
    let n = config.count as f64;
    let vol = domain.volume();
    let mut es = Vec::with_capacity(config.samples);
    let mut ps = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        chain.sweep(&mut rng);
        let mut w = 0.0;
        if !pot.is_free() {
            for_each_pair(chain.positions(), &domain, pot.range, |_, _, _, r2| {
                w += pot.force_over_r(r2) * r2;
                Ok(())
            })?;
        }
        es.push(0.5 * dim as f64 * t + chain.potential_energy() / n);
        ps.push(rho * t + w / (dim as f64 * vol));
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(NodeMeasurement {
        pressure: mean(&ps),
        energy: mean(&es),
        stderr_pressure: correlated_stderr(&ps),
        stderr_energy: correlated_stderr(&es),
        converged: burned < sampler.max_burn_in,
    })
}

/// Measures every node of the ρ × T rectangle (in parallel, one seed per
/// node) and integrates s. Non-converged nodes are flagged.
pub fn tabulate_state_equation(
    dim: usize,
    densities: &[f64],
    temperatures: &[f64],
    pot: &PotentialSpec,
    config: &TabulationConfig,
) -> Result<StateEquationTable> {
    use rayon::prelude::*;
    let nodes: Vec<(usize, f64, f64)> = densities
        .iter()
        .flat_map(|&r| temperatures.iter().map(move |&t| (r, t)))
        .enumerate()
        .map(|(k, (r, t))| (k, r, t))
        .collect();
    let measured: Vec<NodeMeasurement> = nodes
        .par_iter()
        .map(|&(k, r, t)| measure_node(dim, r, t, pot, config, config.seed.wrapping_add(k as u64 * 7919)))
        .collect::<Result<_>>()?;
    let col = |f: fn(&NodeMeasurement) -> f64| measured.iter().map(f).collect::<Vec<_>>();
    StateEquationTable::from_measurements(
        dim,
        densities.to_vec(),
        temperatures.to_vec(),
        col(|m| m.pressure),
        col(|m| m.energy),
        col(|m| m.stderr_pressure),
        col(|m| m.stderr_energy),
        measured.iter().map(|m| !m.converged).collect(),
        None,
    )
}
