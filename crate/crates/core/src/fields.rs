//! Empirical fields z^μ, microscopic currents w^{μk} and the interaction
//! tensors Φ̄₀, Φ̄ binned on a periodic grid.
//!
//! Particle-level quantities are computed once per configuration in
//! [`ParticleTerms`]; grids are cell-indicator sums scaled by ε^d / cell volume.

use crate::error::{Error, Result};
use crate::md::{for_each_pair, ParticleState, PotentialSpec, TorusDomain, Vector};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Tensors use a fixed stride of 3 per index regardless of d.
pub type Tensor2 = [f64; 9];
pub type Tensor3 = [f64; 27];
pub type Tensor4 = [f64; 81];

#[inline]
pub fn i2(a: usize, b: usize) -> usize {
    3 * a + b
}
#[inline]
pub fn i3(a: usize, b: usize, c: usize) -> usize {
    9 * a + 3 * b + c
}
#[inline]
pub fn i4(a: usize, b: usize, c: usize, e: usize) -> usize {
    27 * a + 9 * b + 3 * c + e
}

/// Per-particle summands of every field and current.
#[derive(Clone, Debug)]
pub struct ParticleTerms {
    pub dim: usize,
    /// z_i^{d+1} = ½|v_i|² + ½Σ_j V(r_ij).
    pub energy: Vec<f64>,
    /// ½Σ_j V(r_ij), the potential part of z_i^{d+1}.
    pub pair_energy: Vec<f64>,
    /// v^β v^k + ½Σ_j Ψ^{βk}(ξ_i - ξ_j).
    pub stress: Vec<Tensor2>,
    /// ½Σ_j Ψ^{βk}(ξ_i - ξ_j) alone.
    pub pair_stress: Vec<Tensor2>,
    /// v^k z^{d+1} + ½Σ_j Σ_γ Ψ^{γk}(ξ_i - ξ_j) ½(v_i^γ + v_j^γ).
    pub heat: Vec<Vector>,
    /// The pair sum in `heat` alone.
    pub pair_heat: Vec<Vector>,
    /// ½Σ_j Φ₀(ξ_i - ξ_j).
    pub phi0: Vec<Tensor3>,
    /// ½Σ_j Φ(ξ_i - ξ_j).
    pub phi: Vec<Tensor4>,
}

impl ParticleTerms {
    pub fn compute(state: &ParticleState, pot: &PotentialSpec, domain: &TorusDomain) -> Result<Self> {
        Self::compute_with(state, pot, domain, true)
    }

    /// With `tensors == false` the Φ₀ and Φ accumulators are left empty.
    pub fn compute_with(state: &ParticleState, pot: &PotentialSpec, domain: &TorusDomain, tensors: bool) -> Result<Self> {
        let n = state.len();
        let d = domain.dim();
        let mut pair_energy = vec![0.0; n];
        let mut pair_stress = vec![[0.0; 9]; n];
        let mut pair_heat = vec![[0.0; 3]; n];
        let m = if tensors { n } else { 0 };
        let mut phi0 = vec![[0.0; 27]; m];
        let mut phi = vec![[0.0; 81]; m];
        let v = &state.velocities;
        if !pot.is_free() {
            for_each_pair(&state.positions, domain, pot.range, |i, j, x, r2| {
                if r2 == 0.0 {
                    return Err(Error::Overlap { i, j });
                }
                // -∂_βV(ξ) = s ξ^β, so Ψ^{βγ} = s ξ^β ξ^γ and Φ₀, Φ are the
                // fully symmetric third and fourth powers times s.
                let (e, s) = pot.pair(r2);
                pair_energy[i] += 0.5 * e;
                pair_energy[j] += 0.5 * e;
                for a in 0..d {
                    for b in 0..d {
                        let psi = s * x[a] * x[b];
                        pair_stress[i][i2(a, b)] += 0.5 * psi;
                        pair_stress[j][i2(a, b)] += 0.5 * psi;
                        let h = 0.25 * psi * (v[i][a] + v[j][a]);
                        pair_heat[i][b] += h;
                        pair_heat[j][b] += h;
                        if !tensors {
                            continue;
                        }
                        for c in 0..d {
                            let p3 = 0.5 * psi * x[c];
                            phi0[i][i3(a, b, c)] += p3;
                            phi0[j][i3(a, b, c)] -= p3;
                            for g in 0..d {
                                let p4 = p3 * x[g];
                                phi[i][i4(a, b, c, g)] += p4;
                                phi[j][i4(a, b, c, g)] += p4;
                            }
                        }
                    }
                }
                Ok(())
            })?;
        }
        let mut energy = vec![0.0; n];
        let mut stress = vec![[0.0; 9]; n];
        let mut heat = vec![[0.0; 3]; n];
        for i in 0..n {
            let ke = 0.5 * (0..d).map(|a| v[i][a] * v[i][a]).sum::<f64>();
            energy[i] = ke + pair_energy[i];
            for a in 0..d {
                for b in 0..d {
                    stress[i][i2(a, b)] = v[i][a] * v[i][b] + pair_stress[i][i2(a, b)];
                }
                heat[i][a] = v[i][a] * energy[i] + pair_heat[i][a];
            }
        }
        Ok(Self { dim: d, energy, pair_energy, stress, pair_stress, heat, pair_heat, phi0, phi })
    }
}

/// Grid of cells on the macroscopic torus of side ε·L.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub shape: [usize; 3],
}

impl GridSpec {
    pub fn new(dim: usize, cells_per_axis: usize) -> Self {
        let mut shape = [1; 3];
        for s in shape.iter_mut().take(dim) {
            *s = cells_per_axis.max(1);
        }
        Self { dim, shape }
    }

    pub fn with_shape(dim: usize, shape: [usize; 3]) -> Self {
        let mut shape = shape;
        for s in shape.iter_mut().skip(dim) {
            *s = 1;
        }
        Self { dim, shape }
    }

    pub fn cells(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn cell_of(&self, xi: &Vector, domain: &TorusDomain) -> usize {
        let l = domain.side();
        let mut c = [0usize; 3];
        for a in 0..self.dim {
            c[a] = (((xi[a] / l) * self.shape[a] as f64).floor() as usize).min(self.shape[a] - 1);
        }
        (c[0] * self.shape[1] + c[1]) * self.shape[2] + c[2]
    }

    pub fn indices(&self, cell: usize) -> [usize; 3] {
        let k = cell % self.shape[2];
        let j = (cell / self.shape[2]) % self.shape[1];
        let i = cell / (self.shape[1] * self.shape[2]);
        [i, j, k]
    }

    /// Macroscopic cell volume (ε L)^d / #cells.
    pub fn cell_volume(&self, domain: &TorusDomain, epsilon: f64) -> f64 {
        (epsilon * domain.side()).powi(self.dim as i32) / self.cells() as f64
    }
}

/// Sums per-particle values into cells and applies the ε^d / vol scale.
fn bin<const K: usize>(
    spec: &GridSpec,
    cells: &[usize],
    values: impl Fn(usize) -> [f64; K],
    scale: f64,
) -> Vec<[f64; K]> {
    let mut out = vec![[0.0; K]; spec.cells()];
    for (i, &c) in cells.iter().enumerate() {
        let v = values(i);
        for k in 0..K {
            out[c][k] += v[k];
        }
    }
    for cell in out.iter_mut() {
        for x in cell.iter_mut() {
            *x *= scale;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub spec: GridSpec,
    pub epsilon: f64,
    pub cell_volume: f64,
    pub density: Vec<f64>,
    pub momentum: Vec<Vector>,
    pub energy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentGrid {
    pub spec: GridSpec,
    pub epsilon: f64,
    pub cell_volume: f64,
    /// w^{0k}
    pub mass: Vec<Vector>,
    /// w_*^{βk}
    pub stress: Vec<Tensor2>,
    /// w^{d+1,k}
    pub heat: Vec<Vector>,
    /// Φ̄₀^{βγν}
    #[serde(skip)]
    pub phi0: Vec<Tensor3>,
    /// Φ̄^{αβγν}
    #[serde(skip)]
    pub phi: Vec<Tensor4>,
}

fn particle_cells(state: &ParticleState, spec: &GridSpec, domain: &TorusDomain) -> Vec<usize> {
    state.positions.iter().map(|x| spec.cell_of(x, domain)).collect()
}

fn check_grid(spec: &GridSpec, domain: &TorusDomain, epsilon: f64) -> Result<()> {
    if spec.dim != domain.dim() {
        return Err(Error::ShapeMismatch("grid and domain dimensions differ".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("ε must be positive, got {epsilon}")));
    }
    Ok(())
}

pub fn bin_fields(
    state: &ParticleState,
    pot: &PotentialSpec,
    domain: &TorusDomain,
    spec: &GridSpec,
    epsilon: f64,
) -> Result<FieldGrid> {
    check_grid(spec, domain, epsilon)?;
    let terms = ParticleTerms::compute(state, pot, domain)?;
    Ok(bin_fields_from_terms(state, &terms, domain, spec, epsilon))
}

pub fn bin_fields_from_terms(
    state: &ParticleState,
    terms: &ParticleTerms,
    domain: &TorusDomain,
    spec: &GridSpec,
    epsilon: f64,
) -> FieldGrid {
    let cells = particle_cells(state, spec, domain);
    let vol = spec.cell_volume(domain, epsilon);
    let scale = epsilon.powi(spec.dim as i32) / vol;
    let density = bin(spec, &cells, |_| [1.0], scale).into_iter().map(|v| v[0]).collect();
    let momentum = bin(spec, &cells, |i| state.velocities[i], scale);
    let energy = bin(spec, &cells, |i| [terms.energy[i]], scale).into_iter().map(|v| v[0]).collect();
    FieldGrid { spec: *spec, epsilon, cell_volume: vol, density, momentum, energy }
}

pub fn compute_currents(
    state: &ParticleState,
    pot: &PotentialSpec,
    domain: &TorusDomain,
    spec: &GridSpec,
    epsilon: f64,
) -> Result<CurrentGrid> {
    check_grid(spec, domain, epsilon)?;
    let terms = ParticleTerms::compute(state, pot, domain)?;
    Ok(compute_currents_from_terms(state, &terms, domain, spec, epsilon))
}

pub fn compute_currents_from_terms(
    state: &ParticleState,
    terms: &ParticleTerms,
    domain: &TorusDomain,
    spec: &GridSpec,
    epsilon: f64,
) -> CurrentGrid {
    let cells = particle_cells(state, spec, domain);
    let vol = spec.cell_volume(domain, epsilon);
    let scale = epsilon.powi(spec.dim as i32) / vol;
    CurrentGrid {
        spec: *spec,
        epsilon,
        cell_volume: vol,
        mass: bin(spec, &cells, |i| state.velocities[i], scale),
        stress: bin(spec, &cells, |i| terms.stress[i], scale),
        heat: bin(spec, &cells, |i| terms.heat[i], scale),
        phi0: bin(spec, &cells, |i| terms.phi0[i], scale),
        phi: bin(spec, &cells, |i| terms.phi[i], scale),
    }
}

impl FieldGrid {
    /// Σ_cells z·vol for (z⁰, z¹..z^d, z^{d+1}).
    pub fn totals(&self) -> (f64, Vector, f64) {
        let v = self.cell_volume;
        let n = self.density.iter().sum::<f64>() * v;
        let mut p = [0.0; 3];
        for m in &self.momentum {
            for a in 0..3 {
                p[a] += m[a] * v;
            }
        }
        let e = self.energy.iter().sum::<f64>() * v;
        (n, p, e)
    }

    fn components(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = vec![("z0".to_string(), self.density.clone())];
        for a in 0..self.spec.dim {
            out.push((format!("z{}", a + 1), self.momentum.iter().map(|m| m[a]).collect()));
        }
        out.push((format!("z{}", self.spec.dim + 1), self.energy.clone()));
        out
    }

    pub fn write_ndjson<W: Write>(&self, w: W) -> Result<()> {
        write_ndjson(&self.spec, &self.components(), w)
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        write_binary(&self.spec, &self.components(), w)
    }
}

/// Periodic centred difference along `axis`, macroscopic spacing `h`.
fn centred_difference(spec: &GridSpec, f: &[f64], axis: usize, h: f64) -> Vec<f64> {
    let n = spec.shape[axis];
    if n < 3 {
        return vec![0.0; f.len()];
    }
    let mut out = vec![0.0; f.len()];
    for (cell, o) in out.iter_mut().enumerate() {
        let idx = spec.indices(cell);
        let mut up = idx;
        let mut down = idx;
        up[axis] = (idx[axis] + 1) % n;
        down[axis] = (idx[axis] + n - 1) % n;
        let flat = |c: [usize; 3]| (c[0] * spec.shape[1] + c[1]) * spec.shape[2] + c[2];
        *o = (f[flat(up)] - f[flat(down)]) / (2.0 * h);
    }
    out
}

impl CurrentGrid {
    /// Momentum current to second order in ε:
    /// w_* + (ε/4)Σ_γ ∂_γΦ̄₀^{kβγ} + (ε²/12)Σ_{γν} ∂²_{γν}Φ̄^{kβγν},
    /// with derivatives by periodic centred differences.
    pub fn momentum_current(&self, domain: &TorusDomain) -> Vec<Tensor2> {
        let d = self.spec.dim;
        let side = self.epsilon * domain.side();
        let h: Vec<f64> = (0..3).map(|a| side / self.spec.shape[a] as f64).collect();
        let mut out = self.stress.clone();
        for k in 0..d {
            for b in 0..d {
                for g in 0..d {
                    let f: Vec<f64> = self.phi0.iter().map(|t| t[i3(k, b, g)]).collect();
                    let df = centred_difference(&self.spec, &f, g, h[g]);
                    for (o, x) in out.iter_mut().zip(df) {
                        o[i2(b, k)] += 0.25 * self.epsilon * x;
                    }
                    for nu in 0..d {
                        let f: Vec<f64> = self.phi.iter().map(|t| t[i4(k, b, g, nu)]).collect();
                        let df = centred_difference(&self.spec, &f, g, h[g]);
                        let ddf = centred_difference(&self.spec, &df, nu, h[nu]);
                        for (o, x) in out.iter_mut().zip(ddf) {
                            o[i2(b, k)] += self.epsilon * self.epsilon / 12.0 * x;
                        }
                    }
                }
            }
        }
        out
    }

    fn components(&self) -> Vec<(String, Vec<f64>)> {
        let d = self.spec.dim;
        let mut out = Vec::new();
        for k in 0..d {
            out.push((format!("w0_{}", k + 1), self.mass.iter().map(|m| m[k]).collect()));
        }
        for b in 0..d {
            for k in 0..d {
                out.push((format!("w{}_{}", b + 1, k + 1), self.stress.iter().map(|t| t[i2(b, k)]).collect()));
            }
        }
        for k in 0..d {
            out.push((format!("w{}_{}", d + 1, k + 1), self.heat.iter().map(|m| m[k]).collect()));
        }
        for b in 0..d {
            for g in 0..d {
                for nu in 0..d {
                    out.push((
                        format!("phi0_{}{}{}", b + 1, g + 1, nu + 1),
                        self.phi0.iter().map(|t| t[i3(b, g, nu)]).collect(),
                    ));
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                for g in 0..d {
                    for nu in 0..d {
                        out.push((
                            format!("phi_{}{}{}{}", a + 1, b + 1, g + 1, nu + 1),
                            self.phi.iter().map(|t| t[i4(a, b, g, nu)]).collect(),
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn write_ndjson<W: Write>(&self, w: W) -> Result<()> {
        write_ndjson(&self.spec, &self.components(), w)
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        write_binary(&self.spec, &self.components(), w)
    }
}

/// One JSON object per cell: `{"index":[i,j,k],"values":{name: value, ...}}`.
fn write_ndjson<W: Write>(spec: &GridSpec, comps: &[(String, Vec<f64>)], mut w: W) -> Result<()> {
    for cell in 0..spec.cells() {
        let idx = spec.indices(cell);
        let mut values = serde_json::Map::new();
        for (name, data) in comps {
            values.insert(name.clone(), serde_json::json!(data[cell]));
        }
        let rec = serde_json::json!({ "index": &idx[..spec.dim], "values": values });
        writeln!(w, "{rec}")?;
    }
    Ok(())
}

/// Magic `GHGR`, then u32 d, 3×u32 shape, u32 component count, then per
/// component a u32-prefixed UTF-8 name and its cell values as f64, all
/// little-endian.
fn write_binary<W: Write>(spec: &GridSpec, comps: &[(String, Vec<f64>)], mut w: W) -> Result<()> {
    w.write_all(b"GHGR")?;
    w.write_all(&(spec.dim as u32).to_le_bytes())?;
    for s in spec.shape {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    w.write_all(&(comps.len() as u32).to_le_bytes())?;
    for (name, data) in comps {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        for x in data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Per-axis estimates P_β from the ββ channel.
    pub channels: Vec<(f64, f64)>,
    pub samples: usize,
}

/// Instantaneous pressure of one configuration along each axis:
/// P_β = (Σ_i (v_i^β)² + Σ_{i<j} Ψ^{ββ}(ξ_ij)) / L^d.
pub fn pressure_channels(state: &ParticleState, pot: &PotentialSpec, domain: &TorusDomain) -> Result<Vector> {
    let d = domain.dim();
    let mut p = [0.0; 3];
    for v in &state.velocities {
        for a in 0..d {
            p[a] += v[a] * v[a];
        }
    }
    if !pot.is_free() {
        for_each_pair(&state.positions, domain, pot.range, |i, j, x, r2| {
            if r2 == 0.0 {
                return Err(Error::Overlap { i, j });
            }
            let s = pot.force_over_r(r2);
            for a in 0..d {
                p[a] += s * x[a] * x[a];
            }
            Ok(())
        })?;
    }
    let vol = domain.volume();
    for x in p.iter_mut() {
        *x /= vol;
    }
    Ok(p)
}

fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Virial pressure P = ρT + (1/(2dL^d))⟨Σ_{i≠j} Ψ^{ββ}⟩ averaged over an
/// ensemble of configurations. The kinetic part uses the sampled velocities,
/// so its mean is ρT for Gibbs-distributed velocities.
pub fn virial_pressure(
    ensemble: &[ParticleState],
    pot: &PotentialSpec,
    domain: &TorusDomain,
) -> Result<PressureEstimate> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let d = domain.dim();
    let per: Vec<Vector> = ensemble
        .iter()
        .map(|s| pressure_channels(s, pot, domain))
        .collect::<Result<_>>()?;
    let totals: Vec<f64> = per.iter().map(|p| p[..d].iter().sum::<f64>() / d as f64).collect();
    let (mean, stderr) = mean_stderr(&totals);
    let channels = (0..d)
        .map(|a| mean_stderr(&per.iter().map(|p| p[a]).collect::<Vec<_>>()))
        .collect();
    Ok(PressureEstimate { mean, stderr, channels, samples: ensemble.len() })
}
