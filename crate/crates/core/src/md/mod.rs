//! Hamiltonian dynamics of unit-mass particles on a periodic box.
//!
//! Everything here is in microscopic units: positions ξ in [0, L)^d and
//! microscopic time. The ε-rescaling only appears in the field layer.

mod cells;
pub mod checkpoint;
mod potential;

pub use cells::{for_each_pair, CellList};
pub use potential::{PotentialForm, PotentialSpec};

use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Positions, velocities and forces are stored as 3-vectors; for d = 2 the
/// third component stays zero.
pub type Vector = [f64; 3];

pub(crate) fn dot(a: &Vector, b: &Vector) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusDomain {
    dim: usize,
    side: f64,
    cutoff: f64,
}

impl TorusDomain {
    pub fn new(dim: usize, side: f64, cutoff: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidDomain(format!("dimension {dim} not in {{2,3}}")));
        }
        if !(cutoff > 0.0) || !(side > 2.0 * cutoff) {
            return Err(Error::InvalidDomain(format!(
                "need L > 2 r_c, got L = {side}, r_c = {cutoff}"
            )));
        }
        Ok(Self { dim, side, cutoff })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// Maps a position back into [0, L)^d.
    pub fn wrap(&self, p: Vector) -> Vector {
        let mut out = [0.0; 3];
        for a in 0..self.dim {
            let mut x = p[a] - self.side * (p[a] / self.side).floor();
            if x >= self.side {
                x -= self.side;
            }
            out[a] = x;
        }
        out
    }
}

/// Shortest periodic displacement from `q` to `p`, components in [-L/2, L/2).
pub fn minimum_image(p: &Vector, q: &Vector, domain: &TorusDomain) -> Vector {
    let l = domain.side;
    let mut d = [0.0; 3];
    for a in 0..domain.dim {
        let x = p[a] - q[a];
        d[a] = x - l * (x / l + 0.5).floor();
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub positions: Vec<Vector>,
    pub velocities: Vec<Vector>,
    pub time: f64,
}

impl ParticleState {
    pub fn new(positions: Vec<Vector>, velocities: Vec<Vector>) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} positions but {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        Ok(Self { positions, velocities, time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.velocities.iter().map(|v| dot(v, v)).sum::<f64>()
    }

    fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(self.velocities.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Serial accumulation is bit-reproducible and applies Newton's third law per
/// pair. Parallel mode sums each particle's force independently over its
/// neighbours, which is also independent of the worker count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForceMode {
    #[default]
    Serial,
    Parallel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forces {
    pub forces: Vec<Vector>,
    pub potential_energy: f64,
}

fn check_range(pot: &PotentialSpec, domain: &TorusDomain) -> Result<()> {
    if pot.range > domain.cutoff {
        return Err(Error::InvalidParameter(format!(
            "potential range {} exceeds cell-list cutoff {}",
            pot.range, domain.cutoff
        )));
    }
    Ok(())
}

/// Pair forces -Σ_j V′(r_ij)(ξ_i - ξ_j)/r_ij and the energy Σ_{i<j} V(r_ij).
pub fn compute_forces(
    state: &ParticleState,
    pot: &PotentialSpec,
    domain: &TorusDomain,
) -> Result<Forces> {
    compute_forces_with(state, pot, domain, ForceMode::Serial)
}

pub fn compute_forces_with(
    state: &ParticleState,
    pot: &PotentialSpec,
    domain: &TorusDomain,
    mode: ForceMode,
) -> Result<Forces> {
    check_range(pot, domain)?;
    let n = state.len();
    match mode {
        ForceMode::Serial => {
            let mut forces = vec![[0.0; 3]; n];
            let mut energy = 0.0;
            for_each_pair(&state.positions, domain, pot.range, |i, j, dx, r2| {
                if r2 == 0.0 {
                    return Err(Error::Overlap { i, j });
                }
                let (v, s) = pot.pair(r2);
                energy += v;
                for a in 0..3 {
                    let f = s * dx[a];
                    forces[i][a] += f;
                    forces[j][a] -= f;
                }
                Ok(())
            })?;
            Ok(Forces { forces, potential_energy: energy })
        }
        ForceMode::Parallel => {
            let cells = CellList::build(&state.positions, domain, pot.range);
            let rc2 = pot.range * pot.range;
            let per: Vec<Result<(Vector, f64)>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut f = [0.0; 3];
                    let mut e = 0.0;
                    for j in cells.neighbours_of(i) {
                        if j == i {
                            continue;
                        }
                        let dx = minimum_image(&state.positions[i], &state.positions[j], domain);
                        let r2 = dot(&dx, &dx);
                        if r2 >= rc2 {
                            continue;
                        }
                        if r2 == 0.0 {
                            return Err(Error::Overlap { i: i.min(j), j: i.max(j) });
                        }
                        let (v, s) = pot.pair(r2);
                        e += 0.5 * v;
                        for a in 0..3 {
                            f[a] += s * dx[a];
                        }
                    }
                    Ok((f, e))
                })
                .collect();
            let mut forces = Vec::with_capacity(n);
            let mut energy = 0.0;
            for r in per {
                let (f, e) = r?;
                forces.push(f);
                energy += e;
            }
            Ok(Forces { forces, potential_energy: energy })
        }
    }
}

/// Velocity Verlet with cached forces. Stepping a state repeatedly through the
/// integrator costs one force evaluation per step.
#[derive(Clone, Debug)]
pub struct VelocityVerlet {
    pot: PotentialSpec,
    domain: TorusDomain,
    dt: f64,
    mode: ForceMode,
    forces: Forces,
    steps: u64,
}

impl VelocityVerlet {
    pub fn new(
        state: &ParticleState,
        pot: PotentialSpec,
        domain: TorusDomain,
        dt: f64,
        mode: ForceMode,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let forces = compute_forces_with(state, &pot, &domain, mode)?;
        Ok(Self { pot, domain, dt, mode, forces, steps: 0 })
    }

    pub fn potential_energy(&self) -> f64 {
        self.forces.potential_energy
    }

    pub fn forces(&self) -> &[Vector] {
        &self.forces.forces
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&mut self, state: &mut ParticleState) -> Result<()> {
        let h = 0.5 * self.dt;
        let dim = self.domain.dim;
        for ((x, v), f) in state
            .positions
            .iter_mut()
            .zip(state.velocities.iter_mut())
            .zip(self.forces.forces.iter())
        {
            for a in 0..dim {
                v[a] += h * f[a];
                x[a] += self.dt * v[a];
            }
            *x = self.domain.wrap(*x);
        }
        self.steps += 1;
        if !state.is_finite() {
            return Err(Error::NonFinite { step: self.steps });
        }
        self.forces = compute_forces_with(state, &self.pot, &self.domain, self.mode)?;
        for (v, f) in state.velocities.iter_mut().zip(self.forces.forces.iter()) {
            for a in 0..dim {
                v[a] += h * f[a];
            }
        }
        state.time += self.dt;
        if !state.is_finite() {
            return Err(Error::NonFinite { step: self.steps });
        }
        Ok(())
    }

    pub fn run(&mut self, state: &mut ParticleState, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(state)?;
        }
        Ok(())
    }
}

/// One velocity-Verlet step from scratch.
pub fn verlet_step(
    state: &ParticleState,
    dt: f64,
    pot: &PotentialSpec,
    domain: &TorusDomain,
) -> Result<ParticleState> {
    let mut next = state.clone();
    VelocityVerlet::new(state, *pot, *domain, dt, ForceMode::Serial)?.step(&mut next)?;
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Invariants {
    pub count: usize,
    pub momentum: Vector,
    pub energy: f64,
}

pub fn total_invariants(
    state: &ParticleState,
    pot: &PotentialSpec,
    domain: &TorusDomain,
) -> Result<Invariants> {
    let mut momentum = [0.0; 3];
    for v in &state.velocities {
        for a in 0..3 {
            momentum[a] += v[a];
        }
    }
    let potential = compute_forces(state, pot, domain)?.potential_energy;
    Ok(Invariants {
        count: state.len(),
        momentum,
        energy: state.kinetic_energy() + potential,
    })
}
