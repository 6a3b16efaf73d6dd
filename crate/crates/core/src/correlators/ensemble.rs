//! Ensembles of constant-energy trajectories started from independent
//! grand-canonical Gibbs samples, recorded as per-frame grid totals.
//!
//! Because N, P and E differ between trajectories, the conserved quantities
//! fluctuate across the ensemble and the slow-mode Gram matrix is regular.

use super::observables::TotalsFrame;
use crate::error::{Error, Result};
use crate::gibbs::{sample_local_gibbs, seeded_rng, GibbsParameters, SamplerConfig, SamplerDiagnostics};
use crate::md::{ForceMode, ParticleState, PotentialSpec, TorusDomain, VelocityVerlet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumConfig {
    pub dim: usize,
    pub side: f64,
    /// Position log-activity used by the sampler (ideal gas: ln ρ).
    pub log_activity: f64,
    pub temperature: f64,
    pub pot: PotentialSpec,
    pub sampler: SamplerConfig,
    pub trajectories: usize,
    pub steps: usize,
    pub dt: f64,
    pub sample_every: usize,
    pub seed: u64,
    pub parallel: bool,
    /// Also run every sample with its centre-of-mass velocity reversed.
    /// The map is measure preserving, so each pair is a valid draw; pairs
    /// are treated as one bootstrap block.
    #[serde(default)]
    pub antithetic: bool,
}

impl EquilibriumConfig {
    pub fn domain(&self) -> Result<TorusDomain> {
        TorusDomain::new(self.dim, self.side, self.pot.range.max(1e-9))
    }

    pub fn frame_dt(&self) -> f64 {
        self.dt * self.sample_every as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    /// Bootstrap block; equal for the two members of an antithetic pair.
    pub group: u64,
    pub frames: Vec<TotalsFrame>,
    /// |E(end) − E(0)| / |E(0)|.
    pub energy_drift: f64,
    pub sampler: SamplerDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumEnsemble {
    pub config: EquilibriumConfig,
    pub trajectories: Vec<Trajectory>,
}

impl EquilibriumEnsemble {
    pub fn volume(&self) -> f64 {
        self.config.side.powi(self.config.dim as i32)
    }

    pub fn frames(&self) -> impl Iterator<Item = &TotalsFrame> {
        self.trajectories.iter().flat_map(|t| t.frames.iter())
    }

    pub fn frame_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.frames.len()).sum()
    }
}

fn integrate(cfg: &EquilibriumConfig, domain: &TorusDomain, mut state: ParticleState, id: u64, group: u64, sampler: SamplerDiagnostics) -> Result<Trajectory> {
    let mut frames = Vec::with_capacity(cfg.steps / cfg.sample_every + 1);
    frames.push(TotalsFrame::compute(&state, &cfg.pot, domain)?);
    let mut md = VelocityVerlet::new(&state, cfg.pot, *domain, cfg.dt, ForceMode::Serial)?;
    for step in 1..=cfg.steps {
        md.step(&mut state)?;
        if step % cfg.sample_every == 0 {
            frames.push(TotalsFrame::compute(&state, &cfg.pot, domain)?);
        }
    }
    let e0 = frames[0].energy;
    let e1 = frames.last().unwrap().energy;
    Ok(Trajectory { id, group, frames, energy_drift: (e1 - e0).abs() / e0.abs().max(f64::MIN_POSITIVE), sampler })
}

fn run_group(cfg: &EquilibriumConfig, domain: &TorusDomain, params: &GibbsParameters, group: u64) -> Result<Vec<Trajectory>> {
    let mut rng = seeded_rng(cfg.seed ^ (group.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    let (state, sampler) = sample_local_gibbs(params, domain, &cfg.pot, &cfg.sampler, &mut rng)?;
    if !cfg.antithetic {
        return Ok(vec![integrate(cfg, domain, state, group, group, sampler)?]);
    }
    let mut mirror = state.clone();
    let n = state.len().max(1) as f64;
    let mut vcm = [0.0; 3];
    for v in &state.velocities {
        for a in 0..3 {
            vcm[a] += v[a] / n;
        }
    }
    for v in mirror.velocities.iter_mut() {
        for a in 0..3 {
            v[a] -= 2.0 * vcm[a];
        }
    }
    Ok(vec![
        integrate(cfg, domain, state, 2 * group, group, sampler.clone())?,
        integrate(cfg, domain, mirror, 2 * group + 1, group, sampler)?,
    ])
}

/// Runs `cfg.trajectories` independent samples (twice as many trajectories
/// when antithetic), one RNG stream per sample.
/// The result is identical in serial and parallel mode.
pub fn run_equilibrium_ensemble(cfg: &EquilibriumConfig) -> Result<EquilibriumEnsemble> {
    if cfg.trajectories == 0 || cfg.steps == 0 || cfg.sample_every == 0 {
        return Err(Error::InvalidParameter("trajectories, steps and sample_every must be positive".into()));
    }
    let domain = cfg.domain()?;
    let params = GibbsParameters::global(cfg.dim, cfg.log_activity, cfg.temperature, 1.0)?;
    let groups: Vec<u64> = (0..cfg.trajectories as u64).collect();
    let runs: Vec<Vec<Trajectory>> = if cfg.parallel {
        groups.par_iter().map(|&g| run_group(cfg, &domain, &params, g)).collect::<Result<_>>()?
    } else {
        groups.iter().map(|&g| run_group(cfg, &domain, &params, g)).collect::<Result<_>>()?
    };
    let trajectories = runs.into_iter().flatten().collect();
    Ok(EquilibriumEnsemble { config: cfg.clone(), trajectories })
}
