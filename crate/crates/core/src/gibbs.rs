//! Sampling of global and local Gibbs states.
//!
//! The position marginal has density exp[Σ_i λ⁰(x_i) + Σ_{i<k} V_ik (λ^{d+1}(x_i) + λ^{d+1}(x_k))/2]
//! with respect to Lebesgue measure on unlabelled configurations, so that with
//! V ≡ 0 the particle number is Poisson with mean ∫exp(λ⁰). Here λ⁰ already
//! contains the velocity normalisation; see [`GibbsParameters::kinetic_log_activity`]
//! for the convention in which the full phase-space weight is exp(λ⁰ + λ^{d+1} z^{d+1}).

use crate::error::{Error, Result};
use crate::grid::PeriodicField;
use crate::md::{dot, minimum_image, ParticleState, PotentialSpec, TorusDomain, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GibbsMode {
    Global,
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsParameters {
    pub mode: GibbsMode,
    /// λ⁰(x), the log of the position activity.
    pub log_activity: PeriodicField,
    /// λ^{d+1}(x) = -1/T(x).
    pub inverse_temperature: PeriodicField,
    /// u(x), one field per component; the velocity mean is ε·u.
    pub velocity: Option<Vec<PeriodicField>>,
    pub epsilon: f64,
}

impl GibbsParameters {
    pub fn global(dim: usize, log_activity: f64, temperature: f64, epsilon: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::InvalidParameter(format!("temperature {temperature}")));
        }
        Ok(Self {
            mode: GibbsMode::Global,
            log_activity: PeriodicField::constant(dim, log_activity),
            inverse_temperature: PeriodicField::constant(dim, -1.0 / temperature),
            velocity: None,
            epsilon,
        })
    }

    /// Ideal-gas parametrisation: λ⁰ = ln ρ.
    pub fn ideal_gas(dim: usize, density: f64, temperature: f64) -> Result<Self> {
        Self::global(dim, density.ln(), temperature, 0.0)
    }

    pub fn local(
        log_activity: PeriodicField,
        inverse_temperature: PeriodicField,
        velocity: Option<Vec<PeriodicField>>,
        epsilon: f64,
    ) -> Result<Self> {
        if inverse_temperature.max() >= 0.0 {
            return Err(Error::InvalidParameter("λ^{d+1} must be negative everywhere".into()));
        }
        if let Some(u) = &velocity {
            if u.len() != log_activity.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "{} velocity components for d = {}",
                    u.len(),
                    log_activity.dim()
                )));
            }
        }
        Ok(Self { mode: GibbsMode::Local, log_activity, inverse_temperature, velocity, epsilon })
    }

    fn frac(xi: &Vector, domain: &TorusDomain) -> Vector {
        let l = domain.side();
        [xi[0] / l, xi[1] / l, xi[2] / l]
    }

    pub fn log_activity_at(&self, xi: &Vector, domain: &TorusDomain) -> f64 {
        self.log_activity.eval(&Self::frac(xi, domain))
    }

    pub fn inverse_temperature_at(&self, xi: &Vector, domain: &TorusDomain) -> f64 {
        self.inverse_temperature.eval(&Self::frac(xi, domain))
    }

    pub fn temperature_at(&self, xi: &Vector, domain: &TorusDomain) -> f64 {
        -1.0 / self.inverse_temperature_at(xi, domain)
    }

    pub fn mean_velocity_at(&self, xi: &Vector, domain: &TorusDomain) -> Vector {
        let mut m = [0.0; 3];
        if let Some(u) = &self.velocity {
            let s = Self::frac(xi, domain);
            for (a, f) in u.iter().enumerate() {
                m[a] = self.epsilon * f.eval(&s);
            }
        }
        m
    }

    /// λ⁰ in the convention where the phase-space weight is
    /// exp(λ⁰ + λ^{d+1}(½v² + ½ΣV)) against d^d v: λ⁰ - (d/2) ln(2πT).
    pub fn kinetic_log_activity(log_activity: f64, temperature: f64, dim: usize) -> f64 {
        log_activity - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI * temperature).ln()
    }

    /// Expected particle number of the ideal gas with these activities,
    /// used to size sweeps.
    fn ideal_count(&self, domain: &TorusDomain) -> f64 {
        let mean_activity = self.log_activity.values().iter().map(|l| l.exp()).sum::<f64>()
            / self.log_activity.values().len() as f64;
        mean_activity * domain.volume()
    }
}

/// Draws v_i ~ N(ε u(x_i), T(x_i) I).
pub fn sample_velocities<R: Rng + ?Sized>(
    positions: &[Vector],
    params: &GibbsParameters,
    domain: &TorusDomain,
    rng: &mut R,
) -> Result<Vec<Vector>> {
    let dim = domain.dim();
    let mut out = Vec::with_capacity(positions.len());
    for (index, x) in positions.iter().enumerate() {
        let temperature = params.temperature_at(x, domain);
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::NonPositiveTemperature { index, temperature });
        }
        let sd = temperature.sqrt();
        let mean = params.mean_velocity_at(x, domain);
        let mut v = [0.0; 3];
        for a in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            v[a] = mean[a] + sd * z;
        }
        out.push(v);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Ensemble {
    GrandCanonical,
    Canonical { count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub ensemble: Ensemble,
    /// Production sweeps after burn-in.
    pub sweeps: usize,
    /// Burn-in compares the mean potential energy of consecutive windows of
    /// this many sweeps.
    pub burn_in_window: usize,
    pub max_burn_in: usize,
    /// Half-width of the uniform displacement proposal.
    pub max_displacement: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            ensemble: Ensemble::GrandCanonical,
            sweeps: 50,
            burn_in_window: 10,
            max_burn_in: 2000,
            max_displacement: 0.3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub acceptance_rate: f64,
    pub sweeps: usize,
    pub burn_in_sweeps: usize,
    /// Integrated autocorrelation time of the potential energy, in sweeps.
    pub energy_autocorrelation: f64,
    pub mean_count: f64,
    pub warnings: Vec<String>,
}

/// Relative proposal weights of displacement, insertion and deletion.
pub fn move_probabilities(ensemble: Ensemble) -> [f64; 3] {
    match ensemble {
        Ensemble::GrandCanonical => [0.5, 0.25, 0.25],
        Ensemble::Canonical { .. } => [1.0, 0.0, 0.0],
    }
}

/// Metropolis acceptance probabilities for the elementary moves, computed from
/// local energy differences.
#[derive(Clone, Copy, Debug)]
pub struct MoveKernel<'a> {
    pub domain: &'a TorusDomain,
    pub pot: &'a PotentialSpec,
    pub params: &'a GibbsParameters,
}

#[derive(Clone, Copy, Debug)]
struct Site {
    lam0: f64,
    lame: f64,
}

impl<'a> MoveKernel<'a> {
    fn site(&self, x: &Vector) -> Site {
        Site {
            lam0: self.params.log_activity_at(x, self.domain),
            lame: self.params.inverse_temperature_at(x, self.domain),
        }
    }

    /// Returns (Σ_k V(x, x_k), Σ_k V(x, x_k)(λe + λe_k)/2) over k ≠ skip.
    fn pair_terms(
        &self,
        positions: &[Vector],
        sites: &[Site],
        x: &Vector,
        lame: f64,
        skip: Option<usize>,
    ) -> (f64, f64) {
        if self.pot.is_free() {
            return (0.0, 0.0);
        }
        let rc2 = self.pot.range * self.pot.range;
        let mut u = 0.0;
        let mut w = 0.0;
        for (k, y) in positions.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            let dx = minimum_image(x, y, self.domain);
            let r2 = dot(&dx, &dx);
            if r2 >= rc2 {
                continue;
            }
            let v = self.pot.value_sq(r2);
            u += v;
            w += v * 0.5 * (lame + sites[k].lame);
        }
        (u, w)
    }

    fn sites(&self, positions: &[Vector]) -> Vec<Site> {
        positions.iter().map(|x| self.site(x)).collect()
    }

    /// Log density of an unlabelled configuration, up to a constant.
    pub fn log_weight(&self, positions: &[Vector]) -> f64 {
        let sites = self.sites(positions);
        let mut total: f64 = sites.iter().map(|s| s.lam0).sum();
        let rc2 = self.pot.range * self.pot.range;
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let dx = minimum_image(&positions[i], &positions[j], self.domain);
                let r2 = dot(&dx, &dx);
                if r2 < rc2 {
                    total += self.pot.value_sq(r2) * 0.5 * (sites[i].lame + sites[j].lame);
                }
            }
        }
        total
    }

    fn log_ratio_displace(&self, positions: &[Vector], sites: &[Site], i: usize, new: &Vector) -> (f64, f64) {
        let s_new = self.site(new);
        let (u_old, w_old) = self.pair_terms(positions, sites, &positions[i], sites[i].lame, Some(i));
        let (u_new, w_new) = self.pair_terms(positions, sites, new, s_new.lame, Some(i));
        (s_new.lam0 - sites[i].lam0 + w_new - w_old, u_new - u_old)
    }

    fn log_ratio_insert(&self, positions: &[Vector], sites: &[Site], new: &Vector) -> (f64, f64) {
        let s = self.site(new);
        let (u, w) = self.pair_terms(positions, sites, new, s.lame, None);
        let n = positions.len() as f64;
        ((self.domain.volume() / (n + 1.0)).ln() + s.lam0 + w, u)
    }

    fn log_ratio_delete(&self, positions: &[Vector], sites: &[Site], i: usize) -> (f64, f64) {
        let (u, w) = self.pair_terms(positions, sites, &positions[i], sites[i].lame, Some(i));
        let n = positions.len() as f64;
        ((n / self.domain.volume()).ln() - sites[i].lam0 - w, -u)
    }

    pub fn displacement_acceptance(&self, positions: &[Vector], i: usize, new: &Vector) -> f64 {
        let sites = self.sites(positions);
        self.log_ratio_displace(positions, &sites, i, new).0.exp().min(1.0)
    }

    pub fn insertion_acceptance(&self, positions: &[Vector], new: &Vector) -> f64 {
        let sites = self.sites(positions);
        self.log_ratio_insert(positions, &sites, new).0.exp().min(1.0)
    }

    pub fn deletion_acceptance(&self, positions: &[Vector], i: usize) -> f64 {
        let sites = self.sites(positions);
        self.log_ratio_delete(positions, &sites, i).0.exp().min(1.0)
    }
}

/// A single Metropolis chain. Strictly sequential.
#[derive(Clone, Debug)]
pub struct GibbsChain {
    domain: TorusDomain,
    pot: PotentialSpec,
    params: GibbsParameters,
    config: SamplerConfig,
    positions: Vec<Vector>,
    sites: Vec<Site>,
    potential_energy: f64,
    attempted: u64,
    accepted: u64,
    sweeps_done: usize,
    burn_in_sweeps: usize,
    energy_trace: Vec<f64>,
    count_sum: f64,
    count_samples: usize,
}

impl GibbsChain {
    pub fn new<R: Rng + ?Sized>(
        domain: TorusDomain,
        pot: PotentialSpec,
        params: GibbsParameters,
        config: SamplerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if params.log_activity.dim() != domain.dim() {
            return Err(Error::ShapeMismatch("field dimension differs from domain".into()));
        }
        if params.log_activity.values().iter().any(|l| !l.exp().is_finite()) {
            return Err(Error::InvalidParameter("activity exp(λ⁰) not finite".into()));
        }
        if !(config.max_displacement > 0.0) {
            return Err(Error::InvalidParameter("max_displacement must be positive".into()));
        }
        let positions: Vec<Vector> = match config.ensemble {
            Ensemble::GrandCanonical => Vec::new(),
            Ensemble::Canonical { count } => (0..count)
                .map(|_| {
                    let mut x = [0.0; 3];
                    for a in x.iter_mut().take(domain.dim()) {
                        *a = rng.gen::<f64>() * domain.side();
                    }
                    x
                })
                .collect(),
        };
        let kernel = MoveKernel { domain: &domain, pot: &pot, params: &params };
        let sites = kernel.sites(&positions);
        let potential_energy = if pot.is_free() {
            0.0
        } else {
            crate::md::compute_forces(&ParticleState::new(positions.clone(), vec![[0.0; 3]; positions.len()])?, &pot, &domain)?
                .potential_energy
        };
        Ok(Self {
            domain,
            pot,
            params,
            config,
            positions,
            sites,
            potential_energy,
            attempted: 0,
            accepted: 0,
            sweeps_done: 0,
            burn_in_sweeps: 0,
            energy_trace: Vec::new(),
            count_sum: 0.0,
            count_samples: 0,
        })
    }

    pub fn positions(&self) -> &[Vector] {
        &self.positions
    }

    pub fn potential_energy(&self) -> f64 {
        self.potential_energy
    }

    /// Fixed per chain: a sweep length that depends on the current state
    /// would bias the configurations seen at sweep ends.
    fn moves_per_sweep(&self) -> usize {
        match self.config.ensemble {
            Ensemble::Canonical { count } => count.max(1),
            Ensemble::GrandCanonical => (self.params.ideal_count(&self.domain).ceil() as usize).max(1),
        }
    }

    fn attempt<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let probs = move_probabilities(self.config.ensemble);
        let r: f64 = rng.gen();
        let dim = self.domain.dim();
        let kernel = MoveKernel { domain: &self.domain, pot: &self.pot, params: &self.params };
        self.attempted += 1;
        if r < probs[0] {
            let n = self.positions.len();
            if n == 0 {
                return;
            }
            let i = rng.gen_range(0..n);
            let mut new = self.positions[i];
            for a in new.iter_mut().take(dim) {
                *a += (2.0 * rng.gen::<f64>() - 1.0) * self.config.max_displacement;
            }
            let new = self.domain.wrap(new);
            let (log_ratio, du) = kernel.log_ratio_displace(&self.positions, &self.sites, i, &new);
            if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
                self.positions[i] = new;
                self.sites[i] = kernel.site(&new);
                self.potential_energy += du;
                self.accepted += 1;
            }
        } else if r < probs[0] + probs[1] {
            let mut new = [0.0; 3];
            for a in new.iter_mut().take(dim) {
                *a = rng.gen::<f64>() * self.domain.side();
            }
            let (log_ratio, du) = kernel.log_ratio_insert(&self.positions, &self.sites, &new);
            if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
                let site = kernel.site(&new);
                self.positions.push(new);
                self.sites.push(site);
                self.potential_energy += du;
                self.accepted += 1;
            }
        } else {
            let n = self.positions.len();
            if n == 0 {
                return;
            }
            let i = rng.gen_range(0..n);
            let (log_ratio, du) = kernel.log_ratio_delete(&self.positions, &self.sites, i);
            if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
                self.positions.swap_remove(i);
                self.sites.swap_remove(i);
                self.potential_energy += du;
                self.accepted += 1;
            }
        }
    }

    /// One sweep: N attempted moves (canonical) or the ideal-gas mean count
    /// (grand canonical).
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for _ in 0..self.moves_per_sweep() {
            self.attempt(rng);
        }
        self.sweeps_done += 1;
    }

    /// Discards sweeps until the mean potential energy (and, in the
    /// grand-canonical ensemble, the mean particle number) of two consecutive
    /// windows agree within 1%.
    pub fn burn_in<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let w = self.config.burn_in_window.max(1);
        let mut previous: Option<(f64, f64)> = None;
        let mut done = 0;
        while done < self.config.max_burn_in {
            let mut e = 0.0;
            let mut n = 0.0;
            for _ in 0..w {
                self.sweep(rng);
                e += self.potential_energy;
                n += self.positions.len() as f64;
            }
            done += w;
            let current = (e / w as f64, n / w as f64);
            if let Some(p) = previous {
                let close = |a: f64, b: f64| (a - b).abs() <= 0.01 * a.abs().max(b.abs()) + 1e-12;
                let counts_ok = matches!(self.config.ensemble, Ensemble::Canonical { .. })
                    || close(p.1, current.1);
                if close(p.0, current.0) && counts_ok {
                    break;
                }
            }
            previous = Some(current);
        }
        self.burn_in_sweeps += done;
        done
    }

    /// Production sweeps, recording the energy trace for diagnostics.
    pub fn produce<R: Rng + ?Sized>(&mut self, sweeps: usize, rng: &mut R) {
        for _ in 0..sweeps {
            self.sweep(rng);
            self.energy_trace.push(self.potential_energy);
            self.count_sum += self.positions.len() as f64;
            self.count_samples += 1;
        }
    }

    pub fn diagnostics(&self) -> SamplerDiagnostics {
        let mut warnings = Vec::new();
        let acceptance_rate =
            if self.attempted == 0 { 0.0 } else { self.accepted as f64 / self.attempted as f64 };
        if self.attempted > 0 && self.accepted == 0 {
            warnings.push("no move accepted: chain is not mixing".to_string());
        }
        if self.burn_in_sweeps >= self.config.max_burn_in {
            warnings.push("burn-in budget exhausted before the energy stabilised".to_string());
        }
        SamplerDiagnostics {
            acceptance_rate,
            sweeps: self.sweeps_done,
            burn_in_sweeps: self.burn_in_sweeps,
            energy_autocorrelation: integrated_autocorrelation(&self.energy_trace),
            mean_count: if self.count_samples == 0 {
                self.positions.len() as f64
            } else {
                self.count_sum / self.count_samples as f64
            },
            warnings,
        }
    }
}

/// Integrated autocorrelation time 1 + 2Σρ(k), summed until ρ first drops
/// below zero. Returns 1 for constant or very short series.
pub fn integrated_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return 1.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for k in 1..n / 2 {
        let c = (0..n - k).map(|t| (x[t] - mean) * (x[t + k] - mean)).sum::<f64>()
            / ((n - k) as f64 * var);
        if c <= 0.0 {
            break;
        }
        tau += 2.0 * c;
    }
    tau
}

/// Burn-in followed by `config.sweeps` production sweeps; returns the final
/// configuration.
pub fn mcmc_positions<R: Rng + ?Sized>(
    domain: &TorusDomain,
    pot: &PotentialSpec,
    params: &GibbsParameters,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(Vec<Vector>, SamplerDiagnostics)> {
    if config.sweeps == 0 {
        return Err(Error::InvalidParameter("sweeps must be at least 1".into()));
    }
    let mut chain = GibbsChain::new(*domain, *pot, params.clone(), config.clone(), rng)?;
    chain.burn_in(rng);
    chain.produce(config.sweeps, rng);
    Ok((chain.positions.clone(), chain.diagnostics()))
}

pub fn sample_local_gibbs<R: Rng + ?Sized>(
    params: &GibbsParameters,
    domain: &TorusDomain,
    pot: &PotentialSpec,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(ParticleState, SamplerDiagnostics)> {
    let (positions, diag) = mcmc_positions(domain, pot, params, config, rng)?;
    let velocities = sample_velocities(&positions, params, domain, rng)?;
    Ok((ParticleState::new(positions, velocities)?, diag))
}

/// Independent chains, one RNG stream per seed. The result does not depend
/// on whether the chains run in parallel.
pub fn sample_chains(
    params: &GibbsParameters,
    domain: &TorusDomain,
    pot: &PotentialSpec,
    config: &SamplerConfig,
    seeds: &[u64],
    parallel: bool,
) -> Result<Vec<(ParticleState, SamplerDiagnostics)>> {
    let run = |&seed: &u64| {
        let mut rng = seeded_rng(seed);
        sample_local_gibbs(params, domain, pot, config, &mut rng)
    };
    if parallel {
        seeds.par_iter().map(run).collect()
    } else {
        seeds.iter().map(run).collect()
    }
}
