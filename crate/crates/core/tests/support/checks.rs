//! Library-versus-oracle comparisons shared by the integration tests and the
//! acceptance target. Each returns the worst relative discrepancy.

use super::oracles::{self, Bump};
use ghostflow_core::correlators::analysis::EnsembleSeries;
use ghostflow_core::correlators::ensemble::{EquilibriumConfig, EquilibriumEnsemble, Trajectory};
use ghostflow_core::correlators::observables::TotalsFrame;
use ghostflow_core::correlators::{three_current_correlation, time_correlation, GriddedSeries};
use ghostflow_core::fields::{bin_fields, compute_currents, GridSpec};
use ghostflow_core::gibbs::{seeded_rng, SamplerConfig};
use ghostflow_core::md::{compute_forces_with, ForceMode, ParticleState, PotentialSpec, TorusDomain, VelocityVerlet};
use rand::Rng;
use rand_distr::StandardNormal;

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

fn random_state(rng: &mut impl Rng, n: usize, d: usize, l: f64) -> ParticleState {
    let pos = (0..n)
        .map(|_| {
            let mut x = [0.0; 3];
            for a in x.iter_mut().take(d) {
                *a = rng.gen::<f64>() * l;
            }
            x
        })
        .collect();
    let vel = (0..n)
        .map(|_| {
            let mut v = [0.0; 3];
            for a in v.iter_mut().take(d) {
                *a = rng.sample(StandardNormal);
            }
            v
        })
        .collect();
    ParticleState::new(pos, vel).unwrap()
}

/// Cell-list forces in both modes against all pairs on `configs` random
/// configurations with N ≤ 128, alternating d = 2, 3.
pub fn forces(configs: usize, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let bump = Bump { a: 3.0, rc: 1.0 };
    let pot = PotentialSpec::bump(bump.a, bump.rc);
    let mut worst = 0.0f64;
    for k in 0..configs {
        let d = 2 + k % 2;
        let n = rng.gen_range(2..=128);
        // densities from dilute to a few neighbours per particle
        let rho = rng.gen_range(0.1..1.5);
        let l = (n as f64 / rho).powf(1.0 / d as f64).max(2.5);
        let domain = TorusDomain::new(d, l, 1.0).unwrap();
        let s = random_state(&mut rng, n, d, l);
        let (f, e) = oracles::brute_forces(&s.positions, l, d, bump);
        let scale = f.iter().flat_map(|v| v.iter()).fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        for mode in [ForceMode::Serial, ForceMode::Parallel] {
            let got = compute_forces_with(&s, &pot, &domain, mode).unwrap();
            for (a, b) in got.forces.iter().zip(&f) {
                for c in 0..3 {
                    worst = worst.max(rel(a[c], b[c], scale));
                }
            }
            worst = worst.max(rel(got.potential_energy, e, e.abs().max(1.0)));
        }
    }
    worst
}

pub struct Toy {
    pub dim: usize,
    pub side: f64,
    pub bump: Bump,
    pub states: Vec<ParticleState>,
}

impl Toy {
    pub fn pot(&self) -> PotentialSpec {
        PotentialSpec::bump(self.bump.a, self.bump.rc)
    }

    pub fn domain(&self) -> TorusDomain {
        TorusDomain::new(self.dim, self.side, self.bump.rc).unwrap()
    }
}

/// A short MD trajectory of `n ≤ 4` particles in a box small enough that all
/// of them interact, one state per frame.
pub fn toy_trajectory(n: usize, d: usize, frames: usize, seed: u64) -> Toy {
    let bump = Bump { a: 2.0, rc: 1.0 };
    let side = if d == 2 { 2.4 } else { 2.2 };
    let mut rng = seeded_rng(seed);
    let mut s = random_state(&mut rng, n, d, side);
    let toy = Toy { dim: d, side, bump, states: Vec::new() };
    let mut md = VelocityVerlet::new(&s, toy.pot(), toy.domain(), 0.01, ForceMode::Serial).unwrap();
    let mut states = vec![s.clone()];
    for _ in 1..frames {
        md.run(&mut s, 3).unwrap();
        states.push(s.clone());
    }
    Toy { states, ..toy }
}

/// (library, oracle) values grouped by observable family.
fn frame_groups(lib: &TotalsFrame, o: &oracles::Frame) -> Vec<(&'static str, Vec<(f64, f64)>)> {
    let zip = |a: &[f64], b: &[f64]| a.iter().copied().zip(b.iter().copied()).collect::<Vec<_>>();
    vec![
        ("count", vec![(lib.count, o.count)]),
        ("energy", vec![(lib.energy, o.energy)]),
        ("momentum", zip(&lib.momentum, &o.momentum)),
        ("heat", zip(&lib.heat, &o.heat)),
        ("stress", zip(&lib.stress, &o.stress)),
        ("drift", zip(&lib.drift, &o.drift)),
        ("conduction", zip(&lib.conduction, &o.conduction)),
        ("nonlocal", zip(&lib.nonlocal, &o.nonlocal)),
        ("phi_pairs", zip(&lib.phi_pairs, &o.phi_pairs)),
    ]
}

/// Frame totals of every observable against the literal loops. Errors are
/// relative to the sum of the magnitudes of the contributing terms.
pub fn frames(toy: &Toy) -> f64 {
    let (pot, dom) = (toy.pot(), toy.domain());
    let mut worst = 0.0f64;
    for s in &toy.states {
        let lib = TotalsFrame::compute(s, &pot, &dom).unwrap();
        let o = oracles::frame(&s.positions, &s.velocities, toy.side, toy.dim, toy.bump);
        let mag = oracles::frame_with(&s.positions, &s.velocities, toy.side, toy.dim, toy.bump, true);
        for ((_, pairs), (_, scale)) in frame_groups(&lib, &o).into_iter().zip(frame_groups(&lib, &mag)) {
            for (&(a, b), &(_, m)) in pairs.iter().zip(&scale) {
                worst = worst.max(rel(a, b, m));
            }
        }
    }
    worst
}

/// Gridded fields and currents for every frame, as (library, oracle) series
/// of named channels, frame-major with one row per frame.
pub struct Channels {
    pub names: Vec<String>,
    pub library: Vec<Vec<Vec<f64>>>,
    pub oracle: Vec<Vec<Vec<f64>>>,
    pub cell_volume: f64,
}

pub fn gridded(toy: &Toy, cells: usize, epsilon: f64) -> Channels {
    let (pot, dom, d) = (toy.pot(), toy.domain(), toy.dim);
    let spec = GridSpec::new(d, cells);
    let ncell = spec.cells();
    let vol = spec.cell_volume(&dom, epsilon);
    let scale = epsilon.powi(d as i32) / vol;
    let mut names = vec!["z0".to_string(), "z_energy".to_string()];
    for a in 0..d {
        names.push(format!("z{a}"));
        names.push(format!("w0_{a}"));
        names.push(format!("wE_{a}"));
        for k in 0..d {
            names.push(format!("w_{a}{k}"));
            for c in 0..d {
                names.push(format!("phi0_{a}{k}{c}"));
                for g in 0..d {
                    names.push(format!("phi_{a}{k}{c}{g}"));
                }
            }
        }
    }
    let mut library = vec![Vec::new(); names.len()];
    let mut oracle = vec![Vec::new(); names.len()];
    for s in &toy.states {
        let f = bin_fields(s, &pot, &dom, &spec, epsilon).unwrap();
        let w = compute_currents(s, &pot, &dom, &spec, epsilon).unwrap();
        let parts = oracles::particles(&s.positions, &s.velocities, toy.side, d, toy.bump);
        let cell_of: Vec<usize> = s.positions.iter().map(|x| oracles::cell(x, toy.side, d, cells)).collect();
        let binned = |val: &dyn Fn(usize) -> f64| -> Vec<f64> {
            let mut out = vec![0.0; ncell];
            for (i, &c) in cell_of.iter().enumerate() {
                out[c] += scale * val(i);
            }
            out
        };
        let mut lib_rows: Vec<Vec<f64>> = vec![f.density.clone(), f.energy.clone()];
        let mut ora_rows: Vec<Vec<f64>> = vec![binned(&|_| 1.0), binned(&|i| parts[i].energy)];
        for a in 0..d {
            lib_rows.push(f.momentum.iter().map(|m| m[a]).collect());
            ora_rows.push(binned(&|i| s.velocities[i][a]));
            lib_rows.push(w.mass.iter().map(|m| m[a]).collect());
            ora_rows.push(binned(&|i| s.velocities[i][a]));
            lib_rows.push(w.heat.iter().map(|m| m[a]).collect());
            ora_rows.push(binned(&|i| parts[i].heat[a]));
            for k in 0..d {
                lib_rows.push(w.stress.iter().map(|m| m[3 * a + k]).collect());
                ora_rows.push(binned(&|i| parts[i].stress[3 * a + k]));
                for c in 0..d {
                    lib_rows.push(w.phi0.iter().map(|m| m[9 * a + 3 * k + c]).collect());
                    ora_rows.push(binned(&|i| parts[i].phi0[9 * a + 3 * k + c]));
                    for g in 0..d {
                        let idx = 27 * a + 9 * k + 3 * c + g;
                        lib_rows.push(w.phi.iter().map(|m| m[idx]).collect());
                        ora_rows.push(binned(&|i| parts[i].phi[idx]));
                    }
                }
            }
        }
        for (ch, row) in lib_rows.into_iter().enumerate() {
            library[ch].push(row);
        }
        for (ch, row) in ora_rows.into_iter().enumerate() {
            oracle[ch].push(row);
        }
    }
    Channels { names, library, oracle, cell_volume: vol }
}

/// Per-cell values of every channel.
pub fn binning(ch: &Channels) -> f64 {
    let mut worst = 0.0f64;
    for (lib, ora) in ch.library.iter().zip(&ch.oracle) {
        let scale = ora.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
        for (a, b) in lib.iter().flatten().zip(ora.iter().flatten()) {
            worst = worst.max(rel(*a, *b, scale));
        }
    }
    worst
}

fn series(rows: &[Vec<f64>], vol: f64) -> GriddedSeries {
    GriddedSeries::new(rows[0].len(), vol, rows.concat()).unwrap()
}

fn curve_error(lib: &[f64], ora: &[f64], scale: f64) -> f64 {
    lib.iter().zip(ora).fold(0.0f64, |m, (a, b)| m.max(rel(*a, *b, scale)))
}

/// max_t Σ_c |A_c(t)|·vol of a frame-major gridded channel.
fn peak_total(rows: &[Vec<f64>], vol: f64) -> f64 {
    rows.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>() * vol).fold(0.0f64, f64::max)
}

/// Every two-point correlation among the gridded channels and the
/// three-current correlations of the momentum-current family, all lags.
pub fn gridded_correlations(ch: &Channels, max_lag: usize) -> f64 {
    let vol = ch.cell_volume;
    let lib: Vec<GriddedSeries> = ch.library.iter().map(|r| series(r, vol)).collect();
    let mut worst = 0.0f64;
    let n = ch.names.len();
    let volume = vol * ch.oracle[0][0].len() as f64;
    // |C(τ)| ≤ max|Â|·max|B̂|/V bounds every curve
    let peak: Vec<f64> = ch.oracle.iter().map(|r| peak_total(r, vol)).collect();
    for i in 0..n {
        for j in 0..n {
            let c = time_correlation(&lib[i], &lib[j], max_lag).unwrap();
            let o: Vec<f64> = (0..=max_lag).map(|l| oracles::correlation(&ch.oracle[i], &ch.oracle[j], vol, l)).collect();
            worst = worst.max(curve_error(&c.values, &o, peak[i] * peak[j] / volume));
        }
    }
    let family: Vec<usize> = (0..n).filter(|&k| ch.names[k].starts_with("w") || ch.names[k].starts_with('z')).collect();
    for &i in &family {
        for &j in &family {
            for &k in family.iter().step_by(3) {
                let c = three_current_correlation(&lib[i], &lib[j], &lib[k], max_lag).unwrap();
                let o: Vec<f64> = (0..=max_lag).map(|l| oracles::three_current(&ch.oracle[i], &ch.oracle[j], &ch.oracle[k], vol, l)).collect();
                worst = worst.max(curve_error(&c.values, &o, peak[i] * peak[j] * peak[k] / volume));
            }
        }
    }
    worst
}

/// An ensemble assembled from toy trajectories of 1 to 4 particles.
pub fn toy_ensemble(d: usize, trajectories: usize, frames: usize, seed: u64) -> EquilibriumEnsemble {
    let mut trajs = Vec::new();
    let mut side = 0.0;
    let mut bump = Bump { a: 0.0, rc: 1.0 };
    for k in 0..trajectories {
        let toy = toy_trajectory(1 + k % 4, d, frames, seed.wrapping_add(k as u64));
        let (pot, dom) = (toy.pot(), toy.domain());
        side = toy.side;
        bump = toy.bump;
        let frames = toy.states.iter().map(|s| TotalsFrame::compute(s, &pot, &dom).unwrap()).collect();
        trajs.push(Trajectory { id: k as u64, group: k as u64, frames, energy_drift: 0.0, sampler: Default::default() });
    }
    let config = EquilibriumConfig {
        dim: d,
        side,
        log_activity: 0.0,
        temperature: 1.0,
        pot: PotentialSpec::bump(bump.a, bump.rc),
        sampler: SamplerConfig::default(),
        trajectories,
        steps: frames * 3,
        dt: 0.01,
        sample_every: 3,
        seed,
        parallel: false,
        antithetic: false,
    };
    EquilibriumEnsemble { config, trajectories: trajs }
}

/// Pooled literal correlation over trajectories of per-frame totals.
fn pooled(cols: &[&Vec<Vec<f64>>], volume: f64, lag: usize) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for k in 0..cols[0].len() {
        let n = cols[0][k].len();
        for t in 0..n - lag {
            let mut p = cols[0][k][t + lag];
            for (m, col) in cols.iter().enumerate().skip(1) {
                p *= if m + 1 == cols.len() { col[k][t] } else { col[k][t + lag] };
            }
            s += p;
            c += 1.0;
        }
    }
    s / volume / c
}

/// The ensemble-level estimators (raw and projected inputs) on toy data.
pub fn ensemble_correlations(ens: &EquilibriumEnsemble, max_lag: usize) -> f64 {
    let s = EnsembleSeries::new(ens, max_lag).unwrap();
    let d = s.dim;
    let mut inputs = vec![s.raw(|f| f.energy), s.centred(|f| f.count), s.centred(|f| f.heat[0])];
    for b in 0..d {
        for k in 0..d {
            inputs.push(s.projected(|f| f.stress[3 * b + k]).unwrap());
        }
        inputs.push(s.projected(|f| f.heat[b]).unwrap());
        inputs.push(s.centred(|f| f.momentum[b]));
    }
    inputs.push(s.projected(|f| f.drift[1]).unwrap());
    inputs.push(s.projected(|f| f.nonlocal[0] + f.conduction[d + 1]).unwrap());
    let mut worst = 0.0f64;
    let peak = |x: &Vec<Vec<f64>>| x.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for a in &inputs {
        for b in &inputs {
            let acc = s.correlate("x", a, b).unwrap();
            let o: Vec<f64> = (0..=max_lag).map(|l| pooled(&[a, b], s.volume, l)).collect();
            worst = worst.max(curve_error(&acc.mean(), &o, peak(a) * peak(b) / s.volume));
            for w in inputs.iter().step_by(4) {
                let acc = s.correlate3("y", a, b, w).unwrap();
                let o: Vec<f64> = (0..=max_lag).map(|l| pooled(&[a, b, w], s.volume, l)).collect();
                worst = worst.max(curve_error(&acc.mean(), &o, peak(a) * peak(b) * peak(w) / s.volume));
            }
        }
    }
    worst
}

/// Everything above for d = 2 and 3.
pub fn estimators(seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for d in [2, 3] {
        for n in 1..=4 {
            let toy = toy_trajectory(n, d, 26, seed + 10 * n as u64 + d as u64);
            worst = worst.max(frames(&toy));
            let ch = gridded(&toy, 2, 0.5);
            worst = worst.max(binning(&ch));
            worst = worst.max(gridded_correlations(&ch, 5));
        }
        let ens = toy_ensemble(d, 8, 26, seed + 100);
        worst = worst.max(ensemble_correlations(&ens, 5));
    }
    worst
}

/// An equilibrated N-particle state at density ρ and temperature T from the
/// canonical sampler.
pub fn equilibrium_state(n: usize, d: usize, rho: f64, t: f64, pot: PotentialSpec, seed: u64) -> (ParticleState, TorusDomain) {
    use ghostflow_core::gibbs::{sample_local_gibbs, Ensemble, GibbsParameters};
    let side = (n as f64 / rho).powf(1.0 / d as f64);
    let domain = TorusDomain::new(d, side, pot.range).unwrap();
    let params = GibbsParameters::ideal_gas(d, rho, t).unwrap();
    let cfg = SamplerConfig { ensemble: Ensemble::Canonical { count: n }, sweeps: 50, ..Default::default() };
    let (s, _) = sample_local_gibbs(&params, &domain, &pot, &cfg, &mut seeded_rng(seed)).unwrap();
    (s, domain)
}

pub struct Conservation {
    /// max |P(t) − P(0)| / Σ|v_i| over each block of 10³ steps.
    pub momentum_per_thousand: f64,
    /// max_t |E(t) − E(0)| / |E(0)|.
    pub energy_drift: f64,
}

pub fn conservation(n: usize, d: usize, dt: f64, steps: usize, seed: u64) -> Conservation {
    use ghostflow_core::md::total_invariants;
    let pot = PotentialSpec::bump(3.0, 1.0);
    let (mut s, domain) = equilibrium_state(n, d, 0.5, 1.0, pot, seed);
    let mut md = VelocityVerlet::new(&s, pot, domain, dt, ForceMode::Serial).unwrap();
    let e0 = md.potential_energy() + s.kinetic_energy();
    let speed: f64 = s.velocities.iter().map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).sum();
    let mut p_block = total_invariants(&s, &pot, &domain).unwrap().momentum;
    let (mut dp, mut de) = (0.0f64, 0.0f64);
    for step in 1..=steps {
        md.step(&mut s).unwrap();
        let e = md.potential_energy() + s.kinetic_energy();
        de = de.max((e - e0).abs() / e0.abs());
        if step % 1000 == 0 || step == steps {
            let p = total_invariants(&s, &pot, &domain).unwrap().momentum;
            for a in 0..3 {
                dp = dp.max((p[a] - p_block[a]).abs() / speed);
            }
            p_block = p;
        }
    }
    Conservation { momentum_per_thousand: dp, energy_drift: de }
}

/// A named statistic in units of its standard error.
pub struct ZScore {
    pub name: String,
    pub z: f64,
}

fn zscore(name: impl Into<String>, value: f64, expected: f64, stderr: f64) -> ZScore {
    ZScore { name: name.into(), z: (value - expected) / stderr }
}

fn ideal_gas_chains(d: usize, side: f64, rho: f64, t: f64, chains: usize, seed: u64) -> Vec<ParticleState> {
    use ghostflow_core::gibbs::{sample_chains, GibbsParameters};
    let domain = TorusDomain::new(d, side, 1.0).unwrap();
    let params = GibbsParameters::ideal_gas(d, rho, t).unwrap();
    let cfg = SamplerConfig { sweeps: 20, burn_in_window: 10, max_burn_in: 100, ..Default::default() };
    let seeds: Vec<u64> = (0..chains as u64).map(|k| seed.wrapping_mul(1_000_003).wrapping_add(k)).collect();
    sample_chains(&params, &domain, &PotentialSpec::free(1.0), &cfg, &seeds, true)
        .unwrap()
        .into_iter()
        .map(|(s, _)| s)
        .collect()
}

/// Particle number of independent grand-canonical ideal-gas chains against
/// the Poisson law with mean ρL^d: mean, variance and a binned χ².
pub fn poisson_law(chains: usize, seed: u64) -> Vec<ZScore> {
    let (d, side, rho) = (2, 3.0, 1.0);
    let mu = rho * side * side;
    let counts: Vec<f64> = ideal_gas_chains(d, side, rho, 1.0, chains, seed).iter().map(|s| s.len() as f64).collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut out = vec![
        zscore("count mean", mean, mu, (mu / n).sqrt()),
        // Var(s²) = (μ₄ − σ⁴(n−3)/(n−1))/n with μ₄ = μ + 3μ²
        zscore("count variance", var, mu, ((mu + 2.0 * mu * mu) / n).sqrt()),
    ];
    // Bins with expected occupancy ≥ 5, tails pooled into the end bins.
    let pmf = |k: usize| (-mu + k as f64 * mu.ln() - (1..=k).map(|j| (j as f64).ln()).sum::<f64>()).exp();
    let mut lo = 0;
    while n * pmf(lo) < 5.0 && (lo as f64) < mu {
        lo += 1;
    }
    let mut hi = lo;
    while n * pmf(hi + 1) >= 5.0 || (hi as f64) < mu {
        hi += 1;
    }
    let below: f64 = (0..lo).map(pmf).sum::<f64>() + pmf(lo);
    let above = 1.0 - (0..hi).map(pmf).sum::<f64>();
    let mut expected: Vec<f64> = vec![below];
    expected.extend((lo + 1..hi).map(pmf));
    expected.push(above);
    let mut observed = vec![0.0; expected.len()];
    for &c in &counts {
        let k = (c as usize).clamp(lo, hi);
        observed[k - lo] += 1.0;
    }
    let chi2: f64 = observed.iter().zip(&expected).map(|(o, p)| (o - n * p).powi(2) / (n * p)).sum();
    let dof = (expected.len() - 1) as f64;
    out.push(zscore("count chi-square", chi2, dof, (2.0 * dof).sqrt()));
    out
}

/// Velocity moments of sampled ideal-gas particles at temperature T.
pub fn velocity_moments(chains: usize, seed: u64) -> Vec<ZScore> {
    let (d, t) = (2, 1.5);
    let states = ideal_gas_chains(d, 3.0, 1.0, t, chains, seed);
    let v: Vec<&[f64; 3]> = states.iter().flat_map(|s| s.velocities.iter()).collect();
    let n = v.len() as f64;
    let avg = |f: &dyn Fn(&[f64; 3]) -> f64| v.iter().map(|x| f(x)).sum::<f64>() / n;
    let mut out = Vec::new();
    for a in 0..d {
        out.push(zscore(format!("<v{a}>"), avg(&|x| x[a]), 0.0, (t / n).sqrt()));
        out.push(zscore(format!("<v{a}^2>"), avg(&|x| x[a] * x[a]), t, (2.0 * t * t / n).sqrt()));
        // Var(v⁴) = 105T⁴ − 9T⁴
        out.push(zscore(format!("<v{a}^4>"), avg(&|x| x[a].powi(4)), 3.0 * t * t, (96.0 * t.powi(4) / n).sqrt()));
    }
    out.push(zscore("<v0 v1>", avg(&|x| x[0] * x[1]), 0.0, (t * t / n).sqrt()));
    out
}

/// Spatially varying λ⁰ with V ≡ 0: pooled counts in slabs along x against
/// the Poisson mean ∫_slab exp λ⁰.
pub fn binned_density(chains: usize, slabs: usize, seed: u64) -> Vec<ZScore> {
    use ghostflow_core::gibbs::{sample_chains, GibbsParameters};
    use ghostflow_core::grid::PeriodicField;
    let (d, side) = (2, 4.0);
    let domain = TorusDomain::new(d, side, 1.0).unwrap();
    let lam = PeriodicField::from_fn(d, [16, 1, 1], |s| (0.5 * (2.0 * std::f64::consts::PI * s[0]).sin()).ln_1p()).unwrap();
    let params = GibbsParameters::local(lam, PeriodicField::constant(d, -1.0), None, 0.0).unwrap();
    let cfg = SamplerConfig { sweeps: 20, burn_in_window: 10, max_burn_in: 100, ..Default::default() };
    let seeds: Vec<u64> = (0..chains as u64).map(|k| seed.wrapping_mul(7919).wrapping_add(k)).collect();
    let states = sample_chains(&params, &domain, &PotentialSpec::free(1.0), &cfg, &seeds, true).unwrap();
    let mut observed = vec![0.0; slabs];
    for (s, _) in &states {
        for x in &s.positions {
            observed[((x[0] / side * slabs as f64) as usize).min(slabs - 1)] += 1.0;
        }
    }
    // midpoint rule on a fine lattice of x
    let fine = 4000;
    let h = side / (slabs * fine) as f64;
    (0..slabs)
        .map(|b| {
            let integral: f64 = (0..fine)
                .map(|k| params.log_activity_at(&[(b * fine + k) as f64 * h + 0.5 * h, 0.0, 0.0], &domain).exp() * h * side)
                .sum();
            let mean = integral * chains as f64;
            zscore(format!("slab {b}"), observed[b], mean, mean.sqrt())
        })
        .collect()
}

/// Oracle log weight: Σλ⁰(x_i) + Σ_{i<k} V_ik (λe_i + λe_k)/2. Field values
/// come from the parameter set; pairs and V are computed here.
fn log_weight(pos: &[oracles::V3], params: &ghostflow_core::gibbs::GibbsParameters, domain: &TorusDomain, v: Bump) -> f64 {
    let (l, d) = (domain.side(), domain.dim());
    let mut s: f64 = pos.iter().map(|x| params.log_activity_at(x, domain)).sum();
    for i in 0..pos.len() {
        for k in i + 1..pos.len() {
            let x = oracles::separation(&pos[i], &pos[k], l, d);
            let e = v.value(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
            s += e * 0.5 * (params.inverse_temperature_at(&pos[i], domain) + params.inverse_temperature_at(&pos[k], domain));
        }
    }
    s
}

/// Both sides of π(x)P(x→y)a(x→y) = π(y)P(y→x)a(y→x), relative to the larger.
fn balance(lx: f64, fx: f64, ly: f64, fy: f64) -> f64 {
    let r = lx.max(ly);
    let a = (lx - r).exp() * fx;
    let b = (ly - r).exp() * fy;
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        (a - b).abs() / a.max(b)
    }
}

/// Detailed balance of every elementary move on enumerated two-particle
/// configurations, for global and local parameters in d = 2, 3.
pub fn detailed_balance() -> f64 {
    use ghostflow_core::gibbs::{move_probabilities, Ensemble, GibbsParameters, MoveKernel};
    use ghostflow_core::grid::PeriodicField;
    use std::f64::consts::PI;
    let bump = Bump { a: 2.5, rc: 1.0 };
    let pot = PotentialSpec::bump(bump.a, bump.rc);
    let [p_move, p_ins, p_del] = move_probabilities(Ensemble::GrandCanonical);
    let mut worst = 0.0f64;
    for d in [2, 3] {
        let side = 2.6;
        let domain = TorusDomain::new(d, side, 1.0).unwrap();
        let local = GibbsParameters::local(
            PeriodicField::from_fn(d, [6, 5, 4], |s| 0.2 + 0.7 * (2.0 * PI * s[0]).sin() * (2.0 * PI * s[1]).cos()).unwrap(),
            PeriodicField::from_fn(d, [6, 5, 4], |s| -1.0 / (1.0 + 0.4 * (2.0 * PI * (s[1] + s[2])).cos())).unwrap(),
            None,
            0.0,
        )
        .unwrap();
        let global = GibbsParameters::global(d, -0.3, 0.8, 0.0).unwrap();
        // lattice points with spacing below rc, so many pairs interact
        let m: usize = if d == 2 { 5 } else { 3 };
        let lattice: Vec<oracles::V3> = (0..m.pow(d as u32))
            .map(|k| {
                let mut x = [0.0; 3];
                for (a, xa) in x.iter_mut().enumerate().take(d) {
                    *xa = ((k / m.pow(a as u32)) % m) as f64 * side / m as f64 + 0.13 * (a + 1) as f64;
                }
                x
            })
            .collect();
        let offsets = [-0.25, 0.0, 0.2];
        for params in [&global, &local] {
            let kernel = MoveKernel { domain: &domain, pot: &pot, params };
            for (i, x1) in lattice.iter().enumerate() {
                let one = vec![*x1];
                let l1 = log_weight(&one, params, &domain, bump);
                for x2 in lattice.iter().skip(i + 1) {
                    let two = vec![*x1, *x2];
                    let l2 = log_weight(&two, params, &domain, bump);
                    // insertion of x2 against deletion of it
                    let ins = p_ins / domain.volume() * kernel.insertion_acceptance(&one, x2);
                    let del = p_del / 2.0 * kernel.deletion_acceptance(&two, 1);
                    worst = worst.max(balance(l1, ins, l2, del));
                    // displacement of x2; the uniform proposal is symmetric
                    for k in 0..offsets.len().pow(d as u32) {
                        let mut y = *x2;
                        for (a, ya) in y.iter_mut().enumerate().take(d) {
                            *ya += offsets[(k / offsets.len().pow(a as u32)) % offsets.len()];
                        }
                        let y = domain.wrap(y);
                        let moved = vec![*x1, y];
                        let ly = log_weight(&moved, params, &domain, bump);
                        let fwd = p_move / 2.0 * kernel.displacement_acceptance(&two, 1, &y);
                        let back = p_move / 2.0 * kernel.displacement_acceptance(&moved, 1, x2);
                        worst = worst.max(balance(l2, fwd, ly, back));
                    }
                }
            }
        }
    }
    worst
}

pub struct ProjectorReport {
    /// max |𝒫z^μ − z^μ| relative to max |z^μ|.
    pub basis: f64,
    /// max |𝒫²φ − 𝒫φ| relative to max |𝒫φ| over random observables.
    pub idempotence: f64,
    /// Held-out ⟨w̄ z^μ⟩ in units of its bootstrap error, one per
    /// (observable, μ).
    pub residuals: Vec<ZScore>,
}

/// Projector on binned slow fields of independent Gibbs snapshots (d = 2,
/// bump fluid). Coefficients come from one half of the snapshots; the
/// residual covariances are measured on the other half and bootstrapped over
/// snapshots.
pub fn projector(snapshots: usize, seed: u64) -> ProjectorReport {
    use ghostflow_core::correlators::projector::{apply, build_projector, slow_samples_from_grids};
    use ghostflow_core::gibbs::{sample_chains, GibbsParameters};
    let d = 2;
    let pot = PotentialSpec::bump(3.0, 1.0);
    let side = 6.0;
    let domain = TorusDomain::new(d, side, 1.0).unwrap();
    let params = GibbsParameters::global(d, 0.5f64.ln() + 0.5, 1.0, 0.0).unwrap();
    let cfg = SamplerConfig { sweeps: 30, burn_in_window: 10, max_burn_in: 60, ..Default::default() };
    let seeds: Vec<u64> = (0..snapshots as u64).map(|k| seed.wrapping_mul(104_729).wrapping_add(k)).collect();
    let spec = GridSpec::new(d, 3);
    let grids: Vec<_> = sample_chains(&params, &domain, &pot, &cfg, &seeds, true)
        .unwrap()
        .iter()
        .map(|(s, _)| bin_fields(s, &pot, &domain, &spec, 1.0).unwrap())
        .collect();
    let cells = spec.cells();
    let rows = slow_samples_from_grids(&grids);
    let m = rows[0].len();
    let observables: Vec<(&str, Box<dyn Fn(&[f64]) -> f64>)> = vec![
        ("rho^2", Box::new(|z: &[f64]| z[0] * z[0])),
        ("e*rho + px^2", Box::new(|z: &[f64]| z[3] * z[0] + z[1] * z[1])),
        ("sin(e) + py*px", Box::new(|z: &[f64]| z[3].sin() + z[2] * z[1])),
    ];

    let basis = build_projector(&rows).unwrap();
    let mut worst_basis = 0.0f64;
    for mu in 0..m {
        let z: Vec<f64> = rows.iter().map(|r| r[mu]).collect();
        let p = basis.project(&rows, &z).unwrap();
        let scale = z.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        worst_basis = worst_basis.max(z.iter().zip(&p).fold(0.0f64, |w, (a, b)| w.max((a - b).abs() / scale)));
    }
    let mut idempotence = 0.0f64;
    let mut noise = seeded_rng(seed ^ 0x5eed);
    let mut inputs: Vec<Vec<f64>> = observables.iter().map(|(_, f)| rows.iter().map(|r| f(r)).collect()).collect();
    inputs.push(rows.iter().map(|r| r[0] + noise.sample::<f64, _>(StandardNormal)).collect());
    for phi in &inputs {
        let p1 = basis.project(&rows, phi).unwrap();
        let p2 = basis.project(&rows, &p1).unwrap();
        let scale = p1.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        idempotence = idempotence.max(p1.iter().zip(&p2).fold(0.0f64, |w, (a, b)| w.max((a - b).abs() / scale)));
    }

    // Joint bootstrap: each replicate resamples both halves and refits, so
    // the error includes the noise of the trained coefficients.
    let half = snapshots / 2;
    let take = |from: usize, pick: &[usize]| -> Vec<Vec<f64>> {
        pick.iter().flat_map(|&s| rows[(from + s) * cells..(from + s + 1) * cells].iter().cloned()).collect()
    };
    let residual = |train: &[Vec<f64>], test: &[Vec<f64>], f: &dyn Fn(&[f64]) -> f64, mu: usize| {
        let basis = build_projector(train).unwrap();
        let phi: Vec<f64> = train.iter().map(|r| f(r)).collect();
        let c = basis.coefficients(train, &phi).unwrap();
        let wbar: Vec<f64> = test.iter().zip(apply(&c, test)).map(|(r, p)| f(r) - p).collect();
        let n = test.len() as f64;
        let wm = wbar.iter().sum::<f64>() / n;
        let zm = test.iter().map(|r| r[mu]).sum::<f64>() / n;
        wbar.iter().zip(test).map(|(w, r)| (w - wm) * (r[mu] - zm)).sum::<f64>() / n
    };
    let all: Vec<usize> = (0..half).collect();
    let (train, test) = (take(0, &all), take(half, &all));
    let mut rng = seeded_rng(seed ^ 0xb007);
    let replicates: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..300)
        .map(|_| {
            let a: Vec<usize> = (0..half).map(|_| rng.gen_range(0..half)).collect();
            let b: Vec<usize> = (0..half).map(|_| rng.gen_range(0..half)).collect();
            (take(0, &a), take(half, &b))
        })
        .collect();
    let mut residuals = Vec::new();
    for (name, f) in &observables {
        for mu in 0..m {
            let value = residual(&train, &test, f.as_ref(), mu);
            let boot: Vec<f64> = replicates.iter().map(|(a, b)| residual(a, b, f.as_ref(), mu)).collect();
            let bm = boot.iter().sum::<f64>() / boot.len() as f64;
            let sd = (boot.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (boot.len() - 1) as f64).sqrt();
            residuals.push(zscore(format!("<({name})bar z{mu}>"), value, 0.0, sd));
        }
    }
    ProjectorReport { basis: worst_basis, idempotence, residuals }
}

/// The interacting state point used for the transport checks: d = 2 bump
/// fluid (a = 3, r_c = 1) at ρ ≈ 0.5, T = 1, N ≈ 64.
pub fn transport_config(trajectories: usize, steps: usize, seed: u64) -> EquilibriumConfig {
    EquilibriumConfig {
        dim: 2,
        side: (64.0f64 / 0.5).sqrt(),
        log_activity: 0.5f64.ln() + 0.5,
        temperature: 1.0,
        pot: PotentialSpec::bump(3.0, 1.0),
        sampler: SamplerConfig::default(),
        trajectories,
        steps,
        dt: 0.005,
        sample_every: 5,
        seed,
        parallel: true,
        antithetic: false,
    }
}

/// Ideal gas at ρ = 1, T = 1 in d = 2.
pub fn ideal_config(trajectories: usize, seed: u64) -> EquilibriumConfig {
    EquilibriumConfig {
        dim: 2,
        side: 8.0,
        log_activity: 0.0,
        temperature: 1.0,
        pot: PotentialSpec::free(1.0),
        sampler: SamplerConfig::default(),
        trajectories,
        steps: 50,
        dt: 0.01,
        sample_every: 5,
        seed,
        parallel: true,
        antithetic: false,
    }
}

/// Measured state-equation table bracketing the transport state point.
pub fn measured_table(seed: u64) -> ghostflow_core::eos::StateEquationTable {
    use ghostflow_core::eos::{tabulate_state_equation, TabulationConfig};
    let rhos = [0.3, 0.4, 0.5, 0.6, 0.7];
    let temps = [0.7, 0.85, 1.0, 1.15, 1.3];
    let cfg = TabulationConfig { seed, ..Default::default() };
    tabulate_state_equation(2, &rhos, &temps, &PotentialSpec::bump(3.0, 1.0), &cfg).unwrap()
}
