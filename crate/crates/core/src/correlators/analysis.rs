//! Transport coefficients, two-route checks, sum rules and the Galilean null
//! test, all estimated from an [`EquilibriumEnsemble`].
//!
//! Every estimate is a function of trajectory multiplicities, so one set of
//! bootstrap replicas (fixed seed) serves all of them and differences of
//! estimates get paired errors.

use super::ensemble::EquilibriumEnsemble;
use super::integrate::{bootstrap_stderr, choose_window, isotropy_decompose, quad, Estimate, Weighting};
use super::observables::TotalsFrame;
use super::projector::{build_projector, ProjectionBasis};
use super::series::{correlation_block, BlockSums, three_current_block, CorrelationAccumulator, GriddedSeries};
use crate::eos::{ChemicalDerivatives, StateEquation, StateEquationTable};
use crate::error::{Error, Result};
use crate::fields::i2;
use crate::gibbs::seeded_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

const BOOTSTRAP_SEED: u64 = 0x0a11_5eed;

/// Per-trajectory frame values of one observable.
pub type Columns = Vec<Vec<f64>>;

// `w` holds one multiplicity per bootstrap block and `g` maps trajectories
// to blocks.
fn wmean(x: &Columns, w: &[f64], g: &[usize]) -> f64 {
    let (mut s, mut n) = (0.0, 0.0);
    for (col, &gi) in x.iter().zip(g) {
        let wi = w[gi];
        if wi == 0.0 {
            continue;
        }
        s += wi * col.iter().sum::<f64>();
        n += wi * col.len() as f64;
    }
    s / n
}

fn wcov(x: &Columns, y: &Columns, w: &[f64], g: &[usize]) -> f64 {
    let (mx, my) = (wmean(x, w, g), wmean(y, w, g));
    let (mut s, mut n) = (0.0, 0.0);
    for ((cx, cy), &gi) in x.iter().zip(y).zip(g) {
        let wi = w[gi];
        if wi == 0.0 {
            continue;
        }
        s += wi * cx.iter().zip(cy).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>();
        n += wi * cx.len() as f64;
    }
    s / n
}

/// Third joint cumulant E[(x−x̄)(y−ȳ)(z−z̄)].
fn wcum3(x: &Columns, y: &Columns, z: &Columns, w: &[f64], g: &[usize]) -> f64 {
    let (mx, my, mz) = (wmean(x, w, g), wmean(y, w, g), wmean(z, w, g));
    let (mut s, mut n) = (0.0, 0.0);
    for (((cx, cy), cz), &gi) in x.iter().zip(y).zip(z).zip(g) {
        let wi = w[gi];
        if wi == 0.0 {
            continue;
        }
        for t in 0..cx.len() {
            s += wi * (cx[t] - mx) * (cy[t] - my) * (cz[t] - mz);
        }
        n += wi * cx.len() as f64;
    }
    s / n
}

/// A scalar statistic of trajectory multiplicities.
type Stat<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

fn estimate(blocks: usize, stat: &(dyn Fn(&[f64]) -> f64 + Sync), window: usize, dt: f64, converged: bool) -> Estimate {
    let ones = vec![1.0; blocks];
    let value = stat(&ones);
    let stderr = bootstrap_stderr(blocks, BOOTSTRAP_SEED, stat);
    let mut flags = Vec::new();
    if !converged {
        flags.push("no plateau within max_lag".to_string());
    }
    if !value.is_finite() {
        flags.push("non-finite".to_string());
    }
    Estimate { value, stderr, window, window_time: window as f64 * dt, converged, flags }
}

/// scale·∫C or scale·∫τC over a fixed window.
#[derive(Clone, Debug)]
pub struct Integral {
    pub acc: CorrelationAccumulator,
    pub scale: f64,
    pub weighting: Weighting,
    pub window: usize,
    pub converged: bool,
}

impl Integral {
    pub fn new(acc: CorrelationAccumulator, scale: f64, weighting: Weighting, window: Option<usize>) -> Self {
        let (window, converged) = match window {
            Some(w) => (w.min(acc.lags().saturating_sub(1)), true),
            None => choose_window(&acc),
        };
        Self { acc, scale, weighting, window, converged }
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        self.scale * quad(&self.acc.weighted_mean(w), self.acc.dt, self.window, self.weighting)
    }

    pub fn estimate(&self) -> Estimate {
        estimate(self.acc.blocks.len(), &|w| self.eval(w), self.window, self.acc.dt, self.converged)
    }
}

/// Frame series of an ensemble, the slow-mode basis over all frames, and
/// helpers that turn observables into correlation accumulators.
pub struct EnsembleSeries<'a> {
    pub ensemble: &'a EquilibriumEnsemble,
    pub dim: usize,
    pub volume: f64,
    pub dt: f64,
    pub max_lag: usize,
    pub rows: Vec<Vec<f64>>,
    pub basis: ProjectionBasis,
    /// Bootstrap block of each trajectory.
    pub group: Vec<usize>,
    groups: usize,
}

impl<'a> EnsembleSeries<'a> {
    pub fn new(ensemble: &'a EquilibriumEnsemble, max_lag: usize) -> Result<Self> {
        if ensemble.trajectories.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let dim = ensemble.config.dim;
        let rows: Vec<Vec<f64>> = ensemble.frames().map(|f| f.slow(dim)).collect();
        let basis = build_projector(&rows)?;
        let mut ids: Vec<u64> = ensemble.trajectories.iter().map(|t| t.group).collect();
        ids.sort_unstable();
        ids.dedup();
        let group = ensemble.trajectories.iter().map(|t| ids.binary_search(&t.group).unwrap()).collect();
        Ok(Self {
            ensemble,
            dim,
            volume: ensemble.volume(),
            dt: ensemble.config.frame_dt(),
            max_lag,
            rows,
            basis,
            group,
            groups: ids.len(),
        })
    }

    pub fn blocks(&self) -> usize {
        self.groups
    }

    /// Adds per-trajectory blocks of the same group into one block.
    fn grouped(&self, label: &str, blocks: Vec<BlockSums>) -> CorrelationAccumulator {
        let mut merged: Vec<Option<BlockSums>> = vec![None; self.groups];
        for (k, b) in blocks.into_iter().enumerate() {
            let g = self.group[k];
            match &mut merged[g] {
                Some(m) => {
                    for (x, y) in m.sums.iter_mut().zip(&b.sums) {
                        *x += y;
                    }
                    for (x, y) in m.counts.iter_mut().zip(&b.counts) {
                        *x += y;
                    }
                }
                slot => *slot = Some(BlockSums { id: g as u64, ..b }),
            }
        }
        let mut acc = CorrelationAccumulator::new(label, self.dt);
        for b in merged.into_iter().flatten() {
            acc.push(b);
        }
        acc
    }

    pub fn raw(&self, f: impl Fn(&TotalsFrame) -> f64) -> Columns {
        self.ensemble.trajectories.iter().map(|t| t.frames.iter().map(&f).collect()).collect()
    }

    /// Observable minus its ensemble mean.
    pub fn centred(&self, f: impl Fn(&TotalsFrame) -> f64) -> Columns {
        let x = self.raw(f);
        let m = wmean(&x, &vec![1.0; self.blocks()], &self.group);
        x.into_iter().map(|c| c.into_iter().map(|v| v - m).collect()).collect()
    }

    /// Projection coefficients c with 𝒫φ = c·z.
    pub fn projection_coefficients(&self, f: impl Fn(&TotalsFrame) -> f64) -> Result<Vec<f64>> {
        let phi: Vec<f64> = self.ensemble.frames().map(f).collect();
        self.basis.coefficients(&self.rows, &phi)
    }

    /// w̄ = φ − 𝒫φ, centred.
    pub fn projected(&self, f: impl Fn(&TotalsFrame) -> f64) -> Result<Columns> {
        let c = self.projection_coefficients(&f)?;
        let dim = self.dim;
        let x: Columns = self
            .ensemble
            .trajectories
            .iter()
            .map(|t| {
                t.frames
                    .iter()
                    .map(|fr| f(fr) - fr.slow(dim).iter().zip(&c).map(|(z, c)| z * c).sum::<f64>())
                    .collect()
            })
            .collect();
        let m = wmean(&x, &vec![1.0; self.blocks()], &self.group);
        Ok(x.into_iter().map(|c| c.into_iter().map(|v| v - m).collect()).collect())
    }

    fn series(&self, x: &[f64]) -> GriddedSeries {
        GriddedSeries::totals(self.volume, x.to_vec())
    }

    /// (1/V)⟨A(τ)B(0)⟩ with one block per trajectory.
    pub fn correlate(&self, label: &str, a: &Columns, b: &Columns) -> Result<CorrelationAccumulator> {
        let blocks = (0..a.len())
            .map(|k| correlation_block(&self.series(&a[k]), &self.series(&b[k]), self.max_lag, k as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.grouped(label, blocks))
    }

    /// (1/V)⟨A(τ)B(τ)W(0)⟩.
    pub fn correlate3(&self, label: &str, a: &Columns, b: &Columns, w: &Columns) -> Result<CorrelationAccumulator> {
        let blocks = (0..a.len())
            .map(|k| three_current_block(&self.series(&a[k]), &self.series(&b[k]), &self.series(&w[k]), self.max_lag, k as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.grouped(label, blocks))
    }

    /// Projected momentum current w̄^{βk} for all index pairs, row-major.
    pub fn projected_stress(&self) -> Result<Vec<Columns>> {
        let d = self.dim;
        let mut out = Vec::with_capacity(d * d);
        for b in 0..d {
            for k in 0..d {
                out.push(self.projected(|f| f.stress[i2(b, k)])?);
            }
        }
        Ok(out)
    }

    fn off_diagonal_pairs(&self) -> Vec<(usize, usize)> {
        let d = self.dim;
        (0..d).flat_map(|a| (0..d).filter(move |&b| b != a).map(move |b| (a, b))).collect()
    }

    fn mean_of(&self, label: &str, accs: &[CorrelationAccumulator]) -> Result<CorrelationAccumulator> {
        let w = 1.0 / accs.len() as f64;
        let terms: Vec<(f64, &CorrelationAccumulator)> = accs.iter().map(|a| (w, a)).collect();
        CorrelationAccumulator::combine(label, &terms)
    }

    /// Ensemble means ρ, ρe and the virial pressure, as functions of the
    /// multiplicities.
    fn thermodynamics(&self) -> (Columns, Columns, Columns) {
        let (v, d) = (self.volume, self.dim);
        let n = self.raw(|f| f.count / v);
        let e = self.raw(|f| f.energy / v);
        let p = self.raw(|f| (0..d).map(|a| f.stress[i2(a, a)]).sum::<f64>() / (d as f64 * v));
        (n, e, p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoRoute {
    pub name: String,
    pub first: Estimate,
    pub second: Estimate,
    /// first − second with a paired bootstrap error.
    pub difference: Estimate,
}

impl TwoRoute {
    pub fn sigma(&self) -> f64 {
        self.difference.sigma_distance(0.0)
    }

    pub fn consistent(&self, sigmas: f64) -> bool {
        self.sigma() <= sigmas
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenKubo {
    pub eta: Estimate,
    pub zeta: Estimate,
    pub kappa: Estimate,
    pub zeta_routes: TwoRoute,
    pub kappa_routes: TwoRoute,
    pub isotropy_max_sigma: f64,
    pub anisotropic: bool,
}

/// η, ζ and κ, each with its second route.
pub fn green_kubo_coefficients(s: &EnsembleSeries, temperature: f64) -> Result<GreenKubo> {
    let d = s.dim;
    let t = temperature;
    let nb = s.blocks();
    let ws = s.projected_stress()?;

    let mut channels = Vec::with_capacity(d.pow(4));
    for mu in 0..d {
        for l in 0..d {
            for b in 0..d {
                for k in 0..d {
                    channels.push(s.correlate(&format!("wbar{mu}{l}.wbar{b}{k}"), &ws[mu * d + l], &ws[b * d + k])?);
                }
            }
        }
    }
    let fit = isotropy_decompose(d, |mu, l, b, k| &channels[((mu * d + l) * d + b) * d + k])?;

    let eta = Integral::new(fit.c.clone(), 1.0 / (2.0 * t), Weighting::Plain, None);

    let trace = s.projected(|f| (0..d).map(|a| f.stress[i2(a, a)]).sum())?;
    let tt = s.correlate("trace.trace", &trace, &trace)?;
    let zeta_a = Integral::new(tt, 1.0 / (2.0 * (d * d) as f64 * t), Weighting::Plain, None);
    let win = Some(zeta_a.window);
    // second route from the off-trace channels only: c′ from C^{aa,bb} and
    // c from C^{ab,ab}, a ≠ b; the first route is dominated by C^{aa,aa}
    let ch = |mu: usize, l: usize, b: usize, k: usize| &channels[((mu * d + l) * d + b) * d + k];
    let mut cross_diag = Vec::new();
    let mut shear = Vec::new();
    for a in 0..d {
        for b in (0..d).filter(|&b| b != a) {
            cross_diag.push((1.0, ch(a, a, b, b)));
            shear.push((1.0, ch(a, b, a, b)));
        }
    }
    let c_prime = Integral::new(CorrelationAccumulator::combine("wbar_aa.wbar_bb", &cross_diag)?, 1.0 / (2.0 * t * cross_diag.len() as f64), Weighting::Plain, win);
    let eta_b = Integral::new(CorrelationAccumulator::combine("wbar_ab.wbar_ab", &shear)?, 1.0 / (2.0 * t * shear.len() as f64), Weighting::Plain, win);
    let zeta_b = |w: &[f64]| c_prime.eval(w) + 2.0 / d as f64 * eta_b.eval(w);
    let zeta_est = zeta_a.estimate();
    let zeta_routes = TwoRoute {
        name: "zeta".into(),
        first: zeta_est.clone(),
        second: estimate(nb, &zeta_b, zeta_a.window, s.dt, true),
        difference: estimate(nb, &|w| zeta_a.eval(w) - zeta_b(w), zeta_a.window, s.dt, zeta_a.converged),
    };

    let kappa_scale = 1.0 / (2.0 * d as f64 * t * t);
    let mut proj = Vec::new();
    let mut raw = Vec::new();
    for k in 0..d {
        let wb = s.projected(|f| f.heat[k])?;
        proj.push(s.correlate(&format!("hbar{k}.hbar{k}"), &wb, &wb)?);
        let h = s.raw(|f| f.heat[k]);
        raw.push(s.correlate(&format!("h{k}.h{k}"), &h, &h)?);
    }
    let sum = |label: &str, v: &[CorrelationAccumulator]| {
        let terms: Vec<(f64, &CorrelationAccumulator)> = v.iter().map(|a| (1.0, a)).collect();
        CorrelationAccumulator::combine(label, &terms)
    };
    let kappa_p = Integral::new(sum("hbar.hbar", &proj)?, kappa_scale, Weighting::Plain, None);
    let raw_sum = sum("h.h", &raw)?;
    let (rho, rho_e, p) = s.thermodynamics();
    // d·T(ρe+P)²/ρ evaluated on the same multiplicities
    let subtraction = |w: &[f64]| {
        let (r, re, pp) = (wmean(&rho, w, &s.group), wmean(&rho_e, w, &s.group), wmean(&p, w, &s.group));
        d as f64 * t * (re + pp).powi(2) / r
    };
    let kappa_raw = |w: &[f64]| {
        let c: Vec<f64> = raw_sum.weighted_mean(w).iter().map(|x| x - subtraction(w)).collect();
        kappa_scale * quad(&c, s.dt, kappa_p.window, Weighting::Plain)
    };
    let kappa_est = kappa_p.estimate();
    let kappa_routes = TwoRoute {
        name: "kappa".into(),
        first: kappa_est.clone(),
        second: estimate(nb, &kappa_raw, kappa_p.window, s.dt, true),
        difference: estimate(nb, &|w| kappa_p.eval(w) - kappa_raw(w), kappa_p.window, s.dt, kappa_p.converged),
    };

    let mut eta_est = eta.estimate();
    if fit.anisotropic {
        eta_est.flags.push("anisotropic momentum-current tensor".into());
    }
    Ok(GreenKubo {
        eta: eta_est,
        zeta: zeta_est,
        kappa: kappa_est,
        zeta_routes,
        kappa_routes,
        isotropy_max_sigma: fit.max_sigma,
        anisotropic: fit.anisotropic,
    })
}

/// Static coefficients: Y₂ and ω̄₂ from first, Y₁ and ω̄₁ from second
/// T-derivatives (at constant P) of the Gibbs average of Φ̄.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticCoefficients {
    pub y1: Estimate,
    pub y2: Estimate,
    pub omega_bar1: Estimate,
    pub omega_bar2: Estimate,
    /// Y₂ from the (α,β) and (β,α) channels separately, for the symmetry check.
    pub y2_channels: Vec<Estimate>,
    pub warnings: Vec<String>,
}

struct StaticStats {
    group: Vec<usize>,
    count: Columns,
    energy: Columns,
    chem: ChemicalDerivatives,
    volume: f64,
}

impl StaticStats {
    /// Σ_μ λ′_μ Cov(z_μ, Φ)/V.
    fn first(&self, phi: &Columns, w: &[f64]) -> f64 {
        (self.chem.lambda0_prime * wcov(&self.count, phi, w, &self.group) + self.chem.lambdae_prime * wcov(&self.energy, phi, w, &self.group)) / self.volume
    }

    /// Σ_μ λ″_μ Cov(z_μ, Φ)/V + Σ_{μν} λ′_μλ′_ν κ₃(z_μ, z_ν, Φ)/V.
    fn second(&self, phi: &Columns, w: &[f64]) -> f64 {
        let c = &self.chem;
        let z = [(&self.count, c.lambda0_prime), (&self.energy, c.lambdae_prime)];
        let mut s = c.lambda0_second * wcov(&self.count, phi, w, &self.group) + c.lambdae_second * wcov(&self.energy, phi, w, &self.group);
        for (za, la) in z {
            for (zb, lb) in z {
                s += la * lb * wcum3(za, zb, phi, w, &self.group);
            }
        }
        s / self.volume
    }
}

pub fn static_y_coefficients(s: &EnsembleSeries, chem: &ChemicalDerivatives) -> Result<StaticCoefficients> {
    let d = s.dim;
    let nb = s.blocks();
    let st = StaticStats {
        group: s.group.clone(),
        count: s.raw(|f| f.count),
        energy: s.raw(|f| f.energy),
        chem: *chem,
        volume: s.volume,
    };
    let mut warnings = Vec::new();
    let frames = s.ensemble.frame_count();
    if frames < 1000 {
        warnings.push(format!("only {frames} snapshots for the three-point estimator"));
    }
    let phi: Vec<Columns> = (0..d * d).map(|k| s.raw(|f| f.phi_pairs[i2(k / d, k % d)])).collect();
    let pairs = s.off_diagonal_pairs();
    let npairs = pairs.len() as f64;
    let y2 = |w: &[f64]| pairs.iter().map(|&(a, b)| st.first(&phi[a * d + b], w)).sum::<f64>() / (6.0 * npairs);
    let y1 = |w: &[f64]| pairs.iter().map(|&(a, b)| st.second(&phi[a * d + b], w)).sum::<f64>() / (6.0 * npairs);
    let om2 = |w: &[f64]| (0..d).map(|g| st.first(&phi[g * d + g], w)).sum::<f64>() / (6.0 * d as f64);
    let om1 = |w: &[f64]| (0..d).map(|g| st.second(&phi[g * d + g], w)).sum::<f64>() / (6.0 * d as f64);
    let y2_channels = pairs
        .iter()
        .map(|&(a, b)| estimate(nb, &|w| st.first(&phi[a * d + b], w) / 6.0, 0, 0.0, true))
        .collect();
    Ok(StaticCoefficients {
        y1: estimate(nb, &y1, 0, 0.0, true),
        y2: estimate(nb, &y2, 0, 0.0, true),
        omega_bar1: estimate(nb, &om1, 0, 0.0, true),
        omega_bar2: estimate(nb, &om2, 0, 0.0, true),
        y2_channels,
        warnings,
    })
}

/// Iterated time integrals ∫ds∫_s dτ of the three-current and composite
/// channels, reduced to the index patterns the assembly needs.
pub struct DoubleTime {
    pub parts: Vec<(String, Integral)>,
}

impl DoubleTime {
    pub fn get(&self, name: &str) -> &Integral {
        &self.parts.iter().find(|(n, _)| n == name).expect("known coefficient").1
    }
}

pub fn double_time_integrals(s: &EnsembleSeries) -> Result<DoubleTime> {
    let d = s.dim;
    let ws = s.projected_stress()?;
    let momentum: Vec<Columns> = (0..d).map(|a| s.centred(|f| f.momentum[a])).collect();
    let heat: Vec<Columns> = (0..d).map(|a| s.centred(|f| f.heat[a])).collect();
    let tensor = |g: fn(&TotalsFrame) -> &[f64; 9]| -> Vec<Columns> {
        (0..d * d).map(|k| s.centred(|f| g(f)[i2(k / d, k % d)])).collect()
    };
    let drift = tensor(|f| &f.drift);
    let conduction = tensor(|f| &f.conduction);
    let nonlocal = tensor(|f| &f.nonlocal);
    let pairs = s.off_diagonal_pairs();
    let mut parts = Vec::new();
    let tau = |acc| Integral::new(acc, 1.0, Weighting::Tau, None);

    // a: (P, h), b: (P, P), c: (h, h) against w̄ at the origin
    for (name, x, y) in [("a", &momentum, &heat), ("b", &momentum, &momentum), ("c", &heat, &heat)] {
        let mut p1 = Vec::new();
        let mut p23 = Vec::new();
        for &(a, b) in &pairs {
            p1.push(s.correlate3(&format!("{name}1"), &x[a], &y[a], &ws[b * d + b])?);
            p23.push(s.correlate3(&format!("{name}2"), &x[a], &y[b], &ws[b * d + a])?);
            p23.push(s.correlate3(&format!("{name}3"), &x[a], &y[b], &ws[a * d + b])?);
        }
        parts.push((format!("{name}1"), tau(s.mean_of(&format!("{name}1"), &p1)?)));
        parts.push((format!("{name}2"), tau(s.mean_of(&format!("{name}2"), &p23)?)));
    }

    let mut h1 = Vec::new();
    let mut h2 = Vec::new();
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    let mut g2 = Vec::new();
    for &(a, b) in &pairs {
        h1.push(s.correlate("h1", &ws[a * d + a], &ws[b * d + b])?);
        h2.push(s.correlate("h2", &ws[b * d + a], &ws[b * d + a])?);
        d1.push(s.correlate("d1", &drift[a * d + a], &ws[b * d + b])?);
        d2.push(s.correlate("d2", &drift[a * d + b], &ws[b * d + a])?);
        g2.push(s.correlate("g2", &conduction[a * d + b], &ws[a * d + b])?);
    }
    let mut g1 = Vec::new();
    let mut f1 = Vec::new();
    for b in 0..d {
        for g in 0..d {
            g1.push(s.correlate("g1", &conduction[g * d + g], &ws[b * d + b])?);
            f1.push(s.correlate("f1", &nonlocal[g * d + g], &ws[b * d + b])?);
        }
    }
    // (1/d)Σ_γ then the mean over β equals the mean over all (β, γ)
    for (name, v) in [("h1", h1), ("h2", h2), ("d1", d1), ("d2", d2), ("g1", g1), ("g2", g2), ("f1", f1)] {
        parts.push((name.to_string(), tau(s.mean_of(name, &v)?)));
    }
    Ok(DoubleTime { parts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportCoefficients {
    pub dim: usize,
    pub temperature: f64,
    pub density: f64,
    pub eta: Estimate,
    pub zeta: Estimate,
    pub kappa: Estimate,
    pub y1: Estimate,
    pub y2: Estimate,
    pub omega_bar1: Estimate,
    pub omega_bar2: Estimate,
    pub z1: Estimate,
    pub z2: Estimate,
    pub phi1: Estimate,
    pub phi2: Estimate,
    pub k1: Estimate,
    pub k2: Estimate,
    pub omega1: Estimate,
    pub omega2: Estimate,
    /// a₁, a₂, …, f₁.
    pub parts: Vec<(String, Estimate)>,
}

impl TransportCoefficients {
    pub fn entries(&self) -> Vec<(String, &Estimate)> {
        let mut v: Vec<(String, &Estimate)> = [
            ("eta", &self.eta),
            ("zeta", &self.zeta),
            ("kappa", &self.kappa),
            ("Y1", &self.y1),
            ("Y2", &self.y2),
            ("omega_bar1", &self.omega_bar1),
            ("omega_bar2", &self.omega_bar2),
            ("Z1", &self.z1),
            ("Z2", &self.z2),
            ("phi1", &self.phi1),
            ("phi2", &self.phi2),
            ("K1", &self.k1),
            ("K2", &self.k2),
            ("omega1", &self.omega1),
            ("omega2", &self.omega2),
        ]
        .into_iter()
        .map(|(n, e)| (n.to_string(), e))
        .collect();
        v.extend(self.parts.iter().map(|(n, e)| (n.clone(), e)));
        v
    }

    /// `name,value,stderr,window,flags`; flags joined by `;`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "name,value,stderr,window,flags")?;
        for (name, e) in self.entries() {
            writeln!(w, "{name},{:e},{:e},{:e},{}", e.value, e.stderr, e.window_time, e.flags.join(";"))?;
        }
        Ok(())
    }
}

/// K_i = Y_i + Z_i and ω_i = ω̄_i + φ_i from the static and double-time
/// parts. The sums are formed replica by replica, so their errors include
/// the correlation between the parts.
pub fn assemble_coefficients(
    s: &EnsembleSeries,
    temperature: f64,
    chem: &ChemicalDerivatives,
    gk: &GreenKubo,
    dt: &DoubleTime,
) -> Result<TransportCoefficients> {
    let d = s.dim;
    let nb = s.blocks();
    let t = temperature;
    let (l0p, l0s, lep, les) = (chem.lambda0_prime, chem.lambda0_second, chem.lambdae_prime, chem.lambdae_second);
    let count = s.raw(|f| f.count);
    let energy = s.raw(|f| f.energy);
    let phi: Vec<Columns> = (0..d * d).map(|k| s.raw(|f| f.phi_pairs[i2(k / d, k % d)])).collect();
    let st = StaticStats { group: s.group.clone(), count, energy, chem: *chem, volume: s.volume };
    let pairs = s.off_diagonal_pairs();
    let np = pairs.len() as f64;
    let y2 = |w: &[f64]| pairs.iter().map(|&(a, b)| st.first(&phi[a * d + b], w)).sum::<f64>() / (6.0 * np);
    let y1 = |w: &[f64]| pairs.iter().map(|&(a, b)| st.second(&phi[a * d + b], w)).sum::<f64>() / (6.0 * np);
    let om2 = |w: &[f64]| (0..d).map(|g| st.first(&phi[g * d + g], w)).sum::<f64>() / (6.0 * d as f64);
    let om1 = |w: &[f64]| (0..d).map(|g| st.second(&phi[g * d + g], w)).sum::<f64>() / (6.0 * d as f64);

    let v = |n: &str, w: &[f64]| dt.get(n).eval(w);
    let z1 = |w: &[f64]| {
        4.0 * v("a2", w) * l0p * lep
            + 2.0 * v("b2", w) * l0p * l0p
            + 2.0 * v("c2", w) * lep * lep
            + les * (v("h2", w) + 2.0 * v("d2", w) + v("g2", w))
    };
    let z2 = |w: &[f64]| 2.0 * lep * v("d2", w) + 2.0 * l0p * t * v("h2", w) + lep * v("g2", w);
    let phi1 = |w: &[f64]| {
        l0s * v("h1", w)
            + les * v("d1", w)
            + v("a1", w) * lep * l0p
            + v("b1", w) * l0p * l0p
            + v("c1", w) * lep * lep
            + les * (v("g1", w) + v("f1", w))
    };
    let phi2 = |w: &[f64]| l0p * v("h1", w) + lep * v("d1", w) + lep * (v("g1", w) + v("f1", w));

    let all_converged = dt.parts.iter().all(|(_, i)| i.converged);
    let win = dt.parts.iter().map(|(_, i)| i.window).max().unwrap_or(0);
    let dyn_est = |f: &(dyn Fn(&[f64]) -> f64 + Sync)| {
        let mut e = estimate(nb, f, win, s.dt, all_converged);
        e.flags.retain(|f| f != "no plateau within max_lag");
        if !all_converged {
            e.flags.push("unreliable: a double-time integral did not converge".into());
        }
        e
    };
    let stat = |f: &(dyn Fn(&[f64]) -> f64 + Sync)| estimate(nb, f, 0, 0.0, true);

    let k1: Stat = Box::new(|w| y1(w) + z1(w));
    let k2: Stat = Box::new(|w| y2(w) + z2(w));
    let o1: Stat = Box::new(|w| om1(w) + phi1(w));
    let o2: Stat = Box::new(|w| om2(w) + phi2(w));
    let parts = dt.parts.iter().map(|(n, i)| (n.clone(), i.estimate())).collect();
    let density = wmean(&s.raw(|f| f.count), &vec![1.0; nb], &s.group) / s.volume;
    Ok(TransportCoefficients {
        dim: d,
        temperature: t,
        density,
        eta: gk.eta.clone(),
        zeta: gk.zeta.clone(),
        kappa: gk.kappa.clone(),
        y1: stat(&y1),
        y2: stat(&y2),
        omega_bar1: stat(&om1),
        omega_bar2: stat(&om2),
        z1: dyn_est(&z1),
        z2: dyn_est(&z2),
        phi1: dyn_est(&phi1),
        phi2: dyn_est(&phi2),
        k1: dyn_est(&*k1),
        k2: dyn_est(&*k2),
        omega1: dyn_est(&*o1),
        omega2: dyn_est(&*o2),
        parts,
    })
}

/// Galilean-invariance report.
///
/// In a Gibbs state boosted by a, ⟨X(τ)Y(0)⟩ equals the unboosted average of
/// the boosted observables. Differentiating at a = 0 with X = h̄^γ and
/// Y = w̄^{βk} (both orthogonal to the slow modes) gives
/// (1/T)⟨P_μ h̄^γ(τ) w̄^{βk}(0)⟩ − ⟨δh̄(τ) w̄^{βk}(0)⟩ − ⟨h̄^γ(τ) δw̄^{βk}(0)⟩ = 0
/// at every τ, where δ is the boost derivative along μ. δh̄ is w̄^{μγ} plus
/// slow modes. The cross coefficient is the time integral of the left side,
/// averaged over channels, in the units of η.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalileanReport {
    /// ∫G averaged over the channels with a nonzero reference, plus bias.
    pub cross: Estimate,
    /// ∫G / ∫C[w̄^{μγ}; w̄^{βk}], without bias.
    pub relative: Estimate,
    /// (1/T)∫C[P_μh̄^γ; w̄^{βk}], the reweighting term.
    pub triple: Estimate,
    /// ∫C[w̄^{μγ}; w̄^{βk}], the normalisation.
    pub reference: Estimate,
    /// ∫C(P_γ(τ); w̄^{βk}(0)), β ≠ k.
    pub momentum_overlap: Estimate,
    pub bias: f64,
    pub sigmas: f64,
    pub passed: bool,
}

/// `bias` is added to the cross coefficient. The test passes when both the
/// cross coefficient and the momentum overlap are within 3σ of zero.
pub fn galilean_null_test(s: &EnsembleSeries, temperature: f64, window: usize, bias: f64) -> Result<GalileanReport> {
    let d = s.dim;
    let t = temperature;
    let nb = s.blocks();
    let ws = s.projected_stress()?;
    let heat: Vec<Columns> = (0..d).map(|g| s.projected(|f| f.heat[g])).collect::<Result<_>>()?;
    let heat_c: Vec<Vec<f64>> = (0..d).map(|g| s.projection_coefficients(|f| f.heat[g])).collect::<Result<_>>()?;
    let momentum: Vec<Columns> = (0..d).map(|a| s.raw(|f| f.momentum[a])).collect();
    let count = s.raw(|f| f.count);
    let energy = s.raw(|f| f.energy);
    let pairs = s.off_diagonal_pairs();
    // Σ_i coef_i·x_i, frame by frame
    let lin = |terms: &[(f64, &Columns)]| -> Columns {
        (0..count.len())
            .map(|tr| (0..count[tr].len()).map(|i| terms.iter().map(|(c, x)| c * x[tr][i]).sum()).collect())
            .collect()
    };
    let mut triple = Vec::new();
    let mut boost = Vec::new();
    let mut reference = Vec::new();
    for &(b, k) in &pairs {
        let y = &ws[b * d + k];
        let cy = s.projection_coefficients(|f| f.stress[i2(b, k)])?;
        // isotropy leaves (μ,γ) = (k,β) and (β,k)
        for (mu, g) in [(k, b), (b, k)] {
            let px: Columns = momentum[mu]
                .iter()
                .zip(&heat[g])
                .map(|(p, x)| p.iter().zip(x).map(|(p, x)| p * x / t).collect())
                .collect();
            triple.push(s.correlate("P.hbar.wbar", &px, y)?);
            reference.push(s.correlate("wbar.wbar", &ws[mu * d + g], y)?);
            // boost derivatives of h̄^γ and w̄^{βk} beyond w̄^{μγ}
            let cx = &heat_c[g];
            let mut dx_terms = vec![(-cx[1 + mu], &count), (-cx[d + 1], &momentum[mu])];
            if mu == g {
                dx_terms.push((1.0, &energy));
            }
            let stress = s.raw(|f| f.stress[i2(mu, g)]);
            dx_terms.push((1.0, &stress));
            let wref = s.projected(|f| f.stress[i2(mu, g)])?;
            dx_terms.push((-1.0, &wref));
            let dx = lin(&dx_terms);
            let mut dy_terms = vec![(-cy[1 + mu], &count), (-cy[d + 1], &momentum[mu])];
            if b == mu {
                dy_terms.push((1.0, &momentum[k]));
            }
            if k == mu {
                dy_terms.push((1.0, &momentum[b]));
            }
            let dy = lin(&dy_terms);
            let c1 = s.correlate("dX.Y", &dx, y)?;
            let c2 = s.correlate("X.dY", &heat[g], &dy)?;
            boost.push(CorrelationAccumulator::combine("slow boost terms", &[(1.0, &c1), (1.0, &c2)])?);
        }
    }
    let per = |accs: &[CorrelationAccumulator]| accs.iter().map(|a| Integral::new(a.clone(), 1.0, Weighting::Plain, Some(window))).collect::<Vec<_>>();
    let tri_c = per(&triple);
    let slow = Integral::new(s.mean_of("slow boost terms", &boost)?, 1.0, Weighting::Plain, Some(window));
    let refi = Integral::new(s.mean_of("wbar.wbar", &reference)?, 1.0, Weighting::Plain, Some(window));
    let nc = tri_c.len() as f64;
    let tri_eval = |w: &[f64]| tri_c.iter().map(|a| a.eval(w)).sum::<f64>() / nc;
    let g = |w: &[f64]| tri_eval(w) - slow.eval(w) - refi.eval(w);
    let cross = estimate(nb, &|w| g(w) + bias, window, s.dt, true);
    let relative = estimate(nb, &|w| g(w) / refi.eval(w), window, s.dt, true);
    let triple = estimate(nb, &tri_eval, window, s.dt, true);

    let mut overlap = Vec::new();
    for &(b, k) in &pairs {
        for gm in 0..d {
            overlap.push(s.correlate("P.wbar", &momentum[gm], &ws[b * d + k])?);
        }
    }
    let momentum_overlap = Integral::new(s.mean_of("P.wbar", &overlap)?, 1.0, Weighting::Plain, Some(window)).estimate();
    let sigmas = cross.sigma_distance(0.0);
    let passed = sigmas <= 3.0 && momentum_overlap.sigma_distance(0.0) <= 3.0;
    Ok(GalileanReport { cross, relative, triple, reference: refi.estimate(), momentum_overlap, bias, sigmas, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumRule {
    pub name: String,
    pub measured: Estimate,
    pub target: f64,
    /// Residual measured − target, with a bootstrap error that includes the
    /// fluctuation of the target's ensemble inputs.
    pub residual: Estimate,
    pub sigmas: f64,
}

impl SumRule {
    pub fn passed(&self, sigmas: f64) -> bool {
        self.sigmas <= sigmas
    }
}

/// Static sum rules on the ensemble's own ρ, e and P.
pub fn sum_rules(s: &EnsembleSeries, temperature: f64) -> Result<Vec<SumRule>> {
    let d = s.dim;
    let nb = s.blocks();
    let t = temperature;
    let v = s.volume;
    let momentum: Vec<Columns> = (0..d).map(|a| s.raw(|f| f.momentum[a])).collect();
    let heat: Vec<Columns> = (0..d).map(|a| s.raw(|f| f.heat[a])).collect();
    let (rho, rho_e, p) = s.thermodynamics();
    let mut out = Vec::new();
    let mut push = |name: &str, meas: &(dyn Fn(&[f64]) -> f64 + Sync), target: &(dyn Fn(&[f64]) -> f64 + Sync)| {
        let measured = estimate(nb, meas, 0, 0.0, true);
        let residual = estimate(nb, &|w| meas(w) - target(w), 0, 0.0, true);
        let tv = target(&vec![1.0; nb]);
        let sigmas = residual.sigma_distance(0.0);
        out.push(SumRule { name: name.into(), measured, target: tv, residual, sigmas });
    };
    let dd = d as f64;
    push(
        "w0.w0",
        &|w| (0..d).map(|a| wcov(&momentum[a], &momentum[a], w, &s.group)).sum::<f64>() / (dd * v),
        &|w| wmean(&rho, w, &s.group) * t,
    );
    push(
        "w0.w0 off-diagonal",
        &|w| (0..d).flat_map(|a| (0..d).filter(move |&b| b != a).map(move |b| (a, b))).map(|(a, b)| wcov(&momentum[a], &momentum[b], w, &s.group)).sum::<f64>() / v,
        &|_| 0.0,
    );
    push(
        "w0.we",
        &|w| (0..d).map(|a| wcov(&momentum[a], &heat[a], w, &s.group)).sum::<f64>() / (dd * v),
        &|w| t * (wmean(&rho_e, w, &s.group) + wmean(&p, w, &s.group)),
    );
    // the slow part of the energy current is ((ρe+P)/ρ)P, so its static
    // autocorrelation is Cov(h,P)²/Var(P)
    push(
        "we.we projected",
        &|w| {
            (0..d)
                .map(|a| wcov(&momentum[a], &heat[a], w, &s.group).powi(2) / wcov(&momentum[a], &momentum[a], w, &s.group))
                .sum::<f64>()
                / (dd * v)
        },
        &|w| t * (wmean(&rho_e, w, &s.group) + wmean(&p, w, &s.group)).powi(2) / wmean(&rho, w, &s.group),
    );
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityPoint {
    pub rho: f64,
    pub temperature: f64,
    pub pressure: f64,
    /// ρ·dλ⁰/dT|_P + (ρe+P)/T².
    pub residual: f64,
    pub error: f64,
}

impl IdentityPoint {
    pub fn passed(&self) -> bool {
        self.residual.abs() < 3.0 * self.error
    }
}

/// dλ⁰/dT along the isobar through (ρ, T), by central differences with
/// step h on the table's own λ⁰.
fn isobaric_lambda0_slope(eos: &dyn StateEquation, rho: f64, t: f64, h: f64) -> Result<f64> {
    let p = eos.pressure(rho, t).value;
    let at = |tt: f64| -> Result<f64> {
        let (r, _) = eos.solve_density(p, tt, rho, 1e-13, 100)?;
        Ok(eos.log_activity(r, tt))
    };
    Ok((at(t + h)? - at(t - h)?) / (2.0 * h))
}

fn identity_residual_with(eos: &dyn StateEquation, rho: f64, t: f64, h: f64) -> Result<f64> {
    let slope = isobaric_lambda0_slope(eos, rho, t, h)?;
    let p = eos.pressure(rho, t).value;
    let e = eos.energy(rho, t).value;
    Ok(slope * rho + (rho * e + p) / (t * t))
}

fn identity_residual(eos: &dyn StateEquation, rho: f64, t: f64) -> Result<f64> {
    identity_residual_with(eos, rho, t, 1e-3 * t)
}

/// Thermodynamic identity at `points` random interior points of a measured
/// table. The error is the scatter of the residual over tables rebuilt from
/// node values perturbed by their standard errors, combined with the
/// finite-difference truncation estimated from a doubled step.
pub fn thermodynamic_identity(table: &StateEquationTable, points: usize, replicas: usize, seed: u64) -> Result<Vec<IdentityPoint>> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = seeded_rng(seed);
    let (r0, r1) = (table.densities[0], *table.densities.last().unwrap());
    let (t0, t1) = (table.temperatures[0], *table.temperatures.last().unwrap());
    // keep the isobar and its FD stencil inside the table
    let pts: Vec<(f64, f64)> = (0..points)
        .map(|_| {
            let r = r0 + (r1 - r0) * (0.3 + 0.4 * rng.gen::<f64>());
            let t = t0 + (t1 - t0) * (0.3 + 0.4 * rng.gen::<f64>());
            (r, t)
        })
        .collect();
    let base: Vec<f64> = pts.iter().map(|&(r, t)| identity_residual(table, r, t)).collect::<Result<_>>()?;
    let mut sum2 = vec![0.0; points];
    let truncation: Vec<f64> = pts
        .iter()
        .zip(&base)
        .map(|(&(r, t), b)| Ok((identity_residual_with(table, r, t, 2e-3 * t)? - b).abs() / 3.0))
        .collect::<Result<_>>()?;
    for _ in 0..replicas {
        let mut jitter = |v: &[f64], se: &[f64]| -> Vec<f64> {
            v.iter().zip(se).map(|(x, s)| { let z: f64 = StandardNormal.sample(&mut rng); x + s * z }).collect()
        };
        let pp = jitter(&table.pressure, &table.stderr_pressure);
        let ee = jitter(&table.energy, &table.stderr_energy);
        let rep = StateEquationTable::from_measurements(
            table.dim,
            table.densities.clone(),
            table.temperatures.clone(),
            pp,
            ee,
            table.stderr_pressure.clone(),
            table.stderr_energy.clone(),
            table.flagged.clone(),
            Some(table.entropy[0]),
        )?;
        for (k, &(r, t)) in pts.iter().enumerate() {
            let x = identity_residual(&rep, r, t)? - base[k];
            sum2[k] += x * x;
        }
    }
    Ok(pts
        .iter()
        .zip(base)
        .zip(sum2)
        .zip(truncation)
        .map(|(((&(r, t), res), s2), fd)| IdentityPoint {
            rho: r,
            temperature: t,
            pressure: table.pressure(r, t).value,
            residual: res,
            error: (s2 / replicas.max(2) as f64 + fd * fd).sqrt(),
        })
        .collect())
}
