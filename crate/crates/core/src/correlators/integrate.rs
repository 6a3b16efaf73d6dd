//! Time integrals of correlation curves: plateau window, trapezoid and
//! τ-weighted quadrature, block-bootstrap errors, and the Green-Kubo
//! coefficients and isotropic decomposition built on them.

use super::series::{BlockSums, CorrelationAccumulator};
use crate::error::{Error, Result};
use crate::gibbs::seeded_rng;
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Consecutive lags that must sit inside the noise band to end the window.
pub const PLATEAU_RUN: usize = 10;
pub const BOOTSTRAP_REPLICAS: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    /// Last lag included in the integral, and the corresponding time.
    pub window: usize,
    pub window_time: f64,
    pub converged: bool,
    pub flags: Vec<String>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, window: 0, window_time: 0.0, converged: true, flags: Vec::new() }
    }

    /// |value − target| in units of stderr (infinite if stderr is zero and
    /// the values differ).
    pub fn sigma_distance(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else if self.stderr == 0.0 {
            f64::INFINITY
        } else {
            d / self.stderr
        }
    }
}

/// First lag k such that |C| < 2·floor on lags k..k+PLATEAU_RUN, with
/// floor = max(stderr, 1e-10·|C(0)|).
pub fn plateau_window(mean: &[f64], stderr: &[f64]) -> Option<usize> {
    let c0 = mean.first().map_or(0.0, |c| c.abs());
    let inside = |k: usize| {
        let floor = stderr[k].max(1e-10 * c0).max(f64::MIN_POSITIVE);
        mean[k].abs() < 2.0 * floor
    };
    let n = mean.len();
    (0..n.saturating_sub(PLATEAU_RUN - 1)).find(|&k| (k..k + PLATEAU_RUN).all(inside))
}

pub fn trapezoid(c: &[f64], dt: f64, upto: usize) -> f64 {
    if upto == 0 {
        return 0.0;
    }
    dt * (0.5 * (c[0] + c[upto]) + c[1..upto].iter().sum::<f64>())
}

/// ∫₀ τ C(τ) dτ by the trapezoid rule; equals the iterated integral
/// ∫₀ds∫_s dτ C(τ).
pub fn tau_weighted(c: &[f64], dt: f64, upto: usize) -> f64 {
    if upto == 0 {
        return 0.0;
    }
    let tc: Vec<f64> = c.iter().enumerate().map(|(k, v)| k as f64 * dt * v).collect();
    trapezoid(&tc, dt, upto)
}

/// Bootstrap standard error of a statistic of block multiplicities.
pub fn bootstrap_stderr(blocks: usize, seed: u64, stat: impl Fn(&[f64]) -> f64) -> f64 {
    if blocks < 2 {
        return 0.0;
    }
    let mut rng = seeded_rng(seed);
    let mut vals = Vec::with_capacity(BOOTSTRAP_REPLICAS);
    let mut w = vec![0.0; blocks];
    for _ in 0..BOOTSTRAP_REPLICAS {
        w.iter_mut().for_each(|x| *x = 0.0);
        for _ in 0..blocks {
            w[rng.gen_range(0..blocks)] += 1.0;
        }
        vals.push(stat(&w));
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    Plain,
    Tau,
}

pub fn quad(c: &[f64], dt: f64, upto: usize, w: Weighting) -> f64 {
    match w {
        Weighting::Plain => trapezoid(c, dt, upto),
        Weighting::Tau => tau_weighted(c, dt, upto),
    }
}

/// Window from the plateau rule, or the last lag (flagged) if none.
pub fn choose_window(acc: &CorrelationAccumulator) -> (usize, bool) {
    match plateau_window(&acc.mean(), &acc.stderr()) {
        Some(k) => (k, true),
        None => (acc.lags().saturating_sub(1), false),
    }
}

/// scale·∫C over a window (the plateau window if `window` is None), with a
/// block-bootstrap error at fixed window.
pub fn integrate(acc: &CorrelationAccumulator, scale: f64, weighting: Weighting, window: Option<usize>) -> Result<Estimate> {
    if acc.lags() == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let (window, converged) = match window {
        Some(w) => (w.min(acc.lags() - 1), true),
        None => choose_window(acc),
    };
    let value = scale * quad(&acc.mean(), acc.dt, window, weighting);
    let stderr = bootstrap_stderr(acc.blocks.len(), 0x00b0_0757, |w| {
        scale * quad(&acc.weighted_mean(w), acc.dt, window, weighting)
    });
    let mut flags = Vec::new();
    if !converged {
        flags.push("no plateau within max_lag".to_string());
    }
    Ok(Estimate { value, stderr, window, window_time: window as f64 * acc.dt, converged, flags })
}

/// η = (1/2T)∫C for an off-diagonal momentum-current channel.
pub fn green_kubo_shear(acc: &CorrelationAccumulator, temperature: f64) -> Result<Estimate> {
    integrate(acc, 1.0 / (2.0 * temperature), Weighting::Plain, None)
}

/// ζ = (1/2d²T)∫C for the centred trace-trace channel.
pub fn green_kubo_bulk(acc: &CorrelationAccumulator, temperature: f64, dim: usize) -> Result<Estimate> {
    integrate(acc, 1.0 / (2.0 * (dim * dim) as f64 * temperature), Weighting::Plain, None)
}

/// Σ_k C_k(τ) − `subtraction`, as one accumulator.
pub fn subtracted_sum(channels: &[&CorrelationAccumulator], subtraction: f64) -> Result<CorrelationAccumulator> {
    let terms: Vec<(f64, &CorrelationAccumulator)> = channels.iter().map(|c| (1.0, *c)).collect();
    let mut sum = CorrelationAccumulator::combine("energy-current sum", &terms)?;
    for b in sum.blocks.iter_mut() {
        for (s, &c) in b.sums.iter_mut().zip(&b.counts) {
            *s -= subtraction * c as f64;
        }
    }
    Ok(sum)
}

/// κ = (1/2dT²)∫[Σ_k C_k − subtraction].
pub fn green_kubo_conductivity(
    channels: &[&CorrelationAccumulator],
    temperature: f64,
    subtraction: f64,
    dim: usize,
    window: Option<usize>,
) -> Result<Estimate> {
    let sum = subtracted_sum(channels, subtraction)?;
    integrate(&sum, 1.0 / (2.0 * dim as f64 * temperature * temperature), Weighting::Plain, window)
}

/// Isotropic form c(τ)[δ_kl δ_βμ + δ_kμ δ_βl] + c′(τ)δ_βk δ_lμ of
/// C^{μl,βk}(τ) = ⟨w^{μl}(τ) w^{βk}(0)⟩.
pub fn isotropic_pattern(mu: usize, l: usize, beta: usize, k: usize) -> (f64, f64) {
    let dl = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    (dl(k, l) * dl(beta, mu) + dl(k, mu) * dl(beta, l), dl(beta, k) * dl(l, mu))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropyFit {
    pub c: CorrelationAccumulator,
    pub c_prime: CorrelationAccumulator,
    /// Root-sum-square fit residual over channels, per lag.
    pub residual: Vec<f64>,
    /// Largest |residual|/stderr over channels and lags.
    pub max_sigma: f64,
    pub anisotropic: bool,
}

/// Least-squares fit of all d⁴ channels, `channel(μ,l,β,k)`. Linear in the
/// data, so c and c′ come back as accumulators with the same blocks.
pub fn isotropy_decompose<'a>(
    dim: usize,
    channel: impl Fn(usize, usize, usize, usize) -> &'a CorrelationAccumulator,
) -> Result<IsotropyFit> {
    let mut idx = Vec::new();
    for mu in 0..dim {
        for l in 0..dim {
            for b in 0..dim {
                for k in 0..dim {
                    idx.push((mu, l, b, k));
                }
            }
        }
    }
    let mut m = Matrix2::<f64>::zeros();
    for &(mu, l, b, k) in &idx {
        let (a, p) = isotropic_pattern(mu, l, b, k);
        m += Matrix2::new(a * a, a * p, a * p, p * p);
    }
    let inv = m.try_inverse().ok_or_else(|| Error::InvalidParameter("isotropy design is singular".into()))?;
    let mut c_terms = Vec::new();
    let mut p_terms = Vec::new();
    for &(mu, l, b, k) in &idx {
        let (a, p) = isotropic_pattern(mu, l, b, k);
        let w = inv * Vector2::new(a, p);
        let ch = channel(mu, l, b, k);
        if w[0] != 0.0 {
            c_terms.push((w[0], ch));
        }
        if w[1] != 0.0 {
            p_terms.push((w[1], ch));
        }
    }
    let c = CorrelationAccumulator::combine("c", &c_terms)?;
    let c_prime = CorrelationAccumulator::combine("c'", &p_terms)?;
    let (cm, pm) = (c.mean(), c_prime.mean());
    let lags = c.lags();
    let mut residual = vec![0.0; lags];
    let mut max_sigma: f64 = 0.0;
    for &(mu, l, b, k) in &idx {
        let (a, p) = isotropic_pattern(mu, l, b, k);
        let ch = channel(mu, l, b, k);
        let (mean, se) = (ch.mean(), ch.stderr());
        for t in 0..lags {
            let r = mean[t] - a * cm[t] - p * pm[t];
            residual[t] += r * r;
            if se[t] > 0.0 {
                max_sigma = max_sigma.max(r.abs() / se[t]);
            } else if r.abs() > 1e-12 * mean[0].abs().max(1.0) {
                max_sigma = f64::INFINITY;
            }
        }
    }
    residual.iter_mut().for_each(|r| *r = r.sqrt());
    Ok(IsotropyFit { c, c_prime, residual, max_sigma, anisotropic: max_sigma > 5.0 })
}

/// Block means of a statistic that is itself a ratio of pooled sums; used
/// where a per-block accumulator is not available.
pub fn accumulator_from_blocks(label: &str, dt: f64, blocks: Vec<BlockSums>) -> CorrelationAccumulator {
    let mut acc = CorrelationAccumulator::new(label, dt);
    for b in blocks {
        acc.push(b);
    }
    acc
}
