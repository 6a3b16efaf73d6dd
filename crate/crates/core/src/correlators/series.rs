//! Spatially integrated time correlations of gridded series.
//!
//! For a translation-invariant state ∫dξ⟨A(ξ,τ)B(0,0)⟩ equals
//! (1/V)⟨Â(τ)B̂(0)⟩ with Â = Σ_cells A·vol, so summing over every cell pair
//! reduces to a product of grid totals.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Frames of one scalar observable on a grid, frame-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GriddedSeries {
    pub cells: usize,
    pub cell_volume: f64,
    pub values: Vec<f64>,
}

impl GriddedSeries {
    pub fn new(cells: usize, cell_volume: f64, values: Vec<f64>) -> Result<Self> {
        if cells == 0 || values.len() % cells != 0 {
            return Err(Error::ShapeMismatch(format!("{} values do not fill frames of {cells} cells", values.len())));
        }
        Ok(Self { cells, cell_volume, values })
    }

    /// A single-cell series holding totals of volume `volume`.
    pub fn totals(volume: f64, totals: Vec<f64>) -> Self {
        Self { cells: 1, cell_volume: volume, values: totals.into_iter().map(|x| x / volume).collect() }
    }

    pub fn frames(&self) -> usize {
        self.values.len() / self.cells
    }

    pub fn volume(&self) -> f64 {
        self.cells as f64 * self.cell_volume
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.cells..(t + 1) * self.cells]
    }

    /// Â(t) = Σ_c A_c(t)·vol.
    pub fn integrated(&self) -> Vec<f64> {
        (0..self.frames()).map(|t| self.frame(t).iter().sum::<f64>() * self.cell_volume).collect()
    }
}

/// Lag sums and counts of one block (one trajectory).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSums {
    pub id: u64,
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
}

impl BlockSums {
    pub fn mean(&self) -> Vec<f64> {
        self.sums.iter().zip(&self.counts).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect()
    }
}

/// C(τ) accumulated over independent blocks. Merging sorts blocks by id, so
/// the pooled result does not depend on merge order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationAccumulator {
    pub label: String,
    /// Time between consecutive lags.
    pub dt: f64,
    pub blocks: Vec<BlockSums>,
}

impl CorrelationAccumulator {
    pub fn new(label: impl Into<String>, dt: f64) -> Self {
        Self { label: label.into(), dt, blocks: Vec::new() }
    }

    /// An exactly known curve, as a single block with unit counts.
    pub fn from_values(label: impl Into<String>, dt: f64, values: Vec<f64>) -> Self {
        let n = values.len();
        Self { label: label.into(), dt, blocks: vec![BlockSums { id: 0, sums: values, counts: vec![1; n] }] }
    }

    pub fn lags(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.sums.len())
    }

    pub fn push(&mut self, block: BlockSums) {
        self.blocks.push(block);
        self.blocks.sort_by_key(|b| b.id);
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.blocks.extend(other.blocks);
        self.blocks.sort_by_key(|b| b.id);
        self
    }

    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0; self.lags()];
        for b in &self.blocks {
            for (x, y) in c.iter_mut().zip(&b.counts) {
                *x += y;
            }
        }
        c
    }

    /// Pooled C(τ) with block multiplicities `weights` (all ones by default).
    pub fn weighted_mean(&self, weights: &[f64]) -> Vec<f64> {
        let n = self.lags();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        for (b, &w) in self.blocks.iter().zip(weights) {
            for k in 0..n {
                s[k] += w * b.sums[k];
                c[k] += w * b.counts[k] as f64;
            }
        }
        s.iter().zip(&c).map(|(s, &c)| if c == 0.0 { 0.0 } else { s / c }).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.weighted_mean(&vec![1.0; self.blocks.len()])
    }

    /// Standard error of C(τ) from the scatter of block means.
    pub fn stderr(&self) -> Vec<f64> {
        let nb = self.blocks.len();
        if nb < 2 {
            return vec![0.0; self.lags()];
        }
        let means: Vec<Vec<f64>> = self.blocks.iter().map(|b| b.mean()).collect();
        (0..self.lags())
            .map(|k| {
                let m = means.iter().map(|v| v[k]).sum::<f64>() / nb as f64;
                let var = means.iter().map(|v| (v[k] - m).powi(2)).sum::<f64>() / (nb - 1) as f64;
                (var / nb as f64).sqrt()
            })
            .collect()
    }

    /// Σ coef·acc over accumulators that share one block layout.
    pub fn combine(label: impl Into<String>, terms: &[(f64, &CorrelationAccumulator)]) -> Result<Self> {
        let first = terms.first().ok_or(Error::EmptyEnsemble)?.1;
        let mut out = Self::new(label, first.dt);
        for (bi, b) in first.blocks.iter().enumerate() {
            let mut sums = vec![0.0; b.sums.len()];
            for (coef, acc) in terms {
                let other = acc
                    .blocks
                    .get(bi)
                    .filter(|o| o.id == b.id && o.counts == b.counts)
                    .ok_or_else(|| Error::ShapeMismatch("accumulators have different blocks".into()))?;
                for (s, x) in sums.iter_mut().zip(&other.sums) {
                    *s += coef * x;
                }
            }
            out.blocks.push(BlockSums { id: b.id, sums, counts: b.counts.clone() });
        }
        Ok(out)
    }

    /// CSV rows `channel,tau,value,count`.
    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "channel,tau,value,count")?;
        }
        for (k, (v, c)) in self.mean().iter().zip(self.counts()).enumerate() {
            writeln!(w, "{},{:e},{:e},{}", self.label, k as f64 * self.dt, v, c)?;
        }
        Ok(())
    }
}

fn check_lag(max_lag: usize, len: usize) -> Result<()> {
    if len == 0 || max_lag * 5 >= len {
        return Err(Error::MaxLagTooLarge { max_lag, len });
    }
    Ok(())
}

/// Σ_t x(t+τ)y(t) and the origin count for τ = 0..=max_lag.
fn lag_sums(x: &[f64], y: &[f64], max_lag: usize) -> (Vec<f64>, Vec<u64>) {
    let n = x.len();
    let mut sums = vec![0.0; max_lag + 1];
    let mut counts = vec![0; max_lag + 1];
    for lag in 0..=max_lag {
        let mut s = 0.0;
        for t in 0..n - lag {
            s += x[t + lag] * y[t];
        }
        sums[lag] = s;
        counts[lag] = (n - lag) as u64;
    }
    (sums, counts)
}

/// Block sums of (1/V)Â(t+τ)B̂(t). Uncentered; centre the inputs first if
/// fluctuations are wanted.
pub fn correlation_block(a: &GriddedSeries, b: &GriddedSeries, max_lag: usize, id: u64) -> Result<BlockSums> {
    if a.frames() != b.frames() || a.cells != b.cells {
        return Err(Error::ShapeMismatch("series differ in frames or cells".into()));
    }
    check_lag(max_lag, a.frames())?;
    let v = a.volume();
    let (mut sums, counts) = lag_sums(&a.integrated(), &b.integrated(), max_lag);
    for s in sums.iter_mut() {
        *s /= v;
    }
    Ok(BlockSums { id, sums, counts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub values: Vec<f64>,
    pub counts: Vec<u64>,
}

/// ∫dξ⟨A(ξ,τ)B(0,0)⟩ averaged over time origins, τ = 0..=max_lag frames.
pub fn time_correlation(a: &GriddedSeries, b: &GriddedSeries, max_lag: usize) -> Result<Correlation> {
    let blk = correlation_block(a, b, max_lag, 0)?;
    Ok(Correlation { values: blk.mean(), counts: blk.counts })
}

/// Block sums of (1/V)Â(t+τ)B̂(t+τ)Ŵ(t): the three-current object
/// ∫dξ∫dξ′⟨A(ξ,τ)B(ξ′,τ)W(0,0)⟩. Inputs should be centred.
pub fn three_current_block(
    a: &GriddedSeries,
    b: &GriddedSeries,
    w: &GriddedSeries,
    max_lag: usize,
    id: u64,
) -> Result<BlockSums> {
    if a.frames() != b.frames() || a.frames() != w.frames() || a.cells != b.cells || a.cells != w.cells {
        return Err(Error::ShapeMismatch("series differ in frames or cells".into()));
    }
    check_lag(max_lag, a.frames())?;
    let v = a.volume();
    let ab: Vec<f64> = a.integrated().iter().zip(b.integrated()).map(|(x, y)| x * y).collect();
    let (mut sums, counts) = lag_sums(&ab, &w.integrated(), max_lag);
    for s in sums.iter_mut() {
        *s /= v;
    }
    Ok(BlockSums { id, sums, counts })
}

pub fn three_current_correlation(
    a: &GriddedSeries,
    b: &GriddedSeries,
    w: &GriddedSeries,
    max_lag: usize,
) -> Result<Correlation> {
    let blk = three_current_block(a, b, w, max_lag, 0)?;
    Ok(Correlation { values: blk.mean(), counts: blk.counts })
}

/// Subtracts the time mean of Â from every frame of a totals series.
pub fn centred(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_single_cell() {
        let s = GriddedSeries::new(1, 1.0, (0..20).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        let c = time_correlation(&s, &s, 3).unwrap();
        assert_eq!(c.values[0], 1.0);
        assert_eq!(c.values[1], -1.0);
        assert_eq!(c.counts, vec![20, 19, 18, 17]);
    }

    #[test]
    fn constant_series_scales_with_volume() {
        let s = GriddedSeries::new(4, 0.5, vec![3.0; 40]).unwrap();
        let c = time_correlation(&s, &s, 1).unwrap();
        for v in c.values {
            assert!((v - 9.0 * 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_long_lags() {
        let s = GriddedSeries::new(1, 1.0, vec![0.0; 10]).unwrap();
        assert!(matches!(time_correlation(&s, &s, 2), Err(Error::MaxLagTooLarge { .. })));
    }

    #[test]
    fn merge_is_order_independent() {
        let mk = |id: u64, v: f64| BlockSums { id, sums: vec![v, v / 2.0], counts: vec![3, 2] };
        let mut a = CorrelationAccumulator::new("x", 1.0);
        a.push(mk(2, 0.3));
        let mut b = CorrelationAccumulator::new("x", 1.0);
        b.push(mk(1, 0.7));
        b.push(mk(5, 0.1));
        let ab = a.clone().merge(b.clone());
        let ba = b.merge(a);
        assert_eq!(ab.mean(), ba.mean());
    }
}
