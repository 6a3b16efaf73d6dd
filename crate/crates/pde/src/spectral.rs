//! Fourier-spectral calculus on a periodic box.
//!
//! Fields are flat row-major vectors (last axis fastest). First derivatives
//! drop the Nyquist mode so that the discrete gradient and divergence are
//! adjoint up to sign; the Laplacian keeps it.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

pub type Field = Vec<f64>;

#[derive(Clone)]
pub struct Spectral {
    dim: usize,
    shape: Vec<usize>,
    lengths: Vec<f64>,
    strides: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    /// Per axis and flat mode: k for ∂ (times i), Nyquist zeroed.
    ik: Vec<Vec<f64>>,
    /// Per axis and flat mode: −k², Nyquist kept.
    k2: Vec<Vec<f64>>,
    laplacian: Vec<f64>,
    div_grad: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("shape", &self.shape).field("lengths", &self.lengths).finish()
    }
}

impl Spectral {
    pub fn new(shape: &[usize], lengths: &[f64]) -> Self {
        let dim = shape.len();
        assert!(dim == lengths.len() && (2..=3).contains(&dim), "2 or 3 axes");
        let mut planner = FftPlanner::new();
        let mut strides = vec![1; dim];
        for a in (0..dim - 1).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let len: usize = shape.iter().product();
        let mut ik = Vec::new();
        let mut k2 = Vec::new();
        for a in 0..dim {
            let n = shape[a];
            let base = 2.0 * PI / lengths[a];
            let wav = |j: usize| if 2 * j < n { j as f64 } else { j as f64 - n as f64 };
            let axis = |i: usize| (i / strides[a]) % n;
            ik.push((0..len).map(|i| if n % 2 == 0 && 2 * axis(i) == n { 0.0 } else { wav(axis(i)) * base }).collect::<Vec<_>>());
            k2.push((0..len).map(|i| -(wav(axis(i)) * base).powi(2)).collect::<Vec<_>>());
        }
        let laplacian = (0..len).map(|i| (0..dim).map(|a| k2[a][i]).sum()).collect();
        let div_grad = (0..len).map(|i| (0..dim).map(|a| -ik[a][i].powi(2)).sum()).collect();
        Self {
            dim,
            shape: shape.to_vec(),
            lengths: lengths.to_vec(),
            strides,
            forward: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
            ik,
            k2,
            laplacian,
            div_grad,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.shape[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Multi-index of flat index `i`.
    pub fn index(&self, i: usize) -> Vec<usize> {
        (0..self.dim).map(|a| (i / self.strides[a]) % self.shape[a]).collect()
    }

    /// Physical coordinates of node `i`.
    pub fn coordinates(&self, i: usize) -> Vec<f64> {
        self.index(i).iter().enumerate().map(|(a, &j)| j as f64 * self.spacing(a)).collect()
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        (0..self.len()).map(|i| f(&self.coordinates(i))).collect()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / f.len() as f64
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.cell_volume()
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        for a in 0..self.dim {
            let n = self.shape[a];
            let stride = self.strides[a];
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for start in 0..data.len() {
                if (start / stride) % n != 0 {
                    continue;
                }
                for j in 0..n {
                    line[j] = data[start + j * stride];
                }
                plans[a].process(&mut line);
                for j in 0..n {
                    data[start + j * stride] = line[j];
                }
            }
        }
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    pub fn inverse(&self, mut data: Vec<Complex64>) -> Field {
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        data.iter().map(|z| z.re * scale).collect()
    }

    fn apply(&self, f: &[f64], symbol: impl Fn(usize) -> Complex64) -> Field {
        let mut hat = self.forward(f);
        for (i, z) in hat.iter_mut().enumerate() {
            *z *= symbol(i);
        }
        self.inverse(hat)
    }

    pub fn derivative(&self, f: &[f64], axis: usize) -> Field {
        self.apply(f, |i| Complex64::new(0.0, self.ik[axis][i]))
    }

    pub fn second_derivative(&self, f: &[f64], a: usize, b: usize) -> Field {
        if a == b {
            self.apply(f, |i| Complex64::new(self.k2[a][i], 0.0))
        } else {
            self.apply(f, |i| Complex64::new(-self.ik[a][i] * self.ik[b][i], 0.0))
        }
    }

    pub fn gradient(&self, f: &[f64]) -> Vec<Field> {
        let hat = self.forward(f);
        (0..self.dim)
            .map(|a| self.inverse(hat.iter().enumerate().map(|(i, z)| z * Complex64::new(0.0, self.ik[a][i])).collect()))
            .collect()
    }

    pub fn divergence(&self, v: &[Field]) -> Field {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.len()];
        for (a, comp) in v.iter().enumerate() {
            for (i, z) in self.forward(comp).into_iter().enumerate() {
                acc[i] += z * Complex64::new(0.0, self.ik[a][i]);
            }
        }
        self.inverse(acc)
    }

    pub fn laplacian(&self, f: &[f64]) -> Field {
        self.apply(f, |i| Complex64::new(self.laplacian[i], 0.0))
    }

    /// Solves (1 − c·Δ)x = rhs.
    pub fn solve_helmholtz(&self, rhs: &[f64], c: f64) -> Field {
        self.apply(rhs, |i| Complex64::new(1.0 / (1.0 - c * self.laplacian[i]), 0.0))
    }

    /// x with div grad x = rhs on the range of div grad, zero elsewhere.
    pub fn solve_div_grad(&self, rhs: &[f64]) -> Field {
        self.apply(rhs, |i| {
            let s = self.div_grad[i];
            Complex64::new(if s == 0.0 { 0.0 } else { 1.0 / s }, 0.0)
        })
    }

    /// Removes the modes that no discrete divergence can reach: the mean and
    /// modes whose wavenumbers are all zero or Nyquist.
    pub fn project_to_divergence_range(&self, f: &[f64]) -> Field {
        self.apply(f, |i| Complex64::new(if self.div_grad[i] == 0.0 { 0.0 } else { 1.0 }, 0.0))
    }
}

pub fn max_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, x| m.max(x.abs()))
}
