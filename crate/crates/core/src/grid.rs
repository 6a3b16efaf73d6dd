//! Scalar fields on the macroscopic torus, stored at grid nodes and evaluated
//! by periodic multilinear interpolation.

use crate::error::{Error, Result};
use crate::md::Vector;
use serde::{Deserialize, Serialize};

/// A periodic scalar field. Node k sits at fractional coordinate k/n along
/// each axis; coordinates passed to [`PeriodicField::eval`] are fractions of
/// the torus side, so the same field serves any ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicField {
    dim: usize,
    shape: [usize; 3],
    values: Vec<f64>,
    constant: Option<f64>,
}

impl PeriodicField {
    pub fn constant(dim: usize, value: f64) -> Self {
        Self { dim, shape: [1, 1, 1], values: vec![value], constant: Some(value) }
    }

    pub fn new(dim: usize, shape: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidParameter(format!("dimension {dim}")));
        }
        let mut shape = shape;
        if dim == 2 {
            shape[2] = 1;
        }
        let len: usize = shape.iter().product();
        if len == 0 || len != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {len} values, got {}",
                values.len()
            )));
        }
        // A constant field is evaluated without interpolation so that it
        // reproduces its value bit for bit.
        let constant = values.iter().all(|&v| v == values[0]).then_some(values[0]);
        Ok(Self { dim, shape, values, constant })
    }

    /// Samples `f` at the nodes; `f` receives fractional coordinates.
    pub fn from_fn(dim: usize, shape: [usize; 3], f: impl Fn(&Vector) -> f64) -> Result<Self> {
        let mut shape = shape;
        if dim == 2 {
            shape[2] = 1;
        }
        let mut values = Vec::with_capacity(shape.iter().product());
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                for k in 0..shape[2] {
                    let s = [
                        i as f64 / shape[0] as f64,
                        j as f64 / shape[1] as f64,
                        k as f64 / shape[2] as f64,
                    ];
                    values.push(f(&s));
                }
            }
        }
        Self::new(dim, shape, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.dim, self.shape, self.values.iter().map(|&v| f(v)).collect())
            .expect("same shape")
    }

    /// Value at fractional coordinates `s` (wrapped into [0,1)).
    pub fn eval(&self, s: &Vector) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.shape[a];
            if n == 1 {
                continue;
            }
            let x = (s[a] - s[a].floor()) * n as f64;
            let k = (x.floor() as usize).min(n - 1);
            base[a] = k;
            frac[a] = x - k as f64;
        }
        let idx = |i: usize, j: usize, k: usize| (i * self.shape[1] + j) * self.shape[2] + k;
        let mut acc = 0.0;
        for corner in 0..8usize {
            let mut w = 1.0;
            let mut c = [0usize; 3];
            let mut skip = false;
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                if self.shape[a] == 1 {
                    if up {
                        skip = true;
                    }
                    continue;
                }
                c[a] = if up { (base[a] + 1) % self.shape[a] } else { base[a] };
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if skip {
                continue;
            }
            acc += w * self.values[idx(c[0], c[1], c[2])];
        }
        acc
    }
}
