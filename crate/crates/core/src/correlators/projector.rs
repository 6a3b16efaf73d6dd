//! Linear projection onto the span of the conserved fields z^μ.
//!
//! Samples are (snapshot, cell) pairs. With the centred Gram matrix
//! G = Cov(z, z) the projection of φ is 𝒫φ = c·z with c = G⁻¹Cov(z, φ), which
//! fixes every z^μ and is idempotent on the sample set.

use crate::error::{Error, Result};
use crate::fields::FieldGrid;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBasis {
    pub components: usize,
    pub samples: usize,
    pub means: Vec<f64>,
    /// Row-major centred Gram matrix and its inverse.
    pub gram: Vec<f64>,
    pub inverse: Vec<f64>,
    pub condition_number: f64,
    pub warnings: Vec<String>,
}

/// Rows of z^μ values, one row per (snapshot, cell).
pub fn slow_samples_from_grids(grids: &[FieldGrid]) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for g in grids {
        let d = g.spec.dim;
        for c in 0..g.spec.cells() {
            let mut r = vec![g.density[c]];
            r.extend_from_slice(&g.momentum[c][..d]);
            r.push(g.energy[c]);
            rows.push(r);
        }
    }
    rows
}

fn mean_rows(rows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for r in rows {
        for (o, x) in out.iter_mut().zip(r) {
            *o += x;
        }
    }
    out.iter().map(|x| x / rows.len() as f64).collect()
}

pub fn build_projector(rows: &[Vec<f64>]) -> Result<ProjectionBasis> {
    let n = rows.len();
    let m = rows.first().map(|r| r.len()).ok_or(Error::EmptyEnsemble)?;
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::ShapeMismatch("samples have different lengths".into()));
    }
    let mut warnings = Vec::new();
    if n < 50 * m {
        warnings.push(format!("only {n} samples for {m} slow fields; at least {} recommended", 50 * m));
    }
    let means = mean_rows(rows, m);
    let mut g = DMatrix::<f64>::zeros(m, m);
    for r in rows {
        for a in 0..m {
            for b in 0..m {
                g[(a, b)] += (r[a] - means[a]) * (r[b] - means[b]);
            }
        }
    }
    g /= n as f64;
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > max * 1e-13) {
        return Err(Error::DegenerateEnsemble(format!(
            "Gram matrix of the slow fields is singular (eigenvalues {min:e}..{max:e})"
        )));
    }
    let inv = g.clone().cholesky().ok_or_else(|| Error::DegenerateEnsemble("Gram matrix not positive definite".into()))?.inverse();
    let flat = |x: &DMatrix<f64>| (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).map(|(a, b)| x[(a, b)]).collect();
    Ok(ProjectionBasis {
        components: m,
        samples: n,
        means,
        gram: flat(&g),
        inverse: flat(&inv),
        condition_number: max / min,
        warnings,
    })
}

impl ProjectionBasis {
    /// c = G⁻¹Cov(z, φ) for one observable sampled on the same rows.
    pub fn coefficients(&self, rows: &[Vec<f64>], phi: &[f64]) -> Result<Vec<f64>> {
        let m = self.components;
        if rows.len() != phi.len() {
            return Err(Error::ShapeMismatch(format!("{} slow samples but {} observable samples", rows.len(), phi.len())));
        }
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::ShapeMismatch("sample width differs from the basis".into()));
        }
        let n = phi.len() as f64;
        let pm = phi.iter().sum::<f64>() / n;
        let zm = mean_rows(rows, m);
        let mut cov = DVector::<f64>::zeros(m);
        for (r, &p) in rows.iter().zip(phi) {
            for a in 0..m {
                cov[a] += (r[a] - zm[a]) * (p - pm);
            }
        }
        cov /= n;
        let inv = DMatrix::from_row_slice(m, m, &self.inverse);
        Ok((inv * cov).iter().cloned().collect())
    }

    /// 𝒫φ evaluated on each row.
    pub fn project(&self, rows: &[Vec<f64>], phi: &[f64]) -> Result<Vec<f64>> {
        let c = self.coefficients(rows, phi)?;
        Ok(apply(&c, rows))
    }
}

/// c·z on every row.
pub fn apply(c: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().zip(c).map(|(z, c)| z * c).sum()).collect()
}

/// w̄ = φ − 𝒫φ on every row.
pub fn subtract_slow_modes(rows: &[Vec<f64>], phi: &[f64], basis: &ProjectionBasis) -> Result<Vec<f64>> {
    let p = basis.project(rows, phi)?;
    Ok(phi.iter().zip(p).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect()
    }

    #[test]
    fn fixes_basis_and_is_idempotent() {
        let r = rows(400, 3);
        let b = build_projector(&r).unwrap();
        for mu in 0..4 {
            let z: Vec<f64> = r.iter().map(|x| x[mu]).collect();
            let p = b.project(&r, &z).unwrap();
            for (a, c) in z.iter().zip(&p) {
                assert!((a - c).abs() < 1e-10);
            }
        }
        let phi: Vec<f64> = r.iter().map(|x| x[0] * x[1] + x[3].sin()).collect();
        let p1 = b.project(&r, &phi).unwrap();
        let p2 = b.project(&r, &p1).unwrap();
        for (a, c) in p1.iter().zip(&p2) {
            assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_gram_is_rejected() {
        let r: Vec<Vec<f64>> = rows(100, 1).into_iter().map(|mut x| {
            x[2] = 2.0 * x[1];
            x
        }).collect();
        assert!(matches!(build_projector(&r), Err(Error::DegenerateEnsemble(_))));
    }
}
