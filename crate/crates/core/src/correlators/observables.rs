//! Grid totals (space integrals) of every observable the coefficient
//! estimators need, for one configuration.

use crate::error::{Error, Result};
use crate::fields::{i2, ParticleTerms, Tensor2};
use crate::md::{for_each_pair, ParticleState, PotentialSpec, TorusDomain, Vector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TotalsFrame {
    pub time: f64,
    pub count: f64,
    pub momentum: Vector,
    pub energy: f64,
    /// Σ_i w_{*i}^{βk}
    pub stress: Tensor2,
    /// Σ_i w_i^{d+1,k}
    pub heat: Vector,
    /// Σ_ℓ [v_ℓ^γ w_ℓ^{d+1,m} + z_ℓ^{d+1} Σ_s Ψ^{γm}(ξ_ℓ − ξ_s)]
    pub drift: Tensor2,
    /// 𝒞^{γs} = Σ_ℓ Σ_j ¼ Σ_ν Ψ^{νγ}(ξ_ℓ − ξ_j) v_ℓ^s ½(v_ℓ^ν + v_j^ν)
    pub conduction: Tensor2,
    /// 𝒩^{γm} = Σ_ℓ Σ_{j,s} Σ_k ∂_kV(ξ_ℓ − ξ_j)(ξ_ℓ − ξ_j)^m Ψ^{kγ}(ξ_ℓ − ξ_s)
    pub nonlocal: Tensor2,
    /// Φ̄^{ααββ} integrated: Σ_{i<j} Φ^{ααββ}(ξ_i − ξ_j)
    pub phi_pairs: Tensor2,
}

impl TotalsFrame {
    pub fn compute(state: &ParticleState, pot: &PotentialSpec, domain: &TorusDomain) -> Result<Self> {
        let d = domain.dim();
        let terms = ParticleTerms::compute_with(state, pot, domain, false)?;
        let mut f = TotalsFrame { time: state.time, count: state.len() as f64, ..Default::default() };
        for (l, v) in state.velocities.iter().enumerate() {
            let z = terms.energy[l];
            f.energy += z;
            // S = Σ_s Ψ(ξ_ℓ − ξ_s), twice the stored half sum
            let mut s = [0.0; 9];
            for (x, y) in s.iter_mut().zip(&terms.pair_stress[l]) {
                *x = 2.0 * y;
            }
            let pair_heat = terms.pair_heat[l];
            for a in 0..d {
                f.momentum[a] += v[a];
                f.heat[a] += terms.heat[l][a];
            }
            for a in 0..d {
                for b in 0..d {
                    f.stress[i2(a, b)] += terms.stress[l][i2(a, b)];
                    f.drift[i2(a, b)] += v[a] * terms.heat[l][b] + z * s[i2(a, b)];
                    f.conduction[i2(a, b)] += 0.5 * v[b] * pair_heat[a];
                    // ∂_kV(ξ) = −s(r)ξ^k, so 𝒩_ℓ = −Σ_k S^{kγ}S^{km}
                    let mut n = 0.0;
                    for k in 0..d {
                        n -= s[i2(k, a)] * s[i2(k, b)];
                    }
                    f.nonlocal[i2(a, b)] += n;
                }
            }
        }
        if !pot.is_free() {
            for_each_pair(&state.positions, domain, pot.range, |i, j, x, r2| {
                if r2 == 0.0 {
                    return Err(Error::Overlap { i, j });
                }
                let s = pot.force_over_r(r2);
                for a in 0..d {
                    for b in 0..d {
                        f.phi_pairs[i2(a, b)] += s * x[a] * x[a] * x[b] * x[b];
                    }
                }
                Ok(())
            })?;
        }
        Ok(f)
    }

    /// (N, P_1..P_d, E).
    pub fn slow(&self, dim: usize) -> Vec<f64> {
        let mut r = vec![self.count];
        r.extend_from_slice(&self.momentum[..dim]);
        r.push(self.energy);
        r
    }
}
