use serde::{Deserialize, Serialize};

/// Functional form of the pair potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialForm {
    /// V ≡ 0, the ideal gas. The range only sizes neighbour searches.
    Free,
    /// V(r) = a (1 - (r/r_c)²)⁴ for r < r_c.
    Bump,
}

/// A smooth, finite-range, central pair potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub form: PotentialForm,
    pub amplitude: f64,
    pub range: f64,
}

impl PotentialSpec {
    pub fn bump(amplitude: f64, range: f64) -> Self {
        Self { form: PotentialForm::Bump, amplitude, range }
    }

    pub fn free(range: f64) -> Self {
        Self { form: PotentialForm::Free, amplitude: 0.0, range }
    }

    pub fn is_free(&self) -> bool {
        self.form == PotentialForm::Free || self.amplitude == 0.0
    }

    /// V(r).
    pub fn value(&self, r: f64) -> f64 {
        self.value_sq(r * r)
    }

    /// V′(r).
    pub fn derivative(&self, r: f64) -> f64 {
        -self.force_over_r(r * r) * r
    }

    pub(crate) fn value_sq(&self, r2: f64) -> f64 {
        match self.form {
            PotentialForm::Free => 0.0,
            PotentialForm::Bump => {
                let rc2 = self.range * self.range;
                if r2 >= rc2 {
                    return 0.0;
                }
                let s = 1.0 - r2 / rc2;
                let s2 = s * s;
                self.amplitude * s2 * s2
            }
        }
    }

    /// -V′(r)/r as a function of r², so that the force on i is this times ξ_i - ξ_j.
    pub(crate) fn force_over_r(&self, r2: f64) -> f64 {
        match self.form {
            PotentialForm::Free => 0.0,
            PotentialForm::Bump => {
                let rc2 = self.range * self.range;
                if r2 >= rc2 {
                    return 0.0;
                }
                let s = 1.0 - r2 / rc2;
                8.0 * self.amplitude * s * s * s / rc2
            }
        }
    }

    /// Value and -V′/r in one pass.
    pub(crate) fn pair(&self, r2: f64) -> (f64, f64) {
        (self.value_sq(r2), self.force_over_r(r2))
    }
}
