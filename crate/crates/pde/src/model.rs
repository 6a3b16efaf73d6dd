use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A transport coefficient as a function of (ρ, T).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Coefficient {
    Constant(f64),
    /// c·T^p.
    PowerLaw { prefactor: f64, exponent: f64 },
    /// Piecewise linear in T, clamped at the ends.
    Table { temperatures: Vec<f64>, values: Vec<f64> },
    /// Bilinear on a (ρ, T) grid, clamped; values row-major in ρ.
    Grid { densities: Vec<f64>, temperatures: Vec<f64>, values: Vec<f64> },
}

fn bracket(x: &[f64], v: f64) -> (usize, f64) {
    if x.len() == 1 {
        return (0, 0.0);
    }
    let v = v.clamp(x[0], x[x.len() - 1]);
    let i = x.partition_point(|&t| t <= v).clamp(1, x.len() - 1) - 1;
    (i, (v - x[i]) / (x[i + 1] - x[i]))
}

impl Coefficient {
    pub fn eval(&self, rho: f64, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::PowerLaw { prefactor, exponent } => prefactor * t.powf(*exponent),
            Coefficient::Table { temperatures, values } => {
                let (i, s) = bracket(temperatures, t);
                if s == 0.0 {
                    values[i]
                } else {
                    values[i] * (1.0 - s) + values[i + 1] * s
                }
            }
            Coefficient::Grid { densities, temperatures, values } => {
                let nt = temperatures.len();
                let (i, a) = bracket(densities, rho);
                let (j, b) = bracket(temperatures, t);
                let at = |i: usize, j: usize| values[i * nt + j];
                let i1 = (i + 1).min(densities.len() - 1);
                let j1 = (j + 1).min(nt - 1);
                (1.0 - a) * ((1.0 - b) * at(i, j) + b * at(i, j1)) + a * ((1.0 - b) * at(i1, j) + b * at(i1, j1))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Constant(c) if *c == 0.0)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{name}: {m}")));
        match self {
            Coefficient::Constant(c) if !c.is_finite() => bad(format!("non-finite value {c}")),
            Coefficient::Table { temperatures, values } if temperatures.is_empty() || temperatures.len() != values.len() => {
                bad("table needs matching, non-empty columns".into())
            }
            Coefficient::Table { temperatures, .. } if temperatures.windows(2).any(|w| w[1] <= w[0]) => bad("temperatures must increase".into()),
            Coefficient::Grid { densities, temperatures, values } if densities.is_empty() || temperatures.is_empty() || values.len() != densities.len() * temperatures.len() => {
                bad("grid shape mismatch".into())
            }
            _ => Ok(()),
        }
    }
}

impl From<f64> for Coefficient {
    fn from(c: f64) -> Self {
        Coefficient::Constant(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportModel {
    pub eta: Coefficient,
    pub zeta: Coefficient,
    pub kappa: Coefficient,
    pub k1: Coefficient,
    pub k2: Coefficient,
    pub omega1: Coefficient,
    pub omega2: Coefficient,
}

impl TransportModel {
    pub fn constant(eta: f64, zeta: f64, kappa: f64, k1: f64, k2: f64, omega1: f64, omega2: f64) -> Self {
        Self {
            eta: eta.into(),
            zeta: zeta.into(),
            kappa: kappa.into(),
            k1: k1.into(),
            k2: k2.into(),
            omega1: omega1.into(),
            omega2: omega2.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (n, c) in [("eta", &self.eta), ("zeta", &self.zeta), ("kappa", &self.kappa), ("k1", &self.k1), ("k2", &self.k2), ("omega1", &self.omega1), ("omega2", &self.omega2)] {
            c.validate(n)?;
        }
        Ok(())
    }
}

/// Conduction flux q in the energy equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FluxForm {
    /// q = κ∇T.
    #[default]
    KappaGradT,
    /// q = κ∇T/(2T²).
    KappaGradTOver2T2,
}

impl FluxForm {
    /// Coefficient c with q = c∇T.
    pub fn conductivity(self, kappa: f64, t: f64) -> f64 {
        match self {
            FluxForm::KappaGradT => kappa,
            FluxForm::KappaGradTOver2T2 => kappa / (2.0 * t * t),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FluxForm::KappaGradT => "kappa_gradT",
            FluxForm::KappaGradTOver2T2 => "kappa_gradT_over_2T2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kappa_gradT" => Some(FluxForm::KappaGradT),
            "kappa_gradT_over_2T2" => Some(FluxForm::KappaGradTOver2T2),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolverMode {
    /// General state equation, all coefficients as given.
    ParticleEos,
    /// Ideal gas; η is the kinetic viscosity λ(T), K₂ = λ²K̄₁/P̄ and
    /// K₁ = λ²K̄₂/(P̄T); ζ and ω vanish.
    IdealGasGhost { k_bar1: f64, k_bar2: f64 },
    /// Thermal stress switched off.
    InsfReduction,
    /// u ≡ 0 and ρ frozen: only the energy equation at fixed density.
    ConductionOnly,
}

impl SolverMode {
    pub fn name(&self) -> &'static str {
        match self {
            SolverMode::ParticleEos => "particle-eos",
            SolverMode::IdealGasGhost { .. } => "ideal-gas-ghost",
            SolverMode::InsfReduction => "insf-reduction",
            SolverMode::ConductionOnly => "conduction-only",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub shape: Vec<usize>,
    pub lengths: Vec<f64>,
    pub dt: f64,
    pub mode: SolverMode,
    pub flux_form: FluxForm,
    /// Relative residual for the projection solve.
    pub poisson_tolerance: f64,
    pub poisson_max_iter: usize,
    /// Relative residual for the pointwise density solve.
    pub newton_tolerance: f64,
    /// Safety factor in the explicit step bound.
    pub cfl: f64,
}

impl SolverConfig {
    pub fn new(shape: Vec<usize>, dt: f64, mode: SolverMode) -> Self {
        let d = shape.len();
        Self {
            shape,
            lengths: vec![1.0; d],
            dt,
            mode,
            flux_form: FluxForm::default(),
            poisson_tolerance: 1e-13,
            poisson_max_iter: 500,
            newton_tolerance: 1e-13,
            cfl: 0.5,
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.shape.len()) || self.lengths.len() != self.shape.len() {
            return Err(Error::Config(format!("grid shape {:?} with lengths {:?}", self.shape, self.lengths)));
        }
        if self.shape.iter().any(|&n| n < 4) || self.lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config("at least 4 nodes and a positive length per axis".into()));
        }
        if !(self.dt > 0.0) || !(self.poisson_tolerance > 0.0) || !(self.newton_tolerance > 0.0) {
            return Err(Error::Config("dt and tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Source terms for manufactured solutions. Coordinates are physical.
pub trait Forcing: Send + Sync {
    /// Added to ∂ₜT.
    fn temperature(&self, _x: &[f64], _t: f64) -> f64 {
        0.0
    }
    /// Added to the divergence target.
    fn divergence(&self, _x: &[f64], _t: f64) -> f64 {
        0.0
    }
    /// Added to the momentum balance ρ(∂ₜu + u·∇u) = ….
    fn momentum(&self, _x: &[f64], _t: f64, _out: &mut [f64]) {}
    /// Total mass at time t when sources change it.
    fn mass(&self, _t: f64) -> Option<f64> {
        None
    }
}
