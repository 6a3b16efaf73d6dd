//! Flat `section.key = value` configuration.
//!
//! One assignment per line, `#` starts a comment. Every key has a default,
//! unknown and repeated keys are rejected. Lengths and times in the domain,
//! sampler, md and correlator sections are microscopic; the pde section is
//! macroscopic. The two are related only through `scale.epsilon`:
//! x_macro = ε·x_micro and t_macro = ε²·t_micro.

use crate::error::{Error, Result};
use ghostflow_core::eos::TabulationConfig;
use ghostflow_core::gibbs::{Ensemble, SamplerConfig};
use ghostflow_core::md::PotentialSpec;
use ghostflow_core::correlators::ensemble::EquilibriumConfig;
use ghostflow_pde::{FluxForm, SolverConfig, SolverMode, TransportModel};
use std::collections::HashSet;
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq)]
pub struct WorkbenchConfig {
    pub name: String,
    pub seed: u64,
    pub output: PathBuf,
    pub parallel: bool,
    pub epsilon: f64,
    pub dim: usize,
    pub side: f64,
    pub potential: String,
    pub amplitude: f64,
    pub range: f64,
    pub sampler: SamplerSection,
    pub md: MdSection,
    pub correlators: CorrelatorSection,
    pub eos: EosSection,
    pub pde: PdeSection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerSection {
    /// `grand_canonical` or `canonical`.
    pub ensemble: String,
    pub count: usize,
    pub log_activity: f64,
    pub temperature: f64,
    pub chains: usize,
    pub sweeps: usize,
    pub burn_in_window: usize,
    pub max_burn_in: usize,
    pub max_displacement: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdSection {
    pub dt: f64,
    pub steps: usize,
    pub sample_every: usize,
    pub energy_drift_max: f64,
    pub grid_cells: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatorSection {
    pub trajectories: usize,
    pub steps: usize,
    pub max_lag: usize,
    pub galilean_window: usize,
    pub galilean_bias: f64,
    pub antithetic: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EosSection {
    /// `ideal`, `tabulate`, or the path of a table CSV.
    pub table: String,
    pub densities: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub count: usize,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeSection {
    pub cells: usize,
    pub dt: f64,
    pub steps: usize,
    pub mode: String,
    pub flux_form: String,
    pub poisson_tolerance: f64,
    pub newton_tolerance: f64,
    /// `ideal` or `table` (the table from the eos section).
    pub eos: String,
    /// Coefficients CSV relative to the output directory; empty means the
    /// manual values below.
    pub coefficients_file: String,
    pub eta: f64,
    pub zeta: f64,
    pub kappa: f64,
    pub k1: f64,
    pub k2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub k_bar1: f64,
    pub k_bar2: f64,
    pub pbar: f64,
    pub temperature: f64,
    /// Relative amplitude of the initial temperature modulation.
    pub t_amplitude: f64,
    /// Amplitude of the initial shear flow.
    pub u_amplitude: f64,
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        Self {
            name: "quick".into(),
            seed: 1,
            output: PathBuf::from("out"),
            parallel: true,
            epsilon: 0.1,
            dim: 2,
            side: 8.0,
            potential: "bump".into(),
            amplitude: 3.0,
            range: 1.0,
            sampler: SamplerSection {
                ensemble: "grand_canonical".into(),
                count: 32,
                log_activity: 0.5f64.ln() + 0.5,
                temperature: 1.0,
                chains: 1,
                sweeps: 50,
                burn_in_window: 10,
                max_burn_in: 2000,
                max_displacement: 0.3,
            },
            md: MdSection { dt: 0.005, steps: 1000, sample_every: 5, energy_drift_max: 1e-4, grid_cells: 4 },
            correlators: CorrelatorSection {
                trajectories: 10,
                steps: 10_000,
                max_lag: 200,
                galilean_window: 10,
                galilean_bias: 0.0,
                antithetic: false,
            },
            eos: EosSection {
                table: "ideal".into(),
                densities: vec![0.3, 0.4, 0.5, 0.6, 0.7],
                temperatures: vec![0.7, 0.85, 1.0, 1.15, 1.3],
                count: 64,
                samples: 400,
            },
            pde: PdeSection {
                cells: 16,
                dt: 1e-3,
                steps: 200,
                mode: "ideal-gas-ghost".into(),
                flux_form: "kappa_gradT".into(),
                poisson_tolerance: 1e-13,
                newton_tolerance: 1e-13,
                eos: "ideal".into(),
                coefficients_file: String::new(),
                eta: 0.05,
                zeta: 0.0,
                kappa: 0.08,
                k1: 0.0,
                k2: 0.0,
                omega1: 0.0,
                omega2: 0.0,
                k_bar1: 1.0,
                k_bar2: 1.0,
                pbar: 1.0,
                temperature: 1.0,
                t_amplitude: 0.1,
                u_amplitude: 0.0,
            },
        }
    }
}

trait Value {
    fn emit(&self) -> String;
    fn assign(&mut self, s: &str) -> std::result::Result<(), String>;
}

macro_rules! parsed_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn emit(&self) -> String {
                self.to_string()
            }
            fn assign(&mut self, s: &str) -> std::result::Result<(), String> {
                *self = s.parse().map_err(|e| format!("{e}"))?;
                Ok(())
            }
        }
    )*};
}

parsed_value!(u64, usize, bool);

impl Value for f64 {
    /// Shortest form that parses back to the same bits.
    fn emit(&self) -> String {
        format!("{self:?}")
    }
    fn assign(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = s.parse().map_err(|e| format!("{e}"))?;
        Ok(())
    }
}

impl Value for String {
    fn emit(&self) -> String {
        self.clone()
    }
    fn assign(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = s.to_string();
        Ok(())
    }
}

impl Value for PathBuf {
    fn emit(&self) -> String {
        self.display().to_string()
    }
    fn assign(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = PathBuf::from(s);
        Ok(())
    }
}

impl Value for Vec<f64> {
    fn emit(&self) -> String {
        self.iter().map(|x| x.emit()).collect::<Vec<_>>().join(", ")
    }
    fn assign(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = if s.trim().is_empty() {
            Vec::new()
        } else {
            s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("{e}"))).collect::<std::result::Result<_, _>>()?
        };
        Ok(())
    }
}

type Entry<'a> = (&'static str, &'static str, &'a mut dyn Value);

impl WorkbenchConfig {
    /// (key, unit comment, value) in emission order.
    fn entries(&mut self) -> Vec<Entry<'_>> {
        let s = &mut self.sampler;
        let m = &mut self.md;
        let c = &mut self.correlators;
        let e = &mut self.eos;
        let p = &mut self.pde;
        vec![
            ("experiment.name", "", &mut self.name),
            ("run.seed", "", &mut self.seed),
            ("run.output", "directory", &mut self.output),
            ("run.parallel", "", &mut self.parallel),
            ("scale.epsilon", "dimensionless, macro/micro length ratio", &mut self.epsilon),
            ("domain.dim", "", &mut self.dim),
            ("domain.side", "micro length", &mut self.side),
            ("potential.kind", "bump | free", &mut self.potential),
            ("potential.amplitude", "micro energy", &mut self.amplitude),
            ("potential.range", "micro length", &mut self.range),
            ("sampler.ensemble", "grand_canonical | canonical", &mut s.ensemble),
            ("sampler.count", "particles, canonical only", &mut s.count),
            ("sampler.log_activity", "dimensionless", &mut s.log_activity),
            ("sampler.temperature", "micro energy", &mut s.temperature),
            ("sampler.chains", "", &mut s.chains),
            ("sampler.sweeps", "", &mut s.sweeps),
            ("sampler.burn_in_window", "sweeps", &mut s.burn_in_window),
            ("sampler.max_burn_in", "sweeps", &mut s.max_burn_in),
            ("sampler.max_displacement", "micro length", &mut s.max_displacement),
            ("md.dt", "micro time", &mut m.dt),
            ("md.steps", "", &mut m.steps),
            ("md.sample_every", "steps", &mut m.sample_every),
            ("md.energy_drift_max", "relative", &mut m.energy_drift_max),
            ("md.grid_cells", "cells per axis", &mut m.grid_cells),
            ("correlators.trajectories", "", &mut c.trajectories),
            ("correlators.steps", "per trajectory", &mut c.steps),
            ("correlators.max_lag", "frames", &mut c.max_lag),
            ("correlators.galilean_window", "frames", &mut c.galilean_window),
            ("correlators.galilean_bias", "units of eta; nonzero adds a control that must fail", &mut c.galilean_bias),
            ("correlators.antithetic", "", &mut c.antithetic),
            ("eos.table", "ideal | tabulate | path to CSV", &mut e.table),
            ("eos.densities", "micro density", &mut e.densities),
            ("eos.temperatures", "micro energy", &mut e.temperatures),
            ("eos.count", "particles per node", &mut e.count),
            ("eos.samples", "sweeps per node", &mut e.samples),
            ("pde.cells", "per axis; the macro box side follows from domain.side", &mut p.cells),
            ("pde.dt", "macro time", &mut p.dt),
            ("pde.steps", "", &mut p.steps),
            ("pde.mode", "particle-eos | ideal-gas-ghost | insf-reduction | conduction-only", &mut p.mode),
            ("pde.flux_form", "kappa_gradT | kappa_gradT_over_2T2", &mut p.flux_form),
            ("pde.poisson_tolerance", "relative", &mut p.poisson_tolerance),
            ("pde.newton_tolerance", "relative", &mut p.newton_tolerance),
            ("pde.eos", "ideal | table", &mut p.eos),
            ("pde.coefficients_file", "relative to run.output; empty for the manual values", &mut p.coefficients_file),
            ("pde.eta", "", &mut p.eta),
            ("pde.zeta", "", &mut p.zeta),
            ("pde.kappa", "", &mut p.kappa),
            ("pde.k1", "", &mut p.k1),
            ("pde.k2", "", &mut p.k2),
            ("pde.omega1", "", &mut p.omega1),
            ("pde.omega2", "", &mut p.omega2),
            ("pde.k_bar1", "ideal-gas-ghost only", &mut p.k_bar1),
            ("pde.k_bar2", "ideal-gas-ghost only", &mut p.k_bar2),
            ("pde.pbar", "micro energy per volume", &mut p.pbar),
            ("pde.temperature", "micro energy", &mut p.temperature),
            ("pde.t_amplitude", "relative", &mut p.t_amplitude),
            ("pde.u_amplitude", "macro velocity", &mut p.u_amplitude),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        Self::default().entries().iter().map(|e| e.0).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        {
            let mut entries = cfg.entries();
            for (n, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let bad = |m: String| Error::Config(format!("line {}: {m}", n + 1));
                let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value".into()))?;
                let (key, value) = (key.trim(), value.trim());
                let entry = entries.iter_mut().find(|e| e.0 == key).ok_or_else(|| bad(format!("unknown key `{key}`")))?;
                if !seen.insert(key.to_string()) {
                    return Err(bad(format!("`{key}` given twice")));
                }
                entry.2.assign(value).map_err(|e| bad(format!("{key}: {e}")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn emit(&self) -> String {
        let mut copy = self.clone();
        let mut out = String::new();
        let mut section = "";
        for (key, unit, value) in copy.entries() {
            let head = key.split('.').next().unwrap_or("");
            if head != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = head;
            }
            let line = format!("{key} = {}", value.emit());
            if unit.is_empty() {
                out.push_str(&line);
            } else {
                out.push_str(&format!("{line:<39} # {unit}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("scale.epsilon must lie in (0, 1)");
        }
        if self.dim != 2 && self.dim != 3 {
            return bad("domain.dim must be 2 or 3");
        }
        if !(self.side > 0.0) || !(self.range > 0.0) || !(self.side >= 2.0 * self.range) {
            return bad("domain.side must be positive and at least twice potential.range");
        }
        if !matches!(self.potential.as_str(), "bump" | "free") {
            return bad("potential.kind must be bump or free");
        }
        if !matches!(self.sampler.ensemble.as_str(), "grand_canonical" | "canonical") {
            return bad("sampler.ensemble must be grand_canonical or canonical");
        }
        if !(self.sampler.temperature > 0.0) || self.sampler.chains == 0 {
            return bad("sampler.temperature must be positive and sampler.chains at least 1");
        }
        if !(self.md.dt > 0.0) || self.md.sample_every == 0 || self.md.grid_cells == 0 {
            return bad("md.dt, md.sample_every and md.grid_cells must be positive");
        }
        if self.correlators.trajectories == 0 || self.correlators.max_lag == 0 {
            return bad("correlators.trajectories and correlators.max_lag must be positive");
        }
        if !(self.pde.dt > 0.0) || self.pde.cells < 4 {
            return bad("pde.dt must be positive and pde.cells at least 4");
        }
        if self.eos.table.is_empty() {
            return bad("eos.table must be ideal, tabulate or a path");
        }
        if !matches!(self.pde.eos.as_str(), "ideal" | "table") {
            return bad("pde.eos must be ideal or table");
        }
        if FluxForm::parse(&self.pde.flux_form).is_none() {
            return bad("unknown pde.flux_form");
        }
        self.solver_mode()?;
        Ok(())
    }

    pub fn pot(&self) -> PotentialSpec {
        match self.potential.as_str() {
            "free" => PotentialSpec::free(self.range),
            _ => PotentialSpec::bump(self.amplitude, self.range),
        }
    }

    pub fn ensemble(&self) -> Ensemble {
        match self.sampler.ensemble.as_str() {
            "canonical" => Ensemble::Canonical { count: self.sampler.count },
            _ => Ensemble::GrandCanonical,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let s = &self.sampler;
        SamplerConfig {
            ensemble: self.ensemble(),
            sweeps: s.sweeps,
            burn_in_window: s.burn_in_window,
            max_burn_in: s.max_burn_in,
            max_displacement: s.max_displacement,
        }
    }

    /// Grand-canonical sampling at the sampler state point, then md.dt
    /// dynamics for correlators.steps.
    pub fn equilibrium_config(&self) -> EquilibriumConfig {
        EquilibriumConfig {
            dim: self.dim,
            side: self.side,
            log_activity: self.sampler.log_activity,
            temperature: self.sampler.temperature,
            pot: self.pot(),
            sampler: SamplerConfig { ensemble: Ensemble::GrandCanonical, ..self.sampler_config() },
            trajectories: self.correlators.trajectories,
            steps: self.correlators.steps,
            dt: self.md.dt,
            sample_every: self.md.sample_every,
            seed: self.seed,
            parallel: self.parallel,
            antithetic: self.correlators.antithetic,
        }
    }

    pub fn tabulation_config(&self) -> TabulationConfig {
        TabulationConfig { count: self.eos.count, sampler: self.sampler_config(), samples: self.eos.samples, seed: self.seed }
    }

    pub fn solver_mode(&self) -> Result<SolverMode> {
        Ok(match self.pde.mode.as_str() {
            "particle-eos" => SolverMode::ParticleEos,
            "ideal-gas-ghost" => SolverMode::IdealGasGhost { k_bar1: self.pde.k_bar1, k_bar2: self.pde.k_bar2 },
            "insf-reduction" => SolverMode::InsfReduction,
            "conduction-only" => SolverMode::ConductionOnly,
            other => return Err(Error::Config(format!("unknown pde.mode `{other}`"))),
        })
    }

    /// Macroscopic box side.
    pub fn macro_side(&self) -> f64 {
        self.epsilon * self.side
    }

    /// Macroscopic duration of `micro` time units.
    pub fn macro_time(&self, micro: f64) -> f64 {
        self.epsilon * self.epsilon * micro
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let p = &self.pde;
        let mut c = SolverConfig::new(vec![p.cells; self.dim], p.dt, self.solver_mode()?);
        c.lengths = vec![self.macro_side(); self.dim];
        c.flux_form = FluxForm::parse(&p.flux_form).ok_or_else(|| Error::Config("unknown pde.flux_form".into()))?;
        c.poisson_tolerance = p.poisson_tolerance;
        c.newton_tolerance = p.newton_tolerance;
        Ok(c)
    }

    pub fn manual_model(&self) -> TransportModel {
        let p = &self.pde;
        TransportModel::constant(p.eta, p.zeta, p.kappa, p.k1, p.k2, p.omega1, p.omega2)
    }
}
