//! The five stages. Each writes into the output directory, records its files
//! and gates in the manifest, and fails with [`Error::Gate`] after writing
//! everything if a gate did not pass.

use crate::config::WorkbenchConfig;
use crate::error::{Error, Result};
use crate::manifest::{sha256_hex, Gate, RunManifest};
use ghostflow_core::correlators::analysis::{
    assemble_coefficients, double_time_integrals, galilean_null_test, green_kubo_coefficients, sum_rules, thermodynamic_identity,
    EnsembleSeries,
};
use ghostflow_core::correlators::ensemble::run_equilibrium_ensemble;
use ghostflow_core::eos::{chemical_derivatives, tabulate_state_equation, IdealGas, StateEquation, StateEquationTable};
use ghostflow_core::fields::{bin_fields, GridSpec};
use ghostflow_core::gibbs::{sample_chains, GibbsParameters};
use ghostflow_core::md::{checkpoint, total_invariants, ForceMode, TorusDomain, VelocityVerlet};
use ghostflow_pde::{state::write_snapshot, Solver, TransportModel};
use serde_json::json;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const CONFIG_FILE: &str = "config.conf";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Sample,
    Md { checkpoint: Option<PathBuf> },
    Coefficients,
    Solve,
    Report,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::Md { .. } => "md",
            Stage::Coefficients => "coefficients",
            Stage::Solve => "solve",
            Stage::Report => "report",
        }
    }
}

/// A stage in progress.
struct Run<'a> {
    cfg: &'a WorkbenchConfig,
    dir: PathBuf,
    stage: &'static str,
    hash: String,
    manifest: RunManifest,
    gates: Vec<Gate>,
    stale: Vec<String>,
    started: Instant,
}

impl<'a> Run<'a> {
    /// Records the emitted config and forgets what an earlier run of this
    /// stage wrote; those files are removed at the end unless rewritten.
    fn open(cfg: &'a WorkbenchConfig, stage: &'static str) -> Result<Self> {
        let dir = cfg.output.clone();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display(), e))?;
        let text = cfg.emit();
        let mut manifest = RunManifest::load(&dir)?;
        let stale = manifest.files.iter().filter(|f| f.stage == stage).map(|f| f.path.clone()).collect();
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, &text).map_err(|e| Error::io(path.display(), e))?;
        manifest.record_file(&dir, CONFIG_FILE, "config")?;
        manifest.begin_stage(stage);
        manifest.save(&dir)?;
        Ok(Self { cfg, dir, stage, hash: sha256_hex(text.as_bytes()), manifest, gates: Vec::new(), stale, started: Instant::now() })
    }

    fn write_raw(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        std::fs::write(&path, bytes).map_err(|e| Error::io(path.display(), e))
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        self.write_raw(rel, bytes)?;
        self.manifest.record_file(&self.dir, rel, self.stage)?;
        self.manifest.save(&self.dir)
    }

    fn write_json(&mut self, rel: &str, value: &serde_json::Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("json value serialises") + "\n";
        self.write(rel, text.as_bytes())
    }

    fn gate(&mut self, g: Gate) {
        self.gates.push(g);
    }

    fn finish(mut self) -> Result<Vec<Gate>> {
        for rel in &self.stale {
            if !self.manifest.files.iter().any(|f| &f.path == rel) {
                let _ = std::fs::remove_file(self.dir.join(rel));
            }
        }
        let secs = self.started.elapsed().as_secs_f64();
        self.manifest.record_gates(&self.gates);
        self.manifest.finish_stage(self.stage, &self.hash, secs);
        self.manifest.save(&self.dir)?;
        let failed: Vec<String> = self.gates.iter().filter(|g| !g.passed).map(|g| g.name.clone()).collect();
        if failed.is_empty() {
            Ok(self.gates)
        } else {
            Err(Error::Gate(failed))
        }
    }
}

/// Runs one stage; the gates it evaluated on success.
pub fn run_stage(cfg: &WorkbenchConfig, stage: &Stage) -> Result<Vec<Gate>> {
    cfg.validate()?;
    match stage {
        Stage::Sample => sample(cfg),
        Stage::Md { checkpoint } => md(cfg, checkpoint.as_deref()),
        Stage::Coefficients => coefficients(cfg),
        Stage::Solve => solve(cfg),
        Stage::Report => report(cfg),
    }
}

/// Seed of chain `k`.
pub fn chain_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn domain(cfg: &WorkbenchConfig, side: f64) -> Result<TorusDomain> {
    Ok(TorusDomain::new(cfg.dim, side, cfg.range)?)
}

fn sample(cfg: &WorkbenchConfig) -> Result<Vec<Gate>> {
    let mut run = Run::open(cfg, "sample")?;
    let s = &cfg.sampler;
    let dom = domain(cfg, cfg.side)?;
    let params = GibbsParameters::global(cfg.dim, s.log_activity, s.temperature, cfg.epsilon)?;
    let seeds: Vec<u64> = (0..s.chains).map(|k| chain_seed(cfg.seed, k)).collect();
    let chains = sample_chains(&params, &dom, &cfg.pot(), &cfg.sampler_config(), &seeds, cfg.parallel)?;
    let mut summary = Vec::new();
    for (k, ((state, diag), seed)) in chains.iter().zip(&seeds).enumerate() {
        let mut bytes = Vec::new();
        checkpoint::write_to(&mut bytes, &dom, state)?;
        run.write(&format!("sample_{k}.chk"), &bytes)?;
        summary.push(json!({ "chain": k, "seed": seed, "count": state.len(), "diagnostics": diag }));
    }
    run.write_json("sampler.json", &json!({ "ensemble": s.ensemble, "chains": summary }))?;
    run.finish()
}

fn md(cfg: &WorkbenchConfig, from: Option<&Path>) -> Result<Vec<Gate>> {
    let mut run = Run::open(cfg, "md")?;
    let path = from.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.join("sample_0.chk"));
    let (header, mut state) = checkpoint::load(&path)?;
    if header.dim != cfg.dim {
        return Err(Error::Config(format!("{} holds a {}-d state, config has domain.dim = {}", path.display(), header.dim, cfg.dim)));
    }
    let dom = domain(cfg, header.side)?;
    let pot = cfg.pot();
    let m = &cfg.md;
    let mode = if cfg.parallel { ForceMode::Parallel } else { ForceMode::Serial };
    let mut verlet = VelocityVerlet::new(&state, pot, dom, m.dt, mode)?;
    let speed: f64 = state.velocities.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).sum::<f64>().max(f64::MIN_POSITIVE);
    let e0 = verlet.potential_energy() + state.kinetic_energy();
    let mut p_block = total_invariants(&state, &pot, &dom)?.momentum;
    let (mut drift, mut dp) = (0.0f64, 0.0f64);

    let mut csv = String::from("step,time,kinetic,potential,energy");
    for a in 0..cfg.dim {
        let _ = write!(csv, ",momentum_{a}");
    }
    csv.push('\n');
    let row = |csv: &mut String, step: usize, state: &ghostflow_core::md::ParticleState, pe: f64| {
        let ke = state.kinetic_energy();
        let _ = write!(csv, "{step},{:e},{ke:e},{pe:e},{:e}", state.time, ke + pe);
        for a in 0..cfg.dim {
            let _ = write!(csv, ",{:e}", state.velocities.iter().map(|v| v[a]).sum::<f64>());
        }
        csv.push('\n');
    };
    row(&mut csv, 0, &state, verlet.potential_energy());
    for step in 1..=m.steps {
        verlet.step(&mut state)?;
        let e = verlet.potential_energy() + state.kinetic_energy();
        drift = drift.max((e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE));
        if step % m.sample_every == 0 {
            row(&mut csv, step, &state, verlet.potential_energy());
        }
        if step % 1000 == 0 || step == m.steps {
            let p = total_invariants(&state, &pot, &dom)?.momentum;
            for a in 0..3 {
                dp = dp.max((p[a] - p_block[a]).abs() / speed);
            }
            p_block = p;
        }
    }
    run.write("md_trajectory.csv", csv.as_bytes())?;
    let mut bytes = Vec::new();
    checkpoint::write_to(&mut bytes, &dom, &state)?;
    run.write("md_final.chk", &bytes)?;

    let grid = bin_fields(&state, &pot, &dom, &GridSpec::new(cfg.dim, m.grid_cells), cfg.epsilon)?;
    let mut fields = Vec::new();
    grid.write_ndjson(&mut fields)?;
    run.write("fields_final.ndjson", &fields)?;

    run.gate(Gate::at_most("md", "energy_drift", drift, m.energy_drift_max));
    run.gate(Gate::at_most("md", "momentum_per_1000_steps", dp, 1e-12));
    run.write_json(
        "md_report.json",
        &json!({
            "checkpoint": path.display().to_string(),
            "particles": state.len(),
            "steps": m.steps,
            "dt": m.dt,
            "start_time": header.time,
            "end_time": state.time,
            "macro_end_time": cfg.macro_time(state.time),
            "energy_drift": drift,
            "momentum_per_1000_steps": dp,
        }),
    )?;
    run.finish()
}

fn state_equation(run: &mut Run) -> Result<Box<dyn StateEquation>> {
    let cfg = run.cfg;
    match cfg.eos.table.as_str() {
        "ideal" => Ok(Box::new(IdealGas::new(cfg.dim))),
        "tabulate" => {
            let existing = cfg.output.join("eos_table.csv");
            if run.stage != "coefficients" && existing.exists() {
                return read_table(cfg.dim, &existing);
            }
            let table = tabulate_state_equation(cfg.dim, &cfg.eos.densities, &cfg.eos.temperatures, &cfg.pot(), &cfg.tabulation_config())?;
            let mut bytes = Vec::new();
            table.write_csv(&mut bytes)?;
            run.write("eos_table.csv", &bytes)?;
            let identity = thermodynamic_identity(&table, 10, 200, cfg.seed)?;
            let mut csv = String::from("rho,temperature,pressure,residual,error,passed\n");
            for p in &identity {
                let _ = writeln!(csv, "{:e},{:e},{:e},{:e},{:e},{}", p.rho, p.temperature, p.pressure, p.residual, p.error, p.passed());
            }
            run.write("identity.csv", csv.as_bytes())?;
            let failed = identity.iter().filter(|p| !p.passed()).count();
            run.gate(Gate::at_most(run.stage, "thermodynamic_identity_failures", failed as f64, 0.0));
            Ok(Box::new(table))
        }
        path => read_table(cfg.dim, Path::new(path)),
    }
}

fn read_table(dim: usize, path: &Path) -> Result<Box<dyn StateEquation>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    Ok(Box::new(StateEquationTable::read_csv(dim, std::io::BufReader::new(f))?))
}

fn coefficients(cfg: &WorkbenchConfig) -> Result<Vec<Gate>> {
    let mut run = Run::open(cfg, "coefficients")?;
    let t = cfg.sampler.temperature;
    let ens = run_equilibrium_ensemble(&cfg.equilibrium_config())?;
    let s = EnsembleSeries::new(&ens, cfg.correlators.max_lag)?;
    let rho = ens.frames().map(|f| f.count).sum::<f64>() / (ens.frame_count() as f64 * ens.volume());
    let eos = state_equation(&mut run)?;
    let chem = chemical_derivatives(eos.as_ref(), rho, t);
    let gk = green_kubo_coefficients(&s, t)?;
    let dt = double_time_integrals(&s)?;
    let tc = assemble_coefficients(&s, t, &chem, &gk, &dt)?;
    let mut bytes = Vec::new();
    tc.write_csv(&mut bytes)?;
    run.write("coefficients.csv", &bytes)?;

    let max_drift = ens.trajectories.iter().map(|tr| tr.energy_drift).fold(0.0, f64::max);
    run.write_json(
        "two_route.json",
        &json!({
            "density": rho,
            "temperature": t,
            "trajectories": ens.trajectories.len(),
            "frames": ens.frame_count(),
            "max_energy_drift": max_drift,
            "zeta": gk.zeta_routes,
            "kappa": gk.kappa_routes,
            "isotropy_max_sigma": gk.isotropy_max_sigma,
            "anisotropic": gk.anisotropic,
        }),
    )?;
    run.gate(Gate::at_most("coefficients", "zeta_two_route_sigma", gk.zeta_routes.sigma(), 2.0));
    run.gate(Gate::at_most("coefficients", "kappa_two_route_sigma", gk.kappa_routes.sigma(), 2.0));

    let rules = sum_rules(&s, t)?;
    let mut csv = String::from("name,measured,stderr,target,residual,residual_stderr,sigmas\n");
    for r in &rules {
        let _ = writeln!(
            csv,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.name, r.measured.value, r.measured.stderr, r.target, r.residual.value, r.residual.stderr, r.sigmas
        );
        run.gate(Gate::at_most("coefficients", &format!("sum_rule {}", r.name), r.sigmas, 3.0));
    }
    run.write("sum_rules.csv", csv.as_bytes())?;

    let c = &cfg.correlators;
    let null = galilean_null_test(&s, t, c.galilean_window, 0.0)?;
    run.gate(Gate::at_most("coefficients", "galilean_cross_sigma", null.sigmas, 3.0));
    run.gate(Gate::at_most("coefficients", "galilean_momentum_overlap_sigma", null.momentum_overlap.sigma_distance(0.0), 3.0));
    let control = if c.galilean_bias != 0.0 {
        let biased = galilean_null_test(&s, t, c.galilean_window, c.galilean_bias)?;
        run.gate(Gate::at_least("coefficients", "galilean_bias_detected_sigma", biased.sigmas, 3.0));
        Some(biased)
    } else {
        None
    };
    run.write_json("galilean.json", &json!({ "window": c.galilean_window, "test": null, "control": control }))?;

    let nonfinite = tc.entries().iter().filter(|(_, e)| !(e.value.is_finite() && e.stderr.is_finite())).count();
    run.gate(Gate::at_most("coefficients", "nonfinite_coefficients", nonfinite as f64, 0.0));
    run.finish()
}

/// eta, zeta, kappa, K1, K2, omega1 and omega2 from a coefficients CSV.
pub fn read_model(path: &Path) -> Result<TransportModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
    let mut values = BTreeMap::new();
    for line in text.lines().skip(1) {
        let mut cols = line.split(',');
        if let (Some(name), Some(v)) = (cols.next(), cols.next()) {
            let v: f64 = v.parse().map_err(|e| Error::Config(format!("{}: {name}: {e}", path.display())))?;
            values.insert(name.to_string(), v);
        }
    }
    let get = |n: &str| values.get(n).copied().ok_or_else(|| Error::Config(format!("{}: no `{n}` row", path.display())));
    Ok(TransportModel::constant(get("eta")?, get("zeta")?, get("kappa")?, get("K1")?, get("K2")?, get("omega1")?, get("omega2")?))
}

fn solve(cfg: &WorkbenchConfig) -> Result<Vec<Gate>> {
    let mut run = Run::open(cfg, "solve")?;
    let p = &cfg.pde;
    let sc = cfg.solver_config()?;
    let model = if p.coefficients_file.is_empty() { cfg.manual_model() } else { read_model(&cfg.output.join(&p.coefficients_file))? };
    let eos = if p.eos == "table" { state_equation(&mut run)? } else { Box::new(IdealGas::new(cfg.dim)) as Box<dyn StateEquation> };
    let (mode, flux) = (sc.mode.name(), sc.flux_form.name());
    run.manifest.record_setting("solve", "mode", mode);
    run.manifest.record_setting("solve", "flux_form", flux);
    run.manifest.record_setting("solve", "coefficients", if p.coefficients_file.is_empty() { "manual" } else { &p.coefficients_file });
    let newton = sc.newton_tolerance;
    let mut solver = Solver::new(sc, model, eos)?;
    let sp = solver.spectral().clone();
    let l = cfg.macro_side();
    let k = 2.0 * PI / l;
    let temperature = sp.sample(|x| p.temperature * (1.0 + p.t_amplitude * x.iter().map(|&xi| (k * xi).sin()).product::<f64>()));
    let mut u = vec![vec![0.0; sp.len()]; cfg.dim];
    if p.u_amplitude != 0.0 {
        u[0] = sp.sample(|x| p.u_amplitude * (k * x[1]).sin());
        u[1] = sp.sample(|x| 0.5 * p.u_amplitude * (2.0 * k * x[0]).cos());
    }
    let mut st = solver.initial_state(temperature, u, p.pbar)?;
    let m0 = solver.mass_target();
    let s0 = solver.entropy(&st);
    let mut csv = Vec::new();
    let diags = solver.run(&mut st, p.steps, Some(&mut csv))?;
    run.write("pde_diagnostics.csv", &csv)?;
    let mut snap = Vec::new();
    write_snapshot(&mut snap, sp.shape(), sp.lengths(), &st)?;
    run.write("pde_final.snap", &snap)?;

    let constraint = diags.iter().map(|d| d.constraint_residual).fold(0.0, f64::max) / (newton * p.pbar.abs().max(1.0));
    let mass = (sp.integrate(&st.rho) - m0).abs() / m0;
    let max_div = diags.iter().map(|d| d.max_divergence).fold(0.0, f64::max);
    let max_speed = diags.iter().map(|d| d.max_speed).fold(0.0, f64::max);
    let mut min_ds = f64::INFINITY;
    let mut prev = s0;
    for d in &diags {
        min_ds = min_ds.min(d.entropy - prev);
        prev = d.entropy;
    }
    run.gate(Gate::at_most("solve", "constraint_over_newton_tolerance", constraint, 10.0));
    run.gate(Gate::at_most("solve", "relative_mass_change", mass, 1e-12 * (p.steps as f64 / 1000.0).max(1.0)));
    match p.mode.as_str() {
        "insf-reduction" => run.gate(Gate::at_most("solve", "max_divergence", max_div, 1e-10)),
        "conduction-only" => run.gate(Gate::at_least("solve", "min_entropy_increment", min_ds, 0.0)),
        _ => {}
    }
    run.write_json(
        "solve.json",
        &json!({
            "mode": mode,
            "flux_form": flux,
            "cells": p.cells,
            "side": l,
            "steps": p.steps,
            "dt": p.dt,
            "end_time": st.time,
            "micro_end_time": st.time / (cfg.epsilon * cfg.epsilon),
            "max_speed": max_speed,
            "max_divergence": max_div,
            "min_entropy_increment": min_ds,
        }),
    )?;
    run.finish()
}

fn report(cfg: &WorkbenchConfig) -> Result<Vec<Gate>> {
    let dir = &cfg.output;
    let mut manifest = RunManifest::load(dir)?;
    if manifest.files.is_empty() {
        return Err(Error::Checksum(format!("{}: no manifest", dir.display())));
    }
    let problems = manifest.verify(dir)?;
    let started = Instant::now();
    manifest.begin_stage("report");

    let mut text = String::new();
    let _ = writeln!(text, "config hash  {}", manifest.config_hash);
    let _ = writeln!(text, "code version {}", manifest.code_version);
    let _ = writeln!(text, "stages       {}", manifest.stages.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(" "));
    for (k, v) in &manifest.settings {
        let _ = writeln!(text, "setting      {k} = {v}");
    }
    let _ = writeln!(text, "\ngates");
    let mut csv = String::from("stage,name,value,threshold,passed\n");
    for g in &manifest.gates {
        let _ = writeln!(text, "  {} {:<12} {:<40} {:>12.4e} (limit {:.4e})", if g.passed { "PASS" } else { "FAIL" }, g.stage, g.name, g.value, g.threshold);
        let _ = writeln!(csv, "{},{},{:e},{:e},{}", g.stage, g.name, g.value, g.threshold, g.passed);
    }
    let _ = writeln!(text, "\nfiles");
    let mut files: Vec<_> = manifest.files.iter().filter(|f| f.stage != "report").collect();
    files.sort_by(|a, b| a.path.cmp(&b.path));
    for f in files {
        let _ = writeln!(text, "  {}  {:<12} {}", f.sha256, f.stage, f.path);
    }
    let _ = writeln!(text, "\nchecksum problems: {}", problems.len());
    for p in &problems {
        let _ = writeln!(text, "  {p}");
    }
    for (rel, body) in [("report.txt", &text), ("gates.csv", &csv)] {
        let path = dir.join(rel);
        std::fs::write(&path, body).map_err(|e| Error::io(path.display(), e))?;
        manifest.record_file(dir, rel, "report")?;
    }
    let hash = manifest.config_hash.clone();
    manifest.finish_stage("report", &hash, started.elapsed().as_secs_f64());
    manifest.save(dir)?;
    if !problems.is_empty() {
        return Err(Error::Checksum(problems.join("; ")));
    }
    let failed: Vec<String> = manifest.gates.iter().filter(|g| !g.passed).map(|g| format!("{}/{}", g.stage, g.name)).collect();
    if failed.is_empty() {
        Ok(manifest.gates)
    } else {
        Err(Error::Gate(failed))
    }
}
