//! Runs shared by the subcommands and the presets.

use std::path::Path;

use rayon::prelude::*;
use spikepattern_core::convergence::{self, assemble_study, ConvergenceStudy, LevelRun};
use spikepattern_core::diagnostics::mass_bound_monitor;
use spikepattern_core::grid::{Mesh1D, PerturbationSpec};
use spikepattern_core::integrator::{simulate, IntegratorConfig, Run, State};
use spikepattern_core::kinetics::ModelParams;

use crate::config::ScenarioConfig;
use crate::error::HarnessError;
use crate::output::{self, fmt_real};

/// Tail of a run checked against the mass bounds.
pub const MASS_TAIL: f64 = 0.5;

/// Simulates a scenario.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Run, HarnessError> {
    let p = cfg.model_params()?;
    let mesh = Mesh1D::dyadic(cfg.mesh_level)?;
    Ok(simulate(&p, mesh, &cfg.ic, &cfg.integrator)?)
}

/// Writes diagnostics, snapshots, report and the normalized configuration of a run.
/// Locations set in `cfg.outputs` override the defaults under `out`.
pub fn write_run(
    out: &Path,
    cfg: &ScenarioConfig,
    run: &Run,
    title: &str,
) -> Result<(), HarnessError> {
    let p = cfg.model_params()?;
    let at = |o: &Option<std::path::PathBuf>, default: &str| {
        out.join(o.as_deref().unwrap_or(Path::new(default)))
    };
    output::write_diagnostics(&at(&cfg.outputs.csv, "diagnostics.csv"), &run.diagnostics)?;
    output::write_snapshots(&at(&cfg.outputs.snapshots, "snapshots"), &run.snapshots)?;
    let mass = mass_bound_monitor(&run.diagnostics, &p.kinetics, MASS_TAIL);
    let header = format!(
        "{title}\nmesh: 2^{} cells\nparameters: a1 = {}, d1 = {}, kappa1 = {}, D_w = {}\n",
        cfg.mesh_level,
        fmt_real(p.kinetics.a1()),
        fmt_real(p.kinetics.d1()),
        fmt_real(p.kinetics.kappa1()),
        fmt_real(p.d_w())
    );
    let report = output::run_report_text(&header, &run.diagnostics, run.steps, &mass);
    output::write_text(&at(&cfg.outputs.report, "report.txt"), &report)?;
    output::write_text(&out.join("config.txt"), &cfg.to_config_string())?;
    Ok(())
}

/// Runs every study level and the reference on the current rayon pool and assembles the
/// study. Results are collected in level order, so the study does not depend on the pool.
pub fn run_convergence(
    scenario: &str,
    p: &ModelParams,
    ic: &PerturbationSpec,
    levels: &[u32],
    ref_level: u32,
    cfg: &IntegratorConfig,
) -> Result<ConvergenceStudy, HarnessError> {
    convergence::check_levels(levels, ref_level)?;
    let mut all: Vec<u32> = levels.to_vec();
    all.push(ref_level);
    let runs: Vec<Vec<State>> = all
        .par_iter()
        .map(|&l| -> Result<Vec<State>, HarnessError> {
            Ok(simulate(p, Mesh1D::dyadic(l)?, ic, cfg)?.snapshots)
        })
        .collect::<Result<_, _>>()?;
    let views: Vec<LevelRun<'_>> = all
        .iter()
        .zip(&runs)
        .map(|(&level, s)| LevelRun {
            level,
            snapshots: s,
        })
        .collect();
    let (reference, study) = views.split_last().expect("reference run present");
    Ok(assemble_study(
        scenario,
        study,
        *reference,
        cfg.dt,
        cfg.dt,
        &cfg.snapshot_times,
    )?)
}
