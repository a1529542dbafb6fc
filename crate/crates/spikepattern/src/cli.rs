//! Command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use spikepattern_core::kinetics::{integrate_kinetics, KineticScheme, DEFAULT_KINETIC_DT};
use spikepattern_core::stability::{ddi_report, DEFAULT_K_MAX};
use spikepattern_core::steady_bvp::{
    n_mode_profile, periodic_profile, residual, shoot_monotone, SteadyError, DEFAULT_N_GRID,
};

use crate::config::{load_config_with_preset, ScenarioConfig};
use crate::error::{HarnessError, EXIT_CONFIG, EXIT_OK};
use crate::output;
use crate::presets::{run_preset, Preset, CONVERGENCE_LEVELS, CONVERGENCE_REFERENCE};
use crate::tasks::{run_convergence, run_scenario, write_run};

/// Spike pattern simulator for the reaction-diffusion-ODE model.
#[derive(Debug, Parser)]
#[command(name = "spikepattern", version)]
pub struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Scenario configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Start from a preset scenario; keys in --config override it.
    #[arg(long, global = true, value_name = "NAME", ignore_case = true)]
    preset: Option<Preset>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Worker threads for sweeps and studies (0: one per hardware thread).
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stability analysis: report.txt and dispersion.csv.
    Analyze {
        /// Largest mode number in the dispersion table.
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        k_max: u32,
    },
    /// Time integration: diagnostics.csv, snapshots/, report.txt.
    Simulate,
    /// Kinetic ODE trajectory: kinetics.csv.
    Kinetics {
        /// Initial cell density.
        #[arg(long, default_value_t = 1.0)]
        u0: f64,
        /// Initial growth factor.
        #[arg(long, default_value_t = 1.0)]
        w0: f64,
        /// Step size.
        #[arg(long, default_value_t = DEFAULT_KINETIC_DT)]
        dt: f64,
        /// Final time.
        #[arg(long, default_value_t = 50.0)]
        t_end: f64,
        /// Time scheme.
        #[arg(long, value_enum, default_value_t = KineticSchemeArg::Rk4)]
        scheme: KineticSchemeArg,
    },
    /// Nonconstant steady state: steady_profile.txt.
    Steady {
        /// Number of monotone pieces.
        #[arg(long, default_value_t = 1)]
        modes: u32,
        /// Shooting grid size.
        #[arg(long, default_value_t = DEFAULT_N_GRID)]
        n_grid: usize,
        /// Use the mirror image, decreasing on the first piece.
        #[arg(long)]
        decreasing: bool,
    },
    /// Mesh convergence study: convergence_errors.csv and convergence_orders.csv. The
    /// configured snapshot times are the sample times.
    Converge {
        /// Study mesh levels.
        #[arg(long, value_delimiter = ',', default_values_t = CONVERGENCE_LEVELS)]
        levels: Vec<u32>,
        /// Reference mesh level.
        #[arg(long, default_value_t = CONVERGENCE_REFERENCE)]
        reference: u32,
    },
    /// Runs a preset scenario end to end.
    Preset {
        /// Preset name.
        #[arg(ignore_case = true)]
        name: Preset,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KineticSchemeArg {
    Rk4,
    ImplicitEuler,
    CrankNicolson,
}

impl From<KineticSchemeArg> for KineticScheme {
    fn from(s: KineticSchemeArg) -> Self {
        match s {
            KineticSchemeArg::Rk4 => Self::Rk4,
            KineticSchemeArg::ImplicitEuler => Self::ImplicitEuler,
            KineticSchemeArg::CrankNicolson => Self::CrankNicolson,
        }
    }
}

/// Parses `argv`, runs the command and returns the exit code: 0 on success, 1 for
/// configuration or usage errors, 2 for numerical faults.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(summary) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(summary.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn scenario(g: &GlobalArgs) -> Result<ScenarioConfig, HarnessError> {
    match (&g.config, g.preset) {
        (Some(path), base) => Ok(load_config_with_preset(path, base)?),
        (None, Some(p)) => Ok(p.scenario()),
        (None, None) => Ok(ScenarioConfig::default()),
    }
}

fn run(cli: Cli) -> Result<String, HarnessError> {
    let g = &cli.global;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads)
        .build()
        .map_err(|e| HarnessError::Usage(e.to_string()))?;
    let out: &Path = &g.out;
    match cli.command {
        Command::Preset { name } => {
            if g.config.is_some() || g.preset.is_some() {
                return Err(HarnessError::Usage(
                    "`preset` takes its whole scenario from the preset; drop --config/--preset"
                        .into(),
                ));
            }
            pool.install(|| run_preset(name, out))
        }
        Command::Analyze { k_max } => {
            let p = scenario(g)?.model_params()?;
            let r = ddi_report(&p, k_max)?;
            output::write_dispersion(&out.join("dispersion.csv"), &r)?;
            let text = output::ddi_report_text(&r);
            output::write_text(&out.join("report.txt"), &text)?;
            Ok(text)
        }
        Command::Simulate => {
            let cfg = scenario(g)?;
            let run = run_scenario(&cfg)?;
            let title = match cfg.preset {
                Some(p) => format!("simulation (base preset {p})"),
                None => "simulation".into(),
            };
            write_run(out, &cfg, &run, &title)?;
            let last = run.diagnostics.last();
            Ok(format!(
                "{} steps; final spike positions: {}\n",
                run.steps,
                last.map(|r| output::join_positions(&r.spike_positions))
                    .unwrap_or_default()
            ))
        }
        Command::Kinetics {
            u0,
            w0,
            dt,
            t_end,
            scheme,
        } => {
            let p = scenario(g)?.model_params()?;
            let traj = integrate_kinetics(&p.kinetics, u0, w0, dt, t_end, scheme.into())?;
            output::write_kinetics(&out.join("kinetics.csv"), &traj)?;
            let end = traj.last().expect("trajectory includes t = 0");
            Ok(format!(
                "u({}) = {}, w({}) = {}\n",
                end.t,
                output::fmt_real(end.u),
                end.t,
                output::fmt_real(end.w)
            ))
        }
        Command::Steady {
            modes,
            n_grid,
            decreasing,
        } => {
            let p = scenario(g)?.model_params()?;
            let profile = if decreasing {
                // Mirroring an even tiling gives back the same tiling, so the base piece
                // is mirrored before tiling.
                if modes == 0 {
                    return Err(SteadyError::InvalidSize.into());
                }
                let m = f64::from(modes);
                let scaled = p
                    .with_d_w(p.d_w() * m * m)
                    .map_err(|e| HarnessError::Usage(e.to_string()))?;
                periodic_profile(&shoot_monotone(&scaled, n_grid)?.reflected(), modes)?
            } else {
                n_mode_profile(&p, modes, n_grid)?
            };
            output::write_steady_profile(&out.join("steady_profile.txt"), &profile)?;
            Ok(format!(
                "{}, residual {:e}\n",
                output::steady_summary(&profile),
                residual(&p, &profile)
            ))
        }
        Command::Converge { levels, reference } => {
            let cfg = scenario(g)?;
            let p = cfg.model_params()?;
            let name = cfg.preset.map_or("custom", Preset::name);
            let study = pool.install(|| {
                run_convergence(name, &p, &cfg.ic, &levels, reference, &cfg.integrator)
            })?;
            output::write_study(
                &out.join("convergence_errors.csv"),
                &out.join("convergence_orders.csv"),
                &study,
            )?;
            Ok(format!(
                "{} error rows, {} order rows\n",
                study.errors.len(),
                study.orders.len()
            ))
        }
    }
}
