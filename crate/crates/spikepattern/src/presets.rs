//! Named scenarios behind the published figures and tables.
//!
//! Every preset runs on `h = 2^-10` with `dt = 2.5e-4` implicit Euler up to `T = 25` unless
//! noted otherwise.
//!
//! | preset | parameters `(a1, d1, kappa1, D_w)` | initial data | notes |
//! |---|---|---|---|
//! | `Fig1s` | `(2, 1, 3, 6)` | spline bump `s = 0.4`, `eps = 0.1`, `eps1 = 0.05` | one spike near 0.43 |
//! | `MultiSpikeDw1` | `(2, 1, 3, 1)` | as `Fig1s` | several spikes |
//! | `Cos` | `(2, 1, 3, 2)` | `u_- - 0.05 cos(4 pi x)` | `T = 10`, growth orders at 0.250092 and 0.5 |
//! | `CosXX` | `(2, 1, 3, 2)` | `u_- - 0.05 cos(4 pi x^2)` | `T = 10`, growth orders also at 0.866028, Fourier data |
//! | `TrivStab` | `(2.5, 1.5, 4, 2)` | bump of height 0.2 on `(0, kappa1)` | decay to the trivial state |
//! | `NewParams` | `(2.5, 1.5, 4, 5.8541)` | spline bump `s = 0.4`, `eps = 0.05`, `eps1 = 0.1` | |
//! | `TableSpikePositions` | `(2, 1, 3, 6)` | spline bump at `s` in 0.2, 0.4, 0.5, 0.7, 0.85 | final spike positions |
//! | `TableSpikeCounts` | `(2, 1, 3, D_w,1 / j^2)`, `j = 1..=6` | as `Fig1s` | final spike counts |
//! | `ConvergenceSisp` | as `Fig1s` | as `Fig1s` | levels 7 to 10 against 13, `dt = 0.01` |
//! | `DispersionPlot` | `(2, 1, 3, 2)` | none | dispersion relation for `k <= 64` |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use spikepattern_core::diagnostics::{finite_fourier, growth_order, FourierSign, ProbeOrder};
use spikepattern_core::grid::{CosineForm, PerturbationSpec};
use spikepattern_core::integrator::{IntegratorConfig, TimeScheme, DEFAULT_DT};
use spikepattern_core::kinetics::{steady_state, Branch, ModelParams};
use spikepattern_core::stability::{critical_diffusion, ddi_report, DEFAULT_K_MAX};

use crate::config::{ParamSource, ScenarioConfig, DEFAULT_MESH_LEVEL, DEFAULT_T_END};
use crate::error::HarnessError;
use crate::output::{self, fmt_real, join_positions};
use crate::tasks::{run_convergence, run_scenario, write_run};

/// A named scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
#[value(rename_all = "verbatim")]
pub enum Preset {
    /// Single spike, `D_w = 6`.
    Fig1s,
    /// Several spikes, `D_w = 1`.
    MultiSpikeDw1,
    /// `cos(4 pi x)` perturbation.
    Cos,
    /// `cos(4 pi x^2)` perturbation.
    CosXX,
    /// Stability of the trivial state.
    TrivStab,
    /// Parameters `(2.5, 1.5, 4)`.
    NewParams,
    /// Final spike position against the bump centre.
    TableSpikePositions,
    /// Final spike count against `D_w`.
    TableSpikeCounts,
    /// Mesh convergence of the single spike run.
    ConvergenceSisp,
    /// Dispersion relation.
    DispersionPlot,
}

/// Bump centres of the position table.
pub const POSITION_CENTRES: [f64; 5] = [0.2, 0.4, 0.5, 0.7, 0.85];
/// Divisors `j` in `D_w,1 / j^2` of the count table.
pub const COUNT_DIVISORS: [u32; 6] = [1, 2, 3, 4, 5, 6];
/// Probes for the `cos` growth orders.
pub const COS_PROBES: [f64; 2] = [0.250092, 0.5];
/// Probes for the `cos(4 pi x^2)` growth orders.
pub const COSXX_PROBES: [f64; 3] = [0.250092, 0.5, 0.866028];
/// Study levels of the convergence preset.
pub const CONVERGENCE_LEVELS: [u32; 4] = [7, 8, 9, 10];
/// Reference level of the convergence preset.
pub const CONVERGENCE_REFERENCE: u32 = 13;
/// Sample times of the convergence preset.
pub const CONVERGENCE_TIMES: [f64; 6] = [1.0, 5.0, 10.0, 15.0, 20.0, 25.0];
/// Frequencies of the Fourier data, `omega = 0, 1, ..`.
pub const FOURIER_MAX_OMEGA: u32 = 64;

impl Preset {
    /// All presets.
    pub const ALL: [Self; 10] = [
        Self::Fig1s,
        Self::MultiSpikeDw1,
        Self::Cos,
        Self::CosXX,
        Self::TrivStab,
        Self::NewParams,
        Self::TableSpikePositions,
        Self::TableSpikeCounts,
        Self::ConvergenceSisp,
        Self::DispersionPlot,
    ];

    /// Canonical name.
    pub fn name(self) -> &'static str {
        match self {
            Self::Fig1s => "Fig1s",
            Self::MultiSpikeDw1 => "MultiSpikeDw1",
            Self::Cos => "Cos",
            Self::CosXX => "CosXX",
            Self::TrivStab => "TrivStab",
            Self::NewParams => "NewParams",
            Self::TableSpikePositions => "TableSpikePositions",
            Self::TableSpikeCounts => "TableSpikeCounts",
            Self::ConvergenceSisp => "ConvergenceSisp",
            Self::DispersionPlot => "DispersionPlot",
        }
    }

    /// The scenario. Sweeping presets return their base run (the `Fig1s` setup).
    pub fn scenario(self) -> ScenarioConfig {
        let params = |a1, d1, kappa1, d_w| {
            ParamSource::Reduced(ModelParams::from_values(a1, d1, kappa1, d_w).expect("positive"))
        };
        let every = |step: f64, t_end: f64| -> Vec<f64> {
            let n = (t_end / step).round() as usize;
            (0..=n).map(|i| i as f64 * step).collect()
        };
        let mut integrator =
            IntegratorConfig::new(TimeScheme::ImplicitEuler, DEFAULT_DT, DEFAULT_T_END);
        integrator.snapshot_times = every(1.0, DEFAULT_T_END);
        // One diagnostics row per 0.1 time units.
        integrator.monitor_stride = 400;
        let mut c = ScenarioConfig {
            params: params(2.0, 1.0, 3.0, 6.0),
            ic: PerturbationSpec::Spline {
                s: 0.4,
                eps: 0.1,
                eps1: 0.05,
            },
            mesh_level: DEFAULT_MESH_LEVEL,
            integrator,
            outputs: Default::default(),
            preset: Some(self),
        };
        let cosine = |c: &mut ScenarioConfig, form| {
            c.params = params(2.0, 1.0, 3.0, 2.0);
            c.ic = PerturbationSpec::Cosine { form, eps: 0.05 };
            c.integrator.t_end = 10.0;
            c.integrator.snapshot_times = every(0.25, 10.0);
        };
        match self {
            Self::Fig1s | Self::TableSpikePositions | Self::TableSpikeCounts => {}
            Self::MultiSpikeDw1 => c.params = params(2.0, 1.0, 3.0, 1.0),
            Self::Cos => cosine(&mut c, CosineForm::Linear),
            Self::CosXX => cosine(&mut c, CosineForm::Quadratic),
            Self::TrivStab => {
                c.params = params(2.5, 1.5, 4.0, 2.0);
                c.ic = PerturbationSpec::NearTrivial { amplitude: 0.2 };
            }
            Self::NewParams => {
                c.params = params(2.5, 1.5, 4.0, 5.8541);
                c.ic = PerturbationSpec::Spline {
                    s: 0.4,
                    eps: 0.05,
                    eps1: 0.1,
                };
            }
            Self::ConvergenceSisp => {
                c.integrator.dt = 0.01;
                c.integrator.snapshot_times = CONVERGENCE_TIMES.to_vec();
                c.integrator.monitor_stride = 0;
            }
            Self::DispersionPlot => c.params = params(2.0, 1.0, 3.0, 2.0),
        }
        c
    }

    /// Growth-order probes, for the cosine presets.
    pub fn probes(self) -> &'static [f64] {
        match self {
            Self::Cos => &COS_PROBES,
            Self::CosXX => &COSXX_PROBES,
            _ => &[],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
                format!("unknown preset `{s}`; expected one of {}", names.join(", "))
            })
    }
}

/// One row of the position table.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionRow {
    /// Bump centre.
    pub s: f64,
    /// Location of the maximum of `u` at `t = 0`.
    pub initial: f64,
    /// Location of the maximum of `u` at the final time.
    pub final_position: f64,
    /// Final spike count.
    pub spike_count: usize,
}

/// One row of the count table.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRow {
    /// Divisor `j`.
    pub j: u32,
    /// `D_w,1 / j^2`.
    pub d_w: f64,
    /// Final spike count.
    pub spike_count: usize,
    /// Final spike positions.
    pub positions: Vec<f64>,
}

/// Runs the position sweep on the current rayon pool.
pub fn spike_positions(base: &ScenarioConfig) -> Result<Vec<PositionRow>, HarnessError> {
    POSITION_CENTRES
        .par_iter()
        .map(|&s| {
            let mut c = base.clone();
            if let PerturbationSpec::Spline { eps, eps1, .. } = base.ic {
                c.ic = PerturbationSpec::Spline { s, eps, eps1 };
            }
            let run = run_scenario(&c)?;
            let rows = &run.diagnostics.rows;
            let (first, last) = (rows.first(), rows.last());
            Ok(PositionRow {
                s,
                initial: first.map_or(f64::NAN, |r| r.argmax_u),
                final_position: last.map_or(f64::NAN, |r| r.argmax_u),
                spike_count: last.map_or(0, |r| r.spike_count),
            })
        })
        .collect()
}

/// Runs the count sweep on the current rayon pool.
pub fn spike_counts(base: &ScenarioConfig) -> Result<Vec<CountRow>, HarnessError> {
    let p = base.model_params()?;
    let d1 = critical_diffusion(&p.kinetics, 1)?;
    COUNT_DIVISORS
        .par_iter()
        .map(|&j| {
            let d_w = d1 / f64::from(j * j);
            let mut c = base.clone();
            c.params = ParamSource::Reduced(
                p.with_d_w(d_w)
                    .map_err(|e| HarnessError::Usage(e.to_string()))?,
            );
            let run = run_scenario(&c)?;
            let last = run.diagnostics.last();
            Ok(CountRow {
                j,
                d_w,
                spike_count: last.map_or(0, |r| r.spike_count),
                positions: last.map(|r| r.spike_positions.clone()).unwrap_or_default(),
            })
        })
        .collect()
}

/// Growth orders of every snapshot at the preset's probes, as rows `(t, probe, order)`.
/// Undefined orders are `None`.
pub fn growth_orders(
    p: &ModelParams,
    run: &spikepattern_core::integrator::Run,
    probes: &[f64],
) -> Vec<(f64, f64, Option<f64>)> {
    let Some(s) = steady_state(&p.kinetics, Branch::Minus) else {
        return Vec::new();
    };
    let Some(first) = run.snapshots.first() else {
        return Vec::new();
    };
    run.snapshots
        .iter()
        .filter(|snap| snap.t > 0.0)
        .flat_map(|snap| {
            growth_order(&snap.u, &first.u, s.u_bar, snap.t, probes)
                .into_iter()
                .zip(probes)
                .map(|(o, &x)| (snap.t, x, ProbeOrder::value(o)))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Runs a preset end to end, writing into `out`. Returns a short summary for the terminal.
pub fn run_preset(preset: Preset, out: &Path) -> Result<String, HarnessError> {
    let cfg = preset.scenario();
    let p = cfg.model_params()?;
    match preset {
        Preset::TableSpikePositions => {
            let rows = spike_positions(&cfg)?;
            let header = ["s", "initial_position", "final_position", "spike_count"]
                .map(String::from)
                .to_vec();
            let body = rows.iter().map(|r| {
                vec![
                    fmt_real(r.s),
                    fmt_real(r.initial),
                    fmt_real(r.final_position),
                    r.spike_count.to_string(),
                ]
            });
            output::write_csv(
                &out.join("spike_positions.csv"),
                std::iter::once(header).chain(body),
            )?;
            output::write_text(&out.join("config.txt"), &cfg.to_config_string())?;
            Ok(rows
                .iter()
                .map(|r| format!("s = {}: final position {:.5}\n", r.s, r.final_position))
                .collect())
        }
        Preset::TableSpikeCounts => {
            let rows = spike_counts(&cfg)?;
            let body = rows.iter().map(|r| {
                (
                    vec![r.j.to_string(), fmt_real(r.d_w), r.spike_count.to_string()],
                    join_positions(&r.positions),
                )
            });
            output::write_list_csv(
                &out.join("spike_counts.csv"),
                &["j", "d_w", "spike_count", "spike_positions"],
                body,
            )?;
            output::write_text(&out.join("config.txt"), &cfg.to_config_string())?;
            Ok(rows
                .iter()
                .map(|r| format!("D_w = {:.6}: {} spikes\n", r.d_w, r.spike_count))
                .collect())
        }
        Preset::ConvergenceSisp => {
            let study = run_convergence(
                preset.name(),
                &p,
                &cfg.ic,
                &CONVERGENCE_LEVELS,
                CONVERGENCE_REFERENCE,
                &cfg.integrator,
            )?;
            output::write_study(
                &out.join("convergence_errors.csv"),
                &out.join("convergence_orders.csv"),
                &study,
            )?;
            output::write_text(&out.join("config.txt"), &cfg.to_config_string())?;
            Ok(study
                .orders
                .iter()
                .map(|o| {
                    format!(
                        "h = {:e}, t = {}: L2 order of u {:?}\n",
                        o.h, o.t, o.order_l2_u
                    )
                })
                .collect())
        }
        Preset::DispersionPlot => {
            let r = ddi_report(&p, DEFAULT_K_MAX)?;
            output::write_dispersion(&out.join("dispersion.csv"), &r)?;
            let text = output::ddi_report_text(&r);
            output::write_text(&out.join("report.txt"), &text)?;
            Ok(text)
        }
        _ => {
            let run = run_scenario(&cfg)?;
            write_run(out, &cfg, &run, &format!("preset {}", preset.name()))?;
            if !preset.probes().is_empty() {
                write_growth_data(out, &p, &run, preset.probes())?;
            }
            let last = run.diagnostics.last();
            Ok(format!(
                "final spike positions: {}\n",
                last.map(|r| join_positions(&r.spike_positions))
                    .unwrap_or_default()
            ))
        }
    }
}

/// `growth_orders.csv` (`t,x,order`) and `fourier.csv` (`t,omega,re,im,abs`) for the
/// deviation `u - u_-` at the first and last snapshot, with the `e^{+i pi omega x}` sign
/// (`abs` is the same for either sign).
fn write_growth_data(
    out: &Path,
    p: &ModelParams,
    run: &spikepattern_core::integrator::Run,
    probes: &[f64],
) -> Result<(), HarnessError> {
    let header = ["t", "x", "order"].map(String::from).to_vec();
    let body = growth_orders(p, run, probes).into_iter().map(|(t, x, o)| {
        vec![
            fmt_real(t),
            fmt_real(x),
            o.map(fmt_real).unwrap_or_default(),
        ]
    });
    output::write_csv(
        &out.join("growth_orders.csv"),
        std::iter::once(header).chain(body),
    )?;
    let Some(s) = steady_state(&p.kinetics, Branch::Minus) else {
        return Ok(());
    };
    let header = ["t", "omega", "re", "im", "abs"].map(String::from).to_vec();
    let ends = [run.snapshots.first(), run.snapshots.last()];
    let mut body = Vec::new();
    for snap in ends.into_iter().flatten() {
        let n = snap.u.mesh().n_cells();
        for omega in 0..=FOURIER_MAX_OMEGA {
            let f = finite_fourier(
                |x| snap.u.interpolate(x) - s.u_bar,
                f64::from(omega),
                n,
                FourierSign::Positive,
            );
            body.push(vec![
                fmt_real(snap.t),
                omega.to_string(),
                fmt_real(f.re),
                fmt_real(f.im),
                fmt_real(f.norm()),
            ]);
        }
    }
    output::write_csv(
        &out.join("fourier.csv"),
        std::iter::once(header).chain(body),
    )?;
    Ok(())
}
