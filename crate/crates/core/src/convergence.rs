//! Mesh convergence against a fine reference solution.
//!
//! Errors are measured on each coarse mesh after nodal restriction of the
//! reference (dyadic meshes are nested, so this is exact extraction), in the
//! exact `L^1` / `L^2` norms of the piecewise-linear difference. Interpolating
//! the coarse solution onto the fine mesh instead would also see the
//! interpolation error of the coarse space; restriction does not.

use alloc::string::String;
use alloc::vec::Vec;
use libm::log2;

use crate::grid::{l1_norm, l2_norm, Field, GridError, Mesh1D, PerturbationSpec};
use crate::integrator::{self, IntegratorConfig, SimulationError, State};
use crate::kinetics::ModelParams;

/// Convergence study failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConvergenceError {
    /// Coarse nodes are not fine nodes.
    #[error("mesh with {coarse} cells is not nested in mesh with {fine} cells")]
    NotNested {
        /// Coarse cell count.
        coarse: usize,
        /// Fine cell count.
        fine: usize,
    },
    /// The reference is not fine enough.
    #[error("reference level {reference} must exceed the finest level {finest} by at least 3")]
    ReferenceTooCoarse {
        /// Finest study level.
        finest: u32,
        /// Reference level.
        reference: u32,
    },
    /// No mesh levels.
    #[error("no mesh levels given")]
    NoLevels,
    /// A run lacks a snapshot at a sample time.
    #[error("no snapshot at t = {t} for mesh level {level}")]
    MissingSample {
        /// Sample time.
        t: f64,
        /// Mesh level.
        level: u32,
    },
    /// Mesh construction failed.
    #[error(transparent)]
    Grid(#[from] GridError),
    /// A simulation failed.
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

/// Values of `fine` at the nodes of `coarse`.
pub fn restrict_to(coarse: Mesh1D, fine: &Field) -> Result<Field, ConvergenceError> {
    let fm = fine.mesh();
    let (nc, nf) = (coarse.n_cells(), fm.n_cells());
    if nf % nc != 0 {
        return Err(ConvergenceError::NotNested {
            coarse: nc,
            fine: nf,
        });
    }
    let stride = nf / nc;
    let v = fine.values();
    Ok(Field::new(coarse, (0..=nc).map(|i| v[i * stride]).collect())?)
}

/// Errors of one level at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    /// Mesh size.
    pub h: f64,
    /// Sample time.
    pub t: f64,
    /// `||u_h - R u_ref||_1`.
    pub e_l1_u: f64,
    /// `||u_h - R u_ref||_2`.
    pub e_l2_u: f64,
    /// `||w_h - R w_ref||_1`.
    pub e_l1_w: f64,
    /// `||w_h - R w_ref||_2`.
    pub e_l2_w: f64,
}

/// Observed orders between mesh sizes `h` and `h / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRow {
    /// The coarser mesh size of the pair.
    pub h: f64,
    /// Sample time.
    pub t: f64,
    /// `L^2` order for `u`, if both errors are above the floor.
    pub order_l2_u: Option<f64>,
    /// `L^2` order for `w`, if both errors are above the floor.
    pub order_l2_w: Option<f64>,
}

/// Errors at or below this are treated as zero and get no order.
pub const ERROR_FLOOR: f64 = 1e-14;

/// `log2(e_coarse / e_fine)` when both errors exceed [`ERROR_FLOOR`].
pub fn observed_order(e_coarse: f64, e_fine: f64) -> Option<f64> {
    (e_coarse > ERROR_FLOOR && e_fine > ERROR_FLOOR).then(|| log2(e_coarse / e_fine))
}

/// A finished study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    /// Free-form label.
    pub scenario: String,
    /// Dyadic levels studied (ascending).
    pub mesh_levels: Vec<u32>,
    /// Reference level.
    pub reference_level: u32,
    /// Time step of the study runs.
    pub dt: f64,
    /// Time step of the reference run.
    pub dt_ref: f64,
    /// Sample times.
    pub sample_times: Vec<f64>,
    /// One row per (level, time), level-major.
    pub errors: Vec<ErrorRow>,
    /// One row per consecutive level pair and time.
    pub orders: Vec<OrderRow>,
}

impl ConvergenceStudy {
    /// The error row for mesh size `h` at time `t`.
    pub fn error_at(&self, h: f64, t: f64) -> Option<&ErrorRow> {
        self.errors
            .iter()
            .find(|r| r.h == h && (r.t - t).abs() <= 1e-9 * t.max(1.0))
    }

    /// Order rows at time `t`, coarse to fine.
    pub fn orders_at(&self, t: f64) -> Vec<OrderRow> {
        self.orders
            .iter()
            .filter(|r| (r.t - t).abs() <= 1e-9 * t.max(1.0))
            .copied()
            .collect()
    }
}

fn snapshot_at(states: &[State], t: f64, level: u32) -> Result<&State, ConvergenceError> {
    states
        .iter()
        .find(|s| (s.t - t).abs() <= 1e-9 * t.max(1.0))
        .ok_or(ConvergenceError::MissingSample { t, level })
}

/// Simulation output for one level, used by [`assemble_study`].
#[derive(Debug, Clone, Copy)]
pub struct LevelRun<'a> {
    /// Dyadic level.
    pub level: u32,
    /// Snapshots containing every sample time.
    pub snapshots: &'a [State],
}

/// Builds a study from precomputed runs. The reference may coincide with a level.
pub fn assemble_study(
    scenario: &str,
    runs: &[LevelRun<'_>],
    reference: LevelRun<'_>,
    dt: f64,
    dt_ref: f64,
    sample_times: &[f64],
) -> Result<ConvergenceStudy, ConvergenceError> {
    if runs.is_empty() {
        return Err(ConvergenceError::NoLevels);
    }
    let mut runs = runs.to_vec();
    runs.sort_by_key(|r| r.level);
    let mut errors = Vec::with_capacity(runs.len() * sample_times.len());
    for run in &runs {
        let mesh = Mesh1D::dyadic(run.level)?;
        for &t in sample_times {
            let s = snapshot_at(run.snapshots, t, run.level)?;
            let r = snapshot_at(reference.snapshots, t, reference.level)?;
            let du = difference(&s.u, &restrict_to(mesh, &r.u)?);
            let dw = difference(&s.w, &restrict_to(mesh, &r.w)?);
            errors.push(ErrorRow {
                h: mesh.h(),
                t,
                e_l1_u: l1_norm(&du),
                e_l2_u: l2_norm(&du),
                e_l1_w: l1_norm(&dw),
                e_l2_w: l2_norm(&dw),
            });
        }
    }
    let mut orders = Vec::new();
    for pair in runs.windows(2) {
        if pair[1].level != pair[0].level + 1 {
            continue;
        }
        let (hc, hf) = (
            Mesh1D::dyadic(pair[0].level)?.h(),
            Mesh1D::dyadic(pair[1].level)?.h(),
        );
        for &t in sample_times {
            let find = |h: f64| {
                errors
                    .iter()
                    .find(|r| r.h == h && r.t == t)
                    .copied()
                    .expect("row exists")
            };
            let (c, f) = (find(hc), find(hf));
            orders.push(OrderRow {
                h: hc,
                t,
                order_l2_u: observed_order(c.e_l2_u, f.e_l2_u),
                order_l2_w: observed_order(c.e_l2_w, f.e_l2_w),
            });
        }
    }
    Ok(ConvergenceStudy {
        scenario: String::from(scenario),
        mesh_levels: runs.iter().map(|r| r.level).collect(),
        reference_level: reference.level,
        dt,
        dt_ref,
        sample_times: sample_times.to_vec(),
        errors,
        orders,
    })
}

fn difference(a: &Field, b: &Field) -> Field {
    let v = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    Field::new(a.mesh(), v).expect("same mesh")
}

/// Checks the level list against the reference level.
pub fn check_levels(levels: &[u32], ref_level: u32) -> Result<(), ConvergenceError> {
    let finest = *levels.iter().max().ok_or(ConvergenceError::NoLevels)?;
    if ref_level < finest + 3 {
        return Err(ConvergenceError::ReferenceTooCoarse {
            finest,
            reference: ref_level,
        });
    }
    Ok(())
}

/// Runs every level and the reference sequentially with `cfg` (its snapshot times are the
/// sample times) and assembles the study.
pub fn run_study(
    p: &ModelParams,
    ic: &PerturbationSpec,
    levels: &[u32],
    ref_level: u32,
    cfg: &IntegratorConfig,
) -> Result<ConvergenceStudy, ConvergenceError> {
    check_levels(levels, ref_level)?;
    let simulate = |level: u32| -> Result<Vec<State>, ConvergenceError> {
        let mesh = Mesh1D::dyadic(level)?;
        Ok(integrator::simulate(p, mesh, ic, cfg)?.snapshots)
    };
    let reference = simulate(ref_level)?;
    let runs = levels
        .iter()
        .map(|&l| simulate(l).map(|s| (l, s)))
        .collect::<Result<Vec<_>, _>>()?;
    let views: Vec<LevelRun<'_>> = runs
        .iter()
        .map(|(l, s)| LevelRun {
            level: *l,
            snapshots: s,
        })
        .collect();
    assemble_study(
        "",
        &views,
        LevelRun {
            level: ref_level,
            snapshots: &reference,
        },
        cfg.dt,
        cfg.dt,
        &cfg.snapshot_times,
    )
}
