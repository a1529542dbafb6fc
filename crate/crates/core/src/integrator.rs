//! Time stepping for the semi-discrete system.
//!
//! `w` is discretized with consistent-mass P1 elements, `u` nodally:
//!
//! ```text
//! M w' = -D_w K w - M w - M diag(u^2) w + kappa1 M 1
//! u_i' = f(u_i, w_i)
//! ```
//!
//! The default [`NonlinearMode::SemiImplicit`] lags `u^2` in the `w` equation, so
//! each step is one tridiagonal solve followed by independent scalar solves for `u`.
//! [`NonlinearMode::Newton`] solves the coupled nonlinear step exactly; the `u`
//! unknowns are eliminated so every Newton iteration is again one tridiagonal solve.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::{self, RunDiagnostics, SpikeCriteria};
use crate::grid::{self, FemMatrices, Field, GridError, Mesh1D, PerturbationSpec};
use crate::kinetics::{
    self, step_count, u_reaction_with_partials, ConstantSteadyState, KineticParams, ModelParams,
};
use crate::{Tridiagonal, TridiagonalError};

/// Time `t` with nodal `u` and `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    /// Time.
    pub t: f64,
    /// Cell density.
    pub u: Field,
    /// Growth factor.
    pub w: Field,
}

/// Time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeScheme {
    /// Backward Euler, first order.
    ImplicitEuler,
    /// Trapezoidal rule, second order.
    CrankNicolson,
}

/// Treatment of the nonlinear coupling within a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearMode {
    /// `u^2` lagged in the `w` solve, then nodal implicit `u` updates.
    SemiImplicit,
    /// Coupled Newton iteration on the full step equations.
    Newton {
        /// Stop when the sup norm of the update is below `tol * (1 + sup |x|)`.
        tol: f64,
        /// Iteration cap.
        max_iter: usize,
    },
}

impl NonlinearMode {
    /// Newton with `tol = 1e-12`, `max_iter = 25`.
    pub const DEFAULT_NEWTON: Self = Self::Newton {
        tol: 1e-12,
        max_iter: 25,
    };
}

/// Which terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Dynamics {
    /// The full model.
    #[default]
    Full,
    /// `w_t = D_w w_xx` only; `u` is frozen and the source is off.
    DiffusionOnly,
}

/// Step controls and output times.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    /// Time scheme.
    pub scheme: TimeScheme,
    /// Nonlinear solve.
    pub nonlinear_mode: NonlinearMode,
    /// Time step. The last step is shortened if `t_end` is not a multiple.
    pub dt: f64,
    /// Final time.
    pub t_end: f64,
    /// Strictly increasing times in `[0, t_end]`, each a multiple of `dt` or `t_end` itself.
    pub snapshot_times: Vec<f64>,
    /// Additionally record a diagnostics row every `monitor_stride` steps (`0` disables).
    pub monitor_stride: usize,
    /// Active terms.
    pub dynamics: Dynamics,
}

/// Default time step.
pub const DEFAULT_DT: f64 = 2.5e-4;
/// Values below this are a positivity fault.
pub const POSITIVITY_TOL: f64 = -1e-12;

impl IntegratorConfig {
    /// Semi-implicit, snapshots only at `t_end`, no monitoring, full dynamics.
    pub fn new(scheme: TimeScheme, dt: f64, t_end: f64) -> Self {
        Self {
            scheme,
            nonlinear_mode: NonlinearMode::SemiImplicit,
            dt,
            t_end,
            snapshot_times: vec![t_end],
            monitor_stride: 0,
            dynamics: Dynamics::Full,
        }
    }

    /// Checks step sizes and snapshot placement.
    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegratorError::InvalidConfig("dt must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(IntegratorError::InvalidConfig("t_end must be positive"));
        }
        if self.dt > self.t_end * (1.0 + 1e-12) {
            return Err(IntegratorError::InvalidConfig("dt must not exceed t_end"));
        }
        if let NonlinearMode::Newton { tol, max_iter } = self.nonlinear_mode {
            if !(tol > 0.0) || max_iter == 0 {
                return Err(IntegratorError::InvalidConfig(
                    "newton tolerance and iteration cap must be positive",
                ));
            }
        }
        if self
            .snapshot_times
            .windows(2)
            .any(|w| !(w[1] > w[0]))
        {
            return Err(IntegratorError::InvalidConfig(
                "snapshot times must be strictly increasing",
            ));
        }
        self.snapshot_steps().map(|_| ())
    }

    fn n_steps(&self) -> usize {
        step_count(self.t_end, self.dt)
    }

    /// Time after `n` steps.
    pub fn time_at(&self, n: usize) -> f64 {
        if n >= self.n_steps() {
            self.t_end
        } else {
            n as f64 * self.dt
        }
    }

    fn snapshot_steps(&self) -> Result<Vec<usize>, IntegratorError> {
        let n_steps = self.n_steps();
        self.snapshot_times
            .iter()
            .map(|&ts| {
                if !(ts >= 0.0) || ts > self.t_end * (1.0 + 1e-12) {
                    return Err(IntegratorError::InvalidConfig(
                        "snapshot time outside [0, t_end]",
                    ));
                }
                if (ts - self.t_end).abs() <= 1e-9 * self.t_end.max(1.0) {
                    return Ok(n_steps);
                }
                let r = ts / self.dt;
                let n = libm::round(r);
                if (r - n).abs() > 1e-6 || n as usize > n_steps {
                    return Err(IntegratorError::InvalidConfig(
                        "snapshot time is not on the time grid",
                    ));
                }
                Ok(n as usize)
            })
            .collect()
    }
}

/// Component of the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    /// Cell density.
    U,
    /// Growth factor.
    W,
}

/// Step or run failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegratorError {
    /// Bad step controls or output times.
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
    /// Field and matrices belong to different meshes.
    #[error("state and matrices are on different meshes")]
    MeshMismatch,
    /// A nodal value fell below the positivity tolerance.
    #[error("positivity fault: {component:?} = {value} at node {node}, t = {t}")]
    Positivity {
        /// Offending component.
        component: Component,
        /// Node index.
        node: usize,
        /// Time of the new state.
        t: f64,
        /// The negative value.
        value: f64,
    },
    /// Tridiagonal solve broke down.
    #[error("linear solve failed at t = {t}: {source}")]
    LinearSolve {
        /// Time at the start of the step.
        t: f64,
        /// Underlying error.
        source: TridiagonalError,
    },
    /// Scalar nodal solve failed.
    #[error("nodal implicit solve failed at node {node}, t = {t}")]
    NodalSolve {
        /// Node index.
        node: usize,
        /// Time at the start of the step.
        t: f64,
    },
    /// Coupled Newton did not converge.
    #[error("newton did not converge at t = {t} (last update {update:e})")]
    NewtonDiverged {
        /// Time at the start of the step.
        t: f64,
        /// Size of the last update.
        update: f64,
    },
    /// Initial data could not be built.
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Reusable workspace for repeated steps on one mesh.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    kin: KineticParams,
    d_w: f64,
    mats: &'a FemMatrices,
    scheme: TimeScheme,
    mode: NonlinearMode,
    dynamics: Dynamics,
    weights: Vec<f64>,
    op: Tridiagonal,
    rhs: Vec<f64>,
    tmp: Vec<f64>,
    tmp2: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Stepper<'a> {
    /// Workspace for `cfg`'s scheme and mode on `mats`' mesh.
    pub fn new(p: &ModelParams, mats: &'a FemMatrices, cfg: &IntegratorConfig) -> Self {
        let n = mats.mesh.n_nodes();
        Self {
            kin: p.kinetics,
            d_w: p.d_w(),
            mats,
            scheme: cfg.scheme,
            mode: cfg.nonlinear_mode,
            dynamics: cfg.dynamics,
            weights: mats.mass.row_sums(),
            op: Tridiagonal::zeros(n),
            rhs: vec![0.0; n],
            tmp: vec![0.0; n],
            tmp2: vec![0.0; n],
            scratch: Vec::with_capacity(n),
        }
    }

    /// Advances `s` by `dt` to time `t_new`.
    pub fn step_to(&mut self, s: &State, dt: f64, t_new: f64) -> Result<State, IntegratorError> {
        let mesh = self.mats.mesh;
        if s.u.mesh() != mesh || s.w.mesh() != mesh {
            return Err(IntegratorError::MeshMismatch);
        }
        let (u, w) = match (self.dynamics, self.mode) {
            (Dynamics::DiffusionOnly, _) => self.diffusion_step(s, dt)?,
            (Dynamics::Full, NonlinearMode::SemiImplicit) => self.semi_implicit(s, dt)?,
            (Dynamics::Full, NonlinearMode::Newton { tol, max_iter }) => {
                let (u0, w0) = self.semi_implicit(s, dt)?;
                self.newton(s, dt, u0, w0, tol, max_iter)?
            }
        };
        check_positive(&u, Component::U, t_new)?;
        check_positive(&w, Component::W, t_new)?;
        Ok(State {
            t: t_new,
            u: Field::new(mesh, u)?,
            w: Field::new(mesh, w)?,
        })
    }

    fn theta(&self, dt: f64) -> f64 {
        match self.scheme {
            TimeScheme::ImplicitEuler => dt,
            TimeScheme::CrankNicolson => 0.5 * dt,
        }
    }

    /// `op = M + theta (D_w K + M + M diag(c))`.
    fn build_operator(&mut self, c: &[f64], theta: f64) {
        let (m, k, d) = (&self.mats.mass, &self.mats.stiffness, self.d_w);
        let n = m.len();
        for i in 0..n {
            self.op.diag[i] = m.diag[i] * (1.0 + theta * (1.0 + c[i])) + theta * d * k.diag[i];
        }
        for i in 0..n - 1 {
            self.op.upper[i] =
                m.upper[i] * (1.0 + theta * (1.0 + c[i + 1])) + theta * d * k.upper[i];
            self.op.lower[i] = m.lower[i] * (1.0 + theta * (1.0 + c[i])) + theta * d * k.lower[i];
        }
    }

    /// `out = (D_w K + M + M diag(c)) w`.
    fn apply_operator(&mut self, c: &[f64], w: &[f64], out: &mut [f64]) {
        for (t, (&ci, &wi)) in self.tmp.iter_mut().zip(c.iter().zip(w)) {
            *t = (1.0 + ci) * wi;
        }
        self.mats.mass.mul_vec_into(&self.tmp, out);
        self.mats.stiffness.mul_vec_into(w, &mut self.tmp2);
        for (o, &kw) in out.iter_mut().zip(&self.tmp2) {
            *o += self.d_w * kw;
        }
    }

    fn solve(&mut self, t: f64) -> Result<(), IntegratorError> {
        self.op
            .solve_in_place(&mut self.rhs, &mut self.scratch)
            .map_err(|source| IntegratorError::LinearSolve { t, source })
    }

    fn semi_implicit(&mut self, s: &State, dt: f64) -> Result<(Vec<f64>, Vec<f64>), IntegratorError> {
        let kin = self.kin;
        let un = s.u.values();
        let wn = s.w.values();
        let theta = self.theta(dt);
        let n = un.len();

        // Lagged coefficient and the explicit half of the u update.
        let mut c = vec![0.0; n];
        let mut b = vec![0.0; n];
        match self.scheme {
            TimeScheme::ImplicitEuler => {
                for i in 0..n {
                    c[i] = un[i] * un[i];
                    b[i] = un[i];
                }
            }
            TimeScheme::CrankNicolson => {
                for i in 0..n {
                    let (f, _) = kinetics::reaction_rhs(&kin, un[i], wn[i]);
                    let u_mid = un[i] + theta * f;
                    c[i] = u_mid * u_mid;
                    b[i] = un[i] + theta * f;
                }
            }
        }

        let mut rhs = core::mem::take(&mut self.rhs);
        match self.scheme {
            TimeScheme::ImplicitEuler => self.mats.mass.mul_vec_into(wn, &mut rhs),
            TimeScheme::CrankNicolson => {
                let mut aw = vec![0.0; n];
                self.apply_operator(&c, wn, &mut aw);
                self.mats.mass.mul_vec_into(wn, &mut rhs);
                for (r, a) in rhs.iter_mut().zip(&aw) {
                    *r -= theta * a;
                }
            }
        }
        for (r, &m) in rhs.iter_mut().zip(&self.weights) {
            *r += dt * kin.kappa1() * m;
        }
        self.rhs = rhs;
        self.build_operator(&c, theta);
        self.solve(s.t)?;
        let w = self.rhs.clone();

        let mut u = vec![0.0; n];
        for i in 0..n {
            u[i] = kinetics::solve_nodal_implicit(&kin, b[i], w[i], theta)
                .ok_or(IntegratorError::NodalSolve { node: i, t: s.t })?;
        }
        Ok((u, w))
    }

    fn newton(
        &mut self,
        s: &State,
        dt: f64,
        mut u: Vec<f64>,
        mut w: Vec<f64>,
        tol: f64,
        max_iter: usize,
    ) -> Result<(Vec<f64>, Vec<f64>), IntegratorError> {
        let kin = self.kin;
        let un = s.u.values();
        let wn = s.w.values();
        let n = un.len();
        let theta = self.theta(dt);

        // Constant parts of the residuals.
        let mut bu = un.to_vec();
        let mut bw = vec![0.0; n];
        self.mats.mass.mul_vec_into(wn, &mut bw);
        if self.scheme == TimeScheme::CrankNicolson {
            let cn: Vec<f64> = un.iter().map(|v| v * v).collect();
            let mut aw = vec![0.0; n];
            self.apply_operator(&cn, wn, &mut aw);
            for i in 0..n {
                bu[i] += theta * kinetics::reaction_rhs(&kin, un[i], wn[i]).0;
                bw[i] -= theta * aw[i];
            }
        }
        for (b, &m) in bw.iter_mut().zip(&self.weights) {
            *b += dt * kin.kappa1() * m;
        }

        let mut ru = vec![0.0; n];
        let mut dd = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut aw = vec![0.0; n];
        let mut mw = vec![0.0; n];
        let mut last = f64::INFINITY;
        for _ in 0..max_iter {
            for (ci, &ui) in c.iter_mut().zip(&u) {
                *ci = ui * ui;
            }
            self.apply_operator(&c, &w, &mut aw);
            self.mats.mass.mul_vec_into(&w, &mut mw);
            let mut g = vec![0.0; n];
            for i in 0..n {
                let (f, f_u, f_w) = u_reaction_with_partials(&kin, u[i], w[i]);
                ru[i] = u[i] - bu[i] - theta * f;
                let duu = 1.0 - theta * f_u;
                dd[i] = duu;
                // Schur coefficient: u^2 - 2 u w (-theta f_w) / duu.
                c[i] = u[i] * u[i] + 2.0 * u[i] * w[i] * theta * f_w / duu;
                g[i] = 2.0 * u[i] * w[i] * ru[i] / duu;
                self.tmp2[i] = f_w;
            }
            let f_w = self.tmp2.clone();
            // rhs = -R_w + theta M (2 u w R_u / duu)
            let mut mg = vec![0.0; n];
            self.mats.mass.mul_vec_into(&g, &mut mg);
            for i in 0..n {
                let rw = mw[i] + theta * aw[i] - bw[i];
                self.rhs[i] = -rw + theta * mg[i];
            }
            self.build_operator(&c, theta);
            self.solve(s.t)?;
            let mut update: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for i in 0..n {
                let dw = self.rhs[i];
                let du = (-ru[i] + theta * f_w[i] * dw) / dd[i];
                u[i] += du;
                w[i] += dw;
                update = update.max(du.abs()).max(dw.abs());
                scale = scale.max(u[i].abs()).max(w[i].abs());
            }
            last = update;
            if !update.is_finite() {
                break;
            }
            if update <= tol * (1.0 + scale) {
                return Ok((u, w));
            }
        }
        Err(IntegratorError::NewtonDiverged {
            t: s.t,
            update: last,
        })
    }

    fn diffusion_step(&mut self, s: &State, dt: f64) -> Result<(Vec<f64>, Vec<f64>), IntegratorError> {
        let n = s.w.values().len();
        let theta = self.theta(dt);
        let (m, k, d) = (&self.mats.mass, &self.mats.stiffness, self.d_w);
        // Increment form (M + theta D K) dw = -dt D K w keeps 1^T M dw at round-off of dw.
        k.mul_vec_into(s.w.values(), &mut self.rhs);
        for r in self.rhs.iter_mut() {
            *r *= -dt * d;
        }
        for i in 0..n {
            self.op.diag[i] = m.diag[i] + theta * d * k.diag[i];
        }
        for i in 0..n - 1 {
            self.op.upper[i] = m.upper[i] + theta * d * k.upper[i];
            self.op.lower[i] = m.lower[i] + theta * d * k.lower[i];
        }
        self.solve(s.t)?;
        let w = s.w.values().iter().zip(&self.rhs).map(|(w, dw)| w + dw).collect();
        Ok((s.u.values().to_vec(), w))
    }
}

fn check_positive(v: &[f64], component: Component, t: f64) -> Result<(), IntegratorError> {
    match v.iter().position(|&x| !(x >= POSITIVITY_TOL)) {
        Some(node) => Err(IntegratorError::Positivity {
            component,
            node,
            t,
            value: v[node],
        }),
        None => Ok(()),
    }
}

/// One step of size `cfg.dt` from `s`.
pub fn step(
    p: &ModelParams,
    mats: &FemMatrices,
    s: &State,
    cfg: &IntegratorConfig,
) -> Result<State, IntegratorError> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(IntegratorError::InvalidConfig("dt must be positive"));
    }
    Stepper::new(p, mats, cfg).step_to(s, cfg.dt, s.t + cfg.dt)
}

/// A completed (or partial) simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    /// States at the configured snapshot times.
    pub snapshots: Vec<State>,
    /// Rows at snapshot and monitor times.
    pub diagnostics: RunDiagnostics,
    /// Last accepted state.
    pub final_state: State,
    /// Accepted steps.
    pub steps: usize,
}

/// A run that stopped on a step error.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("simulation aborted after {} steps: {error}", partial.steps)]
pub struct Aborted {
    /// The failure.
    pub error: IntegratorError,
    /// Everything recorded before the failure.
    pub partial: Box<Run>,
}

/// Simulation failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    /// Rejected before the first step.
    #[error(transparent)]
    Setup(#[from] IntegratorError),
    /// Stopped part way; the partial run is kept.
    #[error(transparent)]
    Aborted(#[from] Aborted),
}

impl SimulationError {
    /// The underlying integrator error.
    pub fn cause(&self) -> &IntegratorError {
        match self {
            Self::Setup(e) => e,
            Self::Aborted(a) => &a.error,
        }
    }
}

/// Builds the initial state from `ic` and integrates with default spike criteria.
pub fn simulate(
    p: &ModelParams,
    mesh: Mesh1D,
    ic: &PerturbationSpec,
    cfg: &IntegratorConfig,
) -> Result<Run, SimulationError> {
    let s0 = grid::build_initial_state(p, mesh, ic).map_err(IntegratorError::from)?;
    simulate_from(p, s0, cfg, &SpikeCriteria::for_params(&p.kinetics))
}

/// Integrates from `s0` over `[s0.t, s0.t + t_end]`; `s0.t` is expected to be zero.
pub fn simulate_from(
    p: &ModelParams,
    s0: State,
    cfg: &IntegratorConfig,
    criteria: &SpikeCriteria,
) -> Result<Run, SimulationError> {
    cfg.validate()?;
    let mesh = s0.u.mesh();
    if s0.w.mesh() != mesh {
        return Err(IntegratorError::MeshMismatch.into());
    }
    let snaps = cfg.snapshot_steps()?;
    let mats = grid::assemble_fem(mesh);
    let mut stepper = Stepper::new(p, &mats, cfg);
    let n_steps = cfg.n_steps();

    let mut run = Run {
        snapshots: Vec::with_capacity(snaps.len()),
        diagnostics: RunDiagnostics::default(),
        final_state: s0,
        steps: 0,
    };
    let mut next_snap = 0;
    let record = |run: &mut Run, n: usize, next_snap: &mut usize| {
        let mut row = false;
        while *next_snap < snaps.len() && snaps[*next_snap] == n {
            run.snapshots.push(run.final_state.clone());
            *next_snap += 1;
            row = true;
        }
        if row || (cfg.monitor_stride > 0 && n % cfg.monitor_stride == 0) {
            run.diagnostics
                .rows
                .push(diagnostics::measure(&run.final_state, criteria));
        }
    };
    record(&mut run, 0, &mut next_snap);
    for n in 0..n_steps {
        let t0 = cfg.time_at(n);
        let t1 = cfg.time_at(n + 1);
        match stepper.step_to(&run.final_state, t1 - t0, t1) {
            Ok(s) => run.final_state = s,
            Err(error) => {
                return Err(Aborted {
                    error,
                    partial: Box::new(run),
                }
                .into())
            }
        }
        run.steps = n + 1;
        record(&mut run, n + 1, &mut next_snap);
    }
    Ok(run)
}

/// Evolves the linearization about `s` with frozen Jacobian entries:
/// `phi' = a11 phi + a12 psi` nodally and `M psi' = -D_w K psi + M (a21 phi + a22 psi)`.
///
/// Returns the states at the configured snapshot times (`u` holds `phi`, `w` holds `psi`).
/// The coupled linear step is solved exactly by eliminating `phi`.
pub fn simulate_linearized(
    p: &ModelParams,
    mesh: Mesh1D,
    s: &ConstantSteadyState,
    ic: (Field, Field),
    cfg: &IntegratorConfig,
) -> Result<Vec<State>, IntegratorError> {
    cfg.validate()?;
    if ic.0.mesh() != mesh || ic.1.mesh() != mesh {
        return Err(IntegratorError::MeshMismatch);
    }
    let a = kinetics::kinetic_jacobian(&p.kinetics, s.u_bar, s.w_bar);
    let (a11, a12, a21, a22) = (a[0][0], a[0][1], a[1][0], a[1][1]);
    let mats = grid::assemble_fem(mesh);
    let (m, k, d) = (&mats.mass, &mats.stiffness, p.d_w());
    let n = mesh.n_nodes();
    let snaps = cfg.snapshot_steps()?;
    let n_steps = cfg.n_steps();

    let mut phi = ic.0.into_values();
    let mut psi = ic.1.into_values();
    let mut out = Vec::with_capacity(snaps.len());
    let mut next = 0;
    let push = |out: &mut Vec<State>, next: &mut usize, step: usize, phi: &[f64], psi: &[f64]| {
        while *next < snaps.len() && snaps[*next] == step {
            out.push(State {
                t: cfg.time_at(step),
                u: Field::new(mesh, phi.to_vec()).expect("length preserved"),
                w: Field::new(mesh, psi.to_vec()).expect("length preserved"),
            });
            *next += 1;
        }
    };
    push(&mut out, &mut next, 0, &phi, &psi);

    let mut op = Tridiagonal::zeros(n);
    let mut rhs = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut kpsi = vec![0.0; n];
    let mut scratch = Vec::new();
    for step in 0..n_steps {
        let dt = cfg.time_at(step + 1) - cfg.time_at(step);
        let (theta, explicit) = match cfg.scheme {
            TimeScheme::ImplicitEuler => (dt, 0.0),
            TimeScheme::CrankNicolson => (0.5 * dt, 0.5 * dt),
        };
        // phi_new = (bphi + theta a12 psi_new) / (1 - theta a11)
        let g = 1.0 - theta * a11;
        let bphi: Vec<f64> = phi
            .iter()
            .zip(&psi)
            .map(|(&f, &s)| f + explicit * (a11 * f + a12 * s))
            .collect();
        // psi equation: (M (1 - theta a22 - theta^2 a21 a12 / g) + theta D K) psi_new
        //             = M (psi + explicit (a21 phi + a22 psi)) - explicit D K psi + theta a21 M bphi / g
        let mcoef = 1.0 - theta * a22 - theta * theta * a21 * a12 / g;
        for i in 0..n {
            op.diag[i] = m.diag[i] * mcoef + theta * d * k.diag[i];
            if i + 1 < n {
                op.upper[i] = m.upper[i] * mcoef + theta * d * k.upper[i];
                op.lower[i] = m.lower[i] * mcoef + theta * d * k.lower[i];
            }
        }
        for i in 0..n {
            tmp[i] = psi[i] + explicit * (a21 * phi[i] + a22 * psi[i]) + theta * a21 * bphi[i] / g;
        }
        m.mul_vec_into(&tmp, &mut rhs);
        if explicit > 0.0 {
            k.mul_vec_into(&psi, &mut kpsi);
            for (r, kp) in rhs.iter_mut().zip(&kpsi) {
                *r -= explicit * d * kp;
            }
        }
        op.solve_in_place(&mut rhs, &mut scratch)
            .map_err(|source| IntegratorError::LinearSolve {
                t: cfg.time_at(step),
                source,
            })?;
        psi.copy_from_slice(&rhs);
        for i in 0..n {
            phi[i] = (bphi[i] + theta * a12 * psi[i]) / g;
        }
        push(&mut out, &mut next, step + 1, &phi, &psi);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{l1_norm, CosineForm};
    use crate::kinetics::{Branch, KineticScheme};
    use crate::stability;
    use libm::{cos, exp};

    fn params(d_w: f64) -> ModelParams {
        ModelParams::from_values(2.0, 1.0, 3.0, d_w).unwrap()
    }

    fn minus(p: &ModelParams) -> ConstantSteadyState {
        kinetics::steady_state(&p.kinetics, Branch::Minus).unwrap()
    }

    fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = params(6.0);
        let s = minus(&p);
        let mesh = Mesh1D::dyadic(6).unwrap();
        let mats = grid::assemble_fem(mesh);
        for scheme in [TimeScheme::ImplicitEuler, TimeScheme::CrankNicolson] {
            for mode in [NonlinearMode::SemiImplicit, NonlinearMode::DEFAULT_NEWTON] {
                let mut cfg = IntegratorConfig::new(scheme, 0.01, 1.0);
                cfg.nonlinear_mode = mode;
                let st = State {
                    t: 0.0,
                    u: Field::constant(mesh, s.u_bar),
                    w: Field::constant(mesh, s.w_bar),
                };
                let next = step(&p, &mats, &st, &cfg).unwrap();
                assert!(sup_diff(next.u.values(), st.u.values()) < 1e-12);
                assert!(sup_diff(next.w.values(), st.w.values()) < 1e-12);
            }
        }
    }

    #[test]
    fn constant_data_follows_kinetics() {
        let p = params(6.0);
        let s = minus(&p);
        let mesh = Mesh1D::dyadic(5).unwrap();
        for (scheme, ks) in [
            (TimeScheme::ImplicitEuler, KineticScheme::ImplicitEuler),
            (TimeScheme::CrankNicolson, KineticScheme::CrankNicolson),
        ] {
            let cfg = IntegratorConfig::new(scheme, 0.01, 2.0);
            let s0 = State {
                t: 0.0,
                u: Field::constant(mesh, s.u_bar + 0.05),
                w: Field::constant(mesh, s.w_bar),
            };
            let run = simulate_from(&p, s0, &cfg, &SpikeCriteria::for_params(&p.kinetics)).unwrap();
            let traj =
                kinetics::integrate_kinetics(&p.kinetics, s.u_bar + 0.05, s.w_bar, 0.01, 2.0, ks)
                    .unwrap();
            let last = traj.last().unwrap();
            for &v in run.final_state.u.values() {
                assert!((v - last.u).abs() < 1e-10, "{v} {}", last.u);
            }
            for &v in run.final_state.w.values() {
                assert!((v - last.w).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn diffusion_only_conserves_mass() {
        let p = params(1.0);
        let mesh = Mesh1D::dyadic(6).unwrap();
        let s0 = State {
            t: 0.0,
            u: Field::constant(mesh, 1.0),
            w: mesh.sample(|x| 1.0 + 0.5 * cos(3.0 * x)),
        };
        let mut cfg = IntegratorConfig::new(TimeScheme::ImplicitEuler, 1e-4, 1.0);
        cfg.dynamics = Dynamics::DiffusionOnly;
        let run = simulate_from(&p, s0.clone(), &cfg, &SpikeCriteria::for_params(&p.kinetics))
            .unwrap();
        assert_eq!(run.steps, 10_000);
        let drift = (l1_norm(&run.final_state.w) - l1_norm(&s0.w)).abs();
        assert!(drift < 1e-12, "{drift:e}");
        assert_eq!(run.final_state.u, s0.u);
    }

    #[test]
    fn linearized_zero_stays_zero() {
        let p = params(2.0);
        let s = minus(&p);
        let mesh = Mesh1D::dyadic(4).unwrap();
        let mut cfg = IntegratorConfig::new(TimeScheme::CrankNicolson, 1e-3, 0.1);
        cfg.snapshot_times = vec![0.0, 0.05, 0.1];
        let out = simulate_linearized(
            &p,
            mesh,
            &s,
            (Field::constant(mesh, 0.0), Field::constant(mesh, 0.0)),
            &cfg,
        )
        .unwrap();
        assert_eq!(out.len(), 3);
        for st in out {
            assert!(st.u.values().iter().chain(st.w.values()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linearized_eigenmode_growth_coarse() {
        let p = params(2.0);
        let s = minus(&p);
        let mesh = Mesh1D::dyadic(8).unwrap();
        let mode = stability::eigenmode_ic(&p, &s, 2, 1e-3).unwrap();
        let ic = (mesh.sample(|x| mode.phi(x)), mesh.sample(|x| mode.psi(x)));
        let mut cfg = IntegratorConfig::new(TimeScheme::CrankNicolson, 1e-4, 0.5);
        cfg.snapshot_times = vec![0.5];
        let out = simulate_linearized(&p, mesh, &s, ic, &cfg).unwrap();
        let ratio = out[0].u.values()[0] / 1e-3;
        let want = exp(mode.growth_rate * 0.5);
        assert!((ratio / want - 1.0).abs() < 1e-3, "{ratio} {want}");
    }

    #[test]
    fn snapshot_validation() {
        let mut cfg = IntegratorConfig::new(TimeScheme::ImplicitEuler, 0.1, 1.0);
        cfg.snapshot_times = vec![0.25];
        assert!(cfg.validate().is_err());
        cfg.snapshot_times = vec![0.5, 0.3];
        assert!(cfg.validate().is_err());
        cfg.snapshot_times = vec![0.0, 0.3, 1.0];
        assert!(cfg.validate().is_ok());
        assert!(IntegratorConfig::new(TimeScheme::ImplicitEuler, 2.0, 1.0)
            .validate()
            .is_err());
    }

    #[test]
    fn newton_matches_semi_implicit_to_splitting_order() {
        let p = params(6.0);
        let mesh = Mesh1D::dyadic(6).unwrap();
        let ic = PerturbationSpec::Cosine {
            form: CosineForm::Linear,
            eps: 0.05,
        };
        let mut diffs = Vec::new();
        for dt in [0.02, 0.01] {
            let mut cfg = IntegratorConfig::new(TimeScheme::ImplicitEuler, dt, 1.0);
            let a = simulate(&p, mesh, &ic, &cfg).unwrap();
            cfg.nonlinear_mode = NonlinearMode::DEFAULT_NEWTON;
            let b = simulate(&p, mesh, &ic, &cfg).unwrap();
            diffs.push(sup_diff(a.final_state.u.values(), b.final_state.u.values()));
        }
        // The splitting error is O(dt) globally.
        assert!(diffs[1] < 0.7 * diffs[0], "{diffs:?}");
    }

    #[test]
    fn aborted_run_keeps_partial_record() {
        // Crank-Nicolson with a huge step drives w negative.
        let p = params(6.0);
        let mesh = Mesh1D::dyadic(4).unwrap();
        let s0 = State {
            t: 0.0,
            u: Field::constant(mesh, 50.0),
            w: Field::constant(mesh, 1.0),
        };
        let mut cfg = IntegratorConfig::new(TimeScheme::CrankNicolson, 0.5, 2.0);
        cfg.snapshot_times = vec![0.0, 2.0];
        match simulate_from(&p, s0, &cfg, &SpikeCriteria::for_params(&p.kinetics)) {
            Err(SimulationError::Aborted(a)) => {
                assert!(matches!(a.error, IntegratorError::Positivity { .. }));
                assert_eq!(a.partial.snapshots.len(), 1);
                assert_eq!(a.partial.diagnostics.rows.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }
}
